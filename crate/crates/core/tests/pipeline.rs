mod common;

use std::path::Path;

use common::{bundled_config_path, excerpt_prefix};
use csodl::pipeline::config::RunConfig;
use csodl::pipeline::experiment::{encode_test, prepare, run_experiment, BasisKind, RESULTS_HEADER};
use csodl::pipeline::ingest::{ingest, SampleFormat};
use csodl::pipeline::persist::{load_dictionary, save_dictionary, DictMeta};
use csodl::pipeline::sweep::{sweep, write_sweep, Grid};
use csodl::sensing::SensingMatrix;
use csodl::{CsError, Epoch, Lineage};

/// n = 64 on the first 40 s of the excerpt: 225 epochs, 40/100/85 split.
fn small_config(dir: &Path, extra: &[&str]) -> (toml::Table, RunConfig) {
    let data = excerpt_prefix(dir, 14_400);
    let text = format!(
        r#"
n = 64
k = 32
output = "{out}"
[data]
path = "{data}"
gain = 0.005
[split]
init = 40
train = 100
seed = 5
[odl]
lambda = 0.12
batch_size = 4
passes = 1
seed = 2
[solver]
epsilon = 0.05
[sensing]
cr = [2.0, 4.0]
seed = 11
[waveform]
cr = 4.0
epochs = 2
"#,
        out = dir.join("out").display(),
        data = data.display()
    );
    let mut table: toml::Table = toml::from_str(&text).unwrap();
    for ov in extra {
        csodl::pipeline::config::apply_override(&mut table, ov).unwrap();
    }
    let cfg: RunConfig = table.clone().try_into().unwrap();
    cfg.validate().unwrap();
    (table, cfg)
}

#[test]
fn ingest_examples_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    std::fs::write(&csv, "1\n2\n3\n").unwrap();
    let r = ingest(&csv, SampleFormat::CsvInt16, 1.0, 0, 360.0).unwrap();
    assert_eq!(r.samples, vec![1.0, 2.0, 3.0]);
    assert_eq!(r.sample_rate_hz, 360.0);

    let raw = dir.path().join("a.dat");
    std::fs::write(&raw, [0x01, 0x00, 0xFF, 0xFF]).unwrap();
    assert_eq!(
        ingest(&raw, SampleFormat::RawLeInt16, 1.0, 0, 360.0).unwrap().samples,
        vec![1.0, -1.0]
    );

    let big = dir.path().join("big.csv");
    let body: String = (0..649_984).map(|i| format!("{}\n", (i % 200) as i16 - 100)).collect();
    std::fs::write(&big, body).unwrap();
    assert_eq!(
        ingest(&big, SampleFormat::CsvInt16, 0.005, 0, 360.0)
            .unwrap()
            .samples
            .len(),
        649_984
    );

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(
        ingest(&empty, SampleFormat::CsvInt16, 1.0, 0, 360.0),
        Err(CsError::Format(_))
    ));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1\n2\n3\nx\n").unwrap();
    assert!(matches!(
        ingest(&bad, SampleFormat::CsvFloat, 1.0, 0, 360.0),
        Err(CsError::Parse { line: 4, .. })
    ));
}

#[test]
fn dictionary_files_round_trip_and_reject_damage() {
    let dir = tempfile::tempdir().unwrap();
    let cols: Vec<Vec<f64>> = (0..6)
        .map(|j| (0..8).map(|i| ((i + 2 * j) as f64 * 0.7).cos()).collect())
        .collect();
    let dict = csodl::Dictionary::from_columns(&cols).unwrap();
    let meta = DictMeta {
        scale: 0.3,
        seeds: vec![1, 3],
    };
    let path = dir.path().join("d.csodl");
    save_dictionary(&path, &dict, &meta).unwrap();
    let (back, m) = load_dictionary(&path).unwrap();
    assert_eq!(m, meta);
    assert!(back
        .atoms()
        .iter()
        .zip(dict.atoms().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    let bytes = std::fs::read(&path).unwrap();
    let truncated = dir.path().join("t.csodl");
    std::fs::write(&truncated, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(load_dictionary(&truncated), Err(CsError::Format(_))));
    let foreign = dir.path().join("f.csodl");
    let mut fb = bytes.clone();
    fb[..6].copy_from_slice(b"XYZW99");
    std::fs::write(&foreign, fb).unwrap();
    match load_dictionary(&foreign) {
        Err(e @ CsError::Version { .. }) => assert!(e.to_string().contains("XYZW99")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn results_table_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_config(dir.path(), &[]);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows.len(), 4);
    for r in &out.rows {
        assert!((r.cr_realized - cfg.n as f64 / r.m as f64).abs() <= 1e-12);
        assert!(r.prd_mean >= 0.0 && r.prd_std >= 0.0);
        assert_eq!(r.epochs, 85);
        assert_eq!((r.lambda, r.epsilon), (0.12, 0.05));
    }
    let text = std::fs::read_to_string(cfg.output.join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));
    assert_eq!(
        text.lines().next().unwrap(),
        "basis,cr_nominal,cr_realized,m,prd_mean,prd_std,nnz_mean,epochs,lambda,epsilon,seed_split,seed_phi,seed_train"
    );
    for file in [
        "dictionary.csodl",
        "state.csods",
        "training_report.csv",
        "results_detail.csv",
        "epochs.csv",
        "waveform.csv",
        "manifest.txt",
    ] {
        assert!(cfg.output.join(file).exists(), "{file}");
    }
    let manifest = std::fs::read_to_string(cfg.output.join("manifest.txt")).unwrap();
    for key in [
        "seed.split=5",
        "seed.phi=11",
        "seed.train=2",
        "epochs.total=225",
        "config.odl.lambda=0.12",
    ] {
        assert!(manifest.lines().any(|l| l == key), "{key}");
    }
    let wave = std::fs::read_to_string(cfg.output.join("waveform.csv")).unwrap();
    assert_eq!(wave.lines().next().unwrap(), "sample,original,joint,trained");
    assert_eq!(wave.lines().count(), 1 + 2 * 64);
    let (dict, meta) = load_dictionary(&cfg.output.join("dictionary.csodl")).unwrap();
    assert_eq!((dict.n(), dict.k()), (64, 32));
    assert_eq!(meta.seeds, vec![5, 2]);
}

#[test]
fn same_config_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = small_config(dir.path(), &[]);
    let a_dir = dir.path().join("a");
    let b_dir = dir.path().join("b");
    cfg.output = a_dir.clone();
    let ra = run_experiment(&cfg).unwrap().rows;
    cfg.output = b_dir.clone();
    let rb = run_experiment(&cfg).unwrap().rows;
    assert_eq!(ra, rb);
    for f in [
        "results.csv",
        "epochs.csv",
        "waveform.csv",
        "training_report.csv",
        "dictionary.csodl",
    ] {
        assert_eq!(
            std::fs::read(a_dir.join(f)).unwrap(),
            std::fs::read(b_dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn no_compression_is_near_lossless_with_trained_basis() {
    // square Φ and an overcomplete dictionary: y determines the epoch
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = small_config(dir.path(), &[]);
    cfg.k = 128;
    cfg.split.init = 128;
    cfg.split.train = 60;
    cfg.sensing.cr = vec![1.0];
    cfg.sensing.basis = csodl::pipeline::BasisSelector::Trained;
    cfg.solver.epsilon = 0.0;
    cfg.waveform.cr = 1.0;
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows.len(), 1);
    let r = &out.rows[0];
    assert_eq!((r.basis, r.m), (BasisKind::Trained, 64));
    assert!(r.prd_mean <= 1.0, "PRD {}", r.prd_mean);
}

#[test]
fn test_epochs_stay_unfiltered() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_config(dir.path(), &[]);
    let prepared = prepare(&cfg).unwrap();
    let test = prepared.test_raw();
    assert!(test.iter().all(|e| e.lineage() == Lineage::Raw));
    // the raw epochs are exact slices of the ingested record
    for (e, &i) in test.iter().zip(&prepared.split.test) {
        assert_eq!(e.samples(), &prepared.record.samples[i * 64..(i + 1) * 64]);
    }
    let phi = SensingMatrix::generate(16, 64, 1).unwrap();
    let filtered: Vec<&Epoch> = vec![&prepared.filtered[prepared.split.test[0]]];
    assert!(matches!(encode_test(&filtered, &phi), Err(CsError::InvalidArgument(_))));
}

#[test]
fn stage_failures_name_the_stage_and_keep_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = small_config(dir.path(), &[]);
    cfg.data.path = dir.path().join("missing.csv");
    match run_experiment(&cfg) {
        Err(CsError::Stage { stage, .. }) => assert_eq!(stage, "ingest"),
        other => panic!("{other:?}"),
    }

    // n = 96 trains fine but has no joint basis
    let (_, mut cfg) = small_config(dir.path(), &["n=96"]);
    cfg.output = dir.path().join("partial");
    match run_experiment(&cfg) {
        Err(
            e @ CsError::Stage {
                stage: "reconstruct", ..
            },
        ) => assert!(e.to_string().contains("power of two")),
        other => panic!("{other:?}"),
    }
    assert!(cfg.output.join("dictionary.csodl").exists());
    assert!(cfg.output.join("training_report.csv").exists());
}

#[test]
fn sweep_cardinality_caching_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let (table, cfg) = small_config(dir.path(), &[]);
    let single = run_experiment(&cfg).unwrap().rows;

    let one = sweep(&table, Path::new(""), &Grid::single()).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].result.as_ref().unwrap(), &single);

    let grid = Grid::parse("[grid]\n\"odl.lambda\" = [0.05, 0.1, 0.2]\n").unwrap();
    let cells = sweep(&table, Path::new(""), &grid).unwrap();
    let rows: usize = cells.iter().map(|c| c.result.as_ref().unwrap().len()).sum();
    assert_eq!(rows, 3 * single.len());
    let lambdas: Vec<f64> = cells.iter().map(|c| c.result.as_ref().unwrap()[0].lambda).collect();
    assert_eq!(lambdas, vec![0.05, 0.1, 0.2]);

    // cells that only change decoding reuse the trained dictionary
    let grid = Grid::parse("[grid]\n\"solver.epsilon\" = [0.03, 0.08]\nn = [64, 96]\n").unwrap();
    let cells = sweep(&table, Path::new(""), &grid).unwrap();
    assert_eq!(cells.len(), 4);
    let failed: Vec<usize> = cells.iter().filter(|c| c.result.is_err()).map(|c| c.index).collect();
    assert_eq!(failed, vec![2, 3]);
    let mut csv = Vec::new();
    write_sweep(&mut csv, &grid, &cells).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("cell,n,solver.epsilon,status,basis,cr_nominal"));
    assert_eq!(text.lines().filter(|l| l.contains(",ok,")).count(), 2 * single.len());
    assert_eq!(text.lines().filter(|l| l.contains("error: ")).count(), 2);
    let d0 = std::fs::read(cfg.output.join("cell_000").join("dictionary.csodl")).unwrap();
    let d1 = std::fs::read(cfg.output.join("cell_001").join("dictionary.csodl")).unwrap();
    assert_eq!(d0, d1);
}

#[test]
fn prd_is_non_decreasing_in_cr_on_bundled_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(
        &bundled_config_path(),
        &["sensing.cr=[2, 4, 10]".into(), "sensing.basis=\"trained\"".into()],
    )
    .unwrap();
    cfg.output = dir.path().to_path_buf();
    let rows = run_experiment(&cfg).unwrap().rows;
    let prds: Vec<f64> = rows.iter().map(|r| r.prd_mean).collect();
    assert_eq!(prds.len(), 3);
    assert!(prds.windows(2).all(|w| w[0] <= w[1]), "{prds:?}");
}
