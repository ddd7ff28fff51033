use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csodl::odl::train_state;
use csodl::pipeline::config::{measurements_for, RunConfig};
use csodl::pipeline::experiment::{
    encode_test, prepare, run_experiment, train_model, write_model, write_results, BasisDecoder, Prepared, TrainedModel,
};
use csodl::pipeline::ingest::write_csv_float;
use csodl::pipeline::persist::{load_dictionary, load_state};
use csodl::pipeline::sweep::{sweep, write_sweep_file, Grid};
use csodl::preprocess::clean;
use csodl::sensing::SensingMatrix;
use csodl::{CsError, Result};

#[derive(Parser)]
#[command(
    name = "csodl",
    version,
    about = "Compressive-sensing ECG codec with learned dictionaries"
)]
struct Cli {
    /// Log filter (error, warn, info, debug, trace); RUST_LOG also works.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set odl.lambda=0.1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let cfg = RunConfig::load(&self.config, &self.overrides)?;
        std::fs::create_dir_all(&cfg.output)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Filter the record, segment it and write the split.
    Preprocess(ConfigArgs),
    /// Learn the dictionary from the training split.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from a saved training state instead of initializing.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Project the raw test epochs (sensor side).
    Encode {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, conflicts_with = "m")]
        cr: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Recover epochs from a measurements CSV written by `encode`.
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        measurements: PathBuf,
        /// trained or joint.
        #[arg(long, default_value = "trained")]
        basis: String,
        /// Dictionary file; defaults to `<output>/dictionary.csodl`.
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    /// Full run: train, encode, reconstruct, and write the CR–PRD table.
    Evaluate(ConfigArgs),
    /// Run a parameter grid and write a consolidated table.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Summarize a dictionary file.
    InspectDict { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(args) => preprocess_cmd(&args.load()?),
        Command::Train { cfg, resume } => train_cmd(&cfg.load()?, resume.as_deref()),
        Command::Encode { cfg, cr, m } => encode_cmd(&cfg.load()?, cr, m),
        Command::Reconstruct {
            cfg,
            measurements,
            basis,
            dictionary,
        } => reconstruct_cmd(&cfg.load()?, &measurements, &basis, dictionary.as_deref()),
        Command::Evaluate(args) => {
            let cfg = args.load()?;
            let out = run_experiment(&cfg)?;
            write_results(std::io::stdout().lock(), &out.rows)?;
            eprintln!("artifacts in {}", cfg.output.display());
            Ok(())
        }
        Command::Sweep { cfg, grid } => {
            let mut table: toml::Table = toml::from_str(&std::fs::read_to_string(&cfg.config)?)
                .map_err(|e| CsError::Config(format!("config: {e}")))?;
            for ov in &cfg.overrides {
                csodl::pipeline::config::apply_override(&mut table, ov)?;
            }
            let base_dir = cfg.config.parent().unwrap_or(Path::new(""));
            let base = RunConfig::load(&cfg.config, &cfg.overrides)?;
            let grid = Grid::load(&grid)?;
            let cells = sweep(&table, base_dir, &grid)?;
            std::fs::create_dir_all(&base.output)?;
            let path = base.output.join("sweep.csv");
            write_sweep_file(&path, &grid, &cells)?;
            let failed = cells.iter().filter(|c| c.result.is_err()).count();
            eprintln!("{} cells ({failed} failed) -> {}", cells.len(), path.display());
            Ok(())
        }
        Command::InspectDict { path } => inspect_cmd(&path),
    }
}

fn preprocess_cmd(cfg: &RunConfig) -> Result<()> {
    let prepared = prepare(cfg)?;
    let filtered = clean(&prepared.record.samples, &cfg.filter)?;
    write_csv_float(&cfg.output.join("filtered.csv"), &filtered)?;
    let mut w = csv::Writer::from_path(cfg.output.join("split.csv"))?;
    w.write_record(["epoch", "role"])?;
    let mut roles = vec![""; prepared.raw.len()];
    for (ix, role) in [
        (&prepared.split.init, "init"),
        (&prepared.split.train, "train"),
        (&prepared.split.test, "test"),
    ] {
        for &i in ix {
            roles[i] = role;
        }
    }
    for (i, r) in roles.iter().enumerate() {
        w.write_record([i.to_string(), r.to_string()])?;
    }
    w.flush()?;
    println!(
        "samples={} epochs={} dropped={} init={} train={} test={}",
        prepared.record.samples.len(),
        prepared.raw.len(),
        prepared.dropped,
        prepared.split.init.len(),
        prepared.split.train.len(),
        prepared.split.test.len()
    );
    Ok(())
}

fn train_cmd(cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let prepared = prepare(cfg)?;
    let model = match resume {
        None => train_model(cfg, &prepared)?,
        Some(path) => {
            let state = load_state(path)?;
            let (_, meta) = load_dictionary(&cfg.output.join("dictionary.csodl"))?;
            let train: Vec<_> = Prepared::pick(&prepared.filtered, &prepared.split.train)
                .into_iter()
                .map(|e| csodl::odl::Standardizer { scale: meta.scale }.apply(e))
                .collect::<Result<_>>()?;
            let (state, report) = train_state(state, &train, &cfg.odl)?;
            TrainedModel {
                dict: state.dict().clone(),
                scale: meta.scale,
                state,
                report,
                seeds: meta.seeds,
            }
        }
    };
    write_model(&cfg.output, &model)?;
    println!(
        "n={} k={} updates={} reseeds={} max_surrogate_increase={:e} -> {}",
        model.dict.n(),
        model.dict.k(),
        model.report.rows.len(),
        model.report.reseeds.len(),
        model.report.max_surrogate_increase(),
        cfg.output.join("dictionary.csodl").display()
    );
    Ok(())
}

fn resolve_m(cfg: &RunConfig, cr: Option<f64>, m: Option<usize>) -> Result<usize> {
    match (cr, m) {
        (_, Some(m)) if m >= 1 && m <= cfg.n => Ok(m),
        (_, Some(m)) => Err(CsError::Config(format!("m = {m} outside 1..={}", cfg.n))),
        (Some(cr), None) => measurements_for(cfg.n, cr),
        (None, None) => Err(CsError::Config("give --cr or --m".into())),
    }
}

fn encode_cmd(cfg: &RunConfig, cr: Option<f64>, m: Option<usize>) -> Result<()> {
    let m = resolve_m(cfg, cr, m)?;
    let prepared = prepare(cfg)?;
    let phi = SensingMatrix::generate(m, cfg.n, cfg.sensing.seed)?;
    let ys = encode_test(&prepared.test_raw(), &phi)?;
    let path = cfg.output.join(format!("measurements_m{m}.csv"));
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    let mut header = vec!["epoch".to_string()];
    header.extend((0..m).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    for (y, idx) in ys.iter().zip(&prepared.split.test) {
        let mut rec = vec![idx.to_string()];
        rec.extend(y.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!(
        "m={m} n={} seed={} epochs={} guard_events={} -> {}",
        cfg.n,
        cfg.sensing.seed,
        ys.len(),
        phi.guard_events().len(),
        path.display()
    );
    Ok(())
}

fn read_measurements(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_err = |message: String| CsError::Parse {
            path: path.to_path_buf(),
            line: line + 2,
            message,
        };
        let mut fields = rec.iter();
        ids.push(fields.next().ok_or_else(|| parse_err("empty row".into()))?.to_string());
        rows.push(
            fields
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((ids, rows))
}

fn reconstruct_cmd(cfg: &RunConfig, measurements: &Path, basis: &str, dictionary: Option<&Path>) -> Result<()> {
    let (ids, ys) = read_measurements(measurements)?;
    let m = ys
        .first()
        .map(Vec::len)
        .ok_or_else(|| CsError::Format("no measurement rows".into()))?;
    let phi = SensingMatrix::generate(m, cfg.n, cfg.sensing.seed)?;
    let dict_path = dictionary.map_or_else(|| cfg.output.join("dictionary.csodl"), Path::to_path_buf);
    let decoder = match basis {
        "trained" => {
            let (dict, meta) = load_dictionary(&dict_path)?;
            BasisDecoder::trained(&dict, meta.scale, &phi, cfg.solver)?
        }
        "joint" => {
            let scale = load_dictionary(&dict_path).map_or(1.0, |(_, meta)| meta.scale);
            BasisDecoder::joint(cfg.n, scale, &phi, cfg.solver)?
        }
        other => return Err(CsError::Config(format!("unknown basis `{other}` (trained|joint)"))),
    };
    let path = cfg.output.join(format!("reconstruction_m{m}_{basis}.csv"));
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    let mut header = vec!["epoch".to_string()];
    header.extend((0..cfg.n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    let decoded: Vec<_> = {
        use rayon::prelude::*;
        ys.par_iter().map(|y| decoder.decode(y)).collect::<Result<_>>()?
    };
    let mut infeasible = 0;
    for (id, d) in ids.iter().zip(&decoded) {
        infeasible += usize::from(!d.feasible);
        let mut rec = vec![id.clone()];
        rec.extend(d.signal.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!(
        "decoded {} epochs with {basis} basis ({infeasible} infeasible) -> {}",
        decoded.len(),
        path.display()
    );
    Ok(())
}

fn inspect_cmd(path: &Path) -> Result<()> {
    let (dict, meta) = load_dictionary(path)?;
    let atoms = dict.atoms();
    let norms: Vec<f64> = atoms.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let gram = atoms.t().dot(&atoms);
    let mut coherence = 0.0f64;
    for i in 0..dict.k() {
        for j in 0..i {
            let denom = norms[i] * norms[j];
            if denom > 0.0 {
                coherence = coherence.max(gram[[i, j]].abs() / denom);
            }
        }
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "n={}", dict.n())?;
    writeln!(out, "k={}", dict.k())?;
    writeln!(out, "scale={}", meta.scale)?;
    writeln!(out, "seeds={:?}", meta.seeds)?;
    writeln!(
        out,
        "column_norm_min={}",
        norms.iter().copied().fold(f64::INFINITY, f64::min)
    )?;
    writeln!(out, "column_norm_max={}", dict.max_column_norm())?;
    writeln!(out, "mutual_coherence={coherence}")?;
    Ok(())
}
