//! End-to-end CR–PRD experiment.
//!
//! Training data: ingest → notch + band-pass → segment → split → standardize
//! → init → online training. Test data: segment only (lineage `Raw`), then
//! encode with Φ and decode under each selected basis. Decoding runs in the
//! standardized domain; the trained dictionary gets one extra constant atom
//! because raw test epochs keep their offset.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array1;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bases::{joint_dictionary, DEFAULT_LEVELS, DEFAULT_WAVELET};
use crate::error::{CsError, Result};
use crate::metrics::{mean_std, prd, prd_concatenated};
use crate::odl::{init_dictionary, train_state, Standardizer, TrainState, TrainingReport};
use crate::pipeline::config::{measurements_for, CrPoint, RunConfig};
use crate::pipeline::ingest::{ingest, Record};
use crate::pipeline::persist::{save_dictionary, save_state, DictMeta};
use crate::preprocess::{clean, segment_with_lineage, split_indices, SplitIndices};
use crate::sensing::{encode, SensingMatrix};
use crate::solvers::BpDecoder;
use crate::types::{Dictionary, Epoch, Lineage, SolverConfig, SparseCode};

pub const RESULTS_HEADER: [&str; 13] = [
    "basis",
    "cr_nominal",
    "cr_realized",
    "m",
    "prd_mean",
    "prd_std",
    "nnz_mean",
    "epochs",
    "lambda",
    "epsilon",
    "seed_split",
    "seed_phi",
    "seed_train",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisKind {
    Trained,
    Joint,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Trained => "trained",
            Self::Joint => "joint",
        }
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub basis: BasisKind,
    pub cr_nominal: f64,
    pub cr_realized: f64,
    pub m: usize,
    /// Against the unfiltered test epochs.
    pub prd_mean: f64,
    pub prd_std: f64,
    pub nnz_mean: f64,
    pub epochs: usize,
    /// Training λ.
    pub lambda: f64,
    /// Relative residual bound.
    pub epsilon: f64,
    pub seed_split: u64,
    pub seed_phi: u64,
    pub seed_train: u64,
    /// Against the filtered versions of the same epochs.
    pub prd_filtered_mean: f64,
    pub prd_filtered_std: f64,
    pub prd_concatenated: f64,
    /// Mean λ at which the residual bound was met.
    pub bp_lambda_mean: f64,
    /// Epochs whose bound could not be met; the least-residual iterate is used.
    pub infeasible: usize,
}

impl ResultRow {
    pub fn record(&self) -> [String; 13] {
        [
            self.basis.name().to_string(),
            self.cr_nominal.to_string(),
            self.cr_realized.to_string(),
            self.m.to_string(),
            self.prd_mean.to_string(),
            self.prd_std.to_string(),
            self.nnz_mean.to_string(),
            self.epochs.to_string(),
            self.lambda.to_string(),
            self.epsilon.to_string(),
            self.seed_split.to_string(),
            self.seed_phi.to_string(),
            self.seed_train.to_string(),
        ]
    }
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

fn write_details<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "basis",
        "cr_nominal",
        "m",
        "prd_filtered_mean",
        "prd_filtered_std",
        "prd_concatenated",
        "bp_lambda_mean",
        "infeasible",
    ])?;
    for r in rows {
        w.write_record([
            r.basis.name().to_string(),
            r.cr_nominal.to_string(),
            r.m.to_string(),
            r.prd_filtered_mean.to_string(),
            r.prd_filtered_std.to_string(),
            r.prd_concatenated.to_string(),
            r.bp_lambda_mean.to_string(),
            r.infeasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Segmented and split data shared by every stage after ingestion.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub record: Record,
    pub input_sha256: String,
    /// Unfiltered epochs (what the sensor sees).
    pub raw: Vec<Epoch>,
    /// Same epochs cut from the filtered record.
    pub filtered: Vec<Epoch>,
    pub dropped: usize,
    pub split: SplitIndices,
}

impl Prepared {
    pub fn pick<'a>(epochs: &'a [Epoch], idx: &[usize]) -> Vec<&'a Epoch> {
        idx.iter().map(|&i| &epochs[i]).collect()
    }

    pub fn test_raw(&self) -> Vec<&Epoch> {
        Self::pick(&self.raw, &self.split.test)
    }
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let bytes = std::fs::read(&config.data.path).map_err(|e| {
        CsError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", config.data.path.display()),
        ))
        .in_stage("ingest")
    })?;
    let input_sha256 = hex(&Sha256::digest(&bytes));
    drop(bytes);
    let record = ingest(
        &config.data.path,
        config.data.format,
        config.data.gain,
        config.data.column,
        config.filter.sample_rate_hz,
    )
    .map_err(|e| e.in_stage("ingest"))?;

    let filtered_signal = clean(&record.samples, &config.filter).map_err(|e| e.in_stage("preprocess"))?;
    let raw = segment_with_lineage(&record.samples, config.n, Lineage::Raw).map_err(|e| e.in_stage("preprocess"))?;
    let filtered =
        segment_with_lineage(&filtered_signal, config.n, Lineage::Filtered).map_err(|e| e.in_stage("preprocess"))?;
    let split = split_indices(
        raw.epochs.len(),
        config.split.init,
        config.split.train,
        config.split.seed,
    )
    .map_err(|e| e.in_stage("split"))?;
    log::info!(
        "{} samples -> {} epochs ({} dropped); split {}/{}/{}",
        record.samples.len(),
        raw.epochs.len(),
        raw.dropped,
        split.init.len(),
        split.train.len(),
        split.test.len()
    );
    Ok(Prepared {
        record,
        input_sha256,
        raw: raw.epochs,
        filtered: filtered.epochs,
        dropped: raw.dropped,
        split,
    })
}

/// A trained dictionary with everything needed to decode and to resume.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub dict: Dictionary,
    pub scale: f64,
    pub state: TrainState,
    pub report: TrainingReport,
    pub seeds: Vec<u64>,
}

impl TrainedModel {
    pub fn meta(&self) -> DictMeta {
        DictMeta {
            scale: self.scale,
            seeds: self.seeds.clone(),
        }
    }
}

pub fn train_model(config: &RunConfig, prepared: &Prepared) -> Result<TrainedModel> {
    let run = || -> Result<TrainedModel> {
        let init = Prepared::pick(&prepared.filtered, &prepared.split.init);
        let train = Prepared::pick(&prepared.filtered, &prepared.split.train);
        let fit_set: Vec<Epoch> = init.iter().chain(train.iter()).map(|e| (*e).clone()).collect();
        let standardizer = Standardizer::fit(&fit_set)?;
        let std_init = init.iter().map(|e| standardizer.apply(e)).collect::<Result<Vec<_>>>()?;
        let std_train = train
            .iter()
            .map(|e| standardizer.apply(e))
            .collect::<Result<Vec<_>>>()?;
        let d0 = init_dictionary(&std_init, config.k, config.odl.seed)?;
        let (state, report) = train_state(TrainState::new(d0, config.odl.seed), &std_train, &config.odl)?;
        log::info!(
            "trained k = {} over {} passes ({} updates, {} reseeds) in {:.2?}",
            config.k,
            report.passes,
            report.rows.len(),
            report.reseeds.len(),
            report.wall_time
        );
        Ok(TrainedModel {
            dict: state.dict().clone(),
            scale: standardizer.scale,
            state,
            report,
            seeds: vec![config.split.seed, config.odl.seed],
        })
    };
    run().map_err(|e| e.in_stage("train"))
}

/// Outcome of decoding one measurement vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochDecode {
    pub signal: Vec<f64>,
    pub nnz: usize,
    pub lambda: f64,
    /// Achieved residual in standardized measurement units.
    pub residual: f64,
    pub feasible: bool,
}

/// Basis-pursuit decoder for one (Φ, basis) pair in physical units.
#[derive(Debug, Clone)]
pub struct BasisDecoder {
    dict: Dictionary,
    bp: BpDecoder,
    scale: f64,
    /// `Φ·1 / ‖Φ·1‖`.
    dc_direction: Array1<f64>,
    solver: SolverConfig,
}

impl BasisDecoder {
    /// Trained atoms plus a constant atom.
    pub fn trained(dict: &Dictionary, scale: f64, phi: &SensingMatrix, solver: SolverConfig) -> Result<Self> {
        let n = dict.n();
        let dc = vec![1.0 / (n as f64).sqrt(); n];
        Self::new(dict.with_extra_atom(&dc)?, scale, phi, solver)
    }

    pub fn joint(n: usize, scale: f64, phi: &SensingMatrix, solver: SolverConfig) -> Result<Self> {
        Self::new(joint_dictionary_for(n)?.as_ref().clone(), scale, phi, solver)
    }

    /// `solver.epsilon` is relative to the offset-free part of `y`.
    pub fn new(dict: Dictionary, scale: f64, phi: &SensingMatrix, solver: SolverConfig) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CsError::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        let bp = BpDecoder::new(phi, &dict)?;
        let ones = phi.apply(&vec![1.0; phi.n()])?;
        let norm = ones.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dc_direction = Array1::from_iter(ones.iter().map(|v| v / norm));
        Ok(Self {
            dict,
            bp,
            scale,
            dc_direction,
            solver,
        })
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    /// Absolute bound used for `y` (standardized units).
    pub fn epsilon_for(&self, y_std: &[f64]) -> f64 {
        let y = ndarray::ArrayView1::from(y_std);
        let along = y.dot(&self.dc_direction);
        let perp_sq = (y.dot(&y) - along * along).max(0.0);
        self.solver.epsilon * perp_sq.sqrt()
    }

    pub fn decode(&self, y: &[f64]) -> Result<EpochDecode> {
        let y_std: Vec<f64> = y.iter().map(|v| v / self.scale).collect();
        let eps = self.epsilon_for(&y_std);
        let config = self.solver.with_epsilon(eps);
        let (code, lambda, residual, feasible) = match self.bp.decode(&y_std, &config) {
            Ok(r) => (r.code, r.lambda, r.residual, true),
            Err(CsError::Infeasible { best, achieved, .. }) => (SparseCode::from_dense(&best)?, 0.0, achieved, false),
            Err(CsError::NotConverged { best, .. }) => {
                let code = SparseCode::from_dense(&best)?;
                let fitted = self.bp.design().dot(&Array1::from(code.to_dense()));
                let r = fitted
                    .iter()
                    .zip(&y_std)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (code, f64::NAN, r, false)
            }
            Err(e) => return Err(e),
        };
        let signal = self
            .dict
            .synthesize(&code)?
            .into_iter()
            .map(|v| v * self.scale)
            .collect();
        Ok(EpochDecode {
            signal,
            nnz: code.nnz(),
            lambda,
            residual,
            feasible,
        })
    }
}

/// Default-wavelet joint basis for `n`.
pub fn joint_dictionary_for(n: usize) -> Result<Arc<Dictionary>> {
    if n < 2 || !n.is_power_of_two() {
        return Err(CsError::InvalidArgument(format!(
            "joint basis needs n to be a power of two >= 2, got {n}"
        )));
    }
    joint_dictionary(n, DEFAULT_WAVELET, DEFAULT_LEVELS.min(n.trailing_zeros() as usize))
}

/// Per-epoch evaluation record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochScore {
    pub basis: BasisKind,
    pub cr_nominal: f64,
    pub m: usize,
    /// Index into the full epoch list.
    pub epoch: usize,
    pub prd: f64,
    pub prd_filtered: f64,
    pub nnz: usize,
    pub residual: f64,
    pub lambda: f64,
    pub feasible: bool,
}

fn check_raw(epochs: &[&Epoch]) -> Result<()> {
    match epochs.iter().position(|e| e.lineage() != Lineage::Raw) {
        Some(i) => Err(CsError::InvalidArgument(format!(
            "test epoch {i} has lineage {:?}; the sensor path must not be filtered",
            epochs[i].lineage()
        ))),
        None => Ok(()),
    }
}

/// Encodes raw test epochs with Φ(seed, m) and returns the measurement vectors.
pub fn encode_test(epochs: &[&Epoch], phi: &SensingMatrix) -> Result<Vec<Vec<f64>>> {
    check_raw(epochs)?;
    epochs.par_iter().map(|e| encode(e, phi).map(|m| m.values)).collect()
}

fn bases_for(config: &RunConfig, model: Option<&TrainedModel>) -> Vec<BasisKind> {
    let mut v = Vec::new();
    if config.sensing.basis.trained() && model.is_some() {
        v.push(BasisKind::Trained);
    }
    if config.sensing.basis.joint() {
        v.push(BasisKind::Joint);
    }
    v
}

fn decoder_for(
    kind: BasisKind,
    config: &RunConfig,
    model: Option<&TrainedModel>,
    fallback_scale: f64,
    phi: &SensingMatrix,
) -> Result<BasisDecoder> {
    match (kind, model) {
        (BasisKind::Trained, Some(m)) => BasisDecoder::trained(&m.dict, m.scale, phi, config.solver),
        (BasisKind::Trained, None) => Err(CsError::InvalidArgument(
            "trained basis requested without a model".into(),
        )),
        (BasisKind::Joint, m) => {
            BasisDecoder::joint(config.n, m.map_or(fallback_scale, |m| m.scale), phi, config.solver)
        }
    }
}

/// Evaluation of every CR point and basis.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<ResultRow>,
    pub scores: Vec<EpochScore>,
    /// (m, guard events) per CR point.
    pub guard_events: Vec<(usize, usize)>,
}

pub fn evaluate(config: &RunConfig, prepared: &Prepared, model: Option<&TrainedModel>) -> Result<Evaluation> {
    let test = prepared.test_raw();
    if test.is_empty() {
        return Err(CsError::NotEnoughEpochs {
            needed: 1,
            available: 0,
        }
        .in_stage("evaluate"));
    }
    let fallback_scale = fallback_scale(&test);
    let points = config.cr_points().map_err(|e| e.in_stage("evaluate"))?;
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    let mut guard_events = Vec::new();
    for CrPoint { nominal, m } in points {
        let phi = SensingMatrix::generate(m, config.n, config.sensing.seed).map_err(|e| e.in_stage("encode"))?;
        guard_events.push((m, phi.guard_events().len()));
        let ys = encode_test(&test, &phi).map_err(|e| e.in_stage("encode"))?;
        for kind in bases_for(config, model) {
            let decoder =
                decoder_for(kind, config, model, fallback_scale, &phi).map_err(|e| e.in_stage("reconstruct"))?;
            let decoded = ys
                .par_iter()
                .map(|y| decoder.decode(y))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_stage("reconstruct"))?;
            let mut point_scores = Vec::with_capacity(decoded.len());
            for ((d, orig), &idx) in decoded.iter().zip(&test).zip(&prepared.split.test) {
                let p = prd(orig.samples(), &d.signal).map_err(|e| e.in_stage("evaluate"))?;
                let pf = prd(prepared.filtered[idx].samples(), &d.signal).map_err(|e| e.in_stage("evaluate"))?;
                point_scores.push(EpochScore {
                    basis: kind,
                    cr_nominal: nominal,
                    m,
                    epoch: idx,
                    prd: p,
                    prd_filtered: pf,
                    nnz: d.nnz,
                    residual: d.residual,
                    lambda: d.lambda,
                    feasible: d.feasible,
                });
            }
            let prds: Vec<f64> = point_scores.iter().map(|s| s.prd).collect();
            let prds_f: Vec<f64> = point_scores.iter().map(|s| s.prd_filtered).collect();
            let (prd_mean, prd_std) = mean_std(&prds);
            let (prd_filtered_mean, prd_filtered_std) = mean_std(&prds_f);
            let prd_concat = prd_concatenated(
                test.iter()
                    .zip(&decoded)
                    .map(|(o, d)| (o.samples(), d.signal.as_slice())),
            )
            .map_err(|e| e.in_stage("evaluate"))?;
            let feasible_lambdas: Vec<f64> = point_scores.iter().filter(|s| s.feasible).map(|s| s.lambda).collect();
            let row = ResultRow {
                basis: kind,
                cr_nominal: nominal,
                cr_realized: config.n as f64 / m as f64,
                m,
                prd_mean,
                prd_std,
                nnz_mean: point_scores.iter().map(|s| s.nnz as f64).sum::<f64>() / point_scores.len() as f64,
                epochs: point_scores.len(),
                lambda: config.odl.lambda,
                epsilon: config.solver.epsilon,
                seed_split: config.split.seed,
                seed_phi: config.sensing.seed,
                seed_train: config.odl.seed,
                prd_filtered_mean,
                prd_filtered_std,
                prd_concatenated: prd_concat,
                bp_lambda_mean: mean_std(&feasible_lambdas).0,
                infeasible: point_scores.len() - feasible_lambdas.len(),
            };
            log::info!(
                "{:>7} CR {:>5} (m = {m:>3}): PRD {:.3} ± {:.3}, nnz {:.1}, infeasible {}",
                kind.name(),
                nominal,
                row.prd_mean,
                row.prd_std,
                row.nnz_mean,
                row.infeasible
            );
            rows.push(row);
            scores.extend(point_scores);
        }
    }
    Ok(Evaluation {
        rows,
        scores,
        guard_events,
    })
}

fn fallback_scale(test: &[&Epoch]) -> f64 {
    let owned: Vec<Epoch> = test.iter().map(|e| (*e).clone()).collect();
    Standardizer::fit(&owned).map_or(1.0, |s| s.scale)
}

/// `(sample, original, joint, trained)`.
pub type WaveformRow = (usize, f64, Option<f64>, Option<f64>);

/// Waveform rows for the leading test epochs.
pub fn waveform(config: &RunConfig, prepared: &Prepared, model: Option<&TrainedModel>) -> Result<Vec<WaveformRow>> {
    let m = measurements_for(config.n, config.waveform.cr)?;
    let test: Vec<&Epoch> = prepared.test_raw().into_iter().take(config.waveform.epochs).collect();
    if test.is_empty() {
        return Ok(Vec::new());
    }
    let phi = SensingMatrix::generate(m, config.n, config.sensing.seed)?;
    let ys = encode_test(&test, &phi)?;
    let scale = fallback_scale(&prepared.test_raw());
    let mut columns: HashMap<BasisKind, Vec<f64>> = HashMap::new();
    for kind in bases_for(config, model) {
        let decoder = decoder_for(kind, config, model, scale, &phi)?;
        let mut col = Vec::with_capacity(test.len() * config.n);
        for y in &ys {
            col.extend(decoder.decode(y)?.signal);
        }
        columns.insert(kind, col);
    }
    let mut out = Vec::with_capacity(test.len() * config.n);
    for (e_pos, (e, &idx)) in test.iter().zip(&prepared.split.test).enumerate() {
        for (i, &v) in e.samples().iter().enumerate() {
            let flat = e_pos * config.n + i;
            out.push((
                idx * config.n + i,
                v,
                columns.get(&BasisKind::Joint).map(|c| c[flat]),
                columns.get(&BasisKind::Trained).map(|c| c[flat]),
            ));
        }
    }
    Ok(out)
}

/// Key for reusing a trained dictionary across sweep cells.
pub fn training_key(config: &RunConfig) -> String {
    let mut t = toml::Table::new();
    t.insert("n".into(), toml::Value::Integer(config.n as i64));
    t.insert("k".into(), toml::Value::Integer(config.k as i64));
    for (name, value) in [
        ("data", toml::Value::try_from(&config.data)),
        ("filter", toml::Value::try_from(config.filter)),
        ("split", toml::Value::try_from(config.split)),
        ("odl", toml::Value::try_from(config.odl)),
    ] {
        t.insert(name.into(), value.expect("config sections serialize"));
    }
    t.to_string()
}

/// Trained models keyed by [`training_key`].
pub type ModelCache = HashMap<String, Arc<TrainedModel>>;

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub model: Option<Arc<TrainedModel>>,
    pub prepared: Prepared,
}

pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput> {
    run_experiment_cached(config, &mut ModelCache::new())
}

pub fn run_experiment_cached(config: &RunConfig, cache: &mut ModelCache) -> Result<ExperimentOutput> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let out_dir = &config.output;
    std::fs::create_dir_all(out_dir).map_err(|e| CsError::from(e).in_stage("write"))?;
    let prepared = prepare(config)?;

    let model = if config.sensing.basis.trained() {
        let key = training_key(config);
        let model = match cache.get(&key) {
            Some(m) => {
                log::info!("reusing cached dictionary");
                Arc::clone(m)
            }
            None => {
                let m = Arc::new(train_model(config, &prepared)?);
                cache.insert(key, Arc::clone(&m));
                m
            }
        };
        write_model(out_dir, &model).map_err(|e| e.in_stage("persist"))?;
        Some(model)
    } else {
        None
    };

    let eval = evaluate(config, &prepared, model.as_deref())?;
    let write = || -> Result<()> {
        write_results(BufWriter::new(File::create(out_dir.join("results.csv"))?), &eval.rows)?;
        write_details(
            BufWriter::new(File::create(out_dir.join("results_detail.csv"))?),
            &eval.rows,
        )?;
        write_scores(BufWriter::new(File::create(out_dir.join("epochs.csv"))?), &eval.scores)?;
        let wave = waveform(config, &prepared, model.as_deref())?;
        write_waveform(BufWriter::new(File::create(out_dir.join("waveform.csv"))?), &wave)?;
        let manifest = manifest(config, &prepared, model.as_deref(), &eval);
        std::fs::write(out_dir.join("manifest.txt"), manifest)?;
        Ok(())
    };
    write().map_err(|e| e.in_stage("write"))?;
    Ok(ExperimentOutput {
        rows: eval.rows,
        model,
        prepared,
    })
}

pub fn write_model(dir: &Path, model: &TrainedModel) -> Result<()> {
    save_dictionary(&dir.join("dictionary.csodl"), &model.dict, &model.meta())?;
    save_state(&dir.join("state.csods"), &model.state)?;
    model
        .report
        .write_csv(BufWriter::new(File::create(dir.join("training_report.csv"))?))
}

fn write_scores<W: Write>(out: W, scores: &[EpochScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "basis",
        "cr_nominal",
        "m",
        "epoch",
        "prd",
        "prd_filtered",
        "nnz",
        "residual",
        "bp_lambda",
        "feasible",
    ])?;
    for s in scores {
        w.write_record([
            s.basis.name().to_string(),
            s.cr_nominal.to_string(),
            s.m.to_string(),
            s.epoch.to_string(),
            s.prd.to_string(),
            s.prd_filtered.to_string(),
            s.nnz.to_string(),
            s.residual.to_string(),
            s.lambda.to_string(),
            s.feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_waveform<W: Write>(out: W, rows: &[WaveformRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample", "original", "joint", "trained"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for &(s, o, j, t) in rows {
        w.write_record([s.to_string(), o.to_string(), opt(j), opt(t)])?;
    }
    w.flush()?;
    Ok(())
}

fn manifest(config: &RunConfig, prepared: &Prepared, model: Option<&TrainedModel>, eval: &Evaluation) -> String {
    let mut lines = vec![
        format!("tool={}", env!("CARGO_PKG_NAME")),
        format!("version={}", env!("CARGO_PKG_VERSION")),
        format!("seed.split={}", config.split.seed),
        format!("seed.phi={}", config.sensing.seed),
        format!("seed.train={}", config.odl.seed),
        format!("input.path={}", config.data.path.display()),
        format!("input.sha256={}", prepared.input_sha256),
        format!("input.samples={}", prepared.record.samples.len()),
        format!("input.sample_rate_hz={}", prepared.record.sample_rate_hz),
        format!("epochs.total={}", prepared.raw.len()),
        format!("epochs.dropped_samples={}", prepared.dropped),
        format!("epochs.init={}", prepared.split.init.len()),
        format!("epochs.train={}", prepared.split.train.len()),
        format!("epochs.test={}", prepared.split.test.len()),
    ];
    if let Some(m) = model {
        lines.push(format!("standardizer.scale={}", m.scale));
        lines.push(format!("training.passes={}", m.report.passes));
        lines.push(format!("training.updates={}", m.report.rows.len()));
        lines.push(format!("training.reseeds={}", m.report.reseeds.len()));
        lines.push(format!(
            "training.max_surrogate_increase={}",
            m.report.max_surrogate_increase()
        ));
        lines.push(format!("training.samples_seen={}", m.state.t()));
    }
    for (m, g) in &eval.guard_events {
        lines.push(format!("sensing.m{m}.guard_events={g}"));
    }
    let table: toml::Table = toml::from_str(&config.to_toml()).expect("config round-trips");
    flatten("config", &toml::Value::Table(table), &mut lines);
    lines.push(String::new());
    lines.join("\n")
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        toml::Value::String(s) => out.push(format!("{prefix}={s}")),
        other => out.push(format!("{prefix}={other}")),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
