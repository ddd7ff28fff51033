//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use common::{bundled_config_path, gaussian_vec, random_dict, random_orthonormal, rng};
use csodl::odl::{absorb_batch, init_dictionary, train, OdlConfig, Standardizer, TrainState, DEAD_ATOM_THRESHOLD};
use csodl::pipeline::config::RunConfig;
use csodl::pipeline::run_experiment;
use csodl::preprocess::{bandpass_filter, notch_filter, segment, FilterSpec};
use csodl::sensing::SensingMatrix;
use csodl::solvers::{lasso, lasso_objective, soft_threshold, sparse_code, BpDecoder};
use csodl::synthetic::{synthetic_ecg, SynthSpec};
use csodl::{Dictionary, Epoch, SolverConfig};

type Verdict = (bool, String);
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Verdict + 'a>);

fn segmentation() -> Verdict {
    let signal = vec![0.0; 649_984];
    let seg = segment(&signal, 256).unwrap();
    (
        seg.epochs.len() == 2539 && seg.dropped == 0,
        format!("{} epochs, {} dropped", seg.epochs.len(), seg.dropped),
    )
}

fn lasso_optimality() -> Verdict {
    let mut r = rng(2);
    let mut worst_kkt = 0.0f64;
    let mut beaten = 0;
    for case in 0..200 {
        let lambda = [0.05, 0.1, 0.3][case % 3];
        let d = random_dict(&mut r, 32, 64);
        let y = gaussian_vec(&mut r, 32);
        let sol = lasso(d.atoms(), y.view(), &SolverConfig::default().with_lambda(lambda)).unwrap();
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        let beta = Array1::from(sol.code.to_dense());
        let obj = lasso_objective(d.atoms(), y.view(), beta.view(), lambda);
        let mut best = f64::INFINITY;
        for _ in 0..1000 {
            let scale = 10f64.powf(r.random_range(-6.0..-1.0));
            let touched = r.random_range(1..=8);
            let mut p = beta.clone();
            for j in sample(&mut r, 64, touched) {
                p[j] += scale * r.sample::<f64, _>(StandardNormal);
            }
            best = best.min(lasso_objective(d.atoms(), y.view(), p.view(), lambda));
        }
        if obj > best + 1e-12 * (1.0 + obj.abs()) {
            beaten += 1;
        }
    }
    (
        worst_kkt <= 1e-6 && beaten == 0,
        format!("max KKT residual {worst_kkt:.2e}, {beaten}/200 beaten by a perturbation"),
    )
}

fn orthonormal_oracle() -> Verdict {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = [8, 16, 32][case % 3];
        let q = random_orthonormal(&mut r, n);
        let d = Dictionary::new(q.clone()).unwrap();
        let x = gaussian_vec(&mut r, n);
        let lambda = r.random_range(0.01..1.0);
        let sol = sparse_code(x.as_slice().unwrap(), &d, &SolverConfig::default().with_lambda(lambda)).unwrap();
        for (j, got) in sol.code.to_dense().into_iter().enumerate() {
            let want = soft_threshold(q.column(j).dot(&x), lambda);
            worst = worst.max((got - want).abs());
        }
    }
    (worst <= 1e-8, format!("max coefficient gap {worst:.2e}"))
}

fn odl_monotone() -> Verdict {
    let spec = SynthSpec {
        seconds: 90.0,
        ..SynthSpec::default()
    };
    let signal = synthetic_ecg(&spec, 4);
    let mut epochs = segment(&signal, 64).unwrap().epochs;
    epochs.truncate(500);
    let standardizer = Standardizer::fit(&epochs).unwrap();
    let epochs: Vec<Epoch> = epochs.iter().map(|e| standardizer.apply(e).unwrap()).collect();
    let config = OdlConfig {
        passes: 1,
        seed: 4,
        ..OdlConfig::default()
    };
    let d0 = init_dictionary(&epochs, 128, 4).unwrap();
    let (dict, report) = train(&epochs, d0, &config).unwrap();
    let rise = report.max_surrogate_increase();
    let norm = dict.max_column_norm();
    (
        epochs.len() == 500 && rise <= 1e-9 && norm <= 1.0 + 1e-12,
        format!(
            "{} updates, max surrogate increase {rise:.2e}, max column norm {norm:.12}",
            report.rows.len()
        ),
    )
}

fn batch_equivalence() -> Verdict {
    let (n, k, count) = (16, 24, 20);
    let mut r = rng(5);
    let d0 = random_dict(&mut r, n, k);
    let epochs: Vec<Epoch> = (0..count)
        .map(|_| Epoch::new(gaussian_vec(&mut r, n).to_vec()).unwrap())
        .collect();
    let config = OdlConfig {
        lambda: 0.1,
        batch_size: count,
        ..OdlConfig::default()
    };
    let refs: Vec<&Epoch> = epochs.iter().collect();
    let (state, _) = absorb_batch(TrainState::new(d0.clone(), 0), &refs, &config).unwrap();

    let mut x = Array2::<f64>::zeros((n, count));
    let mut alpha = Array2::<f64>::zeros((k, count));
    for (i, e) in epochs.iter().enumerate() {
        let code = sparse_code(e.samples(), &d0, &config.coding_config())
            .unwrap()
            .code
            .to_dense();
        x.column_mut(i).assign(&e.view());
        alpha.column_mut(i).assign(&Array1::from(code));
    }
    let a = alpha.dot(&alpha.t());
    let b = x.dot(&alpha.t());
    let gap = |p: &Array2<f64>, q: ndarray::ArrayView2<f64>| (p - &q).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (gap_a, gap_b) = (gap(&a, state.a()), gap(&b, state.b()));

    let mut d = d0.atoms().to_owned();
    for j in 0..k {
        if a[[j, j]] < DEAD_ATOM_THRESHOLD {
            continue;
        }
        let mut u = d.column(j).to_owned();
        for row in 0..n {
            let da: f64 = (0..k).map(|l| d[[row, l]] * a[[l, j]]).sum();
            u[row] += (b[[row, j]] - da) / a[[j, j]];
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            u.mapv_inplace(|v| v / norm);
        }
        d.column_mut(j).assign(&u);
    }
    let gap_d = gap(&d, state.dict().atoms());
    (
        gap_a <= 1e-10 && gap_b <= 1e-10 && gap_d <= 1e-10,
        format!("|A| gap {gap_a:.1e}, |B| gap {gap_b:.1e}, update gap {gap_d:.1e}"),
    )
}

fn exact_recovery() -> Verdict {
    let (n, k, m) = (256, 512, 128);
    let mut r = rng(6);
    let d = random_dict(&mut r, n, k);
    let mut ok = 0;
    for trial in 0..100u64 {
        let phi = SensingMatrix::generate(m, n, 1000 + trial).unwrap();
        let mut coef = vec![0.0; k];
        for j in sample(&mut r, k, 5) {
            coef[j] = r.sample::<f64, _>(StandardNormal);
        }
        let x = d.atoms().dot(&Array1::from(coef));
        let y = phi.apply(x.as_slice().unwrap()).unwrap();
        let rec = BpDecoder::new(&phi, &d)
            .unwrap()
            .decode(&y, &SolverConfig::default().with_epsilon(0.0))
            .unwrap();
        let err = rec
            .signal
            .samples()
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / x.dot(&x).sqrt();
        if err <= 1e-2 {
            ok += 1;
        }
    }
    (ok >= 95, format!("{ok}/100 trials within 1e-2"))
}

fn tone(freq: f64, seconds: f64) -> Vec<f64> {
    let len = (seconds * 360.0) as usize;
    (0..len)
        .map(|i| (std::f64::consts::TAU * freq * i as f64 / 360.0).sin())
        .collect()
}

/// RMS gain in dB over the middle third.
fn gain_db(input: &[f64], output: &[f64]) -> f64 {
    let mid = input.len() / 3..2 * input.len() / 3;
    let rms = |v: &[f64]| (v[mid.clone()].iter().map(|x| x * x).sum::<f64>() / mid.len() as f64).sqrt();
    20.0 * (rms(output) / rms(input)).log10()
}

fn filter_responses() -> Verdict {
    let spec = FilterSpec::default();
    let mains = tone(60.0, 20.0);
    let notch = gain_db(&mains, &notch_filter(&mains, &spec).unwrap());
    let dc = vec![1.0; 7200];
    let dc_gain = gain_db(&dc, &bandpass_filter(&dc, &spec).unwrap());
    let ten = tone(10.0, 20.0);
    let pass = gain_db(&ten, &bandpass_filter(&ten, &spec).unwrap());
    (
        notch <= -20.0 && dc_gain <= -20.0 && pass.abs() <= 1.0,
        format!("notch 60 Hz {notch:.1} dB, band-pass DC {dc_gain:.1} dB, 10 Hz {pass:+.3} dB"),
    )
}

fn bundled_config(output: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::load(&bundled_config_path(), &[]).unwrap();
    cfg.output = output.to_path_buf();
    cfg
}

fn trained_advantage(first: &std::path::Path) -> Verdict {
    let cfg = bundled_config(first);
    let rows = run_experiment(&cfg).unwrap().rows;
    let mut ok = cfg.sensing.cr == [2.0, 4.0, 8.0, 10.0];
    let mut parts = Vec::new();
    for cr in [2.0, 4.0, 8.0, 10.0] {
        let pick = |name: &str| {
            rows.iter()
                .find(|r| r.basis.name() == name && r.cr_nominal == cr)
                .map(|r| (r.prd_mean, r.lambda, r.epsilon))
        };
        match (pick("trained"), pick("joint")) {
            (Some((t, lambda, eps)), Some((j, _, _))) => {
                ok &= t < j && lambda == cfg.odl.lambda && eps == cfg.solver.epsilon;
                parts.push(format!("CR {cr}: {t:.2} vs {j:.2}"));
            }
            _ => {
                ok = false;
                parts.push(format!("CR {cr}: missing"));
            }
        }
    }
    (ok, format!("mean PRD trained vs joint, {}", parts.join("; ")))
}

fn determinism(first: &std::path::Path, second: &std::path::Path) -> Verdict {
    run_experiment(&bundled_config(second)).unwrap();
    let a = std::fs::read(first.join("results.csv")).unwrap();
    let b = std::fs::read(second.join("results.csv")).unwrap();
    (a == b, format!("results.csv {} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let criteria: Vec<Criterion> = vec![
        (
            "segmentation arithmetic",
            Duration::from_secs(1),
            Box::new(segmentation),
        ),
        (
            "lasso optimality suite",
            Duration::from_secs(30),
            Box::new(lasso_optimality),
        ),
        (
            "orthonormal-design oracle",
            Duration::from_secs(5),
            Box::new(orthonormal_oracle),
        ),
        (
            "ODL surrogate monotonicity",
            Duration::from_secs(60),
            Box::new(odl_monotone),
        ),
        (
            "batch-equivalence oracle",
            Duration::from_secs(5),
            Box::new(batch_equivalence),
        ),
        ("CS exact recovery", Duration::from_secs(120), Box::new(exact_recovery)),
        ("filter responses", Duration::from_secs(10), Box::new(filter_responses)),
        (
            "trained-basis advantage",
            Duration::from_secs(600),
            Box::new(|| trained_advantage(&first)),
        ),
        (
            "determinism",
            Duration::from_secs(1200),
            Box::new(|| determinism(&first, &second)),
        ),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let pass = pass && elapsed <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {detail} ({:.2} s, budget {} s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
