mod common;

use ndarray::Array1;
use rand::Rng;

use common::{gaussian_vec, random_dict, rng};
use csodl::odl::{absorb_batch, dictionary_update, init_dictionary, train, train_state, OdlConfig, TrainState};
use csodl::pipeline::persist::{decode_state, encode_state};
use csodl::solvers::sparse_code;
use csodl::{Dictionary, Epoch};

/// Epochs that are sparse combinations of a hidden dictionary plus noise.
fn sparse_mixture(seed: u64, n: usize, count: usize, atoms: usize) -> Vec<Epoch> {
    let mut r = rng(seed);
    let truth = random_dict(&mut r, n, atoms);
    (0..count)
        .map(|_| {
            let mut x = gaussian_vec(&mut r, n) * 0.01;
            for _ in 0..3 {
                let j = r.random_range(0..atoms);
                let c: f64 = r.random_range(0.5..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
                x.scaled_add(c, &truth.atom(j));
            }
            Epoch::new(x.to_vec()).unwrap()
        })
        .collect()
}

#[test]
fn surrogate_never_increases_for_any_batch_size() {
    let epochs = sparse_mixture(1, 24, 120, 30);
    for (batch_size, update_sweeps) in [(1, 1), (5, 1), (5, 3), (32, 2)] {
        let config = OdlConfig {
            lambda: 0.1,
            batch_size,
            update_sweeps,
            passes: 2,
            ..OdlConfig::default()
        };
        let d0 = init_dictionary(&epochs, 20, 4).unwrap();
        let (dict, report) = train(&epochs, d0, &config).unwrap();
        assert!(report.max_surrogate_increase() <= 1e-9, "batch {batch_size}");
        assert!(dict.max_column_norm() <= 1.0 + 1e-9);
        assert_eq!(report.rows.len(), 2 * 120usize.div_ceil(batch_size));
    }
}

#[test]
fn many_sweeps_reach_the_constrained_minimizer() {
    // optimality of min ½tr(DᵀDA) − tr(DᵀB) s.t. ‖d_j‖ ≤ 1, per column:
    // g_j = (B − DA)_j must be 0 inside the ball, or μ·d_j with μ ≥ 0 on it
    let epochs = sparse_mixture(2, 12, 40, 10);
    let config = OdlConfig {
        lambda: 0.05,
        batch_size: 40,
        ..OdlConfig::default()
    };
    let mut state = TrainState::new(init_dictionary(&epochs, 8, 1).unwrap(), 0);
    let refs: Vec<&Epoch> = epochs.iter().collect();
    state = absorb_batch(state, &refs, &config).unwrap().0;
    let upd = dictionary_update(&state, 3000).unwrap();
    let d = upd.dict.atoms();
    let g = &state.b() - &d.dot(&state.a());
    for j in 0..8 {
        if state.a()[[j, j]] < 1e-10 {
            continue;
        }
        let dj = d.column(j);
        let gj = g.column(j);
        let norm = dj.dot(&dj).sqrt();
        let scale = gj.dot(&gj).sqrt().max(1.0);
        if norm < 1.0 - 1e-6 {
            assert!(gj.dot(&gj).sqrt() < 1e-6 * scale, "interior column {j}");
        } else {
            let mu = gj.dot(&dj);
            assert!(mu >= -1e-8, "column {j} multiplier {mu}");
            let off = &gj - &(&dj * mu);
            assert!(off.dot(&off).sqrt() < 1e-6 * scale, "column {j} tangential gradient");
        }
    }
}

#[test]
fn training_improves_representation_of_the_training_set() {
    let epochs = sparse_mixture(3, 32, 300, 40);
    let d0 = init_dictionary(&epochs, 40, 2).unwrap();
    let config = OdlConfig {
        lambda: 0.05,
        batch_size: 4,
        passes: 4,
        ..OdlConfig::default()
    };
    let (dict, _) = train(&epochs, d0.clone(), &config).unwrap();
    let cost = |d: &Dictionary| -> f64 {
        epochs
            .iter()
            .map(|e| sparse_code(e.samples(), d, &config.coding_config()).unwrap().objective)
            .sum::<f64>()
    };
    let (before, after) = (cost(&d0), cost(&dict));
    assert!(after < 0.7 * before, "lasso cost {before} -> {after}");
}

#[test]
fn resumed_training_from_a_persisted_state_matches_in_memory_resume() {
    let epochs = sparse_mixture(4, 16, 60, 20);
    let config = OdlConfig {
        lambda: 0.1,
        batch_size: 3,
        passes: 1,
        ..OdlConfig::default()
    };
    let d0 = init_dictionary(&epochs, 12, 9).unwrap();
    let (state, _) = train_state(TrainState::new(d0, config.seed), &epochs, &config).unwrap();
    let restored = decode_state(&encode_state(&state)).unwrap();
    assert_eq!(restored, state);
    let (a, ra) = train_state(state, &epochs, &config).unwrap();
    let (b, rb) = train_state(restored, &epochs, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.rows, rb.rows);
    assert_eq!(a.t(), 120);
}

#[test]
fn accumulators_are_symmetric_psd_after_training() {
    let epochs = sparse_mixture(5, 16, 80, 20);
    let config = OdlConfig {
        lambda: 0.08,
        batch_size: 7,
        passes: 2,
        ..OdlConfig::default()
    };
    let (state, _) = train_state(
        TrainState::new(init_dictionary(&epochs, 16, 0).unwrap(), 0),
        &epochs,
        &config,
    )
    .unwrap();
    assert!(state.accumulator_is_psd(1e-12, 1e-12));
    let diag: Array1<f64> = state.a().diag().to_owned();
    assert!(diag.iter().all(|v| *v >= 0.0));
}
