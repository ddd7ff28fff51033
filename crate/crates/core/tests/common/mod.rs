#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::{Array1, Array2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use csodl::Dictionary;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Array1<f64> {
    Array1::from_iter((0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Gaussian columns scaled to unit norm.
pub fn random_dict(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Dictionary {
    let mut a = Array2::<f64>::zeros((n, k).f());
    for mut col in a.columns_mut() {
        let v = gaussian_vec(rng, n);
        col.assign(&(&v / v.dot(&v).sqrt()));
    }
    Dictionary::new(a).expect("unit columns")
}

/// Orthonormal n×n matrix from Gram–Schmidt on Gaussian columns.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((n, n).f());
    for j in 0..n {
        let mut v = gaussian_vec(rng, n);
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i).to_owned();
                let proj = qi.dot(&v);
                v.scaled_add(-proj, &qi);
            }
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(&v / norm));
    }
    q
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn excerpt_path() -> PathBuf {
    data_dir().join("ecg_excerpt.csv")
}

pub fn bundled_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join("excerpt.toml")
}

/// First `samples` lines of the bundled excerpt written into `dir`.
pub fn excerpt_prefix(dir: &std::path::Path, samples: usize) -> PathBuf {
    let text = std::fs::read_to_string(excerpt_path()).expect("bundled excerpt");
    let body: String = text.lines().take(samples).map(|l| format!("{l}\n")).collect();
    let path = dir.join("prefix.csv");
    std::fs::write(&path, body).expect("write prefix");
    path
}
