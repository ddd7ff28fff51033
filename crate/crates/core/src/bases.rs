//! Pre-determined reference bases: orthonormal DCT-II, periodized orthogonal
//! wavelets, and their n×2n concatenation.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use ndarray::{s, Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{CsError, Result};
use crate::types::Dictionary;

/// Orthogonal Daubechies wavelets by vanishing moments (`db1` is Haar).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Haar,
    Db2,
    Db3,
    Db4,
}

impl Wavelet {
    /// Scaling (synthesis low-pass) filter.
    pub fn scaling_filter(self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &[std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
            Wavelet::Db2 => &[
                0.482_962_913_144_534_16,
                0.836_516_303_737_807_9,
                0.224_143_868_042_013_4,
                -0.129_409_522_551_260_37,
            ],
            Wavelet::Db3 => &[
                0.332_670_552_950_082_63,
                0.806_891_509_311_092_5,
                0.459_877_502_118_491_54,
                -0.135_011_020_010_254_58,
                -0.085_441_273_882_026_66,
                0.035_226_291_885_709_53,
            ],
            Wavelet::Db4 => &[
                0.230_377_813_308_896_5,
                0.714_846_570_552_915_7,
                0.630_880_767_929_858_9,
                -0.027_983_769_416_859_854,
                -0.187_034_811_719_093_09,
                0.030_841_381_835_560_764,
                0.032_883_011_666_885_2,
                -0.010_597_401_785_069_032,
            ],
        }
    }

    /// Quadrature-mirror high-pass: `g[i] = (−1)^i h[L−1−i]`.
    pub fn wavelet_filter(self) -> Vec<f64> {
        let h = self.scaling_filter();
        let l = h.len();
        (0..l)
            .map(|i| if i % 2 == 0 { h[l - 1 - i] } else { -h[l - 1 - i] })
            .collect()
    }
}

impl FromStr for Wavelet {
    type Err = CsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(Wavelet::Haar),
            "db2" => Ok(Wavelet::Db2),
            "db3" => Ok(Wavelet::Db3),
            "db4" => Ok(Wavelet::Db4),
            other => Err(CsError::InvalidArgument(format!("unknown wavelet `{other}`"))),
        }
    }
}

pub const DEFAULT_WAVELET: Wavelet = Wavelet::Db4;
pub const DEFAULT_LEVELS: usize = 4;

/// Orthonormal DCT-II synthesis matrix; column `c` is the c-th cosine atom.
pub fn dct_basis(n: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(CsError::InvalidArgument("dct size must be >= 1".into()));
    }
    let nf = n as f64;
    Ok(Array2::from_shape_fn((n, n).f(), |(i, c)| {
        let scale = if c == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (std::f64::consts::PI * (i as f64 + 0.5) * c as f64 / nf).cos()
    }))
}

/// One periodized analysis level: returns (approximation, detail).
fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        for (t, (&hv, &gv)) in h.iter().zip(g).enumerate() {
            let v = x[(2 * i + t) % n];
            a[i] += hv * v;
            d[i] += gv * v;
        }
    }
    (a, d)
}

/// Multi-level analysis; output order `[cA_L, cD_L, …, cD_1]`.
pub fn dwt_analysis(x: &[f64], wavelet: Wavelet, levels: usize) -> Result<Vec<f64>> {
    check_dwt_shape(x.len(), levels)?;
    let h = wavelet.scaling_filter();
    let g = wavelet.wavelet_filter();
    let mut approx = x.to_vec();
    let mut details: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&approx, h, &g);
        details.push(d);
        approx = a;
    }
    let mut out = approx;
    for d in details.into_iter().rev() {
        out.extend(d);
    }
    Ok(out)
}

fn check_dwt_shape(n: usize, levels: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(CsError::InvalidArgument(format!("dwt size {n} is not a power of two")));
    }
    let max = n.trailing_zeros() as usize;
    if levels == 0 || levels > max {
        return Err(CsError::InvalidArgument(format!(
            "dwt levels {levels} outside 1..={max} for n = {n}"
        )));
    }
    Ok(())
}

/// Orthonormal wavelet synthesis matrix (transpose of the analysis operator).
pub fn dwt_basis(n: usize, wavelet: Wavelet, levels: usize) -> Result<Array2<f64>> {
    check_dwt_shape(n, levels)?;
    let mut synth = Array2::<f64>::zeros((n, n).f());
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        // row j of the synthesis matrix is the analysis of e_j
        let coeffs = dwt_analysis(&e, wavelet, levels)?;
        for (c, v) in coeffs.into_iter().enumerate() {
            synth[[j, c]] = v;
        }
        e[j] = 0.0;
    }
    Ok(synth)
}

/// `[DCT | DWT]` with the default wavelet and `min(4, log2 n)` levels.
pub fn joint_basis(n: usize) -> Result<Array2<f64>> {
    if n < 2 || !n.is_power_of_two() {
        return Err(CsError::InvalidArgument(format!(
            "joint basis needs a power of two >= 2, got {n}"
        )));
    }
    let levels = DEFAULT_LEVELS.min(n.trailing_zeros() as usize);
    joint_basis_with(n, DEFAULT_WAVELET, levels)
}

pub fn joint_basis_with(n: usize, wavelet: Wavelet, levels: usize) -> Result<Array2<f64>> {
    let dct = dct_basis(n)?;
    let dwt = dwt_basis(n, wavelet, levels)?;
    let mut out = Array2::<f64>::zeros((n, 2 * n).f());
    out.slice_mut(s![.., ..n]).assign(&dct);
    out.slice_mut(s![.., n..]).assign(&dwt);
    Ok(out)
}

type CacheKey = (usize, Wavelet, usize);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<Dictionary>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<Dictionary>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Cached joint basis as a [`Dictionary`].
pub fn joint_dictionary(n: usize, wavelet: Wavelet, levels: usize) -> Result<Arc<Dictionary>> {
    let key = (n, wavelet, levels);
    if let Some(d) = cache().read().expect("basis cache poisoned").get(&key) {
        return Ok(Arc::clone(d));
    }
    let dict = Arc::new(Dictionary::new(joint_basis_with(n, wavelet, levels)?)?);
    cache()
        .write()
        .expect("basis cache poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&dict));
    Ok(dict)
}
