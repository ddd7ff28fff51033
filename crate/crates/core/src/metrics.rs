//! Compression ratio and percent root-mean-square difference.

use crate::error::{CsError, Result};

/// `n / m`.
pub fn compression_ratio(n: usize, m: usize) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(CsError::InvalidArgument(format!(
            "compression ratio needs n, m >= 1 (got n={n}, m={m})"
        )));
    }
    Ok(n as f64 / m as f64)
}

/// DC-removed PRD in percent: `100·‖f − f′‖ / ‖f − mean(f)‖`.
pub fn prd(original: &[f64], reconstructed: &[f64]) -> Result<f64> {
    if original.len() != reconstructed.len() {
        return Err(CsError::DimensionMismatch {
            what: "reconstruction length",
            expected: original.len(),
            found: reconstructed.len(),
        });
    }
    if original.is_empty() {
        return Err(CsError::InvalidArgument("empty signal".into()));
    }
    let mean = original.iter().sum::<f64>() / original.len() as f64;
    let denom = original.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(CsError::ConstantSignal);
    }
    let num = original
        .iter()
        .zip(reconstructed)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * num / denom)
}

/// PRD of the concatenation of all epochs, computed once over the whole record.
pub fn prd_concatenated<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut original = Vec::new();
    let mut reconstructed = Vec::new();
    for (f, g) in pairs {
        if f.len() != g.len() {
            return Err(CsError::DimensionMismatch {
                what: "reconstruction length",
                expected: f.len(),
                found: g.len(),
            });
        }
        original.extend_from_slice(f);
        reconstructed.extend_from_slice(g);
    }
    prd(&original, &reconstructed)
}

/// Mean and sample standard deviation; std is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}
