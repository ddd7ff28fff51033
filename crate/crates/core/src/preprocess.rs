//! Training-data cleaning and segmentation.
//!
//! Both filters are cascades of second-order sections run forward and then
//! backward, so the effective magnitude response is the square of the
//! designed one and the phase is zero. The record is extended at both ends by
//! odd reflection and each pass starts from the steady state for its first
//! input sample; the padding length is three periods of the lowest designed
//! frequency (capped at `len - 1`), which is also the warm-up length: no
//! minimum signal length is enforced, but shorter records keep part of the
//! edge transient.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CsError, Result};
use crate::types::{Epoch, Lineage};

/// Notch and band-pass parameters.
///
/// The defaults are common ECG choices for 360 Hz records with 60 Hz mains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub sample_rate_hz: f64,
    pub notch_freq_hz: f64,
    /// Width between the -3 dB points.
    pub notch_bandwidth_hz: f64,
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    /// Butterworth order of each of the high-pass and low-pass halves.
    pub filter_order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 360.0,
            notch_freq_hz: 60.0,
            notch_bandwidth_hz: 2.0,
            bandpass_low_hz: 0.5,
            bandpass_high_hz: 40.0,
            filter_order: 2,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        let positive = [
            ("sample_rate_hz", self.sample_rate_hz),
            ("notch_freq_hz", self.notch_freq_hz),
            ("notch_bandwidth_hz", self.notch_bandwidth_hz),
            ("bandpass_low_hz", self.bandpass_low_hz),
            ("bandpass_high_hz", self.bandpass_high_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CsError::FilterConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.filter_order == 0 {
            return Err(CsError::FilterConfig("filter_order must be >= 1".into()));
        }
        if !(self.bandpass_low_hz < self.bandpass_high_hz && self.bandpass_high_hz < nyquist) {
            return Err(CsError::FilterConfig(format!(
                "need 0 < low ({}) < high ({}) < nyquist ({nyquist})",
                self.bandpass_low_hz, self.bandpass_high_hz
            )));
        }
        if self.notch_freq_hz >= nyquist {
            return Err(CsError::FilterConfig(format!(
                "notch {} Hz is not below nyquist {nyquist} Hz",
                self.notch_freq_hz
            )));
        }
        Ok(())
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// Cascade of biquads applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    sections: Vec<Biquad>,
    /// Padding length in samples for forward-backward filtering.
    pad: usize,
}

impl Cascade {
    pub fn notch(spec: &FilterSpec) -> Result<Self> {
        spec.validate()?;
        let w0 = 2.0 * std::f64::consts::PI * spec.notch_freq_hz / spec.sample_rate_hz;
        // exact -3 dB width after the bilinear warp
        let alpha = (std::f64::consts::PI * spec.notch_bandwidth_hz / spec.sample_rate_hz).tan();
        let c = w0.cos();
        let section = Biquad::normalized([1.0, -2.0 * c, 1.0], 1.0 + alpha, -2.0 * c, 1.0 - alpha);
        Ok(Self {
            sections: vec![section],
            pad: 3 * (spec.sample_rate_hz / spec.notch_bandwidth_hz).ceil() as usize,
        })
    }

    pub fn bandpass(spec: &FilterSpec) -> Result<Self> {
        spec.validate()?;
        let mut sections = butterworth(spec.filter_order, spec.bandpass_low_hz, spec.sample_rate_hz, true);
        sections.extend(butterworth(
            spec.filter_order,
            spec.bandpass_high_hz,
            spec.sample_rate_hz,
            false,
        ));
        Ok(Self {
            sections,
            pad: 3 * (spec.sample_rate_hz / spec.bandpass_low_hz).ceil() as usize,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Single forward pass from steady state for `signal[0]`.
    pub fn filter_forward(&self, signal: &[f64]) -> Vec<f64> {
        let mut out = signal.to_vec();
        let Some(&first) = signal.first() else {
            return out;
        };
        let mut level = first;
        for s in &self.sections {
            let y_ss = s.dc_gain() * level;
            let mut z2 = s.b[2] * level - s.a[1] * y_ss;
            let mut z1 = s.b[1] * level - s.a[0] * y_ss + z2;
            for v in out.iter_mut() {
                let x = *v;
                let y = s.b[0] * x + z1;
                z1 = s.b[1] * x - s.a[0] * y + z2;
                z2 = s.b[2] * x - s.a[1] * y;
                *v = y;
            }
            level = y_ss;
        }
        out
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding.
    pub fn filtfilt(&self, signal: &[f64]) -> Vec<f64> {
        let len = signal.len();
        if len == 0 {
            return Vec::new();
        }
        let pad = self.pad.min(len - 1);
        let mut ext = Vec::with_capacity(len + 2 * pad);
        let (first, last) = (signal[0], signal[len - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
        ext.extend_from_slice(signal);
        ext.extend((1..=pad).map(|i| 2.0 * last - signal[len - 1 - i]));

        let mut fwd = self.filter_forward(&ext);
        fwd.reverse();
        let mut back = self.filter_forward(&fwd);
        back.reverse();
        back.drain(..pad);
        back.truncate(len);
        back
    }
}

/// Butterworth sections via the bilinear transform, prewarped at `cutoff_hz`.
fn butterworth(order: usize, cutoff_hz: f64, fs: f64, highpass: bool) -> Vec<Biquad> {
    use std::f64::consts::PI;
    let w0 = 2.0 * PI * cutoff_hz / fs;
    let (sin, cos) = w0.sin_cos();
    let mut out = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        let q = 1.0 / (2.0 * (PI * (2 * i + 1) as f64 / (2 * order) as f64).sin());
        let alpha = sin / (2.0 * q);
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        out.push(Biquad::normalized(b, 1.0 + alpha, -2.0 * cos, 1.0 - alpha));
    }
    if order % 2 == 1 {
        let t = (w0 / 2.0).tan();
        let a1 = (t - 1.0) / (t + 1.0);
        let b = if highpass {
            [1.0 / (1.0 + t), -1.0 / (1.0 + t), 0.0]
        } else {
            [t / (1.0 + t), t / (1.0 + t), 0.0]
        };
        out.push(Biquad { b, a: [a1, 0.0] });
    }
    out
}

/// Removes mains interference.
pub fn notch_filter(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    Ok(Cascade::notch(spec)?.filtfilt(signal))
}

/// Removes baseline wander and high-frequency noise.
pub fn bandpass_filter(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    Ok(Cascade::bandpass(spec)?.filtfilt(signal))
}

/// Notch followed by band-pass.
pub fn clean(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    bandpass_filter(&notch_filter(signal, spec)?, spec)
}

/// Non-overlapping epochs plus the count of trailing samples left over.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub epochs: Vec<Epoch>,
    pub dropped: usize,
}

pub fn segment(signal: &[f64], n: usize) -> Result<Segmentation> {
    segment_with_lineage(signal, n, Lineage::Raw)
}

pub fn segment_with_lineage(signal: &[f64], n: usize, lineage: Lineage) -> Result<Segmentation> {
    if n == 0 {
        return Err(CsError::InvalidArgument("epoch length must be >= 1".into()));
    }
    let epochs = signal
        .chunks_exact(n)
        .map(|c| Epoch::with_lineage(c.to_vec(), lineage))
        .collect::<Result<Vec<_>>>()?;
    Ok(Segmentation {
        epochs,
        dropped: signal.len() % n,
    })
}

/// Index sets of a seeded partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub init: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(total: usize, init: usize, train: usize, seed: u64) -> Result<SplitIndices> {
    if init + train > total {
        return Err(CsError::NotEnoughEpochs {
            needed: init + train,
            available: total,
        });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices {
        init: take(0..init),
        train: take(init..init + train),
        test: take(init + train..total),
    })
}

/// Seeded split into (init, train, test); test is the remainder.
pub fn split_dataset<T: Clone>(items: &[T], init: usize, train: usize, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let idx = split_indices(items.len(), init, train, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((pick(&idx.init), pick(&idx.train), pick(&idx.test)))
}
