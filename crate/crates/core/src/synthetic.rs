//! Synthetic ECG for tests and the bundled excerpt.
//!
//! Each beat is a sum of Gaussian bumps (P, Q, R, S, T) placed on a
//! variable RR tachogram with respiratory modulation; a small fraction of
//! beats are wide-complex ectopics. Baseline wander, mains hum and white
//! noise are added on top. Amplitudes are in millivolts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub sample_rate_hz: f64,
    pub seconds: f64,
    pub heart_rate_bpm: f64,
    /// Probability that a beat is ectopic.
    pub ectopic_rate: f64,
    pub wander_mv: f64,
    pub mains_hz: f64,
    pub mains_mv: f64,
    pub noise_mv: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 360.0,
            seconds: 60.0,
            heart_rate_bpm: 72.0,
            ectopic_rate: 0.03,
            wander_mv: 0.06,
            mains_hz: 60.0,
            mains_mv: 0.01,
            noise_mv: 0.006,
        }
    }
}

/// (offset s, amplitude mV, width s) for a normal sinus beat.
const SINUS: [(f64, f64, f64); 5] = [
    (-0.20, 0.15, 0.025),
    (-0.035, -0.12, 0.010),
    (0.0, 1.10, 0.011),
    (0.035, -0.25, 0.012),
    (0.28, 0.30, 0.050),
];

/// Wide complex without a P wave.
const ECTOPIC: [(f64, f64, f64); 3] = [(0.0, 1.3, 0.030), (0.07, -0.5, 0.035), (0.32, -0.35, 0.07)];

pub fn synthetic_ecg(spec: &SynthSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = spec.sample_rate_hz;
    let len = (spec.seconds * fs).round() as usize;
    let mut x = vec![0.0; len];
    let rr_mean = 60.0 / spec.heart_rate_bpm;
    let jitter = Normal::new(0.0, 0.02).expect("valid");
    let amp_jitter = Normal::new(1.0, 0.04).expect("valid");

    let mut beat_t = 0.3;
    let total = spec.seconds;
    while beat_t < total + 0.5 {
        let rsa = 0.04 * (2.0 * std::f64::consts::PI * 0.25 * beat_t).sin();
        let rr = (rr_mean + rsa + jitter.sample(&mut rng)).max(0.4);
        let ectopic = rng.random_bool(spec.ectopic_rate);
        let waves: &[(f64, f64, f64)] = if ectopic { &ECTOPIC } else { &SINUS };
        let qt_scale = (rr / rr_mean).sqrt();
        let gain = amp_jitter.sample(&mut rng);
        for (i, &(off, amp, width)) in waves.iter().enumerate() {
            // T wave tracks the RR interval
            let off = if i == waves.len() - 1 { off * qt_scale } else { off };
            let center = beat_t + off;
            let lo = ((center - 5.0 * width) * fs).floor().max(0.0) as usize;
            let hi = (((center + 5.0 * width) * fs).ceil().max(0.0) as usize).min(len);
            for (s, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
                let d = (s as f64 / fs - center) / width;
                *v += gain * amp * (-0.5 * d * d).exp();
            }
        }
        beat_t += if ectopic { 0.7 * rr } else { rr };
    }

    let noise = Normal::new(0.0, spec.noise_mv.max(f64::MIN_POSITIVE)).expect("valid");
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for (s, v) in x.iter_mut().enumerate() {
        let t = s as f64 / fs;
        let tau = std::f64::consts::TAU;
        *v += spec.wander_mv * ((tau * 0.22 * t + phase).sin() + 0.5 * (tau * 0.05 * t).sin());
        *v += spec.mains_mv * (tau * spec.mains_hz * t).sin();
        if spec.noise_mv > 0.0 {
            *v += noise.sample(&mut rng);
        }
    }
    x
}

/// Quantizes millivolts to integer ADC counts.
pub fn to_counts(signal: &[f64], counts_per_mv: f64) -> Vec<i16> {
    signal
        .iter()
        .map(|v| (v * counts_per_mv).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_beat_like() {
        let spec = SynthSpec {
            seconds: 10.0,
            ..SynthSpec::default()
        };
        let a = synthetic_ecg(&spec, 1);
        assert_eq!(a, synthetic_ecg(&spec, 1));
        assert_eq!(a.len(), 3600);
        let peak = a.iter().fold(0.0f64, |m, v| m.max(*v));
        assert!(peak > 0.8 && peak < 2.0, "{peak}");
        // roughly 12 R peaks above half the max
        let mut beats = 0;
        let mut above = false;
        for &v in &a {
            if v > 0.6 && !above {
                beats += 1;
            }
            above = v > 0.6;
        }
        assert!((9..=16).contains(&beats), "{beats}");
    }

    #[test]
    fn counts_round_and_clamp() {
        assert_eq!(to_counts(&[0.0, 1.0, -0.5, 1e6], 200.0), vec![0, 200, -100, i16::MAX]);
    }
}
