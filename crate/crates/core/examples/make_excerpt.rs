//! Regenerates `data/ecg_excerpt.csv`: ten minutes of synthetic single-lead
//! ECG at 360 Hz, stored as int16 counts at 200 counts/mV.
//!
//! cargo run --release --example make_excerpt [-- <output path>]

use std::io::Write;

use csodl::synthetic::{synthetic_ecg, to_counts, SynthSpec};

const SEED: u64 = 20_240_601;
const COUNTS_PER_MV: f64 = 200.0;

fn main() -> std::io::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/ecg_excerpt.csv").to_string());
    let spec = SynthSpec {
        seconds: 600.0,
        ..SynthSpec::default()
    };
    let counts = to_counts(&synthetic_ecg(&spec, SEED), COUNTS_PER_MV);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    for c in &counts {
        writeln!(out, "{c}")?;
    }
    out.flush()?;
    eprintln!("wrote {} samples to {path}", counts.len());
    Ok(())
}
