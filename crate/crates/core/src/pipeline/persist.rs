//! Binary dictionary and training-state files.
//!
//! Dictionary layout (`CSODL1`), all integers and floats little-endian:
//!
//! ```text
//! magic "CSODL1" | u64 n | u64 k | f64 scale | u32 seed count | u64 seeds...
//! | n*k f64, column-major | 32-byte SHA-256 of everything before it
//! ```
//!
//! The state file (`CSODS1`) stores `n, k, t, rng_seed` as u64, then `A`
//! (k×k), `B` (n×k) and `D` (n×k), all column-major, with the same trailer.

use std::path::Path;

use ndarray::{Array2, ShapeBuilder};
use sha2::{Digest, Sha256};

use crate::error::{CsError, Result};
use crate::odl::TrainState;
use crate::types::Dictionary;

pub const DICT_MAGIC: &[u8; 6] = b"CSODL1";
pub const STATE_MAGIC: &[u8; 6] = b"CSODS1";
const DIGEST_LEN: usize = 32;

/// Metadata stored next to the atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DictMeta {
    /// Standardization scale of the training data (physical units per unit).
    pub scale: f64,
    /// Seeds that produced the dictionary, outermost first.
    pub seeds: Vec<u64>,
}

pub fn encode_dictionary(dict: &Dictionary, meta: &DictMeta) -> Vec<u8> {
    let (n, k) = (dict.n(), dict.k());
    let mut out = Vec::with_capacity(6 + 8 * (3 + meta.seeds.len() + n * k) + 4 + DIGEST_LEN);
    out.extend_from_slice(DICT_MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(k as u64).to_le_bytes());
    out.extend_from_slice(&meta.scale.to_le_bytes());
    out.extend_from_slice(&(meta.seeds.len() as u32).to_le_bytes());
    for s in &meta.seeds {
        out.extend_from_slice(&s.to_le_bytes());
    }
    push_matrix(&mut out, dict.atoms());
    seal(out)
}

pub fn decode_dictionary(bytes: &[u8]) -> Result<(Dictionary, DictMeta)> {
    let mut r = Reader::open(bytes, DICT_MAGIC)?;
    let n = r.usize()?;
    let k = r.usize()?;
    let scale = r.f64()?;
    let count = r.u32()? as usize;
    let seeds = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let atoms = r.matrix(n, k)?;
    r.finish()?;
    let dict = Dictionary::new(atoms)?;
    Ok((dict, DictMeta { scale, seeds }))
}

pub fn save_dictionary(path: &Path, dict: &Dictionary, meta: &DictMeta) -> Result<()> {
    std::fs::write(path, encode_dictionary(dict, meta))?;
    Ok(())
}

pub fn load_dictionary(path: &Path) -> Result<(Dictionary, DictMeta)> {
    decode_dictionary(&std::fs::read(path)?)
}

pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let (n, k) = (state.dict().n(), state.dict().k());
    let mut out = Vec::with_capacity(6 + 32 + 8 * (k * k + 2 * n * k) + DIGEST_LEN);
    out.extend_from_slice(STATE_MAGIC);
    for v in [n as u64, k as u64, state.t() as u64, state.rng_seed()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_matrix(&mut out, state.a());
    push_matrix(&mut out, state.b());
    push_matrix(&mut out, state.dict().atoms());
    seal(out)
}

pub fn decode_state(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader::open(bytes, STATE_MAGIC)?;
    let n = r.usize()?;
    let k = r.usize()?;
    let t = r.usize()?;
    let rng_seed = r.u64()?;
    let a = r.matrix(k, k)?;
    let b = r.matrix(n, k)?;
    let d = r.matrix(n, k)?;
    r.finish()?;
    TrainState::from_parts(a, b, Dictionary::new(d)?, t, rng_seed)
}

pub fn save_state(path: &Path, state: &TrainState) -> Result<()> {
    std::fs::write(path, encode_state(state))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<TrainState> {
    decode_state(&std::fs::read(path)?)
}

fn push_matrix(out: &mut Vec<u8>, m: ndarray::ArrayView2<f64>) {
    for j in 0..m.ncols() {
        for v in m.column(j) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn seal(mut body: Vec<u8>) -> Vec<u8> {
    let digest = Sha256::digest(&body);
    body.extend_from_slice(&digest);
    body
}

/// Cursor over a sealed payload; every read is bounds-checked.
struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 6]) -> Result<Self> {
        let head = &bytes[..bytes.len().min(magic.len())];
        if head != magic {
            return Err(CsError::Version {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(head).into_owned(),
            });
        }
        if bytes.len() < magic.len() + DIGEST_LEN {
            return Err(truncated(magic.len() + DIGEST_LEN, bytes.len()));
        }
        Ok(Self {
            body: bytes,
            pos: magic.len(),
        })
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e + DIGEST_LEN <= self.body.len());
        match end {
            Some(end) => {
                let s = &self.body[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(truncated(
                self.pos.saturating_add(len).saturating_add(DIGEST_LEN),
                self.body.len(),
            )),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CsError::Format(format!("dimension {v} does not fit in memory")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let len = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| CsError::Format(format!("matrix {rows}x{cols} is too large")))?;
        let raw = self.take(len)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols).f(), values).expect("length checked"))
    }

    fn finish(self) -> Result<()> {
        let expected = self.pos + DIGEST_LEN;
        if self.body.len() != expected {
            return Err(CsError::Format(format!(
                "payload size does not match its header: expected {expected} bytes, found {}",
                self.body.len()
            )));
        }
        let digest = Sha256::digest(&self.body[..self.pos]);
        if digest.as_slice() != &self.body[self.pos..] {
            return Err(CsError::Format("checksum mismatch".into()));
        }
        Ok(())
    }
}

fn truncated(needed: usize, found: usize) -> CsError {
    CsError::Format(format!("truncated file: need at least {needed} bytes, found {found}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> Dictionary {
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|j| (0..4).map(|i| ((i * 7 + j * 3) as f64).sin() / 3.0).collect())
            .collect();
        Dictionary::from_columns(&cols).unwrap()
    }

    #[test]
    fn dictionary_round_trip_is_bit_exact() {
        let d = dict();
        let meta = DictMeta {
            scale: 0.123456789,
            seeds: vec![1, 2, u64::MAX],
        };
        let bytes = encode_dictionary(&d, &meta);
        assert_eq!(&bytes[..6], b"CSODL1");
        let (back, m2) = decode_dictionary(&bytes).unwrap();
        assert_eq!(m2, meta);
        for (a, b) in back.atoms().iter().zip(d.atoms().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncation_magic_and_checksum_errors() {
        let bytes = encode_dictionary(
            &dict(),
            &DictMeta {
                scale: 1.0,
                seeds: vec![],
            },
        );
        for cut in [0, 3, 6, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(
                    decode_dictionary(&bytes[..cut]),
                    Err(CsError::Format(_) | CsError::Version { .. })
                ),
                "cut {cut}"
            );
        }
        let mut foreign = bytes.clone();
        foreign[..6].copy_from_slice(b"NUMPY1");
        match decode_dictionary(&foreign) {
            Err(CsError::Version { found, .. }) => assert_eq!(found, "NUMPY1"),
            other => panic!("{other:?}"),
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_dictionary(&flipped), Err(CsError::Format(_))));
        // header claims more atoms than the payload carries
        let mut wrong_k = bytes.clone();
        wrong_k[14..22].copy_from_slice(&6u64.to_le_bytes());
        assert!(matches!(decode_dictionary(&wrong_k), Err(CsError::Format(_))));
        let mut extra = bytes;
        extra.insert(30, 0);
        assert!(matches!(decode_dictionary(&extra), Err(CsError::Format(_))));
    }

    #[test]
    fn state_round_trip() {
        let d = dict();
        let mut st = TrainState::new(d, 9);
        let x = vec![0.1, -0.2, 0.3, 0.05];
        let sol = crate::solvers::sparse_code(&x, st.dict(), &crate::types::SolverConfig::default().with_lambda(0.01))
            .unwrap();
        st.accumulate(&x, &sol).unwrap();
        let back = decode_state(&encode_state(&st)).unwrap();
        assert_eq!(back, st);
        let bytes = encode_state(&st);
        assert!(matches!(decode_dictionary(&bytes), Err(CsError::Version { .. })));
        assert!(matches!(
            decode_state(&bytes[..bytes.len() - 3]),
            Err(CsError::Format(_))
        ));
    }
}
