//! WBSNAP01 binary snapshots.
//!
//! Layout: 8-byte magic `WBSNAP01`, little-endian `u64` dim and N,
//! little-endian `f64` L, time, mu, epsilon, then the zeta samples
//! (`N^dim` values, row-major) and the velocity components in axis order.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::model::State;
use crate::spectral::SpectralGrid;

pub const MAGIC: &[u8; 8] = b"WBSNAP01";
const HEADER: usize = 8 + 2 * 8 + 4 * 8;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad magic: not a WBSNAP01 file")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing bytes after payload: expected {expected}, found {found}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("non-finite value in snapshot")]
    NonFinite,
    #[error("invalid grid in snapshot header: {0}")]
    BadGrid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Metadata stored next to the fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub mu: f64,
    pub epsilon: f64,
}

pub fn encoded_len(dim: usize, n: usize) -> usize {
    HEADER + 8 * (dim + 1) * n.pow(dim as u32)
}

pub fn encode(state: &State, meta: SnapshotMeta) -> Result<Vec<u8>, SnapshotError> {
    if !state.is_finite() || !meta.mu.is_finite() || !meta.epsilon.is_finite() || !state.time.is_finite() {
        return Err(SnapshotError::NonFinite);
    }
    let g = &state.grid;
    let mut out = Vec::with_capacity(encoded_len(g.dim(), g.n()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(g.n() as u64).to_le_bytes());
    for x in [g.length(), state.time, meta.mu, meta.epsilon] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for c in state.components() {
        for x in c {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<(State, SnapshotMeta), SnapshotError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    if bytes.len() < HEADER {
        return Err(SnapshotError::TruncatedPayload {
            expected: HEADER,
            found: bytes.len(),
        });
    }
    let dim = u64_at(bytes, 8);
    let n = u64_at(bytes, 16);
    if !(1..=2).contains(&dim) || n == 0 || n > 1 << 16 {
        return Err(SnapshotError::BadGrid(format!("dim = {dim}, N = {n}")));
    }
    let (dim, n) = (dim as usize, n as usize);
    let expected = encoded_len(dim, n);
    if bytes.len() < expected {
        return Err(SnapshotError::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(SnapshotError::TrailingBytes {
            expected,
            found: bytes.len(),
        });
    }
    let length = f64_at(bytes, 24);
    let time = f64_at(bytes, 32);
    let meta = SnapshotMeta {
        mu: f64_at(bytes, 40),
        epsilon: f64_at(bytes, 48),
    };
    if ![length, time, meta.mu, meta.epsilon].iter().all(|x| x.is_finite()) {
        return Err(SnapshotError::NonFinite);
    }
    let grid = SpectralGrid::shared(dim, n, length).map_err(|e| SnapshotError::BadGrid(e.to_string()))?;
    let len = grid.len();
    let mut fields = (0..=dim).map(|c| {
        let start = HEADER + 8 * c * len;
        (0..len).map(|i| f64_at(bytes, start + 8 * i)).collect::<Vec<f64>>()
    });
    let zeta = fields.next().unwrap();
    let v: Vec<Vec<f64>> = fields.collect();
    let mut state = State::new(grid, zeta, v).map_err(|e| SnapshotError::BadGrid(e.to_string()))?;
    if !state.is_finite() {
        return Err(SnapshotError::NonFinite);
    }
    state.time = time;
    Ok((state, meta))
}

/// Write atomically: a temporary sibling is renamed into place.
pub fn write_snapshot(path: &Path, state: &State, meta: SnapshotMeta) -> Result<(), SnapshotError> {
    let bytes = encode(state, meta)?;
    crate::report::write_atomic(path, |f| f.write_all(&bytes))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<State, SnapshotError> {
    Ok(read_snapshot_with_meta(path)?.0)
}

pub fn read_snapshot_with_meta(path: &Path) -> Result<(State, SnapshotMeta), SnapshotError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_state(dim: usize, n: usize) -> State {
        let g = SpectralGrid::shared(dim, n, 3.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let zeta = g.random_field(&mut rng, 1.0);
        let v = (0..dim).map(|_| g.random_field(&mut rng, 1.0)).collect();
        let mut s = State::new(g, zeta, v).unwrap();
        s.time = 0.125;
        s
    }

    const META: SnapshotMeta = SnapshotMeta { mu: 0.1, epsilon: 0.2 };

    #[test]
    fn size_for_2d_16() {
        let bytes = encode(&random_state(2, 16), META).unwrap();
        assert_eq!(bytes.len(), 6200);
        assert_eq!(encoded_len(2, 16), 6200);
    }

    #[test]
    fn bit_exact_round_trip() {
        for dim in [1, 2] {
            let s = random_state(dim, 16);
            let (back, meta) = decode(&encode(&s, META).unwrap()).unwrap();
            assert_eq!(meta, META);
            assert_eq!(back.time.to_bits(), s.time.to_bits());
            for (a, b) in s.components().zip(back.components()) {
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn errors() {
        let bytes = encode(&random_state(1, 8), META).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(SnapshotError::TruncatedPayload { .. })));
        assert!(matches!(decode(&bytes[..20]), Err(SnapshotError::TruncatedPayload { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(SnapshotError::BadMagic)));
        let mut nan = bytes.clone();
        let at = HEADER + 8;
        nan[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode(&nan), Err(SnapshotError::NonFinite)));
        let mut s = random_state(1, 8);
        s.zeta[0] = f64::INFINITY;
        assert!(matches!(encode(&s, META), Err(SnapshotError::NonFinite)));
    }
}
