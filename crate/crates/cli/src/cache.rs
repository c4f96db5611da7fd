//! Eigendecomposition cache under `$ARMA_CACHE_DIR`, keyed by a SHA-256 of
//! the operator. A missing, unreadable or mismatched entry is recomputed.

use std::fs;
use std::path::PathBuf;

use arma_core::linalg::{symmetric_eig, DenseMatrix, SparseMatrix, SpectralDecomposition};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CACHE_ENV: &str = "ARMA_CACHE_DIR";
const MAGIC: &[u8; 8] = b"ARMAEIG1";

pub fn operator_checksum(op: &SparseMatrix) -> String {
    let mut h = Sha256::new();
    h.update((op.n_rows() as u64).to_le_bytes());
    for &o in op.row_offsets() {
        h.update((o as u64).to_le_bytes());
    }
    for &c in op.col_indices() {
        h.update((c as u64).to_le_bytes());
    }
    for &v in op.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn encode(d: &SpectralDecomposition) -> Vec<u8> {
    let n = d.n();
    let mut out = Vec::with_capacity(16 + 8 * (n + n * n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in d.eigenvalues.iter().chain(d.eigenvectors.values()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8], n: usize) -> Option<SpectralDecomposition> {
    let body = bytes.strip_prefix(MAGIC)?;
    let (head, rest) = body.split_at_checked(8)?;
    if u64::from_le_bytes(head.try_into().ok()?) != n as u64 || rest.len() != 8 * (n + n * n) {
        return None;
    }
    let floats: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let eigenvectors = DenseMatrix::from_vec(n, n, floats[n..].to_vec()).ok()?;
    Some(SpectralDecomposition {
        eigenvalues: floats[..n].to_vec(),
        eigenvectors,
    })
}

/// Eigendecomposition of `op`, read from or stored in the cache when
/// `ARMA_CACHE_DIR` is set. Returns whether the cache was hit.
pub fn decompose(op: &SparseMatrix) -> Result<(SpectralDecomposition, bool), CliError> {
    let file = std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .map(|dir| dir.join(format!("eig-{}.bin", operator_checksum(op))));
    if let Some(hit) = file
        .as_ref()
        .and_then(|f| fs::read(f).ok())
        .and_then(|b| decode(&b, op.n_rows()))
    {
        return Ok((hit, true));
    }
    let d = symmetric_eig(&op.to_dense())?;
    if let Some(file) = file {
        let write = file
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(&file, encode(&d)));
        write.map_err(|e| CliError::output(&file, e))?;
    }
    Ok((d, false))
}
