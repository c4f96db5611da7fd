//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "ARMACKPT"
//! version   u32
//! seed      u64
//! count     u32
//! count × { name_len u32, name utf-8, kind u8 (0 weight, 1 bias),
//!           rows u32, cols u32, rows·cols × f64 }
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::{ParamKind, ParamSet};
use crate::linalg::DenseMatrix;

use super::DataError;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ARMACKPT";

pub fn save_checkpoint(
    params: &ParamSet,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(24 + params.scalar_count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.push(match p.kind {
            ParamKind::Weight => 0,
            ParamKind::Bias => 1,
        });
        buf.extend_from_slice(&(p.value.n_rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(p.value.n_cols() as u32).to_le_bytes());
        for v in p.value.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| DataError::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: String,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                DataError::schema(&self.file, None, format!("truncated at byte {}", self.pos))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint, returning the parameters in file order and the seed.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamSet, u64), DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
        file: path.display().to_string(),
    };
    if c.take(8)? != MAGIC {
        return Err(DataError::schema(&c.file, None, "not a checkpoint file"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(DataError::schema(
            &c.file,
            None,
            format!("checkpoint version {version} unsupported"),
        ));
    }
    let seed = c.u64()?;
    let count = c.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| DataError::schema(&c.file, None, "parameter name is not utf-8"))?
            .to_string();
        let kind = match c.take(1)?[0] {
            0 => ParamKind::Weight,
            1 => ParamKind::Bias,
            k => {
                return Err(DataError::schema(
                    &c.file,
                    None,
                    format!("unknown parameter kind {k}"),
                ))
            }
        };
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        let payload = c.take(rows * cols * 8)?;
        let values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if params.id(&name).is_some() {
            return Err(DataError::schema(
                &c.file,
                None,
                format!("duplicate parameter {name}"),
            ));
        }
        params.add(
            name,
            kind,
            DenseMatrix::from_vec(rows, cols, values).expect("length matches shape"),
        );
    }
    if c.pos != bytes.len() {
        return Err(DataError::schema(
            &c.file,
            None,
            "trailing bytes after last parameter",
        ));
    }
    Ok((params, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let mut params = ParamSet::new();
        params.weight(
            "l0.w",
            DenseMatrix::from_rows(&[vec![0.1, -2.5e-300], vec![f64::MIN_POSITIVE, 3.0]]),
        );
        params.bias("l0.bias", DenseMatrix::from_rows(&[vec![-0.0, 7.25]]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&params, 42, &path).unwrap();
        let (loaded, seed) = load_checkpoint(&path).unwrap();
        assert_eq!(seed, 42);
        for (a, b) in params.iter().zip(loaded.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.value.shape(), b.value.shape());
            let bits = |m: &DenseMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn rejects_truncated_files() {
        let mut params = ParamSet::new();
        params.weight("w", DenseMatrix::identity(3));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&params, 1, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(DataError::Schema { .. })
        ));
    }
}
