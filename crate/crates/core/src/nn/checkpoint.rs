//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "CAF1"
//! version  u32      format version, currently 1
//! n_dims   u32      number of layer_dims entries
//! dims     u32 * n  layer_dims
//! act      u8       activation id (0 relu, 1 tanh, 2 gelu)
//! seed     u64      initialization seed
//! params   f64 * k  per layer: weights row-major, then biases
//! crc      u32      CRC32 over everything above
//! ```

use std::path::Path;

use super::{Activation, MlpModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CAF1";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &MlpModel) -> Vec<u8> {
    let dims = model.layer_dims();
    let mut buf = Vec::with_capacity(4 + 4 + 4 + 4 * dims.len() + 1 + 8 + 8 * model.param_count() + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.push(model.activation().id());
    buf.extend_from_slice(&model.seed().to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Corrupt(format!("bad magic {magic:02x?}")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let n_dims = r.u32()? as usize;
    if !(2..=1024).contains(&n_dims) {
        return Err(Error::Corrupt(format!("implausible layer count {n_dims}")));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(r.u32()? as usize);
    }
    let activation = Activation::from_id(r.u8()?)?;
    let seed = r.u64()?;

    let mut weights = Vec::with_capacity(n_dims - 1);
    let mut biases = Vec::with_capacity(n_dims - 1);
    for win in dims.windows(2) {
        let w: Result<Vec<f64>> = (0..win[0] * win[1]).map(|_| r.f64()).collect();
        weights.push(w?);
        let b: Result<Vec<f64>> = (0..win[1]).map(|_| r.f64()).collect();
        biases.push(b?);
    }

    let payload_end = r.pos;
    let stored_crc = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    let crc = crc32fast::hash(&bytes[..payload_end]);
    if crc != stored_crc {
        return Err(Error::Corrupt(format!(
            "crc mismatch: stored {stored_crc:08x}, computed {crc:08x}"
        )));
    }

    MlpModel::from_parts(&dims, weights, biases, activation, seed)
}

pub fn write_checkpoint_file<P: AsRef<Path>>(model: &MlpModel, path: P) -> Result<()> {
    Ok(std::fs::write(path, save_checkpoint(model))?)
}

pub fn read_checkpoint_file<P: AsRef<Path>>(path: P) -> Result<MlpModel> {
    load_checkpoint(&std::fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "truncated payload: needed {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_reproduces_forward_outputs_exactly() {
        let m = MlpModel::new(&[3, 16, 16, 2], Activation::Gelu, 21).unwrap();
        let loaded = load_checkpoint(&save_checkpoint(&m)).unwrap();
        assert_eq!(m, loaded);
        for probe in [[0.1, 0.2, 0.3], [-1.0, 0.0, 2.0], [5.0, -5.0, 0.5]] {
            assert_eq!(m.forward(&probe).unwrap(), loaded.forward(&probe).unwrap());
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = save_checkpoint(&MlpModel::new(&[2, 4, 2], Activation::Relu, 0).unwrap());
        let err = load_checkpoint(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Corrupt(_)), "{err}");
    }

    #[test]
    fn future_version_is_flagged() {
        let mut bytes = save_checkpoint(&MlpModel::new(&[2, 4, 2], Activation::Relu, 0).unwrap());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let err = load_checkpoint(&bytes).unwrap_err();
        assert!(matches!(
            err,
            Error::UnsupportedVersion {
                found: 2,
                supported: 1
            }
        ));
    }

    #[test]
    fn bit_flip_breaks_the_crc() {
        let mut bytes = save_checkpoint(&MlpModel::new(&[2, 4, 2], Activation::Tanh, 0).unwrap());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        let err = load_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, Error::Corrupt(_)), "{err}");
    }
}
