//! Flat binary model files.
//!
//! ```text
//! "MRFN"                      4-byte magic
//! u32 version (= 1)
//! u32 tensor count (= 10)
//! per tensor: u32 rank, then `rank` u32 dims
//! all parameters as f32, tensor by tensor
//! ```
//! Integers and floats are little-endian. Tensor order is [`TENSOR_SHAPES`].

use std::path::Path;

use super::{NetworkParams, TENSOR_SHAPES};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MRFN";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &NetworkParams<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(TENSOR_SHAPES.len() as u32).to_le_bytes());
    for (_, shape) in TENSOR_SHAPES {
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn err(&self, message: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            message,
        }
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<NetworkParams<f32>> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path,
    };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: "not a model file (bad magic)".into(),
        });
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(cur.err(format!("unsupported format version {version}")));
    }
    let count = cur.u32()? as usize;
    if count != TENSOR_SHAPES.len() {
        return Err(cur.err(format!(
            "expected {} tensors, found {count}",
            TENSOR_SHAPES.len()
        )));
    }
    for (name, shape) in TENSOR_SHAPES {
        let rank = cur.u32()? as usize;
        let dims = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims != shape {
            return Err(cur.err(format!("{name} has shape {dims:?}, expected {shape:?}")));
        }
    }
    let mut params = NetworkParams::<f32>::zeros();
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            let b = cur.take(4)?;
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.err(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(params)
}

pub fn save(params: &NetworkParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(params))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<NetworkParams<f32>> {
    let path = path.as_ref();
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = init_params::<f32>(11);
        let bytes = encode(&p);
        assert_eq!(&bytes[..4], b"MRFN");
        assert_eq!(
            bytes.len(),
            12 + 4 * (10 + 4 + 1 + 4 + 1 + 2 + 1 + 2 + 1 + 2 + 1) + 4 * p.len()
        );
        assert_eq!(decode(&bytes, Path::new("m")).unwrap(), p);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode(&init_params::<f32>(1));
        let p = Path::new("m");
        assert!(decode(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, p).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(&bad, p).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long, p).is_err());
    }
}
