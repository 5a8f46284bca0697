//! SFMT tensor files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | field                                        |
//! |--------------|----------------------------------------------|
//! | 4            | magic `SFMT`                                 |
//! | 4 (u32)      | format version, currently 1                  |
//! | 4 (u32)      | rank, at least 1                             |
//! | 8 × rank     | dimensions (u64 each, all positive)          |
//! | 1 (u8)       | scalar type: 1 = f32, 2 = f64                |
//! | n × width    | elements, row-major, little-endian IEEE 754  |

use std::path::Path;

use crate::bytes::{put_scalars, put_u32, put_u64, ByteReader};
use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SFMT";
pub const VERSION: u32 = 1;

/// A tensor of either supported precision, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn precision(&self) -> Precision {
        match self {
            AnyTensor::F32(_) => Precision::F32,
            AnyTensor::F64(_) => Precision::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to `T`; exact when the stored precision is `T` or narrower.
    pub fn into_scalar<T: Scalar>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode_tensor<T: Scalar>(tensor: &Tensor<T>) -> Result<Vec<u8>> {
    if tensor.rank() == 0 {
        return Err(Error::Validation("SFMT cannot store rank-0 tensors".into()));
    }
    let mut out = Vec::with_capacity(17 + 8 * tensor.rank() + tensor.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, tensor.rank() as u32);
    for &d in tensor.shape() {
        put_u64(&mut out, d as u64);
    }
    out.push(T::TYPE_CODE);
    put_scalars(&mut out, tensor);
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<AnyTensor> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"SFMT\""),
        });
    }
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: at,
            msg: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let at = r.offset();
    let rank = r.u32("rank")? as usize;
    if rank == 0 {
        return Err(Error::Format {
            offset: at,
            msg: "rank 0 is not allowed".into(),
        });
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let at = r.offset();
        let d = r.u64("dimension")?;
        if d == 0 || d > usize::MAX as u64 {
            return Err(Error::Format {
                offset: at,
                msg: format!("invalid dimension {d}"),
            });
        }
        shape.push(d as usize);
    }
    let at = r.offset();
    let code = r.u8("scalar type")?;
    let precision = Precision::from_code(code).ok_or(Error::Format {
        offset: at,
        msg: format!("unknown scalar type code {code}"),
    })?;
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| r.error("element count overflows"))?;
    let tensor = match precision {
        Precision::F32 => AnyTensor::F32(Tensor::new(shape, r.scalars(count, "tensor data")?)?),
        Precision::F64 => AnyTensor::F64(Tensor::new(shape, r.scalars(count, "tensor data")?)?),
    };
    r.finish("tensor data")?;
    Ok(tensor)
}

pub fn write_tensor<T: Scalar>(path: impl AsRef<Path>, tensor: &Tensor<T>) -> Result<()> {
    let bytes = encode_tensor(tensor)?;
    std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor_any(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    decode_tensor(&bytes)
}

/// Reads a tensor file, converting to `T` if it was stored at another
/// precision.
pub fn read_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    Ok(read_tensor_any(path)?.into_scalar())
}

/// Shape from the header alone.
pub fn read_shape(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    Ok(read_tensor_any(path)?.shape().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f32> {
        Tensor::from_fn(vec![3, 7, 5], |i| (i as f32 * 0.618).sin())
    }

    #[test]
    fn header_layout() {
        let bytes = encode_tensor(&Tensor::<f64>::zeros(vec![2, 3])).unwrap();
        assert_eq!(&bytes[..4], b"SFMT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(bytes[28], 2);
        assert_eq!(bytes.len(), 29 + 6 * 8);
    }

    #[test]
    fn truncation_reports_expected_and_actual() {
        let bytes = encode_tensor(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        let err = decode_tensor(cut).unwrap_err().to_string();
        assert!(err.contains("expected 420 bytes, found 417"), "{err}");
    }

    #[test]
    fn rejects_bad_magic_version_and_rank() {
        let mut bytes = encode_tensor(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format { offset: 0, .. })));

        let mut bytes = encode_tensor(&sample()).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format { offset: 4, .. })));

        let mut rank0 = b"SFMT".to_vec();
        rank0.extend_from_slice(&1u32.to_le_bytes());
        rank0.extend_from_slice(&0u32.to_le_bytes());
        rank0.push(1);
        assert!(matches!(decode_tensor(&rank0), Err(Error::Format { offset: 8, .. })));
        assert!(encode_tensor(&Tensor::<f32>::scalar(1.0)).is_err());
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = encode_tensor(&sample()).unwrap();
        bytes.push(0);
        assert!(decode_tensor(&bytes).is_err());
    }
}
