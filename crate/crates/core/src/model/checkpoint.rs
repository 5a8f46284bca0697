//! Binary checkpoints.
//!
//! Layout, integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SIPCKPT\0"
//! version      u32      currently 1
//! scalar type  u8       1 = f32, 2 = f64
//! config       u32 length + UTF-8 canonical HeadConfig JSON
//! metadata     u32 length + UTF-8 JSON (CheckpointMeta)
//! params       u32 count, then blobs
//! extra        u32 count, then blobs (optimizer state, may be 0)
//! blob         u16 name length, name, u8 rank, u64 dims…, raw scalars
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bytes::{put_scalars, put_u16, put_u32, put_u64, ByteReader};
use crate::error::{Error, Result};
use crate::model::{HeadConfig, HeadParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SIPCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Optimizer steps taken when the checkpoint was written.
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: HeadConfig,
    pub params: HeadParams<T>,
    pub meta: CheckpointMeta,
    /// Additional named tensors, e.g. optimizer moments.
    pub extra: Vec<(String, Tensor<T>)>,
}

fn put_blob<T: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::Validation(format!("parameter name too long: {name}")))?;
    put_u16(out, len);
    out.extend_from_slice(name.as_bytes());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    put_scalars(out, t);
    Ok(())
}

fn read_blob<T: Scalar>(r: &mut ByteReader<'_>) -> Result<(String, Tensor<T>)> {
    let len = r.u16("blob name length")? as usize;
    let name = r.utf8(len, "blob name")?.to_string();
    let rank = r.u8("blob rank")? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let at = r.offset();
        let d = r.u64("blob dimension")?;
        if d == 0 {
            return Err(Error::Format {
                offset: at,
                msg: format!("zero dimension in blob {name}"),
            });
        }
        shape.push(d as usize);
    }
    let count: usize = shape.iter().product();
    let data = r.scalars(count, &format!("blob {name}"))?;
    Ok((name, Tensor::new(shape, data)?))
}

fn put_text(out: &mut Vec<u8>, text: &str) {
    put_u32(out, text.len() as u32);
    out.extend_from_slice(text.as_bytes());
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(config: HeadConfig, params: HeadParams<T>) -> Self {
        Checkpoint {
            config,
            params,
            meta: CheckpointMeta::default(),
            extra: Vec::new(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.push(T::TYPE_CODE);
        put_text(&mut out, &self.config.canonical_text());
        put_text(
            &mut out,
            &serde_json::to_string(&self.meta).expect("metadata serializes"),
        );
        put_u32(&mut out, self.params.len() as u32);
        for (name, t) in self.params.iter() {
            put_blob(&mut out, name, t)?;
        }
        put_u32(&mut out, self.extra.len() as u32);
        for (name, t) in &self.extra {
            put_blob(&mut out, name, t)?;
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "not a checkpoint (bad magic)".into(),
            });
        }
        let at = r.offset();
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: at,
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let at = r.offset();
        let code = r.u8("scalar type")?;
        if code != T::TYPE_CODE {
            return Err(Error::Format {
                offset: at,
                msg: format!("checkpoint scalar code {code}, expected {} ({})", T::TYPE_CODE, T::NAME),
            });
        }
        let len = r.u32("config length")? as usize;
        let config = HeadConfig::from_canonical_text(r.utf8(len, "config")?)?;
        let len = r.u32("metadata length")? as usize;
        let meta: CheckpointMeta =
            serde_json::from_str(r.utf8(len, "metadata")?).map_err(|e| Error::Parse {
                what: "checkpoint metadata".into(),
                msg: e.to_string(),
            })?;
        let count = r.u32("parameter count")? as usize;
        let named = (0..count)
            .map(|_| read_blob(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let params = HeadParams::from_named(&config, named)?;
        let count = r.u32("extra count")? as usize;
        let extra = (0..count)
            .map(|_| read_blob(&mut r))
            .collect::<Result<Vec<_>>>()?;
        r.finish("checkpoint")?;
        Ok(Checkpoint {
            config,
            params,
            meta,
            extra,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.encode()?;
        std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::decode(&bytes)
    }
}

/// Reads only the header of a checkpoint: scalar code and head config.
pub fn peek_config(path: impl AsRef<Path>) -> Result<(u8, HeadConfig)> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    let mut r = ByteReader::new(&bytes);
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "not a checkpoint (bad magic)".into(),
        });
    }
    r.u32("version")?;
    let code = r.u8("scalar type")?;
    let len = r.u32("config length")? as usize;
    Ok((code, HeadConfig::from_canonical_text(r.utf8(len, "config")?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn checkpoint<T: Scalar>() -> Checkpoint<T> {
        let config = HeadConfig::desk(2, 8);
        let params = HeadParams::init(&config, &mut RngStream::new(4)).unwrap();
        let mut c = Checkpoint::new(config, params);
        c.meta.step = 17;
        c.meta.dev_rmse = Some(12.5);
        c.extra.push(("adam.m.output.bias".into(), Tensor::vector(vec![T::lit(0.25)])));
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = checkpoint::<f32>();
        let bytes = c.encode().unwrap();
        let back = Checkpoint::<f32>::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode().unwrap(), bytes);

        let c = checkpoint::<f64>();
        assert_eq!(Checkpoint::<f64>::decode(&c.encode().unwrap()).unwrap(), c);
    }

    #[test]
    fn rejects_precision_mismatch_and_truncation() {
        let bytes = checkpoint::<f32>().encode().unwrap();
        assert!(matches!(
            Checkpoint::<f64>::decode(&bytes),
            Err(Error::Format { offset: 12, .. })
        ));
        let err = Checkpoint::<f32>::decode(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f32>::decode(&bad).is_err());
    }
}
