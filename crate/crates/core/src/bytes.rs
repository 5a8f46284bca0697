//! Little-endian byte cursor shared by the binary file formats.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn error(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset(),
            msg: msg.into(),
        }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!(
                "truncated {what}: expected {n} bytes, found {}",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn utf8(&mut self, n: usize, what: &str) -> Result<&'a str> {
        let start = self.offset();
        let bytes = self.take(n, what)?;
        std::str::from_utf8(bytes).map_err(|e| Error::Format {
            offset: start,
            msg: format!("{what} is not UTF-8: {e}"),
        })
    }

    /// Reads `count` scalars stored as `T`.
    pub(crate) fn scalars<T: Scalar>(&mut self, count: usize, what: &str) -> Result<Vec<T>> {
        let n = count
            .checked_mul(T::BYTES)
            .ok_or_else(|| self.error(format!("{what} size overflows")))?;
        let bytes = self.take(n, what)?;
        Ok(bytes.chunks_exact(T::BYTES).map(T::read_le).collect())
    }

    pub(crate) fn finish(&self, what: &str) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes after {what}", self.remaining())));
        }
        Ok(())
    }
}

pub(crate) fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_scalars<T: Scalar>(out: &mut Vec<u8>, t: &Tensor<T>) {
    out.reserve(t.len() * T::BYTES);
    for &x in t.data() {
        x.write_le(out);
    }
}
