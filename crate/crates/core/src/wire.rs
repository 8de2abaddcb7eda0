//! Canonical byte encoding shared by every protocol structure.
//!
//! Fixed-width big-endian integers, u32 length prefixes for variable-length
//! parts, raw 32-byte digests. The same bytes serve as signing preimage and
//! as the wire format the simulator meters, so encoders are deliberately
//! option-free: one value, one byte sequence.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("input ended inside a field")]
    Truncated,
    #[error("trailing bytes after a complete value")]
    TrailingBytes,
    #[error("unknown variant tag {0}")]
    BadTag(u8),
    #[error("declared length exceeds remaining input")]
    BadLength,
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < len {
            return Err(WireError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn digest(&mut self) -> Result<[u8; 32], WireError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.u32()? as usize;
        if self.buf.len() - self.pos < len {
            return Err(WireError::BadLength);
        }
        Ok(self.take(len)?.to_vec())
    }

    /// Element count for a sequence, bounded by what could possibly fit.
    pub fn count(&mut self) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.pos {
            return Err(WireError::BadLength);
        }
        Ok(n)
    }
}

/// A structure with exactly one canonical byte encoding.
pub trait Wire: Sized {
    fn write(&self, out: &mut Vec<u8>);
    fn read(r: &mut Reader) -> Result<Self, WireError>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out);
        out
    }

    fn from_bytes(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let v = Self::read(&mut r)?;
        if !r.is_empty() {
            return Err(WireError::TrailingBytes);
        }
        Ok(v)
    }

    fn wire_len(&self) -> usize {
        self.to_bytes().len()
    }
}

pub fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_digest(out: &mut Vec<u8>, d: &[u8; 32]) {
    out.extend_from_slice(d);
}

pub fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

pub fn put_opt_digest(out: &mut Vec<u8>, d: &Option<[u8; 32]>) {
    match d {
        None => put_u8(out, 0),
        Some(d) => {
            put_u8(out, 1);
            put_digest(out, d);
        }
    }
}

pub fn read_opt_digest(r: &mut Reader) -> Result<Option<[u8; 32]>, WireError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(r.digest()?)),
        t => Err(WireError::BadTag(t)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_roundtrips() {
        let mut out = Vec::new();
        put_u8(&mut out, 7);
        put_u32(&mut out, 0xdead_beef);
        put_u64(&mut out, u64::MAX - 1);
        put_bytes(&mut out, b"payload");
        put_opt_digest(&mut out, &None);
        put_opt_digest(&mut out, &Some([9u8; 32]));
        let mut r = Reader::new(&out);
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u32().unwrap(), 0xdead_beef);
        assert_eq!(r.u64().unwrap(), u64::MAX - 1);
        assert_eq!(r.bytes().unwrap(), b"payload".to_vec());
        assert_eq!(read_opt_digest(&mut r).unwrap(), None);
        assert_eq!(read_opt_digest(&mut r).unwrap(), Some([9u8; 32]));
        assert!(r.is_empty());
    }

    #[test]
    fn truncation_and_bad_lengths_error() {
        let mut r = Reader::new(&[0, 0]);
        assert_eq!(r.u32().unwrap_err(), WireError::Truncated);
        let mut out = Vec::new();
        put_u32(&mut out, 100);
        out.push(1);
        let mut r = Reader::new(&out);
        assert_eq!(r.bytes().unwrap_err(), WireError::BadLength);
    }

    #[test]
    fn big_endian_layout_is_stable() {
        let mut out = Vec::new();
        put_u32(&mut out, 1);
        put_u64(&mut out, 2);
        assert_eq!(out, vec![0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 2]);
    }
}
