//! The SRWT named-tensor format.
//!
//! All integers are little-endian `u32`.
//!
//! ```text
//! offset  field
//! 0       magic  b"SRWT"
//! 4       version (1)
//! 8       entry count
//! 12      entries, sorted by name (byte order), each:
//!           name length, name (UTF-8),
//!           dtype (0 = f32), rank, dims[rank],
//!           payload: 4 * product(dims) bytes of little-endian f32
//! end-4   CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Encoding is canonical: equal maps produce identical bytes.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::Params;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SRWT";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;

/// Serializes named tensors. Names must be unique.
pub fn encode<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>) -> Result<Vec<u8>> {
    let mut entries: Vec<(&str, &Tensor<f32>)> = entries.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(b.0));
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::ArchiveWrite(format!("duplicate tensor name `{}`", w[0].0)));
    }
    let count = u32::try_from(entries.len()).map_err(|_| Error::ArchiveWrite("too many entries".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in entries {
        let len = u32::try_from(name.len()).map_err(|_| Error::ArchiveWrite(format!("name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::ArchiveWrite(format!("dimension too large in `{name}`")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn encode_params(params: &Params<f32>) -> Result<Vec<u8>> {
    encode(params.iter())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::ArchiveParse { offset, reason: reason.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(self.pos, format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses an archive, verifying magic, version, checksum and ordering.
pub fn decode(bytes: &[u8]) -> Result<Params<f32>> {
    let fail = |offset, reason: &str| Error::ArchiveParse { offset, reason: reason.to_string() };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(fail(0, "bad magic, expected \"SRWT\""));
    }
    if bytes.len() < 16 {
        return Err(fail(bytes.len(), "truncated header"));
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
    let mut r = Reader { bytes: &bytes[..body_len], pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(fail(4, &format!("unsupported version {version}")));
    }
    if crc32fast::hash(&bytes[..body_len]) != stored {
        return Err(fail(body_len, "checksum mismatch"));
    }
    let count = r.u32("entry count")?;
    let mut params = Params::new();
    let mut previous: Option<&str> = None;
    for _ in 0..count {
        let start = r.pos;
        let len = r.u32("name length")? as usize;
        let name = core::str::from_utf8(r.take(len, "name")?).map_err(|_| r.fail(start + 4, "name is not UTF-8"))?;
        if previous.is_some_and(|p| p >= name) {
            return Err(r.fail(start, format!("entry `{name}` is duplicated or out of order")));
        }
        previous = Some(name);
        let dtype_at = r.pos;
        let dtype = r.u32("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(r.fail(dtype_at, format!("unsupported dtype {dtype}")));
        }
        let rank = r.u32("rank")? as usize;
        let dims_at = r.pos;
        let mut dims = Vec::with_capacity(rank.min(16));
        let mut numel = 1usize;
        for _ in 0..rank {
            let d = r.u32("dimension")? as usize;
            numel = numel.checked_mul(d).ok_or_else(|| r.fail(dims_at, "dimension product overflows"))?;
            dims.push(d);
        }
        if rank == 0 || dims.contains(&0) {
            return Err(r.fail(dims_at, format!("invalid shape {dims:?} for `{name}`")));
        }
        let bytes_needed = numel.checked_mul(4).ok_or_else(|| r.fail(dims_at, "payload size overflows"))?;
        let payload = r.take(bytes_needed, "payload")?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let t = Tensor::from_data(&dims, data).map_err(|e| r.fail(dims_at, e.to_string()))?;
        params.insert(name, t);
    }
    if r.pos != body_len {
        return Err(r.fail(r.pos, format!("{} trailing bytes before checksum", body_len - r.pos)));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_archive() {
        let bytes = encode_params(&Params::new()).unwrap();
        assert_eq!(bytes.len(), 16);
        assert!(decode(&bytes).unwrap().is_empty());
    }

    #[test]
    fn single_tensor_round_trip() {
        let t = Tensor::from_data(&[2, 2], alloc::vec![1.5f32, -0.0, f32::MIN_POSITIVE / 2.0, f32::MAX]).unwrap();
        let bytes = encode([("w", &t)]).unwrap();
        let back = decode(&bytes).unwrap();
        let got = back.get("w").unwrap();
        assert_eq!(got.shape(), &[2, 2]);
        assert!(got.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_params(&Params::new()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::ArchiveParse { offset: 0, .. })));
    }

    #[test]
    fn corruption_and_truncation_are_detected() {
        let t = Tensor::<f32>::full(&[3], 2.0);
        let bytes = encode([("a", &t)]).unwrap();
        let mut flipped = bytes.clone();
        flipped[30] ^= 1;
        assert!(matches!(decode(&flipped), Err(Error::ArchiveParse { .. })));
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(&bytes[..10]).is_err());
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(matches!(decode(&version), Err(Error::ArchiveParse { offset: 4, .. })));
    }

    #[test]
    fn duplicate_names_fail_to_write() {
        let t = Tensor::<f32>::zeros(&[1]);
        assert!(matches!(encode([("x", &t), ("x", &t)]), Err(Error::ArchiveWrite(_))));
    }

    #[test]
    fn entries_are_name_sorted() {
        let t = Tensor::<f32>::zeros(&[1]);
        let a = encode([("b", &t), ("a", &t)]).unwrap();
        let b = encode([("a", &t), ("b", &t)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[16..17], b"a");
    }
}
