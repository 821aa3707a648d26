//! Framed little-endian binary files: magic, version, length-prefixed payload, CRC-32.
//!
//! ```text
//! magic[8] | version u32 | payload_len u64 | payload | crc32 u32
//! ```
//! The checksum covers every byte before it. Readers check, in order: total
//! length, checksum, magic, version.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use plantar_autodiff::Tensor;

use crate::error::{Error, Result};

const HEADER_LEN: usize = 8 + 4 + 8;
const TRAILER_LEN: usize = 4;

/// Append-only payload encoder.
#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn f64s(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        for &x in xs {
            self.f64(x);
        }
    }

    /// Rank, dims, then values.
    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.rank() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &x in t.data() {
            self.f64(x);
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over a payload; every read is bounds-checked.
#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "payload ends at byte {} but {} more were needed",
                self.buf.len(),
                n
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// A length that must fit in what is left of the payload at `unit` bytes each.
    pub fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(unit.max(1)) > self.buf.len() - self.pos {
            return Err(Error::Format(format!("declared length {n} overruns the payload")));
        }
        Ok(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(format!("invalid utf-8: {e}")))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("tensor rank {rank} is implausible")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = match n {
            Some(n) if n.saturating_mul(8) <= self.buf.len() - self.pos => n,
            _ => return Err(Error::Format(format!("tensor shape {shape:?} overruns the payload"))),
        };
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Tensor::new(shape, data)?)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing payload bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

/// Wraps `payload` in the framed layout.
pub fn frame(magic: &[u8; 8], version: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Validates a framed file and returns its payload.
pub fn unframe<'a>(bytes: &'a [u8], magic: &[u8; 8], version: u32) -> Result<&'a [u8]> {
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(Error::Integrity(format!("file is {} bytes, shorter than the frame", bytes.len())));
    }
    let declared = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let actual_payload = (bytes.len() - HEADER_LEN - TRAILER_LEN) as u64;
    if actual_payload != declared {
        return Err(Error::Integrity(format!(
            "payload is {actual_payload} bytes but the header declares {declared}"
        )));
    }
    let body = &bytes[..bytes.len() - TRAILER_LEN];
    let stored = u32::from_le_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Integrity(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(Error::UnsupportedVersion {
            found,
            supported: version,
        });
    }
    Ok(&body[HEADER_LEN..])
}

/// Writes to a sibling temporary file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::other(format!("{} has no file name", path.display()))))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// `<path>.txt`: human-readable summary written next to a binary file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: &[u8; 8] = b"TESTFMT\0";

    #[test]
    fn frame_round_trip_and_checks() {
        let mut w = Writer::new();
        w.str("hello");
        w.tensor(&Tensor::from_fn([2, 3], |i| i as f64 * 0.1));
        let bytes = frame(MAGIC, 3, &w.into_bytes());
        let payload = unframe(&bytes, MAGIC, 3).unwrap();
        let mut r = Reader::new(payload);
        assert_eq!(r.str().unwrap(), "hello");
        assert_eq!(r.tensor().unwrap(), Tensor::from_fn([2, 3], |i| i as f64 * 0.1));
        r.finish().unwrap();

        assert!(matches!(unframe(&bytes[..bytes.len() - 1], MAGIC, 3), Err(Error::Integrity(_))));
        let mut bad = bytes.clone();
        bad[2] ^= 0xff;
        assert!(matches!(unframe(&bad, MAGIC, 3), Err(Error::Integrity(_))));
        assert!(matches!(
            unframe(&bytes, MAGIC, 4),
            Err(Error::UnsupportedVersion { found: 3, supported: 4 })
        ));
        assert!(matches!(unframe(&bytes, b"OTHERFMT", 3), Err(Error::Format(_))));
    }

    #[test]
    fn reader_rejects_overruns() {
        let mut w = Writer::new();
        w.u64(1 << 40);
        let b = w.into_bytes();
        assert!(Reader::new(&b).f64s().is_err());
        assert!(Reader::new(&b[..3]).u64().is_err());
    }
}
