//! Versioned binary container shared by the on-disk caches and checkpoints.
//!
//! Layout: 8-byte magic, u32 version, u64 payload length, 32-byte SHA-256 of
//! the payload, payload. All integers little-endian.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

const HEADER_LEN: usize = 8 + 4 + 8 + 32;

#[derive(Debug, thiserror::Error)]
pub enum BinFileError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated file")]
    Truncated,
    #[error("checksum mismatch")]
    Checksum,
    #[error("malformed payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BinFileError {
    /// Whether the file exists but cannot be trusted.
    pub fn is_corrupt(&self) -> bool {
        matches!(
            self,
            BinFileError::BadMagic | BinFileError::Truncated | BinFileError::Checksum | BinFileError::Payload(_)
        )
    }
}

pub fn encode(magic: &[u8; 8], version: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(payload));
    out.extend_from_slice(payload);
    out
}

pub fn decode(magic: &[u8; 8], version: u32, bytes: &[u8]) -> Result<Vec<u8>, BinFileError> {
    if bytes.len() < HEADER_LEN {
        return Err(if bytes.len() >= 8 && &bytes[..8] != magic {
            BinFileError::BadMagic
        } else {
            BinFileError::Truncated
        });
    }
    if &bytes[..8] != magic {
        return Err(BinFileError::BadMagic);
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(BinFileError::VersionMismatch { found, expected: version });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(BinFileError::Truncated);
    }
    if Sha256::digest(payload).as_slice() != &bytes[20..52] {
        return Err(BinFileError::Checksum);
    }
    Ok(payload.to_vec())
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so concurrent readers never observe a partial file.
pub fn write_atomic(path: &Path, magic: &[u8; 8], version: u32, payload: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&encode(magic, version, payload))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn read(path: &Path, magic: &[u8; 8], version: u32) -> Result<Vec<u8>, BinFileError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(BinFileError::NotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    decode(magic, version, &bytes)
}

/// Little-endian payload writer.
#[derive(Default)]
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

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    pub fn usizes(&mut self, v: &[usize]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.u64(x as u64);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Little-endian payload reader; every accessor fails on truncation.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BinFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| BinFileError::Payload("unexpected end of payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, BinFileError> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64, BinFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, BinFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, elem: usize) -> Result<usize, BinFileError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(BinFileError::Payload("length prefix exceeds payload".into()));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, BinFileError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>, BinFileError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.u64().map(|v| v as usize)).collect()
    }

    pub fn str(&mut self) -> Result<String, BinFileError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| BinFileError::Payload(e.to_string()))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<(), BinFileError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(BinFileError::Payload("trailing bytes".into()))
        }
    }
}
