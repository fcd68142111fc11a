use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::PeIntermediates;
use crate::binfile::{self, BinFileError};
use crate::molparse::MolGraph;

const MAGIC: &[u8; 8] = b"GMXPE\0\0\x01";
const FORMAT_VERSION: u32 = 1;

/// Result of a cache lookup. Corrupt entries are reported and treated as
/// misses by [`PeCache::get_or_compute`].
#[derive(Debug)]
pub enum CacheLookup<T> {
    Hit(T),
    Miss,
    Corrupt(String),
}

/// On-disk PE cache: one file per (canonical key, config version, max step).
///
/// Writes go through a temporary file and an atomic rename, so concurrent
/// writers of the same key resolve to last-write-wins and readers only see
/// complete files.
#[derive(Debug, Clone)]
pub struct PeCache {
    dir: PathBuf,
    version: u32,
}

impl PeCache {
    pub fn new(dir: impl Into<PathBuf>, version: u32) -> Self {
        PeCache {
            dir: dir.into(),
            version,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(&self, canonical_key: &str, max_step: usize) -> String {
        let mut h = Sha256::new();
        h.update(canonical_key.as_bytes());
        h.update([0]);
        h.update(self.version.to_le_bytes());
        h.update((max_step as u64).to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.pe"))
    }

    pub fn get(&self, canonical_key: &str, max_step: usize) -> CacheLookup<PeIntermediates> {
        let path = self.path(&self.key(canonical_key, max_step));
        let bytes = match binfile::read(&path, MAGIC, FORMAT_VERSION) {
            Ok(b) => b,
            Err(BinFileError::NotFound(_)) => return CacheLookup::Miss,
            Err(e) => return CacheLookup::Corrupt(format!("{}: {e}", path.display())),
        };
        match PeIntermediates::from_bytes(&bytes) {
            Ok(p) if p.canonical_key == canonical_key && p.max_step() == max_step => CacheLookup::Hit(p),
            Ok(_) => CacheLookup::Corrupt(format!("{}: key collision", path.display())),
            Err(e) => CacheLookup::Corrupt(format!("{}: {e}", path.display())),
        }
    }

    pub fn put(&self, payload: &PeIntermediates) -> std::io::Result<()> {
        let path = self.path(&self.key(&payload.canonical_key, payload.max_step()));
        binfile::write_atomic(&path, MAGIC, FORMAT_VERSION, &payload.to_bytes())
    }

    pub fn get_or_compute(&self, g: &MolGraph, max_step: usize) -> PeIntermediates {
        match self.get(&g.canonical_key, max_step) {
            CacheLookup::Hit(p) => return p,
            CacheLookup::Miss => {}
            CacheLookup::Corrupt(msg) => log::warn!("ignoring corrupt PE cache entry {msg}"),
        }
        let p = PeIntermediates::compute(g, max_step);
        if let Err(e) = self.put(&p) {
            log::warn!("failed to write PE cache entry: {e}");
        }
        p
    }
}
