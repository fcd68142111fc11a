use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;
use crate::binfile::{self, BinFileError, Reader, Writer};
use crate::featurize::{featurize, FeatureConfig, FeaturizedGraph};
use crate::molparse::MolGraph;
use crate::posenc::{laplacian_pe, rwse, CacheLookup, PeConfig};

const MAGIC: &[u8; 8] = b"GMXMOL\0\x01";
const FORMAT_VERSION: u32 = 1;

/// Everything that determines a molecule's tensors. Its serialized form is
/// hashed into cache keys, so bumping `pe.version` or changing any feature
/// invalidates old entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturizeSettings {
    pub features: FeatureConfig,
    pub pe: PeConfig,
}

impl FeaturizeSettings {
    pub fn validate(&self) -> Result<(), DataError> {
        self.features.validate()?;
        self.pe.validate()?;
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("settings serialize")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Features plus positional encodings of a graph in canonical atom order.
pub fn featurize_one(g: &MolGraph, settings: &FeaturizeSettings) -> Result<FeaturizedGraph, DataError> {
    let lap = laplacian_pe(g, settings.pe.lap_k)?;
    let rw = rwse(g, &settings.pe.rwse_steps)?;
    Ok(featurize(g, &settings.features)?.with_pe(&lap, &rw))
}

pub fn graph_to_bytes(g: &FeaturizedGraph) -> Vec<u8> {
    let mut w = Writer::new();
    w.usizes(&[g.num_atoms, g.d_node, g.d_edge, g.lap_k, g.rwse_dim]);
    w.f64s(&g.node_features);
    w.f64s(&g.edge_features);
    let flat: Vec<usize> = g.edge_index.iter().flat_map(|&(s, t)| [s, t]).collect();
    w.usizes(&flat);
    w.u64(g.descriptors.len() as u64);
    for (name, v) in &g.descriptors {
        w.str(name);
        w.f64(*v);
    }
    w.f64s(&g.lap_vecs);
    w.f64s(&g.lap_vals);
    w.f64s(&g.rwse);
    w.into_bytes()
}

pub fn graph_from_bytes(bytes: &[u8]) -> Result<FeaturizedGraph, BinFileError> {
    let mut r = Reader::new(bytes);
    let dims = r.usizes()?;
    let [num_atoms, d_node, d_edge, lap_k, rwse_dim] = dims[..] else {
        return Err(BinFileError::Payload("bad graph header".into()));
    };
    let node_features = r.f64s()?;
    let edge_features = r.f64s()?;
    let flat = r.usizes()?;
    let edge_index = flat.chunks(2).map(|c| (c[0], c[1])).collect();
    let n_desc = r.u64()? as usize;
    let mut descriptors = Vec::with_capacity(n_desc.min(64));
    for _ in 0..n_desc {
        let name = r.str()?;
        descriptors.push((name, r.f64()?));
    }
    let g = FeaturizedGraph {
        num_atoms,
        d_node,
        d_edge,
        node_features,
        edge_features,
        edge_index,
        descriptors,
        lap_vecs: r.f64s()?,
        lap_vals: r.f64s()?,
        lap_k,
        rwse: r.f64s()?,
        rwse_dim,
    };
    r.finish()?;
    if g.node_features.len() != num_atoms * d_node
        || g.edge_features.len() != g.edge_index.len() * d_edge
        || flat.len() % 2 != 0
        || g.lap_vecs.len() != num_atoms * lap_k
        || g.rwse.len() != num_atoms * rwse_dim
    {
        return Err(BinFileError::Payload("inconsistent graph dimensions".into()));
    }
    Ok(g)
}

/// One file per molecule at `<dir>/<2-hex prefix>/<key hash>.bin`, where
/// the key hash covers the canonical key and the settings fingerprint.
#[derive(Debug, Clone)]
pub struct MolCache {
    dir: PathBuf,
    fingerprint: String,
}

impl MolCache {
    pub fn new(dir: impl Into<PathBuf>, settings: &FeaturizeSettings) -> Self {
        MolCache {
            dir: dir.into(),
            fingerprint: settings.fingerprint(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key_hash(&self, canonical_key: &str) -> String {
        let mut h = Sha256::new();
        h.update(canonical_key.as_bytes());
        h.update([0]);
        h.update(self.fingerprint.as_bytes());
        hex(&h.finalize())
    }

    pub fn path(&self, canonical_key: &str) -> PathBuf {
        let k = self.key_hash(canonical_key);
        self.dir.join(&k[..2]).join(format!("{k}.bin"))
    }

    pub fn get(&self, canonical_key: &str) -> CacheLookup<FeaturizedGraph> {
        let bytes = match binfile::read(&self.path(canonical_key), MAGIC, FORMAT_VERSION) {
            Ok(b) => b,
            Err(BinFileError::NotFound(_)) => return CacheLookup::Miss,
            Err(e) => return CacheLookup::Corrupt(e.to_string()),
        };
        let mut r = Reader::new(&bytes);
        let stored = match r.str() {
            Ok(s) => s,
            Err(e) => return CacheLookup::Corrupt(e.to_string()),
        };
        if stored != canonical_key {
            return CacheLookup::Corrupt(format!("entry belongs to `{stored}`"));
        }
        match graph_from_bytes(&bytes[bytes.len() - r.remaining()..]) {
            Ok(g) => CacheLookup::Hit(g),
            Err(e) => CacheLookup::Corrupt(e.to_string()),
        }
    }

    pub fn put(&self, canonical_key: &str, g: &FeaturizedGraph) -> Result<(), DataError> {
        let mut w = Writer::new();
        w.str(canonical_key);
        let mut payload = w.into_bytes();
        payload.extend(graph_to_bytes(g));
        let path = self.path(canonical_key);
        binfile::write_atomic(&path, MAGIC, FORMAT_VERSION, &payload)
            .map_err(|e| DataError::Io(path.display().to_string(), e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeaturizeStats {
    pub computed: usize,
    pub hits: usize,
    /// Corrupt entries that were recomputed and overwritten.
    pub corrupt: usize,
}

/// Featurizes `(canonical_key, graph)` pairs on a pool of `workers` threads,
/// `batch_size` molecules per work unit. Output order follows the input.
pub fn featurize_all(
    graphs: &[(&str, &MolGraph)],
    settings: &FeaturizeSettings,
    cache: Option<&MolCache>,
    workers: usize,
    batch_size: usize,
) -> Result<(Vec<FeaturizedGraph>, FeaturizeStats), DataError> {
    settings.validate()?;
    if workers == 0 || batch_size == 0 {
        return Err(DataError::Schema("workers and batch size must be positive".into()));
    }
    let computed = AtomicUsize::new(0);
    let hits = AtomicUsize::new(0);
    let corrupt = AtomicUsize::new(0);
    let one = |&(key, g): &(&str, &MolGraph)| -> Result<FeaturizedGraph, DataError> {
        if let Some(c) = cache {
            match c.get(key) {
                CacheLookup::Hit(f) => {
                    hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(f);
                }
                CacheLookup::Corrupt(why) => {
                    log::warn!("recomputing corrupt cache entry for {key}: {why}");
                    corrupt.fetch_add(1, Ordering::Relaxed);
                }
                CacheLookup::Miss => {}
            }
        }
        let f = featurize_one(g, settings)?;
        computed.fetch_add(1, Ordering::Relaxed);
        if let Some(c) = cache {
            c.put(key, &f)?;
        }
        Ok(f)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| DataError::Pool(e.to_string()))?;
    let chunks: Vec<Vec<FeaturizedGraph>> = pool.install(|| {
        graphs
            .par_chunks(batch_size)
            .map(|chunk| chunk.iter().map(one).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()
    })?;
    let stats = FeaturizeStats {
        computed: computed.into_inner(),
        hits: hits.into_inner(),
        corrupt: corrupt.into_inner(),
    };
    Ok((chunks.into_iter().flatten().collect(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molparse::parse_smiles;

    fn mols() -> Vec<MolGraph> {
        ["CCO", "c1ccccc1O", "CC(=O)N", "C1CC1C(F)(F)F", "N#CC"]
            .iter()
            .map(|s| parse_smiles(s).unwrap().canonicalized())
            .collect()
    }

    fn pairs(ms: &[MolGraph]) -> Vec<(&str, &MolGraph)> {
        ms.iter().map(|g| (g.canonical_key.as_str(), g)).collect()
    }

    #[test]
    fn graph_bytes_round_trip() {
        let g = featurize_one(&mols()[1], &FeaturizeSettings::default()).unwrap();
        assert_eq!(graph_from_bytes(&graph_to_bytes(&g)).unwrap(), g);
    }

    #[test]
    fn warm_cache_skips_featurization() {
        let dir = tempfile::tempdir().unwrap();
        let s = FeaturizeSettings::default();
        let cache = MolCache::new(dir.path(), &s);
        let ms = mols();
        let (cold, st) = featurize_all(&pairs(&ms), &s, Some(&cache), 1, 2).unwrap();
        assert_eq!((st.computed, st.hits), (5, 0));
        let (warm, st) = featurize_all(&pairs(&ms), &s, Some(&cache), 1, 2).unwrap();
        assert_eq!((st.computed, st.hits), (0, 5));
        assert_eq!(cold, warm);
        let mut bumped = s.clone();
        bumped.pe.version += 1;
        let (_, st) = featurize_all(&pairs(&ms), &bumped, Some(&MolCache::new(dir.path(), &bumped)), 1, 2).unwrap();
        assert_eq!(st.computed, 5);
    }

    #[test]
    fn corrupt_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let s = FeaturizeSettings::default();
        let cache = MolCache::new(dir.path(), &s);
        let ms = mols();
        let (cold, _) = featurize_all(&pairs(&ms), &s, Some(&cache), 1, 10).unwrap();
        let path = cache.path(&ms[2].canonical_key);
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        let (again, st) = featurize_all(&pairs(&ms), &s, Some(&cache), 1, 10).unwrap();
        assert_eq!((st.corrupt, st.computed, st.hits), (1, 1, 4));
        assert_eq!(again, cold);
        assert!(matches!(cache.get(&ms[2].canonical_key), CacheLookup::Hit(_)));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let s = FeaturizeSettings::default();
        let ms = mols();
        let (a, _) = featurize_all(&pairs(&ms), &s, None, 1, 1000).unwrap();
        let (b, _) = featurize_all(&pairs(&ms), &s, None, 4, 1).unwrap();
        assert_eq!(a, b);
    }
}
