//! Binary checkpoint container.
//!
//! Layout, all multi-byte values little-endian:
//!
//! ```text
//! offset  size      content
//! 0       4         magic bytes "UMC1"
//! 4       4         u32 header length H
//! 8       H         UTF-8 JSON header
//! 8+H     8*total   f64 array data, entries in header order, row-major
//! ```
//!
//! The JSON header carries `format_version`, `seed`, `episode`, and an
//! `entries` list of `{name, shape}` in the exact order the data section is
//! laid out. Round-tripping a store through a file reproduces every f64
//! bit-for-bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::array::RealArray;
use super::store::ParameterStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"UMC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub seed: u64,
    pub episode: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    seed: u64,
    episode: u64,
    entries: Vec<EntryDesc>,
}

#[derive(Serialize, Deserialize)]
struct EntryDesc {
    name: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(path: &Path, store: &ParameterStore, meta: &CheckpointMeta) -> Result<()> {
    let header = Header {
        format_version: meta.format_version,
        seed: meta.seed,
        episode: meta.episode,
        entries: store
            .iter()
            .map(|(name, arr)| EntryDesc {
                name: name.clone(),
                shape: arr.shape().to_vec(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::checkpoint(format!("header serialization failed: {e}")))?;

    let mut buf = Vec::with_capacity(8 + header_json.len() + 8 * store.coordinate_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for (_, arr) in store.iter() {
        for &v in arr.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParameterStore, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(Error::checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + hlen {
        return Err(Error::checkpoint(format!("{} is truncated", path.display())));
    }
    let header: Header = serde_json::from_slice(&bytes[8..8 + hlen])
        .map_err(|e| Error::checkpoint(format!("bad header in {}: {e}", path.display())))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported format version {} (expected {})",
            header.format_version, CHECKPOINT_VERSION
        )));
    }

    let mut store = ParameterStore::new();
    let mut off = 8 + hlen;
    for entry in &header.entries {
        let n: usize = entry.shape.iter().product();
        let end = off + 8 * n;
        if bytes.len() < end {
            return Err(Error::checkpoint(format!(
                "{} is truncated in entry {}",
                path.display(),
                entry.name
            )));
        }
        let data: Vec<f64> = bytes[off..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(entry.name.clone(), RealArray::new(entry.shape.clone(), data)?)?;
        off = end;
    }
    if off != bytes.len() {
        return Err(Error::checkpoint(format!(
            "{} has {} trailing bytes",
            path.display(),
            bytes.len() - off
        )));
    }
    let meta = CheckpointMeta {
        format_version: header.format_version,
        seed: header.seed,
        episode: header.episode,
    };
    Ok((store, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_store(seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterStore::new();
        // Include awkward values: subnormals, negative zero, huge exponents.
        let mut data: Vec<f64> = (0..64).map(|_| rng.gen_range(-1e3..1e3)).collect();
        data[0] = -0.0;
        data[1] = f64::MIN_POSITIVE / 2.0;
        data[2] = 1e300;
        s.insert("layer.w".into(), RealArray::new(vec![8, 8], data).unwrap())
            .unwrap();
        s.insert("layer.b".into(), RealArray::vector(vec![0.25; 8])).unwrap();
        s
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let store = random_store(5);
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_VERSION,
            seed: 42,
            episode: 17,
        };
        save_checkpoint(&path, &store, &meta).unwrap();
        let (loaded, got_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(got_meta, meta);
        for (name, arr) in store.iter() {
            let larr = loaded.get(name).unwrap();
            assert_eq!(larr.shape(), arr.shape());
            for (a, b) in arr.data().iter().zip(larr.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name} not bit-exact");
            }
        }
    }

    #[test]
    fn bad_magic_and_truncation_are_checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));

        let good = dir.path().join("good.ckpt");
        let store = random_store(1);
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_VERSION,
            seed: 0,
            episode: 0,
        };
        save_checkpoint(&good, &store, &meta).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_checkpoint(&cut), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.ckpt");
        let store = random_store(2);
        let meta = CheckpointMeta {
            format_version: 9,
            seed: 0,
            episode: 0,
        };
        save_checkpoint(&path, &store, &meta).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
