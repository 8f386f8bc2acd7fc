//! Patch cache: `u32` little-endian header length, a JSON header, then every
//! pixel as a little-endian `f32`, patch after patch.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PatchSet;
use crate::error::{Error, Result};
use crate::noise::ImagePatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub patch_size: usize,
    pub count: usize,
    pub augment: bool,
    pub seed: u64,
}

pub fn write_patch_cache(path: &Path, set: &PatchSet, seed: u64) -> Result<()> {
    let header = CacheHeader {
        patch_size: set.patch_size,
        count: set.patches.len(),
        augment: set.augment,
        seed,
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::invalid("cache header too large"))?;
    let pixels = set.patch_size * set.patch_size * set.patches.len();
    let mut bytes = Vec::with_capacity(4 + json.len() + 4 * pixels);
    bytes.extend_from_slice(&len.to_le_bytes());
    bytes.extend_from_slice(&json);
    for p in &set.patches {
        for &v in p.pixels() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_patch_cache(path: &Path) -> Result<(CacheHeader, PatchSet)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Image {
        path: path.to_path_buf(),
        message: format!("corrupt patch cache: {msg}"),
    };
    let len_bytes: [u8; 4] = bytes.get(..4).ok_or_else(|| bad("truncated"))?.try_into().unwrap();
    let len = u32::from_le_bytes(len_bytes) as usize;
    let json = bytes.get(4..4 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CacheHeader = serde_json::from_slice(json)?;
    let area = header.patch_size * header.patch_size;
    let payload = &bytes[4 + len..];
    if payload.len() != 4 * area * header.count {
        return Err(bad("payload size does not match header"));
    }
    let patches = payload
        .chunks_exact(4 * area)
        .map(|chunk| {
            let px = chunk
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect();
            ImagePatch::new(header.patch_size, header.patch_size, px)
        })
        .collect::<Result<Vec<_>>>()?;
    let set = PatchSet {
        patches,
        patch_size: header.patch_size,
        augment: header.augment,
    };
    Ok((header, set))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let set = PatchSet {
            patches: vec![
                ImagePatch::new(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap(),
                ImagePatch::filled(2, 2, 0.75),
            ],
            patch_size: 2,
            augment: true,
        };
        write_patch_cache(&path, &set, 42).unwrap();
        let (h, back) = read_patch_cache(&path).unwrap();
        assert_eq!(h.seed, 42);
        assert_eq!(back, set);
        assert_eq!(
            fs::metadata(&path).unwrap().len() as usize,
            4 + serde_json::to_vec(&h).unwrap().len() + 32
        );
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let set = PatchSet {
            patches: vec![ImagePatch::filled(3, 3, 0.5)],
            patch_size: 3,
            augment: false,
        };
        write_patch_cache(&path, &set, 0).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(read_patch_cache(&path).is_err());
    }
}
