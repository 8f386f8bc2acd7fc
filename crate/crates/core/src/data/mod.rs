//! Grayscale image loading, patch extraction and signal moments.

mod cache;

use std::path::{Path, PathBuf};

use image::{ColorType, ImageReader};
use rand::Rng;

pub use cache::{read_patch_cache, write_patch_cache, CacheHeader};

use crate::error::{Error, Result};
use crate::noise::ImagePatch;
use crate::par::Exec;
use crate::rng::{domain, stream};

pub const DEFAULT_PATCH_SIZE: usize = 40;

/// Default number of training patches.
pub const DEFAULT_TRAIN_PATCHES: usize = 384_000;

const EXTENSIONS: [&str; 2] = ["pgm", "png"];

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub images: Vec<ImagePatch>,
    pub paths: Vec<PathBuf>,
    /// Files that looked like images but failed to decode.
    pub skipped: Vec<PathBuf>,
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn decode(path: &Path) -> std::result::Result<image::DynamicImage, String> {
    ImageReader::open(path)
        .map_err(|e| e.to_string())?
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .decode()
        .map_err(|e| e.to_string())
}

/// Loads every `.pgm` and `.png` file of `dir` in lexicographic order,
/// mapping 8-bit values `v` to `v / 255`.
///
/// Undecodable files are skipped with a warning and listed in
/// [`ImageDataset::skipped`]. Anything other than 8-bit single-channel data is
/// an error naming the file.
pub fn load_images(dir: &Path) -> Result<ImageDataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && has_image_extension(&path) {
            files.push(path);
        }
    }
    files.sort();

    let mut ds = ImageDataset {
        images: Vec::new(),
        paths: Vec::new(),
        skipped: Vec::new(),
    };
    for path in files {
        let img = match decode(&path) {
            Ok(img) => img,
            Err(msg) => {
                log::warn!("skipping {}: {msg}", path.display());
                ds.skipped.push(path);
                continue;
            }
        };
        if img.color() != ColorType::L8 {
            return Err(Error::Image {
                path,
                message: format!("expected 8-bit grayscale, found {:?}", img.color()),
            });
        }
        let gray = img.into_luma8();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let pixels = gray.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
        ds.images.push(ImagePatch::new(w, h, pixels)?);
        ds.paths.push(path);
    }
    if ds.images.is_empty() {
        return Err(Error::NoImages(dir.to_path_buf()));
    }
    Ok(ds)
}

/// One of the 8 symmetries of the square: optional horizontal flip followed by
/// `op >> 1` quarter turns.
pub fn dihedral(patch: &ImagePatch, op: u8) -> ImagePatch {
    let n = patch.width();
    assert_eq!(n, patch.height(), "dihedral transforms need a square patch");
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            // invert the quarter turns, then the flip
            let (mut sx, mut sy) = (x, y);
            for _ in 0..(op >> 1) {
                (sx, sy) = (sy, n - 1 - sx);
            }
            if op & 1 == 1 {
                sx = n - 1 - sx;
            }
            out.push(patch.get(sx, sy));
        }
    }
    ImagePatch::new(n, n, out).expect("square patch")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<ImagePatch>,
    pub patch_size: usize,
    pub augment: bool,
}

/// Where one patch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchDraw {
    pub image: usize,
    pub x: usize,
    pub y: usize,
    pub op: u8,
}

/// Draw for patch `j`: uniform image, uniform top-left anchor, and a uniform
/// dihedral op when augmenting. Uses only integer sampling.
pub fn patch_draw(ds: &ImageDataset, patch_size: usize, augment: bool, seed: u64, keys: &[u64], j: usize) -> PatchDraw {
    let mut path = keys.to_vec();
    path.push(j as u64);
    let mut rng = stream(seed, &path);
    let image = rng.random_range(0..ds.images.len() as u64) as usize;
    let img = &ds.images[image];
    let x = rng.random_range(0..=(img.width() - patch_size) as u64) as usize;
    let y = rng.random_range(0..=(img.height() - patch_size) as u64) as usize;
    let op = if augment { rng.random_range(0..8u8) } else { 0 };
    PatchDraw { image, x, y, op }
}

/// Extracts `count` random `patch_size x patch_size` patches. Patch `j`
/// depends only on `(seed, keys, j)`.
pub fn extract_patches(
    ds: &ImageDataset,
    patch_size: usize,
    count: usize,
    augment: bool,
    seed: u64,
    keys: &[u64],
    exec: Exec,
) -> Result<PatchSet> {
    if count == 0 || patch_size == 0 {
        return Err(Error::invalid("patch count and size must be >= 1"));
    }
    if ds.images.is_empty() {
        return Err(Error::invalid("dataset has no images"));
    }
    if let Some(img) = ds
        .images
        .iter()
        .find(|i| i.width() < patch_size || i.height() < patch_size)
    {
        return Err(Error::PatchTooLarge {
            width: img.width(),
            height: img.height(),
            patch_size,
        });
    }
    let patches = exec.map(count, |j| {
        let d = patch_draw(ds, patch_size, augment, seed, keys, j);
        let img = &ds.images[d.image];
        let mut px = Vec::with_capacity(patch_size * patch_size);
        for row in d.y..d.y + patch_size {
            let start = row * img.width() + d.x;
            px.extend_from_slice(&img.pixels()[start..start + patch_size]);
        }
        let p = ImagePatch::new(patch_size, patch_size, px).expect("patch shape");
        if d.op == 0 {
            p
        } else {
            dihedral(&p, d.op)
        }
    });
    Ok(PatchSet {
        patches,
        patch_size,
        augment,
    })
}

/// Training patches under the conventional key.
pub fn training_patches(
    ds: &ImageDataset,
    patch_size: usize,
    count: usize,
    augment: bool,
    seed: u64,
    exec: Exec,
) -> Result<PatchSet> {
    extract_patches(ds, patch_size, count, augment, seed, &[domain::PATCHES], exec)
}

/// [`moments`] of the patches [`extract_patches`] would produce, without
/// materializing them.
pub fn patch_moments(
    ds: &ImageDataset,
    patch_size: usize,
    count: usize,
    seed: u64,
    keys: &[u64],
    exec: Exec,
) -> Result<(f64, f64)> {
    if count == 0
        || ds
            .images
            .iter()
            .any(|i| i.width() < patch_size || i.height() < patch_size)
    {
        return Err(Error::invalid(
            "patch moments need count >= 1 and images at least patch_size wide",
        ));
    }
    let sums = exec.map(count, |j| {
        let d = patch_draw(ds, patch_size, false, seed, keys, j);
        let img = &ds.images[d.image];
        let (mut s1, mut s2) = (0.0, 0.0);
        for row in d.y..d.y + patch_size {
            let start = row * img.width() + d.x;
            for &v in &img.pixels()[start..start + patch_size] {
                s1 += v;
                s2 += v * v;
            }
        }
        (s1, s2)
    });
    let n = (count * patch_size * patch_size) as f64;
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((s1 / n, s2 / n))
}

/// `(m1, S2)`: mean pixel and mean squared pixel over all pixels.
pub fn moments(images: &[ImagePatch]) -> (f64, f64) {
    let (mut n, mut s1, mut s2) = (0usize, 0.0, 0.0);
    for img in images {
        n += img.len();
        for &v in img.pixels() {
            s1 += v;
            s2 += v * v;
        }
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    (s1 / n as f64, s2 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    fn write_pgm(path: &Path, w: usize, h: usize, px: &[u8]) {
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        bytes.extend_from_slice(px);
        fs::write(path, bytes).unwrap();
    }

    fn dataset(images: Vec<ImagePatch>) -> ImageDataset {
        let n = images.len();
        ImageDataset {
            images,
            paths: vec![PathBuf::new(); n],
            skipped: vec![],
        }
    }

    fn ramp(w: usize, h: usize) -> ImagePatch {
        ImagePatch::new(w, h, (0..w * h).map(|i| i as f64 / (w * h) as f64).collect()).unwrap()
    }

    #[test]
    fn constant_pgm() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), 5, 3, &[128; 15]);
        let ds = load_images(dir.path()).unwrap();
        assert_eq!(ds.images.len(), 1);
        assert!(ds.images[0].pixels().iter().all(|&v| v == 128.0 / 255.0));
        assert_eq!((ds.images[0].width(), ds.images[0].height()), (5, 3));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_images(dir.path()), Err(Error::NoImages(_))));
    }

    #[test]
    fn corrupt_file_is_skipped_by_name() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("b.pgm"), 2, 2, &[0, 64, 128, 255]);
        fs::write(dir.path().join("a.png"), b"not a png").unwrap();
        fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let ds = load_images(dir.path()).unwrap();
        assert_eq!(ds.images.len(), 1);
        assert_eq!(ds.skipped, vec![dir.path().join("a.png")]);
        assert_eq!(ds.images[0].pixels(), &[0.0, 64.0 / 255.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn png_gray_loads_and_color_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let gray = dir.path().join("g.png");
        image::save_buffer(&gray, &[10, 20, 30, 40, 50, 60], 3, 2, image::ExtendedColorType::L8).unwrap();
        let ds = load_images(dir.path()).unwrap();
        assert_eq!(ds.images[0].get(2, 1), 60.0 / 255.0);

        let rgb = dir.path().join("h.png");
        image::save_buffer(&rgb, &[0; 12], 2, 2, image::ExtendedColorType::Rgb8).unwrap();
        match load_images(dir.path()) {
            Err(Error::Image { path, .. }) => assert_eq!(path, rgb),
            other => panic!("expected image error, got {other:?}"),
        }
    }

    #[test]
    fn load_order_is_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("c.pgm", 3u8), ("a.pgm", 1), ("b.pgm", 2)] {
            write_pgm(&dir.path().join(name), 1, 1, &[v]);
        }
        let ds = load_images(dir.path()).unwrap();
        let firsts: Vec<f64> = ds.images.iter().map(|i| i.pixels()[0] * 255.0).collect();
        assert_eq!(firsts, vec![1.0, 2.0, 3.0]);
        assert_eq!(load_images(dir.path()).unwrap(), ds);
    }

    #[test]
    fn whole_image_when_single_anchor() {
        let img = ramp(40, 40);
        let ds = dataset(vec![img.clone()]);
        let ps = extract_patches(&ds, 40, 1, false, 0, &[], Exec::Sequential).unwrap();
        assert_eq!(ps.patches, vec![img]);
    }

    #[test]
    fn anchors_are_uniform() {
        let ds = dataset(vec![ramp(41, 41)]);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for j in 0..n {
            let d = patch_draw(&ds, 40, false, 9, &[], j);
            counts[d.y * 2 + d.x] += 1;
        }
        let p = 0.25;
        let stderr = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * stderr, "{counts:?}");
        }
    }

    #[test]
    fn augmentations_of_constant_image_agree() {
        let p = ImagePatch::filled(6, 6, 0.3);
        for op in 0..8 {
            assert_eq!(dihedral(&p, op), p);
        }
    }

    #[test]
    fn dihedral_ops_are_distinct() {
        let p = ramp(3, 3);
        let mut seen: Vec<Vec<u64>> = (0..8)
            .map(|op| dihedral(&p, op).pixels().iter().map(|v| v.to_bits()).collect())
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn extraction_is_deterministic_across_modes() {
        let ds = dataset(vec![ramp(50, 45), ramp(60, 70)]);
        let a = extract_patches(&ds, 8, 200, true, 3, &[1], Exec::Sequential).unwrap();
        let b = extract_patches(&ds, 8, 200, true, 3, &[1], Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.patches.iter().all(|p| p.width() == 8 && p.height() == 8));
    }

    #[test]
    fn small_image_is_rejected() {
        let ds = dataset(vec![ramp(30, 50)]);
        assert!(matches!(
            extract_patches(&ds, 40, 1, false, 0, &[], Exec::Sequential),
            Err(Error::PatchTooLarge { width: 30, .. })
        ));
    }

    #[test]
    fn moment_examples() {
        assert_eq!(moments(&[ImagePatch::filled(4, 4, 0.5)]), (0.5, 0.25));
        let half = ImagePatch::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(moments(&[half]), (0.5, 0.5));
    }

    #[test]
    fn moments_match_two_pass() {
        let imgs = vec![ramp(13, 7), ramp(5, 9)];
        let all: Vec<f64> = imgs.iter().flat_map(|i| i.pixels().to_vec()).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (m1, s2) = moments(&imgs);
        assert!((m1 - mean).abs() < 1e-12);
        assert!((s2 - (var + mean * mean)).abs() < 1e-12);
    }

    #[test]
    fn streamed_moments_match_materialized() {
        let ds = dataset(vec![ramp(50, 45), ramp(60, 70)]);
        let ps = extract_patches(&ds, 8, 300, true, 3, &[1], Exec::Parallel).unwrap();
        let (m1, s2) = moments(&ps.patches);
        let (a, b) = patch_moments(&ds, 8, 300, 3, &[1], Exec::Parallel).unwrap();
        assert!((m1 - a).abs() < 1e-12 && (s2 - b).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn dihedral_preserves_histogram(op in 0u8..8, vals in proptest::collection::vec(0u8..=255, 25)) {
            let p = ImagePatch::new(5, 5, vals.iter().map(|&v| f64::from(v)).collect()).unwrap();
            let mut a: Vec<u64> = p.pixels().iter().map(|v| v.to_bits()).collect();
            let mut b: Vec<u64> = dihedral(&p, op).pixels().iter().map(|v| v.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }
}
