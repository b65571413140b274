//! Generated two-pattern leaf images for tests and demos.
//!
//! Each image is low-contrast noise with one soft blob. Healthy images put the
//! blob in the top-left quadrant, diseased ones in the bottom-right.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::InMemoryDataset;
use super::image::tensor_to_rgb;
use super::yolo::{BoundingBox, format_yolo_line};
use super::{CLASS_DIRS, Label};
use crate::error::{Error, Result};
use crate::exec::mix_seed;
use crate::tensor::Tensor;

/// One `[size, size, 3]` image in `[0, 1]` and the blob's bounding box.
pub fn quadrant_blob(label: Label, size: usize, seed: u64) -> (Tensor<f32>, BoundingBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[label.index() as u64]));
    let s = size as f64;
    let quadrant = match label {
        Label::Healthy => (0.25, 0.25),
        Label::Diseased => (0.75, 0.75),
    };
    let cx = (quadrant.0 + rng.random_range(-0.08..0.08)) * s;
    let cy = (quadrant.1 + rng.random_range(-0.08..0.08)) * s;
    let radius = rng.random_range(0.08..0.14) * s;
    let color = [rng.random_range(0.55..0.85), rng.random_range(0.6..0.95), rng.random_range(0.1..0.35)];

    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let d2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (radius * radius);
            let weight = (-d2).exp();
            for c in color {
                let bg = rng.random_range(0.15..0.35);
                data.push((bg * (1.0 - weight) + c * weight) as f32);
            }
        }
    }
    let r = 2.0 * radius / s;
    let bbox = BoundingBox {
        class_id: label.index() as u32,
        cx: (cx / s).clamp(0.0, 1.0),
        cy: (cy / s).clamp(0.0, 1.0),
        w: (2.0 * r).min(1.0),
        h: (2.0 * r).min(1.0),
    };
    (Tensor::new([size, size, 3], data).expect("size matches"), bbox)
}

/// `per_class` images of each class, alternating Healthy and Diseased.
pub fn quadrant_dataset(per_class: usize, size: usize, seed: u64) -> InMemoryDataset {
    let mut images = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        for label in Label::ALL {
            images.push(quadrant_blob(label, size, mix_seed(seed, &[i as u64])).0);
            labels.push(label);
        }
    }
    InMemoryDataset::new(images, labels).expect("generated images share a shape")
}

/// Writes `<root>/Healthy/hNNN.png` and `<root>/Diseased/dNNN.png` with
/// sibling YOLO label files. Returns the image paths.
pub fn write_fixture(root: &Path, healthy: usize, diseased: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (label, count) in Label::ALL.into_iter().zip([healthy, diseased]) {
        let dir = root.join(CLASS_DIRS[label.index()]);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let prefix = if label == Label::Healthy { 'h' } else { 'd' };
        for i in 0..count {
            let (img, bbox) = quadrant_blob(label, size, mix_seed(seed, &[i as u64]));
            let path = dir.join(format!("{prefix}{i:03}.png"));
            tensor_to_rgb(&img)?
                .save(&path)
                .map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
            let txt = path.with_extension("txt");
            fs::write(&txt, format!("{}\n", format_yolo_line(&bbox))).map_err(|e| Error::io(&txt, e))?;
            paths.push(path);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split::scan_dataset;

    fn quadrant_mean(t: &Tensor<f32>, top_left: bool) -> f32 {
        let n = t.shape()[0];
        let range = if top_left { 0..n / 2 } else { n / 2..n };
        let mut sum = 0.0;
        for y in range.clone() {
            for x in range.clone() {
                sum += t.get(&[y, x, 1]);
            }
        }
        sum / ((n / 2) * (n / 2)) as f32
    }

    #[test]
    fn blob_lands_in_class_quadrant() {
        for seed in 0..10 {
            let (h, hb) = quadrant_blob(Label::Healthy, 64, seed);
            let (d, db) = quadrant_blob(Label::Diseased, 64, seed);
            assert!(quadrant_mean(&h, true) > quadrant_mean(&h, false));
            assert!(quadrant_mean(&d, false) > quadrant_mean(&d, true));
            assert!(hb.cx < 0.5 && db.cx > 0.5);
            assert!(h.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(quadrant_blob(Label::Healthy, 32, 4).0, quadrant_blob(Label::Healthy, 32, 4).0);
        assert_ne!(quadrant_blob(Label::Healthy, 32, 4).0, quadrant_blob(Label::Healthy, 32, 5).0);
    }

    #[test]
    fn fixture_is_scannable() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path(), 3, 2, 32, 1).unwrap();
        assert_eq!(paths.len(), 5);
        let samples = scan_dataset(dir.path()).unwrap();
        assert_eq!(samples.len(), 5);
        assert!(samples.iter().all(|s| s.boxes.len() == 1));
    }
}
