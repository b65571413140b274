use std::path::PathBuf;

use super::augment::{AugmentSpec, augment};
use super::image::{crop_box, load_rgb, resize_bilinear, rgb_to_tensor};
use super::yolo::{parse_yolo_file, union_box};
use super::{DatasetManifest, Label, Sample, Split};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::INPUT_SIZE;
use crate::tensor::Tensor;

/// Indexed collection of labelled `[h, w, c]` images.
pub trait Dataset: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> Label;

    fn item_shape(&self) -> [usize; 3];

    /// Image `index`. With `augment_seed` set, training augmentation is drawn
    /// from `(augment_seed, index)`.
    fn item(&self, index: usize, augment_seed: Option<u64>) -> Result<Tensor<f32>>;

    /// Stacks the given items into `[n, h, w, c]`, loading them in parallel.
    fn batch(&self, indices: &[usize], augment_seed: Option<u64>, exec: Execution) -> Result<Tensor<f32>> {
        let items = exec.map(indices.len(), |k| self.item(indices[k], augment_seed));
        Tensor::stack(&items.into_iter().collect::<Result<Vec<_>>>()?)
    }
}

/// Images already decoded into memory.
#[derive(Clone, Debug)]
pub struct InMemoryDataset {
    images: Vec<Tensor<f32>>,
    labels: Vec<Label>,
    augment: Option<AugmentSpec>,
}

impl InMemoryDataset {
    pub fn new(images: Vec<Tensor<f32>>, labels: Vec<Label>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Data(format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some(first) = images.first()
            && (first.rank() != 3 || images.iter().any(|t| t.shape() != first.shape()))
        {
            return Err(Error::Dimension("images must share one [h, w, c] shape".into()));
        }
        Ok(Self { images, labels, augment: None })
    }

    pub fn with_augment(mut self, spec: AugmentSpec) -> Result<Self> {
        spec.validate()?;
        self.augment = Some(spec);
        Ok(self)
    }

    pub fn images(&self) -> &[Tensor<f32>] {
        &self.images
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Subset in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            augment: self.augment,
        }
    }
}

impl Dataset for InMemoryDataset {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, index: usize) -> Label {
        self.labels[index]
    }

    fn item_shape(&self) -> [usize; 3] {
        match self.images.first().map(Tensor::shape) {
            Some(&[h, w, c]) => [h, w, c],
            _ => [INPUT_SIZE, INPUT_SIZE, 3],
        }
    }

    fn item(&self, index: usize, augment_seed: Option<u64>) -> Result<Tensor<f32>> {
        let img = &self.images[index];
        match (self.augment, augment_seed) {
            (Some(spec), Some(seed)) => augment(img, &spec, seed, index as u64),
            _ => Ok(img.clone()),
        }
    }
}

/// Images read from disk on demand, resized to a square input.
#[derive(Clone, Debug)]
pub struct ImageFolderDataset {
    samples: Vec<Sample>,
    spec: AugmentSpec,
    augment: bool,
    crop_boxes: bool,
    size: usize,
}

impl ImageFolderDataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples, spec: AugmentSpec::identity(), augment: false, crop_boxes: false, size: INPUT_SIZE }
    }

    /// Samples of one split. Manifest paths are resolved against `base` when relative.
    pub fn from_manifest(manifest: &DatasetManifest, split: Split, base: Option<&std::path::Path>) -> Self {
        let samples = manifest
            .split(split)
            .into_iter()
            .map(|mut s| {
                if let Some(base) = base.filter(|_| s.path.is_relative()) {
                    s.path = base.join(&s.path);
                }
                s
            })
            .collect();
        Self::new(samples)
    }

    /// Pixel scaling comes from `spec.rescale`; geometry is only applied
    /// when `augment` is set.
    pub fn with_spec(mut self, spec: AugmentSpec, augment: bool) -> Result<Self> {
        spec.validate()?;
        self.spec = spec;
        self.augment = augment;
        Ok(self)
    }

    /// Crop each image to the union of its YOLO boxes before resizing.
    pub fn with_crop_boxes(mut self, crop: bool) -> Self {
        self.crop_boxes = crop;
        self
    }

    pub fn with_size(mut self, size: usize) -> Self {
        self.size = size;
        self
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn path(&self, index: usize) -> &PathBuf {
        &self.samples[index].path
    }
}

impl Dataset for ImageFolderDataset {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn label(&self, index: usize) -> Label {
        self.samples[index].label
    }

    fn item_shape(&self) -> [usize; 3] {
        [self.size, self.size, 3]
    }

    fn item(&self, index: usize, augment_seed: Option<u64>) -> Result<Tensor<f32>> {
        let sample = &self.samples[index];
        let mut img = load_rgb(&sample.path)?;
        if self.crop_boxes {
            let boxes = if sample.boxes.is_empty() {
                let txt = sample.path.with_extension("txt");
                if txt.is_file() { parse_yolo_file(&txt)? } else { Vec::new() }
            } else {
                sample.boxes.clone()
            };
            if let Some(corners) = union_box(&boxes) {
                img = crop_box(&img, corners);
            }
        }
        let x = resize_bilinear(&rgb_to_tensor(&img, self.spec.rescale as f32), self.size, self.size)?;
        match augment_seed {
            Some(seed) if self.augment => augment(&x, &self.spec, seed, index as u64),
            _ => Ok(x),
        }
    }
}
