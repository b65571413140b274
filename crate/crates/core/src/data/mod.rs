//! Dataset ingestion: directory scan, YOLO labels, image decoding, augmentation
//! and stratified splitting.

mod augment;
mod dataset;
mod image;
mod split;
pub mod synthetic;
mod yolo;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use augment::{AugmentParams, AugmentSpec, augment, hflip, rotate, warp};
pub use dataset::{Dataset, ImageFolderDataset, InMemoryDataset};
pub use image::{crop_box, decode_image, load_image, load_rgb, resize_bilinear, rgb_to_tensor, tensor_to_rgb};
pub use split::{DatasetManifest, SplitCounts, SplitRatios, scan_dataset, split_dataset};
pub use yolo::{BoundingBox, format_yolo_line, parse_yolo_file, parse_yolo_line, union_box};

use crate::error::Error;

/// Class folders, in label-index order.
pub const CLASS_DIRS: [&str; 2] = ["Healthy", "Diseased"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Healthy,
    Diseased,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Healthy, Label::Diseased];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        CLASS_DIRS[self.index()]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown label {s:?}, expected Healthy or Diseased")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            _ => Err(Error::Data(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub path: PathBuf,
    pub label: Label,
    pub boxes: Vec<BoundingBox>,
    pub split: Split,
}

impl Sample {
    pub fn new(path: impl Into<PathBuf>, label: Label) -> Self {
        Self { path: path.into(), label, boxes: Vec::new(), split: Split::Unassigned }
    }
}
