use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::yolo::parse_yolo_file;
use super::{CLASS_DIRS, Label, Sample, Split};
use crate::error::{Error, Result};
use crate::exec::mix_seed;

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];
const HEADER: &str = "# leafcnn manifest";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.80, val: 0.15, test: 0.05 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("split ratios {parts:?} must be in [0, 1] and sum to 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` counts for `n` samples: val and test are floored
    /// and train takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon keeps exact products such as 0.15 * 100 from flooring to 14
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let (val, test) = (floor(self.val), floor(self.test));
        (n - val - test, val, test)
    }
}

/// Samples with their split assignment plus the parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

/// Per-class sample counts for each split, indexed `[label][split]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SplitCounts(pub [[usize; 3]; 2]);

impl SplitCounts {
    pub fn get(&self, label: Label, split: Split) -> usize {
        match split {
            Split::Unassigned => 0,
            s => self.0[label.index()][s as usize],
        }
    }

    pub fn total(&self, split: Split) -> usize {
        Label::ALL.iter().map(|&l| self.get(l, split)).sum()
    }
}

impl fmt::Display for SplitCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>7}{:>7}{:>7}", "class", "train", "val", "test")?;
        for l in Label::ALL {
            writeln!(
                f,
                "{:<10}{:>7}{:>7}{:>7}",
                l,
                self.get(l, Split::Train),
                self.get(l, Split::Val),
                self.get(l, Split::Test)
            )?;
        }
        write!(
            f,
            "{:<10}{:>7}{:>7}{:>7}",
            "total",
            self.total(Split::Train),
            self.total(Split::Val),
            self.total(Split::Test)
        )
    }
}

impl DatasetManifest {
    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for s in &self.samples {
            if s.split != Split::Unassigned {
                c.0[s.label.index()][s.split as usize] += 1;
            }
        }
        c
    }

    pub fn split(&self, split: Split) -> Vec<Sample> {
        self.samples.iter().filter(|s| s.split == split).cloned().collect()
    }

    /// `path<TAB>label<TAB>split` lines after a comment header holding the
    /// seed and ratios.
    pub fn to_text(&self) -> Result<String> {
        let r = &self.ratios;
        let mut out = format!("{HEADER} seed={} ratios={},{},{}\n", self.seed, r.train, r.val, r.test);
        for s in &self.samples {
            let path =
                s.path.to_str().ok_or_else(|| Error::Data(format!("{} is not valid UTF-8", s.path.display())))?;
            if path.contains(['\t', '\n', '\r']) {
                return Err(Error::Data(format!("path {path:?} contains a tab or newline")));
            }
            writeln!(out, "{path}\t{}\t{}", s.label, s.split).expect("writing to a String");
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seed = 0;
        let mut ratios = SplitRatios::default();
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(meta) = line.strip_prefix(HEADER) {
                (seed, ratios) = parse_header(meta)
                    .ok_or_else(|| Error::Parse { line: line_no, message: "malformed manifest header".into() })?;
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, label, split] = fields[..] else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected path, label and split separated by tabs, found {} fields", fields.len()),
                });
            };
            let wrap = |e: Error| Error::Parse { line: line_no, message: e.to_string() };
            samples.push(Sample {
                path: PathBuf::from(path),
                label: label.parse().map_err(wrap)?,
                boxes: Vec::new(),
                split: split.parse().map_err(wrap)?,
            });
        }
        Ok(Self { samples, seed, ratios })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_header(meta: &str) -> Option<(u64, SplitRatios)> {
    let mut seed = None;
    let mut ratios = None;
    for kv in meta.split_whitespace() {
        match kv.split_once('=')? {
            ("seed", v) => seed = v.parse().ok(),
            ("ratios", v) => {
                let r: Vec<f64> = v.split(',').map(str::parse).collect::<Result<_, _>>().ok()?;
                let [train, val, test] = r[..] else { return None };
                ratios = Some(SplitRatios { train, val, test });
            }
            _ => return None,
        }
    }
    Some((seed?, ratios?))
}

/// Stratified split: each class is shuffled with its own seeded stream and cut
/// into contiguous train, val and test runs. Sample order is preserved.
pub fn split_dataset(mut samples: Vec<Sample>, ratios: SplitRatios, seed: u64) -> Result<DatasetManifest> {
    ratios.validate()?;
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == label).collect();
        if members.is_empty() {
            return Err(Error::Data(format!("empty class: no {label} samples")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[label.index() as u64]));
        members.shuffle(&mut rng);
        let (train, val, _) = ratios.counts(members.len());
        for (rank, &i) in members.iter().enumerate() {
            samples[i].split = if rank < train {
                Split::Train
            } else if rank < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(DatasetManifest { samples, seed, ratios })
}

/// Lists `<root>/Healthy` and `<root>/Diseased` images in name order, reading
/// sibling `.txt` YOLO labels when present.
pub fn scan_dataset(root: &Path) -> Result<Vec<Sample>> {
    if !root.is_dir() {
        return Err(Error::Data(format!("dataset directory {} does not exist", root.display())));
    }
    let mut samples = Vec::new();
    for (label, dir) in Label::ALL.into_iter().zip(CLASS_DIRS) {
        let class_dir = root.join(dir);
        if !class_dir.is_dir() {
            return Err(Error::Data(format!("empty class: missing {} folder", class_dir.display())));
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&class_dir)
            .map_err(|e| Error::io(&class_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        if paths.is_empty() {
            return Err(Error::Data(format!("empty class: {} holds no images", class_dir.display())));
        }
        paths.sort();
        for path in paths {
            let label_file = path.with_extension("txt");
            let boxes = if label_file.is_file() { parse_yolo_file(&label_file)? } else { Vec::new() };
            samples.push(Sample { path, label, boxes, split: Split::Unassigned });
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(healthy: usize, diseased: usize) -> Vec<Sample> {
        let mut v: Vec<Sample> =
            (0..healthy).map(|i| Sample::new(format!("Healthy/{i:04}.jpg"), Label::Healthy)).collect();
        v.extend((0..diseased).map(|i| Sample::new(format!("Diseased/{i:04}.jpg"), Label::Diseased)));
        v
    }

    #[test]
    fn rounding_rule() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(100), (80, 15, 5));
        assert_eq!(r.counts(482), (386, 72, 24));
        assert_eq!(r.counts(546), (438, 81, 27));
        assert_eq!(r.counts(1), (1, 0, 0));
        assert_eq!(r.counts(20), (16, 3, 1));
    }

    #[test]
    fn golden_1028() {
        let m = split_dataset(fake(482, 546), SplitRatios::default(), 42).unwrap();
        let c = m.counts();
        assert_eq!(c.0, [[386, 72, 24], [438, 81, 27]]);
        assert_eq!((c.total(Split::Train), c.total(Split::Val), c.total(Split::Test)), (824, 153, 51));
    }

    #[test]
    fn single_class_missing_is_error() {
        let err = split_dataset(fake(10, 0), SplitRatios::default(), 1).unwrap_err();
        assert!(err.to_string().contains("empty class"));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = split_dataset(fake(50, 50), SplitRatios::default(), 7).unwrap();
        let b = split_dataset(fake(50, 50), SplitRatios::default(), 7).unwrap();
        let c = split_dataset(fake(50, 50), SplitRatios::default(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
        assert_eq!(a.counts(), c.counts());
    }

    #[test]
    fn manifest_text_roundtrip() {
        let mut m = split_dataset(fake(5, 6), SplitRatios::default(), 3).unwrap();
        let text = m.to_text().unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("Healthy/0000.jpg\tHealthy\t"));
        let back = DatasetManifest::from_text(&text).unwrap();
        assert_eq!(back, m);
        m.samples[0].path = PathBuf::from("bad\tname.jpg");
        assert!(m.to_text().is_err());
    }

    #[test]
    fn manifest_parse_errors() {
        match DatasetManifest::from_text("a.jpg\tHealthy\ttrain\nb.jpg\tSick\ttrain\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(DatasetManifest::from_text("a.jpg Healthy train\n").is_err());
    }

    #[test]
    fn scan_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("Healthy")).unwrap();
        fs::create_dir_all(root.join("Diseased")).unwrap();
        for name in ["b.jpg", "a.PNG", "notes.md"] {
            fs::write(root.join("Healthy").join(name), b"x").unwrap();
        }
        fs::write(root.join("Healthy/a.txt"), "0 0.5 0.5 1 1\n").unwrap();
        let err = scan_dataset(root).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains("empty class")), "{err}");

        fs::write(root.join("Diseased/c.jpeg"), b"x").unwrap();
        let s = scan_dataset(root).unwrap();
        let names: Vec<_> = s.iter().map(|s| s.path.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["a.PNG", "b.jpg", "c.jpeg"]);
        assert_eq!(s[0].boxes.len(), 1);
        assert_eq!(s[2].label, Label::Diseased);
        assert!(scan_dataset(&root.join("missing")).is_err());
    }
}
