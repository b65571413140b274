use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One YOLO box: class id plus center and size, all normalized to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// `(x0, y0, x1, y1)` in normalized coordinates, clipped to the image.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            (self.cx - self.w / 2.0).max(0.0),
            (self.cy - self.h / 2.0).max(0.0),
            (self.cx + self.w / 2.0).min(1.0),
            (self.cy + self.h / 2.0).min(1.0),
        )
    }
}

/// Parses `class cx cy w h`. `line_no` is only used for error messages.
pub fn parse_yolo_line(line: &str, line_no: usize) -> Result<BoundingBox> {
    let err = |message: String| Error::Parse { line: line_no, message };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    let class_id =
        fields[0].parse::<u32>().map_err(|_| err(format!("class id {:?} is not a non-negative integer", fields[0])))?;
    let mut v = [0.0f64; 4];
    for (slot, (name, text)) in v.iter_mut().zip(["cx", "cy", "w", "h"].iter().zip(&fields[1..])) {
        let x: f64 = text.parse().map_err(|_| err(format!("{name} {text:?} is not a number")))?;
        if !(0.0..=1.0).contains(&x) {
            return Err(err(format!("{name} = {x} is outside [0, 1]")));
        }
        *slot = x;
    }
    Ok(BoundingBox { class_id, cx: v[0], cy: v[1], w: v[2], h: v[3] })
}

pub fn format_yolo_line(b: &BoundingBox) -> String {
    format!("{} {} {} {} {}", b.class_id, b.cx, b.cy, b.w, b.h)
}

/// Parses a label file; blank lines are skipped. Line numbers start at 1.
pub fn parse_yolo_file(path: &Path) -> Result<Vec<BoundingBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_yolo_line(l, i + 1).map_err(|e| match e {
                Error::Parse { line, message } => {
                    Error::Parse { line, message: format!("{}: {message}", path.display()) }
                }
                other => other,
            })
        })
        .collect()
}

/// Smallest box covering all `boxes`, as normalized corners.
pub fn union_box(boxes: &[BoundingBox]) -> Option<(f64, f64, f64, f64)> {
    boxes.iter().map(BoundingBox::corners).reduce(|a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)))
}
