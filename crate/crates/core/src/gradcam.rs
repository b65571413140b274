//! Grad-CAM class activation maps.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::data::{resize_bilinear, tensor_to_rgb};
use crate::error::{Error, Result};
use crate::layers::{LayerSpec, Mode};
use crate::model::Model;
use crate::tensor::Tensor;

/// Weight of the heatmap colour when blending onto the image.
pub const OVERLAY_ALPHA: f32 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// `[h, w]` at the model's input resolution, values in `[0, 1]`.
    pub values: Tensor<f32>,
    /// Conv layer whose (rectified) feature maps were used.
    pub source_layer: usize,
    pub target_class: usize,
}

impl Heatmap {
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Grad-CAM for one `[h, w, c]` image.
///
/// The class score is the target logit (before softmax). Feature maps come
/// from `source_layer`, which must be a conv layer, taken after its ReLU when
/// one follows; `None` picks the last conv layer.
pub fn grad_cam(
    model: &Model<f32>,
    image: &Tensor<f32>,
    target: usize,
    source_layer: Option<usize>,
) -> Result<Heatmap> {
    if target >= model.classes() {
        return Err(Error::Parameter(format!("class {target} is out of range for {} classes", model.classes())));
    }
    let convs = model.config().conv_layers();
    let source = match source_layer {
        Some(i) if convs.contains(&i) => i,
        Some(i) => return Err(Error::Parameter(format!("layer {i} is not a conv layer"))),
        None => *convs.last().ok_or_else(|| Error::Parameter("model has no conv layer".into()))?,
    };
    let tap = match model.config().layers.get(source + 1) {
        Some(LayerSpec::Relu) => source + 1,
        _ => source,
    };
    let [h, w, c] = model.config().input;
    if image.shape() != [h, w, c] {
        return Err(Error::Dimension(format!("expected a [{h}, {w}, {c}] image, got {:?}", image.shape())));
    }

    let mut scratch = model.clone();
    let x = image.reshape([1, h, w, c])?;
    let (logits, act) = scratch.forward_tapped(&x, Mode::Infer, Some(tap))?;
    let act = act.expect("tap index is below the logit layer");
    let mut seed = Tensor::zeros(logits.shape());
    seed.set(&[0, target], 1.0);
    let grad = scratch.backward_until(&seed, Some(tap))?;

    let &[_, fh, fw, k] = act.shape() else { unreachable!("conv activations are 4-d") };
    let cells = fh * fw;
    let mut alpha = vec![0.0f64; k];
    for px in grad.data().chunks(k) {
        alpha.iter_mut().zip(px).for_each(|(a, &g)| *a += f64::from(g));
    }
    alpha.iter_mut().for_each(|a| *a /= cells as f64);

    let raw: Vec<f32> = act
        .data()
        .chunks(k)
        .map(|px| px.iter().zip(&alpha).map(|(&a, &al)| f64::from(a) * al).sum::<f64>().max(0.0) as f32)
        .collect();
    let up = resize_bilinear(&Tensor::new([fh, fw, 1], raw)?, h, w)?;
    Ok(Heatmap { values: normalize(up.into_reshape([h, w])?), source_layer: source, target_class: target })
}

/// Min-max scaling to `[0, 1]`. An all-zero map stays zero; any other
/// constant map becomes all ones.
fn normalize(mut t: Tensor<f32>) -> Tensor<f32> {
    let (lo, hi) = t.data().iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= 0.0 {
        t.data_mut().fill(0.0);
    } else if hi == lo {
        t.data_mut().fill(1.0);
    } else {
        let span = hi - lo;
        t.data_mut().iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
    }
    t
}

/// Portable float map: `Pf` header, then little-endian rows from bottom to top.
pub fn heatmap_to_pfm(map: &Heatmap) -> Vec<u8> {
    let (h, w) = (map.height(), map.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for row in map.values.data().chunks(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Blue-to-red ramp for a value in `[0, 1]`.
fn heat_color(v: f32) -> [f32; 3] {
    let v = v.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * v - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * v - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * v - 1.0).abs()).clamp(0.0, 1.0);
    [r, g, b]
}

/// The heatmap blended over an `[h, w, 3]` image in `[0, 1]`.
pub fn overlay(image: &Tensor<f32>, map: &Heatmap) -> Result<RgbImage> {
    let (h, w) = (map.height(), map.width());
    if image.shape() != [h, w, 3] {
        return Err(Error::Dimension(format!("overlay needs a [{h}, {w}, 3] image, got {:?}", image.shape())));
    }
    let mut blended = image.clone();
    for (px, &v) in blended.data_mut().chunks_mut(3).zip(map.values.data()) {
        for (p, c) in px.iter_mut().zip(heat_color(v)) {
            *p = (1.0 - OVERLAY_ALPHA) * *p + OVERLAY_ALPHA * c;
        }
    }
    tensor_to_rgb(&blended)
}

/// Binary PPM (`P6`) encoding.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

/// Reads back a `P6` file written by [`encode_ppm`].
pub fn decode_ppm(bytes: &[u8]) -> Option<RgbImage> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    let [magic, w, h, max] = fields[..] else { return None };
    if magic != "P6" || max != "255" {
        return None;
    }
    let (w, h): (u32, u32) = (w.parse().ok()?, h.parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    if data.len() != (w * h * 3) as usize {
        return None;
    }
    RgbImage::from_raw(w, h, data.to_vec())
}

pub fn write_overlay(path: &Path, image: &Tensor<f32>, map: &Heatmap) -> Result<()> {
    let bytes = encode_ppm(&overlay(image, map)?);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn write_pfm(path: &Path, map: &Heatmap) -> Result<()> {
    fs::write(path, heatmap_to_pfm(map)).map_err(|e| Error::io(path, e))
}

/// Colour swatch used in docs and tests: value `v` rendered as one pixel.
pub fn heat_pixel(v: f32) -> Rgb<u8> {
    let [r, g, b] = heat_color(v);
    Rgb([(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8])
}
