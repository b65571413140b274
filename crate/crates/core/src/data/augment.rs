//! Random geometric augmentation: flip, rotation, shift and zoom.
//!
//! All transforms act on `[h, w, c]` tensors about the image center
//! `((w - 1) / 2, (h - 1) / 2)`. The geometric part is a single inverse
//! mapping with bilinear sampling; pixels that fall outside the source are 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::lerp;
use crate::error::{Error, Result};
use crate::exec::mix_seed;
use crate::tensor::Tensor;

/// Augmentation ranges. `rescale` is the factor applied to 8-bit pixel values
/// when images are read from disk; the rest are sampled per image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    pub rescale: f64,
    /// Rotation drawn from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    /// Shift drawn from `[-shift_frac, shift_frac]` of width and height.
    pub shift_frac: f64,
    pub zoom: [f64; 2],
    pub hflip_prob: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self { rescale: 1.0 / 255.0, rotation_deg: 20.0, shift_frac: 0.10, zoom: [0.9, 1.1], hflip_prob: 0.5 }
    }
}

impl AugmentSpec {
    /// No geometric change at all.
    pub fn identity() -> Self {
        Self { rotation_deg: 0.0, shift_frac: 0.0, zoom: [1.0, 1.0], hflip_prob: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.rescale, self.rotation_deg, self.shift_frac, self.zoom[0], self.zoom[1], self.hflip_prob]
            .iter()
            .all(|v| v.is_finite());
        let ok = finite
            && self.rescale > 0.0
            && self.rotation_deg >= 0.0
            && (0.0..1.0).contains(&self.shift_frac)
            && self.zoom[0] > 0.0
            && self.zoom[0] <= self.zoom[1]
            && (0.0..=1.0).contains(&self.hflip_prob);
        if ok { Ok(()) } else { Err(Error::Parameter(format!("invalid augmentation settings {self:?}"))) }
    }

    /// Parameters for image `index` under `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> AugmentParams {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[index]));
        let mut sym = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let angle_deg = sym(self.rotation_deg);
        let tx = sym(self.shift_frac);
        let ty = sym(self.shift_frac);
        let zoom =
            if self.zoom[1] > self.zoom[0] { rng.random_range(self.zoom[0]..=self.zoom[1]) } else { self.zoom[0] };
        let flip = self.hflip_prob > 0.0 && rng.random_bool(self.hflip_prob);
        AugmentParams { flip, angle_deg, tx, ty, zoom }
    }
}

/// One concrete draw. Positive angles rotate counter-clockwise as displayed;
/// positive shifts move content right and down.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub angle_deg: f64,
    pub tx: f64,
    pub ty: f64,
    pub zoom: f64,
}

impl AugmentParams {
    pub const IDENTITY: Self = Self { flip: false, angle_deg: 0.0, tx: 0.0, ty: 0.0, zoom: 1.0 };

    fn is_rigid_identity(&self) -> bool {
        self.angle_deg == 0.0 && self.tx == 0.0 && self.ty == 0.0 && self.zoom == 1.0
    }
}

fn dims(x: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::Dimension(format!("expected an [h, w, c] image, got {:?}", x.shape()))),
    }
}

pub fn hflip(x: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (_, w, c) = dims(x)?;
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(w * c) {
        for j in 0..w / 2 {
            for ch in 0..c {
                row.swap(j * c + ch, (w - 1 - j) * c + ch);
            }
        }
    }
    Ok(out)
}

/// Applies the rotation, shift and zoom of `p` (the flip is ignored here).
pub fn warp(x: &Tensor<f32>, p: &AugmentParams) -> Result<Tensor<f32>> {
    let (h, w, c) = dims(x)?;
    if p.is_rigid_identity() {
        return Ok(x.clone());
    }
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = p.angle_deg.to_radians().sin_cos();
    let (tx, ty) = (p.tx * w as f64, p.ty * h as f64);
    let src = x.data();
    let fetch = |yy: isize, xx: isize, ch: usize| -> f32 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            src[(yy as usize * w + xx as usize) * c + ch]
        }
    };
    let mut out = vec![0.0f32; x.len()];
    for oy in 0..h {
        for ox in 0..w {
            // undo zoom, then shift, then rotation (y axis points down, so a
            // counter-clockwise display rotation uses the transposed matrix)
            let u = (ox as f64 - cx) / p.zoom - tx;
            let v = (oy as f64 - cy) / p.zoom - ty;
            let sx = cx + cos * u - sin * v;
            let sy = cy + sin * u + cos * v;
            let (fx, fy) = (sx.floor(), sy.floor());
            let (ax, ay) = ((sx - fx) as f32, (sy - fy) as f32);
            let (x0, y0) = (fx as isize, fy as isize);
            if x0 < -1 || y0 < -1 || x0 >= w as isize || y0 >= h as isize {
                continue;
            }
            for ch in 0..c {
                let top = lerp(fetch(y0, x0, ch), fetch(y0, x0 + 1, ch), ax);
                let bottom = lerp(fetch(y0 + 1, x0, ch), fetch(y0 + 1, x0 + 1, ch), ax);
                out[(oy * w + ox) * c + ch] = lerp(top, bottom, ay);
            }
        }
    }
    Tensor::new(x.shape(), out)
}

pub fn rotate(x: &Tensor<f32>, angle_deg: f64) -> Result<Tensor<f32>> {
    warp(x, &AugmentParams { angle_deg, ..AugmentParams::IDENTITY })
}

/// Flip, then rotation, shift and zoom, with parameters drawn from `(seed, index)`.
pub fn augment(x: &Tensor<f32>, spec: &AugmentSpec, seed: u64, index: u64) -> Result<Tensor<f32>> {
    let p = spec.sample(seed, index);
    let flipped = if p.flip { hflip(x)? } else { x.clone() };
    warp(&flipped, &p)
}
