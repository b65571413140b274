use std::fs;
use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::model::INPUT_SIZE;
use crate::tensor::Tensor;

/// Decodes PNG or JPEG bytes. `path` only labels errors.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

/// `[h, w, 3]` tensor with every channel value multiplied by `scale`.
pub fn rgb_to_tensor(img: &RgbImage, scale: f32) -> Tensor<f32> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| f32::from(v) * scale).collect();
    Tensor::new([h as usize, w as usize, 3], data).expect("rgb buffer matches its dimensions")
}

/// Quantizes a `[h, w, 3]` tensor in `[0, 1]` back to 8-bit RGB.
pub fn tensor_to_rgb(t: &Tensor<f32>) -> Result<RgbImage> {
    let &[h, w, 3] = t.shape() else {
        return Err(Error::Dimension(format!("expected [h, w, 3], got {:?}", t.shape())));
    };
    let raw = t.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Ok(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer length matches"))
}

/// Bilinear resize of a `[h, w, c]` tensor using half-pixel centers and edge
/// clamping. Equal sizes return the input unchanged.
pub fn resize_bilinear(x: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let &[h, w, c] = x.shape() else {
        return Err(Error::Dimension(format!("resize expects [h, w, c], got {:?}", x.shape())));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::Parameter("resize target must be non-empty".into()));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let (ys, xs) = (axis(h, out_h), axis(w, out_w));
    let src = x.data();
    let px = |y: usize, xx: usize, ch: usize| src[(y * w + xx) * c + ch];
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let top = lerp(px(y0, x0, ch), px(y0, x1, ch), fx);
                let bottom = lerp(px(y1, x0, ch), px(y1, x1, ch), fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    Tensor::new([out_h, out_w, c], out)
}

/// `a + f (b - a)`: exact when `a == b` or `f == 0`.
pub(crate) fn lerp(a: f32, b: f32, f: f32) -> f32 {
    a + f * (b - a)
}

/// Crops an image to normalized corners `(x0, y0, x1, y1)`, keeping at least one pixel.
pub fn crop_box(img: &RgbImage, corners: (f64, f64, f64, f64)) -> RgbImage {
    let (w, h) = img.dimensions();
    let px = |v: f64, n: u32| ((v * f64::from(n)).round() as u32).min(n);
    let (x0, y0) = (px(corners.0, w).min(w - 1), px(corners.1, h).min(h - 1));
    let (x1, y1) = (px(corners.2, w).max(x0 + 1), px(corners.3, h).max(y0 + 1));
    image::imageops::crop_imm(img, x0, y0, x1 - x0, y1 - y0).to_image()
}

/// Reads an image file into a `[224, 224, 3]` tensor with values in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let img = load_rgb(path.as_ref())?;
    resize_bilinear(&rgb_to_tensor(&img, 1.0 / 255.0), INPUT_SIZE, INPUT_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn constant_image_stays_constant() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("solid.png");
        RgbImage::from_pixel(50, 50, Rgb([200, 10, 77])).save(&p).unwrap();
        let t = load_image(&p).unwrap();
        assert_eq!(t.shape(), &[224, 224, 3]);
        let scale = 1.0f32 / 255.0;
        let want = [200.0 * scale, 10.0 * scale, 77.0 * scale];
        for px in t.data().chunks(3) {
            assert_eq!(px, want);
        }
    }

    #[test]
    fn same_size_resize_is_identity() {
        let x = Tensor::from_fn([224, 224, 3], |i| ((i * 7919) % 256) as f32 / 255.0);
        assert_eq!(resize_bilinear(&x, 224, 224).unwrap(), x);
    }

    #[test]
    fn upsample_2x_matches_hand_values() {
        // 1x2 -> 1x4 with half-pixel centers samples at -0.25, 0.25, 0.75, 1.25
        let x = Tensor::new([1, 2, 1], vec![0.0f32, 1.0]).unwrap();
        let y = resize_bilinear(&x, 1, 4).unwrap();
        assert_eq!(y.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn jpeg_in_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.jpg");
        let img = RgbImage::from_fn(300, 170, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 128]));
        img.save(&p).unwrap();
        let t = load_image(&p).unwrap();
        assert_eq!(t.shape(), &[224, 224, 3]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn undecodable_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.jpg");
        fs::write(&p, b"not an image").unwrap();
        let err = load_image(&p).unwrap_err();
        assert!(matches!(err, Error::Image { .. }));
        assert!(err.to_string().contains("broken.jpg"));
        assert!(matches!(load_image(dir.path().join("nope.png")), Err(Error::Io { .. })));
    }

    #[test]
    fn crop_quadrant() {
        let img = RgbImage::from_fn(10, 10, |x, y| Rgb([x as u8, y as u8, 0]));
        let c = crop_box(&img, (0.5, 0.0, 1.0, 0.5));
        assert_eq!(c.dimensions(), (5, 5));
        assert_eq!(c.get_pixel(0, 0), &Rgb([5, 0, 0]));
        let tiny = crop_box(&img, (1.0, 1.0, 1.0, 1.0));
        assert_eq!(tiny.dimensions(), (1, 1));
    }

    #[test]
    fn rgb_roundtrip() {
        let img = RgbImage::from_fn(4, 3, |x, y| Rgb([(x * 40) as u8, (y * 70) as u8, 9]));
        assert_eq!(tensor_to_rgb(&rgb_to_tensor(&img, 1.0 / 255.0)).unwrap(), img);
    }
}
