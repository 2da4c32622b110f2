use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Decodes a PNG as `H×W×3` with values in `[0, 1]` (`byte / 255`).
pub fn read_rgb<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor<T: Scalar>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = img.dimensions();
    let scale = T::one() / T::from_f64_lossy(255.0);
    Tensor::from_fn(&[h as usize, w as usize, 3], |i| T::from_f64_lossy(img.as_raw()[i] as f64) * scale)
}

/// Quantizes a `[0, 1]` `H×W×3` tensor back to 8-bit RGB (round to nearest,
/// clamped).
pub fn tensor_to_rgb<T: Scalar>(t: &Tensor<T>) -> Result<RgbImage> {
    let [h, w, c] = t.hwc("tensor_to_rgb")?;
    if c != 3 {
        return Err(Error::InvalidShape {
            op: "tensor_to_rgb",
            detail: format!("expected 3 channels, got {c}"),
        });
    }
    let bytes: Vec<u8> = t
        .data()
        .iter()
        .map(|v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    ImageBuffer::<Rgb<u8>, _>::from_raw(w as u32, h as u32, bytes).ok_or_else(|| Error::InvalidShape {
        op: "tensor_to_rgb",
        detail: "buffer size".into(),
    })
}

pub fn write_png<T: Scalar>(t: &Tensor<T>, path: &Path) -> Result<()> {
    tensor_to_rgb(t)?.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Bilinear resize of an `H×W×C` tensor with corner-aligned sampling: output
/// pixel `i` reads source coordinate `i·(in − 1)/(out − 1)`, so corner
/// pixels are copied exactly and an unchanged size is the identity.
pub fn resize_bilinear<T: Scalar>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [h, w, c] = img.hwc("resize")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidShape {
            op: "resize",
            detail: format!("target {out_h}x{out_w}"),
        });
    }
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let axis = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let s = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (s.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, s - lo as f64)
    };
    let src = img.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(x, w, out_w);
            for ch in 0..c {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch].to_f64_lossy();
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(T::from_f64_lossy(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out)
}

/// Reads an RGB PNG and resizes it to `target_h × target_w × 3`.
pub fn load_image<T: Scalar>(path: &Path, target_h: usize, target_w: usize) -> Result<Tensor<T>> {
    resize_bilinear(&read_rgb(path)?, target_h, target_w)
}
