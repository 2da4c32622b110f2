//! Random affine augmentation with nearest-neighbour, edge-replicating fill.
//!
//! Image coordinates are `(x, y) = (column, row)` with the center at
//! `c = ((W − 1)/2, (H − 1)/2)`. The forward (input → output) map applies,
//! in order, rotation `R(θ)`, isotropic zoom `Z(z)`, shear `S(s)` and shift
//! `t`, all about the center:
//!
//! ```text
//! p_out = c + t + S·Z·R·(p_in − c)
//! R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]
//! Z(z) = [[z, 0], [0, z]]
//! S(s) = [[1, tan s], [0, 1]]          (shear angle s in radians)
//! ```
//!
//! [`AffineTransform`] stores the inverse, `p_in = c + R⁻¹Z⁻¹S⁻¹(p_out − c − t)`,
//! because sampling walks output pixels. Draws per image, in this order:
//! `θ ~ U[−r, r]` degrees, `z ~ U[1 − zoom, 1 + zoom]`, `s ~ U[−shear, shear]`,
//! `tx ~ U[−w_shift·W, w_shift·W]`, `ty ~ U[−h_shift·H, h_shift·H]`, then a
//! fair coin for the horizontal flip (applied after the affine warp).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// Out-of-range coordinates clamp to the nearest edge pixel.
    #[default]
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub zoom_range: f64,
    /// Shear angle bound in radians.
    pub shear_range: f64,
    /// Rotation bound in degrees.
    pub rotation_range: f64,
    /// Fraction of the image width.
    pub width_shift_range: f64,
    /// Fraction of the image height.
    pub height_shift_range: f64,
    pub horizontal_flip: bool,
    pub fill_mode: FillMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            zoom_range: 0.2,
            shear_range: 0.2,
            rotation_range: 42.0,
            width_shift_range: 0.2,
            height_shift_range: 0.2,
            horizontal_flip: true,
            fill_mode: FillMode::Nearest,
        }
    }
}

impl AugmentConfig {
    /// Every range zero and flipping off: the pipeline is the identity.
    pub fn disabled() -> Self {
        Self {
            zoom_range: 0.0,
            shear_range: 0.0,
            rotation_range: 0.0,
            width_shift_range: 0.0,
            height_shift_range: 0.0,
            horizontal_flip: false,
            fill_mode: FillMode::Nearest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("zoom_range", self.zoom_range),
            ("shear_range", self.shear_range),
            ("rotation_range", self.rotation_range),
            ("width_shift_range", self.width_shift_range),
            ("height_shift_range", self.height_shift_range),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.zoom_range >= 1.0 {
            return Err(Error::Config(format!("zoom_range must be < 1, got {}", self.zoom_range)));
        }
        Ok(())
    }
}

/// One draw of the augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    pub rotation_deg: f64,
    pub zoom: f64,
    pub shear: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub flip: bool,
}

impl TransformParams {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            zoom: 1.0,
            shear: 0.0,
            shift_x: 0.0,
            shift_y: 0.0,
            flip: false,
        }
    }

    pub fn sample(cfg: &AugmentConfig, height: usize, width: usize, rng: &mut Rng) -> Self {
        let r = cfg.rotation_range;
        let rotation_deg = rng.uniform_range(-r, r);
        let zoom = rng.uniform_range(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range);
        let shear = rng.uniform_range(-cfg.shear_range, cfg.shear_range);
        let sx = cfg.width_shift_range * width as f64;
        let shift_x = rng.uniform_range(-sx, sx);
        let sy = cfg.height_shift_range * height as f64;
        let shift_y = rng.uniform_range(-sy, sy);
        let flip = cfg.horizontal_flip && rng.bernoulli(0.5);
        Self {
            rotation_deg,
            zoom,
            shear,
            shift_x,
            shift_y,
            flip,
        }
    }
}

/// 2×3 matrix mapping output pixel coordinates to input coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub matrix: [[f64; 3]; 2],
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// Pure translation of the content by `(dx, dy)` pixels.
    pub fn shift(dx: f64, dy: f64) -> Self {
        Self {
            matrix: [[1.0, 0.0, -dx], [0.0, 1.0, -dy]],
        }
    }

    /// Content rotation by `degrees` about the image center.
    pub fn rotation(degrees: f64, height: usize, width: usize) -> Self {
        Self::from_params(
            &TransformParams {
                rotation_deg: degrees,
                ..TransformParams::identity()
            },
            height,
            width,
        )
    }

    pub fn from_params(p: &TransformParams, height: usize, width: usize) -> Self {
        let (sin, cos) = p.rotation_deg.to_radians().sin_cos();
        let r_inv = [[cos, sin], [-sin, cos]];
        let z_inv = 1.0 / p.zoom;
        let tan = p.shear.tan();
        let s_inv = [[1.0, -tan], [0.0, 1.0]];
        // m = R⁻¹ · Z⁻¹ · S⁻¹
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = z_inv * (r_inv[i][0] * s_inv[0][j] + r_inv[i][1] * s_inv[1][j]);
            }
        }
        let c = [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0];
        let q = [c[0] + p.shift_x, c[1] + p.shift_y];
        let offset = |i: usize| c[i] - (m[i][0] * q[0] + m[i][1] * q[1]);
        Self {
            matrix: [[m[0][0], m[0][1], offset(0)], [m[1][0], m[1][1], offset(1)]],
        }
    }

    #[inline]
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b] = self.matrix;
        (a[0] * x + a[1] * y + a[2], b[0] * x + b[1] * y + b[2])
    }
}

/// Draws a transform and flip decision for an `height × width` image.
pub fn sample_transform(cfg: &AugmentConfig, height: usize, width: usize, rng: &mut Rng) -> (AffineTransform, bool) {
    let p = TransformParams::sample(cfg, height, width, rng);
    (AffineTransform::from_params(&p, height, width), p.flip)
}

/// Warps an `H×W×C` image. Each output pixel copies the input pixel nearest
/// to its mapped coordinate (rounded half away from zero), with coordinates
/// clamped into the image.
pub fn apply_affine<T: Scalar>(img: &Tensor<T>, t: &AffineTransform, fill: FillMode) -> Result<Tensor<T>> {
    let [h, w, c] = img.hwc("apply_affine")?;
    let FillMode::Nearest = fill;
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = t.map(x as f64, y as f64);
            let ix = sx.round().clamp(0.0, (w - 1) as f64) as usize;
            let iy = sy.round().clamp(0.0, (h - 1) as f64) as usize;
            let base = (iy * w + ix) * c;
            out.extend_from_slice(&src[base..base + c]);
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Mirrors columns: `j ↦ W − 1 − j`.
pub fn hflip<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let [h, w, c] = img.hwc("hflip")?;
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            let base = (y * w + x) * c;
            out.extend_from_slice(&src[base..base + c]);
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Full pipeline for one image: draw, warp, optionally flip.
pub fn augment_image<T: Scalar>(img: &Tensor<T>, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Tensor<T>> {
    let [h, w, _] = img.hwc("augment")?;
    let (t, flip) = sample_transform(cfg, h, w, rng);
    let warped = apply_affine(img, &t, cfg.fill_mode)?;
    if flip {
        hflip(&warped)
    } else {
        Ok(warped)
    }
}
