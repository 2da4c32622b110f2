//! 2-D convolution over channel-last images.
//!
//! Like every mainstream CNN toolkit this computes cross-correlation:
//! `out[y, x, o] = b[o] + Σ_{i,j,c} in[y·s + i − p, x·s + j − p, c] · K[i, j, c, o]`.
//! True convolution (kernel indices subtracted) equals cross-correlation
//! with a spatially flipped kernel, see [`flip_kernel`]; for learned kernels
//! the two parameterizations are interchangeable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, Backward};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{gemm, gemm_a_bt, gemm_at_b, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding of `(k − 1) / 2`; preserves extents at stride 1.
    Same,
    Valid,
}

/// Static geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(
        [h, w, cin]: [usize; 3],
        [kh, kw, kcin, cout]: [usize; 4],
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if kcin != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: vec![h, w, cin],
                right: vec![kh, kw, kcin, cout],
            });
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be positive".into()));
        }
        let (pad_h, pad_w) = match padding {
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::Config(format!(
                        "same padding needs odd kernel extents, got {kh}x{kw}"
                    )));
                }
                ((kh - 1) / 2, (kw - 1) / 2)
            }
            Padding::Valid => (0, 0),
        };
        let (ph, pw) = (h + 2 * pad_h, w + 2 * pad_w);
        if kh > ph || kw > pw {
            return Err(Error::InvalidShape {
                op: "conv2d",
                detail: format!("kernel {kh}x{kw} larger than padded input {ph}x{pw}"),
            });
        }
        Ok(Self {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad_h,
            pad_w,
            oh: (ph - kh) / stride + 1,
            ow: (pw - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn in_len(&self) -> usize {
        self.h * self.w * self.cin
    }

    fn out_len(&self) -> usize {
        self.positions() * self.cout
    }

    /// Unfolds one image into `positions × patch_len` rows, patch order
    /// `(ky, kx, c)` to match the `kh×kw×cin×cout` kernel layout.
    fn im2col<T: Scalar>(&self, img: &[T], cols: &mut [T]) {
        let plen = self.patch_len();
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &mut cols[(oy * self.ow + ox) * plen..][..plen];
                for ky in 0..self.kh {
                    let iy = (oy * self.stride + ky) as isize - self.pad_h as isize;
                    let dst = &mut row[ky * self.kw * self.cin..][..self.kw * self.cin];
                    if iy < 0 || iy >= self.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    for kx in 0..self.kw {
                        let ix = (ox * self.stride + kx) as isize - self.pad_w as isize;
                        let d = &mut dst[kx * self.cin..][..self.cin];
                        if ix < 0 || ix >= self.w as isize {
                            d.fill(T::zero());
                        } else {
                            let src = (iy as usize * self.w + ix as usize) * self.cin;
                            d.copy_from_slice(&img[src..src + self.cin]);
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds column gradients back onto the image grid.
    fn col2im<T: Scalar>(&self, cols: &[T], img: &mut [T]) {
        let plen = self.patch_len();
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &cols[(oy * self.ow + ox) * plen..][..plen];
                for ky in 0..self.kh {
                    let iy = (oy * self.stride + ky) as isize - self.pad_h as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..self.kw {
                        let ix = (ox * self.stride + kx) as isize - self.pad_w as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        let src = &row[(ky * self.kw + kx) * self.cin..][..self.cin];
                        let dst = (iy as usize * self.w + ix as usize) * self.cin;
                        for (d, &s) in img[dst..dst + self.cin].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    fn forward_image<T: Scalar>(&self, img: &[T], kernels: &[T], bias: &[T], out: &mut [T]) {
        let mut cols = vec![T::zero(); self.positions() * self.patch_len()];
        self.im2col(img, &mut cols);
        for row in out.chunks_exact_mut(self.cout) {
            row.copy_from_slice(bias);
        }
        gemm(&cols, kernels, out, self.positions(), self.patch_len(), self.cout);
    }
}

/// Convolves a single `H×W×Cin` image with `k₁×k₂×Cin×Cout` kernels.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let geo = ConvGeometry::new(x.hwc("conv2d")?, kernel_dims(kernels)?, stride, padding)?;
    check_bias(bias, geo.cout)?;
    let mut out = vec![T::zero(); geo.out_len()];
    geo.forward_image(x.data(), kernels.data(), bias.data(), &mut out);
    Tensor::new(vec![geo.oh, geo.ow, geo.cout], out)
}

/// Spatially flips a `k₁×k₂×Cin×Cout` kernel (both axes).
pub fn flip_kernel<T: Scalar>(kernels: &Tensor<T>) -> Result<Tensor<T>> {
    let [kh, kw, cin, cout] = kernel_dims(kernels)?;
    let mut out = Tensor::zeros(kernels.shape());
    for i in 0..kh {
        for j in 0..kw {
            for c in 0..cin {
                for o in 0..cout {
                    out.set(&[kh - 1 - i, kw - 1 - j, c, o], kernels.at(&[i, j, c, o]));
                }
            }
        }
    }
    Ok(out)
}

fn kernel_dims<T: Scalar>(k: &Tensor<T>) -> Result<[usize; 4]> {
    match k.shape()[..] {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::InvalidShape {
            op: "conv2d",
            detail: format!("kernel must be k1×k2×Cin×Cout, got {:?}", k.shape()),
        }),
    }
}

fn check_bias<T: Scalar>(bias: &Tensor<T>, cout: usize) -> Result<()> {
    if bias.shape() != [cout] {
        return Err(Error::ShapeMismatch {
            op: "conv2d bias",
            left: bias.shape().to_vec(),
            right: vec![cout],
        });
    }
    Ok(())
}

/// Convolution layer over `N×H×W×Cin` batches.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, stride: usize, padding: Padding) -> Result<Self> {
        let [_, _, _, cout] = kernel_dims(&kernels)?;
        check_bias(&bias, cout)?;
        Ok(Self {
            kernels,
            bias,
            stride,
            padding,
            cache: None,
        })
    }

    /// Glorot-uniform kernels, zero bias.
    pub fn init(kh: usize, kw: usize, cin: usize, cout: usize, stride: usize, padding: Padding, rng: &mut Rng) -> Self {
        let kernels = glorot_uniform(&[kh, kw, cin, cout], kh * kw * cin, kh * kw * cout, rng);
        Self {
            kernels,
            bias: Tensor::zeros(&[cout]),
            stride,
            padding,
            cache: None,
        }
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<ConvGeometry> {
        let [h, w, c] = match x.shape()[..] {
            [_, h, w, c] => [h, w, c],
            _ => {
                return Err(Error::InvalidShape {
                    op: "conv2d",
                    detail: format!("expected N×H×W×C batch, got {:?}", x.shape()),
                })
            }
        };
        ConvGeometry::new([h, w, c], kernel_dims(&self.kernels)?, self.stride, self.padding)
    }

    /// Output shape for a single `H×W×C` input.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let g = ConvGeometry::new(input, kernel_dims(&self.kernels)?, self.stride, self.padding)?;
        Ok([g.oh, g.ow, g.cout])
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let geo = self.geometry(x)?;
        let n = x.shape()[0];
        let mut out = vec![T::zero(); n * geo.out_len()];
        let (k, b) = (self.kernels.data(), self.bias.data());
        out.par_chunks_mut(geo.out_len())
            .zip(x.data().par_chunks(geo.in_len()))
            .for_each(|(o, img)| geo.forward_image(img, k, b, o));
        Tensor::new(vec![n, geo.oh, geo.ow, geo.cout], out)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    /// Returns the input gradient and `[∂kernels, ∂bias]`.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Backward<T>> {
        let x = self.cache.take().ok_or(Error::MissingCache { layer: "conv2d" })?;
        let geo = self.geometry(&x)?;
        let n = x.shape()[0];
        let expected = [n, geo.oh, geo.ow, geo.cout];
        if grad.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "conv2d backward",
                left: grad.shape().to_vec(),
                right: expected.to_vec(),
            });
        }
        let (p, plen, cout) = (geo.positions(), geo.patch_len(), geo.cout);
        let kernels = self.kernels.data();

        let per_image: Vec<(Vec<T>, Vec<T>, Vec<T>)> = x
            .data()
            .par_chunks(geo.in_len())
            .zip(grad.data().par_chunks(geo.out_len()))
            .map(|(img, g)| {
                let mut cols = vec![T::zero(); p * plen];
                geo.im2col(img, &mut cols);
                let mut dk = vec![T::zero(); plen * cout];
                gemm_at_b(&cols, g, &mut dk, p, plen, cout);
                let mut db = vec![T::zero(); cout];
                for row in g.chunks_exact(cout) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                cols.fill(T::zero());
                gemm_a_bt(g, kernels, &mut cols, p, plen, cout);
                let mut dx = vec![T::zero(); geo.in_len()];
                geo.col2im(&cols, &mut dx);
                (dx, dk, db)
            })
            .collect();

        let mut dx = Vec::with_capacity(n * geo.in_len());
        let mut dk = vec![T::zero(); plen * cout];
        let mut db = vec![T::zero(); cout];
        for (dxi, dki, dbi) in per_image {
            dx.extend_from_slice(&dxi);
            for (a, b) in dk.iter_mut().zip(dki) {
                *a += b;
            }
            for (a, b) in db.iter_mut().zip(dbi) {
                *a += b;
            }
        }
        Ok(Backward {
            input_grad: Tensor::new(x.shape().to_vec(), dx)?,
            param_grads: vec![
                Tensor::new(self.kernels.shape().to_vec(), dk)?,
                Tensor::new(vec![cout], db)?,
            ],
        })
    }
}
