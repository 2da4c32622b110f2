//! Dense row-major tensors.
//!
//! Images and feature maps are channel-last (`H×W×C`, batched as
//! `N×H×W×C`). There is no implicit broadcasting: binary operations require
//! equal shapes or an explicit scalar operand.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    /// Multiply by a scalar; the right operand must be `Operand::Scalar`.
    Scale,
}

/// Right-hand side of an elementwise operation.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a, T> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape {
                op: "tensor",
                detail: format!("zero extent in {shape:?}"),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                op: "tensor",
                detail: format!(
                    "shape {shape:?} needs {expected} values, got {}",
                    data.len()
                ),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// `n×n` identity matrix.
    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| {
            if i / n == i % n {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Same data viewed under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Converts every element to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug check for the finite-values invariant.
    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    fn check_same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Pointwise `a op b`. Only `Scale` accepts (and requires) a scalar.
    pub fn elementwise(op: ElementwiseOp, a: &Self, b: Operand<'_, T>) -> Result<Self> {
        let data = match (op, b) {
            (ElementwiseOp::Scale, Operand::Scalar(s)) => a.data.iter().map(|&x| x * s).collect(),
            (ElementwiseOp::Scale, Operand::Tensor(_)) => {
                return Err(Error::InvalidShape {
                    op: "scale",
                    detail: "scale takes a scalar operand".into(),
                })
            }
            (_, Operand::Scalar(s)) => {
                let f = binary_fn::<T>(op);
                a.data.iter().map(|&x| f(x, s)).collect()
            }
            (_, Operand::Tensor(b)) => {
                a.check_same_shape(op_name(op), b)?;
                let f = binary_fn::<T>(op);
                a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
            }
        };
        Ok(Self {
            shape: a.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::elementwise(ElementwiseOp::Add, self, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::elementwise(ElementwiseOp::Sub, self, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Self::elementwise(ElementwiseOp::Mul, self, Operand::Tensor(other))
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// In place `self += alpha * other`.
    pub fn add_scaled_(&mut self, alpha: T, other: &Self) -> Result<()> {
        self.check_same_shape("add_scaled", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Matrix product of two rank-2 tensors.
    ///
    /// Each output element accumulates its `K` products in increasing `k`
    /// order (row-major i-k-j loop), so results are reproducible per build.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "transpose",
                detail: format!("expected rank 2, got {:?}", self.shape),
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Zero-pads the two spatial axes of an `H×W×C` tensor.
    pub fn pad_zero(&self, pad_h: usize, pad_w: usize) -> Result<Self> {
        let [h, w, c] = self.hwc("pad_zero")?;
        let (ph, pw) = (h + 2 * pad_h, w + 2 * pad_w);
        let mut out = vec![T::zero(); ph * pw * c];
        for y in 0..h {
            let src = &self.data[y * w * c..(y + 1) * w * c];
            let start = ((y + pad_h) * pw + pad_w) * c;
            out[start..start + w * c].copy_from_slice(src);
        }
        Ok(Self {
            shape: vec![ph, pw, c],
            data: out,
        })
    }

    /// Removes `crop_h` rows and `crop_w` columns from each spatial border.
    pub fn crop_center(&self, crop_h: usize, crop_w: usize) -> Result<Self> {
        let [h, w, c] = self.hwc("crop_center")?;
        if 2 * crop_h >= h || 2 * crop_w >= w {
            return Err(Error::InvalidShape {
                op: "crop_center",
                detail: format!("cannot crop {crop_h}x{crop_w} from {h}x{w}"),
            });
        }
        let (oh, ow) = (h - 2 * crop_h, w - 2 * crop_w);
        let mut out = Vec::with_capacity(oh * ow * c);
        for y in crop_h..crop_h + oh {
            let start = (y * w + crop_w) * c;
            out.extend_from_slice(&self.data[start..start + ow * c]);
        }
        Ok(Self {
            shape: vec![oh, ow, c],
            data: out,
        })
    }

    pub(crate) fn hwc(&self, op: &'static str) -> Result<[usize; 3]> {
        match self.shape[..] {
            [h, w, c] => Ok([h, w, c]),
            _ => Err(Error::InvalidShape {
                op,
                detail: format!("expected H×W×C, got {:?}", self.shape),
            }),
        }
    }
}

fn op_name(op: ElementwiseOp) -> &'static str {
    match op {
        ElementwiseOp::Add => "add",
        ElementwiseOp::Sub => "sub",
        ElementwiseOp::Mul => "mul",
        ElementwiseOp::Scale => "scale",
    }
}

fn binary_fn<T: Scalar>(op: ElementwiseOp) -> fn(T, T) -> T {
    match op {
        ElementwiseOp::Add => |a, b| a + b,
        ElementwiseOp::Sub => |a, b| a - b,
        ElementwiseOp::Mul | ElementwiseOp::Scale => |a, b| a * b,
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`, i-k-j order.
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (&aik, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out[k×n] += aᵀ · b` where `a` is `m×k` and `b` is `m×n`.
pub(crate) fn gemm_at_b<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for (a_row, b_row) in a.chunks_exact(k).zip(b.chunks_exact(n)) {
        for (&aik, out_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
            for (o, &bij) in out_row.iter_mut().zip(b_row) {
                *o += aik * bij;
            }
        }
    }
}

/// `out[m×k] += a · bᵀ` where `a` is `m×n` and `b` is `k×n`.
pub(crate) fn gemm_a_bt<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for (a_row, out_row) in a.chunks_exact(n).zip(out.chunks_exact_mut(k)) {
        for (o, b_row) in out_row.iter_mut().zip(b.chunks_exact(n)) {
            let mut acc = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            *o += acc;
        }
    }
}
