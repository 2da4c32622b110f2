use crate::error::{Error, Result};
use crate::nn::Backward;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2×2 max-pooling with stride 2. Odd trailing rows/columns are dropped and
/// ties resolve to the first maximum in row-major window order.
#[derive(Debug, Clone, Default)]
pub struct MaxPool {
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Pools one `H×W×C` image; returns the output and, per output element,
/// the flat input index it was taken from.
pub fn maxpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [h, w, c] = x.hwc("maxpool")?;
    let (out, argmax) = pool_image(x.data(), h, w, c)?;
    Ok((Tensor::new(vec![h / 2, w / 2, c], out)?, argmax))
}

fn pool_image<T: Scalar>(x: &[T], h: usize, w: usize, c: usize) -> Result<(Vec<T>, Vec<usize>)> {
    if h < 2 || w < 2 {
        return Err(Error::InvalidShape {
            op: "maxpool",
            detail: format!("need at least 2x2 input, got {h}x{w}"),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = (2 * oy * w + 2 * ox) * c + ch;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((out, argmax))
}

impl MaxPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output_shape(input: [usize; 3]) -> [usize; 3] {
        [input[0] / 2, input[1] / 2, input[2]]
    }

    fn run<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let [n, h, w, c] = match x.shape()[..] {
            [n, h, w, c] => [n, h, w, c],
            _ => {
                return Err(Error::InvalidShape {
                    op: "maxpool",
                    detail: format!("expected N×H×W×C batch, got {:?}", x.shape()),
                })
            }
        };
        let in_len = h * w * c;
        let mut out = Vec::new();
        let mut argmax = Vec::new();
        for (i, img) in x.data().chunks_exact(in_len).enumerate() {
            let (o, a) = pool_image(img, h, w, c)?;
            out.extend(o);
            argmax.extend(a.into_iter().map(|k| k + i * in_len));
        }
        Ok((Tensor::new(vec![n, h / 2, w / 2, c], out)?, argmax))
    }

    pub fn infer<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Self::run(x)?.0)
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, argmax) = Self::run(x)?;
        self.cache = Some(PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        });
        Ok(out)
    }

    /// Routes each upstream gradient to its cached argmax position.
    pub fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Backward<T>> {
        let cache = self.cache.take().ok_or(Error::MissingCache { layer: "maxpool" })?;
        if grad.len() != cache.argmax.len() {
            return Err(Error::ShapeMismatch {
                op: "maxpool backward",
                left: grad.shape().to_vec(),
                right: cache.input_shape,
            });
        }
        let mut dx = Tensor::zeros(&cache.input_shape);
        let d = dx.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad.data()) {
            d[idx] += g;
        }
        Ok(Backward {
            input_grad: dx,
            param_grads: Vec::new(),
        })
    }
}
