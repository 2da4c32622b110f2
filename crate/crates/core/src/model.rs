//! The classification network: stacked conv blocks, one hidden dense layer
//! with dropout, and a five-way softmax.

use serde::{Deserialize, Serialize};

use crate::dataset::FiveClass;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_loss, one_hot, softmax_cross_entropy_backward, Layer, LayerSpec, Mode, Padding};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    /// One conv(3×3, same)-ReLU-maxpool block per entry.
    pub conv_filters: Vec<usize>,
    pub kernel_size: usize,
    pub dense1_units: usize,
    pub dense1_dropout: f64,
    pub output_units: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_height: 128,
            input_width: 128,
            input_channels: 3,
            conv_filters: vec![32, 64, 128],
            kernel_size: 3,
            dense1_units: 1024,
            dense1_dropout: 0.5,
            output_units: FiveClass::COUNT,
        }
    }
}

impl ModelConfig {
    /// Scaled-down variant: filters 8-16-32, 32×32 input, dense 256.
    pub fn desk() -> Self {
        Self {
            input_height: 32,
            input_width: 32,
            conv_filters: vec![8, 16, 32],
            dense1_units: 256,
            ..Self::default()
        }
    }

    /// Tiny variant: filters 8-16-32, 8×8 input, dense 32.
    pub fn toy() -> Self {
        Self {
            input_height: 8,
            input_width: 8,
            conv_filters: vec![8, 16, 32],
            dense1_units: 32,
            ..Self::default()
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_height, self.input_width, self.input_channels]
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_filters.is_empty() {
            return Err(Error::Config("conv_filters must not be empty".into()));
        }
        if self.conv_filters.windows(2).any(|w| w[0] >= w[1]) || self.conv_filters[0] == 0 {
            return Err(Error::Config(format!(
                "conv_filters must be positive and strictly increasing, got {:?}",
                self.conv_filters
            )));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if self.output_units != FiveClass::COUNT {
            return Err(Error::Config(format!(
                "output_units must be {} (one per class), got {}",
                FiveClass::COUNT,
                self.output_units
            )));
        }
        if self.input_channels == 0 || self.dense1_units == 0 {
            return Err(Error::Config("input_channels and dense1_units must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dense1_dropout) {
            return Err(Error::Config(format!("dense1_dropout must be in [0, 1), got {}", self.dense1_dropout)));
        }
        let step = 1usize << self.conv_filters.len();
        for (name, v) in [("input_height", self.input_height), ("input_width", self.input_width)] {
            if v == 0 || v % step != 0 {
                let lower = (v / step) * step;
                let nearest = if lower == 0 || v - lower >= step - (v - lower) { lower + step } else { lower };
                return Err(Error::Config(format!(
                    "{name} {v} is not divisible by {step} ({} pooling stages); nearest valid size is {nearest}",
                    self.conv_filters.len()
                )));
            }
        }
        Ok(())
    }

    /// Width of the flattened feature vector after the last block.
    pub fn flatten_width(&self) -> usize {
        let step = 1usize << self.conv_filters.len();
        (self.input_height / step) * (self.input_width / step) * self.conv_filters.last().copied().unwrap_or(0)
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for &f in &self.conv_filters {
            specs.push(LayerSpec::Conv2d {
                out_channels: f,
                kernel_h: self.kernel_size,
                kernel_w: self.kernel_size,
                stride: 1,
                padding: Padding::Same,
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::MaxPool);
        }
        specs.push(LayerSpec::Flatten);
        specs.push(LayerSpec::Dense { units: self.dense1_units });
        specs.push(LayerSpec::Relu);
        specs.push(LayerSpec::Dropout { rate: self.dense1_dropout });
        specs.push(LayerSpec::Dense { units: self.output_units });
        specs.push(LayerSpec::Softmax);
        specs
    }
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    layers: Vec<Layer<T>>,
}

/// Output of one training forward/backward pass.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub loss: T,
    pub probs: Tensor<T>,
    /// In [`Model::params`] order.
    pub grads: Vec<Tensor<T>>,
}

/// Builds the layer stack and draws initial parameters from `rng`.
pub fn build_model<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> Result<Model<T>> {
    Model::new(cfg.clone(), rng)
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut shape = config.input_shape().to_vec();
        let mut layers = Vec::new();
        for spec in config.layer_specs() {
            let (layer, out) = Layer::build(&spec, &shape, rng)?;
            layers.push(layer);
            shape = out;
        }
        Ok(Self { config, layers })
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_params(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        let mut model = Self::new(config, &mut Rng::new(0))?;
        let expected = model.param_count_tensors();
        if params.len() != expected {
            return Err(Error::Config(format!("expected {expected} parameter tensors, got {}", params.len())));
        }
        for (slot, p) in model.params_mut().into_iter().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::ShapeMismatch {
                    op: "from_params",
                    left: slot.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            *slot = p;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    fn param_count_tensors(&self) -> usize {
        self.params().len()
    }

    /// Total number of scalar parameters.
    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Names like `conv1.kernel`, `dense2.bias`, in [`params`](Self::params)
    /// order.
    pub fn param_manifest(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        let (mut conv, mut dense) = (0, 0);
        for layer in &self.layers {
            let (prefix, weight) = match layer {
                Layer::Conv2d(_) => {
                    conv += 1;
                    (format!("conv{conv}"), "kernel")
                }
                Layer::Dense(_) => {
                    dense += 1;
                    (format!("dense{dense}"), "weight")
                }
                _ => continue,
            };
            let p = layer.params();
            out.push(ParamInfo {
                name: format!("{prefix}.{weight}"),
                shape: p[0].shape().to_vec(),
            });
            out.push(ParamInfo {
                name: format!("{prefix}.bias"),
                shape: p[1].shape().to_vec(),
            });
        }
        out
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = self.config.input_shape();
        if x.rank() != 4 || x.shape()[1..] != want {
            let mut right = vec![0];
            right.extend(want);
            return Err(Error::ShapeMismatch {
                op: "model input",
                left: x.shape().to_vec(),
                right,
            });
        }
        Ok(())
    }

    /// Class probabilities for an `N×H×W×C` batch, eval mode.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, rng)?;
        }
        Ok(h)
    }

    /// Train-mode forward, mean cross-entropy, and backward. The softmax
    /// layer is skipped on the way back: the combined gradient `(p − y)/N`
    /// enters the last dense layer directly.
    pub fn loss_and_grads(&mut self, x: &Tensor<T>, labels: &[usize], rng: &mut Rng) -> Result<StepOutput<T>> {
        if labels.len() != x.shape().first().copied().unwrap_or(0) {
            return Err(Error::Config(format!("{} labels for a batch of {:?}", labels.len(), x.shape())));
        }
        let probs = self.forward(x, Mode::Train, rng)?;
        let y = one_hot(labels, self.config.output_units)?;
        let loss = cross_entropy_loss(&probs, &y)?;
        let mut grad = softmax_cross_entropy_backward(&probs, &y)?;
        let n = self.layers.len();
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(n);
        for layer in self.layers[..n - 1].iter_mut().rev() {
            let b = layer.backward(&grad)?;
            grad = b.input_grad;
            per_layer.push(b.param_grads);
        }
        // the softmax layer still holds its forward cache
        if let Layer::Activation(a) = &mut self.layers[n - 1] {
            a.clear_cache();
        }
        let grads = per_layer.into_iter().rev().flatten().collect();
        Ok(StepOutput { loss, probs, grads })
    }
}

pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
