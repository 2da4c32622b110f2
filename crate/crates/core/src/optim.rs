//! First-order optimizers: SGD, Adam, RMSprop and Nadam, plus time-based
//! learning-rate decay.
//!
//! Update rules, with `t` incremented before each update and all buffers
//! starting at zero:
//!
//! * SGD: `w ← w − η·g`
//! * Adam: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
//!   `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`, `w ← w − η·m̂/(√v̂ + ε)`
//! * RMSprop: `E ← λE + (1−λ)g²`, `w ← w − η·g/(√E + ε)`
//! * Nadam: `m`, `v`, `m̂` as in Adam; `ĝ = g/(1 − Π)`,
//!   `m̃ = β₁ᵗ⁺¹·m̂ + (1−β₁ᵗ)·ĝ`, `w ← w − η·m̃/(√v + ε)`. `Π` is `β₁ᵗ`
//!   ([`NadamProduct::Power`]) or `Πᵢ₌₁ᵗ β₁ⁱ = β₁^(t(t+1)/2)`
//!   ([`NadamProduct::Triangular`]); the denominator uses the raw `v` unless
//!   `nadam_corrected_v` selects `v̂`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
    Nadam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [Self::Sgd, Self::Adam, Self::Rmsprop, Self::Nadam];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
            Self::Rmsprop => "rmsprop",
            Self::Nadam => "nadam",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown optimizer {s:?} (expected sgd, adam, rmsprop or nadam)")))
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Reading of the bias-correction product in the Nadam gradient term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NadamProduct {
    /// `β₁ᵗ`, the Adam-style correction.
    #[default]
    Power,
    /// `Πᵢ₌₁ᵗ β₁ⁱ = β₁^(t(t+1)/2)` with constant β₁.
    Triangular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// RMSprop moving-average decay λ.
    pub rho: f64,
    /// Per-epoch decay coefficient; `None` means `learning_rate / epochs`.
    pub decay: Option<f64>,
    pub nadam_product: NadamProduct,
    pub nadam_corrected_v: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rho: 0.9,
            decay: None,
            nadam_product: NadamProduct::Power,
            nadam_corrected_v: false,
        }
    }
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            ..Self::default()
        }
    }

    /// A zero learning rate is accepted so that control runs can freeze the
    /// parameters.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1), got {v}")))
            }
        };
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("rho", self.rho)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if let Some(d) = self.decay {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("decay must be >= 0, got {d}")));
            }
        }
        Ok(())
    }

    /// Decay coefficient for a run of `epochs` epochs.
    pub fn decay_for(&self, epochs: usize) -> f64 {
        self.decay
            .unwrap_or_else(|| time_based_decay(self.learning_rate, epochs))
    }
}

/// `η₀ / (1 + decay·epoch)`.
pub fn apply_decay(initial_lr: f64, decay: f64, epoch: usize) -> f64 {
    initial_lr / (1.0 + decay * epoch as f64)
}

/// `η₀ / epochs`.
pub fn time_based_decay(initial_lr: f64, epochs: usize) -> f64 {
    if epochs == 0 {
        0.0
    } else {
        initial_lr / epochs as f64
    }
}

/// Moment buffers and step counter for one parameter tensor. For RMSprop
/// `second` holds `E[g²]` and `first` is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState<T> {
    pub t: u64,
    pub first: Tensor<T>,
    pub second: Tensor<T>,
}

impl<T: Scalar> ParamState<T> {
    pub fn zeros_like(param: &Tensor<T>) -> Self {
        Self {
            t: 0,
            first: Tensor::zeros(param.shape()),
            second: Tensor::zeros(param.shape()),
        }
    }
}

fn check<T: Scalar>(op: &'static str, w: &Tensor<T>, g: &Tensor<T>, state: Option<&ParamState<T>>) -> Result<()> {
    let mismatch = |other: &Tensor<T>| Error::ShapeMismatch {
        op,
        left: w.shape().to_vec(),
        right: other.shape().to_vec(),
    };
    if w.shape() != g.shape() {
        return Err(mismatch(g));
    }
    if let Some(s) = state {
        if s.first.shape() != w.shape() {
            return Err(mismatch(&s.first));
        }
        if s.second.shape() != w.shape() {
            return Err(mismatch(&s.second));
        }
    }
    Ok(())
}

pub fn sgd_step<T: Scalar>(w: &mut Tensor<T>, g: &Tensor<T>, cfg: &OptimizerConfig) -> Result<()> {
    check("sgd", w, g, None)?;
    let lr = T::from_f64_lossy(cfg.learning_rate);
    for (wi, &gi) in w.data_mut().iter_mut().zip(g.data()) {
        *wi = *wi - lr * gi;
    }
    Ok(())
}

pub fn adam_step<T: Scalar>(w: &mut Tensor<T>, g: &Tensor<T>, state: &mut ParamState<T>, cfg: &OptimizerConfig) -> Result<()> {
    check("adam", w, g, Some(state))?;
    state.t += 1;
    let one = T::one();
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let eps = T::from_f64_lossy(cfg.epsilon);
    let c1 = one - b1.powi(step_exponent(state.t));
    let c2 = one - b2.powi(step_exponent(state.t));
    let (m, v) = (state.first.data_mut(), state.second.data_mut());
    for (((wi, &gi), mi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
        *mi = b1 * *mi + (one - b1) * gi;
        *vi = b2 * *vi + (one - b2) * gi * gi;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *wi = *wi - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

pub fn rmsprop_step<T: Scalar>(w: &mut Tensor<T>, g: &Tensor<T>, state: &mut ParamState<T>, cfg: &OptimizerConfig) -> Result<()> {
    check("rmsprop", w, g, Some(state))?;
    state.t += 1;
    let one = T::one();
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let rho = T::from_f64_lossy(cfg.rho);
    let eps = T::from_f64_lossy(cfg.epsilon);
    for ((wi, &gi), ei) in w.data_mut().iter_mut().zip(g.data()).zip(state.second.data_mut()) {
        *ei = rho * *ei + (one - rho) * gi * gi;
        *wi = *wi - lr * gi / (ei.sqrt() + eps);
    }
    Ok(())
}

pub fn nadam_step<T: Scalar>(w: &mut Tensor<T>, g: &Tensor<T>, state: &mut ParamState<T>, cfg: &OptimizerConfig) -> Result<()> {
    check("nadam", w, g, Some(state))?;
    state.t += 1;
    let t = state.t;
    let one = T::one();
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let eps = T::from_f64_lossy(cfg.epsilon);
    let b1_t = b1.powi(step_exponent(t));
    let b1_next = b1.powi(step_exponent(t + 1));
    let product = match cfg.nadam_product {
        NadamProduct::Power => b1_t,
        NadamProduct::Triangular => b1.powf(T::from_f64_lossy(t as f64 * (t as f64 + 1.0) / 2.0)),
    };
    let c1 = one - b1_t;
    let c2 = one - b2.powi(step_exponent(t));
    let c_grad = one - product;
    let (m, v) = (state.first.data_mut(), state.second.data_mut());
    for (((wi, &gi), mi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
        *mi = b1 * *mi + (one - b1) * gi;
        *vi = b2 * *vi + (one - b2) * gi * gi;
        let m_hat = *mi / c1;
        let g_hat = gi / c_grad;
        let m_tilde = b1_next * m_hat + c1 * g_hat;
        let denom = if cfg.nadam_corrected_v { (*vi / c2).sqrt() } else { vi.sqrt() };
        *wi = *wi - lr * m_tilde / (denom + eps);
    }
    Ok(())
}

fn step_exponent(t: u64) -> i32 {
    i32::try_from(t).unwrap_or(i32::MAX)
}

/// Optimizer over an ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    states: Vec<ParamState<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new<'a>(config: OptimizerConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            states: params.into_iter().map(ParamState::zeros_like).collect(),
            config,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn states(&self) -> &[ParamState<T>] {
        &self.states
    }

    /// Applies one update to every parameter. `grads` must line up with the
    /// parameter order used at construction.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} parameters, got {} parameters and {} gradients",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((w, g), state) in params.into_iter().zip(grads).zip(&mut self.states) {
            match self.config.kind {
                OptimizerKind::Sgd => sgd_step(w, g, &self.config)?,
                OptimizerKind::Adam => adam_step(w, g, state, &self.config)?,
                OptimizerKind::Rmsprop => rmsprop_step(w, g, state, &self.config)?,
                OptimizerKind::Nadam => nadam_step(w, g, state, &self.config)?,
            }
        }
        Ok(())
    }
}
