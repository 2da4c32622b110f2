//! Independent oracles and criterion checks shared by the integration test
//! targets. Every check returns `Ok(detail)` or `Err(reason)`.
#![allow(dead_code)]

use std::time::{Duration, Instant};

use histoconv::augment::{apply_affine, augment_image, hflip, AffineTransform, AugmentConfig, FillMode};
use histoconv::checkpoint;
use histoconv::dataset::{
    breakhis_like_patients, build_index, patient_exclusive_split, texture_set, write_corpus, CorpusContent, CountRow, CountTable, Magnification,
    MagnificationRow, Side, synthetic::BREAKHIS_COUNTS,
};
use histoconv::eval::predict_proba;
use histoconv::metrics::{aggregate, compute_metrics, round_half_up, ClassScores, ConfusionMatrix};
use histoconv::model::{build_model, Model, ModelConfig};
use histoconv::nn::{cross_entropy_loss, one_hot, softmax, softmax_cross_entropy_backward, Layer, LayerSpec, Mode, Padding};
use histoconv::optim::{NadamProduct, Optimizer, OptimizerConfig, OptimizerKind};
use histoconv::train::{train, TrainConfig, Trainer};
use histoconv::{Error, Rng, Tensor};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn within(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    ensure!(elapsed.as_secs_f64() <= budget_s, "took {:.1}s, budget {budget_s}s", elapsed.as_secs_f64());
    Ok(())
}

// ---------------------------------------------------------------------------
// gradients

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero components.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradStats {
    pub max_rel: f64,
    pub checked: usize,
    /// Elements re-checked with a smaller step after crossing a kink.
    pub refined: usize,
    pub skipped: usize,
}

impl GradStats {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_rel = self.max_rel.max(rel_err(analytic, numeric));
        self.checked += 1;
    }

    fn merge(&mut self, o: GradStats) {
        self.max_rel = self.max_rel.max(o.max_rel);
        self.checked += o.checked;
        self.refined += o.refined;
        self.skipped += o.skipped;
    }
}

fn random_tensor(shape: &[usize], rng: &mut Rng, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_range(lo, hi))
}

/// Values bounded away from zero, so no ReLU kink sits within a step.
fn away_from_zero(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v = rng.uniform_range(0.01, 1.0);
        if rng.bernoulli(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Distinct values spaced 0.01 apart in random order, so every 2×2 maximum
/// is separated from the runner-up by far more than a step.
fn well_separated(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    rng.shuffle(&mut vals);
    Tensor::new(shape.to_vec(), vals).unwrap()
}

/// Checks one layer against central differences of `C = Σ r ⊙ layer(x)`,
/// with the dropout mask pinned by reusing `mask_seed`.
pub fn check_layer(spec: &LayerSpec, x: &Tensor<f64>, seed: u64) -> Result<GradStats, String> {
    let mut rng = Rng::new(seed);
    let (mut layer, out_shape) = Layer::<f64>::build(spec, &x.shape()[1..], &mut rng).map_err(|e| e.to_string())?;
    let mut full_out = vec![x.shape()[0]];
    full_out.extend(out_shape);
    let r = random_tensor(&full_out, &mut rng, -1.0, 1.0);
    let mask_seed = seed ^ 0xA5A5;
    let loss = |layer: &mut Layer<f64>, x: &Tensor<f64>| -> f64 {
        let y = layer.forward(x, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    layer.forward(x, Mode::Train, &mut Rng::new(mask_seed)).map_err(|e| e.to_string())?;
    let back = layer.backward(&r).map_err(|e| e.to_string())?;
    let mut stats = GradStats::default();

    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let plus = loss(&mut layer, &xp);
        xp.data_mut()[i] = orig - FD_STEP;
        let minus = loss(&mut layer, &xp);
        xp.data_mut()[i] = orig;
        stats.record(back.input_grad.data()[i], (plus - minus) / (2.0 * FD_STEP));
    }
    for (pi, g) in back.param_grads.iter().enumerate() {
        for j in 0..g.len() {
            let orig = layer.params()[pi].data()[j];
            layer.params_mut()[pi].data_mut()[j] = orig + FD_STEP;
            let plus = loss(&mut layer, x);
            layer.params_mut()[pi].data_mut()[j] = orig - FD_STEP;
            let minus = loss(&mut layer, x);
            layer.params_mut()[pi].data_mut()[j] = orig;
            stats.record(g.data()[j], (plus - minus) / (2.0 * FD_STEP));
        }
    }
    Ok(stats)
}

/// The combined softmax + cross-entropy gradient against central
/// differences of the mean loss over the logits.
pub fn check_softmax_ce(seed: u64) -> GradStats {
    let mut rng = Rng::new(seed);
    let n = 1 + rng.below(4) as usize;
    let z = random_tensor(&[n, 5], &mut rng, -3.0, 3.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(5) as usize).collect();
    let y = one_hot::<f64>(&labels, 5).unwrap();
    let loss = |z: &Tensor<f64>| cross_entropy_loss(&softmax(z).unwrap(), &y).unwrap();
    let g = softmax_cross_entropy_backward(&softmax(&z).unwrap(), &y).unwrap();
    let mut stats = GradStats::default();
    let mut zp = z.clone();
    for i in 0..z.len() {
        let orig = zp.data()[i];
        zp.data_mut()[i] = orig + FD_STEP;
        let plus = loss(&zp);
        zp.data_mut()[i] = orig - FD_STEP;
        let minus = loss(&zp);
        zp.data_mut()[i] = orig;
        stats.record(g.data()[i], (plus - minus) / (2.0 * FD_STEP));
    }
    stats
}

/// One gradient-check instance per layer kind, with randomized shapes.
pub fn layer_instance(kind: &str, seed: u64) -> Result<GradStats, String> {
    let mut rng = Rng::new(seed.wrapping_mul(7919).wrapping_add(17));
    let mut shape_rng = rng.fork(&[0]);
    let mut dim = |lo: u64, hi: u64| (lo + shape_rng.below(hi - lo + 1)) as usize;
    let n = dim(1, 2);
    match kind {
        "conv" => {
            let (h, w, c) = (dim(3, 6), dim(3, 6), dim(1, 3));
            let k = [1usize, 3][dim(0, 1)];
            let stride = dim(1, 2);
            let padding = if dim(0, 1) == 0 { Padding::Same } else { Padding::Valid };
            let spec = LayerSpec::Conv2d {
                out_channels: dim(1, 3),
                kernel_h: k,
                kernel_w: k,
                stride,
                padding,
            };
            let x = random_tensor(&[n, h, w, c], &mut rng, -1.0, 1.0);
            check_layer(&spec, &x, seed)
        }
        "pool" => {
            let (h, w, c) = (dim(2, 7), dim(2, 7), dim(1, 3));
            let x = well_separated(&[n, h, w, c], &mut rng);
            check_layer(&LayerSpec::MaxPool, &x, seed)
        }
        "relu" => {
            let x = away_from_zero(&[n, dim(2, 4), dim(2, 4), dim(1, 3)], &mut rng);
            check_layer(&LayerSpec::Relu, &x, seed)
        }
        "sigmoid" => {
            let x = random_tensor(&[n, dim(2, 4), dim(1, 4)], &mut rng, -4.0, 4.0);
            check_layer(&LayerSpec::Sigmoid, &x, seed)
        }
        "dense" => {
            let x = random_tensor(&[n, dim(1, 12)], &mut rng, -1.0, 1.0);
            check_layer(&LayerSpec::Dense { units: dim(1, 8) }, &x, seed)
        }
        "dropout" => {
            let x = random_tensor(&[n, dim(1, 20)], &mut rng, -1.0, 1.0);
            let rate = rng.uniform_range(0.1, 0.7);
            check_layer(&LayerSpec::Dropout { rate }, &x, seed)
        }
        "flatten" => {
            let x = random_tensor(&[n, dim(1, 3), dim(1, 3), dim(1, 3)], &mut rng, -1.0, 1.0);
            check_layer(&LayerSpec::Flatten, &x, seed)
        }
        "softmax" => {
            let x = random_tensor(&[n, 5], &mut rng, -3.0, 3.0);
            check_layer(&LayerSpec::Softmax, &x, seed)
        }
        "softmax_ce" => Ok(check_softmax_ce(seed)),
        other => Err(format!("unknown layer kind {other}")),
    }
}

pub const LAYER_KINDS: [&str; 9] = ["conv", "pool", "relu", "sigmoid", "dense", "dropout", "flatten", "softmax", "softmax_ce"];

/// Forward that mirrors `Model::forward` in train mode and also records
/// the ReLU sign pattern and 2×2 argmax pattern, so a finite-difference
/// step that crosses a kink can be recognised.
fn model_forward_with_pattern(model: &Model<f64>, x: &Tensor<f64>, mask_seed: u64) -> (Tensor<f64>, Vec<u32>) {
    let mut h = x.clone();
    let mut pattern = Vec::new();
    let mut rng = Rng::new(mask_seed);
    for layer in model.layers() {
        match layer {
            Layer::Activation(a) if a.kind == histoconv::nn::ActivationKind::Relu => {
                pattern.extend(h.data().iter().map(|&v| u32::from(v > 0.0)));
            }
            Layer::MaxPool(_) => {
                let s = h.shape().to_vec();
                let (hh, ww, c) = (s[1], s[2], s[3]);
                for img in h.data().chunks_exact(hh * ww * c) {
                    for oy in 0..hh / 2 {
                        for ox in 0..ww / 2 {
                            for ch in 0..c {
                                let at = |dy: usize, dx: usize| img[((2 * oy + dy) * ww + 2 * ox + dx) * c + ch];
                                let mut best = 0u32;
                                let mut best_v = at(0, 0);
                                for (k, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                                    if at(dy, dx) > best_v {
                                        best_v = at(dy, dx);
                                        best = k as u32 + 1;
                                    }
                                }
                                pattern.push(best);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        h = match layer {
            Layer::Dropout(d) => d.clone().forward(&h, &mut rng).unwrap(),
            other => other.infer(&h).unwrap(),
        };
    }
    (h, pattern)
}

/// Steps tried in turn when ±h moves a ReLU sign or pooling argmax.
pub const KINK_STEPS: [f64; 4] = [FD_STEP, 1e-6, 1e-7, 1e-8];

/// Full-model check: every parameter of the toy network against central
/// differences of the mean cross-entropy. When ±h changes a ReLU sign or
/// pooling argmax the step shrinks; elements still straddling a kink at the
/// smallest step are skipped and counted.
pub fn check_model(seed: u64) -> Result<GradStats, String> {
    let cfg = ModelConfig::toy();
    let mut rng = Rng::new(seed);
    let mut model: Model<f64> = build_model(&cfg, &mut rng).map_err(|e| e.to_string())?;
    let x = random_tensor(&[2, 8, 8, 3], &mut rng, 0.0, 1.0);
    let labels = vec![rng.below(5) as usize, rng.below(5) as usize];
    let y = one_hot::<f64>(&labels, 5).unwrap();
    let mask_seed = seed.wrapping_add(99);

    let (probs, base_pattern) = model_forward_with_pattern(&model, &x, mask_seed);
    let reference = model.clone().forward(&x, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
    ensure!(probs == reference, "pattern forward disagrees with Model::forward");
    let analytic = model.loss_and_grads(&x, &labels, &mut Rng::new(mask_seed)).map_err(|e| e.to_string())?;

    let eval = |m: &Model<f64>| {
        let (p, pat) = model_forward_with_pattern(m, &x, mask_seed);
        (cross_entropy_loss(&p, &y).unwrap(), pat)
    };
    let mut stats = GradStats::default();
    let count = analytic.grads.len();
    for pi in 0..count {
        for j in 0..analytic.grads[pi].len() {
            let orig = model.params()[pi].data()[j];
            let mut numeric = None;
            for h in KINK_STEPS {
                model.params_mut()[pi].data_mut()[j] = orig + h;
                let (plus, pat_plus) = eval(&model);
                model.params_mut()[pi].data_mut()[j] = orig - h;
                let (minus, pat_minus) = eval(&model);
                model.params_mut()[pi].data_mut()[j] = orig;
                if pat_plus == base_pattern && pat_minus == base_pattern {
                    numeric = Some((plus - minus) / (2.0 * h));
                    break;
                }
                stats.refined += 1;
            }
            match numeric {
                Some(n) => stats.record(analytic.grads[pi].data()[j], n),
                None => stats.skipped += 1,
            }
        }
    }
    Ok(stats)
}

pub const GRAD_INSTANCES: u64 = 20;

pub fn criterion_gradients() -> Check {
    let start = Instant::now();
    let mut lines = Vec::new();
    for kind in LAYER_KINDS {
        let mut total = GradStats::default();
        for s in 0..GRAD_INSTANCES {
            let st = layer_instance(kind, s)?;
            ensure!(st.max_rel <= FD_TOL, "{kind} instance {s}: max relative error {:.3e}", st.max_rel);
            total.merge(st);
        }
        lines.push(format!("{kind} {:.1e}", total.max_rel));
    }
    let mut model_total = GradStats::default();
    for s in 0..GRAD_INSTANCES {
        let st = check_model(s)?;
        ensure!(st.max_rel <= FD_TOL, "toy model instance {s}: max relative error {:.3e}", st.max_rel);
        ensure!(st.skipped * 1000 <= st.checked + st.skipped, "toy model instance {s}: {} of {} parameters skipped at kinks", st.skipped, st.checked + st.skipped);
        model_total.merge(st);
    }
    lines.push(format!(
        "model {:.1e} ({} checked, {} near a kink and re-stepped, {} skipped)",
        model_total.max_rel, model_total.checked, model_total.refined, model_total.skipped
    ));
    within(start.elapsed(), 120.0)?;
    Ok(format!("{} instances each; max rel err: {}", GRAD_INSTANCES, lines.join(", ")))
}

// ---------------------------------------------------------------------------
// optimizers: scalar recurrences written straight from the update equations

#[derive(Debug, Clone)]
pub struct ScalarOracle {
    cfg: OptimizerConfig,
    t: u32,
    m: f64,
    v: f64,
    /// Running β₁ᵗ and β₂ᵗ, and the running product Π β₁ⁱ.
    b1_pow: f64,
    b2_pow: f64,
    b1_tri: f64,
}

impl ScalarOracle {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: 0.0,
            v: 0.0,
            b1_pow: 1.0,
            b2_pow: 1.0,
            b1_tri: 1.0,
        }
    }

    pub fn step(&mut self, w: f64, g: f64) -> f64 {
        let c = &self.cfg;
        let eta = c.learning_rate;
        self.t += 1;
        self.b1_pow *= c.beta1;
        self.b2_pow *= c.beta2;
        self.b1_tri *= self.b1_pow;
        match c.kind {
            OptimizerKind::Sgd => w - eta * g,
            OptimizerKind::Adam => {
                self.m = c.beta1 * self.m + (1.0 - c.beta1) * g;
                self.v = c.beta2 * self.v + (1.0 - c.beta2) * g * g;
                let m_hat = self.m / (1.0 - self.b1_pow);
                let v_hat = self.v / (1.0 - self.b2_pow);
                w - eta * m_hat / (v_hat.sqrt() + c.epsilon)
            }
            OptimizerKind::Rmsprop => {
                // E[G²]ₜ = λE[G²]ₜ₋₁ + (1 − λ)Gₜ²
                self.v = c.rho * self.v + (1.0 - c.rho) * g * g;
                w - eta * g / (self.v.sqrt() + c.epsilon)
            }
            OptimizerKind::Nadam => {
                self.m = c.beta1 * self.m + (1.0 - c.beta1) * g;
                self.v = c.beta2 * self.v + (1.0 - c.beta2) * g * g;
                let m_hat = self.m / (1.0 - self.b1_pow);
                let prod = match c.nadam_product {
                    NadamProduct::Power => self.b1_pow,
                    NadamProduct::Triangular => self.b1_tri,
                };
                let g_hat = g / (1.0 - prod);
                let m_tilde = self.b1_pow * c.beta1 * m_hat + (1.0 - self.b1_pow) * g_hat;
                let denom = if c.nadam_corrected_v {
                    (self.v / (1.0 - self.b2_pow)).sqrt()
                } else {
                    self.v.sqrt()
                };
                w - eta * m_tilde / (denom + c.epsilon)
            }
        }
    }
}

/// Tensor-path trajectory on a 1-element tensor.
pub fn tensor_trajectory(cfg: &OptimizerConfig, w0: f64, grads: &[f64]) -> Vec<f64> {
    let mut w = Tensor::new(vec![1], vec![w0]).unwrap();
    let mut opt = Optimizer::new(cfg.clone(), [&w]).unwrap();
    grads
        .iter()
        .map(|&g| {
            opt.step(vec![&mut w], &[Tensor::new(vec![1], vec![g]).unwrap()]).unwrap();
            w.data()[0]
        })
        .collect()
}

pub fn oracle_trajectory(cfg: &OptimizerConfig, w0: f64, grads: &[f64]) -> Vec<f64> {
    let mut o = ScalarOracle::new(cfg.clone());
    let mut w = w0;
    grads
        .iter()
        .map(|&g| {
            w = o.step(w, g);
            w
        })
        .collect()
}

fn log_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    (rng.uniform_range(lo.ln(), hi.ln())).exp()
}

pub fn random_optimizer_case(kind: OptimizerKind, seed: u64) -> (OptimizerConfig, f64, Vec<f64>) {
    let mut rng = Rng::new(seed);
    let cfg = OptimizerConfig {
        kind,
        learning_rate: log_uniform(&mut rng, 1e-5, 1e-1),
        beta1: rng.uniform_range(0.5, 0.99),
        beta2: rng.uniform_range(0.9, 0.9999),
        epsilon: log_uniform(&mut rng, 1e-10, 1e-6),
        rho: rng.uniform_range(0.5, 0.99),
        decay: None,
        nadam_product: if rng.bernoulli(0.5) { NadamProduct::Power } else { NadamProduct::Triangular },
        nadam_corrected_v: rng.bernoulli(0.5),
    };
    let w0 = rng.uniform_range(-2.0, 2.0);
    let scale = log_uniform(&mut rng, 1e-3, 1e2);
    let grads = (0..100).map(|_| rng.uniform_range(-1.0, 1.0) * scale).collect();
    (cfg, w0, grads)
}

pub fn max_trajectory_gap(cfg: &OptimizerConfig, w0: f64, grads: &[f64]) -> f64 {
    let a = tensor_trajectory(cfg, w0, grads);
    let b = oracle_trajectory(cfg, w0, grads);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub const NADAM_PRINTED_FIRST_STEP: f64 = -0.05724;

pub fn criterion_optimizers() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for kind in OptimizerKind::ALL {
        for case in 0..1000u64 {
            let (cfg, w0, grads) = random_optimizer_case(kind, case);
            let gap = max_trajectory_gap(&cfg, w0, &grads);
            ensure!(gap <= 1e-10, "{kind} case {case}: tensor vs oracle gap {gap:.3e}");
            worst = worst.max(gap);
        }
    }
    let eta = 1e-3;
    let mut g = 1e-6;
    while g <= 1e6 {
        for sign in [1.0, -1.0] {
            let w = tensor_trajectory(&OptimizerConfig::new(OptimizerKind::Adam, eta), 0.0, &[sign * g])[0];
            ensure!((0.99 * eta..=eta).contains(&w.abs()), "Adam first step {w:e} for g={:e}", sign * g);
        }
        g *= 10f64.sqrt();
    }
    let w1 = tensor_trajectory(&OptimizerConfig::new(OptimizerKind::Nadam, 1e-3), 0.0, &[1.0])[0];
    let verbatim = -(1e-3 * (0.81 * 1.0 + 0.1 * 10.0) / (0.001f64.sqrt() + 1e-8));
    ensure!((w1 - verbatim).abs() <= 1e-6, "Nadam first step {w1} vs {verbatim}");
    ensure!(
        (w1 - NADAM_PRINTED_FIRST_STEP).abs() <= 5e-6,
        "Nadam first step {w1} does not round to {NADAM_PRINTED_FIRST_STEP}"
    );
    within(start.elapsed(), 60.0)?;
    Ok(format!("4000 trajectories, max gap {worst:.1e}; Adam first step in [0.99η, η]; Nadam w₁ = {w1:.7}"))
}

/// `C(w) = ½Lw²` under the tensor SGD path for 200 steps.
pub fn sgd_quadratic(l: f64, eta: f64, steps: usize) -> (f64, f64) {
    let w0 = 1.0;
    let mut w = Tensor::new(vec![1], vec![w0]).unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Sgd, eta), [&w]).unwrap();
    for _ in 0..steps {
        let g = Tensor::new(vec![1], vec![l * w.data()[0]]).unwrap();
        opt.step(vec![&mut w], &[g]).unwrap();
    }
    (w.data()[0], w0 * (1.0 - eta * l).powi(steps as i32))
}

pub fn criterion_sgd_boundary() -> Check {
    let steps = 200;
    for l in [0.5, 1.0, 3.0, 10.0, 250.0] {
        let (w_div, theory_div) = sgd_quadratic(l, 2.1 / l, steps);
        let (w_conv, theory_conv) = sgd_quadratic(l, 1.9 / l, steps);
        ensure!(w_div.abs() > 1e6, "L={l}: η=2.1/L ended at {w_div:e}, expected divergence");
        ensure!(w_conv.abs() < 1e-6, "L={l}: η=1.9/L ended at {w_conv:e}, expected convergence");
        ensure!(((w_div - theory_div) / theory_div).abs() < 1e-9, "L={l}: {w_div:e} vs closed form {theory_div:e}");
        ensure!(((w_conv - theory_conv) / theory_conv).abs() < 1e-9, "L={l}: {w_conv:e} vs closed form {theory_conv:e}");
    }
    Ok(format!("|w_{steps}| ≈ 1.1^{steps} at 2.1/L, 0.9^{steps} at 1.9/L for 5 curvatures"))
}

// ---------------------------------------------------------------------------
// metrics

/// The per-class rows of the published performance table:
/// (precision, recall, f1, support).
pub const PUBLISHED_CLASS_ROWS: [(f64, f64, f64, u64); 5] = [
    (0.96, 0.92, 0.94, 902),
    (0.85, 0.94, 0.89, 378),
    (0.90, 0.82, 0.86, 281),
    (0.83, 0.90, 0.87, 298),
    (0.90, 0.90, 0.90, 288),
];

pub fn criterion_published_aggregates() -> Check {
    let rows: Vec<ClassScores> = PUBLISHED_CLASS_ROWS
        .iter()
        .map(|&(precision, recall, f1, support)| ClassScores {
            precision,
            recall,
            f1,
            support,
        })
        .collect();
    let agg = aggregate(&rows).map_err(|e| e.to_string())?;
    let r2 = |x: f64| round_half_up(x, 2);
    ensure!(agg.total_support == 2147, "total support {}", agg.total_support);
    ensure!(r2(agg.macro_avg.precision) == 0.89, "macro precision {} → {}", agg.macro_avg.precision, r2(agg.macro_avg.precision));
    ensure!(r2(agg.weighted_avg.precision) == 0.91, "weighted precision {} → {}", agg.weighted_avg.precision, r2(agg.weighted_avg.precision));
    // accuracy equals support-weighted recall
    ensure!(r2(agg.weighted_avg.recall) == 0.90, "accuracy {} → {}", agg.weighted_avg.recall, r2(agg.weighted_avg.recall));
    Ok(format!(
        "macro P {:.4}→0.89, weighted P {:.4}→0.91, accuracy {:.4}→0.90, support 2147",
        agg.macro_avg.precision, agg.weighted_avg.precision, agg.weighted_avg.recall
    ))
}

/// Brute-force report fields from an explicit list of (true, predicted)
/// samples.
#[derive(Debug, PartialEq)]
pub struct OracleMetrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub accuracy: f64,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub weighted_p: f64,
    pub weighted_r: f64,
    pub weighted_f1: f64,
    pub total: u64,
}

pub fn metrics_oracle(samples: &[(usize, usize)], k: usize) -> OracleMetrics {
    let mut tp = vec![0u64; k];
    let mut fp = vec![0u64; k];
    let mut fne = vec![0u64; k];
    let mut correct = 0u64;
    for &(t, p) in samples {
        if t == p {
            tp[t] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fne[t] += 1;
        }
    }
    let total = samples.len() as u64;
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..k).map(|c| div(tp[c], tp[c] + fp[c])).collect();
    let recall: Vec<f64> = (0..k).map(|c| div(tp[c], tp[c] + fne[c])).collect();
    let f1: Vec<f64> = (0..k)
        .map(|c| {
            let (p, r) = (precision[c], recall[c]);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect();
    let support: Vec<u64> = (0..k).map(|c| tp[c] + fne[c]).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / k as f64;
    let weighted = |v: &[f64]| v.iter().zip(&support).map(|(m, &s)| m * s as f64).sum::<f64>() / total as f64;
    OracleMetrics {
        accuracy: correct as f64 / total as f64,
        macro_p: mean(&precision),
        macro_r: mean(&recall),
        macro_f1: mean(&f1),
        weighted_p: weighted(&precision),
        // Σ (TPᵢ/nᵢ)(nᵢ/N) = Σ TPᵢ / N
        weighted_r: correct as f64 / total as f64,
        weighted_f1: weighted(&f1),
        precision,
        recall,
        f1,
        support,
        total,
    }
}

pub fn random_confusion(seed: u64) -> Vec<Vec<u64>> {
    let mut rng = Rng::new(seed);
    let max = 1 + rng.below(60);
    let sparsity = rng.uniform_range(0.0, 0.6);
    loop {
        let m: Vec<Vec<u64>> = (0..5)
            .map(|_| (0..5).map(|_| if rng.bernoulli(sparsity) { 0 } else { rng.below(max + 1) }).collect())
            .collect();
        if m.iter().flatten().any(|&v| v > 0) {
            return m;
        }
    }
}

pub fn compare_with_oracle(counts: Vec<Vec<u64>>) -> Result<(), String> {
    let mut samples = Vec::new();
    for (t, row) in counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            samples.extend(std::iter::repeat((t, p)).take(n as usize));
        }
    }
    let o = metrics_oracle(&samples, 5);
    let r = compute_metrics(&ConfusionMatrix::from_counts(counts.clone()).unwrap()).map_err(|e| e.to_string())?;
    ensure!(r.total_support == o.total, "total");
    ensure!(r.accuracy == o.accuracy, "accuracy {} vs {}", r.accuracy, o.accuracy);
    ensure!(r.weighted_avg.recall == r.accuracy, "weighted recall {} != accuracy {}", r.weighted_avg.recall, r.accuracy);
    for c in 0..5 {
        let s = r.per_class[c].scores;
        ensure!(s.precision == o.precision[c], "precision[{c}] {} vs {}", s.precision, o.precision[c]);
        ensure!(s.recall == o.recall[c], "recall[{c}]");
        ensure!(s.f1 == o.f1[c], "f1[{c}]");
        ensure!(s.support == o.support[c], "support[{c}]");
        ensure!(r.per_class[c].precision_undefined == (o.precision[c] == 0.0 && counts.iter().all(|row| row[c] == 0)), "precision flag[{c}]");
    }
    let pairs = [
        ("macro P", r.macro_avg.precision, o.macro_p),
        ("macro R", r.macro_avg.recall, o.macro_r),
        ("macro F1", r.macro_avg.f1, o.macro_f1),
        ("weighted P", r.weighted_avg.precision, o.weighted_p),
        ("weighted R", r.weighted_avg.recall, o.weighted_r),
        ("weighted F1", r.weighted_avg.f1, o.weighted_f1),
    ];
    for (name, a, b) in pairs {
        ensure!(a == b, "{name}: {a} vs oracle {b}");
    }
    ensure!(r.confusion.total() == r.per_class.iter().map(|c| c.scores.support).sum::<u64>(), "supports do not sum to total");
    Ok(())
}

pub fn criterion_metrics_oracle() -> Check {
    for seed in 0..1000 {
        compare_with_oracle(random_confusion(seed)).map_err(|e| format!("matrix {seed}: {e}"))?;
    }
    Ok("1000 random 5×5 matrices match the counting oracle exactly".into())
}

// ---------------------------------------------------------------------------
// dataset

pub fn expected_table() -> CountTable {
    let rows: Vec<MagnificationRow> = Magnification::ALL
        .iter()
        .zip(BREAKHIS_COUNTS)
        .map(|(&magnification, (b, m))| MagnificationRow {
            magnification,
            counts: CountRow {
                benign: b as u64,
                malignant: m as u64,
                total: (b + m) as u64,
            },
        })
        .collect();
    let total = rows.iter().fold(CountRow::default(), |acc, r| CountRow {
        benign: acc.benign + r.counts.benign,
        malignant: acc.malignant + r.counts.malignant,
        total: acc.total + r.counts.total,
    });
    CountTable { rows, total }
}

pub fn criterion_dataset() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let patients = breakhis_like_patients(&BREAKHIS_COUNTS);
    ensure!(patients.len() == 82, "{} patients", patients.len());
    write_corpus(dir.path(), &patients, CorpusContent::Empty, 0).map_err(|e| e.to_string())?;
    let report = build_index(dir.path()).map_err(|e| e.to_string())?;
    let index = report.index;
    ensure!(report.skipped.is_empty(), "skipped files: {:?}", &report.skipped[..report.skipped.len().min(3)]);
    ensure!(index.counts() == &expected_table(), "indexed counts differ:\n{}", index.counts().render());
    ensure!(index.counts().internal_inconsistencies().is_empty(), "clean table flagged");

    let mut injected = index.counts().clone();
    injected.rows[0].counts.benign = 652;
    let flagged: Vec<String> = injected.internal_inconsistencies().into_iter().map(|d| d.location).collect();
    ensure!(flagged.iter().any(|l| l == "40X"), "40X row not flagged: {flagged:?}");
    ensure!(flagged.iter().any(|l| l == "benign column"), "benign column not flagged: {flagged:?}");

    let total = index.records().len() as f64;
    let max_share = index.patient_image_counts().iter().map(|p| p.1).max().unwrap() as f64 / total;
    let (mut lo, mut hi) = (f64::MAX, 0.0f64);
    for seed in 0..1000 {
        let split = patient_exclusive_split(&index, 0.7, seed).map_err(|e| e.to_string())?;
        split.validate(&index).map_err(|e| format!("seed {seed}: {e}"))?;
        let train = split.record_indices(&index, Side::Train);
        let test = split.record_indices(&index, Side::Test);
        let tp: std::collections::BTreeSet<&str> = train.iter().map(|&i| index.records()[i].patient_id.as_str()).collect();
        ensure!(test.iter().all(|&i| !tp.contains(index.records()[i].patient_id.as_str())), "seed {seed}: patient overlap");
        ensure!(train.len() + test.len() == index.records().len(), "seed {seed}: records lost");
        let f = split.train_image_fraction(&index);
        ensure!(f >= 0.70 && f < 0.70 + max_share, "seed {seed}: train fraction {f} outside [0.70, {})", 0.70 + max_share);
        lo = lo.min(f);
        hi = hi.max(f);
    }
    Ok(format!(
        "7909 images over 82 patients indexed exactly; 1000 splits disjoint, train fraction in [{lo:.4}, {hi:.4}] ⊂ [0.70, {:.4})",
        0.70 + max_share
    ))
}

// ---------------------------------------------------------------------------
// augmentation

pub fn gradient_image(h: usize, w: usize, a: f64, b: f64) -> Tensor<f64> {
    Tensor::from_fn(&[h, w, 3], |i| {
        let (y, x, c) = (i / (w * 3), (i / 3) % w, i % 3);
        (a * x as f64 + b * y as f64 + 0.1 * c as f64) / (h + w) as f64
    })
}

/// Fraction of interior pixels where rotating by `θ` then `−θ` lands
/// within the value range of the original pixel's 8-neighbourhood.
pub fn rotation_round_trip_agreement(img: &Tensor<f64>, degrees: f64) -> f64 {
    let s = img.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let there = apply_affine(img, &AffineTransform::rotation(degrees, h, w), FillMode::Nearest).unwrap();
    let back = apply_affine(&there, &AffineTransform::rotation(-degrees, h, w), FillMode::Nearest).unwrap();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let radius = cy.min(cx) - 2.0;
    let (mut agree, mut total) = (0usize, 0usize);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            if ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt() > radius {
                continue;
            }
            total += 1;
            let ok = (0..c).all(|ch| {
                let orig = img.at(&[y, x, ch]);
                let mut tol = 0.0f64;
                for dy in [-1i64, 0, 1] {
                    for dx in [-1i64, 0, 1] {
                        let v = img.at(&[(y as i64 + dy) as usize, (x as i64 + dx) as usize, ch]);
                        tol = tol.max((v - orig).abs());
                    }
                }
                (back.at(&[y, x, ch]) - orig).abs() <= tol + 1e-12
            });
            agree += usize::from(ok);
        }
    }
    agree as f64 / total as f64
}

pub fn criterion_augment() -> Check {
    let start = Instant::now();
    let mut rng = Rng::new(7);
    for _ in 0..200 {
        let (h, w) = (1 + rng.below(40) as usize, 1 + rng.below(40) as usize);
        let img: Tensor<f32> = Tensor::from_fn(&[h, w, 3], |_| rng.uniform() as f32);
        let twice = hflip(&hflip(&img).unwrap()).unwrap();
        ensure!(twice.data().iter().zip(img.data()).all(|(a, b)| a.to_bits() == b.to_bits()), "hflip∘hflip differs at {h}x{w}");
        let same = augment_image(&img, &AugmentConfig::disabled(), &mut rng).unwrap();
        ensure!(same == img, "all-zero config changed a {h}x{w} image");
    }
    let mut worst = 1.0f64;
    for (i, deg) in [-42.0, -30.0, -17.5, -5.0, 3.0, 12.0, 25.0, 37.0, 42.0].into_iter().enumerate() {
        let img = gradient_image(64, 64, 1.0 + i as f64 * 0.3, 2.0 - i as f64 * 0.2);
        let a = rotation_round_trip_agreement(&img, deg);
        ensure!(a >= 0.99, "rotation {deg}°: interior agreement {a:.4}");
        worst = worst.min(a);
    }
    let img = gradient_image(48, 40, 1.0, 1.0);
    let cfg = AugmentConfig::default();
    for seed in 0..20 {
        let a = augment_image(&img, &cfg, &mut Rng::new(seed)).unwrap();
        let b = augment_image(&img, &cfg, &mut Rng::new(seed)).unwrap();
        ensure!(a == b, "seed {seed} not deterministic");
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("hflip involution and zero-config identity on 200 images; rotation round trip agreement ≥ {worst:.4}; seeded draws repeat"))
}

// ---------------------------------------------------------------------------
// desk-scale training

pub const DESK_IMAGES: usize = 2000;
pub const DESK_TRAIN: usize = 1400;
pub const DESK_EPOCHS: usize = 20;
pub const DESK_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Trains the desk model until test accuracy first reaches 0.9 or the
/// epoch cap; returns `(epochs used, best test accuracy, seconds)`.
pub fn desk_run(seed: u64) -> (usize, f64, f64) {
    let all = texture_set::<f32>(DESK_IMAGES, 32, 32, 1000 + seed);
    let idx: Vec<usize> = (0..DESK_IMAGES).collect();
    let (train_set, test_set) = (all.subset(&idx[..DESK_TRAIN]), all.subset(&idx[DESK_TRAIN..]));
    let cfg = TrainConfig {
        epochs: DESK_EPOCHS,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let model = build_model::<f32>(&ModelConfig::desk(), &mut Rng::new(seed)).unwrap();
    let mut trainer = Trainer::new(model, cfg).unwrap();
    let mut best = 0.0f64;
    for _ in 0..DESK_EPOCHS {
        let acc = trainer.run_epoch(&train_set, Some(&test_set)).unwrap().val_accuracy.unwrap();
        best = best.max(acc);
        if acc >= 0.9 {
            break;
        }
    }
    (trainer.epoch(), best, start.elapsed().as_secs_f64())
}

/// Trains with a zero learning rate and reports whether every parameter
/// kept its exact bit pattern.
pub fn lr_zero_is_frozen(seed: u64) -> bool {
    let set = texture_set::<f32>(120, 32, 32, seed);
    let model = build_model::<f32>(&ModelConfig::desk(), &mut Rng::new(seed)).unwrap();
    let before: Vec<Vec<u32>> = model.params().iter().map(|p| p.data().iter().map(|v| v.to_bits()).collect()).collect();
    let cfg = TrainConfig {
        epochs: 2,
        seed,
        optimizer: OptimizerConfig::new(OptimizerKind::Adam, 0.0),
        ..TrainConfig::default()
    };
    let out = train(model, &set, None, &cfg).unwrap();
    let after: Vec<Vec<u32>> = out.model.params().iter().map(|p| p.data().iter().map(|v| v.to_bits()).collect()).collect();
    before == after
}

pub fn criterion_desk_learning() -> Check {
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in DESK_SEEDS {
        let (epochs, acc, secs) = desk_run(seed);
        let ok = acc >= 0.9 && secs <= 300.0;
        passed += usize::from(ok);
        lines.push(format!("seed {seed}: {acc:.3} after {epochs} ep, {secs:.0}s"));
    }
    ensure!(passed >= 9, "only {passed}/10 seeds reached 90% within budget: {}", lines.join("; "));
    ensure!(lr_zero_is_frozen(3), "lr=0 run changed parameters");
    Ok(format!("{passed}/10 seeds ≥ 90% test accuracy; lr=0 leaves parameters bit-identical ({})", lines.join("; ")))
}

// ---------------------------------------------------------------------------
// checkpoints

pub fn criterion_checkpoint() -> Check {
    let set = texture_set::<f32>(60, 8, 8, 4);
    let model = build_model::<f32>(&ModelConfig::toy(), &mut Rng::new(4)).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 16,
        seed: 4,
        ..TrainConfig::default()
    };
    let trained = train(model, &set, None, &cfg).map_err(|e| e.to_string())?.model;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.hcnn");
    checkpoint::save(&trained, 4, 2, &path).map_err(|e| e.to_string())?;
    let (loaded, header) = checkpoint::load::<f32>(&path).map_err(|e| e.to_string())?;
    ensure!(header.epoch == 2 && header.seed == 4, "header {header:?}");
    let a = predict_proba(&trained, &set).map_err(|e| e.to_string())?;
    let b = predict_proba(&loaded, &set).map_err(|e| e.to_string())?;
    ensure!(
        a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()),
        "predictions differ after round trip"
    );

    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mut bad_magic = bytes.clone();
    bad_magic[..4].copy_from_slice(b"HCNX");
    let e = checkpoint::from_bytes::<f32>(&bad_magic).err().ok_or("corrupted magic accepted")?;
    ensure!(matches!(e, Error::BadMagic) && e.to_string() == "bad magic" && e.exit_code() == 3, "magic: {e} (exit {})", e.exit_code());
    let mut bad_len = bytes.clone();
    let len = u32::from_le_bytes(bad_len[8..12].try_into().unwrap());
    bad_len[8..12].copy_from_slice(&(len + 7).to_le_bytes());
    let e = checkpoint::from_bytes::<f32>(&bad_len).err().ok_or("corrupted length accepted")?;
    ensure!(matches!(e, Error::Checkpoint(_)) && e.exit_code() == 3, "length: {e} (exit {})", e.exit_code());
    let e = checkpoint::from_bytes::<f32>(&bytes[..bytes.len() - 4]).err().ok_or("truncated blob accepted")?;
    ensure!(e.exit_code() == 3, "truncated: exit {}", e.exit_code());
    Ok(format!("{} predictions bit-identical; bad magic and bad length rejected with exit code 3", set.len()))
}
