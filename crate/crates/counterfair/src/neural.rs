//! Minimal feed-forward network with exact backpropagation.
//!
//! The network is deliberately tiny: dense layers with leaky-ReLU hidden
//! activations, inverted dropout (masks are scaled at train time so that
//! evaluation requires no correction), a linear output head, and the Adam
//! optimizer. Sigmoid/softmax live in the loss layer ([`sigmoid_bce`],
//! [`softmax_ce`], [`squared`]), so downstream code that needs calibrated
//! probabilities applies [`sigmoid`] or [`softmax_probs`] to the raw head.
//!
//! All randomness (initialization and dropout masks) flows from the single
//! seed in [`MlpConfig`]; there is no hidden global state, and two networks
//! built from the same configuration are bit-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and optimizer settings for a multilayer perceptron.
///
/// `layer_dims` lists the widths from input to output, e.g. `[3, 10, 1]` for
/// one hidden layer of width 10. A bare affine map (`[d_in, d_out]`) is
/// permitted for linear baselines and closed-form tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Widths input → hidden(s) → output; every entry must be positive.
    pub layer_dims: Vec<usize>,
    /// Probability of zeroing a hidden unit at train time, in `[0, 1)`.
    pub dropout_rate: f64,
    /// Negative-side slope of the leaky ReLU, strictly positive.
    pub leaky_slope: f64,
    /// Seed for initialization and the dropout mask stream.
    pub seed: u64,
    /// Adam step size.
    pub learning_rate: f64,
    /// Minibatch size used by training loops.
    pub batch_size: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![3, 10, 1],
            dropout_rate: 0.1,
            leaky_slope: 0.01,
            seed: 0,
            learning_rate: 1e-4,
            batch_size: 128,
        }
    }
}

impl MlpConfig {
    /// Checks the structural invariants listed on the fields.
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::validation(
                "layer_dims needs at least an input and an output width",
            ));
        }
        if let Some(pos) = self.layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::validation(format!(
                "layer_dims[{pos}] is zero; every layer needs at least one unit"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::validation(format!(
                "dropout_rate must lie in [0,1), got {}",
                self.dropout_rate
            )));
        }
        if !self.leaky_slope.is_finite() || self.leaky_slope <= 0.0 {
            return Err(Error::validation(format!(
                "leaky_slope must be a positive real, got {}",
                self.leaky_slope
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::validation(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        Ok(())
    }

    /// Total number of scalar parameters (weights plus biases).
    pub fn num_params(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

fn default_dropout_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// Network parameters together with Adam state.
///
/// Weight matrices are stored row-major per layer: `weights[l][o * in + i]`
/// maps input unit `i` to output unit `o` of layer `l`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    config: MlpConfig,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: u64,
    /// Dropout mask stream; rebuilt from the seed when deserializing, so a
    /// persisted network resumes with a fresh mask sequence.
    #[serde(skip, default = "default_dropout_rng")]
    dropout_rng: ChaCha8Rng,
}

/// Activations cached by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Post-activation values per layer; `acts[0]` is the input, `acts[L]`
    /// the linear output head.
    acts: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pres: Vec<Vec<f64>>,
    /// Scaled dropout masks per hidden layer (`None` when dropout was off).
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    /// The linear output head for this forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache always has an output layer")
    }
}

/// Parameter gradients with the same shapes as the network they came from.
#[derive(Debug, Clone)]
pub struct Grads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Grads {
    /// All-zero gradients shaped like `params`.
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            w: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            b: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Accumulates `other` into `self`.
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Multiplies every entry by `factor` (e.g. `1/batch` after summing).
    pub fn scale(&mut self, factor: f64) {
        for a in self.w.iter_mut().chain(self.b.iter_mut()) {
            for x in a.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// Largest absolute entry, handy for divergence checks.
    pub fn max_abs(&self) -> f64 {
        self.w
            .iter()
            .chain(self.b.iter())
            .flat_map(|v| v.iter())
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }
}

impl MlpParams {
    /// Initializes a network from `config`.
    ///
    /// Weights are drawn from the symmetric scaled-uniform distribution
    /// `U(−s, s)` with `s = sqrt(6 / (fan_in + fan_out))`; biases start at
    /// zero, Adam moments at zero. The same seed yields bit-identical
    /// parameters.
    pub fn init(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for dims in config.layer_dims.windows(2) {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-scale..scale))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        let m_w: Vec<Vec<f64>> = weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let m_b: Vec<Vec<f64>> = biases.iter().map(|b| vec![0.0; b.len()]).collect();
        // A distinct stream keeps dropout masks independent of the
        // initialization draws while still keyed by the one seed.
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
        dropout_rng.set_stream(1);
        Ok(Self {
            config: config.clone(),
            v_w: m_w.clone(),
            v_b: m_b.clone(),
            m_w,
            m_b,
            weights,
            biases,
            step: 0,
            dropout_rng,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    /// Number of optimizer steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn input_dim(&self) -> usize {
        self.config.layer_dims[0]
    }

    /// Output width of the network.
    pub fn output_dim(&self) -> usize {
        *self.config.layer_dims.last().unwrap()
    }

    /// Runs the network on one input.
    ///
    /// Hidden layers apply leaky ReLU; when `training` is true and the
    /// dropout rate is positive, inverted-dropout masks (scaled by
    /// `1/keep`) are drawn from the internal stream. The output head is
    /// linear. With `training = false` the pass is deterministic.
    pub fn forward(&mut self, input: &[f64], training: bool) -> Result<ForwardCache> {
        if input.len() != self.input_dim() {
            return Err(Error::validation(format!(
                "input width {} does not match network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerics("non-finite network input"));
        }
        let n_layers = self.weights.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(n_layers.saturating_sub(1));
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let fan_in = self.config.layer_dims[l];
            let fan_out = self.config.layer_dims[l + 1];
            let w = &self.weights[l];
            let prev = &acts[l];
            let mut pre = self.biases[l].clone();
            for (o, pre_o) in pre.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(prev.iter()) {
                    acc += wi * xi;
                }
                *pre_o += acc;
            }
            let is_hidden = l + 1 < n_layers;
            let act = if is_hidden {
                let slope = self.config.leaky_slope;
                let mut a: Vec<f64> = pre.iter().map(|&z| leaky_relu(z, slope)).collect();
                let mask = if training && self.config.dropout_rate > 0.0 {
                    let keep = 1.0 - self.config.dropout_rate;
                    let m: Vec<f64> = (0..fan_out)
                        .map(|_| {
                            if self.dropout_rng.gen::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for (ai, mi) in a.iter_mut().zip(&m) {
                        *ai *= mi;
                    }
                    Some(m)
                } else {
                    None
                };
                masks.push(mask);
                a
            } else {
                pre.clone()
            };
            pres.push(pre);
            acts.push(act);
        }
        Ok(ForwardCache { acts, pres, masks })
    }

    /// Evaluation-mode forward pass returning only the linear output head.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        // Dropout is disabled, so the mask stream is untouched and the pass
        // can run on a shared reference.
        let n_layers = self.weights.len();
        if input.len() != self.input_dim() {
            return Err(Error::validation(format!(
                "input width {} does not match network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut cur = input.to_vec();
        for l in 0..n_layers {
            let fan_in = self.config.layer_dims[l];
            let fan_out = self.config.layer_dims[l + 1];
            let w = &self.weights[l];
            let mut next = self.biases[l].clone();
            for (o, next_o) in next.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(cur.iter()) {
                    acc += wi * xi;
                }
                *next_o += acc;
            }
            if l + 1 < n_layers {
                for v in next.iter_mut() {
                    *v = leaky_relu(*v, self.config.leaky_slope);
                }
            }
            let _ = fan_out;
            cur = next;
        }
        Ok(cur)
    }

    /// Exact reverse-mode gradients for the pass that produced `cache`.
    ///
    /// `upstream` is `∂L/∂output` at the linear head; the returned gradients
    /// are `∂L/∂W` and `∂L/∂b` per layer.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Grads> {
        let n_layers = self.weights.len();
        if cache.acts.len() != n_layers + 1 {
            return Err(Error::validation(
                "forward cache does not match network depth",
            ));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::validation(format!(
                "upstream gradient width {} does not match output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut grads = Grads::zeros_like(self);
        // The output head is linear, so ∂L/∂pre at the last layer equals the
        // upstream gradient directly.
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let fan_in = self.config.layer_dims[l];
            let prev = &cache.acts[l];
            for (o, &d) in delta.iter().enumerate() {
                grads.b[l][o] = d;
                let row = &mut grads.w[l][o * fan_in..(o + 1) * fan_in];
                for (gi, xi) in row.iter_mut().zip(prev.iter()) {
                    *gi = d * xi;
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through W_l, then the dropout mask and leaky ReLU of
            // hidden layer l-1.
            let mut back = vec![0.0; fan_in];
            let w = &self.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (bi, wi) in back.iter_mut().zip(row.iter()) {
                    *bi += d * wi;
                }
            }
            if let Some(mask) = &cache.masks[l - 1] {
                for (bi, mi) in back.iter_mut().zip(mask.iter()) {
                    *bi *= mi;
                }
            }
            let slope = self.config.leaky_slope;
            for (bi, &z) in back.iter_mut().zip(cache.pres[l - 1].iter()) {
                *bi *= if z > 0.0 { 1.0 } else { slope };
            }
            delta = back;
        }
        Ok(grads)
    }

    /// One Adam update with decay rates 0.9/0.999 and epsilon 1e-8.
    pub fn adam_step(&mut self, grads: &Grads, learning_rate: f64) -> Result<()> {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        for v in grads.w.iter().chain(grads.b.iter()) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::numerics("non-finite gradient in adam_step"));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let corr1 = 1.0 - BETA1.powf(t);
        let corr2 = 1.0 - BETA2.powf(t);
        let update = |theta: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..theta.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                theta[i] -= learning_rate * m_hat / (v_hat.sqrt() + EPS);
            }
        };
        for l in 0..self.weights.len() {
            update(&mut self.weights[l], &mut self.m_w[l], &mut self.v_w[l], &grads.w[l]);
            update(&mut self.biases[l], &mut self.m_b[l], &mut self.v_b[l], &grads.b[l]);
        }
        Ok(())
    }

    /// Copies all weights and biases into one flat vector (weights of layer
    /// 0, then its biases, then layer 1, ...). Used by finite-difference
    /// gradient checks.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config.num_params());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Overwrites all weights and biases from a flat vector laid out as in
    /// [`Self::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.config.num_params() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                self.config.num_params(),
                flat.len()
            )));
        }
        let mut idx = 0;
        for l in 0..self.weights.len() {
            let wl = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[idx..idx + wl]);
            idx += wl;
            let bl = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[idx..idx + bl]);
            idx += bl;
        }
        Ok(())
    }

    /// Flattens `grads` in the same order as [`Self::flat_params`].
    pub fn flat_grads(&self, grads: &Grads) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config.num_params());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&grads.w[l]);
            out.extend_from_slice(&grads.b[l]);
        }
        out
    }

    /// Serializes parameters (and optimizer state) to a JSON document with
    /// layer-indexed arrays.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Restores a network persisted by [`Self::to_json`]. The dropout mask
    /// stream restarts from the configured seed.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut params: MlpParams = serde_json::from_str(text)?;
        params.config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.config.seed);
        rng.set_stream(1);
        params.dropout_rng = rng;
        Ok(params)
    }

    /// Zeroes every weight matrix (biases untouched); test scaffolding for
    /// affine-identity checks.
    pub fn zero_weights(&mut self) {
        for w in self.weights.iter_mut() {
            for x in w.iter_mut() {
                *x = 0.0;
            }
        }
    }

    /// Sets the bias vector of layer `l`.
    pub fn set_bias(&mut self, l: usize, bias: &[f64]) -> Result<()> {
        if l >= self.biases.len() || bias.len() != self.biases[l].len() {
            return Err(Error::validation("bias shape mismatch"));
        }
        self.biases[l].copy_from_slice(bias);
        Ok(())
    }
}

/// Leaky ReLU: `z` for positive pre-activations, `slope·z` otherwise.
pub fn leaky_relu(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, in the stable
/// `max(x,0) − x·t + ln(1 + exp(−|x|))` form.
///
/// Returns `(loss, ∂loss/∂logit)`; the gradient is `σ(x) − t`.
pub fn sigmoid_bce(logit: f64, target: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * target + (1.0 + (-logit.abs()).exp()).ln();
    (loss, sigmoid(logit) - target)
}

/// Softmax probabilities with log-sum-exp stabilization.
pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of a softmax head against an integer class label.
///
/// Returns `(loss, ∂loss/∂logits)`; the gradient is `softmax − onehot`.
pub fn softmax_ce(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    assert!(class < logits.len(), "class index out of range");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[class];
    let mut grad = softmax_probs(logits);
    grad[class] -= 1.0;
    (loss, grad)
}

/// Squared error `(pred − target)²` with gradient `2(pred − target)`.
pub fn squared(pred: f64, target: f64) -> (f64, f64) {
    let diff = pred - target;
    (diff * diff, 2.0 * diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn config(dims: &[usize], seed: u64) -> MlpConfig {
        MlpConfig {
            layer_dims: dims.to_vec(),
            dropout_rate: 0.0,
            seed,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let cfg = config(&[3, 10, 1], 7);
        let a = MlpParams::init(&cfg).unwrap();
        let b = MlpParams::init(&cfg).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn zero_hidden_width_is_rejected() {
        let cfg = config(&[3, 0, 1], 0);
        assert!(MlpParams::init(&cfg).is_err());
        let cfg = config(&[3], 0);
        assert!(MlpParams::init(&cfg).is_err());
    }

    #[test]
    fn parameter_count_matches_shape_arithmetic() {
        let cfg = config(&[3, 10, 1], 0);
        assert_eq!(cfg.num_params(), 51);
        assert_eq!(MlpParams::init(&cfg).unwrap().flat_params().len(), 51);
    }

    #[test]
    fn zero_weights_yield_bias_output() {
        let cfg = config(&[3, 1], 0);
        let mut net = MlpParams::init(&cfg).unwrap();
        net.zero_weights();
        net.set_bias(0, &[0.37]).unwrap();
        let out = net.infer(&[5.0, -2.0, 0.1]).unwrap();
        assert_abs_diff_eq!(out[0], 0.37, epsilon = 1e-15);
    }

    #[test]
    fn leaky_relu_matches_definition() {
        assert_abs_diff_eq!(leaky_relu(-1.0, 0.01), -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(leaky_relu(2.5, 0.01), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let cfg = MlpConfig {
            layer_dims: vec![4, 6, 2],
            dropout_rate: 0.5,
            seed: 3,
            ..MlpConfig::default()
        };
        let mut net = MlpParams::init(&cfg).unwrap();
        let x = [0.3, -1.2, 0.8, 0.0];
        let a = net.forward(&x, false).unwrap().output().to_vec();
        let b = net.forward(&x, false).unwrap().output().to_vec();
        assert_eq!(a, b);
        assert_eq!(a, net.infer(&x).unwrap());
    }

    #[test]
    fn dropout_masks_scale_by_inverse_keep() {
        let cfg = MlpConfig {
            layer_dims: vec![2, 200, 1],
            dropout_rate: 0.4,
            seed: 11,
            ..MlpConfig::default()
        };
        let mut net = MlpParams::init(&cfg).unwrap();
        let cache = net.forward(&[1.0, 1.0], true).unwrap();
        let mask = cache.masks[0].as_ref().unwrap();
        let keep = 0.6;
        for &m in mask {
            assert!(m == 0.0 || (m - 1.0 / keep).abs() < 1e-12);
        }
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        // ~N(120, 48): 5σ band keeps this deterministic-seed check robust.
        assert!((85..=155).contains(&kept), "kept {kept} of 200");
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let cfg = config(&[3, 5, 2], 2);
        let mut net = MlpParams::init(&cfg).unwrap();
        let cache = net.forward(&[0.1, 0.2, 0.3], false).unwrap();
        let grads = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn linear_layer_squared_loss_has_closed_form_gradient() {
        let cfg = config(&[3, 1], 5);
        let mut net = MlpParams::init(&cfg).unwrap();
        let x = [1.5, -0.5, 2.0];
        let target = 0.25;
        let cache = net.forward(&x, false).unwrap();
        let pred = cache.output()[0];
        let (_, dpred) = squared(pred, target);
        let grads = net.backward(&cache, &[dpred]).unwrap();
        for i in 0..3 {
            assert_relative_eq!(
                grads.w[0][i],
                2.0 * (pred - target) * x[i],
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(grads.b[0][0], 2.0 * (pred - target), max_relative = 1e-12);
    }

    fn gradcheck(dims: &[usize], seed: u64) -> f64 {
        let cfg = config(dims, seed);
        let mut net = MlpParams::init(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let class = (seed as usize) % dims[dims.len() - 1];

        let cache = net.forward(&input, false).unwrap();
        let (_, dlogits) = softmax_ce(cache.output(), class);
        let analytic = net.flat_grads(&net.backward(&cache, &dlogits).unwrap());

        let theta = net.flat_params();
        let mut worst = 0.0f64;
        for i in 0..theta.len() {
            let h = 1e-5 * theta[i].abs().max(1.0);
            let mut plus = theta.clone();
            plus[i] += h;
            net.set_flat_params(&plus).unwrap();
            let (lp, _) = softmax_ce(net.forward(&input, false).unwrap().output(), class);
            let mut minus = theta.clone();
            minus[i] -= h;
            net.set_flat_params(&minus).unwrap();
            let (lm, _) = softmax_ce(net.forward(&input, false).unwrap().output(), class);
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..4 {
            let err = gradcheck(&[5, 8, 3], seed);
            assert!(err < 1e-5, "seed {seed}: max relative error {err}");
        }
        let err = gradcheck(&[4, 6, 6, 2], 9);
        assert!(err < 1e-5, "deep net: max relative error {err}");
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let cfg = config(&[3, 4, 1], 1);
        let mut net = MlpParams::init(&cfg).unwrap();
        let before = net.flat_params();
        let zeros = Grads::zeros_like(&net);
        net.adam_step(&zeros, 0.01).unwrap();
        assert_eq!(net.flat_params(), before);
        assert_eq!(net.step_count(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate_times_sign() {
        let cfg = config(&[2, 1], 1);
        let mut net = MlpParams::init(&cfg).unwrap();
        let before = net.flat_params();
        let mut grads = Grads::zeros_like(&net);
        grads.w[0][0] = 3.0;
        grads.w[0][1] = -0.7;
        net.adam_step(&grads, 0.05).unwrap();
        let after = net.flat_params();
        // m̂ = g, v̂ = g² on step one, so the displacement is lr·sign(g) up
        // to the epsilon in the denominator.
        assert_relative_eq!(before[0] - after[0], 0.05, max_relative = 1e-6);
        assert_relative_eq!(before[1] - after[1], -0.05, max_relative = 1e-6);
        assert_eq!(before[2], after[2]);
    }

    #[test]
    fn identical_runs_produce_identical_trajectories() {
        let run = || {
            let cfg = MlpConfig {
                layer_dims: vec![2, 6, 1],
                dropout_rate: 0.2,
                seed: 42,
                ..MlpConfig::default()
            };
            let mut net = MlpParams::init(&cfg).unwrap();
            let data = [([0.5, 1.0], 1.0), ([-0.5, -1.0], 0.0), ([1.5, -0.2], 1.0)];
            for _ in 0..25 {
                for (x, t) in &data {
                    let cache = net.forward(x, true).unwrap();
                    let (_, d) = sigmoid_bce(cache.output()[0], *t);
                    let grads = net.backward(&cache, &[d]).unwrap();
                    net.adam_step(&grads, 0.01).unwrap();
                }
            }
            net.flat_params()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn separable_data_reaches_full_training_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data: Vec<([f64; 2], f64)> = (0..40)
            .map(|_| {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let label = if x[0] + x[1] > 0.0 { 1.0 } else { 0.0 };
                // Push points away from the boundary for a clean margin.
                let shift = if label > 0.5 { 0.3 } else { -0.3 };
                ([x[0] + shift, x[1] + shift], label)
            })
            .collect();
        let cfg = MlpConfig {
            layer_dims: vec![2, 8, 1],
            dropout_rate: 0.0,
            seed: 5,
            learning_rate: 0.02,
            ..MlpConfig::default()
        };
        let mut net = MlpParams::init(&cfg).unwrap();
        for step in 0..2000 {
            let (x, t) = &data[step % data.len()];
            let cache = net.forward(x, true).unwrap();
            let (_, d) = sigmoid_bce(cache.output()[0], *t);
            let grads = net.backward(&cache, &[d]).unwrap();
            net.adam_step(&grads, cfg.learning_rate).unwrap();
        }
        let correct = data
            .iter()
            .filter(|(x, t)| {
                let p = sigmoid(net.infer(x).unwrap()[0]);
                (p > 0.5) == (*t > 0.5)
            })
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn json_roundtrip_preserves_weights_and_step() {
        let cfg = config(&[3, 4, 2], 23);
        let mut net = MlpParams::init(&cfg).unwrap();
        let mut grads = Grads::zeros_like(&net);
        grads.b[1][0] = 1.0;
        net.adam_step(&grads, 0.01).unwrap();
        let text = net.to_json().unwrap();
        let restored = MlpParams::from_json(&text).unwrap();
        assert_eq!(restored.flat_params(), net.flat_params());
        assert_eq!(restored.step_count(), 1);
    }

    #[test]
    fn loss_layer_matches_hand_values() {
        // σ(0) = 0.5; BCE(0, 1) = ln 2.
        let (loss, grad) = sigmoid_bce(0.0, 1.0);
        assert_relative_eq!(loss, std::f64::consts::LN_2, max_relative = 1e-12);
        assert_relative_eq!(grad, -0.5, max_relative = 1e-12);
        // Uniform softmax over 4 classes: loss = ln 4.
        let (loss, grad) = softmax_ce(&[0.0; 4], 2);
        assert_relative_eq!(loss, 4.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(grad[2], 0.25 - 1.0, max_relative = 1e-12);
        assert_relative_eq!(grad[0], 0.25, max_relative = 1e-12);
        let probs = softmax_probs(&[1000.0, 1000.0]);
        assert_relative_eq!(probs[0], 0.5, max_relative = 1e-12);
    }
}
