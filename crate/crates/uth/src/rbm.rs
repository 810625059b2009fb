//! Restricted Boltzmann machines trained by contrastive divergence.
//!
//! An RBM over binary units defines the conditionals
//!
//! ```text
//! P(h_j = 1 | v) = sigma(b_j + sum_i v_i w_ij)
//! P(v_i = 1 | h) = sigma(b_i + sum_j w_ij h_j)
//! ```
//!
//! with energy `E(v, h) = -sum_i b_i v_i - sum_j b_j h_j - sum_ij v_i w_ij h_j`.
//! CD-k runs `k` steps of alternating Gibbs sampling from each data row and
//! moves the parameters along `<v h>_data - <v h>_recon`. Following the
//! standard training recipe, hidden states are sampled inside the chain
//! while visible reconstructions and all gradient statistics use activation
//! probabilities.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::derive_seed;
use crate::error::{Result, UthError};

/// Logistic function. Saturates to exactly 0.0 / 1.0 in f64 for |x| beyond
/// roughly 37, which is the correct limit behavior.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable log(1 + e^x).
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One RBM: weights are `n_vis x n_hid`, so `weights[[i, j]]` couples
/// visible unit `i` to hidden unit `j`.
#[derive(Debug, Clone)]
pub struct RbmLayer {
    weights: Array2<f64>,
    bias_vis: Array1<f64>,
    bias_hid: Array1<f64>,
}

impl RbmLayer {
    pub fn new(weights: Array2<f64>, bias_vis: Array1<f64>, bias_hid: Array1<f64>) -> Result<Self> {
        if bias_vis.len() != weights.nrows() || bias_hid.len() != weights.ncols() {
            return Err(UthError::Argument(format!(
                "bias lengths ({}, {}) do not match weight shape {}x{}",
                bias_vis.len(),
                bias_hid.len(),
                weights.nrows(),
                weights.ncols()
            )));
        }
        let finite = weights.iter().all(|v| v.is_finite())
            && bias_vis.iter().all(|v| v.is_finite())
            && bias_hid.iter().all(|v| v.is_finite());
        if !finite {
            return Err(UthError::Validation(
                "rbm parameters contain a non-finite value".into(),
            ));
        }
        Ok(RbmLayer {
            weights,
            bias_vis,
            bias_hid,
        })
    }

    /// Weights from N(0, 0.01^2), zero biases.
    pub fn random_init<R: Rng>(n_vis: usize, n_hid: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("std dev is positive");
        let weights = Array2::from_shape_fn((n_vis, n_hid), |_| normal.sample(rng));
        RbmLayer {
            weights,
            bias_vis: Array1::zeros(n_vis),
            bias_hid: Array1::zeros(n_hid),
        }
    }

    pub fn n_vis(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hid(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn bias_vis(&self) -> ArrayView1<'_, f64> {
        self.bias_vis.view()
    }

    pub fn bias_hid(&self) -> ArrayView1<'_, f64> {
        self.bias_hid.view()
    }

    /// P(h = 1 | v) for one visible vector.
    pub fn hidden_activation(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.n_vis() {
            return Err(UthError::Argument(format!(
                "visible vector length {} does not match n_vis {}",
                v.len(),
                self.n_vis()
            )));
        }
        let mut z = v.dot(&self.weights);
        z += &self.bias_hid;
        Ok(z.mapv(sigmoid))
    }

    /// P(h = 1 | v) for a batch, one row per visible vector.
    pub fn hidden_activation_batch(&self, v: ArrayView2<f64>) -> Result<Array2<f64>> {
        if v.ncols() != self.n_vis() {
            return Err(UthError::Argument(format!(
                "batch has {} columns, expected n_vis {}",
                v.ncols(),
                self.n_vis()
            )));
        }
        let mut z = v.dot(&self.weights);
        z += &self.bias_hid;
        Ok(z.mapv(sigmoid))
    }

    /// P(v = 1 | h) for one hidden vector.
    pub fn visible_activation(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        if h.len() != self.n_hid() {
            return Err(UthError::Argument(format!(
                "hidden vector length {} does not match n_hid {}",
                h.len(),
                self.n_hid()
            )));
        }
        let mut z = self.weights.dot(&h);
        z += &self.bias_vis;
        Ok(z.mapv(sigmoid))
    }

    /// P(v = 1 | h) for a batch, one row per hidden vector.
    pub fn visible_activation_batch(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        if h.ncols() != self.n_hid() {
            return Err(UthError::Argument(format!(
                "batch has {} columns, expected n_hid {}",
                h.ncols(),
                self.n_hid()
            )));
        }
        let mut z = h.dot(&self.weights.t());
        z += &self.bias_vis;
        Ok(z.mapv(sigmoid))
    }

    /// E(v, h) for one joint state.
    pub fn energy(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> f64 {
        -self.bias_vis.dot(&v) - self.bias_hid.dot(&h) - v.dot(&self.weights).dot(&h)
    }

    /// Free energy F(v) = -log sum_h e^{-E(v, h)}, in closed form.
    pub fn free_energy(&self, v: ArrayView1<f64>) -> f64 {
        let z = v.dot(&self.weights) + &self.bias_hid;
        -self.bias_vis.dot(&v) - z.iter().map(|&x| softplus(x)).sum::<f64>()
    }

    /// Adds `scale * delta` to every parameter.
    pub fn apply_delta(&mut self, delta: &RbmDelta, scale: f64) {
        self.weights.scaled_add(scale, &delta.d_weights);
        self.bias_vis.scaled_add(scale, &delta.d_bias_vis);
        self.bias_hid.scaled_add(scale, &delta.d_bias_hid);
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite())
            && self.bias_vis.iter().all(|v| v.is_finite())
            && self.bias_hid.iter().all(|v| v.is_finite())
    }
}

/// Parameter-shaped container used both as a momentum velocity and as a
/// gradient accumulator.
#[derive(Debug, Clone)]
pub struct RbmDelta {
    pub d_weights: Array2<f64>,
    pub d_bias_vis: Array1<f64>,
    pub d_bias_hid: Array1<f64>,
}

impl RbmDelta {
    pub fn zeros(n_vis: usize, n_hid: usize) -> Self {
        RbmDelta {
            d_weights: Array2::zeros((n_vis, n_hid)),
            d_bias_vis: Array1::zeros(n_vis),
            d_bias_hid: Array1::zeros(n_hid),
        }
    }

    pub fn zeros_like(layer: &RbmLayer) -> Self {
        RbmDelta::zeros(layer.n_vis(), layer.n_hid())
    }

    pub fn scale(&mut self, s: f64) {
        self.d_weights.mapv_inplace(|v| v * s);
        self.d_bias_vis.mapv_inplace(|v| v * s);
        self.d_bias_hid.mapv_inplace(|v| v * s);
    }

    /// self += s * other.
    pub fn add_scaled(&mut self, other: &RbmDelta, s: f64) {
        self.d_weights.scaled_add(s, &other.d_weights);
        self.d_bias_vis.scaled_add(s, &other.d_bias_vis);
        self.d_bias_hid.scaled_add(s, &other.d_bias_hid);
    }

    pub fn zero_out(&mut self) {
        self.d_weights.fill(0.0);
        self.d_bias_vis.fill(0.0);
        self.d_bias_hid.fill(0.0);
    }
}

/// Contrastive divergence hyperparameters.
#[derive(Debug, Clone)]
pub struct RbmTrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub cd_steps: usize,
    pub seed: u64,
}

impl Default for RbmTrainConfig {
    /// Learning rate 0.005 (inside the recommended [0.0005, 0.01] range),
    /// momentum 0.9, CD-1, minibatches of 100.
    fn default() -> Self {
        RbmTrainConfig {
            learning_rate: 0.005,
            momentum: 0.9,
            epochs: 30,
            batch_size: 100,
            cd_steps: 1,
            seed: 0,
        }
    }
}

impl RbmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(UthError::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(UthError::Argument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.cd_steps == 0 {
            return Err(UthError::Argument(
                "epochs, batch_size, and cd_steps must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Draws independent Bernoulli bits (as 0.0/1.0) with the given
/// probabilities. Deterministic for a fixed rng state.
pub fn sample_bernoulli<R: Rng>(p: ArrayView1<f64>, rng: &mut R) -> Result<Array1<f64>> {
    validate_unit_range(p.iter(), "probability")?;
    Ok(p.mapv(|pi| if rng.random::<f64>() < pi { 1.0 } else { 0.0 }))
}

/// Row-major batch variant of [`sample_bernoulli`]; the traversal order is
/// fixed so a seeded rng always yields the same sample.
fn sample_bernoulli_batch<R: Rng>(p: ArrayView2<f64>, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros(p.raw_dim());
    for (o, &pi) in out.iter_mut().zip(p.iter()) {
        *o = if rng.random::<f64>() < pi { 1.0 } else { 0.0 };
    }
    out
}

fn validate_unit_range<'a>(
    values: impl Iterator<Item = &'a f64>,
    what: &str,
) -> Result<()> {
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(UthError::Argument(format!(
                "{what} value {v} is outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// One CD-k minibatch step with momentum. Mutates the layer and velocity
/// in place and returns the mean squared reconstruction error between the
/// batch and the final visible reconstruction probabilities.
pub fn cd_update<R: Rng>(
    layer: &mut RbmLayer,
    batch: ArrayView2<f64>,
    cfg: &RbmTrainConfig,
    velocity: &mut RbmDelta,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    if batch.ncols() != layer.n_vis() {
        return Err(UthError::Argument(format!(
            "batch has {} columns, expected n_vis {}",
            batch.ncols(),
            layer.n_vis()
        )));
    }
    if batch.nrows() == 0 {
        return Err(UthError::Argument("empty minibatch".into()));
    }
    validate_unit_range(batch.iter(), "visible")?;

    let b = batch.nrows() as f64;
    let h_data = layer.hidden_activation_batch(batch)?;
    let mut h_state = sample_bernoulli_batch(h_data.view(), rng);
    let mut v_recon = layer.visible_activation_batch(h_state.view())?;
    for _ in 1..cfg.cd_steps {
        let h_prob = layer.hidden_activation_batch(v_recon.view())?;
        h_state = sample_bernoulli_batch(h_prob.view(), rng);
        v_recon = layer.visible_activation_batch(h_state.view())?;
    }
    let h_recon = layer.hidden_activation_batch(v_recon.view())?;

    let grad = RbmDelta {
        d_weights: (batch.t().dot(&h_data) - v_recon.t().dot(&h_recon)) / b,
        d_bias_vis: (batch.sum_axis(Axis(0)) - v_recon.sum_axis(Axis(0))) / b,
        d_bias_hid: (h_data.sum_axis(Axis(0)) - h_recon.sum_axis(Axis(0))) / b,
    };

    velocity.scale(cfg.momentum);
    velocity.add_scaled(&grad, 1.0);
    layer.apply_delta(velocity, cfg.learning_rate);
    if !layer.params_finite() {
        return Err(UthError::Divergence(format!(
            "rbm parameters became non-finite after a CD step at learning rate {}",
            cfg.learning_rate
        )));
    }

    let diff = &batch - &v_recon;
    Ok(diff.iter().map(|d| d * d).sum::<f64>() / (b * batch.ncols() as f64))
}

/// Exact mean log-likelihood of `data` under the RBM, by enumerating the
/// partition function. Only feasible for tiny models; the unit count is
/// capped at 20.
pub fn exact_log_likelihood(layer: &RbmLayer, data: ArrayView2<f64>) -> Result<f64> {
    if layer.n_vis() + layer.n_hid() > 20 {
        return Err(UthError::Capability(format!(
            "exact log-likelihood enumerates 2^(n_vis) states; {} + {} units exceed the cap of 20",
            layer.n_vis(),
            layer.n_hid()
        )));
    }
    if data.ncols() != layer.n_vis() {
        return Err(UthError::Argument(format!(
            "data has {} columns, expected n_vis {}",
            data.ncols(),
            layer.n_vis()
        )));
    }
    if data.nrows() == 0 {
        return Err(UthError::Argument("empty dataset".into()));
    }
    let log_z = log_partition(layer);
    let total: f64 = data
        .axis_iter(Axis(0))
        .map(|row| -layer.free_energy(row) - log_z)
        .sum();
    Ok(total / data.nrows() as f64)
}

/// log Z by enumerating all binary visible states; the hidden sum is
/// analytic through the free energy.
fn log_partition(layer: &RbmLayer) -> f64 {
    let n = layer.n_vis();
    let mut v = Array1::zeros(n);
    let mut terms = Vec::with_capacity(1 << n);
    for state in 0u32..1 << n {
        for i in 0..n {
            v[i] = (state >> i & 1) as f64;
        }
        terms.push(-layer.free_energy(v.view()));
    }
    log_sum_exp(&terms)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Trains one RBM with shuffled minibatch CD. Returns the layer and the
/// per-epoch mean reconstruction error. Pure function of (data, config).
pub fn train_rbm(
    data: ArrayView2<f64>,
    n_hidden: usize,
    cfg: &RbmTrainConfig,
) -> Result<(RbmLayer, Vec<f64>)> {
    cfg.validate()?;
    if n_hidden == 0 {
        return Err(UthError::Argument("n_hidden must be at least 1".into()));
    }
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(UthError::Argument(
            "rbm training data must be non-empty".into(),
        ));
    }
    validate_unit_range(data.iter(), "training data (expected normalized to [0,1])")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layer = RbmLayer::random_init(data.ncols(), n_hidden, &mut rng);
    let mut velocity = RbmDelta::zeros_like(&layer);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.nrows()).collect();

    for epoch in 0..cfg.epochs {
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1 + epoch as u64));
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut epoch_rng);
        }
        let mut err_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Array2::zeros((chunk.len(), data.ncols()));
            for (out, &i) in chunk.iter().enumerate() {
                batch.row_mut(out).assign(&data.row(i));
            }
            let err = cd_update(&mut layer, batch.view(), cfg, &mut velocity, &mut epoch_rng)?;
            err_sum += err * chunk.len() as f64;
        }
        trace.push(err_sum / data.nrows() as f64);
    }
    Ok((layer, trace))
}
