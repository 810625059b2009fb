//! Stacked RBMs: greedy layer-wise pre-training, the real-valued forward
//! pass, and binarization into hash codes.
//!
//! A stack with sizes `d_0 > d_1 > ... > d_m` composes per-layer hidden
//! activations, `g = sigma(b^m + W^m ... sigma(b^1 + W^1 q))`, so the code
//! width is the final layer size. Layer k+1 is trained on the hidden
//! activation probabilities (not samples) of layer k, which keeps the
//! forward pass deterministic.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::{BinaryCodeSet, DescriptorDataset};
use crate::derive_seed;
use crate::error::{Result, UthError};
use crate::rbm::{train_rbm, RbmDelta, RbmLayer, RbmTrainConfig};

/// An ordered stack of RBM layers with strictly decreasing sizes.
#[derive(Debug, Clone)]
pub struct SrbmStack {
    layers: Vec<RbmLayer>,
}

impl SrbmStack {
    /// Validates chaining (layer k's n_hid == layer k+1's n_vis) and that
    /// sizes strictly decrease from input to code.
    pub fn new(layers: Vec<RbmLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(UthError::Argument("a stack needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].n_hid() != pair[1].n_vis() {
                return Err(UthError::Argument(format!(
                    "layer {k} has n_hid {} but layer {} has n_vis {}",
                    pair[0].n_hid(),
                    k + 1,
                    pair[1].n_vis()
                )));
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.n_hid() >= layer.n_vis() {
                return Err(UthError::Argument(format!(
                    "layer sizes must strictly decrease; layer {k} maps {} -> {}",
                    layer.n_vis(),
                    layer.n_hid()
                )));
            }
        }
        Ok(SrbmStack { layers })
    }

    /// Unit sizes from input dimensionality down to the code width.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].n_vis()];
        sizes.extend(self.layers.iter().map(RbmLayer::n_hid));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_vis()
    }

    pub fn n_bits(&self) -> usize {
        self.layers[self.layers.len() - 1].n_hid()
    }

    pub fn layers(&self) -> &[RbmLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [RbmLayer] {
        &mut self.layers
    }

    /// Untrained stack whose weight columns are unit-norm Gaussian
    /// directions and whose biases are zero. Serves as the random-weight
    /// reference network.
    pub fn random_unit(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("std dev is positive");
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (n_vis, n_hid) = (pair[0], pair[1]);
                let mut w = Array2::zeros((n_vis, n_hid));
                for j in 0..n_hid {
                    let mut col = w.column_mut(j);
                    loop {
                        for x in col.iter_mut() {
                            *x = normal.sample(&mut rng);
                        }
                        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if norm > 1e-12 {
                            col.mapv_inplace(|x| x / norm);
                            break;
                        }
                    }
                }
                RbmLayer::new(w, Array1::zeros(n_vis), Array1::zeros(n_hid))
                    .expect("construction parameters are finite")
            })
            .collect();
        SrbmStack::new(layers)
    }

    /// The real-valued embedding g(x): the composite of per-layer hidden
    /// activations. Output components are strictly inside (0, 1) up to
    /// f64 saturation.
    pub fn encode_real(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let mut a = x.to_owned();
        for layer in &self.layers {
            a = layer.hidden_activation(a.view())?;
        }
        Ok(a)
    }

    /// Batch embedding, one row per input.
    pub fn encode_real_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut a = x.to_owned();
        for layer in &self.layers {
            a = layer.hidden_activation_batch(a.view())?;
        }
        Ok(a)
    }

    /// All intermediate activations [x, a_1, ..., a_m]; `a_m` is the
    /// embedding. Used by the fine-tuning backward pass.
    pub(crate) fn forward_trace(&self, x: ArrayView1<f64>) -> Result<Vec<Array1<f64>>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_owned());
        for layer in &self.layers {
            let next = layer.hidden_activation(trace.last().expect("trace is non-empty").view())?;
            trace.push(next);
        }
        Ok(trace)
    }

    /// Hashes every row of the dataset: binarize(encode_real(row)),
    /// preserving ids and order.
    pub fn encode_binary(&self, d: &DescriptorDataset) -> Result<BinaryCodeSet> {
        if d.count() > 0 && d.dim() != self.input_dim() {
            return Err(UthError::Argument(format!(
                "dataset dimensionality {} does not match stack input {}",
                d.dim(),
                self.input_dim()
            )));
        }
        let rows: Vec<Vec<u8>> = (0..d.count())
            .into_par_iter()
            .map(|i| {
                let x = d.row(i).mapv(f64::from);
                let g = self.encode_real(x.view())?;
                Ok(crate::dataset::pack_bits(&binarize(g.view())))
            })
            .collect::<Result<_>>()?;
        BinaryCodeSet::new(d.ids().to_vec(), self.n_bits(), rows)
    }
}

fn validate_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(UthError::Argument(
            "layer_sizes needs at least an input and an output size".into(),
        ));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(UthError::Argument("layer sizes must be positive".into()));
    }
    if layer_sizes.windows(2).any(|p| p[1] >= p[0]) {
        return Err(UthError::Argument(format!(
            "layer sizes must strictly decrease, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

/// Thresholds an embedding at 0.5; the inequality is strict, so a
/// component equal to 0.5 maps to 0.
pub fn binarize(g: ArrayView1<f64>) -> Vec<bool> {
    g.iter().map(|&x| x > 0.5).collect()
}

/// Greedy layer-wise pre-training. Returns the stack and one
/// reconstruction-error trace per layer.
pub fn train_stack(
    data: &DescriptorDataset,
    layer_sizes: &[usize],
    cfg: &RbmTrainConfig,
) -> Result<(SrbmStack, Vec<Vec<f64>>)> {
    validate_layer_sizes(layer_sizes)?;
    if layer_sizes[0] != data.dim() {
        return Err(UthError::Argument(format!(
            "layer_sizes[0] = {} does not match data dimensionality {}",
            layer_sizes[0],
            data.dim()
        )));
    }
    let mut current = data.to_f64();
    let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
    let mut traces = Vec::with_capacity(layer_sizes.len() - 1);
    for (k, &n_hidden) in layer_sizes[1..].iter().enumerate() {
        // Layer 0 consumes the caller's seed directly so a [d, m] stack is
        // byte-identical to a plain train_rbm run; deeper layers get
        // derived streams.
        let layer_cfg = RbmTrainConfig {
            seed: if k == 0 {
                cfg.seed
            } else {
                derive_seed(cfg.seed, 1000 + k as u64)
            },
            ..cfg.clone()
        };
        let (layer, trace) = train_rbm(current.view(), n_hidden, &layer_cfg)?;
        current = layer.hidden_activation_batch(current.view())?;
        layers.push(layer);
        traces.push(trace);
    }
    Ok((SrbmStack::new(layers)?, traces))
}

/// Gradient (or velocity) with one parameter-shaped delta per layer.
#[derive(Debug, Clone)]
pub struct StackGradient {
    pub layers: Vec<RbmDelta>,
}

impl StackGradient {
    pub fn zeros_like(stack: &SrbmStack) -> Self {
        StackGradient {
            layers: stack.layers().iter().map(RbmDelta::zeros_like).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.scale(s);
        }
    }

    /// self += s * other.
    pub fn add_scaled(&mut self, other: &StackGradient, s: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(b, s);
        }
    }

    pub fn zero_out(&mut self) {
        for l in &mut self.layers {
            l.zero_out();
        }
    }

    /// Largest absolute entry across all parameters, 0 for an empty stack.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| {
                l.d_weights
                    .iter()
                    .chain(l.d_bias_vis.iter())
                    .chain(l.d_bias_hid.iter())
            })
            .fold(0.0, |m, v| v.abs().max(m))
    }
}

/// Backpropagates `d_out` (the loss gradient w.r.t. the final activation)
/// through the forward trace, adding each layer's contribution into
/// `grad`. Visible biases do not appear in the forward pass, so their
/// entries stay untouched (zero).
pub(crate) fn accumulate_embedding_gradient(
    stack: &SrbmStack,
    trace: &[Array1<f64>],
    d_out: Array1<f64>,
    grad: &mut StackGradient,
) {
    accumulate_embedding_gradient_partial(stack, trace, d_out, grad, 0);
}

/// As [`accumulate_embedding_gradient`], but stops once layers below
/// `min_layer` are reached (their parameters stay frozen).
pub(crate) fn accumulate_embedding_gradient_partial(
    stack: &SrbmStack,
    trace: &[Array1<f64>],
    d_out: Array1<f64>,
    grad: &mut StackGradient,
    min_layer: usize,
) {
    debug_assert_eq!(trace.len(), stack.layers().len() + 1);
    let mut d_act = d_out;
    for (l, layer) in stack.layers().iter().enumerate().rev() {
        if l < min_layer {
            break;
        }
        let activation = &trace[l + 1];
        // d z = d a * sigma'(z), with sigma' expressed via the activation.
        let dz = Array1::from_shape_fn(activation.len(), |j| {
            d_act[j] * activation[j] * (1.0 - activation[j])
        });
        let input_col = trace[l].view().insert_axis(Axis(1));
        let dz_row = dz.view().insert_axis(Axis(0));
        general_mat_mul(1.0, &input_col, &dz_row, 1.0, &mut grad.layers[l].d_weights);
        grad.layers[l].d_bias_hid += &dz;
        if l > min_layer {
            d_act = layer.weights().dot(&dz);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbm::sigmoid;
    use ndarray::array;

    fn zero_stack(sizes: &[usize]) -> SrbmStack {
        let layers = sizes
            .windows(2)
            .map(|p| {
                RbmLayer::new(
                    Array2::zeros((p[0], p[1])),
                    Array1::zeros(p[0]),
                    Array1::zeros(p[1]),
                )
                .unwrap()
            })
            .collect();
        SrbmStack::new(layers).unwrap()
    }

    fn tiny_dataset() -> DescriptorDataset {
        let data = Array2::from_shape_fn((12, 6), |(i, j)| {
            (((i * 31 + j * 17) % 10) as f32) / 10.0
        });
        let ids = (0..12).map(|i| format!("r{i}")).collect();
        DescriptorDataset::new(ids, data).unwrap()
    }

    #[test]
    fn stack_validation_rejects_bad_shapes() {
        let a = RbmLayer::new(Array2::zeros((8, 4)), Array1::zeros(8), Array1::zeros(4)).unwrap();
        let b = RbmLayer::new(Array2::zeros((5, 2)), Array1::zeros(5), Array1::zeros(2)).unwrap();
        assert!(SrbmStack::new(vec![a.clone(), b]).is_err());

        let grow = RbmLayer::new(Array2::zeros((4, 6)), Array1::zeros(4), Array1::zeros(6)).unwrap();
        assert!(SrbmStack::new(vec![a, grow]).is_err());
        assert!(validate_layer_sizes(&[8, 8]).is_err());
        assert!(validate_layer_sizes(&[8]).is_err());
    }

    #[test]
    fn zero_stack_encodes_to_one_half() {
        let stack = zero_stack(&[6, 4, 2]);
        let g = stack.encode_real(array![0.3, 0.9, 0.1, 0.0, 1.0, 0.5].view()).unwrap();
        assert!(g.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn single_layer_stack_is_hidden_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = RbmLayer::random_init(5, 3, &mut rng);
        let x = array![0.2, 0.8, 0.5, 0.1, 0.9];
        let direct = layer.hidden_activation(x.view()).unwrap();
        let stack = SrbmStack::new(vec![layer]).unwrap();
        assert_eq!(stack.encode_real(x.view()).unwrap(), direct);
    }

    #[test]
    fn composite_matches_manual_two_step_evaluation() {
        let stack = SrbmStack::random_unit(&[8, 4, 2], 33).unwrap();
        let x = Array1::from_shape_fn(8, |i| (i as f64) / 8.0);
        let g = stack.encode_real(x.view()).unwrap();

        // Manual evaluation straight from the weight matrices.
        let l0 = &stack.layers()[0];
        let l1 = &stack.layers()[1];
        let mut a1 = vec![0.0; 4];
        for j in 0..4 {
            let mut z = l0.bias_hid()[j];
            for i in 0..8 {
                z += x[i] * l0.weights()[[i, j]];
            }
            a1[j] = sigmoid(z);
        }
        for j in 0..2 {
            let mut z = l1.bias_hid()[j];
            for (i, &a) in a1.iter().enumerate() {
                z += a * l1.weights()[[i, j]];
            }
            assert!((g[j] - sigmoid(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_stays_strictly_inside_unit_interval() {
        let stack = SrbmStack::random_unit(&[10, 6, 3], 5).unwrap();
        let x = Array1::from_shape_fn(10, |i| ((i * 7 % 10) as f64) / 10.0);
        let g = stack.encode_real(x.view()).unwrap();
        assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn binarize_is_strict_at_one_half() {
        assert_eq!(
            binarize(array![0.6, 0.4, 0.9].view()),
            vec![true, false, true]
        );
        assert_eq!(binarize(array![0.5, 0.5].view()), vec![false, false]);
        assert_eq!(binarize(array![0.0, 0.0].view()), vec![false, false]);
    }

    #[test]
    fn encode_binary_preserves_ids_and_handles_empty_input() {
        let stack = SrbmStack::random_unit(&[6, 4, 3], 8).unwrap();
        let ds = tiny_dataset();
        let codes = stack.encode_binary(&ds).unwrap();
        assert_eq!(codes.ids(), ds.ids());
        assert_eq!(codes.n_bits(), 3);

        let empty = DescriptorDataset::new(Vec::new(), Array2::zeros((0, 6))).unwrap();
        let codes = stack.encode_binary(&empty).unwrap();
        assert_eq!(codes.count(), 0);
        assert_eq!(codes.n_bits(), 3);
    }

    #[test]
    fn identical_rows_hash_identically() {
        let stack = SrbmStack::random_unit(&[4, 2], 13).unwrap();
        let data = array![[0.1f32, 0.9, 0.4, 0.2], [0.1, 0.9, 0.4, 0.2]];
        let ds = DescriptorDataset::new(vec!["a".into(), "b".into()], data).unwrap();
        let codes = stack.encode_binary(&ds).unwrap();
        assert_eq!(codes.code(0), codes.code(1));
    }

    #[test]
    fn random_unit_columns_have_unit_norm() {
        let stack = SrbmStack::random_unit(&[7, 5, 2], 99).unwrap();
        for layer in stack.layers() {
            for j in 0..layer.n_hid() {
                let norm: f64 = layer.weights().column(j).iter().map(|x| x * x).sum();
                assert!((norm.sqrt() - 1.0).abs() < 1e-12);
            }
            assert!(layer.bias_hid().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn train_stack_shapes_and_determinism() {
        let ds = tiny_dataset();
        let cfg = RbmTrainConfig {
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.05,
            seed: 77,
            ..Default::default()
        };
        let (stack, traces) = train_stack(&ds, &[6, 4, 2], &cfg).unwrap();
        assert_eq!(stack.layer_sizes(), vec![6, 4, 2]);
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].len(), 3);

        let (stack2, _) = train_stack(&ds, &[6, 4, 2], &cfg).unwrap();
        for (a, b) in stack.layers().iter().zip(stack2.layers()) {
            assert_eq!(a.weights(), b.weights());
        }
    }

    #[test]
    fn degenerate_stack_equals_train_rbm() {
        let ds = tiny_dataset();
        let cfg = RbmTrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 0.05,
            seed: 3,
            ..Default::default()
        };
        let (stack, _) = train_stack(&ds, &[6, 3], &cfg).unwrap();
        let (single, _) = train_rbm(ds.to_f64().view(), 3, &cfg).unwrap();
        assert_eq!(stack.layers()[0].weights(), single.weights());
        assert_eq!(stack.layers()[0].bias_hid(), single.bias_hid());
    }

    #[test]
    fn train_stack_rejects_mismatched_input_size() {
        let ds = tiny_dataset();
        let cfg = RbmTrainConfig::default();
        assert!(train_stack(&ds, &[5, 3], &cfg).is_err());
        assert!(train_stack(&ds, &[6, 6], &cfg).is_err());
    }

    #[test]
    fn layer_shapes_follow_the_size_list() {
        // Untrained constructor; shape plumbing only.
        let stack = SrbmStack::random_unit(&[64, 32, 8], 1).unwrap();
        assert_eq!(stack.layers().len(), 2);
        assert_eq!(stack.layers()[0].weights().shape(), &[64, 32]);
        assert_eq!(stack.layers()[1].weights().shape(), &[32, 8]);
        assert_eq!(stack.n_bits(), 8);
    }

    #[test]
    fn backprop_gradient_matches_finite_differences() {
        // Scalar probe L = sum(g); checks every parameter of a small stack.
        let stack = SrbmStack::random_unit(&[5, 3, 2], 21).unwrap();
        let x = array![0.2, 0.7, 0.1, 0.9, 0.4];
        let loss = |s: &SrbmStack| s.encode_real(x.view()).unwrap().sum();

        let trace = stack.forward_trace(x.view()).unwrap();
        let mut grad = StackGradient::zeros_like(&stack);
        let d_out = Array1::ones(stack.n_bits());
        accumulate_embedding_gradient(&stack, &trace, d_out, &mut grad);

        let eps = 1e-6;
        for l in 0..stack.layers().len() {
            let (rows, cols) = {
                let w = stack.layers()[l].weights();
                (w.nrows(), w.ncols())
            };
            for i in 0..rows {
                for j in 0..cols {
                    let mut plus = stack.clone();
                    let mut w = plus.layers()[l].weights().to_owned();
                    w[[i, j]] += eps;
                    plus.layers_mut()[l] = RbmLayer::new(
                        w.clone(),
                        plus.layers()[l].bias_vis().to_owned(),
                        plus.layers()[l].bias_hid().to_owned(),
                    )
                    .unwrap();
                    let mut minus = stack.clone();
                    w[[i, j]] -= 2.0 * eps;
                    minus.layers_mut()[l] = RbmLayer::new(
                        w,
                        minus.layers()[l].bias_vis().to_owned(),
                        minus.layers()[l].bias_hid().to_owned(),
                    )
                    .unwrap();
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                    let an = grad.layers[l].d_weights[[i, j]];
                    assert!(
                        (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6) < 1e-4,
                        "layer {l} w[{i},{j}]: fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }
}
