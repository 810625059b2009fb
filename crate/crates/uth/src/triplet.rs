//! Unsupervised triplet sampling and fine-tuning of a stacked-RBM encoder.
//!
//! Triplets (q, q+, q-) are mined from descriptor-space distances alone.
//! The threshold sampler draws q+ near a target distance T_p from the
//! anchor and q- near T_n (T_p < T_n), using a per-anchor lookup table of
//! squared distances ranked in descending order. The loss softmax-
//! normalizes the two squared embedding distances,
//!
//! ```text
//! d+ = e^dp / (e^dp + e^dn),   d- = 1 - d+,
//! l(q, q+, q-) = max{0, g + d+ - d-}     (g = 1)
//! ```
//!
//! and since d+ + d- = 1 and g = 1, the hinge never clips and the loss is
//! identically 2 d+ in (0, 2). Gradients flow through the real-valued
//! encoder shared by all three branches; binarization only happens at
//! encoding time.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DescriptorDataset;
use crate::derive_seed;
use crate::error::{Result, UthError};
use crate::srbm::{accumulate_embedding_gradient, SrbmStack, StackGradient};

const SAMPLER_RETRIES: usize = 64;

/// One neighbor entry in a distance-table bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub neighbor: u32,
    pub sq_dist: f64,
}

/// Per-anchor lists of (neighbor, squared distance), each sorted in
/// descending distance order. Either complete (M-1 entries per bucket) or
/// windowed down to the sampler's candidate sets.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    buckets: Vec<Vec<TableEntry>>,
    windowed: bool,
}

impl DistanceTable {
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn is_windowed(&self) -> bool {
        self.windowed
    }

    pub fn bucket(&self, m: usize) -> &[TableEntry] {
        &self.buckets[m]
    }

    /// Total number of stored entries.
    pub fn entry_count(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    /// Retains, per bucket, only the entries inside the T_p / T_n windows
    /// plus each window's nearest-entry fallback, preserving order. The
    /// threshold sampler behaves identically on the result; memory drops
    /// from O(M^2) to O(M * window).
    pub fn windowed(&self, cfg: &TripletSamplerConfig) -> Result<DistanceTable> {
        cfg.validate()?;
        let buckets = self
            .buckets
            .iter()
            .map(|bucket| {
                let mut keep = vec![false; bucket.len()];
                for target in [cfg.t_p, cfg.t_n] {
                    let (lo, hi) = window_range(bucket, target, cfg.tolerance);
                    if lo < hi {
                        keep[lo..hi].iter_mut().for_each(|k| *k = true);
                    } else if let Some(i) = nearest_entry(bucket, target) {
                        keep[i] = true;
                    }
                }
                bucket
                    .iter()
                    .zip(keep)
                    .filter_map(|(e, k)| k.then_some(*e))
                    .collect()
            })
            .collect();
        Ok(DistanceTable {
            buckets,
            windowed: true,
        })
    }

    /// Pooled entry distances on the square-root scale, subsampled by a
    /// deterministic stride when the table holds more than 10^6 entries.
    fn pooled_sqrt_distances(&self) -> Vec<f64> {
        let total = self.entry_count();
        let stride = total.div_ceil(1_000_000).max(1);
        self.buckets
            .iter()
            .flatten()
            .step_by(stride)
            .map(|e| e.sq_dist.sqrt())
            .collect()
    }
}

/// Squared Euclidean distance lookup table over all training descriptors.
/// Ties in distance are ordered by ascending neighbor index.
pub fn build_distance_table(train: &DescriptorDataset) -> Result<DistanceTable> {
    let m = train.count();
    if m < 3 {
        return Err(UthError::Argument(format!(
            "a distance table needs at least 3 descriptors for triplets, got {m}"
        )));
    }
    let data = train.data();
    let buckets = (0..m)
        .map(|a| {
            let row = data.row(a);
            let mut entries: Vec<TableEntry> = (0..m)
                .filter(|&b| b != a)
                .map(|b| TableEntry {
                    neighbor: b as u32,
                    sq_dist: squared_l2_f32(row, data.row(b)),
                })
                .collect();
            entries.sort_by(|x, y| {
                y.sq_dist
                    .partial_cmp(&x.sq_dist)
                    .expect("distances are finite")
                    .then(x.neighbor.cmp(&y.neighbor))
            });
            entries
        })
        .collect();
    Ok(DistanceTable {
        buckets,
        windowed: false,
    })
}

fn squared_l2_f32(a: ArrayView1<f32>, b: ArrayView1<f32>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Index range [lo, hi) of bucket entries whose root distance is within
/// `tolerance` of `target`. The bucket is sorted descending, so both
/// boundaries come from binary searches on the squared bounds.
fn window_range(bucket: &[TableEntry], target: f64, tolerance: f64) -> (usize, usize) {
    let lo_bound = (target - tolerance).max(0.0).powi(2);
    let hi_bound = (target + tolerance).powi(2);
    let start = bucket.partition_point(|e| e.sq_dist > hi_bound);
    let end = bucket.partition_point(|e| e.sq_dist >= lo_bound);
    (start, end)
}

/// Entry minimizing |sqrt(dist) - target|; ties resolve to the earlier
/// (larger-distance) entry.
fn nearest_entry(bucket: &[TableEntry], target: f64) -> Option<usize> {
    let sq = target * target;
    let split = bucket.partition_point(|e| e.sq_dist > sq);
    let candidates = [split.checked_sub(1), (split < bucket.len()).then_some(split)];
    candidates
        .into_iter()
        .flatten()
        .min_by(|&i, &j| {
            let di = (bucket[i].sq_dist.sqrt() - target).abs();
            let dj = (bucket[j].sq_dist.sqrt() - target).abs();
            di.partial_cmp(&dj)
                .expect("distances are finite")
                .then(i.cmp(&j))
        })
}

/// Threshold-sampler configuration. Thresholds live on the square-root
/// (Euclidean, not squared) distance scale.
#[derive(Debug, Clone)]
pub struct TripletSamplerConfig {
    pub t_p: f64,
    pub t_n: f64,
    pub tolerance: f64,
    pub triplets_per_epoch: usize,
}

impl TripletSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_p >= 0.0 && self.t_p < self.t_n && self.t_n.is_finite()) {
            return Err(UthError::Argument(format!(
                "thresholds must satisfy 0 <= T_p < T_n, got T_p={} T_n={}",
                self.t_p, self.t_n
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(UthError::Argument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.triplets_per_epoch == 0 {
            return Err(UthError::Argument(
                "triplets_per_epoch must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Data-driven defaults: T_p and T_n are the 5th and 50th percentiles
    /// of the pooled pairwise distances, tolerance is 2% of the pooled
    /// range. Anchors the windows to the dataset's own distance scale.
    pub fn from_table(table: &DistanceTable, triplets_per_epoch: usize) -> Result<Self> {
        let mut pooled = table.pooled_sqrt_distances();
        if pooled.is_empty() {
            return Err(UthError::Argument("distance table has no entries".into()));
        }
        pooled.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        let pick = |p: f64| pooled[((p * (pooled.len() - 1) as f64).round()) as usize];
        let t_p = pick(0.05);
        let t_n = pick(0.50);
        let tolerance = 0.02 * (pooled[pooled.len() - 1] - pooled[0]);
        let cfg = TripletSamplerConfig {
            t_p,
            t_n,
            tolerance,
            triplets_per_epoch,
        };
        cfg.validate().map_err(|e| {
            UthError::Argument(format!(
                "could not derive sampler thresholds (degenerate distance distribution): {e}"
            ))
        })?;
        Ok(cfg)
    }
}

/// Indices into the training set; the positive is strictly closer to the
/// anchor than the negative in descriptor space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: u32,
    pub positive: u32,
    pub negative: u32,
}

/// Draws a triplet by the threshold rule: anchor uniform, q+ uniform in
/// the T_p window (nearest entry if the window is empty), q- likewise for
/// T_n. Retries when the draw violates the triplet constraint and fails
/// once the retry budget is spent.
pub fn sample_triplet<R: Rng>(
    table: &DistanceTable,
    cfg: &TripletSamplerConfig,
    rng: &mut R,
) -> Result<Triplet> {
    cfg.validate()?;
    if table.is_empty() {
        return Err(UthError::Argument("distance table is empty".into()));
    }
    for _ in 0..SAMPLER_RETRIES {
        let anchor = rng.random_range(0..table.len());
        let bucket = table.bucket(anchor);
        let Some((positive, dp)) = draw_near(bucket, cfg.t_p, cfg.tolerance, rng) else {
            continue;
        };
        let Some((negative, dn)) = draw_near(bucket, cfg.t_n, cfg.tolerance, rng) else {
            continue;
        };
        if positive != negative && dp < dn {
            return Ok(Triplet {
                anchor: anchor as u32,
                positive,
                negative,
            });
        }
    }
    Err(UthError::SamplerExhausted {
        retries: SAMPLER_RETRIES,
        message: format!(
            "no triplet with positive distance < negative distance near T_p={} T_n={} (tolerance {})",
            cfg.t_p, cfg.t_n, cfg.tolerance
        ),
    })
}

fn draw_near<R: Rng>(
    bucket: &[TableEntry],
    target: f64,
    tolerance: f64,
    rng: &mut R,
) -> Option<(u32, f64)> {
    let (lo, hi) = window_range(bucket, target, tolerance);
    let idx = if lo < hi {
        lo + rng.random_range(0..hi - lo)
    } else {
        nearest_entry(bucket, target)?
    };
    let e = bucket[idx];
    Some((e.neighbor, e.sq_dist))
}

/// Draws three distinct indices uniformly and labels the two non-anchors
/// by their distance to the anchor; a tie makes the smaller index the
/// positive. Requires a complete (non-windowed) table.
pub fn sample_uniform_triplet<R: Rng>(table: &DistanceTable, rng: &mut R) -> Result<Triplet> {
    if table.is_windowed() {
        return Err(UthError::Argument(
            "uniform sampling needs the complete distance table, not a windowed one".into(),
        ));
    }
    if table.len() < 3 {
        return Err(UthError::Argument(format!(
            "uniform triplets need at least 3 descriptors, got {}",
            table.len()
        )));
    }
    let m = table.len();
    let anchor = rng.random_range(0..m);
    let first = loop {
        let x = rng.random_range(0..m);
        if x != anchor {
            break x;
        }
    };
    let second = loop {
        let x = rng.random_range(0..m);
        if x != anchor && x != first {
            break x;
        }
    };
    let bucket = table.bucket(anchor);
    let mut d_first = None;
    let mut d_second = None;
    for e in bucket {
        if e.neighbor == first as u32 {
            d_first = Some(e.sq_dist);
        } else if e.neighbor == second as u32 {
            d_second = Some(e.sq_dist);
        }
    }
    let (df, ds) = (
        d_first.expect("complete bucket holds every other index"),
        d_second.expect("complete bucket holds every other index"),
    );
    let (positive, negative) = if df < ds || (df == ds && first < second) {
        (first, second)
    } else {
        (second, first)
    };
    Ok(Triplet {
        anchor: anchor as u32,
        positive: positive as u32,
        negative: negative as u32,
    })
}

/// Softmax normalization of the two squared distances, guarded against
/// overflow by max-subtraction. Returns (d'+, d'-) with d'+ + d'- = 1.
pub fn triplet_distances_softmax(dp: f64, dn: f64) -> (f64, f64) {
    let m = dp.max(dn);
    let ep = (dp - m).exp();
    let en = (dn - m).exp();
    let d_pos = ep / (ep + en);
    (d_pos, 1.0 - d_pos)
}

/// Ranking loss on three embeddings with the default margin g = 1.
pub fn triplet_loss(
    fq: ArrayView1<f64>,
    fq_pos: ArrayView1<f64>,
    fq_neg: ArrayView1<f64>,
) -> Result<f64> {
    triplet_loss_margin(fq, fq_pos, fq_neg, 1.0)
}

pub(crate) fn triplet_loss_margin(
    fq: ArrayView1<f64>,
    fq_pos: ArrayView1<f64>,
    fq_neg: ArrayView1<f64>,
    margin: f64,
) -> Result<f64> {
    if fq.len() != fq_pos.len() || fq.len() != fq_neg.len() {
        return Err(UthError::Argument(format!(
            "embedding lengths differ: {} / {} / {}",
            fq.len(),
            fq_pos.len(),
            fq_neg.len()
        )));
    }
    let dp = squared_l2_f64(fq, fq_pos);
    let dn = squared_l2_f64(fq, fq_neg);
    let (d_pos, d_neg) = triplet_distances_softmax(dp, dn);
    Ok((margin + d_pos - d_neg).max(0.0))
}

fn squared_l2_f64(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// Exact loss gradient for one triplet of raw descriptors, with all three
/// branches backpropagated into one shared parameter gradient. Returns
/// (loss, gradient). Margin is the default g = 1.
pub fn triplet_loss_gradient(
    stack: &SrbmStack,
    q: ArrayView1<f64>,
    q_pos: ArrayView1<f64>,
    q_neg: ArrayView1<f64>,
) -> Result<(f64, StackGradient)> {
    let mut grad = StackGradient::zeros_like(stack);
    let loss = accumulate_triplet_gradient(stack, q, q_pos, q_neg, 1.0, &mut grad, 0)?;
    Ok((loss, grad))
}

/// Adds one triplet's gradient into `grad`, skipping layers below
/// `min_layer`. The derivative of l = max{0, g - 1 + 2 s_p} w.r.t. the
/// squared distances is s = 2 s_p s_n (0 when the hinge clips), and per
/// branch
///
/// ```text
/// dL/da = 2 s (c - b),  dL/db = 2 s (b - a),  dL/dc = 2 s (a - c)
/// ```
///
/// for embeddings a = p(q), b = p(q+), c = p(q-).
fn accumulate_triplet_gradient(
    stack: &SrbmStack,
    q: ArrayView1<f64>,
    q_pos: ArrayView1<f64>,
    q_neg: ArrayView1<f64>,
    margin: f64,
    grad: &mut StackGradient,
    min_layer: usize,
) -> Result<f64> {
    let trace_a = stack.forward_trace(q)?;
    let trace_b = stack.forward_trace(q_pos)?;
    let trace_c = stack.forward_trace(q_neg)?;
    let a = trace_a.last().expect("trace is non-empty");
    let b = trace_b.last().expect("trace is non-empty");
    let c = trace_c.last().expect("trace is non-empty");

    let dp = squared_l2_f64(a.view(), b.view());
    let dn = squared_l2_f64(a.view(), c.view());
    let (s_pos, s_neg) = triplet_distances_softmax(dp, dn);
    let loss = (margin + s_pos - s_neg).max(0.0);
    if loss == 0.0 {
        return Ok(0.0);
    }
    let s = 2.0 * s_pos * s_neg;

    let d_a = Array1::from_shape_fn(a.len(), |i| 2.0 * s * (c[i] - b[i]));
    let d_b = Array1::from_shape_fn(a.len(), |i| 2.0 * s * (b[i] - a[i]));
    let d_c = Array1::from_shape_fn(a.len(), |i| 2.0 * s * (a[i] - c[i]));
    accumulate_embedding_gradient_from(stack, &trace_a, d_a, grad, min_layer);
    accumulate_embedding_gradient_from(stack, &trace_b, d_b, grad, min_layer);
    accumulate_embedding_gradient_from(stack, &trace_c, d_c, grad, min_layer);
    Ok(loss)
}

fn accumulate_embedding_gradient_from(
    stack: &SrbmStack,
    trace: &[Array1<f64>],
    d_out: Array1<f64>,
    grad: &mut StackGradient,
    min_layer: usize,
) {
    if min_layer == 0 {
        accumulate_embedding_gradient(stack, trace, d_out, grad);
    } else {
        // Truncated variant: identical math, stops above min_layer.
        crate::srbm::accumulate_embedding_gradient_partial(stack, trace, d_out, grad, min_layer);
    }
}

/// Triplet selection strategy for fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Distance-threshold windows around T_p / T_n.
    Threshold,
    /// Uniform random triplets, labeled by relative distance.
    Uniform,
}

/// SGD hyperparameters for fine-tuning.
#[derive(Debug, Clone)]
pub struct FinetuneConfig {
    /// Hinge margin g; the loss formulation fixes 1 as the default.
    pub margin: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Restrict updates to the top layer instead of full backpropagation.
    pub top_layer_only: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            margin: 1.0,
            learning_rate: 0.005,
            momentum: 0.9,
            epochs: 150,
            batch_size: 128,
            seed: 0,
            top_layer_only: false,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(UthError::Argument(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
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
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(UthError::Argument(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The exact triplet stream one fine-tuning epoch consumes. Sampling
/// uses its own per-epoch generator and nothing else, so the stream a
/// training run saw can be reproduced and audited independently.
pub fn sample_epoch_triplets(
    table: &DistanceTable,
    scfg: &TripletSamplerConfig,
    mode: SamplingMode,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Triplet>> {
    scfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF17E + epoch as u64));
    (0..scfg.triplets_per_epoch)
        .map(|_| match mode {
            SamplingMode::Threshold => sample_triplet(table, scfg, &mut rng),
            SamplingMode::Uniform => sample_uniform_triplet(table, &mut rng),
        })
        .collect()
}

/// Fine-tunes a copy of the stack with minibatch SGD + momentum on the
/// triplet loss. Returns the tuned stack and the per-epoch mean loss.
/// Deterministic for fixed (inputs, seed); sampling and gradient
/// accumulation run in a fixed order.
pub fn finetune(
    stack: &SrbmStack,
    train: &DescriptorDataset,
    table: &DistanceTable,
    scfg: &TripletSamplerConfig,
    fcfg: &FinetuneConfig,
    mode: SamplingMode,
) -> Result<(SrbmStack, Vec<f64>)> {
    scfg.validate()?;
    fcfg.validate()?;
    if stack.input_dim() != train.dim() {
        return Err(UthError::Argument(format!(
            "stack input dim {} does not match training data dim {}",
            stack.input_dim(),
            train.dim()
        )));
    }
    if table.len() != train.count() {
        return Err(UthError::Argument(format!(
            "distance table covers {} descriptors but the training set has {}",
            table.len(),
            train.count()
        )));
    }
    let data = train.to_f64();
    let mut tuned = stack.clone();
    let mut velocity = StackGradient::zeros_like(&tuned);
    let mut batch_grad = StackGradient::zeros_like(&tuned);
    let min_layer = if fcfg.top_layer_only {
        tuned.layers().len() - 1
    } else {
        0
    };
    let mut trace = Vec::with_capacity(fcfg.epochs);

    for epoch in 0..fcfg.epochs {
        let triplets = sample_epoch_triplets(table, scfg, mode, fcfg.seed, epoch)?;
        let mut epoch_loss = 0.0;
        for batch in triplets.chunks(fcfg.batch_size) {
            batch_grad.zero_out();
            let mut batch_loss = 0.0;
            for t in batch {
                let loss = accumulate_triplet_gradient(
                    &tuned,
                    data.row(t.anchor as usize),
                    data.row(t.positive as usize),
                    data.row(t.negative as usize),
                    fcfg.margin,
                    &mut batch_grad,
                    min_layer,
                )?;
                if !loss.is_finite() {
                    return Err(UthError::Divergence(format!(
                        "triplet loss became non-finite in epoch {epoch}"
                    )));
                }
                batch_loss += loss;
            }
            batch_grad.scale(1.0 / batch.len() as f64);
            velocity.scale(fcfg.momentum);
            velocity.add_scaled(&batch_grad, 1.0);
            for l in min_layer..tuned.layers().len() {
                let delta = velocity.layers[l].clone();
                tuned.layers_mut()[l].apply_delta(&delta, -fcfg.learning_rate);
                if !tuned.layers()[l].params_finite() {
                    return Err(UthError::Divergence(format!(
                        "stack parameters became non-finite in epoch {epoch} at learning rate {}",
                        fcfg.learning_rate
                    )));
                }
            }
            epoch_loss += batch_loss;
        }
        trace.push(epoch_loss / scfg.triplets_per_epoch as f64);
    }
    Ok((tuned, trace))
}

/// Histogram with shared equal-width bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// n_bins + 1 edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Squared-distance histograms for matching and non-matching id pairs over
/// shared bins spanning the pooled range of both lists.
pub fn match_distance_histogram(
    pairs_match: &[(String, String)],
    pairs_nonmatch: &[(String, String)],
    d: &DescriptorDataset,
    n_bins: usize,
) -> Result<(Histogram, Histogram)> {
    if pairs_match.is_empty() || pairs_nonmatch.is_empty() {
        return Err(UthError::Argument(
            "both pair lists must be non-empty".into(),
        ));
    }
    if n_bins == 0 {
        return Err(UthError::Argument("n_bins must be at least 1".into()));
    }
    let index = d.id_index();
    let resolve = |pairs: &[(String, String)]| -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|(a, b)| {
                let ia = *index.get(a.as_str()).ok_or_else(|| {
                    UthError::Validation(format!("pair id '{a}' is not in the dataset"))
                })?;
                let ib = *index.get(b.as_str()).ok_or_else(|| {
                    UthError::Validation(format!("pair id '{b}' is not in the dataset"))
                })?;
                Ok(squared_l2_f32(d.row(ia), d.row(ib)))
            })
            .collect()
    };
    let dm = resolve(pairs_match)?;
    let dn = resolve(pairs_nonmatch)?;
    let lo = dm.iter().chain(&dn).cloned().fold(f64::INFINITY, f64::min);
    let hi = dm
        .iter()
        .chain(&dn)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    let fill = |dists: &[f64]| {
        let mut counts = vec![0usize; n_bins];
        for &x in dists {
            let bin = if width > 0.0 {
                (((x - lo) / width) as usize).min(n_bins - 1)
            } else {
                0
            };
            counts[bin] += 1;
        }
        counts
    };
    Ok((
        Histogram {
            edges: edges.clone(),
            counts: fill(&dm),
        },
        Histogram {
            edges,
            counts: fill(&dn),
        },
    ))
}

/// Checks a triplet against the descriptor-space constraint; used by
/// tests and debug assertions.
pub fn triplet_satisfies_constraint(t: &Triplet, d: &DescriptorDataset) -> bool {
    let dp = squared_l2_f32(d.row(t.anchor as usize), d.row(t.positive as usize));
    let dn = squared_l2_f32(d.row(t.anchor as usize), d.row(t.negative as usize));
    t.anchor != t.positive && t.anchor != t.negative && t.positive != t.negative && dp < dn
}
