//! Classic hashing baselines behind one fit/encode interface: LSH, SKLSH,
//! spectral hashing, PCA hashing, ITQ, and bilinear projection codes.
//!
//! All binarization uses the same deterministic convention: a bit is 1
//! exactly when its underlying value is > 0, so sgn(0) maps to bit 0.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::dataset::{BinaryCodeSet, DescriptorDataset};
use crate::error::{Result, UthError};

const ORTHO_TOL: f64 = 1e-8;

/// The six supported baseline schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Lsh,
    Sklsh,
    Sh,
    PcaHash,
    Itq,
    Bpbc,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 6] = [
        BaselineMethod::Lsh,
        BaselineMethod::Sklsh,
        BaselineMethod::Sh,
        BaselineMethod::PcaHash,
        BaselineMethod::Itq,
        BaselineMethod::Bpbc,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            BaselineMethod::Lsh => "lsh",
            BaselineMethod::Sklsh => "sklsh",
            BaselineMethod::Sh => "sh",
            BaselineMethod::PcaHash => "pcahash",
            BaselineMethod::Itq => "itq",
            BaselineMethod::Bpbc => "bpbc",
        }
    }
}

impl std::fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = UthError;

    fn from_str(s: &str) -> Result<Self> {
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| {
                UthError::Argument(format!(
                    "unknown baseline method '{s}' (expected one of lsh, sklsh, sh, pcahash, itq, bpbc)"
                ))
            })
    }
}

/// Principal component analysis of a descriptor set.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: Array1<f64>,
    /// dim x k, orthonormal columns ordered by descending eigenvalue.
    basis: Array2<f64>,
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub(crate) fn from_parts(
        mean: Array1<f64>,
        basis: Array2<f64>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        let pca = PcaModel {
            mean,
            basis,
            eigenvalues,
        };
        pca.validate()?;
        Ok(pca)
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != self.basis.nrows() || self.eigenvalues.len() != self.basis.ncols() {
            return Err(UthError::Validation(
                "pca mean/basis/eigenvalue shapes are inconsistent".into(),
            ));
        }
        if self.eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(UthError::Validation(
                "pca eigenvalues must be finite and non-negative".into(),
            ));
        }
        if self.eigenvalues.windows(2).any(|p| p[1] > p[0]) {
            return Err(UthError::Validation(
                "pca eigenvalues must be sorted descending".into(),
            ));
        }
        if self.mean.iter().any(|v| !v.is_finite())
            || self.basis.iter().any(|v| !v.is_finite())
        {
            return Err(UthError::Validation("pca parameters must be finite".into()));
        }
        let gram_err = max_abs_gram_deviation(self.basis.view());
        if gram_err > ORTHO_TOL {
            return Err(UthError::Validation(format!(
                "pca basis is not orthonormal (deviation {gram_err:.2e})"
            )));
        }
        Ok(())
    }

    /// Centered projection onto the retained components.
    pub fn project(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(UthError::Argument(format!(
                "input length {} does not match pca dimensionality {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok((&x - &self.mean).dot(&self.basis))
    }

    pub fn project_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(UthError::Argument(format!(
                "input has {} columns, expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let centered = &x - &self.mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.basis))
    }
}

/// ||M^T M - I||_max for orthogonality checks.
fn max_abs_gram_deviation(m: ArrayView2<f64>) -> f64 {
    let gram = m.t().dot(&m);
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[[i, j]] - target).abs());
        }
    }
    worst
}

/// Mean-centered covariance eigendecomposition keeping the top k
/// components. Each basis column's largest-magnitude entry is made
/// positive so the decomposition is sign-deterministic.
pub fn fit_pca(data: &DescriptorDataset, k: usize) -> Result<PcaModel> {
    let (n, dim) = (data.count(), data.dim());
    if k == 0 {
        return Err(UthError::Argument("pca needs k >= 1".into()));
    }
    if n < 2 || k > (n - 1).min(dim) {
        return Err(UthError::Argument(format!(
            "pca with k={k} needs at least k+1 rows and k dims, got {n} rows of dim {dim}"
        )));
    }
    let x = data.to_f64();
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let cov_na = DMatrix::from_row_iterator(dim, dim, cov.iter().copied());
    let eig = nalgebra::SymmetricEigen::new(cov_na);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let mut basis = Array2::zeros((dim, k));
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        eigenvalues.push(eig.eigenvalues[src].max(0.0));
        let mut best = 0usize;
        for i in 1..dim {
            if eig.eigenvectors[(i, src)].abs() > eig.eigenvectors[(best, src)].abs() {
                best = i;
            }
        }
        let flip = if eig.eigenvectors[(best, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            basis[[i, col]] = flip * eig.eigenvectors[(i, src)];
        }
    }
    PcaModel::from_parts(mean, basis, eigenvalues)
}

/// Haar-distributed random orthogonal matrix: QR of a Gaussian matrix with
/// the sign of diag(R) folded into Q.
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).expect("std dev is positive");
    let g = DMatrix::from_fn(n, n, |_, _| normal.sample(rng));
    let qr = g.qr();
    let r_diag: Vec<f64> = (0..n).map(|i| qr.r()[(i, i)]).collect();
    let q = qr.q();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let sign = if r_diag[j] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * sign
    })
}

/// Method-specific parameters of a fitted baseline.
#[derive(Debug, Clone)]
pub enum HasherKind {
    /// Columns are unit-norm Gaussian directions; bit = w.x > 0.
    Lsh { projections: Array2<f64> },
    /// Shift-invariant kernel LSH: bit = cos(w.x + b) + t > 0 with
    /// w ~ N(0, gamma I), b ~ U[0, 2 pi), t ~ U[-1, 1].
    Sklsh {
        w: Array2<f64>,
        b: Array1<f64>,
        t: Array1<f64>,
        gamma: f64,
    },
    /// Spectral hashing: analytic eigenfunctions of the per-direction
    /// ranges of PCA-projected data; `modes` lists (direction, harmonic).
    Sh {
        pca: PcaModel,
        ranges: Vec<(f64, f64)>,
        modes: Vec<(u32, u32)>,
    },
    /// PCA projection followed by one random rotation.
    PcaHash { pca: PcaModel, rotation: Array2<f64> },
    /// PCA projection with the Procrustes-optimized ITQ rotation.
    Itq { pca: PcaModel, rotation: Array2<f64> },
    /// Bilinear rotations of the input reshaped to d1 x d2 (row-major).
    Bpbc {
        d1: usize,
        d2: usize,
        r1: Array2<f64>,
        r2: Array2<f64>,
    },
}

/// A fitted baseline hasher.
#[derive(Debug, Clone)]
pub struct HasherModel {
    n_bits: usize,
    kind: HasherKind,
}

impl HasherModel {
    pub fn new(n_bits: usize, kind: HasherKind) -> Result<Self> {
        let model = HasherModel { n_bits, kind };
        model.validate()?;
        Ok(model)
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn kind(&self) -> &HasherKind {
        &self.kind
    }

    pub fn method(&self) -> BaselineMethod {
        match self.kind {
            HasherKind::Lsh { .. } => BaselineMethod::Lsh,
            HasherKind::Sklsh { .. } => BaselineMethod::Sklsh,
            HasherKind::Sh { .. } => BaselineMethod::Sh,
            HasherKind::PcaHash { .. } => BaselineMethod::PcaHash,
            HasherKind::Itq { .. } => BaselineMethod::Itq,
            HasherKind::Bpbc { .. } => BaselineMethod::Bpbc,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            HasherKind::Lsh { projections } => projections.nrows(),
            HasherKind::Sklsh { w, .. } => w.nrows(),
            HasherKind::Sh { pca, .. } => pca.input_dim(),
            HasherKind::PcaHash { pca, .. } | HasherKind::Itq { pca, .. } => pca.input_dim(),
            HasherKind::Bpbc { d1, d2, .. } => d1 * d2,
        }
    }

    /// Structural and numerical invariants; also run when loading from disk.
    pub fn validate(&self) -> Result<()> {
        if self.n_bits == 0 {
            return Err(UthError::Validation("hasher has zero bits".into()));
        }
        let check_rotation = |r: &Array2<f64>, what: &str| -> Result<()> {
            if r.nrows() != r.ncols() {
                return Err(UthError::Validation(format!("{what} is not square")));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(UthError::Validation(format!("{what} has non-finite entries")));
            }
            let dev = max_abs_gram_deviation(r.view());
            if dev > ORTHO_TOL {
                return Err(UthError::Validation(format!(
                    "{what} is not orthogonal (deviation {dev:.2e})"
                )));
            }
            Ok(())
        };
        match &self.kind {
            HasherKind::Lsh { projections } => {
                if projections.ncols() != self.n_bits {
                    return Err(UthError::Validation(
                        "lsh projection count does not match n_bits".into(),
                    ));
                }
                if projections.iter().any(|v| !v.is_finite()) {
                    return Err(UthError::Validation("lsh projections non-finite".into()));
                }
            }
            HasherKind::Sklsh { w, b, t, gamma } => {
                if w.ncols() != self.n_bits || b.len() != self.n_bits || t.len() != self.n_bits {
                    return Err(UthError::Validation(
                        "sklsh parameter widths do not match n_bits".into(),
                    ));
                }
                let finite = w.iter().all(|v| v.is_finite())
                    && b.iter().all(|v| v.is_finite())
                    && t.iter().all(|v| v.is_finite());
                if !finite || !gamma.is_finite() || *gamma <= 0.0 {
                    return Err(UthError::Validation("sklsh parameters invalid".into()));
                }
            }
            HasherKind::Sh { pca, ranges, modes } => {
                pca.validate()?;
                if ranges.len() != pca.k() {
                    return Err(UthError::Validation(
                        "sh range count does not match pca width".into(),
                    ));
                }
                if modes.len() != self.n_bits {
                    return Err(UthError::Validation(
                        "sh mode count does not match n_bits".into(),
                    ));
                }
                for &(d, j) in modes {
                    let (a, b) = *ranges
                        .get(d as usize)
                        .ok_or_else(|| UthError::Validation("sh mode direction out of range".into()))?;
                    if j == 0 || !(b > a) {
                        return Err(UthError::Validation(
                            "sh mode must use harmonic j >= 1 on a non-degenerate range".into(),
                        ));
                    }
                }
            }
            HasherKind::PcaHash { pca, rotation } | HasherKind::Itq { pca, rotation } => {
                pca.validate()?;
                if pca.k() != self.n_bits || rotation.nrows() != self.n_bits {
                    return Err(UthError::Validation(
                        "pca width and rotation size must equal n_bits".into(),
                    ));
                }
                check_rotation(rotation, "rotation")?;
            }
            HasherKind::Bpbc { d1, d2, r1, r2 } => {
                if *d1 == 0 || *d2 == 0 {
                    return Err(UthError::Validation("bpbc shape must be positive".into()));
                }
                if r1.nrows() != *d1 || r2.nrows() != *d2 {
                    return Err(UthError::Validation(
                        "bpbc rotation sizes do not match the declared shape".into(),
                    ));
                }
                if self.n_bits > d1 * d2 {
                    return Err(UthError::Validation(
                        "bpbc n_bits exceeds the reshaped dimensionality".into(),
                    ));
                }
                check_rotation(r1, "bpbc r1")?;
                check_rotation(r2, "bpbc r2")?;
            }
        }
        Ok(())
    }
}

/// Tunables that the six methods expose; defaults follow each method's
/// originating publication.
#[derive(Debug, Clone)]
pub struct BaselineOptions {
    pub itq_iterations: usize,
    pub sklsh_sample_pairs: usize,
    /// Explicit d1 x d2 reshape for BPBC; default is the most-square
    /// factorization of the input dimensionality.
    pub bpbc_shape: Option<(usize, usize)>,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            itq_iterations: 50,
            sklsh_sample_pairs: 1000,
            bpbc_shape: None,
        }
    }
}

/// Fits one baseline with default options.
pub fn fit_baseline(
    method: BaselineMethod,
    data: &DescriptorDataset,
    n_bits: usize,
    seed: u64,
) -> Result<HasherModel> {
    fit_baseline_with(method, data, n_bits, seed, &BaselineOptions::default())
}

/// Fits one baseline. Deterministic per (method, data, n_bits, seed).
pub fn fit_baseline_with(
    method: BaselineMethod,
    data: &DescriptorDataset,
    n_bits: usize,
    seed: u64,
    opts: &BaselineOptions,
) -> Result<HasherModel> {
    if n_bits == 0 {
        return Err(UthError::Argument("n_bits must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = match method {
        BaselineMethod::Lsh => fit_lsh(data.dim(), n_bits, &mut rng),
        BaselineMethod::Sklsh => fit_sklsh(data, n_bits, opts.sklsh_sample_pairs, &mut rng)?,
        BaselineMethod::Sh => fit_sh(data, n_bits)?,
        BaselineMethod::PcaHash => {
            let pca = fit_pca(data, n_bits)?;
            let rotation = random_orthogonal(n_bits, &mut rng);
            HasherKind::PcaHash { pca, rotation }
        }
        BaselineMethod::Itq => fit_itq(data, n_bits, opts.itq_iterations, &mut rng)?.0,
        BaselineMethod::Bpbc => fit_bpbc(data.dim(), n_bits, opts.bpbc_shape, &mut rng)?,
    };
    HasherModel::new(n_bits, kind)
}

/// ITQ fit that also returns the per-iteration quantization-error trace.
pub fn fit_itq_with_trace(
    data: &DescriptorDataset,
    n_bits: usize,
    seed: u64,
    iterations: usize,
) -> Result<(HasherModel, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (kind, trace) = fit_itq(data, n_bits, iterations, &mut rng)?;
    Ok((HasherModel::new(n_bits, kind)?, trace))
}

fn fit_lsh<R: Rng>(dim: usize, n_bits: usize, rng: &mut R) -> HasherKind {
    let normal = Normal::new(0.0, 1.0).expect("std dev is positive");
    let mut projections = Array2::zeros((dim, n_bits));
    for j in 0..n_bits {
        let mut col = projections.column_mut(j);
        loop {
            for x in col.iter_mut() {
                *x = normal.sample(rng);
            }
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                col.mapv_inplace(|x| x / norm);
                break;
            }
        }
    }
    HasherKind::Lsh { projections }
}

fn fit_sklsh<R: Rng>(
    data: &DescriptorDataset,
    n_bits: usize,
    sample_pairs: usize,
    rng: &mut R,
) -> Result<HasherKind> {
    if data.count() < 2 {
        return Err(UthError::Argument(
            "sklsh bandwidth estimation needs at least 2 rows".into(),
        ));
    }
    if sample_pairs == 0 {
        return Err(UthError::Argument("sklsh needs at least 1 sample pair".into()));
    }
    let mut dists = Vec::with_capacity(sample_pairs);
    for _ in 0..sample_pairs {
        let i = rng.random_range(0..data.count());
        let j = loop {
            let j = rng.random_range(0..data.count());
            if j != i {
                break j;
            }
        };
        let d: f64 = data
            .row(i)
            .iter()
            .zip(data.row(j).iter())
            .map(|(&a, &b)| {
                let d = f64::from(a) - f64::from(b);
                d * d
            })
            .sum();
        dists.push(d);
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let median = dists[dists.len() / 2];
    if median <= 0.0 {
        return Err(UthError::Argument(
            "sklsh bandwidth is degenerate: median pairwise distance is 0".into(),
        ));
    }
    let gamma = 1.0 / median;
    let normal = Normal::new(0.0, gamma.sqrt()).expect("std dev is positive");
    let w = Array2::from_shape_fn((data.dim(), n_bits), |_| normal.sample(rng));
    let two_pi = Uniform::new(0.0, 2.0 * std::f64::consts::PI).expect("bounds are ordered");
    let b = Array1::from_shape_fn(n_bits, |_| two_pi.sample(rng));
    let pm_one = Uniform::new_inclusive(-1.0, 1.0).expect("bounds are ordered");
    let t = Array1::from_shape_fn(n_bits, |_| pm_one.sample(rng));
    Ok(HasherKind::Sklsh { w, b, t, gamma })
}

fn fit_sh(data: &DescriptorDataset, n_bits: usize) -> Result<HasherKind> {
    let pca = fit_pca(data, n_bits)?;
    let projected = pca.project_batch(data.to_f64().view())?;
    let ranges: Vec<(f64, f64)> = (0..n_bits)
        .map(|d| {
            let col = projected.column(d);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect();

    // Candidate one-dimensional eigenfunctions: harmonic j on direction d
    // has eigenvalue (j pi / range)^2; keep the n_bits smallest. Ties
    // resolve by (eigenvalue, direction, harmonic).
    let mut candidates: Vec<(f64, u32, u32)> = Vec::new();
    for (d, &(a, b)) in ranges.iter().enumerate() {
        if !(b > a) {
            continue;
        }
        let len = b - a;
        for j in 1..=n_bits as u32 {
            let lambda = (j as f64 * std::f64::consts::PI / len).powi(2);
            candidates.push((lambda, d as u32, j));
        }
    }
    if candidates.len() < n_bits {
        return Err(UthError::Argument(
            "sh cannot build enough eigenfunctions: too many degenerate directions".into(),
        ));
    }
    candidates.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .expect("eigenvalues are finite")
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let modes = candidates[..n_bits].iter().map(|&(_, d, j)| (d, j)).collect();
    Ok(HasherKind::Sh { pca, ranges, modes })
}

fn fit_itq<R: Rng>(
    data: &DescriptorDataset,
    n_bits: usize,
    iterations: usize,
    rng: &mut R,
) -> Result<(HasherKind, Vec<f64>)> {
    let pca = fit_pca(data, n_bits)?;
    let v = pca.project_batch(data.to_f64().view())?;
    let r0 = random_orthogonal(n_bits, rng);
    let (rotation, trace) = itq_refine_rotation(v.view(), r0, iterations)?;
    Ok((HasherKind::Itq { pca, rotation }, trace))
}

/// Alternating minimization of ||B - V R||^2: B-step thresholds, R-step
/// solves the orthogonal Procrustes problem via SVD of B^T V. Returns the
/// final rotation and the quantization error after each iteration.
pub fn itq_refine_rotation(
    v: ArrayView2<f64>,
    r0: Array2<f64>,
    iterations: usize,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let k = v.ncols();
    if r0.nrows() != k || r0.ncols() != k {
        return Err(UthError::Argument(format!(
            "rotation is {}x{} but the projected data has {k} columns",
            r0.nrows(),
            r0.ncols()
        )));
    }
    if v.nrows() == 0 {
        return Err(UthError::Argument("itq needs at least one row".into()));
    }
    let mut r = r0;
    let mut trace = Vec::with_capacity(iterations);
    let mut b = sign_matrix(&v.dot(&r));
    trace.push(itq_quantization_error(v, r.view(), b.view()));
    for _ in 1..iterations {
        // Procrustes: B^T V = S Omega S_hat^T  =>  R = S_hat S^T.
        let m = b.t().dot(&v);
        let m_na = DMatrix::from_row_iterator(k, k, m.iter().copied());
        let svd = m_na.svd(true, true);
        let s = svd.u.expect("u requested");
        let s_hat_t = svd.v_t.expect("v_t requested");
        r = Array2::from_shape_fn((k, k), |(i, j)| {
            (0..k).map(|l| s_hat_t[(l, i)] * s[(j, l)]).sum()
        });
        b = sign_matrix(&v.dot(&r));
        trace.push(itq_quantization_error(v, r.view(), b.view()));
    }
    Ok((r, trace))
}

/// Entrywise sign with the 0 -> -1 convention, matching bit 0 at sgn(0).
fn sign_matrix(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|x| if x > 0.0 { 1.0 } else { -1.0 })
}

/// Mean-per-row squared Frobenius distance ||B - V R||^2.
pub fn itq_quantization_error(
    v: ArrayView2<f64>,
    r: ArrayView2<f64>,
    b: ArrayView2<f64>,
) -> f64 {
    let diff = &b - &v.dot(&r);
    diff.iter().map(|d| d * d).sum::<f64>() / v.nrows() as f64
}

/// Largest divisor of `dim` not exceeding its square root, paired with the
/// complementary factor; the most-square reshape for BPBC.
pub fn most_square_factorization(dim: usize) -> (usize, usize) {
    let root = (dim as f64).sqrt() as usize;
    for d1 in (1..=root).rev() {
        if dim % d1 == 0 {
            return (d1, dim / d1);
        }
    }
    (1, dim)
}

fn fit_bpbc<R: Rng>(
    dim: usize,
    n_bits: usize,
    shape: Option<(usize, usize)>,
    rng: &mut R,
) -> Result<HasherKind> {
    let (d1, d2) = shape.unwrap_or_else(|| most_square_factorization(dim));
    if d1 * d2 != dim {
        return Err(UthError::Argument(format!(
            "bpbc shape {d1}x{d2} does not factor the input dimensionality {dim}"
        )));
    }
    if n_bits > dim {
        return Err(UthError::Argument(format!(
            "bpbc produces at most dim bits; n_bits {n_bits} > dim {dim}"
        )));
    }
    let r1 = random_orthogonal(d1, rng);
    let r2 = random_orthogonal(d2, rng);
    Ok(HasherKind::Bpbc { d1, d2, r1, r2 })
}

/// Hashes every row with a fitted baseline; ids and order are preserved.
pub fn encode_baseline(model: &HasherModel, data: &DescriptorDataset) -> Result<BinaryCodeSet> {
    if data.count() > 0 && data.dim() != model.input_dim() {
        return Err(UthError::Argument(format!(
            "dataset dimensionality {} does not match the fitted dimensionality {}",
            data.dim(),
            model.input_dim()
        )));
    }
    let rows: Vec<Vec<u8>> = (0..data.count())
        .into_par_iter()
        .map(|i| {
            let x = data.row(i).mapv(f64::from);
            let bits = encode_one(model, x.view())?;
            Ok(crate::dataset::pack_bits(&bits))
        })
        .collect::<Result<_>>()?;
    BinaryCodeSet::new(data.ids().to_vec(), model.n_bits(), rows)
}

fn encode_one(model: &HasherModel, x: ArrayView1<f64>) -> Result<Vec<bool>> {
    let bits = match model.kind() {
        HasherKind::Lsh { projections } => {
            let z = x.dot(projections);
            z.iter().map(|&v| v > 0.0).collect()
        }
        HasherKind::Sklsh { w, b, t, .. } => {
            let z = x.dot(w) + b;
            z.iter()
                .zip(t.iter())
                .map(|(&zi, &ti)| zi.cos() + ti > 0.0)
                .collect()
        }
        HasherKind::Sh { pca, ranges, modes } => {
            let y = pca.project(x)?;
            modes
                .iter()
                .map(|&(d, j)| {
                    let (a, b) = ranges[d as usize];
                    let u = (y[d as usize] - a) / (b - a);
                    let phi =
                        (std::f64::consts::FRAC_PI_2 + j as f64 * std::f64::consts::PI * u).sin();
                    phi > 0.0
                })
                .collect()
        }
        HasherKind::PcaHash { pca, rotation } | HasherKind::Itq { pca, rotation } => {
            let z = pca.project(x)?.dot(rotation);
            z.iter().map(|&v| v > 0.0).collect()
        }
        HasherKind::Bpbc { d1, d2, r1, r2 } => {
            let mat = x
                .to_owned()
                .into_shape_with_order((*d1, *d2))
                .map_err(|_| {
                    UthError::Argument("input length does not match the bpbc shape".into())
                })?;
            let y = r1.t().dot(&mat).dot(r2);
            y.iter().take(model.n_bits()).map(|&v| v > 0.0).collect()
        }
    };
    Ok(bits)
}
