//! Synthetic clustered descriptors with same-cluster ground truth: the
//! desk-scale stand-in for a labeled retrieval benchmark, plus helpers
//! for random codes and match/non-match pair lists.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use crate::dataset::{BinaryCodeSet, DescriptorDataset, GroundTruth};
use crate::error::{Result, UthError};

/// Geometry of the generated fixture.
#[derive(Debug, Clone)]
pub struct ClusteredConfig {
    pub n_clusters: usize,
    pub points_per_cluster: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of points around their center;
    /// centers are standard normal.
    pub cluster_std: f64,
    pub seed: u64,
}

impl ClusteredConfig {
    fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.dim == 0 {
            return Err(UthError::Argument(
                "synthetic data needs at least 1 cluster and 1 dimension".into(),
            ));
        }
        if self.points_per_cluster < 2 {
            return Err(UthError::Argument(
                "each cluster needs at least 2 points so every query has a relevant item".into(),
            ));
        }
        if !self.cluster_std.is_finite() || self.cluster_std <= 0.0 {
            return Err(UthError::Argument("cluster_std must be positive".into()));
        }
        Ok(())
    }
}

/// Draws isotropic Gaussian clusters and pairs them with ground truth
/// marking all same-cluster points mutually relevant. Ids follow the
/// pattern `c<cluster>_p<point>`, zero-padded.
pub fn make_clustered(cfg: &ClusteredConfig) -> Result<(DescriptorDataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("std dev is positive");
    let spread = Normal::new(0.0, cfg.cluster_std).expect("validated positive");

    let centers = Array2::from_shape_fn((cfg.n_clusters, cfg.dim), |_| std_normal.sample(&mut rng));
    let total = cfg.n_clusters * cfg.points_per_cluster;
    let mut data = Array2::zeros((total, cfg.dim));
    let mut ids = Vec::with_capacity(total);
    for c in 0..cfg.n_clusters {
        for p in 0..cfg.points_per_cluster {
            let row = c * cfg.points_per_cluster + p;
            for d in 0..cfg.dim {
                data[[row, d]] = (centers[[c, d]] + spread.sample(&mut rng)) as f32;
            }
            ids.push(format!("c{c:03}_p{p:03}"));
        }
    }

    let mut map = BTreeMap::new();
    for c in 0..cfg.n_clusters {
        for p in 0..cfg.points_per_cluster {
            let rel: BTreeSet<String> = (0..cfg.points_per_cluster)
                .filter(|&q| q != p)
                .map(|q| format!("c{c:03}_p{q:03}"))
                .collect();
            map.insert(format!("c{c:03}_p{p:03}"), rel);
        }
    }
    Ok((DescriptorDataset::new(ids, data)?, GroundTruth::new(map)?))
}

/// Uniformly random codes over the same ids: the chance-level baseline.
pub fn random_codes(ids: Vec<String>, n_bits: usize, seed: u64) -> Result<BinaryCodeSet> {
    if n_bits == 0 {
        return Err(UthError::Argument("n_bits must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = (0..ids.len())
        .map(|_| (0..n_bits).map(|_| rng.random::<bool>()).collect())
        .collect();
    BinaryCodeSet::from_bits(ids, bits)
}

/// Samples up to `max_pairs` matching (same relevant set) and
/// non-matching id pairs from the ground truth, without duplicates.
pub fn make_pairs(
    ds: &DescriptorDataset,
    gt: &GroundTruth,
    max_pairs: usize,
    seed: u64,
) -> Result<(Vec<(String, String)>, Vec<(String, String)>)> {
    if max_pairs == 0 {
        return Err(UthError::Argument("max_pairs must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matches: Vec<(String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for q in gt.queries() {
        let rel = gt.relevant(q).expect("iterating the map's own keys");
        for r in rel {
            let key = if q.as_str() < r.as_str() {
                (q.clone(), r.clone())
            } else {
                (r.clone(), q.clone())
            };
            if seen.insert(key.clone()) {
                matches.push(key);
            }
        }
    }
    matches.shuffle(&mut rng);
    matches.truncate(max_pairs);

    // Rejection-sample distinct non-matching pairs.
    let ids = ds.ids();
    if ids.len() < 2 {
        return Err(UthError::Argument("need at least 2 descriptors".into()));
    }
    let mut nonmatches = Vec::new();
    let mut seen_non = BTreeSet::new();
    let target = max_pairs.min(ids.len() * (ids.len() - 1) / 2);
    let mut attempts = 0usize;
    while nonmatches.len() < target && attempts < target * 200 {
        attempts += 1;
        let i = rng.random_range(0..ids.len());
        let j = rng.random_range(0..ids.len());
        if i == j {
            continue;
        }
        let (a, b) = (&ids[i.min(j)], &ids[i.max(j)]);
        let related = gt
            .relevant(a)
            .map(|rel| rel.contains(b.as_str()))
            .unwrap_or(false);
        if related {
            continue;
        }
        let key = (a.clone(), b.clone());
        if seen_non.insert(key.clone()) {
            nonmatches.push(key);
        }
    }
    if nonmatches.is_empty() {
        return Err(UthError::Argument(
            "could not sample any non-matching pairs; is everything relevant to everything?".into(),
        ));
    }
    Ok((matches, nonmatches))
}

/// Writes one `id_a<TAB>id_b` line per pair.
pub fn save_pairs(pairs: &[(String, String)], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for (a, b) in pairs {
        writeln!(out, "{a}\t{b}")?;
    }
    Ok(std::fs::write(path, out)?)
}

/// Reads a pair file written by `save_pairs`.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| {
            UthError::Validation(format!("pair line {}: expected id<TAB>id", lineno + 1))
        })?;
        if a.is_empty() || b.is_empty() {
            return Err(UthError::Validation(format!(
                "pair line {}: empty id",
                lineno + 1
            )));
        }
        pairs.push((a.to_string(), b.to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> ClusteredConfig {
        ClusteredConfig {
            n_clusters: 4,
            points_per_cluster: 5,
            dim: 8,
            cluster_std: 0.05,
            seed,
        }
    }

    #[test]
    fn fixture_shapes_ids_and_ground_truth() {
        let (ds, gt) = make_clustered(&cfg(1)).unwrap();
        assert_eq!(ds.count(), 20);
        assert_eq!(ds.dim(), 8);
        assert_eq!(ds.ids()[0], "c000_p000");
        assert_eq!(ds.ids()[19], "c003_p004");
        assert_eq!(gt.len(), 20);
        let rel = gt.relevant("c002_p001").unwrap();
        assert_eq!(rel.len(), 4);
        assert!(rel.contains("c002_p000"));
        assert!(!rel.contains("c002_p001"));
        assert!(rel.iter().all(|r| r.starts_with("c002")));
    }

    #[test]
    fn tight_clusters_are_geometrically_separated() {
        let (ds, _) = make_clustered(&cfg(3)).unwrap();
        let dist = |i: usize, j: usize| -> f64 {
            ds.row(i)
                .iter()
                .zip(ds.row(j).iter())
                .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                .sum()
        };
        // Max within-cluster distance below min cross-cluster distance.
        let mut max_within = 0.0f64;
        let mut min_cross = f64::INFINITY;
        for i in 0..ds.count() {
            for j in (i + 1)..ds.count() {
                let d = dist(i, j);
                if i / 5 == j / 5 {
                    max_within = max_within.max(d);
                } else {
                    min_cross = min_cross.min(d);
                }
            }
        }
        assert!(
            max_within < min_cross,
            "within {max_within} cross {min_cross}"
        );
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let (a, _) = make_clustered(&cfg(9)).unwrap();
        let (b, _) = make_clustered(&cfg(9)).unwrap();
        assert_eq!(a.data(), b.data());
        let (c, _) = make_clustered(&cfg(10)).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn config_validation() {
        let mut bad = cfg(0);
        bad.points_per_cluster = 1;
        assert!(make_clustered(&bad).is_err());
        let mut bad = cfg(0);
        bad.cluster_std = 0.0;
        assert!(make_clustered(&bad).is_err());
        let mut bad = cfg(0);
        bad.n_clusters = 0;
        assert!(make_clustered(&bad).is_err());
    }

    #[test]
    fn random_codes_are_balanced_and_seeded() {
        let ids: Vec<String> = (0..500).map(|i| format!("r{i:03}")).collect();
        let codes = random_codes(ids.clone(), 16, 5).unwrap();
        let again = random_codes(ids.clone(), 16, 5).unwrap();
        for i in 0..codes.count() {
            assert_eq!(codes.code(i), again.code(i));
        }
        let ones: usize = (0..codes.count())
            .map(|i| (0..16).filter(|&j| codes.bit(i, j)).count())
            .sum();
        let frac = ones as f64 / (500.0 * 16.0);
        assert!((frac - 0.5).abs() < 0.02, "bit fraction {frac}");
    }

    #[test]
    fn pair_lists_respect_cluster_structure() {
        let (ds, gt) = make_clustered(&cfg(2)).unwrap();
        let (matches, nonmatches) = make_pairs(&ds, &gt, 30, 7).unwrap();
        assert!(!matches.is_empty() && matches.len() <= 30);
        assert!(!nonmatches.is_empty() && nonmatches.len() <= 30);
        for (a, b) in &matches {
            assert_eq!(&a[..4], &b[..4], "match pair crosses clusters: {a} {b}");
        }
        for (a, b) in &nonmatches {
            assert_ne!(&a[..4], &b[..4], "non-match pair within a cluster: {a} {b}");
        }
        let mut sorted = matches.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), matches.len(), "duplicate match pair");
    }

    #[test]
    fn pair_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        let pairs = vec![
            ("a".to_string(), "b".to_string()),
            ("c000_p001".to_string(), "c000_p002".to_string()),
        ];
        save_pairs(&pairs, &path).unwrap();
        assert_eq!(load_pairs(&path).unwrap(), pairs);
    }
}
