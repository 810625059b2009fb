//! Exact linear-scan retrieval over binary codes (Hamming) and raw
//! descriptors (squared Euclidean), plus recall@R and mean average
//! precision.
//!
//! Every ranking is exhaustive and deterministic: ascending distance,
//! ties broken by ascending database id.

use rayon::prelude::*;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::dataset::{BinaryCodeSet, DescriptorDataset, GroundTruth};
use crate::error::{Result, UthError};

/// One query's retrieval result: database ids with their distances,
/// ascending, id-ordered within ties.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: String,
    pub entries: Vec<(String, f64)>,
}

/// Hamming distance over the meaningful bits of two packed codes.
/// Padding bits in the final byte are masked out.
pub fn hamming_distance(a: &[u8], b: &[u8], n_bits: usize) -> Result<u32> {
    let row_bytes = n_bits.div_ceil(8);
    if n_bits == 0 || a.len() != row_bytes || b.len() != row_bytes {
        return Err(UthError::Argument(format!(
            "code width mismatch: {} and {} bytes for {} bits",
            a.len(),
            b.len(),
            n_bits
        )));
    }
    let mut total = 0u32;
    for (i, (&x, &y)) in a.iter().zip(b.iter()).enumerate() {
        let mut diff = x ^ y;
        if i == row_bytes - 1 && n_bits % 8 != 0 {
            diff &= (1u8 << (n_bits % 8)) - 1;
        }
        total += diff.count_ones();
    }
    Ok(total)
}

/// Shared top-R selection: keeps the R smallest by (distance, id),
/// sorted. `cand` holds (distance, database index).
fn top_r_sorted(mut cand: Vec<(f64, usize)>, ids: &[String], r: usize) -> Vec<(String, f64)> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.partial_cmp(&b.0)
            .expect("distances are finite")
            .then_with(|| ids[a.1].cmp(&ids[b.1]))
    };
    let keep = r.min(cand.len());
    if keep > 0 && keep < cand.len() {
        cand.select_nth_unstable_by(keep - 1, cmp);
        cand.truncate(keep);
    }
    cand.sort_unstable_by(cmp);
    cand.into_iter()
        .map(|(d, i)| (ids[i].clone(), d))
        .collect()
}

/// Exact top-R Hamming search of every query against the database.
pub fn linear_search(
    db: &BinaryCodeSet,
    queries: &BinaryCodeSet,
    r: usize,
    exclude_self: bool,
) -> Result<Vec<RankedList>> {
    if db.n_bits() != queries.n_bits() {
        return Err(UthError::Argument(format!(
            "database codes have {} bits but queries have {}",
            db.n_bits(),
            queries.n_bits()
        )));
    }
    if r == 0 {
        return Err(UthError::Argument("R must be at least 1".into()));
    }
    let n_bits = db.n_bits();
    (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let q = queries.code(qi);
            let qid = &queries.ids()[qi];
            let mut cand = Vec::with_capacity(db.count());
            for di in 0..db.count() {
                if exclude_self && db.ids()[di] == *qid {
                    continue;
                }
                let d = hamming_distance(q, db.code(di), n_bits)?;
                cand.push((f64::from(d), di));
            }
            Ok(RankedList {
                query: qid.clone(),
                entries: top_r_sorted(cand, db.ids(), r),
            })
        })
        .collect()
}

/// Exact top-R squared-Euclidean search over raw descriptors.
pub fn l2_search(
    db: &DescriptorDataset,
    queries: &DescriptorDataset,
    r: usize,
    exclude_self: bool,
) -> Result<Vec<RankedList>> {
    if db.dim() != queries.dim() {
        return Err(UthError::Argument(format!(
            "database dimensionality {} does not match query dimensionality {}",
            db.dim(),
            queries.dim()
        )));
    }
    if r == 0 {
        return Err(UthError::Argument("R must be at least 1".into()));
    }
    (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let qid = &queries.ids()[qi];
            let mut cand = Vec::with_capacity(db.count());
            for di in 0..db.count() {
                if exclude_self && db.ids()[di] == *qid {
                    continue;
                }
                let d: f64 = q
                    .iter()
                    .zip(db.row(di).iter())
                    .map(|(&a, &b)| {
                        let d = f64::from(a) - f64::from(b);
                        d * d
                    })
                    .sum();
                cand.push((d, di));
            }
            Ok(RankedList {
                query: qid.clone(),
                entries: top_r_sorted(cand, db.ids(), r),
            })
        })
        .collect()
}

/// How recall@R counts a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecallMode {
    /// A query scores 1 if at least one relevant id is in its top R.
    #[default]
    ShortListHit,
    /// A query scores the fraction of its relevant set found in the top R.
    FractionRetrieved,
}

fn relevant_for<'a>(gt: &'a GroundTruth, query: &str) -> Result<&'a BTreeSet<String>> {
    gt.relevant(query).ok_or_else(|| {
        UthError::Argument(format!("query '{query}' has no ground truth entry"))
    })
}

/// Short-list hit rate: the fraction of queries whose top R contains a
/// relevant id.
pub fn recall_at_r(rankings: &[RankedList], gt: &GroundTruth, r: usize) -> Result<f64> {
    recall_at_r_mode(rankings, gt, r, RecallMode::ShortListHit)
}

pub fn recall_at_r_mode(
    rankings: &[RankedList],
    gt: &GroundTruth,
    r: usize,
    mode: RecallMode,
) -> Result<f64> {
    if rankings.is_empty() {
        return Err(UthError::Argument("recall needs at least one ranking".into()));
    }
    if r == 0 {
        return Err(UthError::Argument("R must be at least 1".into()));
    }
    let mut total = 0.0;
    for ranking in rankings {
        let rel = relevant_for(gt, &ranking.query)?;
        let top = &ranking.entries[..r.min(ranking.entries.len())];
        match mode {
            RecallMode::ShortListHit => {
                if top.iter().any(|(id, _)| rel.contains(id)) {
                    total += 1.0;
                }
            }
            RecallMode::FractionRetrieved => {
                let hits = top.iter().filter(|(id, _)| rel.contains(id)).count();
                total += hits as f64 / rel.len() as f64;
            }
        }
    }
    Ok(total / rankings.len() as f64)
}

/// Mean over queries of average precision, computed over the full
/// ranking; relevant items never retrieved contribute zero.
pub fn mean_average_precision(rankings: &[RankedList], gt: &GroundTruth) -> Result<f64> {
    if rankings.is_empty() {
        return Err(UthError::Argument("mAP needs at least one ranking".into()));
    }
    let mut total = 0.0;
    for ranking in rankings {
        let rel = relevant_for(gt, &ranking.query)?;
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (k, (id, _)) in ranking.entries.iter().enumerate() {
            if rel.contains(id) {
                hits += 1;
                ap += hits as f64 / (k + 1) as f64;
            }
        }
        total += ap / rel.len() as f64;
    }
    Ok(total / rankings.len() as f64)
}

/// One metric measurement for the final report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub scheme: String,
    /// Code length in bits; 0 means uncompressed descriptors.
    pub bits: usize,
    pub metric: String,
    /// Short-list size for recall rows; empty for mAP.
    pub r: Option<usize>,
    pub value: f64,
}

/// Accumulates metric rows and renders them as CSV.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn new() -> Self {
        EvalReport::default()
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    fn push(&mut self, record: EvalRecord) -> Result<()> {
        if !record.value.is_finite() || !(0.0..=1.0).contains(&record.value) {
            return Err(UthError::Validation(format!(
                "metric {} for scheme {} is outside [0, 1]: {}",
                record.metric, record.scheme, record.value
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn push_recall(&mut self, scheme: &str, bits: usize, r: usize, value: f64) -> Result<()> {
        self.push(EvalRecord {
            scheme: scheme.to_string(),
            bits,
            metric: "recall".into(),
            r: Some(r),
            value,
        })
    }

    pub fn push_map(&mut self, scheme: &str, bits: usize, value: f64) -> Result<()> {
        self.push(EvalRecord {
            scheme: scheme.to_string(),
            bits,
            metric: "map".into(),
            r: None,
            value,
        })
    }

    /// Renders `scheme,bits,metric,R,value` rows; the R column is empty
    /// for metrics without a short-list size.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,bits,metric,R,value\n");
        for rec in &self.records {
            let r = rec.r.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{:.6}",
                rec.scheme, rec.bits, rec.metric, r, rec.value
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::pack_bits;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn codes_from_bits(rows: Vec<Vec<bool>>) -> BinaryCodeSet {
        let n_bits = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("id{i:03}")).collect();
        let packed = rows.into_iter().map(|r| pack_bits(&r)).collect();
        BinaryCodeSet::new(ids, n_bits, packed).unwrap()
    }

    fn gt_from(pairs: &[(&str, &[&str])]) -> GroundTruth {
        let map = pairs
            .iter()
            .map(|(q, rels)| {
                (
                    q.to_string(),
                    rels.iter().map(|r| r.to_string()).collect::<BTreeSet<_>>(),
                )
            })
            .collect();
        GroundTruth::new(map).unwrap()
    }

    #[test]
    fn hamming_distance_examples() {
        assert_eq!(hamming_distance(&[0xAB, 0x01], &[0xAB, 0x01], 9).unwrap(), 0);
        let a = [0xFFu8; 4];
        let b = [0x00u8; 4];
        assert_eq!(hamming_distance(&a, &b, 32).unwrap(), 32);
        // 0b1010 vs 0b0110: bits 2 and 3 of the low nibble differ.
        assert_eq!(hamming_distance(&[0b1010], &[0b0110], 4).unwrap(), 2);
        assert!(hamming_distance(&[0u8], &[0u8, 0u8], 9).is_err());
        assert!(hamming_distance(&[0u8], &[0u8], 9).is_err());
    }

    #[test]
    fn hamming_distance_masks_padding() {
        // Same meaningful low nibble, garbage in the pad bits.
        assert_eq!(hamming_distance(&[0b1111_0101], &[0b0000_0101], 4).unwrap(), 0);
        assert_eq!(hamming_distance(&[0b1111_1111], &[0b0000_0000], 4).unwrap(), 4);
    }

    #[test]
    fn identical_code_ranks_first_with_distance_zero() {
        let db = codes_from_bits(vec![
            vec![true, false, true, false],
            vec![false, false, false, false],
            vec![true, true, true, true],
        ]);
        let queries = codes_from_bits(vec![vec![false, false, false, false]]);
        let out = linear_search(&db, &queries, 2, false).unwrap();
        assert_eq!(out[0].entries[0], ("id001".to_string(), 0.0));
        assert_eq!(out[0].entries.len(), 2);
    }

    #[test]
    fn r_at_least_database_size_returns_full_ranking() {
        let db = codes_from_bits(vec![vec![true; 6], vec![false; 6], vec![true, false, true, false, true, false]]);
        let queries = codes_from_bits(vec![vec![true; 6]]);
        let out = linear_search(&db, &queries, 100, false).unwrap();
        assert_eq!(out[0].entries.len(), 3);
        let dists: Vec<f64> = out[0].entries.iter().map(|e| e.1).collect();
        assert_eq!(dists, vec![0.0, 3.0, 6.0]);
    }

    #[test]
    fn linear_search_matches_full_sort_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let n_bits = rng.random_range(1..20);
            let n_db = rng.random_range(1..25);
            let n_q = rng.random_range(1..4);
            let r = rng.random_range(1..30);
            let rand_rows = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<bool>> {
                (0..n)
                    .map(|_| (0..n_bits).map(|_| rng.random::<bool>()).collect())
                    .collect()
            };
            let db = codes_from_bits(rand_rows(&mut rng, n_db));
            let queries = codes_from_bits(rand_rows(&mut rng, n_q));
            let fast = linear_search(&db, &queries, r, false).unwrap();

            for (qi, ranked) in fast.iter().enumerate() {
                // Reference: sort the entire database by (distance, id).
                let mut all: Vec<(f64, String)> = (0..db.count())
                    .map(|di| {
                        let d = hamming_distance(queries.code(qi), db.code(di), n_bits).unwrap();
                        (f64::from(d), db.ids()[di].clone())
                    })
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
                all.truncate(r);
                let expect: Vec<(String, f64)> = all.into_iter().map(|(d, id)| (id, d)).collect();
                assert_eq!(ranked.entries, expect);
            }
        }
    }

    #[test]
    fn exclude_self_removes_only_the_query_id() {
        let db = codes_from_bits(vec![vec![true, true], vec![true, false], vec![false, false]]);
        let queries = codes_from_bits(vec![vec![true, true]]);
        // Query id "id000" collides with the first database id.
        let out = linear_search(&db, &queries, 10, true).unwrap();
        assert_eq!(out[0].entries.len(), 2);
        assert!(out[0].entries.iter().all(|(id, _)| id != "id000"));
    }

    #[test]
    fn l2_search_hand_cases() {
        let db = DescriptorDataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            Array2::from_shape_vec((3, 1), vec![0.0f32, 1.0, 3.0]).unwrap(),
        )
        .unwrap();
        let q = DescriptorDataset::new(
            vec!["q".into()],
            Array2::from_shape_vec((1, 1), vec![0.4f32]).unwrap(),
        )
        .unwrap();
        let out = l2_search(&db, &q, 3, false).unwrap();
        let ids: Vec<&str> = out[0].entries.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);

        // Query identical to a database row.
        let q2 = DescriptorDataset::new(
            vec!["q".into()],
            Array2::from_shape_vec((1, 1), vec![3.0f32]).unwrap(),
        )
        .unwrap();
        let out2 = l2_search(&db, &q2, 1, false).unwrap();
        assert_eq!(out2[0].entries[0], ("c".to_string(), 0.0));

        // Equidistant rows tie-break by ascending id.
        let db_tie = DescriptorDataset::new(
            vec!["z".into(), "m".into(), "a".into()],
            Array2::from_shape_vec((3, 1), vec![1.0f32, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let out3 = l2_search(&db_tie, &q2, 3, false).unwrap();
        let ids: Vec<&str> = out3[0].entries.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "m", "z"]);
    }

    #[test]
    fn hamming_and_l2_agree_on_embedded_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n_bits = 12;
        let rows: Vec<Vec<bool>> = (0..30)
            .map(|_| (0..n_bits).map(|_| rng.random::<bool>()).collect())
            .collect();
        let db = codes_from_bits(rows.clone());
        let queries = codes_from_bits(rows[..5].to_vec());

        // Embed {0,1}^m into reals: squared L2 equals Hamming exactly.
        let embed = |bits: &[Vec<bool>]| -> DescriptorDataset {
            let data = Array2::from_shape_fn((bits.len(), n_bits), |(i, j)| {
                if bits[i][j] {
                    1.0f32
                } else {
                    0.0
                }
            });
            let ids = (0..bits.len()).map(|i| format!("id{i:03}")).collect();
            DescriptorDataset::new(ids, data).unwrap()
        };
        let db_e = embed(&rows);
        let q_e = embed(&rows[..5]);

        let h = linear_search(&db, &queries, 30, false).unwrap();
        let l = l2_search(&db_e, &q_e, 30, false).unwrap();
        assert_eq!(h, l);
    }

    #[test]
    fn recall_hand_cases() {
        // Two queries with single relevant items at ranks 5 and 50.
        let mk_ranking = |query: &str, hit_rank: usize| {
            let entries = (1..=60)
                .map(|k| {
                    let id = if k == hit_rank {
                        format!("{query}_rel")
                    } else {
                        format!("filler_{query}_{k:03}")
                    };
                    (id, k as f64)
                })
                .collect();
            RankedList {
                query: query.to_string(),
                entries,
            }
        };
        let rankings = vec![mk_ranking("q1", 5), mk_ranking("q2", 50)];
        let gt = gt_from(&[("q1", &["q1_rel"]), ("q2", &["q2_rel"])]);
        assert_eq!(recall_at_r(&rankings, &gt, 10).unwrap(), 0.5);
        assert_eq!(recall_at_r(&rankings, &gt, 100).unwrap(), 1.0);
        assert_eq!(recall_at_r(&rankings, &gt, 4).unwrap(), 0.0);

        // Monotone in R.
        let mut last = 0.0;
        for r in 1..=60 {
            let v = recall_at_r(&rankings, &gt, r).unwrap();
            assert!(v >= last);
            last = v;
        }

        let missing = gt_from(&[("q1", &["q1_rel"])]);
        assert!(recall_at_r(&rankings, &missing, 10).is_err());
    }

    #[test]
    fn recall_fraction_mode_counts_partial_hits() {
        let rankings = vec![RankedList {
            query: "q".into(),
            entries: vec![
                ("r1".into(), 0.0),
                ("x".into(), 1.0),
                ("r2".into(), 2.0),
                ("y".into(), 3.0),
            ],
        }];
        let gt = gt_from(&[("q", &["r1", "r2", "r3"])]);
        let frac = |r| recall_at_r_mode(&rankings, &gt, r, RecallMode::FractionRetrieved).unwrap();
        assert!((frac(1) - 1.0 / 3.0).abs() < 1e-12);
        assert!((frac(3) - 2.0 / 3.0).abs() < 1e-12);
        assert!((frac(4) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at_r(&rankings, &gt, 1).unwrap(), 1.0);
    }

    #[test]
    fn map_hand_cases() {
        let single = vec![RankedList {
            query: "q".into(),
            entries: vec![("rel".into(), 0.0), ("x".into(), 1.0)],
        }];
        let gt = gt_from(&[("q", &["rel"])]);
        assert_eq!(mean_average_precision(&single, &gt).unwrap(), 1.0);

        let two_rel = vec![RankedList {
            query: "q".into(),
            entries: vec![
                ("r1".into(), 0.0),
                ("x".into(), 1.0),
                ("r2".into(), 2.0),
            ],
        }];
        let gt2 = gt_from(&[("q", &["r1", "r2"])]);
        let v = mean_average_precision(&two_rel, &gt2).unwrap();
        assert!((v - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);

        // Relevant item absent from the ranking contributes zero.
        let gt3 = gt_from(&[("q", &["r1", "ghost"])]);
        let v3 = mean_average_precision(&two_rel, &gt3).unwrap();
        assert!((v3 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_renders_csv_and_validates_range() {
        let mut report = EvalReport::new();
        report.push_recall("srbm", 64, 10, 0.9315).unwrap();
        report.push_map("l2", 0, 0.52).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scheme,bits,metric,R,value");
        assert_eq!(lines[1], "srbm,64,recall,10,0.931500");
        assert_eq!(lines[2], "l2,0,map,,0.520000");
        assert!(report.push_map("bad", 0, 1.5).is_err());
        assert!(report.push_recall("bad", 0, 1, f64::NAN).is_err());
    }
}
