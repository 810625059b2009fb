//! Randomized invariant checks across the library: format round trips,
//! normalization and split laws, energy-model identities, loss algebra,
//! and metric monotonicity.

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

use uth::dataset::{
    load_codes, load_descriptors, load_ground_truth, pack_bits, save_codes, save_descriptors,
    save_ground_truth, DescriptorFormat,
};
use uth::eval::{
    hamming_distance, linear_search, mean_average_precision, recall_at_r, RankedList,
};
use uth::model_file::{model_from_bytes, model_to_bytes, SavedModel};
use uth::rbm::RbmLayer;
use uth::triplet::{triplet_distances_softmax, triplet_loss};
use uth::{BinaryCodeSet, DescriptorDataset, GroundTruth, SrbmStack};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("id{i:04}")).collect()
}

fn dataset_strategy() -> impl Strategy<Value = DescriptorDataset> {
    (1usize..12, 1usize..8).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-1e3f32..1e3, n * d).prop_map(move |vals| {
            DescriptorDataset::new(ids(n), Array2::from_shape_vec((n, d), vals).unwrap()).unwrap()
        })
    })
}

fn codes_strategy() -> impl Strategy<Value = BinaryCodeSet> {
    (1usize..10, 1usize..40).prop_flat_map(|(n, n_bits)| {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), n_bits), n)
            .prop_map(move |rows| BinaryCodeSet::from_bits(ids(n), rows).unwrap())
    })
}

/// Random tiny RBM with bounded parameters (enumeration stays cheap and
/// sigmoids stay far from saturation).
fn layer_strategy() -> impl Strategy<Value = RbmLayer> {
    (1usize..4, 1usize..4).prop_flat_map(|(nv, nh)| {
        (
            proptest::collection::vec(-2.0f64..2.0, nv * nh),
            proptest::collection::vec(-1.0f64..1.0, nv),
            proptest::collection::vec(-1.0f64..1.0, nh),
        )
            .prop_map(move |(w, bv, bh)| {
                RbmLayer::new(
                    Array2::from_shape_vec((nv, nh), w).unwrap(),
                    Array1::from_vec(bv),
                    Array1::from_vec(bh),
                )
                .unwrap()
            })
    })
}

/// Rankings plus complete ground truth for every query.
fn rankings_strategy() -> impl Strategy<Value = (Vec<RankedList>, GroundTruth)> {
    (2usize..12, 1usize..4, any::<u64>()).prop_map(|(n_db, n_q, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let db = ids(n_db);
        let mut map = BTreeMap::new();
        let rankings = (0..n_q)
            .map(|q| {
                let query = format!("q{q:02}");
                let mut order = db.clone();
                order.shuffle(&mut rng);
                let n_rel = rng.random_range(1..=n_db);
                let rel: BTreeSet<String> =
                    order.iter().take(n_rel).cloned().collect();
                map.insert(query.clone(), rel);
                order.shuffle(&mut rng);
                let entries = order
                    .into_iter()
                    .enumerate()
                    .map(|(k, id)| (id, k as f64))
                    .collect();
                RankedList { query, entries }
            })
            .collect();
        (rankings, GroundTruth::new(map).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn descriptor_files_round_trip(ds in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.uthd");
        save_descriptors(&ds, &path).unwrap();
        let back = load_descriptors(&path, DescriptorFormat::Binary).unwrap();
        prop_assert_eq!(ds.ids(), back.ids());
        prop_assert_eq!(ds.data(), back.data());
        // Identity on the byte level as well.
        let bytes = std::fs::read(&path).unwrap();
        save_descriptors(&back, &path).unwrap();
        prop_assert_eq!(bytes, std::fs::read(&path).unwrap());
    }

    #[test]
    fn code_files_round_trip_any_width(codes in codes_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.uthb");
        save_codes(&codes, &path).unwrap();
        let back = load_codes(&path).unwrap();
        prop_assert_eq!(codes.ids(), back.ids());
        prop_assert_eq!(codes.n_bits(), back.n_bits());
        for i in 0..codes.count() {
            prop_assert_eq!(codes.code(i), back.code(i));
        }
    }

    #[test]
    fn ground_truth_files_round_trip(
        (rankings, gt) in rankings_strategy()
    ) {
        let _ = rankings;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.tsv");
        save_ground_truth(&gt, &path).unwrap();
        let back = load_ground_truth(&path).unwrap();
        prop_assert_eq!(gt.len(), back.len());
        for q in gt.queries() {
            prop_assert_eq!(gt.relevant(q), back.relevant(q));
        }
    }

    #[test]
    fn srbm_model_bytes_round_trip(
        sizes in proptest::collection::btree_set(1usize..9, 2..4),
        seed in any::<u64>()
    ) {
        // Strictly decreasing layer sizes from a set of distinct values.
        let mut sizes: Vec<usize> = sizes.into_iter().collect();
        sizes.reverse();
        let stack = SrbmStack::random_unit(&sizes, seed).unwrap();
        // random_unit produces f64 weights; quantize through one
        // save/load so the value under test is f32-representable.
        let bytes = model_to_bytes(&SavedModel::Srbm(stack)).unwrap();
        let loaded = model_from_bytes(&bytes).unwrap();
        let bytes2 = model_to_bytes(&loaded).unwrap();
        prop_assert_eq!(&bytes, &bytes2);
        let loaded2 = model_from_bytes(&bytes2).unwrap();
        match (&loaded, &loaded2) {
            (SavedModel::Srbm(a), SavedModel::Srbm(b)) => {
                for (la, lb) in a.layers().iter().zip(b.layers()) {
                    prop_assert_eq!(la.weights(), lb.weights());
                    prop_assert_eq!(la.bias_vis(), lb.bias_vis());
                    prop_assert_eq!(la.bias_hid(), lb.bias_hid());
                }
            }
            _ => prop_assert!(false, "expected srbm models"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalization_bounds_and_idempotence(ds in dataset_strategy()) {
        match ds.normalize_minmax() {
            Ok(normed) => {
                prop_assert!(normed.data().iter().all(|v| (0.0..=1.0).contains(v)));
                let twice = normed.normalize_minmax().unwrap();
                prop_assert_eq!(normed.data(), twice.data());
            }
            Err(_) => {
                // Rejection is only legal for degenerate inputs: a single
                // row or all-constant columns.
                let degenerate = ds.count() < 2
                    || (0..ds.dim()).all(|d| {
                        let col: Vec<f32> = (0..ds.count()).map(|i| ds.row(i)[d]).collect();
                        col.iter().all(|v| *v == col[0])
                    });
                prop_assert!(degenerate);
            }
        }
    }

    #[test]
    fn split_is_an_exact_partition(
        ds in dataset_strategy(),
        f in 0.05f64..0.95,
        seed in any::<u64>()
    ) {
        let (a, b) = ds.split((f, 1.0 - f), seed).unwrap();
        prop_assert_eq!(a.count() + b.count(), ds.count());
        let expected_a = (f * ds.count() as f64).round() as usize;
        prop_assert_eq!(a.count(), expected_a.min(ds.count()));
        let mut union: Vec<&String> = a.ids().iter().chain(b.ids()).collect();
        union.sort();
        let mut original: Vec<&String> = ds.ids().iter().collect();
        original.sort();
        prop_assert_eq!(union, original);
        // Determinism.
        let (a2, _) = ds.split((f, 1.0 - f), seed).unwrap();
        prop_assert_eq!(a.ids(), a2.ids());
    }

    #[test]
    fn conditionals_match_exhaustive_enumeration(
        layer in layer_strategy(),
        bits in proptest::collection::vec(any::<bool>(), 8)
    ) {
        // P(h_j = 1 | v) from the sigmoid formula must equal the
        // enumerated Boltzmann conditional sum_{h: h_j=1} e^-E / sum_h e^-E.
        let nv = layer.n_vis();
        let nh = layer.n_hid();
        let v = Array1::from_iter(bits.iter().take(nv).map(|&b| f64::from(u8::from(b))));
        let probs = layer.hidden_activation(v.view()).unwrap();
        for j in 0..nh {
            let mut num = 0.0;
            let mut den = 0.0;
            for mask in 0..(1usize << nh) {
                let h = Array1::from_iter((0..nh).map(|k| f64::from(u8::from(mask >> k & 1 == 1))));
                let w = (-layer.energy(v.view(), h.view())).exp();
                den += w;
                if mask >> j & 1 == 1 {
                    num += w;
                }
            }
            prop_assert!((probs[j] - num / den).abs() < 1e-10);
        }

        // Same duality for the visible conditional.
        let h = Array1::from_iter(bits.iter().take(nh).map(|&b| f64::from(u8::from(b))));
        let probs_v = layer.visible_activation(h.view()).unwrap();
        for i in 0..nv {
            let mut num = 0.0;
            let mut den = 0.0;
            for mask in 0..(1usize << nv) {
                let vv = Array1::from_iter((0..nv).map(|k| f64::from(u8::from(mask >> k & 1 == 1))));
                let w = (-layer.energy(vv.view(), h.view())).exp();
                den += w;
                if mask >> i & 1 == 1 {
                    num += w;
                }
            }
            prop_assert!((probs_v[i] - num / den).abs() < 1e-10);
        }
    }

    #[test]
    fn free_energy_matches_marginalization(
        layer in layer_strategy(),
        bits in proptest::collection::vec(any::<bool>(), 3)
    ) {
        let v = Array1::from_iter(bits.iter().take(layer.n_vis()).map(|&b| f64::from(u8::from(b))));
        let nh = layer.n_hid();
        let mut z = 0.0;
        for mask in 0..(1usize << nh) {
            let h = Array1::from_iter((0..nh).map(|k| f64::from(u8::from(mask >> k & 1 == 1))));
            z += (-layer.energy(v.view(), h.view())).exp();
        }
        prop_assert!((layer.free_energy(v.view()) - (-z.ln())).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn loss_equals_twice_positive_softmax(
        // Coordinates in [-1, 1] keep |dp - dn| <= 32 < 36, below the
        // point where the softmax saturates to an exact 0/1 in f64 and
        // the strict (0, 2) bounds stop being representable.
        vals in proptest::collection::vec(-1.0f64..1.0, 3 * 4)
    ) {
        let a = Array1::from_vec(vals[0..4].to_vec());
        let b = Array1::from_vec(vals[4..8].to_vec());
        let c = Array1::from_vec(vals[8..12].to_vec());
        let loss = triplet_loss(a.view(), b.view(), c.view()).unwrap();
        let dp: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        let dn: f64 = a.iter().zip(c.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        let (s_pos, _) = triplet_distances_softmax(dp, dn);
        prop_assert!((loss - 2.0 * s_pos).abs() < 1e-12);
        prop_assert!(loss > 0.0 && loss < 2.0);
    }

    #[test]
    fn softmax_is_monotone_and_normalized(
        dp in 0.0f64..15.0,
        dn in 0.0f64..15.0,
        delta in 0.01f64..5.0
    ) {
        let (p, n) = triplet_distances_softmax(dp, dn);
        prop_assert!((p + n - 1.0).abs() < 1e-12);
        let (p_harder, _) = triplet_distances_softmax(dp + delta, dn);
        prop_assert!(p_harder > p);
        let (p_easier, _) = triplet_distances_softmax(dp, dn + delta);
        prop_assert!(p_easier < p);
    }

    #[test]
    fn recall_is_monotone_and_metrics_bounded(
        (rankings, gt) in rankings_strategy()
    ) {
        let n_db = rankings[0].entries.len();
        let mut last = 0.0;
        for r in 1..=n_db {
            let v = recall_at_r(&rankings, &gt, r).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v + 1e-15 >= last);
            last = v;
        }
        // Full-length short list always contains a relevant item here:
        // every ranking is a permutation of the whole database.
        prop_assert_eq!(recall_at_r(&rankings, &gt, n_db).unwrap(), 1.0);
        let map = mean_average_precision(&rankings, &gt).unwrap();
        prop_assert!((0.0..=1.0).contains(&map));
    }

    #[test]
    fn metrics_are_invariant_under_relabeling(
        (rankings, gt) in rankings_strategy()
    ) {
        let relabel = |s: &str| format!("zz_{s}");
        let rankings2: Vec<RankedList> = rankings
            .iter()
            .map(|r| RankedList {
                query: relabel(&r.query),
                entries: r.entries.iter().map(|(id, d)| (relabel(id), *d)).collect(),
            })
            .collect();
        let map2: BTreeMap<String, BTreeSet<String>> = gt
            .queries()
            .map(|q| {
                (
                    relabel(q),
                    gt.relevant(q).unwrap().iter().map(|r| relabel(r)).collect(),
                )
            })
            .collect();
        let gt2 = GroundTruth::new(map2).unwrap();
        for r in [1, 2, 5] {
            prop_assert_eq!(
                recall_at_r(&rankings, &gt, r).unwrap(),
                recall_at_r(&rankings2, &gt2, r).unwrap()
            );
        }
        prop_assert_eq!(
            mean_average_precision(&rankings, &gt).unwrap(),
            mean_average_precision(&rankings2, &gt2).unwrap()
        );
    }

    #[test]
    fn pack_unpack_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..70)) {
        let packed = pack_bits(&bits);
        prop_assert_eq!(packed.len(), bits.len().div_ceil(8));
        let set = BinaryCodeSet::from_bits(ids(1), vec![bits.clone()]).unwrap();
        prop_assert_eq!(set.unpack(0), bits);
    }

    #[test]
    fn hamming_is_a_metric(
        rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 17), 3)
    ) {
        let set = BinaryCodeSet::from_bits(ids(3), rows).unwrap();
        let d = |i: usize, j: usize| {
            hamming_distance(set.code(i), set.code(j), 17).unwrap()
        };
        prop_assert_eq!(d(0, 1), d(1, 0));
        prop_assert_eq!(d(0, 0), 0);
        prop_assert!(d(0, 1) <= 17);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2));
    }

    #[test]
    fn search_results_nest_across_r(
        seed in any::<u64>(),
        n_bits in 1usize..12,
        n_db in 1usize..15,
        r in 1usize..6
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng, n: usize| {
            let rows = (0..n)
                .map(|_| (0..n_bits).map(|_| rng.random::<bool>()).collect())
                .collect();
            BinaryCodeSet::from_bits(ids(n), rows).unwrap()
        };
        let db = mk(&mut rng, n_db);
        let queries = mk(&mut rng, 2);
        let small = linear_search(&db, &queries, r, false).unwrap();
        let large = linear_search(&db, &queries, r + 3, false).unwrap();
        for (s, l) in small.iter().zip(large.iter()) {
            prop_assert_eq!(&s.entries[..], &l.entries[..s.entries.len()]);
        }
    }
}
