use hdc_core::bundler::Bundle;
use hdc_core::datasets::kfold_split;
use hdc_core::model::{build_prototypes, train_iteration};
use hdc_core::{HdRng, Hypervector, QuantizationSchema};
use proptest::prelude::*;

fn hv(dim: usize, seed: u64) -> Hypervector {
    Hypervector::random(dim, &mut HdRng::new(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamming_is_a_metric(dim in 1usize..300, s in any::<u64>()) {
        let (a, b, c) = (hv(dim, s), hv(dim, s ^ 1), hv(dim, s ^ 2));
        prop_assert_eq!(a.hamming(&a).unwrap(), 0);
        prop_assert_eq!(a.hamming(&b).unwrap(), b.hamming(&a).unwrap());
        prop_assert!(a.hamming(&c).unwrap() <= a.hamming(&b).unwrap() + b.hamming(&c).unwrap());
        prop_assert_eq!(a.hamming(&a.not()).unwrap(), dim);
    }

    #[test]
    fn bind_is_self_inverse_and_distance_preserving(dim in 1usize..300, s in any::<u64>()) {
        let (a, b, k) = (hv(dim, s), hv(dim, s ^ 1), hv(dim, s ^ 2));
        prop_assert_eq!(&a.bind(&k).unwrap().bind(&k).unwrap(), &a);
        prop_assert_eq!(a.bind(&k).unwrap().hamming(&b.bind(&k).unwrap()).unwrap(), a.hamming(&b).unwrap());
    }

    #[test]
    fn permutation_composes_and_preserves_popcount(dim in 1usize..300, s in any::<u64>(), j in -500i64..500, k in -500i64..500) {
        let a = hv(dim, s);
        prop_assert_eq!(a.permute(j).popcount(), a.popcount());
        prop_assert_eq!(a.permute(j).permute(k), a.permute(j + k));
        prop_assert_eq!(a.permute(dim as i64), a.clone());
        prop_assert_eq!(a.permute(j).hamming(&hv(dim, s ^ 3).permute(j)).unwrap(), a.hamming(&hv(dim, s ^ 3)).unwrap());
    }

    #[test]
    fn hex_round_trip(dim in 1usize..300, s in any::<u64>()) {
        let a = hv(dim, s);
        prop_assert_eq!(Hypervector::from_hex(&a.to_hex()).unwrap(), a);
    }

    #[test]
    fn bundle_out_undoes_bundle_in(dim in 1usize..200, s in any::<u64>(), m in 0usize..12) {
        let base: Vec<Hypervector> = (0..m).map(|i| hv(dim, s.wrapping_add(i as u64))).collect();
        let mut b = Bundle::from_vectors(dim, &base).unwrap();
        let before = b.clone();
        let extra: Vec<Hypervector> = (0..3).map(|i| hv(dim, s ^ (100 + i))).collect();
        for v in &extra {
            b.bundle_in(v).unwrap();
        }
        for v in extra.iter().rev() {
            b.bundle_out(v).unwrap();
        }
        prop_assert_eq!(b, before);
    }

    #[test]
    fn odd_bundles_binarize_without_randomness(dim in 1usize..200, s in any::<u64>(), half in 0usize..6) {
        let vs: Vec<Hypervector> = (0..2 * half + 1).map(|i| hv(dim, s.wrapping_add(i as u64))).collect();
        let b = Bundle::from_vectors(dim, &vs).unwrap();
        prop_assert_eq!(b.tie_count(), 0);
        prop_assert_eq!(b.binarize(&mut HdRng::new(1)), b.binarize(&mut HdRng::new(2)));
    }

    #[test]
    fn quantize_is_monotone_and_in_range(lo in -100.0f64..0.0, span in 1.0f64..200.0, steps in 1usize..40, x in -500.0f64..500.0, y in -500.0f64..500.0) {
        let q = QuantizationSchema::new(lo, lo + span, span / steps as f64).unwrap();
        let (a, b) = (x.min(y), x.max(y));
        let (qa, qb) = (q.quantize(a).unwrap(), q.quantize(b).unwrap());
        prop_assert!(qa <= qb);
        prop_assert!(qb < q.levels());
    }

    #[test]
    fn kfold_partitions_indices(m in 2usize..300, k in 2usize..12, s in any::<u64>()) {
        prop_assume!(k <= m);
        let folds = kfold_split(m, k, &mut HdRng::new(s)).unwrap();
        let mut seen = vec![0; m];
        for f in &folds {
            for &i in &f.validation {
                seen[i] += 1;
            }
            prop_assert_eq!(f.train.len() + f.validation.len(), m);
            prop_assert!(f.validation.len() == m / k || f.validation.len() == m / k + 1);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_preserves_total_net_count_and_confidence_is_nonnegative(
        s in any::<u64>(), classes in 2usize..5, per_class in 1usize..6, alpha in 0.0f64..10.0,
    ) {
        let dim = 256;
        let mut rng = HdRng::new(s);
        let labels: Vec<usize> = (0..classes * per_class).map(|i| i % classes).collect();
        let samples: Vec<Hypervector> = labels.iter().map(|_| Hypervector::random(dim, &mut rng).unwrap()).collect();
        let mut am = build_prototypes(&samples, &labels, classes, &mut rng).unwrap();
        let total: i64 = am.net_counts().iter().sum();
        for _ in 0..3 {
            let before = am.clone();
            let stats = train_iteration(&mut am, &samples, &labels, alpha, &mut rng).unwrap();
            prop_assert_eq!(am.net_counts().iter().sum::<i64>(), total);
            let changed = (0..classes).filter(|&k| am.bundles()[k] != before.bundles()[k]).count();
            if stats.error_updates + stats.low_confidence_updates == 0 {
                prop_assert_eq!(changed, 0);
            }
            for q in &samples {
                let c = am.predict(q).unwrap().confidence();
                prop_assert!(c >= 0.0);
            }
        }
    }

    #[test]
    fn single_update_touches_exactly_two_bundles(s in any::<u64>(), classes in 2usize..5) {
        let dim = 128;
        let mut rng = HdRng::new(s);
        let protos: Vec<Hypervector> = (0..classes).map(|_| Hypervector::random(dim, &mut rng).unwrap()).collect();
        let mut am = build_prototypes(&protos, &(0..classes).collect::<Vec<_>>(), classes, &mut rng).unwrap();
        // a copy of class 0's prototype labelled as class 1 is always misclassified
        let before = am.clone();
        let stats = train_iteration(&mut am, &protos[..1], &[1], 0.0, &mut rng).unwrap();
        prop_assert_eq!(stats.error_updates, 1);
        let changed: Vec<usize> = (0..classes).filter(|&k| am.bundles()[k] != before.bundles()[k]).collect();
        prop_assert_eq!(changed, vec![0, 1]);
        prop_assert_eq!(am.net_counts()[0], 0);
        prop_assert_eq!(am.net_counts()[1], 2);
    }
}
