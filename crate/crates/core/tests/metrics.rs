use fnfm::metrics::{auc, auc_pairwise, logloss};
use fnfm::nn::sigmoid;
use proptest::prelude::*;

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..80).prop_flat_map(|m| {
        (
            // few distinct values so ties are common
            prop::collection::vec((0i32..12).prop_map(|v| v as f64 * 0.25 - 1.5), m),
            prop::collection::vec(any::<bool>(), m),
        )
            .prop_filter("both classes", |(_, y)| y.iter().any(|&b| b) && y.iter().any(|&b| !b))
            .prop_map(|(s, y)| (s, y.into_iter().map(|b| f64::from(u8::from(b))).collect()))
    })
}

proptest! {
    #[test]
    fn rank_auc_equals_pairwise((s, y) in scores_and_labels()) {
        prop_assert!((auc(&s, &y).unwrap() - auc_pairwise(&s, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_is_invariant_under_sigmoid((s, y) in scores_and_labels()) {
        let p: Vec<f64> = s.iter().map(|&v| sigmoid(v)).collect();
        prop_assert_eq!(auc(&s, &y).unwrap(), auc(&p, &y).unwrap());
    }

    #[test]
    fn label_swap_complements_auc(
        s in prop::collection::btree_set(-1_000_000i64..1_000_000, 2..60),
        seed in any::<u64>(),
    ) {
        let s: Vec<f64> = s.into_iter().map(|v| v as f64 / 1000.0).collect();
        let mut y: Vec<f64> = (0..s.len()).map(|i| ((seed >> (i % 64)) & 1) as f64).collect();
        y[0] = 0.0;
        y[1] = 1.0;
        let swapped: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        prop_assert!((auc(&s, &y).unwrap() + auc(&s, &swapped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logloss_symmetry(p in prop::collection::vec(0.0..1.0f64, 1..50), seed in any::<u64>()) {
        let y: Vec<f64> = (0..p.len()).map(|i| ((seed >> (i % 64)) & 1) as f64).collect();
        let q: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        let z: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let (a, b) = (logloss(&p, &y).unwrap(), logloss(&q, &z).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }
}
