mod oracle;

use fx_core::dataset::{directional_index, label, DEFAULT_HORIZON};
use fx_core::ingest::{generate_synthetic, Regime};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn directional_index_matches_forward_scan() {
    let s = generate_synthetic(5, 2000, Regime::RandomWalk).unwrap();
    let c = s.closes();
    let labels = label(&s, DEFAULT_HORIZON);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let n = rng.random_range(0..c.len() - DEFAULT_HORIZON);
        let want = oracle::directional_index(&c, n, DEFAULT_HORIZON).unwrap();
        assert_eq!(directional_index(&c, n, DEFAULT_HORIZON), Some(want), "n = {n}");
        assert_eq!(labels[n].index, n);
        assert_eq!(labels[n].directional_index, want);
        assert_eq!(labels[n].target, u8::from(want > 0.0));
    }
}

#[test]
fn last_horizon_days_are_unlabeled() {
    let c = generate_synthetic(1, 50, Regime::RandomWalk).unwrap().closes();
    for n in c.len() - DEFAULT_HORIZON..c.len() {
        assert_eq!(directional_index(&c, n, DEFAULT_HORIZON), None);
    }
}

#[test]
fn labels_are_balanced_on_a_symmetric_walk() {
    let s = generate_synthetic(2024, 2010, Regime::RandomWalk).unwrap();
    let labels = label(&s, DEFAULT_HORIZON);
    assert_eq!(labels.len(), 2000);
    let mean = labels.iter().map(|l| f64::from(l.target)).sum::<f64>() / 2000.0;
    assert!((0.35..=0.65).contains(&mean), "positive rate {mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn label_count_is_length_minus_horizon(seed in 0u64..10_000, len in 11usize..300) {
        let s = generate_synthetic(seed, len, Regime::RandomWalk).unwrap();
        prop_assert_eq!(label(&s, DEFAULT_HORIZON).len(), len - DEFAULT_HORIZON);
    }

    #[test]
    fn index_is_translation_invariant_in_sign(seed in 0u64..10_000, shift in -0.5f64..0.5) {
        // adding a constant to every close leaves every difference, and so
        // every target, unchanged
        let c = generate_synthetic(seed, 120, Regime::Trending).unwrap().closes();
        let moved: Vec<f64> = c.iter().map(|x| x + shift + 1.0).collect();
        for n in 0..c.len() - DEFAULT_HORIZON {
            let a = oracle::directional_index(&c, n, DEFAULT_HORIZON).unwrap();
            let b = directional_index(&moved, n, DEFAULT_HORIZON).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
