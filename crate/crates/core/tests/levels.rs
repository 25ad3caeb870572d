use fx_core::ingest::{generate_synthetic, Regime};
use fx_core::levels::{fibonacci_levels, grouper, support_resistance, FibConfig, GrouperConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_partition(values: &[f64], delta: f64) {
    let groups = grouper(values, delta).unwrap();
    let flat: Vec<f64> = groups.iter().flatten().copied().collect();
    assert_eq!(flat, values, "concatenation must equal the input");
    for g in &groups {
        assert!(!g.is_empty());
        for w in g.windows(2) {
            assert!(w[1] - w[0] < delta, "within-group gap {} >= {delta}", w[1] - w[0]);
        }
    }
    for pair in groups.windows(2) {
        let gap = pair[1][0] - pair[0][pair[0].len() - 1];
        assert!(gap >= delta, "cross-group gap {gap} < {delta}");
    }
}

#[test]
fn grouper_partitions_a_thousand_random_lists() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let n = rng.random_range(0..60);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.9..1.4)).collect();
        // some exact duplicates
        if n > 3 {
            v[1] = v[0];
        }
        v.sort_by(f64::total_cmp);
        let delta = rng.random_range(0.001..0.1);
        check_partition(&v, delta);
    }
}

#[test]
fn levels_scale_exactly_with_prices() {
    let cfg = GrouperConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = generate_synthetic(3, 1200, Regime::RandomWalk).unwrap();
    // powers of two scale every intermediate exactly
    for c in [0.25, 0.5, 2.0, 4.0] {
        let scaled = base.scaled(c);
        for _ in 0..100 {
            let day = rng.random_range(cfg.lookback..base.len());
            let a = support_resistance(&base, day, &cfg).unwrap();
            let b = support_resistance(&scaled, day, &cfg).unwrap();
            let scale = |x: Option<f64>| x.map(|v| v * c);
            assert_eq!(scale(a.support1), b.support1, "day {day} x{c}");
            assert_eq!(scale(a.support2), b.support2);
            assert_eq!(scale(a.resistance1), b.resistance1);
            assert_eq!(scale(a.resistance2), b.resistance2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grouper_partition_property(
        mut v in prop::collection::vec(0.5f64..2.0, 0..80),
        delta in 1e-4f64..0.2,
    ) {
        v.sort_by(f64::total_cmp);
        check_partition(&v, delta);
    }

    #[test]
    fn supports_below_and_resistances_at_or_above_close(seed in 0u64..5000, regime_ix in 0usize..3) {
        let regime = [Regime::RandomWalk, Regime::Trending, Regime::MeanReverting][regime_ix];
        let s = generate_synthetic(seed, 320, regime).unwrap();
        let closes = s.closes();
        let cfg = GrouperConfig::default();
        let fib = FibConfig::default();
        for (day, &close) in closes.iter().enumerate() {
            let entries = [support_resistance(&s, day, &cfg), fibonacci_levels(&s, day, &fib)];
            prop_assert_eq!(entries[0].is_some(), day >= cfg.lookback);
            for e in entries.into_iter().flatten() {
                for sup in e.supports() {
                    prop_assert!(sup < close);
                }
                for res in e.resistances() {
                    prop_assert!(res >= close);
                }
                if let (Some(a), Some(b)) = (e.support1, e.support2) {
                    prop_assert!(b < a);
                }
                if let (Some(a), Some(b)) = (e.resistance1, e.resistance2) {
                    prop_assert!(a < b);
                }
            }
        }
    }

    #[test]
    fn levels_only_use_preceding_days(seed in 0u64..5000, day in 200usize..300) {
        // dropping every day after `day` leaves its levels unchanged
        let s = generate_synthetic(seed, 320, Regime::RandomWalk).unwrap();
        let cut = s.prefix(day + 1);
        let cfg = GrouperConfig::default();
        prop_assert_eq!(support_resistance(&s, day, &cfg), support_resistance(&cut, day, &cfg));
    }
}
