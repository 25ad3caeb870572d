mod oracle;

use std::time::Instant;

use chrono::{Duration, NaiveDate};
use fx_core::indicators::{compute_all, IndicatorColumn, IndicatorParams};
use fx_core::ingest::{generate_synthetic, Candle, PriceSeries, Regime};
use proptest::prelude::*;

fn hlc(s: &PriceSeries) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (s.highs(), s.lows(), s.closes())
}

fn series_from(bars: &[(f64, f64, f64)]) -> PriceSeries {
    let d0 = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    PriceSeries::new(
        bars.iter()
            .enumerate()
            .map(|(i, &(h, l, c))| Candle {
                date: d0 + Duration::days(i as i64),
                open: c,
                high: h,
                low: l,
                close: c,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn every_column_matches_oracle_on_random_walk() {
    let start = Instant::now();
    for seed in [1, 2, 3] {
        let s = generate_synthetic(seed, 1000, Regime::RandomWalk).unwrap();
        let (h, l, c) = hlc(&s);
        let expected = oracle::all_indicators(&h, &l, &c);
        let got = compute_all(&s, &IndicatorParams::default());
        assert_eq!(got.len(), expected.len(), "column count");
        for col in &got {
            let want = expected
                .get(&col.name)
                .unwrap_or_else(|| panic!("no oracle for {}", col.name));
            let diff = oracle::max_abs_diff(&col.values, want)
                .unwrap_or_else(|| panic!("{}: defined regions differ", col.name));
            assert!(diff < 1e-10, "{}: diff {diff:e}", col.name);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn oracle_match_holds_in_every_regime() {
    for regime in [Regime::Trending, Regime::MeanReverting] {
        let s = generate_synthetic(11, 600, regime).unwrap();
        let (h, l, c) = hlc(&s);
        let expected = oracle::all_indicators(&h, &l, &c);
        for col in compute_all(&s, &IndicatorParams::default()) {
            let diff = oracle::max_abs_diff(&col.values, &expected[&col.name]).unwrap();
            assert!(diff < 1e-10, "{regime:?} {}: {diff:e}", col.name);
        }
    }
}

#[test]
fn flat_stretches_match_oracle() {
    // flat runs exercise the zero-range and zero-loss branches
    let mut bars = Vec::new();
    for i in 0..400 {
        let c = if (100..160).contains(&i) { 1.2 } else { 1.2 + 0.01 * ((i as f64) * 0.37).sin() };
        let spread = if (100..160).contains(&i) { 0.0 } else { 0.004 };
        bars.push((c + spread, c - spread, c));
    }
    let s = series_from(&bars);
    let (h, l, c) = hlc(&s);
    let expected = oracle::all_indicators(&h, &l, &c);
    for col in compute_all(&s, &IndicatorParams::default()) {
        let diff = oracle::max_abs_diff(&col.values, &expected[&col.name])
            .unwrap_or_else(|| panic!("{}: defined regions differ", col.name));
        assert!(diff < 1e-10, "{}: {diff:e}", col.name);
    }
}

fn is_suffix(col: &IndicatorColumn) -> bool {
    let first = col.first_defined();
    col.values[first..].iter().all(Option::is_some)
}

// columns whose defined region may have holes on degenerate windows
fn may_have_holes(name: &str) -> bool {
    ["BBP_", "WILLR_", "K_", "D_", "J_"].iter().any(|p| name.starts_with(p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn defined_region_is_a_suffix(seed in 0u64..10_000, len in 210usize..400) {
        let s = generate_synthetic(seed, len, Regime::RandomWalk).unwrap();
        for col in compute_all(&s, &IndicatorParams::default()) {
            if col.name.starts_with("CS_") {
                // the lagging span reads future closes: defined on a prefix
                let last = col.values.iter().rposition(Option::is_some).unwrap();
                prop_assert!(col.values[..=last].iter().all(Option::is_some));
                prop_assert_eq!(last, len - 1 - 26);
                continue;
            }
            if may_have_holes(&col.name) {
                continue;
            }
            prop_assert!(is_suffix(&col), "{} has holes", col.name);
        }
    }

    #[test]
    fn prepending_days_shifts_window_indicators(seed in 0u64..10_000, w in 1usize..60) {
        // window-based indicators only depend on their window, so values past
        // the new warm-up move by exactly `w` positions
        let full = generate_synthetic(seed, 500, Regime::RandomWalk).unwrap();
        let tail = PriceSeries::new(full.candles()[w..].to_vec()).unwrap();
        let params = IndicatorParams::default();
        let a = compute_all(&full, &params);
        let b = compute_all(&tail, &params);
        for (ca, cb) in a.iter().zip(&b) {
            prop_assert_eq!(&ca.name, &cb.name);
            let recursive = ["EMA_", "MACD", "ADX_"].iter().any(|p| ca.name.starts_with(p));
            let first = cb.first_defined();
            for t in first..cb.len() {
                match (ca.values[t + w], cb.values[t]) {
                    (Some(x), Some(y)) if recursive => {
                        // recursive filters forget their seed geometrically
                        if t >= first + 400 {
                            prop_assert!((x - y).abs() < 1e-6, "{} at {}", ca.name, t);
                        }
                    }
                    (x, y) => prop_assert_eq!(x, y, "{} at {}", ca.name, t),
                }
            }
        }
    }
}
