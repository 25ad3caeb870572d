use fx_core::dataset::{
    assemble, build_feature_columns, directional_index, label, scale_and_window, FeatureColumns, FeatureConfig,
    MissingLevels, ModelSpec, ScalingKind, DEFAULT_HORIZON,
};
use fx_core::ingest::{generate_synthetic, generate_synthetic_macro, MacroSeries, PriceSeries, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Macro releases published on or before the series' last day.
fn known_by(macros: &[MacroSeries], series: &PriceSeries) -> Vec<MacroSeries> {
    let last = *series.dates().last().unwrap();
    macros
        .iter()
        .map(|m| {
            let kept = m.releases().iter().copied().filter(|r| r.0 <= last).collect();
            MacroSeries::new(m.name.clone(), m.region, kept).unwrap()
        })
        .collect()
}

fn row_at(cols: &FeatureColumns, day: usize) -> Vec<(String, Option<f64>)> {
    cols.groups
        .values()
        .flatten()
        .map(|c| (c.name.clone(), c.values[day]))
        .collect()
}

#[test]
fn features_never_look_ahead() {
    let series = generate_synthetic(17, 900, Regime::RandomWalk).unwrap();
    let macros = generate_synthetic_macro(17, &series);
    let cfg = FeatureConfig::default();
    let full = build_feature_columns(&series, &macros, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let d = rng.random_range(0..series.len());
        let prefix = series.prefix(d + 1);
        let cut = build_feature_columns(&prefix, &known_by(&macros, &prefix), &cfg).unwrap();
        let (a, b) = (row_at(&full, d), row_at(&cut, d));
        assert_eq!(a.len(), b.len());
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            // compare bit patterns so absent and NaN cases are exact too
            assert_eq!(x.map(f64::to_bits), y.map(f64::to_bits), "{name} at day {d}");
        }
    }
}

#[test]
fn targets_only_read_the_forward_window() {
    let closes = generate_synthetic(8, 300, Regime::RandomWalk).unwrap().closes();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let d = rng.random_range(0..closes.len() - DEFAULT_HORIZON);
        let mut other = closes.clone();
        for (i, v) in other.iter_mut().enumerate() {
            if i < d || i > d + DEFAULT_HORIZON {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        assert_eq!(
            directional_index(&closes, d, DEFAULT_HORIZON),
            directional_index(&other, d, DEFAULT_HORIZON)
        );
    }
}

#[test]
fn split_is_deterministic_and_chronological() {
    let series = generate_synthetic(21, 700, Regime::RandomWalk).unwrap();
    let cols = build_feature_columns(&series, &[], &FeatureConfig::default()).unwrap();
    let labels = label(&series, DEFAULT_HORIZON);
    let table = assemble(
        &ModelSpec::standard(4).unwrap(),
        &cols,
        &labels,
        &series.closes(),
        MissingLevels::FillClose,
    )
    .unwrap();
    let (tr1, te1) = scale_and_window(&table, 20, 0.8, ScalingKind::MinMax).unwrap();
    let (tr2, te2) = scale_and_window(&table, 20, 0.8, ScalingKind::MinMax).unwrap();
    assert_eq!(tr1.dates, tr2.dates);
    assert_eq!(te1.dates, te2.dates);
    assert!(tr1.dates.last().unwrap() < te1.dates.first().unwrap());
    assert_eq!(te1.ends[0], (table.len() as f64 * 0.8).floor() as usize);
    // scaling sees training rows only: every training value lands in [0, 1]
    for i in 0..tr1.len() {
        assert!(tr1.window(i).iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
