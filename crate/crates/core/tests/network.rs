use fx_core::net::{evaluate, gradient_check, train, LstmConfig, LstmNetwork, SequenceSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sequences whose class is the sign of the mean of feature 0.
fn separable(seed: u64, n: usize, seq_len: usize, dim: usize) -> SequenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let shift = if y == 1 { 0.5 } else { -0.5 };
        data.push(
            (0..seq_len * dim)
                .map(|k| {
                    let noise = rng.random_range(-0.3..0.3);
                    if k % dim == 0 { shift + noise } else { noise }
                })
                .collect(),
        );
        targets.push(y);
    }
    SequenceSet {
        seq_len,
        feature_dim: dim,
        data,
        targets,
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5u64 {
        for (layers, hidden) in [(1, 3), (1, 8), (2, 5), (2, 8)] {
            let net = LstmNetwork::new(3, hidden, layers, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let sample: Vec<f64> = (0..4 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = gradient_check(&net, &sample, 4, (seed % 2) as u8).unwrap();
            assert!(err < 1e-4, "seed {seed} layers {layers} hidden {hidden}: {err:e}");
        }
    }
}

#[test]
fn batch_gradient_is_mean_of_sample_gradients() {
    let net = LstmNetwork::new(2, 4, 2, 3);
    let data = separable(1, 3, 5, 2);
    let refs: Vec<&[f64]> = data.data.iter().map(Vec::as_slice).collect();
    let (loss, grad) = net.loss_and_gradient(&refs, &data.targets, 5, 0.0).unwrap();
    let mut mean_loss = 0.0;
    let mut mean_grad = vec![0.0; grad.len()];
    for (s, &y) in refs.iter().zip(&data.targets) {
        let (l, g) = net.loss_and_gradient(&[s], &[y], 5, 0.0).unwrap();
        mean_loss += l / 3.0;
        for (m, v) in mean_grad.iter_mut().zip(g) {
            *m += v / 3.0;
        }
    }
    assert!((loss - mean_loss).abs() < 1e-12);
    for (a, b) in grad.iter().zip(&mean_grad) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn training_reduces_loss_on_separable_data() {
    let data = separable(7, 120, 8, 3);
    let mut net = LstmNetwork::new(3, 8, 1, 7);
    let (before, _) = evaluate(&net, &data).unwrap();
    let cfg = LstmConfig {
        layers: 1,
        hidden_size: 8,
        back_days: 8,
        epochs: 15,
        learning_rate: 0.05,
        seed: 7,
        ..LstmConfig::default()
    };
    train(&mut net, &data, &cfg).unwrap();
    let (after, acc) = evaluate(&net, &data).unwrap();
    assert!(after < before, "loss {before} -> {after}");
    assert!(acc > 0.8, "accuracy {acc}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn same_seed_same_network(seed in 0u64..1000, layers in 1usize..3) {
        let data = separable(seed, 40, 6, 2);
        let cfg = LstmConfig {
            layers,
            hidden_size: 4,
            back_days: 6,
            epochs: 3,
            batch_size: 8,
            seed,
            ..LstmConfig::default()
        };
        let mut a = LstmNetwork::new(2, 4, layers, seed);
        let mut b = a.clone();
        let ra = train(&mut a, &data, &cfg).unwrap();
        let rb = train(&mut b, &data, &cfg).unwrap();
        prop_assert_eq!(ra, rb);
        prop_assert_eq!(a, b);
    }
}
