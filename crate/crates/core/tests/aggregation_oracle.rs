//! Aggregation checked against an independent scalar oracle.
//!
//! The oracle recomputes each output element as `(n_b*x + n_u*y) / (n_b+n_u)`
//! straight from the definition, independent of the implementation's
//! evaluation order.

use fedccl_core::aggregation::{
    aggregate_models, aggregate_models_traced, AggregationConfig, AggregationPath, WeightingMode,
};
use fedccl_core::model::{ModelMeta, ModelSnapshot, ModelWeights, Tensor, TrainingDelta};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn random_snapshot(rng: &mut ChaCha12Rng, shapes: &[Vec<usize>], round: u64, samples: u64) -> ModelSnapshot<f64> {
    use rand::Rng;
    let layers = shapes
        .iter()
        .map(|shape| {
            let len: usize = shape.iter().product();
            let data = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
            Tensor::new(shape.clone(), data).unwrap()
        })
        .collect();
    let mut meta = ModelMeta::global();
    meta.round = round;
    meta.samples_learned = samples;
    meta.epochs_learned = samples / 7 + 1;
    ModelSnapshot::new(meta, ModelWeights::new(layers))
}

#[test]
fn weighted_average_matches_the_scalar_oracle() {
    use rand::Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(0xA66);
    let cfg = AggregationConfig::default();
    for _ in 0..300 {
        let shapes = vec![vec![3, 5], vec![3], vec![1, 3], vec![1]];
        let base_samples = rng.gen_range(1..1_000_000_u64);
        let updated_samples = rng.gen_range(1..1_000_000_u64);
        let base_round = rng.gen_range(0..50);
        let base = random_snapshot(&mut rng, &shapes, base_round, base_samples);
        // Force the non-sequential path.
        let updated_round = base.meta.round + 2 + rng.gen_range(0..5);
        let updated = random_snapshot(&mut rng, &shapes, updated_round, updated_samples);
        let delta = TrainingDelta::for_session(rng.gen_range(1..10_000), rng.gen_range(1..10));

        let out = aggregate_models(&base, &updated, &delta, &cfg).unwrap();

        let n_b = base_samples as f64;
        let n_u = updated_samples as f64;
        for (layer, (ob, (bb, ub))) in out
            .weights
            .layers
            .iter()
            .zip(base.weights.layers.iter().zip(&updated.weights.layers))
            .enumerate()
        {
            for (i, ((o, x), y)) in ob.data().iter().zip(bb.data()).zip(ub.data()).enumerate() {
                let oracle = (n_b * x + n_u * y) / (n_b + n_u);
                assert!(
                    (o - oracle).abs() < 1e-12,
                    "layer {layer} element {i}: {o} vs oracle {oracle}"
                );
                // Convexity: within [min, max] element-wise.
                assert!(*o >= x.min(*y) && *o <= x.max(*y));
            }
        }
    }
}

#[test]
fn delta_mode_matches_its_own_oracle() {
    use rand::Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(0xD31);
    let cfg = AggregationConfig {
        weighting_mode: WeightingMode::Delta,
    };
    for _ in 0..200 {
        let shapes = vec![vec![4, 2], vec![4]];
        let base_samples = rng.gen_range(0..100_000_u64);
        let base_round = rng.gen_range(0..50);
        let base = random_snapshot(&mut rng, &shapes, base_round, base_samples);
        let updated = random_snapshot(&mut rng, &shapes, base.meta.round + 3, 999);
        let delta_samples = rng.gen_range(1..5_000_u64);
        let delta = TrainingDelta::for_session(delta_samples, 1);

        let out = aggregate_models(&base, &updated, &delta, &cfg).unwrap();

        let n_b = base_samples as f64;
        let n_d = delta_samples as f64;
        for (ob, (bb, ub)) in out
            .weights
            .layers
            .iter()
            .zip(base.weights.layers.iter().zip(&updated.weights.layers))
        {
            for ((o, x), y) in ob.data().iter().zip(bb.data()).zip(ub.data()) {
                let oracle = (n_b * x + n_d * y) / (n_b + n_d);
                assert!((o - oracle).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sequential_cases_return_the_update_bit_identically() {
    use rand::Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(0x5E9);
    let cfg = AggregationConfig::default();
    for _ in 0..200 {
        let shapes = vec![vec![2, 3], vec![2]];
        let (base_round, base_samples) = (rng.gen_range(0..100), rng.gen_range(0..500));
        let base = random_snapshot(&mut rng, &shapes, base_round, base_samples);
        let delta = TrainingDelta::for_session(rng.gen_range(1..100), rng.gen_range(1..5));
        // An honest client stamps base + delta onto its submission.
        let mut updated = random_snapshot(&mut rng, &shapes, 0, 0);
        updated.meta = ModelMeta {
            level: base.meta.level,
            cluster_key: base.meta.cluster_key.clone(),
            samples_learned: base.meta.samples_learned + delta.samples_learned,
            epochs_learned: base.meta.epochs_learned + delta.epochs_learned,
            round: base.meta.round + 1,
        };

        let (out, path) = aggregate_models_traced(&base, &updated, &delta, &cfg).unwrap();
        assert_eq!(path, AggregationPath::SequentialShortcut);
        assert_eq!(out.meta, updated.meta);
        for (a, b) in out.weights.layers.iter().zip(&updated.weights.layers) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}

#[test]
fn counters_are_conserved_over_random_update_sequences() {
    use rand::Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(0xC04);
    let cfg = AggregationConfig::default();
    let shapes = vec![vec![3, 3], vec![3]];
    for _ in 0..50 {
        let initial_samples = rng.gen_range(1..100);
        let mut stored = random_snapshot(&mut rng, &shapes, 0, initial_samples);
        let initial = stored.meta.clone();
        let mut sum_samples = 0;
        let mut sum_epochs = 0;
        let k = rng.gen_range(1..20);
        for _ in 0..k {
            let sequential: bool = rng.gen();
            let round = if sequential {
                stored.meta.round + 1
            } else {
                stored.meta.round + 2 + rng.gen_range(0..7)
            };
            let updated_samples = rng.gen_range(1..10_000);
            let updated = random_snapshot(&mut rng, &shapes, round, updated_samples);
            let delta = TrainingDelta::for_session(rng.gen_range(1..500), rng.gen_range(1..8));
            sum_samples += delta.samples_learned;
            sum_epochs += delta.epochs_learned;
            stored = aggregate_models(&stored, &updated, &delta, &cfg).unwrap();
        }
        assert_eq!(stored.meta.samples_learned, initial.samples_learned + sum_samples);
        assert_eq!(stored.meta.epochs_learned, initial.epochs_learned + sum_epochs);
        assert_eq!(stored.meta.round, initial.round + k);
    }
}
