//! Local model training: a small dense regression network fitted by
//! mini-batch gradient descent, with an L2 anchor that keeps weights close to
//! the snapshot fetched at session start (the continual-learning
//! regularizer).
//!
//! The objective per batch is
//!
//! ```text
//! loss = mean((prediction - target)^2) + lambda * sum((w - w_anchor)^2)
//! ```
//!
//! The squared-error term is descended explicitly; the anchor term is applied
//! as its exact proximal map after each step,
//! `w <- (w + 2*lr*lambda*anchor) / (1 + 2*lr*lambda)`, which keeps the
//! update stable for arbitrarily large `lambda` (as `lambda` grows the
//! weights stay pinned to the anchor instead of oscillating).
//!
//! Network layout: the weight tensors alternate `[out, in]` matrices and
//! `[out]` bias vectors, hidden layers use `tanh`, the single output is
//! linear. Prediction clamps to `[0, 1]` at the API boundary only.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelMeta, ModelSnapshot, ModelWeights, Tensor, TrainingDelta};
use crate::scalar::Scalar;
use crate::solar::FEATURE_COUNT;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("training data is empty")]
    EmptyDataset,
    #[error("snapshot layers {found:?} do not match the configured architecture {expected:?}")]
    ArchitectureMismatch {
        expected: Vec<Vec<usize>>,
        found: Vec<Vec<usize>>,
    },
    #[error("feature width {found} does not match the network input width {expected}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("example {index} holds a non-finite value")]
    NonFiniteExample { index: usize },
    #[error("training diverged in epoch {epoch}: loss became non-finite")]
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_anchor_lambda: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![16],
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 2,
            l2_anchor_lambda: 0.02,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.l2_anchor_lambda < 0.0 || !self.l2_anchor_lambda.is_finite() {
            return Err(TrainError::InvalidConfig(
                "l2_anchor_lambda must be >= 0".into(),
            ));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(TrainError::InvalidConfig("hidden sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One normalized training point: feature vector in [0, 1]^n, target in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample<F> {
    pub features: Vec<F>,
    pub target: F,
}

/// Tensor shapes of a dense network `input -> hidden... -> 1`.
pub fn architecture_shapes(input_width: usize, hidden_sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut shapes = Vec::with_capacity(2 * (hidden_sizes.len() + 1));
    let mut fan_in = input_width;
    for &h in hidden_sizes {
        shapes.push(vec![h, fan_in]);
        shapes.push(vec![h]);
        fan_in = h;
    }
    shapes.push(vec![1, fan_in]);
    shapes.push(vec![1]);
    shapes
}

/// Fresh weights, uniform in `[-0.5, 0.5] / sqrt(fan_in)` per layer, seeded.
pub fn init_weights<F: Scalar>(
    input_width: usize,
    hidden_sizes: &[usize],
    seed: u64,
) -> ModelWeights<F> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let layers = architecture_shapes(input_width, hidden_sizes)
        .into_iter()
        .map(|shape| {
            let fan_in = if shape.len() == 2 { shape[1] } else { shape[0] };
            let scale = 0.5 / (fan_in as f64).sqrt();
            let len: usize = shape.iter().product();
            let data = (0..len)
                .map(|_| F::from_f64_lossy((rng.gen::<f64>() * 2.0 - 1.0) * scale))
                .collect();
            Tensor::new(shape, data).expect("length derived from shape")
        })
        .collect();
    ModelWeights::new(layers)
}

/// Fresh snapshot with the given identity at round 0.
pub fn init_snapshot<F: Scalar>(
    meta: ModelMeta,
    input_width: usize,
    hidden_sizes: &[usize],
    seed: u64,
) -> ModelSnapshot<F> {
    ModelSnapshot::new(meta, init_weights(input_width, hidden_sizes, seed))
}

/// Input width a snapshot's first layer expects.
pub fn input_width<F: Scalar>(snapshot: &ModelSnapshot<F>) -> Option<usize> {
    snapshot
        .weights
        .layers
        .first()
        .and_then(|t| t.shape().get(1).copied())
}

fn check_architecture<F: Scalar>(
    snapshot: &ModelSnapshot<F>,
    cfg: &TrainerConfig,
) -> Result<(), TrainError> {
    let expected = architecture_shapes(
        input_width(snapshot).unwrap_or(FEATURE_COUNT),
        &cfg.hidden_sizes,
    );
    let found = snapshot.weights.shapes();
    if expected != found {
        return Err(TrainError::ArchitectureMismatch { expected, found });
    }
    Ok(())
}

/// Forward pass returning every layer's activations (input included).
fn forward<F: Scalar>(weights: &ModelWeights<F>, features: &[F]) -> Result<Vec<Vec<F>>, TrainError> {
    let layer_count = weights.layers.len() / 2;
    let mut activations: Vec<Vec<F>> = Vec::with_capacity(layer_count + 1);
    activations.push(features.to_vec());
    for l in 0..layer_count {
        let w = &weights.layers[2 * l];
        let b = &weights.layers[2 * l + 1];
        let (rows, cols) = (w.shape()[0], w.shape()[1]);
        let input = &activations[l];
        if input.len() != cols {
            return Err(TrainError::FeatureWidth {
                expected: cols,
                found: input.len(),
            });
        }
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut z = b.data()[r];
            let row = &w.data()[r * cols..(r + 1) * cols];
            for (wv, xv) in row.iter().zip(input) {
                z = z + *wv * *xv;
            }
            out.push(if l + 1 < layer_count { z.tanh() } else { z });
        }
        activations.push(out);
    }
    Ok(activations)
}

/// Raw (unclamped) network output.
fn forward_output<F: Scalar>(weights: &ModelWeights<F>, features: &[F]) -> Result<F, TrainError> {
    Ok(forward(weights, features)?.last().expect("nonempty")[0])
}

/// Deterministic forward pass; the output is clamped to [0, 1] here at the
/// API boundary (training sees the raw linear output).
pub fn predict<F: Scalar>(snapshot: &ModelSnapshot<F>, features: &[F]) -> Result<F, TrainError> {
    let raw = forward_output(&snapshot.weights, features)?;
    Ok(raw.max(F::zero()).min(F::one()))
}

/// Mean squared error plus the anchor penalty over a batch.
pub fn loss<F: Scalar>(
    weights: &ModelWeights<F>,
    batch: &[TrainingExample<F>],
    anchor: &ModelWeights<F>,
    lambda: f64,
) -> Result<F, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut mse = F::zero();
    for example in batch {
        let out = forward_output(weights, &example.features)?;
        let err = out - example.target;
        mse = mse + err * err;
    }
    mse = mse / F::from_f64_lossy(batch.len() as f64);
    Ok(mse + F::from_f64_lossy(lambda) * anchor_distance_sq(weights, anchor))
}

fn anchor_distance_sq<F: Scalar>(weights: &ModelWeights<F>, anchor: &ModelWeights<F>) -> F {
    let mut sum = F::zero();
    for (w, a) in weights.layers.iter().zip(&anchor.layers) {
        for (wv, av) in w.data().iter().zip(a.data()) {
            let d = *wv - *av;
            sum = sum + d * d;
        }
    }
    sum
}

/// Analytic gradient of [`loss`] with respect to every weight.
///
/// Returns `(loss, gradients)` with gradients shaped like the weights.
pub fn loss_gradient<F: Scalar>(
    weights: &ModelWeights<F>,
    batch: &[TrainingExample<F>],
    anchor: &ModelWeights<F>,
    lambda: f64,
) -> Result<(F, ModelWeights<F>), TrainError> {
    let (mse, mut grads) = mse_gradient(weights, batch)?;
    let lam = F::from_f64_lossy(lambda);
    let two = F::from_f64_lossy(2.0);
    for (g, (w, a)) in grads
        .layers
        .iter_mut()
        .zip(weights.layers.iter().zip(&anchor.layers))
    {
        for ((gv, wv), av) in g.data_mut().iter_mut().zip(w.data()).zip(a.data()) {
            *gv = *gv + two * lam * (*wv - *av);
        }
    }
    let total = mse + lam * anchor_distance_sq(weights, anchor);
    Ok((total, grads))
}

/// Gradient of the batch-mean squared error alone.
fn mse_gradient<F: Scalar>(
    weights: &ModelWeights<F>,
    batch: &[TrainingExample<F>],
) -> Result<(F, ModelWeights<F>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let layer_count = weights.layers.len() / 2;
    let mut grads = ModelWeights::new(
        weights
            .layers
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect(),
    );
    let inv_batch = F::from_f64_lossy(1.0 / batch.len() as f64);
    let two = F::from_f64_lossy(2.0);
    let mut mse = F::zero();

    for example in batch {
        let activations = forward(weights, &example.features)?;
        let out = activations[layer_count][0];
        let err = out - example.target;
        mse = mse + err * err * inv_batch;

        // delta at the linear output layer
        let mut delta = vec![two * err * inv_batch];
        for l in (0..layer_count).rev() {
            let w = &weights.layers[2 * l];
            let (rows, cols) = (w.shape()[0], w.shape()[1]);
            let input = &activations[l];
            {
                let gw = grads.layers[2 * l].data_mut();
                for r in 0..rows {
                    let d = delta[r];
                    let row = &mut gw[r * cols..(r + 1) * cols];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g = *g + d * *x;
                    }
                }
            }
            {
                let gb = grads.layers[2 * l + 1].data_mut();
                for r in 0..rows {
                    gb[r] = gb[r] + delta[r];
                }
            }
            if l > 0 {
                // propagate through W^T and the tanh of the previous layer
                let mut prev = vec![F::zero(); cols];
                for r in 0..rows {
                    let d = delta[r];
                    let row = &w.data()[r * cols..(r + 1) * cols];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p = *p + *wv * d;
                    }
                }
                for (p, a) in prev.iter_mut().zip(&activations[l]) {
                    *p = *p * (F::one() - *a * *a);
                }
                delta = prev;
            }
        }
    }
    Ok((mse, grads))
}

/// Runs `cfg.epochs` passes of mini-batch gradient descent from `snapshot`.
///
/// Returns the trained snapshot (round advanced by one, counters accumulated)
/// and the matching session delta. The anchor of the L2 penalty is the input
/// snapshot itself.
pub fn train_model<F: Scalar>(
    snapshot: &ModelSnapshot<F>,
    data: &[TrainingExample<F>],
    cfg: &TrainerConfig,
) -> Result<(ModelSnapshot<F>, TrainingDelta), TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    check_architecture(snapshot, cfg)?;
    let width = input_width(snapshot).unwrap_or(0);
    for (index, example) in data.iter().enumerate() {
        if example.features.len() != width {
            return Err(TrainError::FeatureWidth {
                expected: width,
                found: example.features.len(),
            });
        }
        if example.features.iter().any(|f| !f.is_finite()) || !example.target.is_finite() {
            return Err(TrainError::NonFiniteExample { index });
        }
    }

    let anchor = snapshot.weights.clone();
    let mut weights = snapshot.weights.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let lr = F::from_f64_lossy(cfg.learning_rate);
    let lam = F::from_f64_lossy(cfg.l2_anchor_lambda);
    let two = F::from_f64_lossy(2.0);
    // Proximal coefficient of the anchor term: w <- (w + k*a) / (1 + k).
    let k = two * lr * lam;
    let prox_denominator = F::one() + k;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = F::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingExample<F>> =
                chunk.iter().map(|&i| data[i].clone()).collect();
            let (mse, grads) = mse_gradient(&weights, &batch)?;
            epoch_loss = epoch_loss + mse + lam * anchor_distance_sq(&weights, &anchor);
            for ((layer, grad), anchor_layer) in weights
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&anchor.layers)
            {
                for ((w, g), a) in layer
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(anchor_layer.data())
                {
                    let stepped = *w - lr * *g;
                    *w = if cfg.l2_anchor_lambda > 0.0 {
                        (stepped + k * *a) / prox_denominator
                    } else {
                        stepped
                    };
                }
            }
            if !epoch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
        }
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
    }

    let delta = TrainingDelta::for_session(data.len() as u64, cfg.epochs as u64);
    let meta = ModelMeta {
        level: snapshot.meta.level,
        cluster_key: snapshot.meta.cluster_key.clone(),
        samples_learned: snapshot.meta.samples_learned + delta.samples_learned,
        epochs_learned: snapshot.meta.epochs_learned + delta.epochs_learned,
        round: snapshot.meta.round + delta.round,
    };
    Ok((ModelSnapshot::new(meta, weights), delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelMeta;

    fn example(features: &[f64], target: f64) -> TrainingExample<f64> {
        TrainingExample {
            features: features.to_vec(),
            target,
        }
    }

    fn toy_data(seed: u64, n: usize, width: usize) -> Vec<TrainingExample<f64>> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let features: Vec<f64> = (0..width).map(|_| rng.gen::<f64>()).collect();
                let target = (0.2 + 0.6 * features[0]).clamp(0.0, 1.0);
                TrainingExample { features, target }
            })
            .collect()
    }

    #[test]
    fn huge_anchor_pins_weights_to_the_input() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::local(), FEATURE_COUNT, &[16], 7);
        let data = toy_data(1, 64, FEATURE_COUNT);
        let cfg = TrainerConfig {
            l2_anchor_lambda: 1e9,
            epochs: 3,
            ..TrainerConfig::default()
        };
        let (out, _) = train_model(&snapshot, &data, &cfg).unwrap();
        for (a, b) in out.weights.layers.iter().zip(&snapshot.weights.layers) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-3, "moved {x} vs {y}");
            }
        }
    }

    #[test]
    fn single_example_linear_step_matches_the_analytic_gradient() {
        // No hidden layers: prediction = w.x + b.
        let snapshot = init_snapshot::<f64>(ModelMeta::local(), 3, &[], 5);
        let x = [0.5, -0.25, 1.0];
        let target = 0.75;
        let lr = 0.01;
        let cfg = TrainerConfig {
            hidden_sizes: vec![],
            learning_rate: lr,
            batch_size: 1,
            epochs: 1,
            l2_anchor_lambda: 0.0,
            seed: 9,
        };
        let (out, delta) = train_model(&snapshot, &[example(&x, target)], &cfg).unwrap();

        // d/dw of (w.x + b - y)^2 = 2*(w.x + b - y)*x, d/db = 2*(w.x + b - y).
        let w0 = snapshot.weights.layers[0].data();
        let b0 = snapshot.weights.layers[1].data()[0];
        let pred: f64 = w0.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() + b0;
        let err = pred - target;
        for (i, (new_w, old_w)) in out.weights.layers[0]
            .data()
            .iter()
            .zip(w0)
            .enumerate()
        {
            let expected = old_w - lr * 2.0 * err * x[i];
            assert!((new_w - expected).abs() < 1e-14);
        }
        let expected_b = b0 - lr * 2.0 * err;
        assert!((out.weights.layers[1].data()[0] - expected_b).abs() < 1e-14);
        assert_eq!(delta, TrainingDelta::for_session(1, 1));
        assert_eq!(out.meta.round, snapshot.meta.round + 1);
    }

    #[test]
    fn loss_is_non_increasing_at_small_learning_rate() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::local(), FEATURE_COUNT, &[8], 3);
        let data = toy_data(2, 128, FEATURE_COUNT);
        let anchor = snapshot.weights.clone();
        let mut cfg = TrainerConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 1,
            l2_anchor_lambda: 0.0,
            seed: 4,
            ..TrainerConfig::default()
        };
        cfg.hidden_sizes = vec![8];
        let mut current = snapshot;
        let mut last = loss(&current.weights, &data, &anchor, 0.0).unwrap();
        for _ in 0..20 {
            let (next, _) = train_model(&current, &data, &cfg).unwrap();
            let l = loss(&next.weights, &data, &anchor, 0.0).unwrap();
            assert!(
                l <= last + 1e-12,
                "loss increased from {last} to {l} at lr 1e-3"
            );
            last = l;
            current = next;
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::global(), FEATURE_COUNT, &[16], 11);
        let data = toy_data(5, 96, FEATURE_COUNT);
        let cfg = TrainerConfig::default().with_seed(77);
        let (a, _) = train_model(&snapshot, &data, &cfg).unwrap();
        let (b, _) = train_model(&snapshot, &data, &cfg).unwrap();
        for (ta, tb) in a.weights.layers.iter().zip(&b.weights.layers) {
            for (x, y) in ta.data().iter().zip(tb.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let (c, _) = train_model(&snapshot, &data, &cfg.clone().with_seed(78)).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn anchor_distance_is_monotone_in_lambda() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::local(), FEATURE_COUNT, &[16], 21);
        let data = toy_data(6, 96, FEATURE_COUNT);
        let mut previous = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let cfg = TrainerConfig {
                l2_anchor_lambda: lambda,
                epochs: 3,
                seed: 13,
                ..TrainerConfig::default()
            };
            let (out, _) = train_model(&snapshot, &data, &cfg).unwrap();
            let moved = anchor_distance_sq(&out.weights, &snapshot.weights).sqrt();
            assert!(
                moved <= previous + 1e-12,
                "movement {moved} grew at lambda {lambda}"
            );
            previous = moved;
        }
    }

    #[test]
    fn zero_weights_predict_zero() {
        let shapes = architecture_shapes(FEATURE_COUNT, &[16]);
        let weights = ModelWeights::new(shapes.into_iter().map(Tensor::<f64>::zeros).collect());
        let snapshot = ModelSnapshot::new(ModelMeta::local(), weights);
        let out = predict(&snapshot, &[0.3; FEATURE_COUNT]).unwrap();
        assert_eq!(out, 0.0);
    }

    #[test]
    fn prediction_is_deterministic_and_clamped() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::local(), FEATURE_COUNT, &[16], 2);
        let features = [0.1, 0.9, 0.0, 0.2, 0.5, 0.25, 0.75];
        let a = predict(&snapshot, &features).unwrap();
        let b = predict(&snapshot, &features).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn feature_width_mismatch_is_an_error() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::local(), FEATURE_COUNT, &[16], 2);
        assert_eq!(
            predict(&snapshot, &[0.0; 3]).unwrap_err(),
            TrainError::FeatureWidth {
                expected: FEATURE_COUNT,
                found: 3
            }
        );
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::local(), FEATURE_COUNT, &[16], 2);
        assert_eq!(
            train_model(&snapshot, &[], &TrainerConfig::default()).unwrap_err(),
            TrainError::EmptyDataset
        );
    }

    #[test]
    fn divergence_reports_the_epoch() {
        let snapshot =
            init_snapshot::<f64>(ModelMeta::local(), FEATURE_COUNT, &[16], 2);
        let data = toy_data(8, 64, FEATURE_COUNT);
        let cfg = TrainerConfig {
            learning_rate: 1e30,
            l2_anchor_lambda: 0.0,
            epochs: 4,
            batch_size: 8,
            ..TrainerConfig::default()
        };
        match train_model(&snapshot, &data, &cfg).unwrap_err() {
            TrainError::Diverged { .. } => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for case in 0..30 {
            let hidden: &[usize] = match case % 4 {
                0 => &[],
                1 => &[4],
                2 => &[8],
                _ => &[5, 3],
            };
            let width = 2 + (case % 3);
            let snapshot = init_snapshot::<f64>(ModelMeta::local(), width, hidden, case as u64);
            let anchor = init_weights::<f64>(width, hidden, case as u64 + 500);
            let lambda = if case % 2 == 0 { 0.0 } else { 0.1 };
            let batch: Vec<_> = (0..3)
                .map(|_| {
                    let features: Vec<f64> = (0..width).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                    TrainingExample {
                        features,
                        target: rng.gen::<f64>(),
                    }
                })
                .collect();

            let (_, grads) = loss_gradient(&snapshot.weights, &batch, &anchor, lambda).unwrap();
            let h = 1e-6;
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            for layer in 0..snapshot.weights.layers.len() {
                for index in 0..snapshot.weights.layers[layer].len() {
                    let mut plus = snapshot.weights.clone();
                    plus.layers[layer].data_mut()[index] += h;
                    let mut minus = snapshot.weights.clone();
                    minus.layers[layer].data_mut()[index] -= h;
                    numeric.push(
                        (loss(&plus, &batch, &anchor, lambda).unwrap()
                            - loss(&minus, &batch, &anchor, lambda).unwrap())
                            / (2.0 * h),
                    );
                    analytic.push(grads.layers[layer].data()[index]);
                }
            }
            // Per-pair relative error over the whole gradient vector; the
            // norm form is immune to cancellation noise on components that
            // happen to sit near zero.
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
            let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12);
            assert!(
                rel < 1e-5,
                "case {case}: gradient relative error {rel} exceeds 1e-5"
            );
        }
    }

    #[test]
    fn f32_training_runs_through_the_generic_path() {
        let snapshot = init_snapshot::<f32>(ModelMeta::local(), 4, &[4], 3);
        let data: Vec<TrainingExample<f32>> = (0..16)
            .map(|i| TrainingExample {
                features: vec![i as f32 / 16.0; 4],
                target: (i as f32 / 16.0).min(1.0),
            })
            .collect();
        let cfg = TrainerConfig {
            hidden_sizes: vec![4],
            ..TrainerConfig::default()
        };
        let (out, delta) = train_model(&snapshot, &data, &cfg).unwrap();
        assert_eq!(delta.samples_learned, 16);
        assert_eq!(out.meta.round, 1);
    }
}
