//! Merging a submitted model update into a stored base model.
//!
//! When the submitted round is exactly one ahead of the stored round, no
//! other update landed since the client fetched, and the submitted weights
//! are taken verbatim. Otherwise both weight sets are combined layer-wise as
//! a convex combination weighted by sample counts. Metadata counters
//! accumulate the reported delta on either path, so counters are conserved
//! across any sequence of applied updates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelMeta, ModelSnapshot, Tensor, TrainingDelta};
use crate::scalar::Scalar;

/// How the averaging ratio is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Ratios from the snapshots' cumulative `samples_learned`:
    /// `ratio_new = updated.samples / (base.samples + updated.samples)`.
    #[default]
    Cumulative,
    /// Ratios from the session delta only:
    /// `ratio_new = delta.samples / (base.samples + delta.samples)`.
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AggregationConfig {
    #[serde(default)]
    pub weighting_mode: WeightingMode,
}

/// Which branch an aggregation took; surfaced in the server's update log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationPath {
    SequentialShortcut,
    WeightedAverage,
}

impl AggregationPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationPath::SequentialShortcut => "shortcut",
            AggregationPath::WeightedAverage => "average",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("both sides of the aggregation report zero samples learned")]
    ZeroSamples,
    #[error("aggregated layer {layer} produced a non-finite value")]
    NonFinite { layer: usize },
}

/// Merges `updated` into `base`, returning the snapshot to store.
pub fn aggregate_models<F: Scalar>(
    base: &ModelSnapshot<F>,
    updated: &ModelSnapshot<F>,
    delta: &TrainingDelta,
    cfg: &AggregationConfig,
) -> Result<ModelSnapshot<F>, AggregationError> {
    aggregate_models_traced(base, updated, delta, cfg).map(|(snapshot, _)| snapshot)
}

/// [`aggregate_models`] plus the branch taken.
pub fn aggregate_models_traced<F: Scalar>(
    base: &ModelSnapshot<F>,
    updated: &ModelSnapshot<F>,
    delta: &TrainingDelta,
    cfg: &AggregationConfig,
) -> Result<(ModelSnapshot<F>, AggregationPath), AggregationError> {
    delta.validate()?;
    base.weights.check_same_shape(&updated.weights)?;

    // The stored model keeps its identity; counters accumulate the delta on
    // both paths, which is what makes them exactly conserved.
    let meta = ModelMeta {
        level: base.meta.level,
        cluster_key: base.meta.cluster_key.clone(),
        samples_learned: base.meta.samples_learned + delta.samples_learned,
        epochs_learned: base.meta.epochs_learned + delta.epochs_learned,
        round: base.meta.round + delta.round,
    };

    if updated.meta.round == base.meta.round + 1 {
        return Ok((
            ModelSnapshot::new(meta, updated.weights.clone()),
            AggregationPath::SequentialShortcut,
        ));
    }

    let (new_samples, total) = match cfg.weighting_mode {
        WeightingMode::Cumulative => (
            updated.meta.samples_learned,
            base.meta.samples_learned as u128 + updated.meta.samples_learned as u128,
        ),
        WeightingMode::Delta => (
            delta.samples_learned,
            base.meta.samples_learned as u128 + delta.samples_learned as u128,
        ),
    };
    if total == 0 {
        return Err(AggregationError::ZeroSamples);
    }
    let ratio_new = F::from_f64_lossy(new_samples as f64 / total as f64);

    let mut layers = Vec::with_capacity(base.weights.layers.len());
    for (layer, (b, u)) in base.weights.layers.iter().zip(&updated.weights.layers).enumerate() {
        let mut data = Vec::with_capacity(b.len());
        for (&x, &y) in b.data().iter().zip(u.data()) {
            // x + (y - x) * t never leaves [min(x, y), max(x, y)] for t in [0, 1].
            let value = x + (y - x) * ratio_new;
            if !value.is_finite() {
                return Err(AggregationError::NonFinite { layer });
            }
            data.push(value);
        }
        layers.push(Tensor::new(b.shape().to_vec(), data).expect("shape preserved"));
    }

    Ok((
        ModelSnapshot::new(meta, crate::model::ModelWeights::new(layers)),
        AggregationPath::WeightedAverage,
    ))
}
