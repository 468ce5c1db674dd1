//! Model snapshots, metadata and training deltas.
//!
//! A [`ModelSnapshot`] is the unit exchanged between client and server: the
//! weight tensors of one model plus the metadata that versions them. All
//! types here are immutable values; copies are safe to send across execution
//! contexts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("cluster_key must be present exactly when level is cluster")]
    ClusterKeyMismatch,
    #[error("tensor data length {data_len} does not match shape {shape:?}")]
    ShapeDataMismatch { shape: Vec<usize>, data_len: usize },
    #[error("layer {layer} holds a non-finite value at element {index}")]
    NonFiniteValue { layer: usize, index: usize },
    #[error("snapshots differ in layer shapes: {detail}")]
    ShapeMismatch { detail: String },
    #[error("training delta fields must all be at least 1")]
    InvalidDelta,
}

/// Tier a model belongs to in the three-level hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelLevel {
    Global,
    Cluster,
    Local,
}

impl ModelLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelLevel::Global => "global",
            ModelLevel::Cluster => "cluster",
            ModelLevel::Local => "local",
        }
    }
}

/// Version metadata carried by every stored model.
///
/// `samples_learned`, `epochs_learned` and `round` are lifetime counters and
/// never decrease across successive versions of the same stored model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub level: ModelLevel,
    /// Present exactly when `level` is [`ModelLevel::Cluster`]; keys take the
    /// form `<dimension>:<id>`, e.g. `location:2`.
    pub cluster_key: Option<String>,
    pub samples_learned: u64,
    pub epochs_learned: u64,
    pub round: u64,
}

impl ModelMeta {
    pub fn global() -> Self {
        Self {
            level: ModelLevel::Global,
            cluster_key: None,
            samples_learned: 0,
            epochs_learned: 0,
            round: 0,
        }
    }

    pub fn cluster(key: impl Into<String>) -> Self {
        Self {
            level: ModelLevel::Cluster,
            cluster_key: Some(key.into()),
            samples_learned: 0,
            epochs_learned: 0,
            round: 0,
        }
    }

    pub fn local() -> Self {
        Self {
            level: ModelLevel::Local,
            cluster_key: None,
            samples_learned: 0,
            epochs_learned: 0,
            round: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let has_key = self.cluster_key.is_some();
        let wants_key = self.level == ModelLevel::Cluster;
        if has_key != wants_key {
            return Err(ModelError::ClusterKeyMismatch);
        }
        Ok(())
    }
}

/// Dense tensor: a shape descriptor plus a flat array in row-major order.
///
/// The element count always matches the shape product; construction enforces
/// it and mutation only hands out fixed-length slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self, ModelError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ModelError::ShapeDataMismatch {
                shape,
                data_len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered weight layers of one model lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights<F> {
    pub layers: Vec<Tensor<F>>,
}

impl<F: Scalar> ModelWeights<F> {
    pub fn new(layers: Vec<Tensor<F>>) -> Self {
        Self { layers }
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().map(|t| t.shape().to_vec()).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<(), ModelError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(ModelError::ShapeMismatch {
                detail: format!("{:?} vs {:?}", self.shapes(), other.shapes()),
            })
        }
    }

    /// Returns the first non-finite element, if any.
    pub fn check_finite(&self) -> Result<(), ModelError> {
        for (layer, tensor) in self.layers.iter().enumerate() {
            for (index, value) in tensor.data().iter().enumerate() {
                if !value.is_finite() {
                    return Err(ModelError::NonFiniteValue { layer, index });
                }
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Tensor::len).sum()
    }
}

/// Counters a client reports for one completed training session.
///
/// `round` is fixed to 1 per session so the server's sequential-round check
/// reads as "no concurrent update landed since this client fetched".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingDelta {
    pub samples_learned: u64,
    pub epochs_learned: u64,
    pub round: u64,
}

impl TrainingDelta {
    pub fn for_session(samples_learned: u64, epochs_learned: u64) -> Self {
        Self {
            samples_learned,
            epochs_learned,
            round: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.samples_learned >= 1 && self.epochs_learned >= 1 && self.round >= 1 {
            Ok(())
        } else {
            Err(ModelError::InvalidDelta)
        }
    }
}

/// Versioned weights: the unit exchanged between client and server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot<F> {
    pub meta: ModelMeta,
    pub weights: ModelWeights<F>,
}

impl<F: Scalar> ModelSnapshot<F> {
    pub fn new(meta: ModelMeta, weights: ModelWeights<F>) -> Self {
        Self { meta, weights }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.meta.validate()?;
        self.weights.check_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_key_presence_is_tied_to_level() {
        assert!(ModelMeta::global().validate().is_ok());
        assert!(ModelMeta::cluster("location:0").validate().is_ok());
        assert!(ModelMeta::local().validate().is_ok());

        let mut meta = ModelMeta::global();
        meta.cluster_key = Some("location:0".into());
        assert_eq!(meta.validate(), Err(ModelError::ClusterKeyMismatch));

        let mut meta = ModelMeta::cluster("location:0");
        meta.cluster_key = None;
        assert_eq!(meta.validate(), Err(ModelError::ClusterKeyMismatch));
    }

    #[test]
    fn tensor_rejects_shape_data_mismatch() {
        let err = Tensor::new(vec![2, 3], vec![0.0_f64; 5]).unwrap_err();
        assert!(matches!(err, ModelError::ShapeDataMismatch { .. }));
        assert!(Tensor::new(vec![2, 3], vec![0.0_f64; 6]).is_ok());
    }

    #[test]
    fn finite_check_reports_layer_and_index() {
        let weights = ModelWeights::new(vec![
            Tensor::new(vec![2], vec![1.0_f64, 2.0]).unwrap(),
            Tensor::new(vec![3], vec![0.0, f64::NAN, 1.0]).unwrap(),
        ]);
        assert_eq!(
            weights.check_finite(),
            Err(ModelError::NonFiniteValue { layer: 1, index: 1 })
        );
    }

    #[test]
    fn delta_validation_requires_all_fields_positive() {
        assert!(TrainingDelta::for_session(10, 1).validate().is_ok());
        let zero_round = TrainingDelta {
            samples_learned: 1,
            epochs_learned: 1,
            round: 0,
        };
        assert_eq!(zero_round.validate(), Err(ModelError::InvalidDelta));
    }
}
