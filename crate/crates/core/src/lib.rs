//! Core building blocks for asynchronous, clustered, continual federated
//! learning on a solar-production forecasting workload.
//!
//! The crate is organized around the lifecycle of a model snapshot:
//!
//! * [`model`] — versioned weight snapshots and the metadata deltas clients
//!   report after a training session, plus [`codec`] for the bit-exact binary
//!   snapshot format used on disk and on the wire.
//! * [`aggregation`] — the server-side merge of a submitted snapshot into a
//!   stored one (sequential-round shortcut + sample-weighted averaging).
//! * [`clustering`] — DBSCAN over invariant client characteristics, one
//!   clustering dimension per trait (geography, panel orientation), with
//!   incremental insertion for clients joining later.
//! * [`trainer`] — a small dense regression network trained by mini-batch
//!   gradient descent with an L2 anchor to the fetched weights.
//! * [`solar`] — a synthetic generator for per-site production/weather series
//!   with controllable regional cluster structure.
//! * [`metrics`] — kWp-normalized power/energy error metrics and run reports.
//!
//! All weight math is generic over the floating-point type via [`Scalar`];
//! the aliases below fix the concrete `f64` types used by the federation
//! layer and the experiment harness.

pub mod aggregation;
pub mod clustering;
pub mod codec;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod seeds;
pub mod solar;
pub mod trainer;

pub use scalar::Scalar;

pub use model::{ModelLevel, ModelMeta, ModelSnapshot, ModelWeights, Tensor, TrainingDelta};

/// Weight container at the default `f64` precision.
pub type Weights = model::ModelWeights<f64>;
/// Model snapshot at the default `f64` precision.
pub type Snapshot = model::ModelSnapshot<f64>;
/// Training example at the default `f64` precision.
pub type Example = trainer::TrainingExample<f64>;
