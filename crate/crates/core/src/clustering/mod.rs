//! Pre-training clustering over invariant client characteristics.
//!
//! Clients are clustered once, before any training, in independent
//! dimensions: geographic location (haversine distance) and panel
//! orientation (angular distance). A client can hold a cluster in one
//! dimension and be noise in another; the assignments never influence each
//! other. [`incremental::ClusteringState`] extends an existing clustering
//! point-by-point so late joiners slot into the established structure.

mod dbscan;
mod incremental;
mod orientation;

pub use dbscan::dbscan;
pub use incremental::{ClusteringState, InsertOutcome, LabelChange, MergeEvent};
pub use orientation::{infer_orientation, OrientationInferenceConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("profile set is empty")]
    EmptyProfiles,
    #[error("invalid profile for client {client_id}: {detail}")]
    InvalidProfile { client_id: String, detail: String },
    #[error("duplicate client id {0}")]
    DuplicateClient(String),
    #[error("invalid clustering dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: state built for {expected:?}, got {found:?}")]
    DimensionMismatch {
        expected: ClusteringDimension,
        found: ClusteringDimension,
    },
    #[error("series has no clear-sky day below the cloud threshold")]
    NoClearSkyDay,
}

/// Invariant client characteristics used for clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub client_id: String,
    /// Degrees in [-90, 90].
    pub latitude: f64,
    /// Degrees in [-180, 180).
    pub longitude: f64,
    /// Panel azimuth in degrees, [0, 360); 180 faces the equator (south).
    pub orientation_azimuth: f64,
    /// Rated capacity in kilowatts-peak, > 0.
    pub kwp: f64,
}

impl ClientProfile {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let fail = |detail: &str| {
            Err(ClusterError::InvalidProfile {
                client_id: self.client_id.clone(),
                detail: detail.to_string(),
            })
        };
        if self.client_id.is_empty() {
            return fail("empty client id");
        }
        if !(-90.0..=90.0).contains(&self.latitude) || !self.latitude.is_finite() {
            return fail("latitude outside [-90, 90]");
        }
        if !(-180.0..180.0).contains(&self.longitude) {
            return fail("longitude outside [-180, 180)");
        }
        if !(0.0..360.0).contains(&self.orientation_azimuth) {
            return fail("azimuth outside [0, 360)");
        }
        if !(self.kwp > 0.0) || !self.kwp.is_finite() {
            return fail("kwp must be positive");
        }
        Ok(())
    }
}

/// Which invariant characteristic a clustering runs over.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DimensionKind {
    Location,
    Orientation,
}

impl DimensionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DimensionKind::Location => "location",
            DimensionKind::Orientation => "orientation",
        }
    }

    /// Distance between two profiles in this dimension's metric
    /// (kilometers for location, degrees for orientation).
    pub fn distance(&self, a: &ClientProfile, b: &ClientProfile) -> f64 {
        match self {
            DimensionKind::Location => location_distance(a, b),
            DimensionKind::Orientation => orientation_distance(a, b),
        }
    }
}

/// DBSCAN parameters for one clustering dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringDimension {
    pub kind: DimensionKind,
    /// Neighborhood radius in the dimension's metric units.
    pub eps: f64,
    /// Minimum neighborhood size (including the point itself) for a core point.
    pub min_pts: usize,
}

impl ClusteringDimension {
    pub fn location_default() -> Self {
        Self {
            kind: DimensionKind::Location,
            eps: 50.0,
            min_pts: 3,
        }
    }

    pub fn orientation_default() -> Self {
        Self {
            kind: DimensionKind::Orientation,
            eps: 15.0,
            min_pts: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(ClusterError::InvalidDimension("eps must be > 0".into()));
        }
        if self.min_pts < 1 {
            return Err(ClusterError::InvalidDimension("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-dimension clustering outcome for one client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClusterLabel {
    Cluster(u64),
    Noise,
}

impl ClusterLabel {
    pub fn is_noise(&self) -> bool {
        matches!(self, ClusterLabel::Noise)
    }

    pub fn id(&self) -> Option<u64> {
        match self {
            ClusterLabel::Cluster(id) => Some(*id),
            ClusterLabel::Noise => None,
        }
    }

    pub fn display(&self) -> String {
        match self {
            ClusterLabel::Cluster(id) => id.to_string(),
            ClusterLabel::Noise => "NOISE".to_string(),
        }
    }
}

/// Opaque model-store key for a cluster: `<dimension>:<id>`.
pub fn cluster_key(kind: DimensionKind, id: u64) -> String {
    format!("{}:{}", kind.as_str(), id)
}

/// A client's labels across all clustering dimensions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: BTreeMap<DimensionKind, ClusterLabel>,
}

impl ClusterAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, kind: DimensionKind, label: ClusterLabel) {
        self.labels.insert(kind, label);
    }

    pub fn get(&self, kind: DimensionKind) -> Option<ClusterLabel> {
        self.labels.get(&kind).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DimensionKind, ClusterLabel)> + '_ {
        self.labels.iter().map(|(k, v)| (*k, *v))
    }

    /// Model-store keys for every dimension where the client is clustered,
    /// in deterministic (dimension, id) order.
    pub fn cluster_keys(&self) -> Vec<String> {
        self.labels
            .iter()
            .filter_map(|(kind, label)| label.id().map(|id| cluster_key(*kind, id)))
            .collect()
    }
}

/// Great-circle distance between two profiles in kilometers.
pub fn location_distance(a: &ClientProfile, b: &ClientProfile) -> f64 {
    let lat_a = a.latitude.to_radians();
    let lat_b = b.latitude.to_radians();
    let d_lat = (b.latitude - a.latitude).to_radians();
    let d_lon = (b.longitude - a.longitude).to_radians();
    let h = (d_lat / 2.0).sin().powi(2) + lat_a.cos() * lat_b.cos() * (d_lon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Minimal angular difference between two panel azimuths, in [0, 180].
pub fn orientation_distance(a: &ClientProfile, b: &ClientProfile) -> f64 {
    let diff = (a.orientation_azimuth - b.orientation_azimuth).abs() % 360.0;
    diff.min(360.0 - diff)
}

#[cfg(test)]
pub(crate) fn profile(id: &str, lat: f64, lon: f64, azimuth: f64) -> ClientProfile {
    ClientProfile {
        client_id: id.to_string(),
        latitude: lat,
        longitude: lon,
        orientation_azimuth: azimuth,
        kwp: 10.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_coordinates_have_zero_distance() {
        let a = profile("a", 48.2, 16.37, 180.0);
        let b = profile("b", 48.2, 16.37, 90.0);
        assert_eq!(location_distance(&a, &b), 0.0);
    }

    #[test]
    fn antipodal_equator_points_are_half_the_circumference() {
        let a = profile("a", 0.0, 0.0, 180.0);
        let b = profile("b", 0.0, 179.999_999, 180.0);
        let d = location_distance(&a, &b);
        let half_circumference = std::f64::consts::PI * EARTH_RADIUS_KM;
        assert!((d - half_circumference).abs() / half_circumference < 0.005);
        assert!((d - 20_015.0).abs() < 100.0);
    }

    #[test]
    fn location_distance_is_symmetric() {
        let mut rng = 0x1234_5678_u64;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let a = profile("a", next() * 180.0 - 90.0, next() * 360.0 - 180.0, 0.0);
            let b = profile("b", next() * 180.0 - 90.0, next() * 360.0 - 180.0, 0.0);
            let d_ab = location_distance(&a, &b);
            let d_ba = location_distance(&b, &a);
            assert!((d_ab - d_ba).abs() < 1e-9, "asymmetry: {d_ab} vs {d_ba}");
        }
    }

    #[test]
    fn orientation_distance_wraps_around() {
        let a = profile("a", 0.0, 0.0, 350.0);
        let b = profile("b", 0.0, 0.0, 10.0);
        assert!((orientation_distance(&a, &b) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_distance_maximum_is_antipodal() {
        let a = profile("a", 0.0, 0.0, 90.0);
        let b = profile("b", 0.0, 0.0, 270.0);
        assert!((orientation_distance(&a, &b) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn equal_azimuths_have_zero_distance() {
        let a = profile("a", 0.0, 0.0, 123.4);
        let b = profile("b", 0.0, 0.0, 123.4);
        assert_eq!(orientation_distance(&a, &b), 0.0);
    }

    #[test]
    fn profile_validation_rejects_out_of_range_fields() {
        let mut p = profile("a", 48.0, 16.0, 180.0);
        assert!(p.validate().is_ok());
        p.latitude = 91.0;
        assert!(p.validate().is_err());
        p.latitude = 48.0;
        p.kwp = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn assignment_keys_are_deterministic() {
        let mut a = ClusterAssignment::new();
        a.set(DimensionKind::Orientation, ClusterLabel::Cluster(1));
        a.set(DimensionKind::Location, ClusterLabel::Cluster(0));
        assert_eq!(a.cluster_keys(), vec!["location:0", "orientation:1"]);

        let mut b = ClusterAssignment::new();
        b.set(DimensionKind::Location, ClusterLabel::Noise);
        b.set(DimensionKind::Orientation, ClusterLabel::Cluster(2));
        assert_eq!(b.cluster_keys(), vec!["orientation:2"]);
    }
}
