//! The federation server: model store, registration and the update handler.
//!
//! Store layout: one global model plus one model per cluster key. Every model
//! sits behind its own write gate (a fair mutex), so updates to one model
//! serialize while updates to distinct models proceed concurrently. Readers
//! clone an `Arc` of the current snapshot under a short value lock and never
//! wait out an aggregation in progress — a fetch observes either the snapshot
//! before an update or after it, never a torn intermediate.
//!
//! Registration runs incremental clustering per dimension under a separate
//! registration lock. When an insertion merges clusters, the model of the
//! larger cluster survives, the other entry is retired and its key aliases to
//! the survivor so stale assignments keep resolving.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{FairMutex, Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use fedccl_core::aggregation::{
    aggregate_models_traced, AggregationConfig, AggregationError, AggregationPath,
};
use fedccl_core::clustering::{
    cluster_key, ClientProfile, ClusterAssignment, ClusterError, ClusteringDimension,
    ClusteringState, DimensionKind,
};
use fedccl_core::codec::serialize_snapshot;
use fedccl_core::model::{ModelError, ModelLevel, ModelMeta, TrainingDelta};
use fedccl_core::solar::FEATURE_COUNT;
use fedccl_core::trainer::init_snapshot;
use fedccl_core::Snapshot;

use crate::message::{DimensionMerge, ErrorCode, Frame, ServerMessage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServerError {
    #[error("client {0} is already registered")]
    DuplicateClient(String),
    #[error("unknown cluster key {0}")]
    UnknownCluster(String),
    #[error("local models never leave the client; level=local is not served")]
    LocalLevelRejected,
    #[error("cluster level requires a cluster key")]
    MissingClusterKey,
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("invalid server config: {0}")]
    InvalidConfig(String),
}

impl ServerError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ServerError::DuplicateClient(_) => ErrorCode::DuplicateClient,
            ServerError::UnknownCluster(_) => ErrorCode::UnknownCluster,
            ServerError::LocalLevelRejected => ErrorCode::LocalLevelRejected,
            ServerError::MissingClusterKey => ErrorCode::UnknownCluster,
            ServerError::Aggregation(AggregationError::Model(ModelError::InvalidDelta)) => {
                ErrorCode::InvalidDelta
            }
            ServerError::Aggregation(AggregationError::Model(_)) => ErrorCode::ShapeMismatch,
            ServerError::Aggregation(AggregationError::ZeroSamples) => {
                ErrorCode::DegenerateAggregation
            }
            ServerError::Aggregation(AggregationError::NonFinite { .. }) => {
                ErrorCode::DegenerateAggregation
            }
            ServerError::Cluster(ClusterError::InvalidProfile { .. }) => ErrorCode::InvalidProfile,
            ServerError::Cluster(ClusterError::DuplicateClient(_)) => ErrorCode::DuplicateClient,
            ServerError::Cluster(_) => ErrorCode::Internal,
            ServerError::InvalidConfig(_) => ErrorCode::Internal,
        }
    }
}

/// Server configuration; loadable from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    /// Address the TCP transport binds to (`serve` mode only).
    pub listen_addr: Option<String>,
    pub dimensions: Vec<ClusteringDimension>,
    pub aggregation: AggregationConfig,
    /// Architecture of the models the store initializes.
    pub hidden_sizes: Vec<usize>,
    pub init_seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen_addr: None,
            dimensions: vec![
                ClusteringDimension::location_default(),
                ClusteringDimension::orientation_default(),
            ],
            aggregation: AggregationConfig::default(),
            hidden_sizes: vec![16],
            init_seed: 0,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        if self.dimensions.is_empty() {
            return Err(ServerError::InvalidConfig(
                "at least one clustering dimension required".into(),
            ));
        }
        let mut kinds: Vec<DimensionKind> = self.dimensions.iter().map(|d| d.kind).collect();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.dimensions.len() {
            return Err(ServerError::InvalidConfig(
                "duplicate clustering dimension".into(),
            ));
        }
        for d in &self.dimensions {
            d.validate()
                .map_err(|e| ServerError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ServerError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| ServerError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Registration result: the new client's assignment plus any cluster merges
/// its insertion caused.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterOutcome {
    pub assignments: ClusterAssignment,
    pub merges: Vec<DimensionMerge>,
}

/// One applied update, as recorded in the server's structured log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub timestamp_ms: u64,
    pub client_id: String,
    /// `global` or the cluster key the update landed on (post-aliasing).
    pub model_key: String,
    pub base_round: u64,
    pub resulting_round: u64,
    pub path: AggregationPath,
}

/// Virtual or wall clock used to stamp the update log.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

fn wall_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

struct ModelEntry {
    /// Serializes writers; fair so waiting updates land in arrival order.
    gate: FairMutex<()>,
    value: RwLock<Arc<Snapshot>>,
    /// Set when the entry was retired by a merge; holders must re-resolve.
    redirect: RwLock<Option<String>>,
}

impl ModelEntry {
    fn new(snapshot: Snapshot) -> Self {
        Self {
            gate: FairMutex::new(()),
            value: RwLock::new(Arc::new(snapshot)),
            redirect: RwLock::new(None),
        }
    }

    fn read(&self) -> Arc<Snapshot> {
        self.value.read().clone()
    }
}

struct Registration {
    states: BTreeMap<DimensionKind, ClusteringState>,
    profiles: BTreeMap<String, ClientProfile>,
}

/// The federation server. Safe for concurrent use from many clients.
pub struct FederationServer {
    cfg: ServerConfig,
    global: ModelEntry,
    clusters: RwLock<BTreeMap<String, Arc<ModelEntry>>>,
    aliases: RwLock<BTreeMap<String, String>>,
    registration: Mutex<Registration>,
    update_log: Mutex<Vec<UpdateRecord>>,
    clock: Clock,
}

impl FederationServer {
    pub fn new(cfg: ServerConfig) -> Result<Self, ServerError> {
        Self::with_clock(cfg, wall_clock())
    }

    pub fn with_clock(cfg: ServerConfig, clock: Clock) -> Result<Self, ServerError> {
        cfg.validate()?;
        let mut states = BTreeMap::new();
        for dim in &cfg.dimensions {
            states.insert(dim.kind, ClusteringState::new(dim.clone())?);
        }
        let global = init_snapshot(
            ModelMeta::global(),
            FEATURE_COUNT,
            &cfg.hidden_sizes,
            cfg.init_seed,
        );
        Ok(Self {
            global: ModelEntry::new(global),
            clusters: RwLock::new(BTreeMap::new()),
            aliases: RwLock::new(BTreeMap::new()),
            registration: Mutex::new(Registration {
                states,
                profiles: BTreeMap::new(),
            }),
            update_log: Mutex::new(Vec::new()),
            cfg,
            clock,
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    /// Follows merge aliases to the surviving key.
    pub fn resolve_key(&self, key: &str) -> String {
        let aliases = self.aliases.read();
        let mut current = key.to_string();
        for _ in 0..aliases.len() + 1 {
            match aliases.get(&current) {
                Some(next) => current = next.clone(),
                None => break,
            }
        }
        current
    }

    fn cluster_entry(&self, key: &str) -> Result<Arc<ModelEntry>, ServerError> {
        // A merge can retire an entry between resolution and lookup; the
        // alias map gains the forwarding link first, so retrying resolves it.
        for _ in 0..8 {
            let resolved = self.resolve_key(key);
            if let Some(entry) = self.clusters.read().get(&resolved) {
                return Ok(entry.clone());
            }
            if self.resolve_key(&resolved) == resolved {
                return Err(ServerError::UnknownCluster(key.to_string()));
            }
        }
        Err(ServerError::UnknownCluster(key.to_string()))
    }

    /// Registers a client: clusters it in every dimension, creates any newly
    /// required cluster models (warm-started from the current global weights)
    /// and returns the assignment.
    pub fn register_client(&self, profile: &ClientProfile) -> Result<RegisterOutcome, ServerError> {
        profile.validate()?;
        let mut reg = self.registration.lock();
        if reg.profiles.contains_key(&profile.client_id) {
            return Err(ServerError::DuplicateClient(profile.client_id.clone()));
        }

        let mut assignments = ClusterAssignment::new();
        let mut merges = Vec::new();
        for (kind, state) in reg.states.iter_mut() {
            let dim = state.dimension().clone();
            let outcome = state.insert(profile.clone(), &dim)?;
            assignments.set(*kind, outcome.assignment);
            for merge in outcome.merges {
                self.retire_merged_models(*kind, &merge);
                merges.push(DimensionMerge {
                    dimension: *kind,
                    survivor: merge.survivor,
                    absorbed: merge.absorbed,
                });
            }
            // Every cluster in the updated state must have a fetchable model.
            for id in state.cluster_ids() {
                self.ensure_cluster_model(*kind, id);
            }
        }
        reg.profiles.insert(profile.client_id.clone(), profile.clone());

        Ok(RegisterOutcome { assignments, merges })
    }

    /// Warm-starts a missing cluster model from the current global model:
    /// same weights and counters, round reset to 0.
    fn ensure_cluster_model(&self, kind: DimensionKind, id: u64) {
        let key = cluster_key(kind, id);
        if self.clusters.read().contains_key(&key) {
            return;
        }
        let global = self.global.read();
        let mut snapshot = Snapshot::new(ModelMeta::cluster(key.clone()), global.weights.clone());
        snapshot.meta.samples_learned = global.meta.samples_learned;
        snapshot.meta.epochs_learned = global.meta.epochs_learned;
        snapshot.meta.round = 0;
        self.clusters
            .write()
            .entry(key)
            .or_insert_with(|| Arc::new(ModelEntry::new(snapshot)));
    }

    /// Retires the absorbed clusters' models: their keys alias to the
    /// survivor (which keeps its model, being the larger cluster) and any
    /// in-flight update is redirected.
    fn retire_merged_models(&self, kind: DimensionKind, merge: &fedccl_core::clustering::MergeEvent) {
        let survivor_key = cluster_key(kind, merge.survivor);
        for absorbed in &merge.absorbed {
            let absorbed_key = cluster_key(kind, *absorbed);
            let entry = self.clusters.read().get(&absorbed_key).cloned();
            if let Some(entry) = entry {
                // Wait out any in-flight update, then forward.
                let _gate = entry.gate.lock();
                *entry.redirect.write() = Some(survivor_key.clone());
                self.aliases
                    .write()
                    .insert(absorbed_key.clone(), survivor_key.clone());
                self.clusters.write().remove(&absorbed_key);
            } else {
                self.aliases
                    .write()
                    .insert(absorbed_key, survivor_key.clone());
            }
        }
    }

    /// Serves a consistent snapshot of the requested model.
    pub fn request_model(
        &self,
        level: ModelLevel,
        cluster_key: Option<&str>,
    ) -> Result<Snapshot, ServerError> {
        match level {
            ModelLevel::Global => Ok(self.global.read().as_ref().clone()),
            ModelLevel::Cluster => {
                let key = cluster_key.ok_or(ServerError::MissingClusterKey)?;
                Ok(self.cluster_entry(key)?.read().as_ref().clone())
            }
            ModelLevel::Local => Err(ServerError::LocalLevelRejected),
        }
    }

    /// Applies a client update under the target model's exclusive lock and
    /// returns the stored result.
    pub fn handle_model_update(
        &self,
        client_id: &str,
        level: ModelLevel,
        cluster_key: Option<&str>,
        updated: &Snapshot,
        delta: &TrainingDelta,
    ) -> Result<Snapshot, ServerError> {
        match level {
            ModelLevel::Global => {
                self.apply_update(client_id, "global", &self.global, updated, delta)
            }
            ModelLevel::Cluster => {
                let key = cluster_key.ok_or(ServerError::MissingClusterKey)?;
                for _ in 0..8 {
                    let entry = self.cluster_entry(key)?;
                    match self.apply_update_entry(client_id, &entry, updated, delta)? {
                        Applied::Done(snapshot) => return Ok(snapshot),
                        Applied::Redirected => continue,
                    }
                }
                Err(ServerError::UnknownCluster(key.to_string()))
            }
            ModelLevel::Local => Err(ServerError::LocalLevelRejected),
        }
    }

    fn apply_update(
        &self,
        client_id: &str,
        model_key: &str,
        entry: &ModelEntry,
        updated: &Snapshot,
        delta: &TrainingDelta,
    ) -> Result<Snapshot, ServerError> {
        let _gate = entry.gate.lock();
        let base = entry.read();
        let (result, path) = aggregate_models_traced(&base, updated, delta, &self.cfg.aggregation)?;
        *entry.value.write() = Arc::new(result.clone());
        self.update_log.lock().push(UpdateRecord {
            timestamp_ms: (self.clock)(),
            client_id: client_id.to_string(),
            model_key: model_key.to_string(),
            base_round: base.meta.round,
            resulting_round: result.meta.round,
            path,
        });
        Ok(result)
    }

    fn apply_update_entry(
        &self,
        client_id: &str,
        entry: &Arc<ModelEntry>,
        updated: &Snapshot,
        delta: &TrainingDelta,
    ) -> Result<Applied, ServerError> {
        let gate = entry.gate.lock();
        if entry.redirect.read().is_some() {
            drop(gate);
            return Ok(Applied::Redirected);
        }
        let base = entry.read();
        let model_key = base
            .meta
            .cluster_key
            .clone()
            .unwrap_or_else(|| "global".to_string());
        let (result, path) = aggregate_models_traced(&base, updated, delta, &self.cfg.aggregation)?;
        *entry.value.write() = Arc::new(result.clone());
        self.update_log.lock().push(UpdateRecord {
            timestamp_ms: (self.clock)(),
            client_id: client_id.to_string(),
            model_key,
            base_round: base.meta.round,
            resulting_round: result.meta.round,
            path,
        });
        Ok(Applied::Done(result))
    }

    /// Current assignment of a registered client (reflects any merges).
    pub fn assignments(&self, client_id: &str) -> Option<ClusterAssignment> {
        let reg = self.registration.lock();
        if !reg.profiles.contains_key(client_id) {
            return None;
        }
        let mut assignment = ClusterAssignment::new();
        for (kind, state) in &reg.states {
            if let Some(label) = state.label_of(client_id) {
                assignment.set(*kind, label);
            }
        }
        Some(assignment)
    }

    /// Live cluster keys, sorted.
    pub fn cluster_keys(&self) -> Vec<String> {
        self.clusters.read().keys().cloned().collect()
    }

    pub fn update_log(&self) -> Vec<UpdateRecord> {
        self.update_log.lock().clone()
    }

    pub fn update_log_csv(&self) -> String {
        let mut out = String::from(
            "timestamp_ms,client_id,model_key,base_round,resulting_round,path\n",
        );
        for r in self.update_log.lock().iter() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.timestamp_ms,
                r.client_id,
                r.model_key,
                r.base_round,
                r.resulting_round,
                r.path.as_str()
            ));
        }
        out
    }

    /// Clustering assignments as CSV: `client_id,dimension,cluster_id|NOISE`.
    pub fn export_clustering_csv(&self) -> String {
        let reg = self.registration.lock();
        let mut out = String::from("client_id,dimension,cluster_id\n");
        for client_id in reg.profiles.keys() {
            for (kind, state) in &reg.states {
                if let Some(label) = state.label_of(client_id) {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        client_id,
                        kind.as_str(),
                        label.display()
                    ));
                }
            }
        }
        out
    }

    /// Writes every stored model to `dir` in the snapshot format
    /// (`global.snapshot`, `<dimension>-<id>.snapshot`).
    pub fn export_checkpoint(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let write = |name: &str, snapshot: &Snapshot| -> std::io::Result<()> {
            let bytes = serialize_snapshot(snapshot)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
            std::fs::write(dir.join(format!("{name}.snapshot")), bytes)
        };
        write("global", &self.global.read())?;
        for (key, entry) in self.clusters.read().iter() {
            write(&key.replace(':', "-"), &entry.read())?;
        }
        Ok(())
    }

    /// Dispatches a decoded frame and produces the reply message.
    pub fn handle_message(&self, frame: &Frame) -> ServerMessage {
        match &frame.message {
            ServerMessage::RegisterClient { profile } => match self.register_client(profile) {
                Ok(outcome) => ServerMessage::RegisterAck {
                    assignments: outcome.assignments,
                    merges: outcome.merges,
                },
                Err(e) => error_response(e),
            },
            ServerMessage::RequestModel { level, cluster_key } => {
                match self.request_model(*level, cluster_key.as_deref()) {
                    Ok(snapshot) => ServerMessage::ModelResponse { snapshot },
                    Err(e) => error_response(e),
                }
            }
            ServerMessage::UpdateModel {
                level,
                cluster_key,
                snapshot,
                delta,
            } => match self.handle_model_update(
                &frame.sender,
                *level,
                cluster_key.as_deref(),
                snapshot,
                delta,
            ) {
                Ok(stored) => ServerMessage::UpdateAck {
                    accepted_round: stored.meta.round,
                },
                Err(e) => error_response(e),
            },
            other => ServerMessage::ErrorResponse {
                code: ErrorCode::Malformed,
                detail: format!("unexpected message {}", other.tag_name()),
            },
        }
    }
}

enum Applied {
    Done(Snapshot),
    Redirected,
}

fn error_response(e: ServerError) -> ServerMessage {
    ServerMessage::ErrorResponse {
        code: e.code(),
        detail: e.to_string(),
    }
}
