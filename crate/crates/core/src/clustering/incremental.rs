//! Incremental DBSCAN insertion.
//!
//! [`ClusteringState`] owns one dimension's clustering and absorbs new
//! profiles one at a time. After every insertion the labeling matches batch
//! DBSCAN over the accumulated profile set up to cluster renaming, while
//! established cluster ids stay stable: a brand-new component mints a fresh
//! id, and when an insertion density-connects existing clusters they merge
//! under the id of the larger one, reported as a [`MergeEvent`] so no
//! membership is ever dropped silently.

use std::collections::{BTreeMap, BTreeSet};

use super::dbscan::{analyze, dbscan};
use super::{ClientProfile, ClusterError, ClusterLabel, ClusteringDimension};

/// Cluster ids combined by one insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeEvent {
    /// Id that keeps existing: the larger-membership cluster (ties favor the
    /// lower id).
    pub survivor: u64,
    pub absorbed: Vec<u64>,
}

/// A label that changed for an already-present client (noise promoted to
/// border, border promoted to core member of a merged cluster, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelChange {
    pub client_id: String,
    pub from: ClusterLabel,
    pub to: ClusterLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertOutcome {
    /// Label assigned to the inserted profile.
    pub assignment: ClusterLabel,
    /// Labels of pre-existing profiles that changed, in client-id order.
    pub changed: Vec<LabelChange>,
    pub merges: Vec<MergeEvent>,
}

/// Evolving clustering for one dimension.
#[derive(Debug, Clone)]
pub struct ClusteringState {
    dim: ClusteringDimension,
    profiles: BTreeMap<String, ClientProfile>,
    labels: BTreeMap<String, ClusterLabel>,
    next_cluster_id: u64,
}

impl ClusteringState {
    pub fn new(dim: ClusteringDimension) -> Result<Self, ClusterError> {
        dim.validate()?;
        Ok(Self {
            dim,
            profiles: BTreeMap::new(),
            labels: BTreeMap::new(),
            next_cluster_id: 0,
        })
    }

    /// Seeds the state from a batch run; ids match [`dbscan`]'s numbering.
    pub fn from_batch(
        profiles: &[ClientProfile],
        dim: ClusteringDimension,
    ) -> Result<Self, ClusterError> {
        let labels = dbscan(profiles, &dim)?;
        let next_cluster_id = labels
            .values()
            .filter_map(ClusterLabel::id)
            .max()
            .map_or(0, |max| max + 1);
        Ok(Self {
            dim,
            profiles: profiles
                .iter()
                .map(|p| (p.client_id.clone(), p.clone()))
                .collect(),
            labels,
            next_cluster_id,
        })
    }

    pub fn dimension(&self) -> &ClusteringDimension {
        &self.dim
    }

    pub fn labels(&self) -> &BTreeMap<String, ClusterLabel> {
        &self.labels
    }

    pub fn label_of(&self, client_id: &str) -> Option<ClusterLabel> {
        self.labels.get(client_id).copied()
    }

    pub fn contains(&self, client_id: &str) -> bool {
        self.profiles.contains_key(client_id)
    }

    pub fn cluster_ids(&self) -> BTreeSet<u64> {
        self.labels.values().filter_map(ClusterLabel::id).collect()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Inserts a profile and reconciles the clustering.
    ///
    /// `dim` must equal the dimension the state was built with; passing the
    /// parameters again guards against routing a profile into the wrong
    /// store.
    pub fn insert(
        &mut self,
        profile: ClientProfile,
        dim: &ClusteringDimension,
    ) -> Result<InsertOutcome, ClusterError> {
        if *dim != self.dim {
            return Err(ClusterError::DimensionMismatch {
                expected: self.dim.clone(),
                found: dim.clone(),
            });
        }
        profile.validate()?;
        if self.profiles.contains_key(&profile.client_id) {
            return Err(ClusterError::DuplicateClient(profile.client_id));
        }

        let old_labels = self.labels.clone();
        let inserted_id = profile.client_id.clone();
        self.profiles.insert(inserted_id.clone(), profile);

        let sorted: Vec<&ClientProfile> = self.profiles.values().collect();
        let ids: Vec<&String> = self.profiles.keys().collect();
        let analysis = analyze(&sorted, &self.dim);

        // Old cores anchor component identity: map each new component root to
        // the distinct prior cluster ids its previously-core members carried.
        let n = sorted.len();
        let mut carried: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
        for i in 0..n {
            if !analysis.core[i] {
                continue;
            }
            let root = analysis.root_of[i];
            let entry = carried.entry(root).or_default();
            if let Some(ClusterLabel::Cluster(id)) = old_labels.get(ids[i]) {
                entry.insert(*id);
            }
        }

        let mut old_member_count: BTreeMap<u64, usize> = BTreeMap::new();
        for label in old_labels.values() {
            if let ClusterLabel::Cluster(id) = label {
                *old_member_count.entry(*id).or_default() += 1;
            }
        }

        let mut merges = Vec::new();
        let mut root_id: BTreeMap<usize, u64> = BTreeMap::new();
        for (root, ids_carried) in &carried {
            let id = match ids_carried.len() {
                0 => {
                    let fresh = self.next_cluster_id;
                    self.next_cluster_id += 1;
                    fresh
                }
                1 => *ids_carried.iter().next().unwrap(),
                _ => {
                    let survivor = *ids_carried
                        .iter()
                        .max_by_key(|id| (old_member_count.get(id).copied().unwrap_or(0), std::cmp::Reverse(**id)))
                        .unwrap();
                    merges.push(MergeEvent {
                        survivor,
                        absorbed: ids_carried.iter().copied().filter(|id| *id != survivor).collect(),
                    });
                    survivor
                }
            };
            root_id.insert(*root, id);
        }

        // Relabel: cores by component, non-cores by the canonical border rule
        // (reachable component with the smallest root index, i.e. smallest
        // minimal core client id — the batch tie-break).
        let mut new_labels: BTreeMap<String, ClusterLabel> = BTreeMap::new();
        for i in 0..n {
            let label = if analysis.core[i] {
                ClusterLabel::Cluster(root_id[&analysis.root_of[i]])
            } else {
                analysis.neighbors[i]
                    .iter()
                    .filter(|&&j| analysis.core[j])
                    .map(|&j| analysis.root_of[j])
                    .min()
                    .map_or(ClusterLabel::Noise, |root| ClusterLabel::Cluster(root_id[&root]))
            };
            new_labels.insert(ids[i].clone(), label);
        }

        let assignment = new_labels[&inserted_id];
        let changed = old_labels
            .iter()
            .filter_map(|(id, old)| {
                let new = new_labels[id];
                (new != *old).then(|| LabelChange {
                    client_id: id.clone(),
                    from: *old,
                    to: new,
                })
            })
            .collect();

        self.labels = new_labels;
        Ok(InsertOutcome {
            assignment,
            changed,
            merges,
        })
    }
}
