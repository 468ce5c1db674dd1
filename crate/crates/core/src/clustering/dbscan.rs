//! Batch DBSCAN.
//!
//! Semantics: a point is core iff its eps-neighborhood (the point itself
//! included) holds at least `min_pts` members; clusters are the connected
//! components of the core points under eps-adjacency; a non-core point with a
//! core neighbor is a border point of that core's cluster, and everything
//! else is noise.
//!
//! Determinism: profiles are processed in client-id order. Cluster ids are
//! numbered by each component's smallest core client id, and a border point
//! reachable from several clusters attaches to the lowest cluster id — the
//! same labeling the textbook scan produces with a client-id-sorted seed
//! order.

use std::collections::BTreeMap;

use super::{ClientProfile, ClusterError, ClusterLabel, ClusteringDimension};

/// Runs DBSCAN over `profiles` in the given dimension.
pub fn dbscan(
    profiles: &[ClientProfile],
    dim: &ClusteringDimension,
) -> Result<BTreeMap<String, ClusterLabel>, ClusterError> {
    if profiles.is_empty() {
        return Err(ClusterError::EmptyProfiles);
    }
    dim.validate()?;
    for p in profiles {
        p.validate()?;
    }

    let mut sorted: Vec<&ClientProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.client_id.cmp(&b.client_id));
    for pair in sorted.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(ClusterError::DuplicateClient(pair[0].client_id.clone()));
        }
    }

    let analysis = analyze(&sorted, dim);
    let labels = label_by_component_rank(&analysis);
    Ok(sorted
        .iter()
        .zip(labels)
        .map(|(p, label)| (p.client_id.clone(), label))
        .collect())
}

/// Density structure of a point set: neighborhoods, core flags and the core
/// component each core point belongs to. Shared by batch and incremental
/// clustering. `sorted` must be ordered by client id; indices are positional.
pub(super) struct Analysis {
    pub neighbors: Vec<Vec<usize>>,
    pub core: Vec<bool>,
    /// For core points: the smallest core index of their component.
    pub root_of: Vec<usize>,
}

pub(super) fn analyze(sorted: &[&ClientProfile], dim: &ClusteringDimension) -> Analysis {
    let n = sorted.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if dim.kind.distance(sorted[i], sorted[j]) <= dim.eps {
                neighbors[i].push(j);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= dim.min_pts).collect();

    // Union-find over core points; roots stay the minimal index of their
    // component, so `find` doubles as "smallest core client id".
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let root_of: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();

    Analysis {
        neighbors,
        core,
        root_of,
    }
}

/// Labels an analysis with cluster ids numbered by component discovery order
/// (ascending smallest core index): the batch numbering.
fn label_by_component_rank(analysis: &Analysis) -> Vec<ClusterLabel> {
    let n = analysis.core.len();
    let mut component_id: BTreeMap<usize, u64> = BTreeMap::new();
    for i in 0..n {
        if analysis.core[i] {
            component_id.entry(analysis.root_of[i]).or_default();
        }
    }
    // BTreeMap iterates roots ascending; assign ranks in that order.
    for (rank, (_, id)) in component_id.iter_mut().enumerate() {
        *id = rank as u64;
    }

    let mut labels = vec![ClusterLabel::Noise; n];
    for i in 0..n {
        if analysis.core[i] {
            labels[i] = ClusterLabel::Cluster(component_id[&analysis.root_of[i]]);
        }
    }
    for i in 0..n {
        if analysis.core[i] {
            continue;
        }
        // Border tie-break: the reachable component with the smallest root,
        // i.e. the lowest cluster id under this numbering.
        let best_root = analysis.neighbors[i]
            .iter()
            .filter(|&&j| analysis.core[j])
            .map(|&j| analysis.root_of[j])
            .min();
        if let Some(root) = best_root {
            labels[i] = ClusterLabel::Cluster(component_id[&root]);
        }
    }
    labels
}
