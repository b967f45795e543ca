//! Per-class latent clustering and cluster statistics.

mod elbow;
mod gaussian;
mod kmeans;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

pub use elbow::{
    best_kmeans, elbow_from_curve, elbow_sharpness, select_cluster_count, ElbowSelection,
    ELBOW_SHARPNESS, FLAT_DROP, RESTARTS,
};
pub use gaussian::{
    fit_distribution, mahalanobis, mahalanobis_with_gradient, ClusterDistribution, GRADIENT_FLOOR,
    RANK_CUTOFF, SHRINKAGE,
};
pub use kmeans::{kmeans, wcss, KMeansResult, MAX_LLOYD_ITERS};

use crate::error::{invalid, Result};

/// Feature vector taken just before the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LatentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for LatentVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Stable identity of a cluster across all classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterRef {
    pub class_id: usize,
    pub cluster_index: usize,
}

/// Closest cluster under each cluster's own metric. Ties go to the smallest
/// `(class_id, cluster_index)`, so storage order does not matter.
pub fn match_cluster<'a, I>(r: &[f64], candidates: I) -> Result<(ClusterRef, f64)>
where
    I: IntoIterator<Item = (ClusterRef, &'a ClusterDistribution)>,
{
    let mut best: Option<(ClusterRef, f64)> = None;
    for (id, dist) in candidates {
        let md = mahalanobis(r, dist)?;
        let better = match best {
            None => true,
            Some((bid, bmd)) => md < bmd || (md == bmd && id < bid),
        };
        if better {
            best = Some((id, md));
        }
    }
    match best {
        Some(b) => Ok(b),
        None => invalid("no clusters to match against"),
    }
}

/// Clusters of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub class_id: usize,
    /// Cluster index of each sample, in input order.
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub distributions: Vec<ClusterDistribution>,
    /// Dataset indices of each cluster's members.
    pub member_ids: Vec<Vec<usize>>,
    pub wcss_curve: Vec<f64>,
    /// Count chosen by the elbow rule, before small clusters were merged.
    pub selected_count: usize,
    pub diagnostics: Vec<String>,
}

impl ClusterModel {
    pub fn cluster_count(&self) -> usize {
        self.centers.len()
    }

    /// Selects a count, clusters, folds clusters with fewer than two members
    /// into the nearest sibling and fits a Gaussian to each cluster.
    pub fn fit(
        class_id: usize,
        latents: &[LatentVector],
        ids: &[usize],
        psi_max: usize,
        seed: u64,
    ) -> Result<Self> {
        if latents.len() != ids.len() {
            return invalid("one dataset index per latent is required");
        }
        if latents.len() < 2 {
            return invalid(format!("class {class_id} has fewer than 2 samples"));
        }
        let selection = select_cluster_count(latents, psi_max, seed)?;
        let mut diagnostics: Vec<String> = selection.warning.iter().cloned().collect();
        let psi = selection.psi_star;
        let run = best_kmeans(latents, psi, seed)?;
        let mut assignments = run.assignments;
        let mut centers = run.centers;

        loop {
            let counts = counts(&assignments, centers.len());
            let Some(small) = (0..centers.len()).find(|&c| counts[c] < 2) else {
                break;
            };
            let target = (0..centers.len())
                .filter(|&c| c != small)
                .min_by(|&a, &b| {
                    sq(&centers[small], &centers[a]).total_cmp(&sq(&centers[small], &centers[b]))
                })
                .expect("two samples and one small cluster imply a sibling");
            let msg = format!(
                "class {class_id}: cluster {small} has {} member(s), merged into cluster {target}",
                counts[small]
            );
            log::warn!("{msg}");
            diagnostics.push(msg);
            for a in assignments.iter_mut() {
                if *a == small {
                    *a = target;
                }
                if *a > small {
                    *a -= 1;
                }
            }
            centers.remove(small);
            let target = if target > small { target - 1 } else { target };
            centers[target] = mean_of(latents, &assignments, target);
        }

        let mut member_ids = vec![Vec::new(); centers.len()];
        let mut members = vec![Vec::new(); centers.len()];
        for ((a, &id), lat) in assignments.iter().zip(ids).zip(latents) {
            member_ids[*a].push(id);
            members[*a].push(lat.clone());
        }
        let distributions = members
            .iter()
            .map(|m| fit_distribution(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            class_id,
            assignments,
            centers,
            distributions,
            member_ids,
            wcss_curve: selection.wcss_curve,
            selected_count: psi,
            diagnostics,
        })
    }
}

fn counts(assignments: &[usize], psi: usize) -> Vec<usize> {
    let mut c = vec![0; psi];
    for &a in assignments {
        c[a] += 1;
    }
    c
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(latents: &[LatentVector], assignments: &[usize], cluster: usize) -> Vec<f64> {
    let mut sum = vec![0.0; latents[0].dim()];
    let mut n = 0.0;
    for (l, &a) in latents.iter().zip(assignments) {
        if a == cluster {
            n += 1.0;
            for (s, v) in sum.iter_mut().zip(l.iter()) {
                *s += v;
            }
        }
    }
    sum.into_iter().map(|s| s / n).collect()
}
