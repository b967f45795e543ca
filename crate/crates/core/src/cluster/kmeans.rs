use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LatentVector;
use crate::error::{invalid, shape_mismatch, Result};

/// Lloyd iterations stop after this many rounds even without a fixpoint.
pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster index of every input point.
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squares at the returned centers.
    pub wcss: f64,
    /// WCSS after every Lloyd round.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn distinct_count(points: &[LatentVector]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

pub(crate) fn check_points(points: &[LatentVector]) -> Result<usize> {
    let Some(first) = points.first() else {
        return invalid("cannot cluster an empty point set");
    };
    let k = first.dim();
    if let Some(bad) = points.iter().find(|p| p.dim() != k) {
        return Err(shape_mismatch(format!("latent dimension {k}"), bad.dim()));
    }
    Ok(k)
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// An empty cluster is reseeded with the point farthest from its current
/// center. Iteration stops at an assignment fixpoint or after
/// [`MAX_LLOYD_ITERS`] rounds.
pub fn kmeans(points: &[LatentVector], psi: usize, seed: u64) -> Result<KMeansResult> {
    let dim = check_points(points)?;
    if psi == 0 {
        return invalid("psi must be at least 1");
    }
    let distinct = distinct_count(points);
    if psi > distinct {
        return invalid(format!(
            "psi = {psi} exceeds the {distinct} distinct points"
        ));
    }
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(psi);
    centers.push(points[rng.gen_range(0..n)].to_vec());
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < psi {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            nearest
                .iter()
                .position(|&d| d > 0.0)
                .expect("fewer centers than distinct points")
        };
        centers.push(points[pick].to_vec());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = nearest_center(p, &centers);
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed && iterations > 1 {
            iterations -= 1;
            break;
        }
        repair_empty(points, &mut assignments, &mut centers);
        update_centers(points, &assignments, &mut centers, dim);
        history.push(wcss(points, &assignments, &centers));
        if iterations >= MAX_LLOYD_ITERS {
            break;
        }
    }
    let wcss = *history.last().expect("at least one Lloyd round");
    Ok(KMeansResult {
        assignments,
        centers,
        wcss,
        history,
        iterations,
    })
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn repair_empty(points: &[LatentVector], assignments: &mut [usize], centers: &mut [Vec<f64>]) {
    let psi = centers.len();
    loop {
        let mut counts = vec![0usize; psi];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // farthest point from its own center, among clusters that can spare one
        let far = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centers[assignments[a]])
                    .total_cmp(&sq_dist(&points[b], &centers[assignments[b]]))
                    .then(b.cmp(&a))
            })
            .expect("psi <= distinct points leaves a cluster with two members");
        assignments[far] = empty;
        centers[empty] = points[far].to_vec();
    }
}

fn update_centers(
    points: &[LatentVector],
    assignments: &[usize],
    centers: &mut [Vec<f64>],
    dim: usize,
) {
    let mut sums = vec![vec![0.0; dim]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    for ((center, sum), count) in centers.iter_mut().zip(sums).zip(counts) {
        if count > 0 {
            *center = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
}

pub fn wcss(points: &[LatentVector], assignments: &[usize], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn lv(v: &[f64]) -> LatentVector {
        LatentVector::new(v.to_vec())
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![lv(&[0.0, 1.0]), lv(&[2.0, 3.0]), lv(&[4.0, -1.0])];
        let res = kmeans(&pts, 1, 0).unwrap();
        assert_eq!(res.centers[0], vec![2.0, 1.0]);
        assert!(res.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn duplicated_locations_give_zero_wcss() {
        let locs = [[0.0, 0.0], [5.0, 5.0], [-3.0, 7.0]];
        let pts: Vec<_> = (0..12).map(|i| lv(&locs[i % 3])).collect();
        let res = kmeans(&pts, 3, 4).unwrap();
        assert_eq!(res.wcss, 0.0);
        let mut centers = res.centers.clone();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(
            centers,
            vec![vec![-3.0, 7.0], vec![0.0, 0.0], vec![5.0, 5.0]]
        );
    }

    #[test]
    fn planted_blobs_across_seeds() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let noise = Normal::new(0.0, 0.1).unwrap();
            let pts: Vec<_> = (0..200)
                .map(|i| {
                    let cx = if i % 2 == 0 { -10.0 } else { 10.0 };
                    lv(&[cx + noise.sample(&mut rng), noise.sample(&mut rng)])
                })
                .collect();
            let res = kmeans(&pts, 2, seed).unwrap();
            for target in [-10.0, 10.0] {
                let hit = res
                    .centers
                    .iter()
                    .any(|c| ((c[0] - target).powi(2) + c[1].powi(2)).sqrt() < 0.5);
                assert!(hit, "seed {seed}: no center near {target}");
            }
        }
    }

    #[test]
    fn wcss_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<_> = (0..300)
            .map(|_| {
                lv(&[
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen(),
                ])
            })
            .collect();
        for psi in 1..8 {
            let res = kmeans(&pts, psi, psi as u64).unwrap();
            for w in res.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", res.history);
            }
        }
    }

    #[test]
    fn too_many_clusters_rejected() {
        let pts = vec![lv(&[1.0]), lv(&[1.0]), lv(&[2.0])];
        assert!(kmeans(&pts, 3, 0).is_err());
        assert!(kmeans(&pts, 2, 0).is_ok());
        assert!(kmeans(&[], 1, 0).is_err());
        assert!(kmeans(&[lv(&[1.0]), lv(&[1.0, 2.0])], 1, 0).is_err());
    }
}
