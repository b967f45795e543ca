use super::kmeans::{check_points, distinct_count, kmeans, KMeansResult};
use super::LatentVector;
use crate::error::{invalid, Result};

/// Restarts per candidate count; the lowest WCSS wins.
pub const RESTARTS: usize = 3;
/// A total relative WCSS drop below this means there is no structure.
pub const FLAT_DROP: f64 = 0.05;
/// The mean per-step drop up to the elbow must exceed the mean per-step drop
/// after it by this factor.
pub const ELBOW_SHARPNESS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowSelection {
    pub psi_star: usize,
    /// Best WCSS for ψ = 1..=psi_max_used.
    pub wcss_curve: Vec<f64>,
    pub psi_max_used: usize,
    pub warning: Option<String>,
}

fn restart_seed(seed: u64, psi: usize, restart: usize) -> u64 {
    seed ^ ((psi as u64) << 32) ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Best of [`RESTARTS`] k-means runs at `psi`.
pub fn best_kmeans(points: &[LatentVector], psi: usize, seed: u64) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for restart in 0..RESTARTS {
        let run = kmeans(points, psi, restart_seed(seed, psi, restart))?;
        if best.as_ref().map_or(true, |b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Picks a cluster count from the WCSS curve.
///
/// The candidate is the maximal discrete second difference over interior
/// counts (ties to the smaller count). It is kept only when the curve is
/// not flat overall and the mean per-step drop up to the candidate is at
/// least [`ELBOW_SHARPNESS`] times the mean per-step drop after it;
/// otherwise the answer is one cluster.
pub fn elbow_from_curve(wcss: &[f64]) -> usize {
    let psi_max = wcss.len();
    if psi_max < 2 {
        return 1;
    }
    let w1 = wcss[0];
    if !(w1 > 0.0) || (w1 - wcss[psi_max - 1]) / w1 < FLAT_DROP {
        return 1;
    }
    // W(ψ) for ψ beyond the curve is bounded below by zero
    let at = |psi: usize| if psi <= psi_max { wcss[psi - 1] } else { 0.0 };
    let last = if psi_max == 2 { 2 } else { psi_max - 1 };
    let mut best = 2;
    let mut best_val = f64::NEG_INFINITY;
    for psi in 2..=last {
        let second = at(psi - 1) - 2.0 * at(psi) + at(psi + 1);
        if second > best_val {
            best_val = second;
            best = psi;
        }
    }
    if elbow_sharpness(wcss, best) >= ELBOW_SHARPNESS {
        best
    } else {
        1
    }
}

/// Ratio of the mean per-step WCSS drop over `1..=psi` to the mean drop over
/// `psi..=psi_max`. At the end of the curve the tail is taken to fall to zero.
pub fn elbow_sharpness(wcss: &[f64], psi: usize) -> f64 {
    let n = wcss.len();
    let before = (wcss[0] - wcss[psi - 1]) / (psi - 1) as f64;
    let after = if psi < n {
        (wcss[psi - 1] - wcss[n - 1]) / (n - psi) as f64
    } else {
        wcss[psi - 1]
    };
    if after <= 0.0 {
        f64::INFINITY
    } else {
        before / after
    }
}

/// Runs k-means for every count up to `psi_max` and applies the elbow rule.
pub fn select_cluster_count(
    points: &[LatentVector],
    psi_max: usize,
    seed: u64,
) -> Result<ElbowSelection> {
    check_points(points)?;
    if psi_max < 2 {
        return invalid("psi_max must be at least 2");
    }
    let mut used = psi_max;
    let mut warning = None;
    if points.len() < psi_max + 1 {
        used = points.len().saturating_sub(1).max(1);
    }
    used = used.min(distinct_count(points));
    if used < psi_max {
        let msg = format!(
            "psi_max lowered from {psi_max} to {used} for {} points ({} distinct)",
            points.len(),
            distinct_count(points)
        );
        log::warn!("{msg}");
        warning = Some(msg);
    }
    let wcss_curve = (1..=used)
        .map(|psi| best_kmeans(points, psi, seed).map(|r| r.wcss))
        .collect::<Result<Vec<_>>>()?;
    Ok(ElbowSelection {
        psi_star: elbow_from_curve(&wcss_curve),
        wcss_curve,
        psi_max_used: used,
        warning,
    })
}
