use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::LatentVector;
use crate::error::{invalid, shape_mismatch, Error, Result};

/// Eigenvalues below this fraction of the largest count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Ridge added to full-rank covariances, relative to `trace / k`.
pub const SHRINKAGE: f64 = 1e-6;
/// Quadratic forms more negative than this are treated as a numerical fault.
pub const NEGATIVE_FORM_TOL: f64 = 1e-10;
/// Below this distance the Mahalanobis gradient is taken as zero.
pub const GRADIENT_FLOOR: f64 = 1e-8;

/// Gaussian statistics of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDistribution {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    inverse: DMatrix<f64>,
    pseudo: bool,
}

impl ClusterDistribution {
    /// Assembles a distribution from stored parts. The inverse is trusted.
    pub fn from_parts(
        mean: Vec<f64>,
        covariance: Vec<f64>,
        inverse: Vec<f64>,
        pseudo: bool,
    ) -> Result<Self> {
        let k = mean.len();
        if k == 0 {
            return invalid("distribution needs a positive dimension");
        }
        if covariance.len() != k * k {
            return Err(shape_mismatch(
                format!("{k}x{k} covariance"),
                covariance.len(),
            ));
        }
        if inverse.len() != k * k {
            return Err(shape_mismatch(format!("{k}x{k} inverse"), inverse.len()));
        }
        if mean
            .iter()
            .chain(&covariance)
            .chain(&inverse)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numerical("non-finite distribution entry".into()));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance: DMatrix::from_row_slice(k, k, &covariance),
            inverse: DMatrix::from_row_slice(k, k, &inverse),
            pseudo,
        })
    }

    /// Unit covariance around `mean`.
    pub fn identity(mean: Vec<f64>) -> Result<Self> {
        let k = mean.len();
        let eye: Vec<f64> = DMatrix::<f64>::identity(k, k)
            .transpose()
            .as_slice()
            .to_vec();
        Self::from_parts(mean, eye.clone(), eye, false)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Whether the inverse is a Moore-Penrose pseudo-inverse.
    pub fn is_pseudo(&self) -> bool {
        self.pseudo
    }

    /// Row-major copies, for persistence.
    pub fn covariance_row_major(&self) -> Vec<f64> {
        self.covariance.transpose().as_slice().to_vec()
    }

    pub fn inverse_row_major(&self) -> Vec<f64> {
        self.inverse.transpose().as_slice().to_vec()
    }

    fn displacement(&self, r: &[f64]) -> Result<DVector<f64>> {
        if r.len() != self.dim() {
            return Err(shape_mismatch(
                format!("latent dimension {}", self.dim()),
                r.len(),
            ));
        }
        Ok(DVector::from_column_slice(r) - &self.mean)
    }
}

/// Sample mean and biased covariance of `members`, with its inverse.
///
/// A numerically full-rank covariance gets a small ridge and a Cholesky
/// inverse. A rank-deficient one is kept as is and paired with its
/// Moore-Penrose pseudo-inverse.
pub fn fit_distribution(members: &[LatentVector]) -> Result<ClusterDistribution> {
    if members.len() < 2 {
        return invalid(format!("need at least 2 members, got {}", members.len()));
    }
    let k = super::kmeans::check_points(members)?;
    let n = members.len() as f64;
    let mut mean = DVector::<f64>::zeros(k);
    for m in members {
        mean += DVector::from_column_slice(m);
    }
    mean /= n;
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for m in members {
        let d = DVector::from_column_slice(m) - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= n;
    cov = (&cov + cov.transpose()) * 0.5;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite covariance".into()));
    }

    let eig = SymmetricEigen::new(cov.clone());
    let sigma_max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = RANK_CUTOFF * sigma_max;
    let full_rank = sigma_max > 0.0 && eig.eigenvalues.iter().all(|&v| v > cutoff);

    if full_rank {
        let ridge = SHRINKAGE * cov.trace() / k as f64;
        let shrunk = &cov + DMatrix::<f64>::identity(k, k) * ridge;
        if let Some(chol) = shrunk.clone().cholesky() {
            let inverse = chol.inverse();
            return Ok(ClusterDistribution {
                mean,
                covariance: shrunk,
                inverse: (&inverse + inverse.transpose()) * 0.5,
                pseudo: false,
            });
        }
        log::warn!("cholesky failed on a full-rank covariance, using the pseudo-inverse");
    }
    let inverse = pseudo_inverse(&eig, cutoff);
    Ok(ClusterDistribution {
        mean,
        covariance: cov,
        inverse,
        pseudo: true,
    })
}

// For a symmetric matrix the SVD is the eigendecomposition with |λ| as the
// singular values.
fn pseudo_inverse(eig: &SymmetricEigen<f64, nalgebra::Dyn>, cutoff: f64) -> DMatrix<f64> {
    let k = eig.eigenvalues.len();
    let mut out = DMatrix::<f64>::zeros(k, k);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > cutoff && lam != 0.0 {
            let v = eig.eigenvectors.column(i);
            out.ger(1.0 / lam, &v, &v, 1.0);
        }
    }
    (&out + out.transpose()) * 0.5
}

fn quadratic_form(dist: &ClusterDistribution, d: &DVector<f64>) -> Result<f64> {
    let q = d.dot(&(&dist.inverse * d));
    if !q.is_finite() || q < -NEGATIVE_FORM_TOL {
        return Err(Error::Numerical(format!("negative quadratic form {q:e}")));
    }
    Ok(q.max(0.0))
}

/// `sqrt((r − μ)ᵀ Σ⁻¹ (r − μ))` with the stored (pseudo-)inverse.
pub fn mahalanobis(r: &[f64], dist: &ClusterDistribution) -> Result<f64> {
    let d = dist.displacement(r)?;
    Ok(quadratic_form(dist, &d)?.sqrt())
}

/// Distance and its gradient with respect to `r`. The gradient is zero when
/// the distance is below [`GRADIENT_FLOOR`].
pub fn mahalanobis_with_gradient(r: &[f64], dist: &ClusterDistribution) -> Result<(f64, Vec<f64>)> {
    let d = dist.displacement(r)?;
    let pd = &dist.inverse * &d;
    let md = quadratic_form(dist, &d)?.sqrt();
    if md < GRADIENT_FLOOR {
        return Ok((md, vec![0.0; d.len()]));
    }
    let sym = (&pd + dist.inverse.transpose() * &d) * (0.5 / md);
    Ok((md, sym.as_slice().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn lv(v: Vec<f64>) -> LatentVector {
        LatentVector::new(v)
    }

    #[test]
    fn two_points_mean() {
        let d = fit_distribution(&[lv(vec![1.0, 2.0]), lv(vec![3.0, 6.0])]).unwrap();
        assert_eq!(d.mean(), &[2.0, 4.0]);
        // collinear pair: rank one
        assert!(d.is_pseudo());
    }

    #[test]
    fn sampled_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..10_000)
            .map(|_| lv((0..4).map(|_| StandardNormal.sample(&mut rng)).collect()))
            .collect();
        let d = fit_distribution(&pts).unwrap();
        assert!(!d.is_pseudo());
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((d.covariance()[(i, j)] - target).abs() < 0.1);
            }
        }
    }

    #[test]
    fn planar_members_use_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pts: Vec<_> = (0..50)
            .map(|_| {
                let (s, t): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                lv((0..5).map(|i| 0.3 + s * a[i] + t * b[i]).collect())
            })
            .collect();
        let d = fit_distribution(&pts).unwrap();
        assert!(d.is_pseudo());
        let s = d.covariance();
        let back = s * d.inverse() * s;
        assert!((back - s).norm() / s.norm() < 1e-6);
    }

    #[test]
    fn too_few_members() {
        assert!(fit_distribution(&[lv(vec![1.0])]).is_err());
        assert!(fit_distribution(&[]).is_err());
    }

    #[test]
    fn identity_is_euclidean() {
        let d = ClusterDistribution::identity(vec![1.0, -2.0, 0.5]).unwrap();
        let r = [4.0, 2.0, 0.5];
        assert!((mahalanobis(&r, &d).unwrap() - 5.0).abs() < 1e-9);
        assert_eq!(mahalanobis(d.mean(), &d).unwrap(), 0.0);
        assert!(mahalanobis(&[1.0, 2.0], &d).is_err());
    }

    #[test]
    fn matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k = 6;
            let pts: Vec<_> = (0..40)
                .map(|_| {
                    lv((0..k)
                        .map(|i| rng.gen_range(-1.0..1.0) * (i + 1) as f64)
                        .collect())
                })
                .collect();
            let d = fit_distribution(&pts).unwrap();
            assert!(!d.is_pseudo());
            let r: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let diff = DVector::from_column_slice(&r) - DVector::from_column_slice(d.mean());
            let z = d.covariance().clone().lu().solve(&diff).unwrap();
            let oracle = diff.dot(&z).sqrt();
            assert!((mahalanobis(&r, &d).unwrap() - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..30)
            .map(|_| lv((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let d = fit_distribution(&pts).unwrap();
        let r = vec![0.4, -0.7, 0.2];
        let (_, g) = mahalanobis_with_gradient(&r, &d).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let (mut p, mut m) = (r.clone(), r.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (mahalanobis(&p, &d).unwrap() - mahalanobis(&m, &d).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6);
        }
        let (md, g) = mahalanobis_with_gradient(d.mean(), &d).unwrap();
        assert_eq!(md, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_form_rejected() {
        let d = ClusterDistribution::from_parts(vec![0.0], vec![1.0], vec![-1.0], false).unwrap();
        assert!(mahalanobis(&[1.0], &d).is_err());
        let tiny =
            ClusterDistribution::from_parts(vec![0.0], vec![1.0], vec![-1e-12], false).unwrap();
        assert_eq!(mahalanobis(&[1.0], &tiny).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn zero_only_in_null_space(seed in 0u64..500, scale in 0.1f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..12)
                .map(|_| lv((0..4).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()))
                .collect();
            let d = fit_distribution(&pts).unwrap();
            prop_assert_eq!(mahalanobis(d.mean(), &d).unwrap(), 0.0);
            let mut r = d.mean().to_vec();
            r[seed as usize % 4] += 0.1;
            prop_assert!(mahalanobis(&r, &d).unwrap() > 0.0);
        }

        #[test]
        fn covariance_is_psd(seed in 0u64..500, n in 2usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..n)
                .map(|_| lv((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect();
            let d = fit_distribution(&pts).unwrap();
            let s = d.covariance();
            prop_assert!((s - s.transpose()).norm() < 1e-12);
            let min_eig = SymmetricEigen::new(s.clone()).eigenvalues.min();
            prop_assert!(min_eig > -1e-8);
            if d.is_pseudo() {
                let back = s * d.inverse() * s;
                prop_assert!((back - s).norm() <= 1e-6 * s.norm());
            }
        }
    }
}
