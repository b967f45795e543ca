//! Convolutional sparse coding: CBPDN and dictionary learning, both solved
//! with ADMM in the Fourier domain.
//!
//! Atoms are `f × f × C` kernels placed at the origin of the image grid and
//! applied by circular convolution. Each atom has one single-channel
//! coefficient map shared by all channels of the image.

mod cbpdn;
mod cdl;
mod linalg;

pub use cbpdn::{cbpdn, cbpdn_objective, CbpdnDiagnostics, CbpdnSolver};
pub use cdl::{learn_dictionary, learn_dictionary_with_report, CdlConfig, CdlReport};

use ndarray::{Array3, Array4, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::signal::FrequencyPlan;
use crate::tensorio::{ArtifactBundle, NdArray};

/// `M` atoms of shape `f × f × C`, each with `‖d_m‖₂ ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// `(M, f, f, C)`
    atoms: Array4<f64>,
}

/// Slack allowed on the unit-norm atom constraint.
pub const NORM_SLACK: f64 = 1e-9;

impl Dictionary {
    pub fn new(atoms: Array4<f64>) -> Result<Self> {
        let (m, f1, f2, c) = atoms.dim();
        if m == 0 || f1 == 0 || c == 0 {
            return invalid("dictionary needs at least one non-empty atom");
        }
        if f1 != f2 {
            return Err(shape_mismatch("square atoms", format!("{f1}x{f2}")));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite atom entry".into()));
        }
        let dict = Self { atoms };
        if let Some((idx, norm)) = dict
            .atom_norms()
            .into_iter()
            .enumerate()
            .find(|(_, n)| *n > 1.0 + NORM_SLACK)
        {
            return invalid(format!("atom {idx} has norm {norm} > 1"));
        }
        Ok(dict)
    }

    /// Seeded Gaussian atoms scaled to unit norm.
    pub fn random(
        atom_count: usize,
        filter_size: usize,
        channels: usize,
        seed: u64,
    ) -> Result<Self> {
        if atom_count == 0 || filter_size == 0 || channels == 0 {
            return invalid("atom_count, filter_size and channels must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atoms =
            Array4::from_shape_fn((atom_count, filter_size, filter_size, channels), |_| {
                StandardNormal.sample(&mut rng)
            });
        for mut atom in atoms.outer_iter_mut() {
            let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
            atom.mapv_inplace(|v| v / norm);
        }
        Self::new(atoms)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.dim().0
    }

    pub fn filter_size(&self) -> usize {
        self.atoms.dim().1
    }

    pub fn channels(&self) -> usize {
        self.atoms.dim().3
    }

    pub fn atoms(&self) -> &Array4<f64> {
        &self.atoms
    }

    pub fn atom_norms(&self) -> Vec<f64> {
        self.atoms
            .outer_iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Checks that the atoms fit inside an `h × w × c` image.
    pub fn check_image(&self, h: usize, w: usize, c: usize) -> Result<()> {
        let f = self.filter_size();
        if c != self.channels() || f > h || f > w {
            return Err(shape_mismatch(
                format!("image with {} channels and sides >= {f}", self.channels()),
                format!("{h}x{w}x{c}"),
            ));
        }
        Ok(())
    }

    /// Spectra of the zero-padded atoms, laid out `[k][c][m]` for the
    /// per-frequency solves.
    pub(crate) fn spectra(&self, plan: &FrequencyPlan) -> Vec<rustfft::num_complex::Complex64> {
        let (m, f, _, c) = self.atoms.dim();
        let n = plan.len();
        let mut out = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); n * c * m];
        let mut kernel = vec![0.0; f * f];
        for mi in 0..m {
            for ci in 0..c {
                for p in 0..f {
                    for q in 0..f {
                        kernel[p * f + q] = self.atoms[[mi, p, q, ci]];
                    }
                }
                let spec = plan.kernel_spectrum(&kernel, f, f);
                for (k, v) in spec.into_iter().enumerate() {
                    out[(k * c + ci) * m + mi] = v;
                }
            }
        }
        out
    }

    pub fn to_bundle(&self, lambda_l1: f64, seed: u64) -> Result<ArtifactBundle> {
        let mut b = ArtifactBundle::new();
        b.set_meta("kind", "dictionary")
            .set_meta("atom_count", self.atom_count() as u64)
            .set_meta("filter_size", self.filter_size() as u64)
            .set_meta("channels", self.channels() as u64)
            .set_meta("lambda_l1", lambda_l1)
            .set_meta("seed", seed);
        b.insert("atoms", self.to_array()?);
        Ok(b)
    }

    pub fn to_array(&self) -> Result<NdArray> {
        NdArray::f64(
            self.atoms.shape().to_vec(),
            self.atoms.iter().copied().collect(),
        )
    }

    pub fn from_array(array: &NdArray) -> Result<Self> {
        let data = array
            .as_f64()
            .ok_or_else(|| Error::Format("atoms must be f64".into()))?;
        let shape = array.shape();
        if shape.len() != 4 {
            return Err(shape_mismatch("rank-4 atom tensor", format!("{shape:?}")));
        }
        let atoms = Array4::from_shape_vec((shape[0], shape[1], shape[2], shape[3]), data.to_vec())
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::new(atoms)
    }

    pub fn from_bundle(bundle: &ArtifactBundle) -> Result<Self> {
        bundle.expect_kind("dictionary")?;
        Self::from_array(bundle.array("atoms")?)
    }
}

/// One coefficient map per atom, each the spatial size of the coded image.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMaps {
    /// `(M, H, W)`
    maps: Array3<f64>,
}

impl CoefficientMaps {
    pub fn new(maps: Array3<f64>) -> Result<Self> {
        if maps.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite coefficient".into()));
        }
        Ok(Self { maps })
    }

    pub fn zeros(atom_count: usize, height: usize, width: usize) -> Self {
        Self {
            maps: Array3::zeros((atom_count, height, width)),
        }
    }

    pub fn maps(&self) -> &Array3<f64> {
        &self.maps
    }

    pub fn maps_mut(&mut self) -> &mut Array3<f64> {
        &mut self.maps
    }

    pub fn l1_norm(&self) -> f64 {
        self.maps.iter().map(|v| v.abs()).sum()
    }

    /// Fraction of entries with magnitude at most `threshold`.
    pub fn sparsity(&self, threshold: f64) -> f64 {
        let zeros = self.maps.iter().filter(|v| v.abs() <= threshold).count();
        zeros as f64 / self.maps.len().max(1) as f64
    }
}

/// ADMM parameters shared by the coding and dictionary solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Residual balancing: ρ is doubled or halved when one residual exceeds
    /// the other tenfold.
    pub rho_adapt: bool,
}

impl AdmmConfig {
    /// Defaults with `ρ = 10·λ + 0.1`.
    pub fn for_lambda(lambda_l1: f64) -> Self {
        Self {
            rho: 10.0 * lambda_l1 + 0.1,
            max_iters: 500,
            tol_primal: 1e-4,
            tol_dual: 1e-4,
            rho_adapt: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return invalid("rho must be positive");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return invalid("tolerances must be positive");
        }
        Ok(())
    }
}

/// `sign(v) · max(|v| − κ, 0)`.
pub fn shrink(v: f64, kappa: f64) -> f64 {
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

/// Elementwise soft threshold, the proximal map of `κ‖·‖₁`.
pub fn soft_threshold(v: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if !(kappa >= 0.0) {
        return invalid(format!("threshold must be non-negative, got {kappa}"));
    }
    Ok(v.iter().map(|&x| shrink(x, kappa)).collect())
}

/// `Σ_m d_m * r_m` for every channel, returned as `(H, W, C)`.
pub fn reconstruct(dict: &Dictionary, maps: &CoefficientMaps) -> Result<Array3<f64>> {
    let (m, h, w) = maps.maps.dim();
    if m != dict.atom_count() {
        return Err(shape_mismatch(
            format!("{} coefficient maps", dict.atom_count()),
            m,
        ));
    }
    let c = dict.channels();
    dict.check_image(h, w, c)?;
    let plan = FrequencyPlan::new(h, w);
    let n = plan.len();
    let d_hat = dict.spectra(&plan);
    let r_hat: Vec<_> = maps
        .maps
        .outer_iter()
        .map(|r| plan.forward(r.as_standard_layout().as_slice().expect("standard layout")))
        .collect();
    let mut out = Array3::zeros((h, w, c));
    let mut spec = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); n];
    for ci in 0..c {
        for (k, s) in spec.iter_mut().enumerate() {
            *s = (0..m)
                .map(|mi| d_hat[(k * c + ci) * m + mi] * r_hat[mi][k])
                .sum();
        }
        let plane = plan.inverse_real(&spec);
        for (idx, v) in plane.into_iter().enumerate() {
            out[[idx / w, idx % w, ci]] = v;
        }
    }
    Ok(out)
}

/// `max_m ‖Σ_c correlate(x_c, d_{m,c})‖_∞`: the smallest ℓ1 weight for which
/// all-zero maps solve the CBPDN problem.
pub fn lambda_max(dict: &Dictionary, x: ArrayView3<'_, f64>) -> Result<f64> {
    let (h, w, c) = x.dim();
    dict.check_image(h, w, c)?;
    let plan = FrequencyPlan::new(h, w);
    let m = dict.atom_count();
    let d_hat = dict.spectra(&plan);
    let s_hat: Vec<_> = (0..c)
        .map(|ci| {
            let plane: Vec<f64> = x.slice(ndarray::s![.., .., ci]).iter().copied().collect();
            plan.forward(&plane)
        })
        .collect();
    let mut best = 0.0f64;
    let mut spec = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); plan.len()];
    for mi in 0..m {
        for (k, s) in spec.iter_mut().enumerate() {
            *s = (0..c)
                .map(|ci| d_hat[(k * c + ci) * m + mi].conj() * s_hat[ci][k])
                .sum();
        }
        let corr = plan.inverse_real(&spec);
        best = corr.iter().fold(best, |acc, v| acc.max(v.abs()));
    }
    Ok(best)
}
