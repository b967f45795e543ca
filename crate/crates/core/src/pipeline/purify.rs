use ndarray::ArrayView3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::srd::SemanticReconstructionDictionary;
use crate::cluster::ClusterRef;
use crate::error::{invalid, Result};
use crate::net::NetworkParams;
use crate::signal::{tikhonov_split, TikhonovConfig};
use crate::sparse::{reconstruct, AdmmConfig, CbpdnSolver};
use crate::tensorio::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurifyConfig {
    /// Tikhonov weight of the low/high split.
    pub lambda_low: f64,
    /// ℓ1 weight of the high-band sparse code.
    pub lambda_l1: f64,
    pub admm: AdmmConfig,
}

impl Default for PurifyConfig {
    fn default() -> Self {
        let lambda_l1 = 0.05;
        Self {
            lambda_low: TikhonovConfig::default().lambda_low,
            lambda_l1,
            admm: AdmmConfig::for_lambda(lambda_l1),
        }
    }
}

impl PurifyConfig {
    pub fn validate(&self) -> Result<()> {
        TikhonovConfig::new(self.lambda_low)?;
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return invalid("lambda_l1 must be finite and >= 0");
        }
        self.admm.validate()
    }

    pub fn tikhonov(&self) -> TikhonovConfig {
        TikhonovConfig {
            lambda_low: self.lambda_low,
        }
    }
}

/// What happened while purifying one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurifyTrace {
    pub entry: ClusterRef,
    pub mahalanobis: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Robust latent extractor, dictionary set and solver settings bound
/// together, with one sparse coder per entry prepared for the image size.
pub struct Purifier<'a> {
    robust: &'a NetworkParams,
    srd: &'a SemanticReconstructionDictionary,
    cfg: PurifyConfig,
    solvers: Vec<CbpdnSolver>,
}

impl<'a> Purifier<'a> {
    pub fn new(
        robust: &'a NetworkParams,
        srd: &'a SemanticReconstructionDictionary,
        cfg: &PurifyConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (h, w, _) = robust.input_shape();
        let solvers = srd
            .entries()
            .iter()
            .map(|e| CbpdnSolver::new(&e.dictionary, h, w))
            .collect::<Result<_>>()?;
        Ok(Self {
            robust,
            srd,
            cfg: cfg.clone(),
            solvers,
        })
    }

    pub fn config(&self) -> &PurifyConfig {
        &self.cfg
    }

    /// `x_low` plus the sparse reconstruction of `x_high` with the atoms of
    /// the cluster nearest to the robust latent of `x`, clamped to `[0, 1]`.
    /// An unconverged solve is kept and flagged in the trace.
    pub fn purify_view(&self, x: ArrayView3<f64>) -> Result<(Image, PurifyTrace)> {
        let latent = self.robust.latent(x)?;
        let (index, md) = self.srd.match_latent(&latent)?;
        let entry = &self.srd.entries()[index];
        let split = tikhonov_split(x, &self.cfg.tikhonov())?;
        let (maps, diag) =
            self.solvers[index].solve(split.high.view(), self.cfg.lambda_l1, &self.cfg.admm)?;
        if !diag.converged {
            log::debug!(
                "sparse code for cluster {:?} stopped after {} iterations",
                entry.id,
                diag.iterations
            );
        }
        let high = reconstruct(&entry.dictionary, &maps)?;
        let (primal, dual) = diag.final_residuals().unwrap_or((0.0, 0.0));
        let out = Image::from_array_clamped(&(split.low + high))?;
        Ok((
            out,
            PurifyTrace {
                entry: entry.id,
                mahalanobis: md,
                iterations: diag.iterations,
                converged: diag.converged,
                primal_residual: primal,
                dual_residual: dual,
            },
        ))
    }

    pub fn purify(&self, x: &Image) -> Result<(Image, PurifyTrace)> {
        self.purify_view(x.view())
    }

    /// Purifies every image in parallel; output order follows the input.
    pub fn purify_batch(&self, images: &[Image]) -> Result<Vec<(Image, PurifyTrace)>> {
        images.par_iter().map(|x| self.purify(x)).collect()
    }
}

/// One-shot form of [`Purifier::purify`].
pub fn purify(
    x: &Image,
    robust: &NetworkParams,
    srd: &SemanticReconstructionDictionary,
    cfg: &PurifyConfig,
) -> Result<(Image, PurifyTrace)> {
    Purifier::new(robust, srd, cfg)?.purify(x)
}
