//! The three stages end to end: dictionary set construction, robust
//! training (see [`crate::net::train_robust`]) and purification, plus the
//! evaluation harness.

mod evaluate;
mod purify;
mod srd;

pub use evaluate::{evaluate, ConditionRow, EvaluationReport, SampleRecord, CLEAN};
pub use purify::{purify, Purifier, PurifyConfig, PurifyTrace};
pub use srd::{
    build_srd, extract_latents, ClassSummary, SemanticReconstructionDictionary, SrdConfig,
    SrdEntry, SRD_KIND,
};

use crate::attack::{pgd, sample_seed, AttackConfig};
use crate::cluster::mahalanobis;
use crate::error::{invalid, Result};
use crate::net::NetworkParams;
use crate::tensorio::LabeledDataset;

/// Mean distance of the latents of PGD examples to the cluster each clean
/// sample falls into, measured with `params`.
///
/// The reference cluster is the one matched by the clean latent under
/// `reference`, which keeps held-out samples comparable between models.
pub fn adversarial_latent_distance(
    params: &NetworkParams,
    reference: &NetworkParams,
    srd: &SemanticReconstructionDictionary,
    dataset: &LabeledDataset,
    attack: &AttackConfig,
) -> Result<f64> {
    use rayon::prelude::*;
    if dataset.is_empty() {
        return invalid("cannot measure on an empty dataset");
    }
    let total: f64 = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let x = dataset.images()[i].view();
            let (entry, _) = srd.match_latent(&reference.latent(x)?)?;
            let local = AttackConfig {
                seed: sample_seed(attack.seed, i),
                ..attack.clone()
            };
            let adv = pgd(params, x, dataset.labels()[i], &local)?;
            mahalanobis(&params.latent(adv.view())?, &srd.entries()[entry].distribution)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok(total / dataset.len() as f64)
}
