use ndarray::{Array3, ArrayView3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{batch_gradients, MdTerm, NetworkParams};
use crate::attack::{pgd, sample_seed, AttackConfig};
use crate::cluster::ClusterDistribution;
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::tensorio::LabeledDataset;

/// Momentum coefficient of the SGD update `v ← μv + g; θ ← θ − η v`.
pub const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.05,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return invalid("epochs and batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return invalid(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return invalid(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Weight of the Mahalanobis penalty.
    pub alpha: f64,
    pub inner_attack: AttackConfig,
}

impl Default for RobustTrainConfig {
    fn default() -> Self {
        Self::from_train(&TrainConfig::default(), 0.1, AttackConfig::pgd_training(0))
    }
}

impl RobustTrainConfig {
    pub fn from_train(train: &TrainConfig, alpha: f64, inner_attack: AttackConfig) -> Self {
        Self {
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            seed: train.seed,
            alpha,
            inner_attack,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train().validate()?;
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return invalid(format!("alpha must be >= 0, got {}", self.alpha));
        }
        self.inner_attack.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy on the inputs the step was taken on.
    pub accuracy: f64,
    /// Mean latent distance to the assigned cluster, when the penalty is on.
    pub mean_mahalanobis: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: Vec<EpochMetrics>,
}

fn check_dataset(dataset: &LabeledDataset) -> Result<(usize, usize, usize)> {
    if dataset.is_empty() {
        return invalid("cannot train on an empty dataset");
    }
    Ok(dataset.image_shape().expect("non-empty dataset has a shape"))
}

type Perturb<'a> = dyn Fn(&NetworkParams, usize, usize) -> Result<Option<Array3<f64>>> + Sync + 'a;

fn run(
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    init: Option<&NetworkParams>,
    perturb: &Perturb<'_>,
    md: Option<(&[Option<&ClusterDistribution>], f64)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (h, w, c) = check_dataset(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // always draw the initial weights so the shuffle stream does not depend
    // on whether a warm start is given
    let fresh = NetworkParams::init(c, h, w, dataset.class_count(), &mut rng)?;
    let mut params = match init {
        Some(p) => {
            if p.input_shape() != (h, w, c) || p.classes() != dataset.class_count() {
                return Err(shape_mismatch(
                    format!("network for {:?} and {} classes", (h, w, c), dataset.class_count()),
                    format!("{:?} and {} classes", p.input_shape(), p.classes()),
                ));
            }
            p.clone()
        }
        None => fresh,
    };
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut md_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let adv: Vec<Option<Array3<f64>>> = chunk
                .par_iter()
                .map(|&i| perturb(&params, epoch, i))
                .collect::<Result<_>>()?;
            let views: Vec<ArrayView3<f64>> = chunk
                .iter()
                .zip(&adv)
                .map(|(&i, a)| match a {
                    Some(a) => a.view(),
                    None => dataset.images()[i].view(),
                })
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels()[i]).collect();
            let clusters: Option<Vec<Option<&ClusterDistribution>>> =
                md.map(|(lookup, _)| chunk.iter().map(|&i| lookup[i]).collect());
            let term = md.zip(clusters.as_ref()).map(|((_, alpha), clusters)| MdTerm {
                clusters,
                alpha,
            });
            let (loss, grad, stats) =
                batch_gradients(&params, &views, &labels, cfg.weight_decay, term)?;
            loss_sum += loss * chunk.len() as f64;
            correct += stats.correct;
            md_sum += stats.md_sum.unwrap_or(0.0);
            for ((p, v), g) in params
                .as_mut_slice()
                .iter_mut()
                .zip(velocity.iter_mut())
                .zip(grad.as_slice())
            {
                *v = MOMENTUM * *v + g;
                *p -= cfg.learning_rate * *v;
            }
        }
        if params.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("weights diverged in epoch {epoch}")));
        }
        let n = dataset.len() as f64;
        let metrics = EpochMetrics {
            epoch,
            mean_loss: loss_sum / n,
            accuracy: correct as f64 / n,
            mean_mahalanobis: md.filter(|(_, a)| *a != 0.0).map(|_| md_sum / n),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.3}{}",
            metrics.mean_loss,
            metrics.accuracy,
            metrics
                .mean_mahalanobis
                .map(|m| format!(" md {m:.4}"))
                .unwrap_or_default()
        );
        history.push(metrics);
    }
    Ok(TrainOutcome { params, history })
}

/// Mini-batch SGD with momentum on the plain cross-entropy objective.
pub fn train_baseline(dataset: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run(dataset, cfg, None, &|_, _, _| Ok(None), None)
}

/// Adversarial training with the Mahalanobis penalty.
///
/// Each step replaces the batch by PGD examples crafted against the current
/// weights and penalizes the distance of their latents to the cluster of the
/// clean sample (`lookup[i]` for dataset index `i`). `init` warm-starts from
/// given weights; otherwise weights are drawn exactly as in
/// [`train_baseline`].
pub fn train_robust(
    dataset: &LabeledDataset,
    lookup: &[Option<&ClusterDistribution>],
    cfg: &RobustTrainConfig,
    init: Option<&NetworkParams>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if lookup.len() != dataset.len() {
        return Err(shape_mismatch(format!("{} cluster entries", dataset.len()), lookup.len()));
    }
    if let Some(i) = lookup.iter().position(|c| c.is_none()) {
        return Err(Error::MissingCluster(i));
    }
    let attack = &cfg.inner_attack;
    let epoch_stride = dataset.len() as u64;
    let perturb = move |params: &NetworkParams, epoch: usize, i: usize| {
        if attack.epsilon == 0.0 {
            return Ok(None);
        }
        let local = AttackConfig {
            seed: sample_seed(attack.seed, (epoch as u64 * epoch_stride) as usize + i),
            ..attack.clone()
        };
        let image = &dataset.images()[i];
        pgd(params, image.view(), dataset.labels()[i], &local).map(Some)
    };
    run(dataset, &cfg.train(), init, &perturb, Some((lookup, cfg.alpha)))
}
