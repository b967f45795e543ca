//! Gradient attacks: FGSM, BIM and PGD under l2 or l∞ budgets.
//!
//! All three share one step: move along the gradient direction (sign for
//! l∞, unit-normalized for l2), project back onto the ε-ball around the
//! clean input, then clamp to `[0, 1]`.

use ndarray::{Array3, ArrayView3, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_mismatch, Result};
use crate::tensorio::Image;

/// Anything that can report a loss and its input gradient.
pub trait GradientModel: Sync {
    fn loss_and_input_gradient(&self, x: ArrayView3<f64>, y: usize) -> Result<(f64, Array3<f64>)>;

    fn loss(&self, x: ArrayView3<f64>, y: usize) -> Result<f64> {
        Ok(self.loss_and_input_gradient(x, y)?.0)
    }

    fn predict(&self, x: ArrayView3<f64>) -> Result<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Bim,
    Pgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

impl std::fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fgsm => "fgsm",
            Self::Bim => "bim",
            Self::Pgd => "pgd",
        })
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::L2 => "l2",
            Self::Linf => "linf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub norm: Norm,
    pub epsilon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Per-step size. Defaults: ε for FGSM, ε/10 for BIM, 2.5ε/steps for PGD.
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_steps() -> usize {
    10
}

impl AttackConfig {
    pub fn fgsm(norm: Norm, epsilon: f64) -> Self {
        Self {
            method: AttackMethod::Fgsm,
            norm,
            epsilon,
            steps: 1,
            step_size: None,
            seed: 0,
        }
    }

    pub fn bim(norm: Norm, epsilon: f64, steps: usize) -> Self {
        Self {
            method: AttackMethod::Bim,
            steps,
            ..Self::fgsm(norm, epsilon)
        }
    }

    pub fn pgd(norm: Norm, epsilon: f64, steps: usize, seed: u64) -> Self {
        Self {
            method: AttackMethod::Pgd,
            steps,
            seed,
            ..Self::fgsm(norm, epsilon)
        }
    }

    /// Ten l2 steps inside a 0.3 ball.
    pub fn pgd_training(seed: u64) -> Self {
        Self::pgd(Norm::L2, 0.3, 10, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return invalid(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.steps == 0 {
            return invalid("steps must be at least 1");
        }
        if let Some(s) = self.step_size {
            if !(s >= 0.0) || !s.is_finite() {
                return invalid(format!("step_size must be finite and >= 0, got {s}"));
            }
        }
        Ok(())
    }

    /// Steps actually taken; FGSM always takes one.
    pub fn effective_steps(&self) -> usize {
        match self.method {
            AttackMethod::Fgsm => 1,
            _ => self.steps,
        }
    }

    pub fn effective_step_size(&self) -> f64 {
        self.step_size.unwrap_or(match self.method {
            AttackMethod::Fgsm => self.epsilon,
            AttackMethod::Bim => self.epsilon / 10.0,
            AttackMethod::Pgd => 2.5 * self.epsilon / self.steps as f64,
        })
    }

    /// Short label such as `fgsm-l2-0.08`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.method, self.norm, self.epsilon)
    }
}

/// Distance between two arrays in the given norm.
pub fn norm_distance(a: ArrayView3<f64>, b: ArrayView3<f64>, norm: Norm) -> f64 {
    let diffs = a.iter().zip(b.iter()).map(|(x, y)| x - y);
    match norm {
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Norm::Linf => diffs.fold(0.0, |m, d| m.max(d.abs())),
    }
}

fn project_ball(x: &mut Array3<f64>, center: ArrayView3<f64>, norm: Norm, epsilon: f64) {
    match norm {
        Norm::Linf => {
            Zip::from(x).and(center).for_each(|v, &c| {
                *v = v.clamp(c - epsilon, c + epsilon);
            });
        }
        Norm::L2 => {
            let dist = norm_distance(x.view(), center, Norm::L2);
            if dist > epsilon {
                let scale = if dist > 0.0 { epsilon / dist } else { 0.0 };
                Zip::from(x).and(center).for_each(|v, &c| {
                    *v = c + (*v - c) * scale;
                });
            }
        }
    }
}

fn clamp_unit(x: &mut Array3<f64>) {
    x.mapv_inplace(|v| v.clamp(0.0, 1.0));
}

/// One signed or normalized gradient step from `current`, projected around
/// `origin`. A zero gradient leaves `current` as is.
fn step(
    current: &Array3<f64>,
    grad: &Array3<f64>,
    origin: ArrayView3<f64>,
    norm: Norm,
    epsilon: f64,
    step_size: f64,
) -> Array3<f64> {
    let mut next = current.clone();
    match norm {
        Norm::Linf => {
            Zip::from(&mut next).and(grad).for_each(|v, &g| {
                if g > 0.0 {
                    *v += step_size;
                } else if g < 0.0 {
                    *v -= step_size;
                }
            });
        }
        Norm::L2 => {
            let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gn > 0.0 && gn.is_finite() {
                let scale = step_size / gn;
                Zip::from(&mut next).and(grad).for_each(|v, &g| *v += scale * g);
            }
        }
    }
    project_ball(&mut next, origin, norm, epsilon);
    clamp_unit(&mut next);
    next
}

fn iterate<M: GradientModel + ?Sized>(
    model: &M,
    start: Array3<f64>,
    origin: ArrayView3<f64>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Array3<f64>> {
    let mut x = start;
    let size = cfg.effective_step_size();
    for _ in 0..cfg.effective_steps() {
        let (_, grad) = model.loss_and_input_gradient(x.view(), y)?;
        x = step(&x, &grad, origin, cfg.norm, cfg.epsilon, size);
    }
    Ok(x)
}

fn check(x: &ArrayView3<f64>, cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("attack input must lie in [0, 1]");
    }
    Ok(())
}

/// Single gradient step of size ε.
pub fn fgsm<M: GradientModel + ?Sized>(
    model: &M,
    x: ArrayView3<f64>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Array3<f64>> {
    check(&x, cfg)?;
    if cfg.epsilon == 0.0 {
        return Ok(x.to_owned());
    }
    let one = AttackConfig {
        method: AttackMethod::Fgsm,
        step_size: Some(cfg.epsilon),
        ..cfg.clone()
    };
    iterate(model, x.to_owned(), x, y, &one)
}

/// Iterated FGSM with per-step projection.
pub fn bim<M: GradientModel + ?Sized>(
    model: &M,
    x: ArrayView3<f64>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Array3<f64>> {
    check(&x, cfg)?;
    if cfg.epsilon == 0.0 {
        return Ok(x.to_owned());
    }
    iterate(model, x.to_owned(), x, y, cfg)
}

/// Uniform point of the ε-ball around `x`, clamped to the unit box.
pub fn random_start(x: ArrayView3<f64>, norm: Norm, epsilon: f64, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.to_owned();
    match norm {
        Norm::Linf => {
            for v in out.iter_mut() {
                *v += rng.gen_range(-epsilon..=epsilon);
            }
        }
        Norm::L2 => {
            let dir: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
            let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let radius = epsilon * rng.gen::<f64>().powf(1.0 / x.len() as f64);
            if len > 0.0 {
                for (v, d) in out.iter_mut().zip(&dir) {
                    *v += radius * d / len;
                }
            }
        }
    }
    project_ball(&mut out, x, norm, epsilon);
    clamp_unit(&mut out);
    out
}

/// BIM from a seeded random start inside the ball.
pub fn pgd<M: GradientModel + ?Sized>(
    model: &M,
    x: ArrayView3<f64>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Array3<f64>> {
    check(&x, cfg)?;
    if cfg.epsilon == 0.0 {
        return Ok(x.to_owned());
    }
    let start = random_start(x, cfg.norm, cfg.epsilon, cfg.seed);
    iterate(model, start, x, y, cfg)
}

/// Dispatches on `cfg.method`.
pub fn attack<M: GradientModel + ?Sized>(
    model: &M,
    x: ArrayView3<f64>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Array3<f64>> {
    match cfg.method {
        AttackMethod::Fgsm => fgsm(model, x, y, cfg),
        AttackMethod::Bim => bim(model, x, y, cfg),
        AttackMethod::Pgd => pgd(model, x, y, cfg),
    }
}

/// Seed of sample `index` in a batch attack.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(0xD1B5_4A32_D192_ED03)
}

/// Attacks every image, in parallel. PGD draws each sample's start from
/// [`sample_seed`].
pub fn attack_batch<M: GradientModel + ?Sized>(
    model: &M,
    images: &[Image],
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<Vec<Image>> {
    if images.len() != labels.len() {
        return Err(shape_mismatch(format!("{} labels", images.len()), labels.len()));
    }
    cfg.validate()?;
    (0..images.len())
        .into_par_iter()
        .map(|i| {
            let local = AttackConfig {
                seed: sample_seed(cfg.seed, i),
                ..cfg.clone()
            };
            let adv = attack(model, images[i].view(), labels[i], &local)?;
            Image::from_array_clamped(&adv)
        })
        .collect()
}

#[cfg(test)]
mod tests;
