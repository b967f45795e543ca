//! Seeded grayscale shape datasets.
//!
//! Each class is drawn from one fixed shape family, in this order:
//!
//! | class | family            | jitter                                   |
//! |-------|-------------------|------------------------------------------|
//! | 0     | horizontal bar    | offset, tilt, thickness                  |
//! | 1     | vertical bar      | offset, tilt, thickness                  |
//! | 2     | ring              | center, radius, width                    |
//! | 3     | cross             | center, arm thickness                    |
//! | 4     | linear gradient   | direction, offset                        |
//! | 5     | checkerboard      | phase, period                            |
//! | 6     | diagonal bar      | offset, tilt, thickness                  |
//! | 7     | filled disc       | center, radius                           |
//!
//! Background and foreground levels are jittered around `0.5 ∓ contrast/2`,
//! then Gaussian noise is added and the result clipped to `[0, 1]`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{Image, LabeledDataset};
use crate::error::{invalid, Result};

/// Number of shape families available, hence the largest supported class count.
pub const SHAPE_FAMILIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShapeFamily {
    HorizontalBar,
    VerticalBar,
    Ring,
    Cross,
    Gradient,
    Checker,
    DiagonalBar,
    Disc,
}

impl ShapeFamily {
    const ALL: [ShapeFamily; SHAPE_FAMILIES] = [
        ShapeFamily::HorizontalBar,
        ShapeFamily::VerticalBar,
        ShapeFamily::Ring,
        ShapeFamily::Cross,
        ShapeFamily::Gradient,
        ShapeFamily::Checker,
        ShapeFamily::DiagonalBar,
        ShapeFamily::Disc,
    ];
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub class_count: usize,
    pub per_class: usize,
    pub side: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Mean foreground minus background level.
    #[serde(default = "default_contrast")]
    pub contrast: f64,
}

fn default_contrast() -> f64 {
    0.6
}

impl SynthParams {
    pub fn new(
        class_count: usize,
        per_class: usize,
        side: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            class_count,
            per_class,
            side,
            noise_sigma,
            seed,
            contrast: default_contrast(),
        }
    }
}

/// Generates `class_count × per_class` images, interleaving classes
/// (sample `i` has label `i % class_count`).
pub fn generate_synthetic_dataset(
    class_count: usize,
    per_class: usize,
    side: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    generate(&SynthParams::new(
        class_count,
        per_class,
        side,
        noise_sigma,
        seed,
    ))
}

pub fn generate(params: &SynthParams) -> Result<LabeledDataset> {
    let SynthParams {
        class_count,
        per_class,
        side,
        noise_sigma,
        seed,
        contrast,
    } = *params;
    if class_count < 2 {
        return invalid("class_count must be at least 2");
    }
    if class_count > SHAPE_FAMILIES {
        return invalid(format!(
            "class_count {class_count} exceeds the {SHAPE_FAMILIES} available shape families"
        ));
    }
    if side < 8 {
        return invalid("side must be at least 8 pixels");
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return invalid("noise_sigma must be a finite non-negative value");
    }
    if !(0.0..=1.0).contains(&contrast) {
        return invalid("contrast must lie in [0, 1]");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut images = Vec::with_capacity(class_count * per_class);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for _ in 0..per_class {
        for (class_id, &family) in ShapeFamily::ALL[..class_count].iter().enumerate() {
            let shape = render(family, side, &mut rng);
            let spread = 0.05 * contrast;
            let background = 0.5 - contrast / 2.0 + rng.gen_range(-spread..=spread);
            let foreground = 0.5 + contrast / 2.0 + rng.gen_range(-spread..=spread);
            let data = shape
                .into_iter()
                .map(|m| {
                    let v = background + (foreground - background) * m;
                    let n = if noise_sigma > 0.0 {
                        noise_sigma * noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (v + n).clamp(0.0, 1.0)
                })
                .collect();
            images.push(Image::new(side, side, 1, data)?);
            labels.push(class_id);
        }
    }
    LabeledDataset::new(images, labels, class_count)
}

/// Soft step from 0 (for `d ≥ 0.5`) to 1 (for `d ≤ -0.5`) across a pixel.
fn coverage(signed_distance: f64) -> f64 {
    (0.5 - signed_distance).clamp(0.0, 1.0)
}

fn render(family: ShapeFamily, side: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = side as f64;
    let c = (s - 1.0) / 2.0;
    let shift = s / 8.0;
    let mut jit = |scale: f64| rng.gen_range(-scale..=scale);
    let mut mask = vec![0.0; side * side];
    let mut fill = |f: &dyn Fn(f64, f64) -> f64| {
        for i in 0..side {
            for j in 0..side {
                mask[i * side + j] = f(i as f64, j as f64);
            }
        }
    };
    match family {
        ShapeFamily::HorizontalBar | ShapeFamily::VerticalBar | ShapeFamily::DiagonalBar => {
            let base = match family {
                ShapeFamily::HorizontalBar => 0.0,
                ShapeFamily::VerticalBar => std::f64::consts::FRAC_PI_2,
                _ => std::f64::consts::FRAC_PI_4,
            };
            let angle = base + jit(0.2);
            let offset = jit(shift);
            let half = s / 10.0 + jit(s / 40.0);
            let (sn, cs) = angle.sin_cos();
            fill(&|i, j| {
                // distance from the bar's center line
                let d = -(i - c) * cs + (j - c) * sn - offset;
                coverage(d.abs() - half)
            });
        }
        ShapeFamily::Ring => {
            let (ci, cj) = (c + jit(shift), c + jit(shift));
            let radius = s / 4.0 + jit(s / 20.0);
            let half = s / 16.0 + jit(s / 64.0);
            fill(&|i, j| {
                let r = ((i - ci).powi(2) + (j - cj).powi(2)).sqrt();
                coverage((r - radius).abs() - half)
            });
        }
        ShapeFamily::Cross => {
            let (ci, cj) = (c + jit(shift), c + jit(shift));
            let half = s / 12.0 + jit(s / 48.0);
            fill(&|i, j| coverage((i - ci).abs().min((j - cj).abs()) - half));
        }
        ShapeFamily::Gradient => {
            let angle = std::f64::consts::FRAC_PI_4 * 3.0 + jit(0.3);
            let offset = jit(shift);
            let (sn, cs) = angle.sin_cos();
            fill(&|i, j| {
                let t = ((i - c) * sn + (j - c) * cs - offset) / s + 0.5;
                t.clamp(0.0, 1.0)
            });
        }
        ShapeFamily::Checker => {
            let period = (s / 4.0) * (1.0 + jit(0.15));
            let (pi, pj) = (rng.gen_range(0.0..period), rng.gen_range(0.0..period));
            fill(&|i, j| {
                let a = ((i + pi) / period).floor() as i64;
                let b = ((j + pj) / period).floor() as i64;
                if (a + b).rem_euclid(2) == 0 {
                    1.0
                } else {
                    0.0
                }
            });
        }
        ShapeFamily::Disc => {
            let (ci, cj) = (c + jit(shift), c + jit(shift));
            let radius = s / 5.0 + jit(s / 20.0);
            fill(&|i, j| coverage(((i - ci).powi(2) + (j - cj).powi(2)).sqrt() - radius));
        }
    }
    mask
}
