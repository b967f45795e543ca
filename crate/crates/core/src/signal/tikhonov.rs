use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use super::FrequencyPlan;
use crate::error::{invalid, Result};
use crate::tensorio::Image;

/// Smoothing weight of the low-pass split. Boundaries are always circular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TikhonovConfig {
    pub lambda_low: f64,
}

impl Default for TikhonovConfig {
    fn default() -> Self {
        Self { lambda_low: 5.0 }
    }
}

impl TikhonovConfig {
    pub fn new(lambda_low: f64) -> Result<Self> {
        let cfg = Self { lambda_low };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_low >= 0.0 && self.lambda_low.is_finite()) {
            return invalid(format!(
                "lambda_low must be finite and >= 0, got {}",
                self.lambda_low
            ));
        }
        Ok(())
    }
}

/// Low and high frequency bands, `(H, W, C)`, unclamped.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySplit {
    pub low: Array3<f64>,
    pub high: Array3<f64>,
}

/// `Σ_j |Ĝ_j(ω)|²` for circular forward differences along rows and columns,
/// i.e. `(2 - 2 cos ωᵤ) + (2 - 2 cos ωᵥ)` on the `height × width` grid.
pub fn gradient_gain(height: usize, width: usize) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut gain = Vec::with_capacity(height * width);
    for u in 0..height {
        let gu = 2.0 - 2.0 * (tau * u as f64 / height as f64).cos();
        for v in 0..width {
            let gv = 2.0 - 2.0 * (tau * v as f64 / width as f64).cos();
            gain.push(gu + gv);
        }
    }
    gain
}

/// Splits `x` into `x_low`, the minimizer of
/// `½‖x_low − x‖² + (λ/2) Σ_j ‖G_j x_low‖²`, and `x_high = x − x_low`.
///
/// Channels are filtered independently with the same λ.
pub fn tikhonov_decompose(x: &Image, cfg: &TikhonovConfig) -> Result<FrequencySplit> {
    tikhonov_split(x.view(), cfg)
}

/// Same as [`tikhonov_decompose`] for an arbitrary `(H, W, C)` array.
pub fn tikhonov_split(x: ArrayView3<'_, f64>, cfg: &TikhonovConfig) -> Result<FrequencySplit> {
    cfg.validate()?;
    let (h, w, c) = x.dim();
    if h == 0 || w == 0 || c == 0 {
        return invalid("cannot split an empty array");
    }
    let mut low = Array3::zeros((h, w, c));
    if cfg.lambda_low == 0.0 {
        low.assign(&x);
    } else {
        let plan = FrequencyPlan::new(h, w);
        let filter: Vec<f64> = gradient_gain(h, w)
            .into_iter()
            .map(|g| 1.0 / (1.0 + cfg.lambda_low * g))
            .collect();
        for ch in 0..c {
            let plane: Vec<f64> = x.slice(ndarray::s![.., .., ch]).iter().copied().collect();
            let mut spec = plan.forward(&plane);
            for (s, f) in spec.iter_mut().zip(&filter) {
                *s *= *f;
            }
            let smooth = plan.inverse_real(&spec);
            for (dst, v) in low
                .slice_mut(ndarray::s![.., .., ch])
                .iter_mut()
                .zip(smooth)
            {
                *dst = v;
            }
        }
    }
    let high = &x - &low;
    Ok(FrequencySplit { low, high })
}
