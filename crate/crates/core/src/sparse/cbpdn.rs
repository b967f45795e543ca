use ndarray::{Array3, ArrayView3};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::linalg::invert_in_place;
use super::{shrink, AdmmConfig, CoefficientMaps, Dictionary};
use crate::error::{invalid, Error, Result};
use crate::signal::FrequencyPlan;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Per-iteration record of a CBPDN solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CbpdnDiagnostics {
    pub iterations: usize,
    /// Both residuals fell below their tolerances before `max_iters`.
    pub converged: bool,
    pub objective: Vec<f64>,
    pub primal_residual: Vec<f64>,
    pub dual_residual: Vec<f64>,
    pub final_rho: f64,
}

impl CbpdnDiagnostics {
    pub fn final_objective(&self) -> Option<f64> {
        self.objective.last().copied()
    }

    pub fn final_residuals(&self) -> Option<(f64, f64)> {
        Some((*self.primal_residual.last()?, *self.dual_residual.last()?))
    }
}

/// Fourier-domain data of one image: channel spectra and `Dᴴ s`.
pub(crate) struct CodingProblem {
    pub s_hat: Vec<Vec<Complex64>>,
    pub dts: Vec<Complex64>,
}

/// ADMM iterate for one image. `u` is the scaled dual variable.
#[derive(Debug, Clone)]
pub(crate) struct CodingState {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub y_hat: Vec<Complex64>,
    pub u_hat: Vec<Complex64>,
    pub rho: f64,
}

impl CodingState {
    pub fn zeros(m: usize, n: usize, rho: f64) -> Self {
        Self {
            y: vec![0.0; m * n],
            u: vec![0.0; m * n],
            y_hat: vec![ZERO; m * n],
            u_hat: vec![ZERO; m * n],
            rho,
        }
    }

    /// Rescales the dual variable after a change of penalty.
    fn set_rho(&mut self, rho: f64) {
        let ratio = self.rho / rho;
        self.u.iter_mut().for_each(|v| *v *= ratio);
        self.u_hat.iter_mut().for_each(|v| *v *= ratio);
        self.rho = rho;
    }
}

/// Residuals of one ADMM sweep.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sweep {
    pub primal: f64,
    pub dual: f64,
    /// ‖x‖, ‖y‖ and ‖ρu‖ for relative comparisons.
    pub x_norm: f64,
    pub y_norm: f64,
    pub u_norm: f64,
}

/// CBPDN solver bound to one dictionary and image size.
///
/// Minimizes `½‖Σ_m d_m * r_m − x‖² + λ Σ_m ‖r_m‖₁` by ADMM on the split
/// `r = y`: a per-frequency Woodbury solve for `r`, soft thresholding for
/// `y`, then the scaled dual update.
pub struct CbpdnSolver {
    plan: FrequencyPlan,
    atoms: usize,
    channels: usize,
    /// `[k][c][m]`
    d_hat: Vec<Complex64>,
}

impl CbpdnSolver {
    pub fn new(dict: &Dictionary, height: usize, width: usize) -> Result<Self> {
        dict.check_image(height, width, dict.channels())?;
        let plan = FrequencyPlan::new(height, width);
        let d_hat = dict.spectra(&plan);
        Ok(Self {
            plan,
            atoms: dict.atom_count(),
            channels: dict.channels(),
            d_hat,
        })
    }

    pub(crate) fn from_parts(
        plan: FrequencyPlan,
        atoms: usize,
        channels: usize,
        d_hat: Vec<Complex64>,
    ) -> Self {
        debug_assert_eq!(d_hat.len(), plan.len() * atoms * channels);
        Self {
            plan,
            atoms,
            channels,
            d_hat,
        }
    }

    pub fn plan(&self) -> &FrequencyPlan {
        &self.plan
    }

    fn n(&self) -> usize {
        self.plan.len()
    }

    pub(crate) fn problem(&self, x: ArrayView3<'_, f64>) -> Result<CodingProblem> {
        let (h, w, c) = x.dim();
        if h != self.plan.height() || w != self.plan.width() || c != self.channels {
            return Err(crate::error::shape_mismatch(
                format!(
                    "{}x{}x{}",
                    self.plan.height(),
                    self.plan.width(),
                    self.channels
                ),
                format!("{h}x{w}x{c}"),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite input to sparse coding".into()));
        }
        let s_hat: Vec<Vec<Complex64>> = (0..c)
            .map(|ci| {
                let plane: Vec<f64> = x.slice(ndarray::s![.., .., ci]).iter().copied().collect();
                self.plan.forward(&plane)
            })
            .collect();
        let mut problem = CodingProblem {
            s_hat,
            dts: Vec::new(),
        };
        self.refresh(&mut problem);
        Ok(problem)
    }

    /// Recomputes `Dᴴ s` for this solver's dictionary.
    pub(crate) fn refresh(&self, problem: &mut CodingProblem) {
        let (m, c, n) = (self.atoms, self.channels, self.n());
        problem.dts.clear();
        problem.dts.resize(m * n, ZERO);
        for k in 0..n {
            for ci in 0..c {
                let s = problem.s_hat[ci][k];
                let row = &self.d_hat[(k * c + ci) * m..(k * c + ci + 1) * m];
                for (mi, d) in row.iter().enumerate() {
                    problem.dts[mi * n + k] += d.conj() * s;
                }
            }
        }
    }

    /// `(ρI + D Dᴴ)⁻¹` for every frequency, `[k][c][c]`.
    pub(crate) fn factor(&self, rho: f64) -> Result<Vec<Complex64>> {
        let (m, c, n) = (self.atoms, self.channels, self.n());
        let mut out = vec![ZERO; n * c * c];
        let mut work = Vec::new();
        for k in 0..n {
            let block = &mut out[k * c * c..(k + 1) * c * c];
            for a in 0..c {
                for b in 0..c {
                    let ra = &self.d_hat[(k * c + a) * m..(k * c + a + 1) * m];
                    let rb = &self.d_hat[(k * c + b) * m..(k * c + b + 1) * m];
                    let mut v: Complex64 = ra.iter().zip(rb).map(|(x, y)| x * y.conj()).sum();
                    if a == b {
                        v += rho;
                    }
                    block[a * c + b] = v;
                }
            }
            if !invert_in_place(block, c, &mut work) {
                return Err(Error::Numerical(format!(
                    "singular coding system at frequency {k}"
                )));
            }
        }
        Ok(out)
    }

    /// One ADMM sweep over `state`.
    pub(crate) fn sweep(
        &self,
        problem: &CodingProblem,
        state: &mut CodingState,
        factor: &[Complex64],
        lambda: f64,
        scratch: &mut SweepScratch,
    ) -> Sweep {
        let (m, c, n) = (self.atoms, self.channels, self.n());
        let rho = state.rho;
        scratch.ensure(m, c, n);
        let SweepScratch {
            x_hat,
            x,
            b,
            t,
            v,
            fft,
        } = scratch;

        for k in 0..n {
            for mi in 0..m {
                let idx = mi * n + k;
                b[mi] = problem.dts[idx] + (state.y_hat[idx] - state.u_hat[idx]) * rho;
            }
            for ci in 0..c {
                let row = &self.d_hat[(k * c + ci) * m..(k * c + ci + 1) * m];
                t[ci] = row.iter().zip(b.iter()).map(|(d, bb)| d * bb).sum();
            }
            let block = &factor[k * c * c..(k + 1) * c * c];
            for a in 0..c {
                v[a] = (0..c).map(|bb| block[a * c + bb] * t[bb]).sum();
            }
            for mi in 0..m {
                let mut corr = ZERO;
                for ci in 0..c {
                    corr += self.d_hat[(k * c + ci) * m + mi].conj() * v[ci];
                }
                x_hat[mi * n + k] = (b[mi] - corr) / rho;
            }
        }

        for mi in 0..m {
            self.plan.inverse_real_into(
                &x_hat[mi * n..(mi + 1) * n],
                fft,
                &mut x[mi * n..(mi + 1) * n],
            );
        }

        let kappa = lambda / rho;
        let (mut primal, mut dual, mut xn, mut yn, mut un) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..m * n {
            let y_new = shrink(x[i] + state.u[i], kappa);
            let dy = y_new - state.y[i];
            dual += dy * dy;
            state.y[i] = y_new;
            let r = x[i] - y_new;
            primal += r * r;
            state.u[i] += r;
            xn += x[i] * x[i];
            yn += y_new * y_new;
            un += state.u[i] * state.u[i];
        }
        for mi in 0..m {
            self.plan.forward_into(
                &state.y[mi * n..(mi + 1) * n],
                &mut state.y_hat[mi * n..(mi + 1) * n],
            );
        }
        for i in 0..m * n {
            state.u_hat[i] += x_hat[i] - state.y_hat[i];
        }
        Sweep {
            primal: primal.sqrt(),
            dual: rho * dual.sqrt(),
            x_norm: xn.sqrt(),
            y_norm: yn.sqrt(),
            u_norm: rho * un.sqrt(),
        }
    }

    /// `½‖Σ d_m * y_m − s‖² + λ‖y‖₁`, the data term via Parseval.
    pub(crate) fn objective(
        &self,
        problem: &CodingProblem,
        state: &CodingState,
        lambda: f64,
    ) -> f64 {
        let (m, c, n) = (self.atoms, self.channels, self.n());
        let mut data = 0.0;
        for k in 0..n {
            for ci in 0..c {
                let row = &self.d_hat[(k * c + ci) * m..(k * c + ci + 1) * m];
                let mut acc = -problem.s_hat[ci][k];
                for (mi, d) in row.iter().enumerate() {
                    acc += d * state.y_hat[mi * n + k];
                }
                data += acc.norm_sqr();
            }
        }
        0.5 * data / n as f64 + lambda * state.y.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn solve(
        &self,
        x: ArrayView3<'_, f64>,
        lambda_l1: f64,
        cfg: &AdmmConfig,
    ) -> Result<(CoefficientMaps, CbpdnDiagnostics)> {
        if !(lambda_l1 >= 0.0 && lambda_l1.is_finite()) {
            return invalid(format!(
                "lambda_l1 must be finite and >= 0, got {lambda_l1}"
            ));
        }
        cfg.validate()?;
        let problem = self.problem(x)?;
        let (m, n) = (self.atoms, self.n());
        let mut state = CodingState::zeros(m, n, cfg.rho);
        let mut factor = self.factor(state.rho)?;
        let mut scratch = SweepScratch::default();
        let mut diag = CbpdnDiagnostics::default();
        for it in 0..cfg.max_iters {
            let sw = self.sweep(&problem, &mut state, &factor, lambda_l1, &mut scratch);
            diag.iterations = it + 1;
            diag.primal_residual.push(sw.primal);
            diag.dual_residual.push(sw.dual);
            diag.objective
                .push(self.objective(&problem, &state, lambda_l1));
            if sw.primal < cfg.tol_primal && sw.dual < cfg.tol_dual {
                diag.converged = true;
                break;
            }
            if cfg.rho_adapt {
                if let Some(rho) = balanced_rho(state.rho, &sw) {
                    state.set_rho(rho);
                    factor = self.factor(rho)?;
                }
            }
        }
        diag.final_rho = state.rho;
        if !diag.converged {
            log::debug!(
                "cbpdn stopped after {} iterations without converging (r = {:.3e}, s = {:.3e})",
                diag.iterations,
                diag.primal_residual.last().unwrap_or(&f64::NAN),
                diag.dual_residual.last().unwrap_or(&f64::NAN)
            );
        }
        let (h, w) = (self.plan.height(), self.plan.width());
        let maps = Array3::from_shape_vec((m, h, w), state.y).expect("state matches plan");
        Ok((CoefficientMaps::new(maps)?, diag))
    }
}

/// Residual balancing on normalized residuals: double ρ when the primal
/// residual dominates tenfold, halve it in the opposite case.
pub(crate) fn balanced_rho(rho: f64, sw: &Sweep) -> Option<f64> {
    let scale_p = sw.x_norm.max(sw.y_norm);
    let r = if scale_p > 0.0 {
        sw.primal / scale_p
    } else {
        0.0
    };
    let s = if sw.u_norm > 0.0 {
        sw.dual / sw.u_norm
    } else {
        0.0
    };
    if r > 10.0 * s && r > 0.0 {
        Some(rho * 2.0)
    } else if s > 10.0 * r && s > 0.0 {
        Some(rho / 2.0)
    } else {
        None
    }
}

#[derive(Default)]
pub(crate) struct SweepScratch {
    x_hat: Vec<Complex64>,
    x: Vec<f64>,
    b: Vec<Complex64>,
    t: Vec<Complex64>,
    v: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl SweepScratch {
    fn ensure(&mut self, m: usize, c: usize, n: usize) {
        self.x_hat.resize(m * n, ZERO);
        self.x.resize(m * n, 0.0);
        self.b.resize(m, ZERO);
        self.t.resize(c, ZERO);
        self.v.resize(c, ZERO);
    }
}

/// Solves CBPDN for one `(H, W, C)` array. Non-convergence is reported in the
/// diagnostics, never as an error.
pub fn cbpdn(
    dict: &Dictionary,
    x_high: ArrayView3<'_, f64>,
    lambda_l1: f64,
    cfg: &AdmmConfig,
) -> Result<(CoefficientMaps, CbpdnDiagnostics)> {
    let (h, w, c) = x_high.dim();
    dict.check_image(h, w, c)?;
    CbpdnSolver::new(dict, h, w)?.solve(x_high, lambda_l1, cfg)
}

/// Evaluates the CBPDN objective directly in the spatial domain.
pub fn cbpdn_objective(
    dict: &Dictionary,
    maps: &CoefficientMaps,
    x_high: ArrayView3<'_, f64>,
    lambda_l1: f64,
) -> Result<f64> {
    let rec = super::reconstruct(dict, maps)?;
    if rec.dim() != x_high.dim() {
        return Err(crate::error::shape_mismatch(
            format!("{:?}", rec.dim()),
            format!("{:?}", x_high.dim()),
        ));
    }
    let data: f64 = rec
        .iter()
        .zip(x_high.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(0.5 * data + lambda_l1 * maps.l1_norm())
}
