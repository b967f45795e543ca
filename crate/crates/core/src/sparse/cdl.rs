use ndarray::{Array3, Array4};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cbpdn::{CbpdnSolver, CodingProblem, CodingState, SweepScratch};
use super::linalg::{cholesky_in_place, cholesky_solve};
use super::{AdmmConfig, Dictionary};
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::signal::FrequencyPlan;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Alternating-minimization schedule for dictionary learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdlConfig {
    /// Coding/dictionary alternations.
    pub outer_iters: usize,
    /// ADMM sweeps of the warm-started coding step per alternation.
    pub coding_iters: usize,
    /// ADMM sweeps of the dictionary step per alternation.
    pub dict_iters: usize,
    /// Penalty of the coding ADMM and its stopping tolerances.
    pub admm: AdmmConfig,
    /// Penalty of the dictionary ADMM; `None` scales it to the mean power
    /// of the coefficient spectra.
    pub sigma: Option<f64>,
}

impl CdlConfig {
    pub fn for_lambda(lambda_l1: f64) -> Self {
        Self {
            outer_iters: 40,
            coding_iters: 10,
            dict_iters: 10,
            admm: AdmmConfig::for_lambda(lambda_l1),
            sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.admm.validate()?;
        if self.outer_iters == 0 || self.coding_iters == 0 || self.dict_iters == 0 {
            return invalid("CDL iteration counts must be positive");
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return invalid("sigma must be positive");
            }
        }
        Ok(())
    }
}

/// Learned dictionary plus convergence telemetry.
#[derive(Debug, Clone)]
pub struct CdlReport {
    pub dictionary: Dictionary,
    /// Relative training reconstruction error after each alternation.
    pub recon_error: Vec<f64>,
    /// CDL objective after each alternation.
    pub objective: Vec<f64>,
    /// Largest atom norm after each alternation.
    pub max_atom_norm: Vec<f64>,
    /// Relative reconstruction error of a full coding pass with the final
    /// dictionary.
    pub final_recon_error: f64,
}

/// Learns `atom_count` atoms of size `filter_size` from equally shaped
/// `(H, W, C)` images.
pub fn learn_dictionary(
    images: &[Array3<f64>],
    atom_count: usize,
    filter_size: usize,
    lambda_l1: f64,
    cfg: &CdlConfig,
    seed: u64,
) -> Result<Dictionary> {
    learn_dictionary_with_report(images, atom_count, filter_size, lambda_l1, cfg, seed)
        .map(|r| r.dictionary)
}

pub fn learn_dictionary_with_report(
    images: &[Array3<f64>],
    atom_count: usize,
    filter_size: usize,
    lambda_l1: f64,
    cfg: &CdlConfig,
    seed: u64,
) -> Result<CdlReport> {
    cfg.validate()?;
    if images.is_empty() {
        return invalid("dictionary learning needs at least one image");
    }
    if atom_count == 0 {
        return invalid("atom_count must be at least 1");
    }
    if !(lambda_l1 >= 0.0 && lambda_l1.is_finite()) {
        return invalid("lambda_l1 must be finite and >= 0");
    }
    let (h, w, c) = images[0].dim();
    if let Some(bad) = images.iter().find(|im| im.dim() != (h, w, c)) {
        return Err(shape_mismatch(
            format!("{h}x{w}x{c}"),
            format!("{:?}", bad.dim()),
        ));
    }
    if filter_size == 0 || filter_size > h || filter_size > w {
        return invalid(format!(
            "filter_size {filter_size} does not fit {h}x{w} images"
        ));
    }

    let m = atom_count;
    let plan = FrequencyPlan::new(h, w);
    let n = plan.len();
    let init = Dictionary::random(m, filter_size, c, seed)?;

    let mut dict_step = DictionaryStep::new(&init, &plan);
    let mut solver = CbpdnSolver::from_parts(plan.clone(), m, c, dict_step.spectra(&plan));
    let mut problems: Vec<CodingProblem> = images
        .iter()
        .map(|im| solver.problem(im.view()))
        .collect::<Result<_>>()?;
    let energy: f64 = images.iter().flat_map(|im| im.iter()).map(|v| v * v).sum();
    let mut states: Vec<CodingState> = (0..images.len())
        .map(|_| CodingState::zeros(m, n, cfg.admm.rho))
        .collect();

    let mut report = CdlReport {
        dictionary: init,
        recon_error: Vec::with_capacity(cfg.outer_iters),
        objective: Vec::with_capacity(cfg.outer_iters),
        max_atom_norm: Vec::with_capacity(cfg.outer_iters),
        final_recon_error: f64::NAN,
    };

    for outer in 0..cfg.outer_iters {
        let factor = solver.factor(cfg.admm.rho)?;
        states
            .par_iter_mut()
            .zip(problems.par_iter())
            .for_each_init(SweepScratch::default, |scratch, (state, problem)| {
                for _ in 0..cfg.coding_iters {
                    solver.sweep(problem, state, &factor, lambda_l1, scratch);
                }
            });

        dict_step.run(&problems, &states, &plan, cfg)?;
        solver = CbpdnSolver::from_parts(plan.clone(), m, c, dict_step.spectra(&plan));
        problems.par_iter_mut().for_each(|p| solver.refresh(p));

        let data: f64 = problems
            .par_iter()
            .zip(states.par_iter())
            .map(|(p, s)| solver.objective(p, s, 0.0))
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        let l1: f64 = states
            .iter()
            .flat_map(|s| s.y.iter())
            .map(|v| v.abs())
            .sum();
        let dictionary = dict_step.dictionary(filter_size)?;
        report.recon_error.push(relative(2.0 * data, energy));
        report.objective.push(data + lambda_l1 * l1);
        report
            .max_atom_norm
            .push(dictionary.atom_norms().into_iter().fold(0.0, f64::max));
        report.dictionary = dictionary;
        log::debug!(
            "cdl iter {outer}: objective {:.6e}, recon error {:.4}",
            report.objective[outer],
            report.recon_error[outer]
        );
    }

    // full coding pass with the final atoms, warm-started
    let mut factor = solver.factor(cfg.admm.rho)?;
    let mut rho = cfg.admm.rho;
    let residual: f64 = {
        let mut total = 0.0;
        let mut scratch = SweepScratch::default();
        for (problem, state) in problems.iter().zip(states.iter_mut()) {
            if state.rho != rho {
                rho = state.rho;
                factor = solver.factor(rho)?;
            }
            for _ in 0..cfg.admm.max_iters {
                let sw = solver.sweep(problem, state, &factor, lambda_l1, &mut scratch);
                if sw.primal < cfg.admm.tol_primal && sw.dual < cfg.admm.tol_dual {
                    break;
                }
            }
            total += 2.0 * solver.objective(problem, state, 0.0);
        }
        total
    };
    report.final_recon_error = relative(residual, energy);
    Ok(report)
}

fn relative(residual_sq: f64, energy: f64) -> f64 {
    if energy > 0.0 {
        (residual_sq / energy).sqrt()
    } else {
        0.0
    }
}

/// ADMM state of the constrained dictionary update.
struct DictionaryStep {
    atoms: usize,
    channels: usize,
    filter: usize,
    height: usize,
    width: usize,
    /// Projected atoms on the full grid, `[m][c][n]`.
    g: Vec<f64>,
    /// Scaled dual, `[m][c][n]`.
    dual: Vec<f64>,
}

impl DictionaryStep {
    fn new(init: &Dictionary, plan: &FrequencyPlan) -> Self {
        let (m, f, _, c) = init.atoms().dim();
        let (h, w) = (plan.height(), plan.width());
        let n = h * w;
        let mut g = vec![0.0; m * c * n];
        for mi in 0..m {
            for ci in 0..c {
                for p in 0..f {
                    for q in 0..f {
                        g[(mi * c + ci) * n + p * w + q] = init.atoms()[[mi, p, q, ci]];
                    }
                }
            }
        }
        Self {
            atoms: m,
            channels: c,
            filter: f,
            height: h,
            width: w,
            dual: vec![0.0; g.len()],
            g,
        }
    }

    /// Spectra of the current projected atoms, `[k][c][m]`.
    fn spectra(&self, plan: &FrequencyPlan) -> Vec<Complex64> {
        let (m, c, n) = (self.atoms, self.channels, plan.len());
        let mut out = vec![ZERO; n * c * m];
        for mi in 0..m {
            for ci in 0..c {
                let spec = plan.forward(&self.g[(mi * c + ci) * n..(mi * c + ci + 1) * n]);
                for (k, v) in spec.into_iter().enumerate() {
                    out[(k * c + ci) * m + mi] = v;
                }
            }
        }
        out
    }

    fn dictionary(&self, f: usize) -> Result<Dictionary> {
        let (m, c, w) = (self.atoms, self.channels, self.width);
        let n = self.height * w;
        let atoms = Array4::from_shape_fn((m, f, f, c), |(mi, p, q, ci)| {
            self.g[(mi * c + ci) * n + p * w + q]
        });
        Dictionary::new(atoms)
    }

    /// Restricts to the `f × f` support at the origin and projects each atom
    /// onto the unit ℓ2 ball.
    fn project(&self, v: &mut [f64]) {
        let (m, c, f, w) = (self.atoms, self.channels, self.filter, self.width);
        let n = self.height * w;
        for mi in 0..m {
            let mut norm_sq = 0.0;
            for ci in 0..c {
                let plane = &mut v[(mi * c + ci) * n..(mi * c + ci + 1) * n];
                for (idx, x) in plane.iter_mut().enumerate() {
                    if idx / w >= f || idx % w >= f {
                        *x = 0.0;
                    } else {
                        norm_sq += *x * *x;
                    }
                }
            }
            let norm = norm_sq.sqrt();
            if norm > 1.0 {
                for x in v[mi * c * n..(mi + 1) * c * n].iter_mut() {
                    *x /= norm;
                }
            }
        }
    }

    fn run(
        &mut self,
        problems: &[CodingProblem],
        states: &[CodingState],
        plan: &FrequencyPlan,
        cfg: &CdlConfig,
    ) -> Result<()> {
        let (m, c, n) = (self.atoms, self.channels, plan.len());

        // per-frequency Gram matrices Σ_s r̂_sᴴ r̂_s and right-hand sides Σ_s r̂_sᴴ ŝ_s
        let per_freq: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut gram = vec![ZERO; m * m];
                let mut rhs = vec![ZERO; c * m];
                for (problem, state) in problems.iter().zip(states) {
                    for a in 0..m {
                        let ra = state.y_hat[a * n + k].conj();
                        if ra == ZERO {
                            continue;
                        }
                        for b in 0..m {
                            gram[a * m + b] += ra * state.y_hat[b * n + k];
                        }
                        for ci in 0..c {
                            rhs[ci * m + a] += ra * problem.s_hat[ci][k];
                        }
                    }
                }
                (gram, rhs)
            })
            .collect();

        let sigma = match cfg.sigma {
            Some(s) => s,
            None => {
                let trace: f64 = per_freq
                    .iter()
                    .map(|(g, _)| (0..m).map(|a| g[a * m + a].re).sum::<f64>())
                    .sum();
                (trace / (n * m) as f64).max(1e-3)
            }
        };

        let factors: Vec<Vec<Complex64>> = per_freq
            .par_iter()
            .map(|(gram, _)| {
                let mut l = gram.clone();
                for a in 0..m {
                    l[a * m + a] += sigma;
                }
                if cholesky_in_place(&mut l, m) {
                    Ok(l)
                } else {
                    Err(Error::Numerical(
                        "dictionary system is not positive definite".into(),
                    ))
                }
            })
            .collect::<Result<_>>()?;

        let mut d = vec![0.0; self.g.len()];
        let mut d_hat = vec![ZERO; m * c * n];
        let mut scratch = Vec::new();
        for _ in 0..cfg.dict_iters {
            // right-hand side σ(Ĝ − Ĥ)
            let mut target = vec![ZERO; m * c * n];
            for mc in 0..m * c {
                let diff: Vec<f64> = self.g[mc * n..(mc + 1) * n]
                    .iter()
                    .zip(&self.dual[mc * n..(mc + 1) * n])
                    .map(|(g, u)| g - u)
                    .collect();
                plan.forward_into(&diff, &mut target[mc * n..(mc + 1) * n]);
            }
            let solved: Vec<Vec<Complex64>> = (0..n)
                .into_par_iter()
                .map(|k| {
                    let (_, rhs) = &per_freq[k];
                    let mut out = vec![ZERO; c * m];
                    for ci in 0..c {
                        let b = &mut out[ci * m..(ci + 1) * m];
                        for mi in 0..m {
                            b[mi] = rhs[ci * m + mi] + target[(mi * c + ci) * n + k] * sigma;
                        }
                        cholesky_solve(&factors[k], m, b);
                    }
                    out
                })
                .collect();
            for (k, sol) in solved.iter().enumerate() {
                for ci in 0..c {
                    for mi in 0..m {
                        d_hat[(mi * c + ci) * n + k] = sol[ci * m + mi];
                    }
                }
            }
            for mc in 0..m * c {
                plan.inverse_real_into(
                    &d_hat[mc * n..(mc + 1) * n],
                    &mut scratch,
                    &mut d[mc * n..(mc + 1) * n],
                );
            }

            let mut next: Vec<f64> = d.iter().zip(&self.dual).map(|(a, u)| a + u).collect();
            self.project(&mut next);
            let (mut primal, mut dual_res) = (0.0, 0.0);
            for i in 0..next.len() {
                let r = d[i] - next[i];
                primal += r * r;
                dual_res += (next[i] - self.g[i]).powi(2);
                self.dual[i] += r;
            }
            self.g = next;
            if primal.sqrt() < cfg.admm.tol_primal && sigma * dual_res.sqrt() < cfg.admm.tol_dual {
                break;
            }
        }
        Ok(())
    }
}
