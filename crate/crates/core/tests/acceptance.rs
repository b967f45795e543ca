//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line to stdout
//! (bypassing the test harness capture) and then asserts.
//!
//! Criteria 7 to 9 share one default `full-run` built on first use.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use ndarray::{Array3, Array4};
use purikit::attack::{attack, attack_batch, bim, fgsm, norm_distance, AttackConfig, Norm};
use purikit::cluster::{
    fit_distribution, kmeans, mahalanobis, select_cluster_count, ClusterDistribution,
    LatentVector,
};
use purikit::net::{
    cross_entropy, loss_and_grads, train_baseline, train_robust, MdTerm, NetworkParams,
    RobustTrainConfig, TrainConfig, LATENT_DIM,
};
use purikit::signal::{tikhonov_split, TikhonovConfig};
use purikit::sparse::{
    cbpdn, lambda_max, learn_dictionary_with_report, reconstruct, AdmmConfig, CdlConfig,
    CoefficientMaps, Dictionary, NORM_SLACK,
};
use purikit::tensorio::{generate_synthetic_dataset, LabeledDataset};
use purikit_cli::commands::{self, cmd_full_run};
use purikit_cli::{ReportFile, RunConfig, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {id:>2} {name:<28} {}  {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

struct Fixture {
    _dir: tempfile::TempDir,
    out: PathBuf,
    cfg: RunConfig,
    report: ReportFile,
}

/// The default configuration, run end to end once.
fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = RunConfig::default();
        let ws = Workspace::new(&out).unwrap();
        let report = cmd_full_run(&cfg, &ws).expect("default full run");
        Fixture {
            _dir: dir,
            out,
            cfg,
            report,
        }
    })
}

// 1 ---------------------------------------------------------------------------

fn fd_net(seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NetworkParams::init(3, 8, 8, 4, &mut rng).unwrap();
    for v in p.as_mut_slice() {
        *v += rng.gen_range(-0.05..0.05);
    }
    p
}

#[test]
fn c01_gradients_match_finite_differences() {
    let h = 1e-5;
    let alpha = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let p = fd_net(101);
    let xs: Vec<Array3<f64>> = (0..3)
        .map(|_| Array3::from_shape_fn((8, 8, 3), |_| rng.gen()))
        .collect();
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let labels = [0, 3, 1];
    let pts: Vec<_> = (0..60)
        .map(|_| LatentVector::new((0..LATENT_DIM).map(|_| rng.gen_range(0.0..0.5)).collect()))
        .collect();
    let dist = fit_distribution(&pts).unwrap();
    let clusters = vec![Some(&dist); 3];

    let mut worst_param = 0.0f64;
    for with_md in [false, true] {
        let term = with_md.then_some(MdTerm {
            clusters: &clusters,
            alpha,
        });
        let wd = 1e-3;
        let (_, grad) = loss_and_grads(&p, &views, &labels, wd, term).unwrap();
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = p.clone();
            minus.as_mut_slice()[i] -= h;
            let lp = loss_and_grads(&plus, &views, &labels, wd, term).unwrap().0;
            let lm = loss_and_grads(&minus, &views, &labels, wd, term).unwrap().0;
            worst_param = worst_param.max(rel_err(grad.as_slice()[i], (lp - lm) / (2.0 * h)));
        }
    }

    let mut worst_input = 0.0f64;
    let x = &xs[0];
    let y = labels[0];
    for with_md in [false, true] {
        let md = with_md.then_some((&dist, alpha));
        let g = p.sample_gradients(x.view(), y, md, true).unwrap().input.unwrap();
        let loss = |z: &Array3<f64>| {
            let f = p.forward(z.view()).unwrap();
            let mut l = cross_entropy(&f.logits, y);
            if with_md {
                l += alpha * mahalanobis(&f.latent, &dist).unwrap();
            }
            l
        };
        for idx in ndarray::indices((8, 8, 3)) {
            let mut plus = x.clone();
            plus[idx] += h;
            let mut minus = x.clone();
            minus[idx] -= h;
            worst_input = worst_input.max(rel_err(g[idx], (loss(&plus) - loss(&minus)) / (2.0 * h)));
        }
    }
    report(
        1,
        "gradient correctness",
        worst_param < 1e-4 && worst_input < 1e-4,
        format!(
            "{} params, worst rel err param {worst_param:.2e} input {worst_input:.2e} (tol 1e-4)",
            p.len()
        ),
    );
}

// 2 ---------------------------------------------------------------------------

/// `(I + λ Σ GᵀG) u` with circular forward differences, in the pixel domain.
fn normal_operator(u: &[f64], h: usize, w: usize, lambda: f64) -> Vec<f64> {
    let at = |i: usize, j: usize| u[(i % h) * w + (j % w)];
    let gx = |i: usize, j: usize| at(i, j + 1) - at(i, j);
    let gy = |i: usize, j: usize| at(i + 1, j) - at(i, j);
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let gtx = gx(i, j + w - 1) - gx(i, j);
            let gty = gy(i + h - 1, j) - gy(i, j);
            out[i * w + j] = u[i * w + j] + lambda * (gtx + gty);
        }
    }
    out
}

fn cg_solve(b: &[f64], h: usize, w: usize, lambda: f64) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..5000 {
        if rr.sqrt() < 1e-14 {
            break;
        }
        let ap = normal_operator(&p, h, w, lambda);
        let a = rr / dot(&p, &ap);
        for k in 0..x.len() {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
        }
        let next = dot(&r, &r);
        for k in 0..p.len() {
            p[k] = r[k] + (next / rr) * p[k];
        }
        rr = next;
    }
    x
}

#[test]
fn c02_tikhonov_split_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let lambda = 5.0;
    let cfg = TikhonovConfig::new(lambda).unwrap();
    let (mut worst_sum, mut worst_rms) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let x = Array3::from_shape_fn((16, 16, 1), |_| rng.gen::<f64>());
        let split = tikhonov_split(x.view(), &cfg).unwrap();
        let sum = &split.low + &split.high;
        worst_sum = sum.iter().zip(&x).fold(worst_sum, |m, (a, b)| m.max((a - b).abs()));
        let plane: Vec<f64> = x.iter().copied().collect();
        let oracle = cg_solve(&plane, 16, 16, lambda);
        let rms = (split.low.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / 256.0)
            .sqrt();
        worst_rms = worst_rms.max(rms);
    }
    let x = Array3::from_shape_fn((16, 16, 3), |_| rng.gen::<f64>());
    let id = tikhonov_split(x.view(), &TikhonovConfig::new(0.0).unwrap()).unwrap();
    let identity = id.low == x && id.high.iter().all(|&v| v == 0.0);
    report(
        2,
        "tikhonov exactness",
        worst_sum <= 1e-12 && worst_rms <= 1e-6 && identity,
        format!("sum err {worst_sum:.1e} (1e-12), cg rms {worst_rms:.1e} (1e-6), lambda=0 identity {identity}"),
    );
}

// 3 ---------------------------------------------------------------------------

fn rel_err_arr(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn c03_cbpdn_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);

    let d = Dictionary::random(4, 3, 1, 0).unwrap();
    let (maps, _) = cbpdn(&d, Array3::zeros((8, 8, 1)).view(), 0.1, &AdmmConfig::for_lambda(0.1)).unwrap();
    let zero_in = maps.maps().iter().all(|&v| v == 0.0);

    let mut above_max = true;
    for seed in 0..3 {
        let d = Dictionary::random(3, 5, 1, 20 + seed).unwrap();
        let x = Array3::from_shape_fn((12, 12, 1), |_| rng.gen_range(-1.0..1.0));
        let lm = lambda_max(&d, x.view()).unwrap();
        for scale in [1.0, 1.5] {
            let lam = lm * scale;
            let (maps, _) = cbpdn(&d, x.view(), lam, &AdmmConfig::for_lambda(lam)).unwrap();
            above_max &= maps.maps().iter().all(|&v| v == 0.0);
        }
    }

    let d = Dictionary::random(3, 4, 1, 11).unwrap();
    let mut planted = CoefficientMaps::zeros(3, 16, 16);
    for _ in 0..6 {
        let (m, i, j) = (rng.gen_range(0..3), rng.gen_range(0..16), rng.gen_range(0..16));
        planted.maps_mut()[[m, i, j]] = rng.gen_range(0.5..1.5) * if rng.gen() { 1.0 } else { -1.0 };
    }
    let x = reconstruct(&d, &planted).unwrap();
    let lam = 1e-3 * lambda_max(&d, x.view()).unwrap();
    let mut cfg = AdmmConfig::for_lambda(lam);
    cfg.max_iters = 2000;
    let (maps, _) = cbpdn(&d, x.view(), lam, &cfg).unwrap();
    let planted_err = rel_err_arr(&reconstruct(&d, &maps).unwrap(), &x);

    let (mut converged, mut flag_ok) = (0, true);
    for seed in 0..10 {
        let d = Dictionary::random(4, 3, 3, 40 + seed).unwrap();
        let x = Array3::from_shape_fn((10, 10, 3), |_| rng.gen_range(0.0..1.0));
        let cfg = AdmmConfig::for_lambda(0.05);
        let (_, diag) = cbpdn(&d, x.view(), 0.05, &cfg).unwrap();
        if diag.converged {
            converged += 1;
            let (r, s) = diag.final_residuals().unwrap();
            flag_ok &= r < 1e-4 && s < 1e-4;
        }
    }
    report(
        3,
        "cbpdn correctness",
        zero_in && above_max && planted_err <= 1e-2 && flag_ok && converged > 0,
        format!(
            "zero input {zero_in}, lambda>=lambda_max zero {above_max}, planted rel err {planted_err:.1e} (1e-2), converged {converged}/10 with residuals < 1e-4 {flag_ok}"
        ),
    );
}

// 4 ---------------------------------------------------------------------------

fn ground_truth_atoms() -> Dictionary {
    let f = 5;
    let mut atoms = Array4::zeros((4, f, f, 1));
    for p in 0..f {
        for q in 0..f {
            let (x, y) = (p as f64 - 2.0, q as f64 - 2.0);
            atoms[[0, p, q, 0]] = (-(x * x + y * y) / 2.0).exp();
            atoms[[1, p, q, 0]] = x * (-(x * x + y * y) / 3.0).exp();
            atoms[[2, p, q, 0]] = y * (-(x * x + y * y) / 3.0).exp();
            atoms[[3, p, q, 0]] =
                if (p + q) % 2 == 0 { 1.0 } else { -1.0 } * (-(x * x + y * y) / 6.0).exp();
        }
    }
    for mut a in atoms.outer_iter_mut() {
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        a.mapv_inplace(|v| v / n);
    }
    Dictionary::new(atoms).unwrap()
}

#[test]
fn c04_cdl_recovers_planted_dictionary() {
    let truth = ground_truth_atoms();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let images: Vec<_> = (0..24)
        .map(|_| {
            let mut maps = CoefficientMaps::zeros(4, 16, 16);
            for _ in 0..5 {
                let (m, i, j) = (rng.gen_range(0..4), rng.gen_range(0..16), rng.gen_range(0..16));
                maps.maps_mut()[[m, i, j]] =
                    rng.gen_range(0.5..1.5) * if rng.gen() { 1.0 } else { -1.0 };
            }
            reconstruct(&truth, &maps).unwrap()
        })
        .collect();
    let lam = 0.01;
    let mut cfg = CdlConfig::for_lambda(lam);
    cfg.outer_iters = 100;
    let rep = learn_dictionary_with_report(&images, 4, 5, lam, &cfg, 1).unwrap();
    let max_norm = rep.dictionary.atom_norms().into_iter().fold(0.0, f64::max);
    report(
        4,
        "cdl recovery",
        rep.final_recon_error <= 0.05 && max_norm <= 1.0 + NORM_SLACK,
        format!(
            "train rel err {:.4} (0.05), max atom norm {max_norm:.12}",
            rep.final_recon_error
        ),
    );
}

// 5 ---------------------------------------------------------------------------

fn blobs(centers: &[Vec<f64>], per: usize, seed: u64) -> Vec<LatentVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    (0..per * centers.len())
        .map(|i| {
            let c = &centers[i % centers.len()];
            LatentVector::new(c.iter().map(|&v| v + noise.sample(&mut rng)).collect())
        })
        .collect()
}

#[test]
fn c05_clustering() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut monotone = true;
    for psi in 1..8 {
        let pts: Vec<_> = (0..300)
            .map(|_| LatentVector::new((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let res = kmeans(&pts, psi, psi as u64).unwrap();
        monotone &= res.history.windows(2).all(|w| w[1] <= w[0]);
    }

    let centers = vec![vec![0.0, 0.0, 0.0], vec![30.0, 0.0, 0.0], vec![15.0, 26.0, 0.0]];
    let three = (0..10)
        .filter(|&seed| {
            select_cluster_count(&blobs(&centers, 60, 500 + seed), 8, seed).unwrap().psi_star == 3
        })
        .count();
    let one = (0..10).all(|seed| {
        select_cluster_count(&blobs(&[vec![0.0; 4]], 200, 600 + seed), 8, seed)
            .unwrap()
            .psi_star
            == 1
    });
    report(
        5,
        "clustering",
        monotone && three >= 9 && one,
        format!("wcss non-increasing {monotone}, three blobs psi*=3 in {three}/10 (9), one blob psi*=1 {one}"),
    );
}

// 6 ---------------------------------------------------------------------------

#[test]
fn c06_mahalanobis() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for k in [2, 5, 16] {
        let mean: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let d = ClusterDistribution::identity(mean.clone()).unwrap();
        for _ in 0..20 {
            let r: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let euclid = r.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((mahalanobis(&r, &d).unwrap() - euclid).abs());
        }
    }

    let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pts: Vec<_> = (0..50)
        .map(|_| {
            let (s, t): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            LatentVector::new((0..6).map(|i| 0.3 + s * a[i] + t * b[i]).collect())
        })
        .collect();
    let d = fit_distribution(&pts).unwrap();
    let s = d.covariance();
    let back = (s * d.inverse() * s - s).norm() / s.norm();
    report(
        6,
        "mahalanobis",
        worst <= 1e-9 && d.is_pseudo() && back <= 1e-6,
        format!(
            "identity vs euclidean {worst:.1e} (1e-9), rank-2 cluster pseudo {}, |SS+S-S|/|S| {back:.1e} (1e-6)",
            d.is_pseudo()
        ),
    );
}

// 7 ---------------------------------------------------------------------------

#[test]
fn c07_attack_invariants() {
    let fx = fixture();
    let ws = Workspace::new(&fx.out).unwrap();
    let baseline = ws.network(commands::BASELINE).unwrap();
    let test: LabeledDataset = ws.dataset(commands::TEST).unwrap();

    let mut budget_ok = true;
    let mut checked = 0;
    for norm in [Norm::L2, Norm::Linf] {
        for eps in [0.02, 0.08, 0.3] {
            let configs = [
                AttackConfig::fgsm(norm, eps),
                AttackConfig::bim(norm, eps, 10),
                AttackConfig::pgd(norm, eps, 10, 9),
            ];
            for cfg in &configs {
                for (i, img) in test.images().iter().enumerate().step_by(8) {
                    let adv = attack(&baseline, img.view(), test.labels()[i], cfg).unwrap();
                    let dist = norm_distance(adv.view(), img.view(), norm);
                    budget_ok &= dist <= eps * (1.0 + 1e-12) + 1e-15;
                    budget_ok &= adv.iter().all(|v| (0.0..=1.0).contains(v));
                    checked += 1;
                }
            }
        }
    }

    let mut bim_is_fgsm = true;
    for norm in [Norm::L2, Norm::Linf] {
        for (i, img) in test.images().iter().enumerate().step_by(16) {
            let y = test.labels()[i];
            let a = fgsm(&baseline, img.view(), y, &AttackConfig::fgsm(norm, 0.05)).unwrap();
            // BIM defaults to ε/10 per step; one step of size ε is FGSM
            let one = AttackConfig {
                step_size: Some(0.05),
                ..AttackConfig::bim(norm, 0.05, 1)
            };
            let b = bim(&baseline, img.view(), y, &one).unwrap();
            bim_is_fgsm &= a == b;
        }
    }

    let rates: Vec<f64> = [0.0, 0.02, 0.04, 0.08]
        .into_iter()
        .map(|eps| {
            let adv = attack_batch(&baseline, test.images(), test.labels(), &AttackConfig::fgsm(Norm::L2, eps)).unwrap();
            let wrong = adv
                .iter()
                .zip(test.labels())
                .filter(|(im, &y)| baseline.predict(im.view()).unwrap() != y)
                .count();
            wrong as f64 / test.len() as f64
        })
        .collect();
    let monotone = rates.windows(2).all(|w| w[1] >= w[0]);
    report(
        7,
        "attack budget invariants",
        budget_ok && bim_is_fgsm && monotone,
        format!(
            "{checked} examples within budget and box {budget_ok}, bim(1)==fgsm {bim_is_fgsm}, fgsm error rates {rates:.4?}"
        ),
    );
}

// 8 ---------------------------------------------------------------------------

#[test]
fn c08_end_to_end_purification() {
    let fx = fixture();
    let rows = &fx.report.rows;
    let clean = rows.iter().find(|r| r.condition == "clean").unwrap();
    let strong = rows.iter().find(|r| r.condition == "fgsm-l2-0.08").unwrap();
    let acc = clean.accuracy;
    let pur_clean = clean.purified_accuracy.unwrap();
    let adv = strong.accuracy;
    let pur_adv = strong.purified_accuracy.unwrap();
    let drop = acc - adv;
    let recovered = if drop > 0.0 { (pur_adv - adv) / drop } else { 0.0 };
    report(
        8,
        "end-to-end purification",
        acc >= 0.90 && drop >= 0.20 && recovered >= 0.50 && (acc - pur_clean).abs() <= 0.10,
        format!(
            "seed {}: clean {acc:.4} (0.90), fgsm-l2-0.08 {adv:.4} drop {:.1} pts (20), purified {pur_adv:.4} recovers {:.0}% (50%), purified clean {pur_clean:.4} (within 10 pts)",
            fx.cfg.seed,
            100.0 * drop,
            100.0 * recovered
        ),
    );
}

// 9 ---------------------------------------------------------------------------

#[test]
fn c09_robust_training_tightens_latents() {
    let fx = fixture();
    let ld = &fx.report.latent_distance;

    let data = generate_synthetic_dataset(2, 20, 10, 0.05, 909).unwrap();
    let train = TrainConfig {
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let base = train_baseline(&data, &train).unwrap();
    let dist = ClusterDistribution::identity(vec![0.0; LATENT_DIM]).unwrap();
    let lookup = vec![Some(&dist); data.len()];
    let inner = AttackConfig::pgd(Norm::L2, 0.0, 10, 3);
    let robust = train_robust(&data, &lookup, &RobustTrainConfig::from_train(&train, 0.0, inner), None).unwrap();
    let reduces = robust.params == base.params && robust.history == base.history;
    report(
        9,
        "robust training effect",
        ld.robust < ld.baseline && reduces,
        format!(
            "held-out {} latent distance robust {:.4} < baseline {:.4}, alpha=0 eps=0 equals baseline {reduces}",
            ld.attack.label(),
            ld.robust,
            ld.baseline
        ),
    );
}

// 10 --------------------------------------------------------------------------

const TINY: &str = r#"
seed = 11

[dataset]
class_count = 2
per_class = 10
test_per_class = 5
side = 8
contrast = 0.6
noise_sigma = 0.05

[net]
epochs = 3

[srd]
psi_max = 3
atom_count = 4
filter_size = 3
outer_iters = 2
coding_iters = 3
dict_iters = 3
max_images = 4

[robust]
epochs = 2

[robust.inner_attack]
method = "pgd"
norm = "l2"
epsilon = 0.1
steps = 2

[latent_check]
method = "pgd"
norm = "l2"
epsilon = 0.1
steps = 2
"#;

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn c10_full_run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    let cfg = RunConfig::load(Some(&path), &[]).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let ws = Workspace::new(tmp.path().join(name)).unwrap();
            pool.install(|| cmd_full_run(&cfg, &ws)).unwrap();
            snapshot(ws.dir())
        })
        .collect();
    let differing: Vec<_> = runs[0]
        .iter()
        .filter(|(k, v)| runs[1].get(*k) != Some(*v))
        .map(|(k, _)| k.clone())
        .collect();
    let same = differing.is_empty() && runs[0].len() == runs[1].len();
    report(
        10,
        "determinism",
        same,
        format!("{} files compared at threads=1, differing {differing:?}", runs[0].len()),
    );
}
