use ndarray::{Array3, Array4};
use purikit::signal::circular_correlate;
use purikit::sparse::{
    cbpdn, lambda_max, learn_dictionary_with_report, reconstruct, AdmmConfig, CdlConfig,
    CoefficientMaps, Dictionary, NORM_SLACK,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four smooth, mutually distinct 5×5 atoms.
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

fn sparse_training_set(truth: &Dictionary, count: usize, seed: u64) -> Vec<Array3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut maps = CoefficientMaps::zeros(truth.atom_count(), 16, 16);
            for _ in 0..5 {
                let m = rng.gen_range(0..truth.atom_count());
                let (i, j) = (rng.gen_range(0..16), rng.gen_range(0..16));
                maps.maps_mut()[[m, i, j]] =
                    rng.gen_range(0.5..1.5) * if rng.gen() { 1.0 } else { -1.0 };
            }
            reconstruct(truth, &maps).unwrap()
        })
        .collect()
}

#[test]
fn recovers_known_four_atom_dictionary() {
    let truth = ground_truth_atoms();
    let images = sparse_training_set(&truth, 24, 3);
    let lam = 0.01;
    let mut cfg = CdlConfig::for_lambda(lam);
    cfg.outer_iters = 100;
    let report = learn_dictionary_with_report(&images, 4, 5, lam, &cfg, 1).unwrap();
    assert!(report.final_recon_error <= 0.05);
    assert!(report
        .dictionary
        .atom_norms()
        .iter()
        .all(|&n| n <= 1.0 + NORM_SLACK));
}

#[test]
fn planted_atom_recovery() {
    let truth = ground_truth_atoms();
    let mut image = Array3::zeros((16, 16, 1));
    for p in 0..5 {
        for q in 0..5 {
            image[[p, q, 0]] = truth.atoms()[[1, p, q, 0]];
        }
    }
    // a single unit-norm atom in an otherwise empty image has lambda_max = 1
    let lam = 0.1;
    let mut cfg = CdlConfig::for_lambda(lam);
    cfg.outer_iters = 200;
    let report = learn_dictionary_with_report(&[image], 1, 5, lam, &cfg, 2).unwrap();
    let learned = report
        .dictionary
        .atoms()
        .slice(ndarray::s![0, .., .., 0])
        .to_owned();
    // best circular alignment on the 16×16 grid
    let mut canvas = ndarray::Array2::zeros((16, 16));
    for p in 0..5 {
        for q in 0..5 {
            canvas[[p, q]] = truth.atoms()[[1, p, q, 0]];
        }
    }
    let corr = circular_correlate(&canvas, &learned).unwrap();
    let best = corr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let norm = learned.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(best / norm >= 0.99);
}

#[test]
fn lambda_above_max_gives_zero() {
    let truth = ground_truth_atoms();
    let images = sparse_training_set(&truth, 3, 9);
    for x in &images {
        let lm = lambda_max(&truth, x.view()).unwrap();
        for scale in [1.0, 1.5] {
            let lam = lm * scale;
            let (maps, _) = cbpdn(&truth, x.view(), lam, &AdmmConfig::for_lambda(lam)).unwrap();
            assert!(maps.maps().iter().all(|&v| v == 0.0), "scale {scale}");
        }
    }
}
