use super::*;
use crate::net::{cross_entropy, softmax};
use proptest::prelude::*;
use rand::Rng;

/// Multinomial logistic regression on the flattened input.
struct Linear {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Linear {
    fn random(classes: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: (0..classes)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            bias: (0..classes).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        }
    }

    fn logits(&self, x: ArrayView3<f64>) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }
}

impl GradientModel for Linear {
    fn loss_and_input_gradient(&self, x: ArrayView3<f64>, y: usize) -> Result<(f64, Array3<f64>)> {
        let logits = self.logits(x);
        let mut p = softmax(&logits);
        p[y] -= 1.0;
        let mut g = Array3::zeros(x.raw_dim());
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = p.iter().zip(&self.weights).map(|(pc, w)| pc * w[k]).sum();
        }
        Ok((cross_entropy(&logits, y), g))
    }

    fn predict(&self, x: ArrayView3<f64>) -> Result<usize> {
        Ok(crate::net::argmax(&self.logits(x)))
    }
}

struct Flat;

impl GradientModel for Flat {
    fn loss_and_input_gradient(&self, x: ArrayView3<f64>, _: usize) -> Result<(f64, Array3<f64>)> {
        Ok((1.0, Array3::zeros(x.raw_dim())))
    }

    fn predict(&self, _: ArrayView3<f64>) -> Result<usize> {
        Ok(0)
    }
}

fn input(seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((6, 6, 1), |_| rng.gen_range(0.05..0.95))
}

fn all_configs(eps: f64, seed: u64) -> Vec<AttackConfig> {
    let mut out = Vec::new();
    for norm in [Norm::L2, Norm::Linf] {
        out.push(AttackConfig::fgsm(norm, eps));
        out.push(AttackConfig::bim(norm, eps, 7));
        out.push(AttackConfig::pgd(norm, eps, 5, seed));
    }
    out
}

#[test]
fn zero_budget_is_identity() {
    let m = Linear::random(3, 36, 1);
    let x = input(2);
    for mut cfg in all_configs(0.0, 3) {
        cfg.steps = 50;
        assert_eq!(attack(&m, x.view(), 1, &cfg).unwrap(), x);
    }
}

#[test]
fn zero_gradient_leaves_input() {
    let x = input(4);
    for norm in [Norm::L2, Norm::Linf] {
        assert_eq!(fgsm(&Flat, x.view(), 0, &AttackConfig::fgsm(norm, 0.3)).unwrap(), x);
        assert_eq!(bim(&Flat, x.view(), 0, &AttackConfig::bim(norm, 0.3, 4)).unwrap(), x);
    }
}

#[test]
fn single_step_bim_is_fgsm() {
    let m = Linear::random(4, 36, 5);
    for seed in 0..10 {
        let x = input(seed);
        for norm in [Norm::L2, Norm::Linf] {
            let f = fgsm(&m, x.view(), 2, &AttackConfig::fgsm(norm, 0.08)).unwrap();
            let mut cfg = AttackConfig::bim(norm, 0.08, 1);
            cfg.step_size = Some(0.08);
            let b = bim(&m, x.view(), 2, &cfg).unwrap();
            assert_eq!(f, b);
        }
    }
}

#[test]
fn fgsm_raises_convex_loss() {
    for seed in 0..50 {
        let m = Linear::random(3, 36, seed);
        let x = input(seed + 100);
        let y = (seed % 3) as usize;
        let adv = fgsm(&m, x.view(), y, &AttackConfig::fgsm(Norm::L2, 0.08)).unwrap();
        assert!(m.loss(adv.view(), y).unwrap() >= m.loss(x.view(), y).unwrap());
    }
}

#[test]
fn pgd_is_seeded() {
    let m = Linear::random(3, 36, 7);
    let x = input(8);
    let cfg = AttackConfig::pgd(Norm::L2, 0.5, 5, 11);
    assert_eq!(pgd(&m, x.view(), 0, &cfg).unwrap(), pgd(&m, x.view(), 0, &cfg).unwrap());
    let other = AttackConfig { seed: 12, ..cfg.clone() };
    assert_ne!(pgd(&m, x.view(), 0, &cfg).unwrap(), pgd(&m, x.view(), 0, &other).unwrap());
}

#[test]
fn default_step_sizes() {
    assert_eq!(AttackConfig::fgsm(Norm::L2, 0.08).effective_step_size(), 0.08);
    assert!((AttackConfig::bim(Norm::L2, 0.04, 100).effective_step_size() - 0.004).abs() < 1e-15);
    assert!((AttackConfig::pgd_training(0).effective_step_size() - 0.075).abs() < 1e-15);
    let mut f = AttackConfig::fgsm(Norm::Linf, 0.1);
    f.steps = 9;
    assert_eq!(f.effective_steps(), 1);
}

#[test]
fn invalid_configs() {
    let m = Linear::random(2, 36, 0);
    let x = input(0);
    let mut cfg = AttackConfig::bim(Norm::L2, 0.1, 0);
    assert!(bim(&m, x.view(), 0, &cfg).is_err());
    cfg.steps = 1;
    cfg.epsilon = -1.0;
    assert!(bim(&m, x.view(), 0, &cfg).is_err());
    let bad = x.mapv(|v| v + 1.0);
    assert!(fgsm(&m, bad.view(), 0, &AttackConfig::fgsm(Norm::L2, 0.1)).is_err());
}

#[test]
fn config_serde_round_trip() {
    let cfg = AttackConfig::pgd(Norm::Linf, 0.03, 7, 5);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<AttackConfig>(&text).unwrap(), cfg);
    assert!(serde_json::from_str::<AttackConfig>(r#"{"method":"fgsm","norm":"l2","epsilon":0.1,"bogus":1}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn budget_and_box_hold(seed in 0u64..10_000, eps in 0.0f64..1.5, y in 0usize..3) {
        let m = Linear::random(3, 36, seed);
        let x = input(seed ^ 0xABCD);
        for cfg in all_configs(eps, seed) {
            let adv = attack(&m, x.view(), y, &cfg).unwrap();
            prop_assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(norm_distance(adv.view(), x.view(), cfg.norm) <= eps + 1e-9);
        }
    }

    #[test]
    fn random_start_inside_ball(seed in 0u64..10_000, eps in 0.0f64..2.0) {
        let x = input(seed);
        for norm in [Norm::L2, Norm::Linf] {
            let s = random_start(x.view(), norm, eps, seed);
            prop_assert!(norm_distance(s.view(), x.view(), norm) <= eps + 1e-9);
            prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
