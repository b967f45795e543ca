//! Run configuration: one TOML document, every key known and checked before
//! any compute starts.

use std::fs;
use std::path::{Path, PathBuf};

use purikit::attack::{AttackConfig, AttackMethod, Norm};
use purikit::net::{RobustTrainConfig, TrainConfig};
use purikit::pipeline::{PurifyConfig, SrdConfig};
use purikit::sparse::AdmmConfig;
use purikit::tensorio::SynthParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Offsets added to the run seed for each stage.
pub mod stage {
    pub const TRAIN_DATA: u64 = 0;
    pub const TEST_DATA: u64 = 1;
    pub const BASELINE: u64 = 2;
    pub const SRD: u64 = 3;
    pub const ROBUST: u64 = 4;
    pub const ATTACK: u64 = 5;
    pub const LATENT_CHECK: u64 = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synth,
    Cifar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub source: DataSource,
    pub class_count: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub side: usize,
    pub noise_sigma: f64,
    pub contrast: f64,
    /// CIFAR-10 binary batches, used when `source = "cifar"`.
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synth,
            class_count: 4,
            per_class: 120,
            test_per_class: 120,
            side: 12,
            noise_sigma: 0.02,
            contrast: 0.12,
            train_path: None,
            test_path: None,
            limit: None,
            test_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.05,
            weight_decay: 1e-4,
        }
    }
}

/// An attack without its seed; seeds come from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub method: AttackMethod,
    pub norm: Norm,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
}

impl AttackSpec {
    pub fn new(method: AttackMethod, norm: Norm, epsilon: f64, steps: Option<usize>) -> Self {
        Self {
            method,
            norm,
            epsilon,
            steps,
            step_size: None,
        }
    }

    pub fn with_seed(&self, seed: u64) -> AttackConfig {
        let mut cfg = match self.method {
            AttackMethod::Fgsm => AttackConfig::fgsm(self.norm, self.epsilon),
            AttackMethod::Bim => AttackConfig::bim(self.norm, self.epsilon, 10),
            AttackMethod::Pgd => AttackConfig::pgd(self.norm, self.epsilon, 10, seed),
        };
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        cfg.step_size = self.step_size;
        cfg.seed = seed;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub alpha: f64,
    /// Start from the baseline weights instead of a fresh draw.
    pub warm_start: bool,
    pub inner_attack: AttackSpec,
}

impl Default for RobustSection {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            learning_rate: 2e-4,
            weight_decay: 1e-4,
            alpha: 0.3,
            warm_start: true,
            inner_attack: AttackSpec::new(AttackMethod::Pgd, Norm::L2, 0.1, Some(10)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrdSection {
    pub psi_max: usize,
    pub atom_count: usize,
    pub filter_size: usize,
    pub lambda_l1: f64,
    pub lambda_low: f64,
    pub outer_iters: usize,
    pub coding_iters: usize,
    pub dict_iters: usize,
    pub max_images: usize,
}

impl Default for SrdSection {
    fn default() -> Self {
        let d = SrdConfig::default();
        Self {
            psi_max: d.psi_max,
            atom_count: d.atom_count,
            filter_size: d.filter_size,
            lambda_l1: d.lambda_l1,
            lambda_low: d.lambda_low,
            outer_iters: d.outer_iters,
            coding_iters: d.coding_iters,
            dict_iters: d.dict_iters,
            max_images: d.max_images,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurifySection {
    pub lambda_low: f64,
    pub lambda_l1: f64,
    pub admm: AdmmConfig,
}

impl Default for PurifySection {
    fn default() -> Self {
        let d = PurifyConfig::default();
        Self {
            lambda_low: d.lambda_low,
            lambda_l1: d.lambda_l1,
            admm: d.admm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub net: NetSection,
    pub srd: SrdSection,
    pub robust: RobustSection,
    pub purify: PurifySection,
    /// Attacks evaluated against the baseline.
    pub attacks: Vec<AttackSpec>,
    /// Attack used to compare latent distances of the two models.
    pub latent_check: AttackSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dataset: DatasetSection::default(),
            net: NetSection::default(),
            srd: SrdSection::default(),
            robust: RobustSection::default(),
            purify: PurifySection::default(),
            attacks: [0.02, 0.04, 0.08]
                .into_iter()
                .map(|e| AttackSpec::new(AttackMethod::Fgsm, Norm::L2, e, None))
                .collect(),
            latent_check: AttackSpec::new(AttackMethod::Pgd, Norm::L2, 0.1, Some(10)),
        }
    }
}

impl RunConfig {
    /// Reads `path` (or the defaults when `None`), then applies
    /// `key.path=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        let file = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        merge(&mut table, file);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn stage_seed(&self, offset: u64) -> u64 {
        self.seed.wrapping_add(offset)
    }

    pub fn synth_params(&self, test: bool) -> SynthParams {
        let d = &self.dataset;
        SynthParams {
            class_count: d.class_count,
            per_class: if test { d.test_per_class } else { d.per_class },
            side: d.side,
            noise_sigma: d.noise_sigma,
            seed: self.stage_seed(if test { stage::TEST_DATA } else { stage::TRAIN_DATA }),
            contrast: d.contrast,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.net.epochs,
            batch_size: self.net.batch_size,
            learning_rate: self.net.learning_rate,
            weight_decay: self.net.weight_decay,
            seed: self.stage_seed(stage::BASELINE),
        }
    }

    pub fn robust(&self) -> RobustTrainConfig {
        let r = &self.robust;
        let seed = self.stage_seed(stage::ROBUST);
        RobustTrainConfig {
            epochs: r.epochs,
            batch_size: r.batch_size,
            learning_rate: r.learning_rate,
            weight_decay: r.weight_decay,
            seed,
            alpha: r.alpha,
            inner_attack: r.inner_attack.with_seed(seed),
        }
    }

    pub fn srd(&self) -> SrdConfig {
        let s = &self.srd;
        SrdConfig {
            psi_max: s.psi_max,
            atom_count: s.atom_count,
            filter_size: s.filter_size,
            lambda_l1: s.lambda_l1,
            lambda_low: s.lambda_low,
            outer_iters: s.outer_iters,
            coding_iters: s.coding_iters,
            dict_iters: s.dict_iters,
            max_images: s.max_images,
            seed: self.stage_seed(stage::SRD),
        }
    }

    pub fn purify(&self) -> PurifyConfig {
        PurifyConfig {
            lambda_low: self.purify.lambda_low,
            lambda_l1: self.purify.lambda_l1,
            admm: self.purify.admm,
        }
    }

    pub fn attacks(&self) -> Vec<AttackConfig> {
        self.attacks
            .iter()
            .map(|a| a.with_seed(self.stage_seed(stage::ATTACK)))
            .collect()
    }

    pub fn latent_check(&self) -> AttackConfig {
        self.latent_check.with_seed(self.stage_seed(stage::LATENT_CHECK))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: purikit::Error| CliError::Config(e.to_string());
        let d = &self.dataset;
        match d.source {
            DataSource::Synth => {
                if d.class_count < 2 || d.per_class == 0 || d.test_per_class == 0 {
                    return Err(CliError::Config(
                        "dataset needs class_count >= 2 and positive per_class/test_per_class".into(),
                    ));
                }
                if d.side < 8 || !(d.noise_sigma >= 0.0) || !(d.contrast > 0.0) {
                    return Err(CliError::Config(
                        "dataset needs side >= 8, noise_sigma >= 0 and contrast > 0".into(),
                    ));
                }
            }
            DataSource::Cifar => {
                for (key, p) in [("train_path", &d.train_path), ("test_path", &d.test_path)] {
                    match p {
                        None => {
                            return Err(CliError::Config(format!(
                                "dataset.{key} is required for source = \"cifar\""
                            )))
                        }
                        Some(p) if !p.is_file() => {
                            return Err(CliError::Config(format!(
                                "dataset.{key}: {} does not exist",
                                p.display()
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        self.train().validate().map_err(bad)?;
        self.robust().validate().map_err(bad)?;
        self.srd().validate().map_err(bad)?;
        self.purify().validate().map_err(bad)?;
        for a in self.attacks().iter().chain([&self.latent_check()]) {
            a.validate().map_err(bad)?;
        }
        let mut labels: Vec<String> = self.attacks().iter().map(|a| a.label()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("attack grid contains duplicate entries".into()));
        }
        Ok(())
    }
}

/// Overlays `top` on `base`; tables merge key by key, anything else
/// (including arrays) replaces.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets `a.b.c=value` in `table`. The value is read as a TOML literal and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, text: &str) -> Result<(), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{text}` is not KEY=VALUE")))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override `{key}`: `{part}` is not a section"))
        })?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
