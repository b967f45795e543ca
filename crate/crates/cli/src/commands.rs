//! One function per subcommand. Every command reads its inputs from the
//! output directory and writes new files next to them.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use purikit::attack::{attack_batch, AttackConfig};
use purikit::net::{train_baseline, train_robust, EpochMetrics, NetworkParams};
use purikit::pipeline::{
    adversarial_latent_distance, build_srd, evaluate, ConditionRow, EvaluationReport, Purifier,
    SemanticReconstructionDictionary,
};
use purikit::tensorio::{
    generate, load_bundle, load_cifar10_binary, save_bundle, ArtifactBundle, LabeledDataset,
    NdArray,
};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, RunConfig};
use crate::error::CliError;

pub const TRAIN: &str = "train";
pub const TEST: &str = "test";
pub const BASELINE: &str = "baseline";
pub const SRD: &str = "srd";
pub const ROBUST: &str = "robust";
pub const REPORT_TABLE: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const RECORDS: &str = "records.jsonl";

/// The output directory and its named artifacts.
pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifact_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.bundle"))
    }

    fn load(&self, name: &str) -> Result<ArtifactBundle, CliError> {
        let path = self.artifact_path(name);
        if !path.is_file() {
            return Err(CliError::Dependency {
                name: name.to_string(),
                path,
                producer: producer(name),
            });
        }
        load_bundle(&path).map_err(|source| CliError::Artifact { path, source })
    }

    fn save(&self, name: &str, bundle: &ArtifactBundle) -> Result<(), CliError> {
        let path = self.artifact_path(name);
        save_bundle(bundle, &path).map_err(|source| CliError::Artifact { path: path.clone(), source })?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn parse<T>(
        &self,
        name: &str,
        f: impl FnOnce(&ArtifactBundle) -> purikit::Result<T>,
    ) -> Result<T, CliError> {
        let bundle = self.load(name)?;
        f(&bundle).map_err(|source| CliError::Artifact {
            path: self.artifact_path(name),
            source,
        })
    }

    pub fn dataset(&self, name: &str) -> Result<LabeledDataset, CliError> {
        self.parse(name, LabeledDataset::from_bundle)
    }

    pub fn network(&self, name: &str) -> Result<NetworkParams, CliError> {
        self.parse(name, NetworkParams::from_bundle)
    }

    pub fn srd(&self) -> Result<SemanticReconstructionDictionary, CliError> {
        self.parse(SRD, SemanticReconstructionDictionary::from_bundle)
    }
}

fn producer(name: &str) -> &'static str {
    match name {
        TRAIN | TEST => "synth",
        BASELINE => "train-baseline",
        SRD => "build-srd",
        ROBUST => "train-robust",
        n if n.starts_with("attack-") => "attack",
        _ => "full-run",
    }
}

fn json(value: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).expect("plain data serializes")
}

fn network_bundle(
    params: &NetworkParams,
    history: &[EpochMetrics],
    config: serde_json::Value,
) -> Result<ArtifactBundle, CliError> {
    let mut b = params.to_bundle()?;
    b.set_meta("history", json(&history)).set_meta("config", config);
    Ok(b)
}

/// Generates or loads the train and test splits.
pub fn synth(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let (train, test) = match cfg.dataset.source {
        DataSource::Synth => (generate(&cfg.synth_params(false))?, generate(&cfg.synth_params(true))?),
        DataSource::Cifar => {
            let d = &cfg.dataset;
            let path = |p: &Option<PathBuf>| p.clone().expect("validated");
            (
                load_cifar10_binary(path(&d.train_path), d.limit)?,
                load_cifar10_binary(path(&d.test_path), d.test_limit)?,
            )
        }
    };
    for (name, data, params) in [
        (TRAIN, &train, cfg.synth_params(false)),
        (TEST, &test, cfg.synth_params(true)),
    ] {
        let mut b = data.to_bundle()?;
        b.set_meta("source", json(&cfg.dataset.source));
        if cfg.dataset.source == DataSource::Synth {
            b.set_meta("synth", json(&params));
        }
        ws.save(name, &b)?;
    }
    Ok(())
}

pub fn cmd_train_baseline(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let data = ws.dataset(TRAIN)?;
    let train = cfg.train();
    let out = train_baseline(&data, &train)?;
    if let Some(last) = out.history.last() {
        log::info!("baseline: train accuracy {:.4}", last.accuracy);
    }
    ws.save(BASELINE, &network_bundle(&out.params, &out.history, json(&train))?)
}

pub fn cmd_build_srd(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let data = ws.dataset(TRAIN)?;
    let baseline = ws.network(BASELINE)?;
    let srd = build_srd(&baseline, &data, &cfg.srd())?;
    for c in srd.classes() {
        log::info!(
            "class {}: elbow picked {}, kept {} clusters",
            c.class_id,
            c.selected_count,
            c.cluster_count
        );
    }
    ws.save(SRD, &srd.to_bundle()?)
}

pub fn cmd_train_robust(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let data = ws.dataset(TRAIN)?;
    let srd = ws.srd()?;
    let init = if cfg.robust.warm_start {
        Some(ws.network(BASELINE)?)
    } else {
        None
    };
    let robust = cfg.robust();
    let out = train_robust(&data, &srd.cluster_lookup(), &robust, init.as_ref())?;
    ws.save(ROBUST, &network_bundle(&out.params, &out.history, json(&robust))?)
}

pub fn attack_name(cfg: &AttackConfig) -> String {
    format!("attack-{}", cfg.label())
}

/// Crafts every attack of the grid against the baseline on the test split.
pub fn cmd_attack(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let data = ws.dataset(TEST)?;
    let baseline = ws.network(BASELINE)?;
    for attack in cfg.attacks() {
        let adv = attack_batch(&baseline, data.images(), data.labels(), &attack)?;
        let attacked = LabeledDataset::new(adv, data.labels().to_vec(), data.class_count())?;
        let mut b = attacked.to_bundle()?;
        b.set_meta("attack", json(&attack));
        ws.save(&attack_name(&attack), &b)?;
    }
    Ok(())
}

/// Purifies the dataset artifact `input` and stores the result with a
/// per-sample trace.
pub fn cmd_purify(cfg: &RunConfig, ws: &Workspace, input: &str) -> Result<(), CliError> {
    let robust = ws.network(ROBUST)?;
    let srd = ws.srd()?;
    let data = ws.dataset(input)?;
    let purifier = Purifier::new(&robust, &srd, &cfg.purify())?;
    let results = purifier.purify_batch(data.images())?;
    let n = results.len();
    let mut entries = Vec::with_capacity(2 * n);
    let mut md = Vec::with_capacity(n);
    let mut solver = Vec::with_capacity(2 * n);
    let mut images = Vec::with_capacity(n);
    for (img, trace) in results {
        entries.extend([trace.entry.class_id as u64, trace.entry.cluster_index as u64]);
        md.push(trace.mahalanobis);
        solver.extend([trace.iterations as u64, u64::from(trace.converged)]);
        images.push(img);
    }
    let unconverged = solver.chunks(2).filter(|s| s[1] == 0).count();
    if unconverged > 0 {
        log::warn!("{unconverged} of {n} sparse codes hit the iteration limit");
    }
    let purified = LabeledDataset::new(images, data.labels().to_vec(), data.class_count())?;
    let mut b = purified.to_bundle()?;
    b.set_meta("input", input).set_meta("purify", json(&cfg.purify()));
    b.insert("trace.entry", NdArray::u64(vec![n, 2], entries)?);
    b.insert("trace.mahalanobis", NdArray::f64(vec![n], md)?);
    b.insert("trace.solver", NdArray::u64(vec![n, 2], solver)?);
    ws.save(&format!("purified-{input}"), &b)
}

/// Mean PGD latent distance to the true clusters under each model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDistance {
    pub attack: AttackConfig,
    pub baseline: f64,
    pub robust: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub rows: Vec<ConditionRow>,
    pub latent_distance: LatentDistance,
}

pub fn cmd_eval(cfg: &RunConfig, ws: &Workspace) -> Result<ReportFile, CliError> {
    let data = ws.dataset(TEST)?;
    let baseline = ws.network(BASELINE)?;
    let robust = ws.network(ROBUST)?;
    let srd = ws.srd()?;
    let purifier = Purifier::new(&robust, &srd, &cfg.purify())?;
    let report: EvaluationReport = evaluate(&baseline, &data, &cfg.attacks(), Some(&purifier))?;
    log::info!("evaluation took {:.1?}", report.elapsed);
    let check = cfg.latent_check();
    let latent_distance = LatentDistance {
        baseline: adversarial_latent_distance(&baseline, &baseline, &srd, &data, &check)?,
        robust: adversarial_latent_distance(&robust, &baseline, &srd, &data, &check)?,
        attack: check,
    };
    let file = ReportFile {
        rows: report.rows.clone(),
        latent_distance,
    };

    let mut table = report.to_table();
    table.push_str(&format!(
        "\nlatent distance under {}: baseline {:.4}  robust {:.4}\n",
        file.latent_distance.attack.label(),
        file.latent_distance.baseline,
        file.latent_distance.robust
    ));
    fs::write(ws.dir().join(REPORT_TABLE), &table)?;
    let mut text = serde_json::to_string_pretty(&file).expect("report serializes");
    text.push('\n');
    fs::write(ws.dir().join(REPORT_JSON), text)?;
    let records = fs::File::create(ws.dir().join(RECORDS))?;
    let mut w = BufWriter::new(records);
    report.write_records(&mut w)?;
    std::io::Write::flush(&mut w)?;
    print!("{table}");
    Ok(file)
}

/// All stages in order.
pub fn cmd_full_run(cfg: &RunConfig, ws: &Workspace) -> Result<ReportFile, CliError> {
    fs::write(ws.dir().join("run.toml"), cfg.to_toml())?;
    synth(cfg, ws)?;
    cmd_train_baseline(cfg, ws)?;
    cmd_build_srd(cfg, ws)?;
    cmd_train_robust(cfg, ws)?;
    cmd_attack(cfg, ws)?;
    cmd_purify(cfg, ws, TEST)?;
    cmd_eval(cfg, ws)
}
