use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{match_cluster, ClusterDistribution, ClusterModel, ClusterRef, LatentVector};
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::net::NetworkParams;
use crate::signal::{tikhonov_split, TikhonovConfig};
use crate::sparse::{learn_dictionary, CdlConfig, Dictionary};
use crate::tensorio::{ArtifactBundle, LabeledDataset, NdArray};

pub const SRD_KIND: &str = "srd";

/// Settings for clustering and per-cluster dictionary learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrdConfig {
    /// Largest cluster count tried per class.
    pub psi_max: usize,
    pub atom_count: usize,
    pub filter_size: usize,
    /// ℓ1 weight used while learning the atoms.
    pub lambda_l1: f64,
    /// Tikhonov weight of the split whose high band the atoms are fit to.
    pub lambda_low: f64,
    pub outer_iters: usize,
    pub coding_iters: usize,
    pub dict_iters: usize,
    /// Upper bound on training images per cluster dictionary; members are
    /// subsampled evenly when a cluster is larger.
    pub max_images: usize,
    pub seed: u64,
}

impl Default for SrdConfig {
    fn default() -> Self {
        Self {
            psi_max: 6,
            atom_count: 8,
            filter_size: 5,
            lambda_l1: 0.05,
            lambda_low: TikhonovConfig::default().lambda_low,
            outer_iters: 30,
            coding_iters: 10,
            dict_iters: 10,
            max_images: 48,
            seed: 0,
        }
    }
}

impl SrdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.psi_max < 2 {
            return invalid("psi_max must be at least 2");
        }
        if self.atom_count == 0 || self.filter_size == 0 || self.max_images == 0 {
            return invalid("atom_count, filter_size and max_images must be positive");
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return invalid("lambda_l1 must be finite and >= 0");
        }
        TikhonovConfig::new(self.lambda_low)?;
        self.cdl().validate()
    }

    pub fn cdl(&self) -> CdlConfig {
        CdlConfig {
            outer_iters: self.outer_iters,
            coding_iters: self.coding_iters,
            dict_iters: self.dict_iters,
            ..CdlConfig::for_lambda(self.lambda_l1)
        }
    }
}

/// One cluster of one class with its atoms and latent statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SrdEntry {
    pub id: ClusterRef,
    pub dictionary: Dictionary,
    pub distribution: ClusterDistribution,
    /// Dataset indices of the images in this cluster.
    pub member_ids: Vec<usize>,
}

/// Per-class WCSS curve and selection outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class_id: usize,
    pub wcss_curve: Vec<f64>,
    pub selected_count: usize,
    pub cluster_count: usize,
    pub diagnostics: Vec<String>,
}

/// The semantic reconstruction dictionary: every cluster of every class.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticReconstructionDictionary {
    entries: Vec<SrdEntry>,
    classes: Vec<ClassSummary>,
    config: SrdConfig,
    sample_count: usize,
}

impl SemanticReconstructionDictionary {
    pub fn new(
        entries: Vec<SrdEntry>,
        classes: Vec<ClassSummary>,
        config: SrdConfig,
        sample_count: usize,
    ) -> Result<Self> {
        if entries.is_empty() {
            return invalid("dictionary set needs at least one entry");
        }
        let mut seen = vec![false; sample_count];
        for e in &entries {
            for &id in &e.member_ids {
                if id >= sample_count || std::mem::replace(&mut seen[id], true) {
                    return Err(Error::Format(format!(
                        "sample {id} is out of range or in two clusters"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MissingCluster(missing));
        }
        Ok(Self {
            entries,
            classes,
            config,
            sample_count,
        })
    }

    pub fn entries(&self) -> &[SrdEntry] {
        &self.entries
    }

    pub fn classes(&self) -> &[ClassSummary] {
        &self.classes
    }

    pub fn config(&self) -> &SrdConfig {
        &self.config
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry whose distribution is closest to `latent`, with the distance.
    pub fn match_latent(&self, latent: &[f64]) -> Result<(usize, f64)> {
        let (id, md) = match_cluster(
            latent,
            self.entries.iter().map(|e| (e.id, &e.distribution)),
        )?;
        let index = self
            .entries
            .iter()
            .position(|e| e.id == id)
            .expect("matched id comes from the entries");
        Ok((index, md))
    }

    /// Cluster distribution of every training sample, by dataset index.
    pub fn cluster_lookup(&self) -> Vec<Option<&ClusterDistribution>> {
        let mut out = vec![None; self.sample_count];
        for e in &self.entries {
            for &id in &e.member_ids {
                out[id] = Some(&e.distribution);
            }
        }
        out
    }

    pub fn to_bundle(&self) -> Result<ArtifactBundle> {
        let mut b = ArtifactBundle::new();
        b.set_meta("kind", SRD_KIND)
            .set_meta("entries", self.entries.len() as u64)
            .set_meta("classes", self.classes.len() as u64)
            .set_meta("sample_count", self.sample_count as u64)
            .set_meta(
                "config",
                serde_json::to_value(&self.config).map_err(|e| Error::Format(e.to_string()))?,
            );
        for (i, e) in self.entries.iter().enumerate() {
            let p = format!("entry{i:04}");
            let k = e.distribution.dim();
            b.insert(
                format!("{p}.id"),
                NdArray::u64(
                    vec![3],
                    vec![
                        e.id.class_id as u64,
                        e.id.cluster_index as u64,
                        u64::from(e.distribution.is_pseudo()),
                    ],
                )?,
            );
            b.insert(format!("{p}.atoms"), e.dictionary.to_array()?);
            b.insert(format!("{p}.mean"), NdArray::f64(vec![k], e.distribution.mean().to_vec())?);
            b.insert(
                format!("{p}.covariance"),
                NdArray::f64(vec![k, k], e.distribution.covariance_row_major())?,
            );
            b.insert(
                format!("{p}.inverse"),
                NdArray::f64(vec![k, k], e.distribution.inverse_row_major())?,
            );
            b.insert(
                format!("{p}.members"),
                NdArray::u64(
                    vec![e.member_ids.len()],
                    e.member_ids.iter().map(|&m| m as u64).collect(),
                )?,
            );
        }
        for (c, s) in self.classes.iter().enumerate() {
            let p = format!("class{c:04}");
            b.insert(
                format!("{p}.summary"),
                NdArray::u64(
                    vec![3],
                    vec![
                        s.class_id as u64,
                        s.selected_count as u64,
                        s.cluster_count as u64,
                    ],
                )?,
            );
            b.insert(
                format!("{p}.wcss"),
                NdArray::f64(vec![s.wcss_curve.len()], s.wcss_curve.clone())?,
            );
        }
        Ok(b)
    }

    pub fn from_bundle(b: &ArtifactBundle) -> Result<Self> {
        b.expect_kind(SRD_KIND)?;
        let config: SrdConfig = serde_json::from_value(b.meta_value("config")?.clone())
            .map_err(|e| Error::Format(format!("srd config: {e}")))?;
        let sample_count = b.meta_usize("sample_count")?;
        let mut entries = Vec::new();
        for i in 0..b.meta_usize("entries")? {
            let p = format!("entry{i:04}");
            let (_, id) = b.u64_array(&format!("{p}.id"))?;
            if id.len() != 3 {
                return Err(shape_mismatch("3 id fields", id.len()));
            }
            let (_, mean) = b.f64_array(&format!("{p}.mean"))?;
            let (_, cov) = b.f64_array(&format!("{p}.covariance"))?;
            let (_, inv) = b.f64_array(&format!("{p}.inverse"))?;
            let (_, members) = b.u64_array(&format!("{p}.members"))?;
            entries.push(SrdEntry {
                id: ClusterRef {
                    class_id: id[0] as usize,
                    cluster_index: id[1] as usize,
                },
                dictionary: Dictionary::from_array(b.array(&format!("{p}.atoms"))?)?,
                distribution: ClusterDistribution::from_parts(
                    mean.to_vec(),
                    cov.to_vec(),
                    inv.to_vec(),
                    id[2] != 0,
                )?,
                member_ids: members.iter().map(|&m| m as usize).collect(),
            });
        }
        let mut classes = Vec::new();
        for c in 0..b.meta_usize("classes")? {
            let p = format!("class{c:04}");
            let (_, s) = b.u64_array(&format!("{p}.summary"))?;
            if s.len() != 3 {
                return Err(shape_mismatch("3 summary fields", s.len()));
            }
            let (_, wcss) = b.f64_array(&format!("{p}.wcss"))?;
            classes.push(ClassSummary {
                class_id: s[0] as usize,
                selected_count: s[1] as usize,
                cluster_count: s[2] as usize,
                wcss_curve: wcss.to_vec(),
                diagnostics: Vec::new(),
            });
        }
        Self::new(entries, classes, config, sample_count)
    }
}

/// Latent vectors of every image, in dataset order.
pub fn extract_latents(params: &NetworkParams, dataset: &LabeledDataset) -> Result<Vec<LatentVector>> {
    dataset
        .images()
        .par_iter()
        .map(|im| params.latent(im.view()))
        .collect()
}

fn evenly_spaced(ids: &[usize], cap: usize) -> Vec<usize> {
    if ids.len() <= cap {
        return ids.to_vec();
    }
    (0..cap).map(|i| ids[i * ids.len() / cap]).collect()
}

/// Clusters the baseline latents of every class and learns one dictionary
/// per cluster from the high bands of that cluster's images.
pub fn build_srd(
    baseline: &NetworkParams,
    dataset: &LabeledDataset,
    cfg: &SrdConfig,
) -> Result<SemanticReconstructionDictionary> {
    cfg.validate()?;
    if dataset.is_empty() {
        return invalid("cannot build a dictionary set from an empty dataset");
    }
    let latents = extract_latents(baseline, dataset)?;
    let models: Vec<ClusterModel> = (0..dataset.class_count())
        .into_par_iter()
        .map(|c| {
            let ids = dataset.indices_of_class(c);
            let lat: Vec<LatentVector> = ids.iter().map(|&i| latents[i].clone()).collect();
            ClusterModel::fit(c, &lat, &ids, cfg.psi_max, cfg.seed.wrapping_add(c as u64))
        })
        .collect::<Result<_>>()?;
    for m in &models {
        for d in &m.diagnostics {
            log::warn!("{d}");
        }
    }

    let tik = TikhonovConfig::new(cfg.lambda_low)?;
    let jobs: Vec<(ClusterRef, &ClusterDistribution, &Vec<usize>)> = models
        .iter()
        .flat_map(|m| {
            (0..m.cluster_count()).map(move |k| {
                (
                    ClusterRef {
                        class_id: m.class_id,
                        cluster_index: k,
                    },
                    &m.distributions[k],
                    &m.member_ids[k],
                )
            })
        })
        .collect();
    let cdl = cfg.cdl();
    let entries: Vec<SrdEntry> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(id, dist, members))| {
            let highs: Vec<Array3<f64>> = evenly_spaced(members, cfg.max_images)
                .into_iter()
                .map(|i| tikhonov_split(dataset.images()[i].view(), &tik).map(|s| s.high))
                .collect::<Result<_>>()?;
            let seed = cfg.seed.wrapping_add(1000 + j as u64);
            let dictionary = learn_dictionary(
                &highs,
                cfg.atom_count,
                cfg.filter_size,
                cfg.lambda_l1,
                &cdl,
                seed,
            )?;
            Ok(SrdEntry {
                id,
                dictionary,
                distribution: dist.clone(),
                member_ids: members.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let classes = models
        .iter()
        .map(|m| ClassSummary {
            class_id: m.class_id,
            wcss_curve: m.wcss_curve.clone(),
            selected_count: m.selected_count,
            cluster_count: m.cluster_count(),
            diagnostics: m.diagnostics.clone(),
        })
        .collect();
    SemanticReconstructionDictionary::new(entries, classes, cfg.clone(), dataset.len())
}
