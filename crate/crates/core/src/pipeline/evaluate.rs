use std::fmt::Write as _;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::purify::Purifier;
use crate::attack::{attack_batch, AttackConfig};
use crate::error::{invalid, Error, Result};
use crate::net::NetworkParams;
use crate::tensorio::{Image, LabeledDataset};

pub const CLEAN: &str = "clean";

/// Accuracy of one condition, with and without purification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub attack: Option<AttackConfig>,
    pub samples: usize,
    pub accuracy: f64,
    pub purified_accuracy: Option<f64>,
}

/// One line of the per-sample record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub condition: String,
    pub index: usize,
    pub label: usize,
    pub prediction: usize,
    pub purified_prediction: Option<usize>,
    pub matched_class: Option<usize>,
    pub matched_cluster: Option<usize>,
    pub mahalanobis: Option<f64>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ConditionRow>,
    pub records: Vec<SampleRecord>,
    /// Wall time; kept out of the written files so they stay reproducible.
    pub elapsed: Duration,
}

impl EvaluationReport {
    pub fn row(&self, condition: &str) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    /// Fixed-width table, one line per condition.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.condition.len())
            .max()
            .unwrap_or(0)
            .max("condition".len());
        let _ = writeln!(out, "{:<width$}  {:>7}  {:>8}  {:>8}", "condition", "samples", "accuracy", "purified");
        for r in &self.rows {
            let purified = r
                .purified_accuracy
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>8.4}  {:>8}",
                r.condition, r.samples, r.accuracy, purified
            );
        }
        out
    }

    /// One JSON object per line, conditions in row order, samples in
    /// dataset order.
    pub fn write_records<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(|e| Error::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.rows).map_err(|e| Error::Format(e.to_string()))
    }
}

fn accuracy(hits: impl Iterator<Item = bool>, n: usize) -> f64 {
    hits.filter(|&h| h).count() as f64 / n as f64
}

fn run_condition(
    name: String,
    attack: Option<AttackConfig>,
    classifier: &NetworkParams,
    images: &[Image],
    labels: &[usize],
    purifier: Option<&Purifier<'_>>,
) -> Result<(ConditionRow, Vec<SampleRecord>)> {
    let records: Vec<SampleRecord> = images
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(index, (x, &label))| {
            let prediction = classifier.predict(x.view())?;
            let mut rec = SampleRecord {
                condition: name.clone(),
                index,
                label,
                prediction,
                purified_prediction: None,
                matched_class: None,
                matched_cluster: None,
                mahalanobis: None,
                converged: None,
            };
            if let Some(p) = purifier {
                let (pure, trace) = p.purify(x)?;
                rec.purified_prediction = Some(classifier.predict(pure.view())?);
                rec.matched_class = Some(trace.entry.class_id);
                rec.matched_cluster = Some(trace.entry.cluster_index);
                rec.mahalanobis = Some(trace.mahalanobis);
                rec.converged = Some(trace.converged);
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let n = records.len();
    let row = ConditionRow {
        condition: name,
        attack,
        samples: n,
        accuracy: accuracy(records.iter().map(|r| r.prediction == r.label), n),
        purified_accuracy: purifier.map(|_| {
            accuracy(
                records.iter().map(|r| r.purified_prediction == Some(r.label)),
                n,
            )
        }),
    };
    Ok((row, records))
}

/// Accuracy of `classifier` on clean data and under each attack, optionally
/// after purification. Attacks are crafted against `classifier` alone; the
/// purifier is not part of the attacked model.
pub fn evaluate(
    classifier: &NetworkParams,
    dataset: &LabeledDataset,
    attacks: &[AttackConfig],
    purifier: Option<&Purifier<'_>>,
) -> Result<EvaluationReport> {
    if dataset.is_empty() {
        return invalid("cannot evaluate on an empty dataset");
    }
    let start = Instant::now();
    let mut rows = Vec::with_capacity(attacks.len() + 1);
    let mut records = Vec::new();
    let (row, recs) = run_condition(
        CLEAN.into(),
        None,
        classifier,
        dataset.images(),
        dataset.labels(),
        purifier,
    )?;
    rows.push(row);
    records.extend(recs);
    for cfg in attacks {
        let adv = attack_batch(classifier, dataset.images(), dataset.labels(), cfg)?;
        let (row, recs) = run_condition(
            cfg.label(),
            Some(cfg.clone()),
            classifier,
            &adv,
            dataset.labels(),
            purifier,
        )?;
        rows.push(row);
        records.extend(recs);
    }
    Ok(EvaluationReport {
        rows,
        records,
        elapsed: start.elapsed(),
    })
}
