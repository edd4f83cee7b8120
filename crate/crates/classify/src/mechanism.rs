//! Three-way mechanism prediction for extraction-worthy patterns.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slicemine_core::labels::{AggregatedLabel, ExtractionMajority, Mechanism};
use slicemine_core::mine::PatternStats;

use crate::baseline::{discordant, mcnemar, rule_mechanism, McNemar};
use crate::eval::{stratified_folds, CvConfig};
use crate::features::featurize;
use crate::gbdt::{train_multiclass, Gbdt, GbdtParams};
use crate::{ClassifyError, Result};

pub const N_MECHANISMS: usize = 3;

/// Patterns with a yes majority and a concrete mechanism majority.
pub fn mechanism_items<'a>(patterns: &'a [PatternStats], labels: &[AggregatedLabel]) -> Vec<(&'a PatternStats, Mechanism)> {
    let by_ref: HashMap<String, &PatternStats> = patterns.iter().map(|p| (p.pattern_ref(), p)).collect();
    let mut out: Vec<(&PatternStats, Mechanism)> = labels
        .iter()
        .filter(|l| l.extraction_majority == ExtractionMajority::Yes)
        .filter_map(|l| {
            let m = l.mechanism_majority?;
            m.class_index()?;
            Some((*by_ref.get(&l.pattern_ref)?, m))
        })
        .collect();
    out.sort_by_key(|(p, _)| p.pattern_ref());
    out
}

fn matrix(items: &[(&PatternStats, Mechanism)]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let x = items
        .iter()
        .map(|(p, _)| featurize(p).map(|f| f.to_array().to_vec()))
        .collect::<Result<_>>()?;
    let y = items.iter().map(|(_, m)| m.class_index().expect("concrete")).collect();
    Ok((x, y))
}

pub fn train_mechanism(items: &[(&PatternStats, Mechanism)], params: &GbdtParams) -> Result<Gbdt> {
    let (x, y) = matrix(items)?;
    train_multiclass(&x, &y, N_MECHANISMS, params)
}

pub fn predict_mechanism(model: &Gbdt, p: &PatternStats) -> Result<Mechanism> {
    let f = featurize(p)?;
    Ok(Mechanism::CONCRETE[model.predict_class(&f.to_array())])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub mechanism: Mechanism,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub accuracy: f64,
    /// Mean F1 over classes present in the truth.
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// confusion[truth][predicted]
    pub confusion: Vec<Vec<usize>>,
}

pub fn multiclass_metrics(pred: &[usize], truth: &[usize]) -> MulticlassMetrics {
    let mut confusion = vec![vec![0usize; N_MECHANISMS]; N_MECHANISMS];
    for (p, t) in pred.iter().zip(truth) {
        confusion[*t][*p] += 1;
    }
    let correct: usize = (0..N_MECHANISMS).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..N_MECHANISMS)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let predicted: usize = (0..N_MECHANISMS).map(|t| confusion[t][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                mechanism: Mechanism::CONCRETE[c],
                support,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
    MulticlassMetrics {
        accuracy: if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 },
        macro_f1: present.iter().map(|c| c.f1).sum::<f64>() / present.len().max(1) as f64,
        per_class,
        confusion,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOof {
    pub pattern_ref: String,
    pub label: Mechanism,
    pub learned: Mechanism,
    pub rule: Mechanism,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismReport {
    pub n_items: usize,
    pub k: usize,
    pub learned: MulticlassMetrics,
    pub rule: MulticlassMetrics,
    /// b = learned right only, c = rule right only
    pub mcnemar: McNemar,
    pub oof: Vec<MechanismOof>,
}

/// Stratified k-fold evaluation of the learned predictor next to the
/// scope rule on the same items.
pub fn evaluate_mechanism_cv(items: &[(&PatternStats, Mechanism)], cfg: &CvConfig) -> Result<MechanismReport> {
    let (x, y) = matrix(items)?;
    let mut present = y.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(ClassifyError::DegenerateLabels("mechanism evaluation needs at least two classes".into()));
    }
    if y.len() < cfg.k {
        return Err(ClassifyError::FoldTooSmall(format!("{} items for {} folds", y.len(), cfg.k)));
    }
    let folds = stratified_folds(&y, cfg.k, cfg.seed);
    let per_fold: Vec<Vec<(usize, usize)>> = (0..cfg.k)
        .into_par_iter()
        .map(|f| -> Result<Vec<(usize, usize)>> {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let m = train_multiclass(&xt, &yt, N_MECHANISMS, &cfg.params)?;
            Ok((0..y.len())
                .filter(|&i| folds[i] == f)
                .map(|i| (i, m.predict_class(&x[i])))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut learned = vec![0; y.len()];
    for (i, c) in per_fold.into_iter().flatten() {
        learned[i] = c;
    }
    let rule: Vec<usize> = items
        .iter()
        .map(|(p, _)| rule_mechanism(p).and_then(|m| m.class_index()).expect("scope-eligible"))
        .collect();
    let (b, c) = discordant(&learned, &rule, &y);
    Ok(MechanismReport {
        n_items: y.len(),
        k: cfg.k,
        learned: multiclass_metrics(&learned, &y),
        rule: multiclass_metrics(&rule, &y),
        mcnemar: mcnemar(b, c),
        oof: items
            .iter()
            .enumerate()
            .map(|(i, (p, m))| MechanismOof {
                pattern_ref: p.pattern_ref(),
                label: *m,
                learned: Mechanism::CONCRETE[learned[i]],
                rule: Mechanism::CONCRETE[rule[i]],
            })
            .collect(),
    })
}
