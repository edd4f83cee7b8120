//! Stratified k-fold evaluation with pooled out-of-fold predictions and
//! percentile bootstrap intervals.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slicemine_core::hash::derive_seed;
use slicemine_core::labels::{AggregatedLabel, ExtractionMajority};
use slicemine_core::mine::PatternStats;
use slicemine_core::stats::percentile;

use crate::baseline::{discordant, mcnemar, rule_baseline_ew, McNemar};
use crate::features::{featurize, FEATURE_NAMES};
use crate::gbdt::{train_binary, Gbdt, GbdtParams};
use crate::{ClassifyError, Result};

pub const THRESHOLD: f64 = 0.5;

/// yes → positive; no, uncertain and flagged_spec → negative; ties excluded.
pub fn binary_target(label: &AggregatedLabel) -> Option<bool> {
    match label.extraction_majority {
        ExtractionMajority::Yes => Some(true),
        ExtractionMajority::Tie => None,
        _ => Some(false),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn of(pred: &[bool], truth: &[bool]) -> Confusion {
        let mut c = Confusion::default();
        for (p, t) in pred.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// None when the truth has a single class.
    pub roc_auc: Option<f64>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Metrics at a fixed decision. `scores` feed the AUC; pass the hard
/// decisions as 0/1 scores for predictors without a probability.
pub fn binary_metrics(pred: &[bool], scores: &[f64], truth: &[bool]) -> BinaryMetrics {
    let c = Confusion::of(pred, truth);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BinaryMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, truth.len()),
        roc_auc: roc_auc(scores, truth),
    }
}

/// Mann-Whitney AUC with tied scores counted as one half.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n_pos = truth.iter().filter(|t| **t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if truth[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_samples(samples: &[f64]) -> Option<Interval> {
        if samples.is_empty() {
            return None;
        }
        Some(Interval {
            median: percentile(samples, 50.0),
            lower: percentile(samples, 2.5),
            upper: percentile(samples, 97.5),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub precision: Option<Interval>,
    pub recall: Option<Interval>,
    pub f1: Option<Interval>,
    pub accuracy: Option<Interval>,
    /// Resamples with a single class are skipped for AUC.
    pub roc_auc: Option<Interval>,
}

/// Percentile bootstrap over (prediction, score, truth) triples.
pub fn bootstrap(pred: &[bool], scores: &[f64], truth: &[bool], resamples: usize, seed: u64) -> BootstrapSummary {
    let n = truth.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bootstrap", 0));
    let mut cols: [Vec<f64>; 5] = Default::default();
    let (mut p, mut s, mut t) = (vec![false; n], vec![0.0; n], vec![false; n]);
    for _ in 0..resamples {
        if n == 0 {
            break;
        }
        for k in 0..n {
            let i = rng.gen_range(0..n);
            p[k] = pred[i];
            s[k] = scores[i];
            t[k] = truth[i];
        }
        let m = binary_metrics(&p, &s, &t);
        cols[0].push(m.precision);
        cols[1].push(m.recall);
        cols[2].push(m.f1);
        cols[3].push(m.accuracy);
        if let Some(a) = m.roc_auc {
            cols[4].push(a);
        }
    }
    BootstrapSummary {
        resamples,
        precision: Interval::from_samples(&cols[0]),
        recall: Interval::from_samples(&cols[1]),
        f1: Interval::from_samples(&cols[2]),
        accuracy: Interval::from_samples(&cols[3]),
        roc_auc: Interval::from_samples(&cols[4]),
    }
}

/// Stratified fold index per item. Each class is shuffled and dealt round
/// robin over the folds.
pub fn stratified_folds(classes: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut fold = vec![0; classes.len()];
    let mut labels: Vec<usize> = classes.to_vec();
    labels.sort_unstable();
    labels.dedup();
    for c in labels {
        let mut idx: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "folds", c as u64)));
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    fold
}

#[derive(Debug, Clone, Copy)]
pub struct CvConfig {
    pub k: usize,
    pub bootstrap: usize,
    pub seed: u64,
    pub params: GbdtParams,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            bootstrap: 1000,
            seed: 0,
            params: GbdtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofPrediction {
    pub pattern_ref: String,
    pub fold: usize,
    pub label: bool,
    pub probability: f64,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: BinaryMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub name: String,
    pub metrics: BinaryMetrics,
    pub confusion: Confusion,
    pub bootstrap: BootstrapSummary,
    /// b = model right only, c = baseline right only
    pub mcnemar: McNemar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_items: usize,
    pub n_positive: usize,
    pub k: usize,
    pub seed: u64,
    pub per_fold: Vec<FoldMetrics>,
    pub fold_mean: BinaryMetrics,
    pub pooled: BinaryMetrics,
    pub confusion: Confusion,
    pub bootstrap: BootstrapSummary,
    pub baselines: Vec<BaselineComparison>,
    pub feature_importances: Vec<(String, f64)>,
    pub oof: Vec<OofPrediction>,
}

/// Out-of-fold probabilities for a binary task. Every item is predicted
/// exactly once, by the model that did not see it.
pub fn cross_val_predict(x: &[Vec<f64>], y: &[bool], cfg: &CvConfig) -> Result<(Vec<usize>, Vec<f64>)> {
    if cfg.k < 2 {
        return Err(ClassifyError::InvalidInput("k must be at least 2".into()));
    }
    let pos = y.iter().filter(|v| **v).count();
    if pos == 0 || pos == y.len() {
        return Err(ClassifyError::DegenerateLabels("both classes are required".into()));
    }
    if pos < cfg.k || y.len() - pos < cfg.k {
        return Err(ClassifyError::FoldTooSmall(format!(
            "{} positives and {} negatives cannot fill {} stratified folds",
            pos,
            y.len() - pos,
            cfg.k
        )));
    }
    let classes: Vec<usize> = y.iter().map(|&b| b as usize).collect();
    let folds = stratified_folds(&classes, cfg.k, cfg.seed);
    let per_fold: Vec<Vec<(usize, f64)>> = (0..cfg.k)
        .into_par_iter()
        .map(|f| -> Result<Vec<(usize, f64)>> {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let m = train_binary(&xt, &yt, &cfg.params)?;
            Ok((0..y.len())
                .filter(|&i| folds[i] == f)
                .map(|i| (i, m.predict_proba(&x[i])))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut prob = vec![0.0; y.len()];
    for (i, p) in per_fold.into_iter().flatten() {
        prob[i] = p;
    }
    Ok((folds, prob))
}

pub fn compare_baseline(
    name: &str,
    model_pred: &[bool],
    baseline_pred: &[bool],
    truth: &[bool],
    resamples: usize,
    seed: u64,
) -> BaselineComparison {
    let scores: Vec<f64> = baseline_pred.iter().map(|&b| b as u8 as f64).collect();
    let (b, c) = discordant(model_pred, baseline_pred, truth);
    BaselineComparison {
        name: name.to_string(),
        metrics: binary_metrics(baseline_pred, &scores, truth),
        confusion: Confusion::of(baseline_pred, truth),
        bootstrap: bootstrap(baseline_pred, &scores, truth, resamples, seed),
        mcnemar: mcnemar(b, c),
    }
}

fn mean_metrics(ms: &[BinaryMetrics]) -> BinaryMetrics {
    let n = ms.len().max(1) as f64;
    let aucs: Vec<f64> = ms.iter().filter_map(|m| m.roc_auc).collect();
    BinaryMetrics {
        precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
        accuracy: ms.iter().map(|m| m.accuracy).sum::<f64>() / n,
        roc_auc: if aucs.is_empty() {
            None
        } else {
            Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
        },
    }
}

/// A labelled item for the extraction-worthy task.
pub struct LabelledPattern<'a> {
    pub pattern: &'a PatternStats,
    pub label: bool,
}

/// Join aggregated labels to patterns; ties and labels without a pattern
/// are dropped.
pub fn labelled_patterns<'a>(patterns: &'a [PatternStats], labels: &[AggregatedLabel]) -> Vec<LabelledPattern<'a>> {
    let by_ref: std::collections::HashMap<String, &PatternStats> =
        patterns.iter().map(|p| (p.pattern_ref(), p)).collect();
    let mut out = Vec::new();
    for l in labels {
        let Some(target) = binary_target(l) else { continue };
        match by_ref.get(&l.pattern_ref) {
            Some(p) => out.push(LabelledPattern { pattern: p, label: target }),
            None => log::warn!("label for unknown pattern {}", l.pattern_ref),
        }
    }
    out.sort_by_key(|l| l.pattern.pattern_ref());
    out
}

/// Cross-validated evaluation of the extraction-worthy classifier against
/// the outlier-fraction rule and the all-yes predictor.
pub fn evaluate_ew(items: &[LabelledPattern], cfg: &CvConfig) -> Result<EvalReport> {
    if items.len() < 20 {
        return Err(ClassifyError::InvalidInput(format!("{} labelled items, at least 20 required", items.len())));
    }
    let x: Vec<Vec<f64>> = items
        .iter()
        .map(|l| featurize(l.pattern).map(|f| f.to_array().to_vec()))
        .collect::<Result<_>>()?;
    let y: Vec<bool> = items.iter().map(|l| l.label).collect();
    let (folds, prob) = cross_val_predict(&x, &y, cfg)?;
    let pred: Vec<bool> = prob.iter().map(|&p| p >= THRESHOLD).collect();

    let per_fold: Vec<FoldMetrics> = (0..cfg.k)
        .map(|f| {
            let idx: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            let pick = |v: &[bool]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let s: Vec<f64> = idx.iter().map(|&i| prob[i]).collect();
            FoldMetrics {
                fold: f,
                n_test: idx.len(),
                metrics: binary_metrics(&pick(&pred), &s, &pick(&y)),
            }
        })
        .collect();
    let fold_metrics: Vec<BinaryMetrics> = per_fold.iter().map(|f| f.metrics).collect();

    let rule: Vec<bool> = items.iter().map(|l| rule_baseline_ew(l.pattern)).collect();
    let all_yes = vec![true; y.len()];
    let baselines = vec![
        compare_baseline("rule_outlier_lt_0.3", &pred, &rule, &y, cfg.bootstrap, cfg.seed),
        compare_baseline("all_yes", &pred, &all_yes, &y, cfg.bootstrap, cfg.seed),
    ];

    let full: Gbdt = train_binary(&x, &y, &cfg.params)?;
    let feature_importances = FEATURE_NAMES
        .iter()
        .zip(full.feature_importances())
        .map(|(n, v)| (n.to_string(), v))
        .collect();

    Ok(EvalReport {
        n_items: y.len(),
        n_positive: y.iter().filter(|v| **v).count(),
        k: cfg.k,
        seed: cfg.seed,
        fold_mean: mean_metrics(&fold_metrics),
        per_fold,
        pooled: binary_metrics(&pred, &prob, &y),
        confusion: Confusion::of(&pred, &y),
        bootstrap: bootstrap(&pred, &prob, &y, cfg.bootstrap, cfg.seed),
        baselines,
        feature_importances,
        oof: items
            .iter()
            .enumerate()
            .map(|(i, l)| OofPrediction {
                pattern_ref: l.pattern.pattern_ref(),
                fold: folds[i],
                label: y[i],
                probability: prob[i],
                predicted: pred[i],
            })
            .collect(),
    })
}
