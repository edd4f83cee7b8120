//! Pipeline stages shared by the single-step subcommands and `run`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;
use slicemine_classify::eval::{evaluate_ew, labelled_patterns, CvConfig, EvalReport};
use slicemine_classify::features::FEATURE_NAMES;
use slicemine_classify::gbdt::train_binary;
use slicemine_classify::mechanism::{
    evaluate_mechanism_cv, mechanism_items, predict_mechanism, train_mechanism, MechanismReport,
};
use slicemine_classify::baseline::rule_mechanism;
use slicemine_classify::{classify_patterns, SavedModel, Verdict};
use slicemine_core::cluster::{assign_clusters, ClusterConfig, ClusterMode, StepCluster};
use slicemine_core::embed::provider_from_spec;
use slicemine_core::ingest::StepRecord;
use slicemine_core::labels::{AggregatedLabel, Mechanism};
use slicemine_core::mine::PatternStats;
use slicemine_core::paraphrase::{cluster_patterns, ClusterParams, ParaphraseClustering};
use slicemine_core::verify::{apply_filters, funnel_report, FilteredRow, Funnel};

pub fn cluster_records(
    records: &[StepRecord],
    mode: ClusterMode,
    provider: &str,
    threshold: f64,
) -> Result<(Vec<StepRecord>, Vec<StepCluster>)> {
    let boxed = match mode {
        ClusterMode::Embedding => Some(provider_from_spec(provider)?),
        _ => None,
    };
    let cfg = ClusterConfig {
        mode,
        merge_threshold: threshold,
        provider: boxed.as_deref(),
    };
    Ok(assign_clusters(records, &cfg)?)
}

pub fn paraphrase(patterns: &[PatternStats], provider: &str, params: &ClusterParams) -> Result<ParaphraseClustering> {
    let p = provider_from_spec(provider)?;
    Ok(cluster_patterns(patterns, p.as_ref(), params)?)
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub extraction_worthy: EvalReport,
    pub mechanism: Option<MechanismReport>,
}

pub fn train(patterns: &[PatternStats], labels: &[AggregatedLabel], cfg: &CvConfig) -> Result<(SavedModel, TrainReport)> {
    let items = labelled_patterns(patterns, labels);
    let ew_report = evaluate_ew(&items, cfg)?;
    let x: Vec<Vec<f64>> = items
        .iter()
        .map(|l| Ok(slicemine_classify::features::featurize(l.pattern)?.to_array().to_vec()))
        .collect::<Result<_>>()?;
    let y: Vec<bool> = items.iter().map(|l| l.label).collect();
    let ew = train_binary(&x, &y, &cfg.params)?;

    let mech_items = mechanism_items(patterns, labels);
    let (mechanism, mech_report) = match evaluate_mechanism_cv(&mech_items, cfg) {
        Ok(r) => (Some(train_mechanism(&mech_items, &cfg.params)?), Some(r)),
        Err(e) => {
            log::warn!("mechanism model not trained: {e}");
            (None, None)
        }
    };
    Ok((
        SavedModel {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            ew,
            mechanism,
        },
        TrainReport {
            extraction_worthy: ew_report,
            mechanism: mech_report,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MechanismMode {
    Rule,
    Learned,
}

/// Fill the mechanism column of extraction-worthy verdicts.
pub fn assign_mechanisms(
    verdicts: &mut [Verdict],
    patterns: &[PatternStats],
    mode: MechanismMode,
    model: Option<&SavedModel>,
) -> Result<()> {
    let by_ref: HashMap<String, &PatternStats> = patterns.iter().map(|p| (p.pattern_ref(), p)).collect();
    let learned = match mode {
        MechanismMode::Learned => match model.and_then(|m| m.mechanism.as_ref()) {
            Some(m) => Some(m),
            None => bail!("learned mechanism mode needs a model trained with a mechanism head"),
        },
        MechanismMode::Rule => None,
    };
    for v in verdicts.iter_mut() {
        v.mechanism = None;
        if !v.extraction_worthy {
            continue;
        }
        let Some(p) = by_ref.get(&v.cluster_id_seq) else {
            log::warn!("verdict for unknown pattern {}", v.cluster_id_seq);
            continue;
        };
        v.mechanism = match learned {
            Some(m) => Some(predict_mechanism(m, p)?),
            None => rule_mechanism(p),
        };
    }
    Ok(())
}

pub fn classify(model: &SavedModel, patterns: &[PatternStats], mode: MechanismMode) -> Result<Vec<Verdict>> {
    let mut v = classify_patterns(&model.ew, patterns);
    assign_mechanisms(&mut v, patterns, mode, Some(model))?;
    Ok(v)
}

/// R1..R6 over the extraction-worthy verdicts.
pub fn filter(patterns: &[PatternStats], verdicts: &[Verdict]) -> (Vec<FilteredRow>, Funnel) {
    let ew: HashSet<&str> = verdicts
        .iter()
        .filter(|v| v.extraction_worthy)
        .map(|v| v.cluster_id_seq.as_str())
        .collect();
    let mechanisms: HashMap<String, Mechanism> = verdicts
        .iter()
        .filter_map(|v| Some((v.cluster_id_seq.clone(), v.mechanism?)))
        .collect();
    let candidates: Vec<&PatternStats> = patterns.iter().filter(|p| ew.contains(p.pattern_ref().as_str())).collect();
    let rows = apply_filters(&candidates, patterns, &mechanisms);
    let funnel = funnel_report(&rows.iter().map(|r| r.flags()).collect::<Vec<_>>());
    (rows, funnel)
}

pub fn ew_positive(verdicts: &[Verdict]) -> HashSet<String> {
    verdicts
        .iter()
        .filter(|v| v.extraction_worthy)
        .map(|v| v.cluster_id_seq.clone())
        .collect()
}

/// Patterns that survive every verification rule.
pub fn survivors(patterns: &[PatternStats], filtered: &[FilteredRow]) -> Vec<PatternStats> {
    let keep: HashSet<&str> = filtered.iter().filter(|r| r.survives).map(|r| r.cluster_id_seq.as_str()).collect();
    patterns
        .iter()
        .filter(|p| keep.contains(p.pattern_ref().as_str()))
        .cloned()
        .collect()
}

pub fn write_paraphrase(dir_or_file: &Path, clustering: &ParaphraseClustering) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        cluster_id_seq: String,
        cluster_label: i64,
    }
    let rows: Vec<Row> = clustering
        .assignments()
        .into_iter()
        .map(|(cluster_id_seq, cluster_label)| Row {
            cluster_id_seq,
            cluster_label,
        })
        .collect();
    slicemine_core::io::write_csv(dir_or_file, &["cluster_id_seq", "cluster_label"], &rows)?;
    Ok(())
}
