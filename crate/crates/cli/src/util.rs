use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use slicemine_core::cluster::{read_clusters_csv, reconstruct_clusters, StepCluster};
use slicemine_core::ingest::{canonical_order, load_step_records, parse_corpus, ScenarioKey, SkippedFile, StepRecord};
use slicemine_core::labels::{aggregate_all, AggregatedLabel, LabelRecord};
use slicemine_core::Error;

/// Fail with `MissingInput` (exit code 2) when `path` does not exist.
pub fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()).into());
    }
    Ok(())
}

/// Parse each feature root (one subdirectory per repository) or load a
/// records file, then put the records in canonical order.
pub fn load_records(features: &[PathBuf], records: Option<&Path>) -> Result<(Vec<StepRecord>, Vec<SkippedFile>)> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    if let Some(path) = records {
        require(path)?;
        out = load_step_records(path).with_context(|| format!("loading {}", path.display()))?;
    }
    for root in features {
        require(root)?;
        let parsed = parse_corpus(root).with_context(|| format!("parsing {}", root.display()))?;
        out.extend(parsed.records);
        skipped.extend(parsed.skipped);
    }
    if records.is_none() && features.is_empty() {
        return Err(Error::MissingInput("--features or --records".into()).into());
    }
    canonical_order(&mut out);
    Ok((out, skipped))
}

pub fn load_clusters(records: &[StepRecord], path: Option<&PathBuf>) -> Result<Vec<StepCluster>> {
    match path {
        Some(p) => {
            require(p)?;
            Ok(read_clusters_csv(p)?)
        }
        None => Ok(reconstruct_clusters(records)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccurrenceRow {
    pub cluster_id_seq: String,
    pub scenarios: Vec<ScenarioKey>,
}

pub fn occurrence_rows(occ: &BTreeMap<String, Vec<ScenarioKey>>) -> Vec<OccurrenceRow> {
    occ.iter()
        .map(|(k, v)| {
            let mut scenarios = v.clone();
            scenarios.sort();
            OccurrenceRow {
                cluster_id_seq: k.clone(),
                scenarios,
            }
        })
        .collect()
}

pub fn read_occurrences(path: &Path) -> Result<BTreeMap<String, Vec<ScenarioKey>>> {
    let rows: Vec<OccurrenceRow> = slicemine_core::io::read_jsonl(path)?;
    Ok(rows.into_iter().map(|r| (r.cluster_id_seq, r.scenarios)).collect())
}

/// Per-rater label rows are aggregated by majority; rows that are already
/// aggregated (no `rater` field) pass through.
pub fn load_aggregated(path: &Path) -> Result<Vec<AggregatedLabel>> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    let mut agg = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if v.get("rater").is_some() {
            let l: LabelRecord = serde_json::from_value(v).with_context(|| format!("{}:{}", path.display(), i + 1))?;
            l.validate()?;
            raw.push(l);
        } else {
            agg.push(serde_json::from_value(v).with_context(|| format!("{}:{}", path.display(), i + 1))?);
        }
    }
    agg.extend(aggregate_all(&raw)?);
    agg.sort_by(|a: &AggregatedLabel, b| a.pattern_ref.cmp(&b.pattern_ref));
    Ok(agg)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    Ok(())
}
