//! CSV / JSONL serialization of the mining tables.
//!
//! `patterns.csv` holds one row per recurring pattern with the
//! [`PatternStats`] fields as columns; `cluster_id_seq` is joined by `|`,
//! the per-position text columns are JSON arrays.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mine::{PatternStats, Slice, SpecSuiteFlag};

pub const PATTERN_COLUMNS: [&str; 13] = [
    "cluster_id_seq",
    "L",
    "support_total",
    "n_distinct_scenarios",
    "n_distinct_files",
    "n_distinct_repos",
    "n_distinct_orgs",
    "max_within_file_recurrence",
    "max_within_repo_files",
    "outlier_fraction",
    "has_template_structure",
    "canonical_texts",
    "exemplar_texts",
];

#[derive(Serialize, Deserialize)]
struct PatternRow {
    cluster_id_seq: String,
    #[serde(rename = "L")]
    len: usize,
    support_total: usize,
    n_distinct_scenarios: usize,
    n_distinct_files: usize,
    n_distinct_repos: usize,
    n_distinct_orgs: usize,
    max_within_file_recurrence: usize,
    max_within_repo_files: usize,
    outlier_fraction: f64,
    has_template_structure: bool,
    canonical_texts: String,
    exemplar_texts: String,
}

pub fn write_patterns_csv(path: &Path, patterns: &[PatternStats]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(PATTERN_COLUMNS)?;
    for p in patterns {
        w.serialize(PatternRow {
            cluster_id_seq: p.pattern_ref(),
            len: p.len,
            support_total: p.support_total,
            n_distinct_scenarios: p.n_distinct_scenarios,
            n_distinct_files: p.n_distinct_files,
            n_distinct_repos: p.n_distinct_repos,
            n_distinct_orgs: p.n_distinct_orgs,
            max_within_file_recurrence: p.max_within_file_recurrence,
            max_within_repo_files: p.max_within_repo_files,
            outlier_fraction: p.outlier_fraction,
            has_template_structure: p.has_template_structure,
            canonical_texts: serde_json::to_string(&p.canonical_texts)?,
            exemplar_texts: serde_json::to_string(&p.exemplar_texts)?,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_patterns_csv(path: &Path) -> Result<Vec<PatternStats>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<PatternRow>() {
        let row = row?;
        out.push(PatternStats {
            cluster_id_seq: row.cluster_id_seq.split('|').map(String::from).collect(),
            len: row.len,
            support_total: row.support_total,
            n_distinct_scenarios: row.n_distinct_scenarios,
            n_distinct_files: row.n_distinct_files,
            n_distinct_repos: row.n_distinct_repos,
            n_distinct_orgs: row.n_distinct_orgs,
            max_within_file_recurrence: row.max_within_file_recurrence,
            max_within_repo_files: row.max_within_repo_files,
            outlier_fraction: row.outlier_fraction,
            has_template_structure: row.has_template_structure,
            canonical_texts: serde_json::from_str(&row.canonical_texts)?,
            exemplar_texts: serde_json::from_str(&row.exemplar_texts)?,
        });
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const SPEC_FLAG_COLUMNS: [&str; 6] = [
    "repo_slug",
    "file_path",
    "distinct_rq1_patterns",
    "top_pattern_recurrence",
    "template_text_fraction",
    "flagged",
];

pub fn write_spec_flags_csv(path: &Path, flags: &[SpecSuiteFlag]) -> Result<()> {
    write_csv(path, &SPEC_FLAG_COLUMNS, flags)
}

pub fn read_spec_flags_csv(path: &Path) -> Result<Vec<SpecSuiteFlag>> {
    read_csv(path)
}

pub fn write_jsonl<'a, T, I>(path: &Path, rows: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Schema {
            row: i + 1,
            field: "<row>".into(),
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_slices_jsonl(path: &Path, slices: impl IntoIterator<Item = Slice>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in slices {
        serde_json::to_writer(&mut w, &s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
