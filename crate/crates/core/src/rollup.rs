//! Scenario- and repository-level prevalence under the three pruning views,
//! rank orderings per scope, and the inspection-burden estimate.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::ScenarioKey;
use crate::labels::SPEC_OUTLIER_CUTOFF;
use crate::mine::{PatternStats, Scope, SpecSuiteFlag};
use crate::stats::percentile;
use crate::{Error, Result};

pub const DEFAULT_SECONDS_PER_CANDIDATE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Full,
    RealSignal,
    PostEw,
}

impl View {
    pub const ALL: [View; 3] = [View::Full, View::RealSignal, View::PostEw];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Full => "full",
            View::RealSignal => "real_signal",
            View::PostEw => "post_ew",
        }
    }
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "full" => Ok(View::Full),
            "real_signal" => Ok(View::RealSignal),
            "post_ew" => Ok(View::PostEw),
            other => Err(format!("unknown view `{other}` (full, real-signal, post-ew)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: usize,
    pub denominator: usize,
    pub percent: f64,
}

impl Cell {
    pub fn new(count: usize, denominator: usize) -> Cell {
        let percent = if denominator == 0 {
            0.0
        } else {
            100.0 * count as f64 / denominator as f64
        };
        Cell {
            count,
            denominator,
            percent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoPatternPercentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceReport {
    pub view: View,
    pub n_patterns: usize,
    pub scenario_denominator: usize,
    pub repo_denominator: usize,
    pub scenarios_rq1: Cell,
    pub scenarios_rq2: Cell,
    pub scenarios_rq3: Cell,
    pub scenarios_any: Cell,
    pub repos_rq2: Cell,
    pub repos_rq3: Cell,
    /// Distinct surviving scope-eligible patterns per repository.
    pub per_repo_patterns: RepoPatternPercentiles,
}

pub struct RollupInputs<'a> {
    pub patterns: &'a [PatternStats],
    /// pattern_ref -> distinct scenarios containing the pattern
    pub occurrences: &'a BTreeMap<String, Vec<ScenarioKey>>,
    /// every scenario of the mining set
    pub scenarios: &'a [ScenarioKey],
    pub spec_flags: Option<&'a [SpecSuiteFlag]>,
    /// pattern_refs the classifier called extraction-worthy
    pub ew_positive: Option<&'a HashSet<String>>,
}

/// Patterns that survive `view`.
pub fn view_patterns<'a>(inputs: &RollupInputs<'a>, view: View) -> Result<Vec<&'a PatternStats>> {
    if view != View::Full && inputs.spec_flags.is_none() {
        return Err(Error::MissingInput(format!("view {} needs spec-suite flags", view.as_str())));
    }
    let ew = match view {
        View::PostEw => Some(
            inputs
                .ew_positive
                .ok_or_else(|| Error::MissingInput("view post_ew needs classifier verdicts".into()))?,
        ),
        _ => None,
    };
    Ok(inputs
        .patterns
        .iter()
        .filter(|p| view == View::Full || p.outlier_fraction <= SPEC_OUTLIER_CUTOFF)
        .filter(|p| ew.map_or(true, |s| s.contains(&p.pattern_ref())))
        .collect())
}

pub fn rollup(inputs: &RollupInputs, view: View) -> Result<PrevalenceReport> {
    let kept = view_patterns(inputs, view)?;
    let mut scen: [BTreeSet<&ScenarioKey>; 3] = Default::default();
    let mut repos: [BTreeSet<&str>; 3] = Default::default();
    let mut per_repo: BTreeMap<&str, usize> = inputs.scenarios.iter().map(|s| (s.repo_slug.as_str(), 0)).collect();
    let empty = Vec::new();
    for p in &kept {
        let occ = inputs.occurrences.get(&p.pattern_ref()).unwrap_or(&empty);
        for (i, scope) in Scope::ALL.iter().enumerate() {
            if p.has_scope(*scope) {
                for k in occ {
                    scen[i].insert(k);
                    repos[i].insert(&k.repo_slug);
                }
            }
        }
        if p.scope_eligible() {
            let rs: BTreeSet<&str> = occ.iter().map(|k| k.repo_slug.as_str()).collect();
            for r in rs {
                *per_repo.entry(r).or_insert(0) += 1;
            }
        }
    }
    let any: BTreeSet<&ScenarioKey> = scen.iter().flatten().copied().collect();
    let n_scen = inputs.scenarios.len();
    let n_repos = per_repo.len();
    let counts: Vec<f64> = per_repo.values().map(|&c| c as f64).collect();
    let pct = |q| if counts.is_empty() { 0.0 } else { percentile(&counts, q) };
    Ok(PrevalenceReport {
        view,
        n_patterns: kept.len(),
        scenario_denominator: n_scen,
        repo_denominator: n_repos,
        scenarios_rq1: Cell::new(scen[0].len(), n_scen),
        scenarios_rq2: Cell::new(scen[1].len(), n_scen),
        scenarios_rq3: Cell::new(scen[2].len(), n_scen),
        scenarios_any: Cell::new(any.len(), n_scen),
        repos_rq2: Cell::new(repos[1].len(), n_repos),
        repos_rq3: Cell::new(repos[2].len(), n_repos),
        per_repo_patterns: RepoPatternPercentiles {
            p25: pct(25.0),
            p50: pct(50.0),
            p75: pct(75.0),
        },
    })
}

/// n_distinct_orgs × L × log2(1 + support_total)
pub fn rq3_quality(p: &PatternStats) -> f64 {
    p.n_distinct_orgs as f64 * p.len as f64 * (1.0 + p.support_total as f64).log2()
}

pub fn primary_score(p: &PatternStats, scope: Scope) -> f64 {
    match scope {
        Scope::Rq1 => (p.max_within_file_recurrence * p.len) as f64,
        Scope::Rq2 => (p.max_within_repo_files * p.len) as f64,
        Scope::Rq3 => rq3_quality(p),
    }
}

pub const RANKED_COLUMNS: [&str; 11] = [
    "rank",
    "scope",
    "primary_score",
    "cluster_id_seq",
    "L",
    "support_total",
    "max_within_file_recurrence",
    "max_within_repo_files",
    "n_distinct_orgs",
    "outlier_fraction",
    "canonical_texts",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: usize,
    pub scope: Scope,
    pub primary_score: f64,
    pub cluster_id_seq: String,
    #[serde(rename = "L")]
    pub len: usize,
    pub support_total: usize,
    pub max_within_file_recurrence: usize,
    pub max_within_repo_files: usize,
    pub n_distinct_orgs: usize,
    pub outlier_fraction: f64,
    /// JSON array of per-position canonical texts
    pub canonical_texts: String,
}

/// Patterns with `scope` signal ordered by `score` desc, then support desc,
/// L desc, cluster id sequence asc; truncated to `top_k`.
pub fn rank_with<'a, F>(patterns: &'a [PatternStats], scope: Scope, top_k: usize, score: F) -> Vec<(&'a PatternStats, f64)>
where
    F: Fn(&PatternStats) -> f64,
{
    let mut scored: Vec<(&PatternStats, f64)> = patterns
        .iter()
        .filter(|p| p.has_scope(scope))
        .map(|p| (p, score(p)))
        .collect();
    scored.sort_by(|(a, sa), (b, sb)| {
        sb.total_cmp(sa)
            .then(b.support_total.cmp(&a.support_total))
            .then(b.len.cmp(&a.len))
            .then(a.cluster_id_seq.cmp(&b.cluster_id_seq))
    });
    scored.truncate(top_k);
    scored
}

pub fn rank(patterns: &[PatternStats], scope: Scope, top_k: usize) -> Vec<RankedRow> {
    rank_with(patterns, scope, top_k, |p| primary_score(p, scope))
        .into_iter()
        .enumerate()
        .map(|(i, (p, s))| RankedRow {
            rank: i + 1,
            scope,
            primary_score: s,
            cluster_id_seq: p.pattern_ref(),
            len: p.len,
            support_total: p.support_total,
            max_within_file_recurrence: p.max_within_file_recurrence,
            max_within_repo_files: p.max_within_repo_files,
            n_distinct_orgs: p.n_distinct_orgs,
            outlier_fraction: p.outlier_fraction,
            canonical_texts: serde_json::to_string(&p.canonical_texts).unwrap_or_default(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionBurden {
    pub candidates: usize,
    pub seconds_per_candidate: f64,
    pub reviewer_hours: f64,
}

pub fn inspection_burden(candidates: usize, seconds_per_candidate: f64) -> InspectionBurden {
    InspectionBurden {
        candidates,
        seconds_per_candidate,
        reviewer_hours: candidates as f64 * seconds_per_candidate / 3600.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrevalenceBundle {
    pub views: Vec<PrevalenceReport>,
    /// Candidates entering review at each view.
    pub inspection_burden: BTreeMap<String, InspectionBurden>,
}

/// Prevalence for every view whose inputs are present.
pub fn prevalence_bundle(inputs: &RollupInputs, seconds_per_candidate: f64) -> Result<PrevalenceBundle> {
    let mut views = Vec::new();
    let mut burden = BTreeMap::new();
    for view in View::ALL {
        match rollup(inputs, view) {
            Ok(r) => {
                let n = view_patterns(inputs, view)?.iter().filter(|p| p.scope_eligible()).count();
                burden.insert(view.as_str().to_string(), inspection_burden(n, seconds_per_candidate));
                views.push(r);
            }
            Err(Error::MissingInput(m)) => log::info!("skipping view: {m}"),
            Err(e) => return Err(e),
        }
    }
    Ok(PrevalenceBundle {
        views,
        inspection_burden: burden,
    })
}

pub fn write_ranked_csv(path: &Path, rows: &[RankedRow]) -> Result<()> {
    crate::io::write_csv(path, &RANKED_COLUMNS, rows)
}
