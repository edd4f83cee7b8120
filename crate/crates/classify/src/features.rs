use serde::{Deserialize, Serialize};
use slicemine_core::mine::PatternStats;

use crate::{ClassifyError, Result};

pub const N_FEATURES: usize = 15;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "L",
    "support_total",
    "n_distinct_repos",
    "n_distinct_orgs",
    "n_distinct_files",
    "max_within_file_recurrence",
    "max_within_repo_files",
    "outlier_fraction",
    "has_template_structure",
    "scope_rq1",
    "scope_rq2",
    "scope_rq3",
    "ratio_within_repo",
    "ratio_scenarios",
    "ratio_orgs",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    #[serde(rename = "L")]
    pub len: usize,
    pub support_total: usize,
    pub n_distinct_repos: usize,
    pub n_distinct_orgs: usize,
    pub n_distinct_files: usize,
    pub max_within_file_recurrence: usize,
    pub max_within_repo_files: usize,
    pub outlier_fraction: f64,
    pub has_template_structure: bool,
    pub scope_rq1: bool,
    pub scope_rq2: bool,
    pub scope_rq3: bool,
    pub ratio_within_repo: f64,
    pub ratio_scenarios: f64,
    pub ratio_orgs: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [
            self.len as f64,
            self.support_total as f64,
            self.n_distinct_repos as f64,
            self.n_distinct_orgs as f64,
            self.n_distinct_files as f64,
            self.max_within_file_recurrence as f64,
            self.max_within_repo_files as f64,
            self.outlier_fraction,
            b(self.has_template_structure),
            b(self.scope_rq1),
            b(self.scope_rq2),
            b(self.scope_rq3),
            self.ratio_within_repo,
            self.ratio_scenarios,
            self.ratio_orgs,
        ]
    }
}

pub fn featurize(p: &PatternStats) -> Result<FeatureVector> {
    if !p.scope_eligible() {
        return Err(ClassifyError::NotScopeEligible(p.pattern_ref()));
    }
    Ok(FeatureVector {
        len: p.len,
        support_total: p.support_total,
        n_distinct_repos: p.n_distinct_repos,
        n_distinct_orgs: p.n_distinct_orgs,
        n_distinct_files: p.n_distinct_files,
        max_within_file_recurrence: p.max_within_file_recurrence,
        max_within_repo_files: p.max_within_repo_files,
        outlier_fraction: p.outlier_fraction,
        has_template_structure: p.has_template_structure,
        scope_rq1: p.rq1(),
        scope_rq2: p.rq2(),
        scope_rq3: p.rq3(),
        ratio_within_repo: p.max_within_repo_files as f64 / p.n_distinct_files.max(1) as f64,
        ratio_scenarios: p.n_distinct_scenarios as f64 / p.support_total.max(1) as f64,
        ratio_orgs: p.n_distinct_orgs as f64 / p.n_distinct_repos.max(1) as f64,
    })
}
