//! Slice extraction and recurring-pattern aggregation.
//!
//! A slice is a contiguous window of `L ∈ [2, L_max]` cluster-assigned steps
//! of one scenario. Slices sharing a cluster-id sequence are one pattern;
//! patterns are aggregated with their scope metrics (within-file,
//! within-repo cross-file, cross-owner), the spec-suite outlier fraction and
//! the template-structure flag.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::StepCluster;
use crate::hash::{hex_id, stable_hash};
use crate::ingest::{OwnerId, Scenario, ScenarioKey};

/// Exemplar step texts kept per pattern position.
pub const MAX_EXEMPLARS: usize = 5;

pub const SPEC_MIN_RQ1_PATTERNS: usize = 50;
pub const SPEC_MIN_TOP_RECURRENCE: usize = 100;
pub const SPEC_MIN_TEMPLATE_FRACTION: f64 = 0.30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub slice_id: String,
    #[serde(flatten)]
    pub key: ScenarioKey,
    pub position_start: usize,
    #[serde(rename = "L")]
    pub len: usize,
    pub cluster_id_seq: Vec<String>,
    pub text_seq: Vec<String>,
}

pub fn slice_id(key: &ScenarioKey, run_index: usize, position_start: usize, len: usize) -> String {
    hex_id(
        "s",
        stable_hash([
            key.repo_slug.as_bytes(),
            key.file_path.as_bytes(),
            key.scenario.as_bytes(),
            &(run_index as u64).to_le_bytes(),
            &(position_start as u64).to_le_bytes(),
            &(len as u64).to_le_bytes(),
        ]),
    )
}

/// All slices of one scenario, run by run, shortest windows first.
pub fn scenario_slices(scenario: &Scenario, l_max: usize) -> Vec<Slice> {
    let mut out = Vec::new();
    for (run_index, (start, run_len)) in scenario.runs().into_iter().enumerate() {
        for len in 2..=run_len.min(l_max) {
            for j in 0..=run_len - len {
                let pos = start + j;
                let window = &scenario.steps[pos..pos + len];
                out.push(Slice {
                    slice_id: slice_id(&scenario.key, run_index, pos, len),
                    key: scenario.key.clone(),
                    position_start: pos,
                    len,
                    cluster_id_seq: window
                        .iter()
                        .map(|s| s.cluster.clone().expect("runs only cover clustered steps"))
                        .collect(),
                    text_seq: window.iter().map(|s| s.text.clone()).collect(),
                });
            }
        }
    }
    out
}

pub fn extract_slices(scenarios: &[Scenario], l_max: usize) -> impl Iterator<Item = Slice> + '_ {
    scenarios.iter().flat_map(move |s| scenario_slices(s, l_max))
}

/// Closed-form slice count for one run of `run_len` clustered steps.
pub fn slices_in_run(run_len: usize, l_max: usize) -> usize {
    (2..=run_len.min(l_max)).map(|len| run_len - len + 1).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStats {
    pub cluster_id_seq: Vec<String>,
    #[serde(rename = "L")]
    pub len: usize,
    pub support_total: usize,
    pub n_distinct_scenarios: usize,
    pub n_distinct_files: usize,
    pub n_distinct_repos: usize,
    pub n_distinct_orgs: usize,
    pub max_within_file_recurrence: usize,
    pub max_within_repo_files: usize,
    pub outlier_fraction: f64,
    pub has_template_structure: bool,
    pub canonical_texts: Vec<String>,
    /// Up to [`MAX_EXEMPLARS`] distinct raw texts per position,
    /// lexicographically smallest first.
    pub exemplar_texts: Vec<Vec<String>>,
}

impl PatternStats {
    pub fn pattern_ref(&self) -> String {
        pattern_ref(&self.cluster_id_seq)
    }

    pub fn rq1(&self) -> bool {
        self.max_within_file_recurrence >= 2
    }

    pub fn rq2(&self) -> bool {
        self.max_within_repo_files >= 2
    }

    pub fn rq3(&self) -> bool {
        self.n_distinct_orgs >= 2
    }

    /// Cross-repo recurrence regardless of owner.
    pub fn cross_repo(&self) -> bool {
        self.n_distinct_repos >= 2
    }

    /// RQ1 ∨ RQ2 ∨ RQ3 (cross-owner): the classifier population.
    pub fn scope_eligible(&self) -> bool {
        self.rq1() || self.rq2() || self.rq3()
    }

    /// Any positive scope signal, with the naive cross-repo metric standing
    /// in for RQ3: the paraphrase-clustering population.
    pub fn scope_positive(&self) -> bool {
        self.rq1() || self.rq2() || self.cross_repo()
    }

    /// Most specific scope that fires, RQ1 > RQ2 > RQ3.
    pub fn most_specific_scope(&self) -> Option<Scope> {
        if self.rq1() {
            Some(Scope::Rq1)
        } else if self.rq2() {
            Some(Scope::Rq2)
        } else if self.rq3() {
            Some(Scope::Rq3)
        } else {
            None
        }
    }

    pub fn has_scope(&self, scope: Scope) -> bool {
        match scope {
            Scope::Rq1 => self.rq1(),
            Scope::Rq2 => self.rq2(),
            Scope::Rq3 => self.rq3(),
        }
    }
}

pub fn pattern_ref(seq: &[String]) -> String {
    seq.join("|")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Rq1,
    Rq2,
    Rq3,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Rq1, Scope::Rq2, Scope::Rq3];

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Rq1 => "rq1",
            Scope::Rq2 => "rq2",
            Scope::Rq3 => "rq3",
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rq1" => Ok(Scope::Rq1),
            "rq2" => Ok(Scope::Rq2),
            "rq3" => Ok(Scope::Rq3),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

/// `(repo_slug, file_path)`
pub type FileKey = (String, String);

#[derive(Debug, Clone, Default)]
struct FileOccurrences {
    occurrences: usize,
    scenarios: BTreeSet<String>,
}

#[derive(Debug, Clone, Default)]
struct PatternAcc {
    support: usize,
    per_file: BTreeMap<FileKey, FileOccurrences>,
    exemplars: Vec<BTreeSet<String>>,
}

impl PatternAcc {
    fn add(&mut self, slice: &Slice) {
        self.support += 1;
        let file = self
            .per_file
            .entry((slice.key.repo_slug.clone(), slice.key.file_path.clone()))
            .or_default();
        file.occurrences += 1;
        if !file.scenarios.contains(&slice.key.scenario) {
            file.scenarios.insert(slice.key.scenario.clone());
        }
        if self.exemplars.is_empty() {
            self.exemplars = vec![BTreeSet::new(); slice.len];
        }
        for (set, text) in self.exemplars.iter_mut().zip(&slice.text_seq) {
            insert_bounded(set, text);
        }
    }

    fn merge(&mut self, other: PatternAcc) {
        self.support += other.support;
        for (file, occ) in other.per_file {
            let mine = self.per_file.entry(file).or_default();
            mine.occurrences += occ.occurrences;
            mine.scenarios.extend(occ.scenarios);
        }
        if self.exemplars.is_empty() {
            self.exemplars = other.exemplars;
        } else {
            for (set, theirs) in self.exemplars.iter_mut().zip(other.exemplars) {
                for t in theirs {
                    insert_bounded(set, &t);
                }
            }
        }
    }
}

fn insert_bounded(set: &mut BTreeSet<String>, text: &str) {
    if set.len() < MAX_EXEMPLARS {
        set.insert(text.to_string());
    } else if set.last().is_some_and(|last| text < last.as_str()) && !set.contains(text) {
        set.insert(text.to_string());
        set.pop_last();
    }
}

/// Mergeable per-pattern occurrence index. Partial accumulators built on
/// different workers merge associatively and commutatively, so the final
/// tables do not depend on arrival order or worker count.
#[derive(Debug, Clone, Default)]
pub struct PatternAccumulator {
    patterns: HashMap<Vec<String>, PatternAcc>,
}

impl PatternAccumulator {
    pub fn add(&mut self, slice: &Slice) {
        match self.patterns.get_mut(&slice.cluster_id_seq) {
            Some(acc) => acc.add(slice),
            None => {
                let mut acc = PatternAcc::default();
                acc.add(slice);
                self.patterns.insert(slice.cluster_id_seq.clone(), acc);
            }
        }
    }

    pub fn merge(mut self, other: PatternAccumulator) -> PatternAccumulator {
        let (mut big, small) = if self.patterns.len() >= other.patterns.len() {
            (std::mem::take(&mut self.patterns), other.patterns)
        } else {
            (other.patterns, std::mem::take(&mut self.patterns))
        };
        for (k, v) in small {
            match big.get_mut(&k) {
                Some(acc) => acc.merge(v),
                None => {
                    big.insert(k, v);
                }
            }
        }
        PatternAccumulator { patterns: big }
    }

    pub fn from_scenarios(scenarios: &[Scenario], l_max: usize) -> PatternAccumulator {
        scenarios
            .par_iter()
            .fold(PatternAccumulator::default, |mut acc, s| {
                for slice in scenario_slices(s, l_max) {
                    acc.add(&slice);
                }
                acc
            })
            .reduce(PatternAccumulator::default, PatternAccumulator::merge)
    }

    pub fn distinct_sequences(&self) -> usize {
        self.patterns.len()
    }

    /// Recurring patterns (support ≥ 2) with all metrics, sorted by
    /// `(L, cluster_id_seq)`.
    pub fn finish(&self, clusters: &HashMap<String, StepCluster>, spec_flags: &BTreeSet<FileKey>) -> Vec<PatternStats> {
        let mut out: Vec<PatternStats> = self
            .patterns
            .par_iter()
            .filter(|(_, acc)| acc.support >= 2)
            .map(|(seq, acc)| finish_one(seq, acc, clusters, spec_flags))
            .collect();
        out.sort_by(|a, b| (a.len, &a.cluster_id_seq).cmp(&(b.len, &b.cluster_id_seq)));
        out
    }

    /// Distinct scenarios containing each recurring pattern.
    pub fn occurrences(&self) -> BTreeMap<String, Vec<ScenarioKey>> {
        self.patterns
            .iter()
            .filter(|(_, acc)| acc.support >= 2)
            .map(|(seq, acc)| {
                let keys = acc
                    .per_file
                    .iter()
                    .flat_map(|((repo, file), occ)| {
                        occ.scenarios.iter().map(move |s| ScenarioKey {
                            repo_slug: repo.clone(),
                            file_path: file.clone(),
                            scenario: s.clone(),
                        })
                    })
                    .collect();
                (pattern_ref(seq), keys)
            })
            .collect()
    }
}

fn finish_one(
    seq: &[String],
    acc: &PatternAcc,
    clusters: &HashMap<String, StepCluster>,
    spec_flags: &BTreeSet<FileKey>,
) -> PatternStats {
    let mut repos: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n_scenarios = 0;
    let mut max_file_rec = 0;
    let mut flagged_occ = 0;
    for (key, occ) in &acc.per_file {
        *repos.entry(&key.0).or_default() += 1;
        n_scenarios += occ.scenarios.len();
        max_file_rec = max_file_rec.max(occ.scenarios.len());
        if spec_flags.contains(key) {
            flagged_occ += occ.occurrences;
        }
    }
    let orgs: BTreeSet<OwnerId> = repos.keys().map(|r| OwnerId::from_repo_slug(r)).collect();
    let exemplars: Vec<Vec<String>> = acc.exemplars.iter().map(|s| s.iter().cloned().collect()).collect();
    PatternStats {
        cluster_id_seq: seq.to_vec(),
        len: seq.len(),
        support_total: acc.support,
        n_distinct_scenarios: n_scenarios,
        n_distinct_files: acc.per_file.len(),
        n_distinct_repos: repos.len(),
        n_distinct_orgs: orgs.len(),
        max_within_file_recurrence: max_file_rec,
        max_within_repo_files: repos.values().copied().max().unwrap_or(0),
        outlier_fraction: flagged_occ as f64 / acc.support as f64,
        has_template_structure: seq
            .iter()
            .any(|c| clusters.get(c).is_some_and(|c| c.has_adjacent_placeholders)),
        canonical_texts: seq
            .iter()
            .zip(&exemplars)
            .map(|(c, ex)| match clusters.get(c) {
                Some(cluster) => cluster.canonical_text.clone(),
                None => ex.first().cloned().unwrap_or_default(),
            })
            .collect(),
        exemplar_texts: exemplars,
    }
}

pub fn cluster_map(clusters: &[StepCluster]) -> HashMap<String, StepCluster> {
    clusters.iter().map(|c| (c.cluster_id.clone(), c.clone())).collect()
}

/// Aggregate a stream of slices into recurring patterns.
pub fn aggregate_patterns<I>(slices: I, clusters: &HashMap<String, StepCluster>, spec_flags: &BTreeSet<FileKey>) -> Vec<PatternStats>
where
    I: IntoIterator<Item = Slice>,
{
    let mut acc = PatternAccumulator::default();
    for s in slices {
        acc.add(&s);
    }
    acc.finish(clusters, spec_flags)
}

// ---------------------------------------------------------------------------
// Spec-suite detection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSuiteFlag {
    pub repo_slug: String,
    pub file_path: String,
    pub distinct_rq1_patterns: usize,
    pub top_pattern_recurrence: usize,
    pub template_text_fraction: f64,
    pub flagged: bool,
}

/// Density AND a generator-template signature (very high top recurrence or
/// a high share of adjacent-placeholder step texts).
pub fn spec_suite_fires(distinct_rq1_patterns: usize, top_pattern_recurrence: usize, template_text_fraction: f64) -> bool {
    distinct_rq1_patterns > SPEC_MIN_RQ1_PATTERNS
        && (top_pattern_recurrence > SPEC_MIN_TOP_RECURRENCE || template_text_fraction >= SPEC_MIN_TEMPLATE_FRACTION)
}

/// Per-file spec-suite statistics, one row per file of the mining set,
/// sorted by `(repo_slug, file_path)`.
pub fn detect_spec_suites(
    acc: &PatternAccumulator,
    scenarios: &[Scenario],
    clusters: &HashMap<String, StepCluster>,
) -> Vec<SpecSuiteFlag> {
    let mut file_clusters: BTreeMap<FileKey, BTreeSet<&str>> = BTreeMap::new();
    for s in scenarios {
        let set = file_clusters
            .entry((s.key.repo_slug.clone(), s.key.file_path.clone()))
            .or_default();
        set.extend(s.steps.iter().filter_map(|st| st.cluster.as_deref()));
    }

    let mut density: HashMap<&FileKey, (usize, usize)> = HashMap::new();
    for acc in acc.patterns.values().filter(|a| a.support >= 2) {
        for (file, occ) in &acc.per_file {
            let rec = occ.scenarios.len();
            let entry = density.entry(file).or_default();
            if rec >= 2 {
                entry.0 += 1;
            }
            entry.1 = entry.1.max(rec);
        }
    }

    file_clusters
        .iter()
        .map(|(file, cl)| {
            let (distinct, top) = density.get(file).copied().unwrap_or_default();
            let templated = cl
                .iter()
                .filter(|c| clusters.get(**c).is_some_and(|c| c.has_adjacent_placeholders))
                .count();
            let fraction = if cl.is_empty() { 0.0 } else { templated as f64 / cl.len() as f64 };
            SpecSuiteFlag {
                repo_slug: file.0.clone(),
                file_path: file.1.clone(),
                distinct_rq1_patterns: distinct,
                top_pattern_recurrence: top,
                template_text_fraction: fraction,
                flagged: spec_suite_fires(distinct, top, fraction),
            }
        })
        .collect()
}

pub fn flagged_files(flags: &[SpecSuiteFlag]) -> BTreeSet<FileKey> {
    flags
        .iter()
        .filter(|f| f.flagged)
        .map(|f| (f.repo_slug.clone(), f.file_path.clone()))
        .collect()
}

/// Output of the two-pass mining protocol.
pub struct MiningResult {
    pub accumulator: PatternAccumulator,
    pub spec_flags: Vec<SpecSuiteFlag>,
    pub patterns: Vec<PatternStats>,
}

/// Aggregate, detect spec suites, then finalize the pattern table with the
/// resulting flags so `outlier_fraction` is populated.
pub fn mine(scenarios: &[Scenario], clusters: &[StepCluster], l_max: usize) -> MiningResult {
    let accumulator = PatternAccumulator::from_scenarios(scenarios, l_max);
    let cmap = cluster_map(clusters);
    let spec_flags = detect_spec_suites(&accumulator, scenarios, &cmap);
    let patterns = accumulator.finish(&cmap, &flagged_files(&spec_flags));
    MiningResult {
        accumulator,
        spec_flags,
        patterns,
    }
}

// ---------------------------------------------------------------------------
// Gap-tolerant robustness counter
// ---------------------------------------------------------------------------

fn matches_from(steps: &[Option<&str>], pattern: &[String], at: usize, k: usize) -> bool {
    if k == pattern.len() {
        return true;
    }
    (at..(at + 2).min(steps.len())).any(|i| steps[i] == Some(pattern[k].as_str()) && matches_from(steps, pattern, i + 1, k + 1))
}

/// Number of scenario positions at which `pattern` starts a match whose
/// consecutive elements are separated by at most one intervening step.
/// Contiguous matches are included.
pub fn count_gap1(scenarios: &[Scenario], pattern: &[String]) -> usize {
    assert!(pattern.len() >= 2, "pattern length must be at least 2");
    scenarios
        .par_iter()
        .map(|s| {
            let steps: Vec<Option<&str>> = s.steps.iter().map(|st| st.cluster.as_deref()).collect();
            (0..steps.len())
                .filter(|&p| steps[p] == Some(pattern[0].as_str()) && matches_from(&steps, pattern, p + 1, 1))
                .count()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ScenarioStep;

    fn scenario(repo: &str, file: &str, name: &str, clusters: &[&str]) -> Scenario {
        Scenario {
            key: ScenarioKey {
                repo_slug: repo.into(),
                file_path: file.into(),
                scenario: name.into(),
            },
            steps: clusters
                .iter()
                .map(|c| ScenarioStep {
                    cluster: (!c.is_empty()).then(|| c.to_string()),
                    text: format!("text {c}"),
                })
                .collect(),
        }
    }

    fn seq(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ten_step_scenario_has_45_slices() {
        let ids: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let s = scenario("o_r", "a.feature", "s", &refs);
        assert_eq!(extract_slices(&[s], 18).count(), 45);
        assert_eq!(slices_in_run(10, 18), 45);
    }

    #[test]
    fn two_step_boundary() {
        let s = scenario("o_r", "a.feature", "s", &["a", "b"]);
        let slices: Vec<_> = extract_slices(std::slice::from_ref(&s), 18).collect();
        assert_eq!(slices.len(), 1);
        assert_eq!((slices[0].position_start, slices[0].len), (0, 2));
    }

    #[test]
    fn missing_cluster_splits_runs() {
        let s = scenario("o_r", "a.feature", "s", &["a", "b", "", "c", "d", "e"]);
        let slices: Vec<_> = scenario_slices(&s, 18);
        assert_eq!(slices.len(), 1 + 3);
        assert!(slices.iter().all(|sl| !sl.cluster_id_seq.contains(&String::new())));
        let last = slices.last().unwrap();
        assert_eq!(last.position_start, 3);
        assert_eq!(last.cluster_id_seq, seq(&["c", "d", "e"]));
    }

    #[test]
    fn same_owner_repos_count_one_org() {
        let scenarios: Vec<Scenario> = ["go", "java", "python", "ruby", "ts"]
            .iter()
            .map(|lang| scenario(&format!("datadog_client-{lang}"), "a.feature", "s", &["x", "y"]))
            .collect();
        let pats = aggregate_patterns(extract_slices(&scenarios, 18), &HashMap::new(), &BTreeSet::new());
        assert_eq!(pats.len(), 1);
        assert_eq!(pats[0].n_distinct_repos, 5);
        assert_eq!(pats[0].n_distinct_orgs, 1);
        assert!(pats[0].cross_repo() && !pats[0].rq3());
    }

    #[test]
    fn self_overlap_counts_every_window() {
        let s = scenario("o_r", "a.feature", "s", &["a", "a", "a"]);
        let pats = aggregate_patterns(extract_slices(&[s], 18), &HashMap::new(), &BTreeSet::new());
        let aa = pats.iter().find(|p| p.cluster_id_seq == seq(&["a", "a"])).unwrap();
        assert_eq!(aa.support_total, 2);
        assert_eq!(aa.max_within_file_recurrence, 1);
        assert_eq!(aa.n_distinct_scenarios, 1);
    }

    #[test]
    fn outlier_fraction_from_flags() {
        let scenarios = vec![
            scenario("o_r", "spec.feature", "s1", &["a", "b"]),
            scenario("o_r", "spec.feature", "s2", &["a", "b"]),
            scenario("o_r", "real.feature", "s1", &["a", "b"]),
            scenario("p_r", "real.feature", "s1", &["a", "b"]),
        ];
        let flags: BTreeSet<FileKey> = [("o_r".to_string(), "spec.feature".to_string())].into();
        let pats = aggregate_patterns(extract_slices(&scenarios, 18), &HashMap::new(), &flags);
        assert_eq!(pats[0].outlier_fraction, 0.5);
        assert_eq!(pats[0].max_within_repo_files, 2);
        assert_eq!(pats[0].max_within_file_recurrence, 2);
        assert_eq!(pats[0].n_distinct_orgs, 2);
    }

    #[test]
    fn spec_detector_boundaries() {
        assert!(spec_suite_fires(51, 101, 0.0));
        assert!(!spec_suite_fires(200, 50, 0.10));
        assert!(spec_suite_fires(51, 10, 0.30));
        assert!(!spec_suite_fires(50, 1000, 1.0));
        assert!(!spec_suite_fires(51, 100, 0.29));
    }

    #[test]
    fn gap1_examples() {
        let s = [scenario("o_r", "a.feature", "s", &["a", "x", "b"])];
        assert_eq!(count_gap1(&s, &seq(&["a", "b"])), 1);
        let s = [scenario("o_r", "a.feature", "s", &["a", "b"])];
        assert_eq!(count_gap1(&s, &seq(&["a", "b"])), 1);
        let s = [scenario("o_r", "a.feature", "s", &["a", "x", "y", "b"])];
        assert_eq!(count_gap1(&s, &seq(&["a", "b"])), 0);
        let s = [scenario("o_r", "a.feature", "s", &["a", "", "b"])];
        assert_eq!(count_gap1(&s, &seq(&["a", "b"])), 1);
    }

    #[test]
    fn exemplars_keep_smallest_texts() {
        let mut set = BTreeSet::new();
        for t in ["g", "f", "e", "d", "c", "b", "a", "a"] {
            insert_bounded(&mut set, t);
        }
        assert_eq!(set.into_iter().collect::<Vec<_>>(), ["a", "b", "c", "d", "e"]);
    }
}
