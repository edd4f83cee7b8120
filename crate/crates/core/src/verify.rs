//! Post-classifier verification rules R1..R6 and the survivor funnel.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::labels::Mechanism;
use crate::mine::PatternStats;

/// R4 cutoff on n_distinct_scenarios / support_total.
pub const R4_MIN_SCENARIO_RATIO: f64 = 0.20;

pub const RULES: [&str; 6] = [
    "r1_templated_outline",
    "r2_single_cluster_repetition",
    "r3_single_scenario",
    "r4_overlap_dominated",
    "r5_shl_insufficient_orgs",
    "r6_not_closed",
];

pub const FILTERED_COLUMNS: [&str; 11] = [
    "cluster_id_seq",
    "L",
    "support_total",
    "mechanism",
    "r1_templated_outline",
    "r2_single_cluster_repetition",
    "r3_single_scenario",
    "r4_overlap_dominated",
    "r5_shl_insufficient_orgs",
    "r6_not_closed",
    "survives",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterFlags {
    pub r1_templated_outline: bool,
    pub r2_single_cluster_repetition: bool,
    pub r3_single_scenario: bool,
    pub r4_overlap_dominated: bool,
    pub r5_shl_insufficient_orgs: bool,
    pub r6_not_closed: bool,
    pub survives: bool,
}

impl FilterFlags {
    pub fn as_array(&self) -> [bool; 6] {
        [
            self.r1_templated_outline,
            self.r2_single_cluster_repetition,
            self.r3_single_scenario,
            self.r4_overlap_dominated,
            self.r5_shl_insufficient_orgs,
            self.r6_not_closed,
        ]
    }

    fn refresh(&mut self) {
        self.survives = !self.as_array().iter().any(|f| *f);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredRow {
    pub cluster_id_seq: String,
    #[serde(rename = "L")]
    pub len: usize,
    pub support_total: usize,
    pub mechanism: Option<Mechanism>,
    pub r1_templated_outline: bool,
    pub r2_single_cluster_repetition: bool,
    pub r3_single_scenario: bool,
    pub r4_overlap_dominated: bool,
    pub r5_shl_insufficient_orgs: bool,
    pub r6_not_closed: bool,
    pub survives: bool,
}

impl FilteredRow {
    pub fn flags(&self) -> FilterFlags {
        FilterFlags {
            r1_templated_outline: self.r1_templated_outline,
            r2_single_cluster_repetition: self.r2_single_cluster_repetition,
            r3_single_scenario: self.r3_single_scenario,
            r4_overlap_dominated: self.r4_overlap_dominated,
            r5_shl_insufficient_orgs: self.r5_shl_insufficient_orgs,
            r6_not_closed: self.r6_not_closed,
            survives: self.survives,
        }
    }
}

fn angle_span() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^<>\s][^<>]*>").unwrap())
}

/// R1..R5. R6 is left unset; see [`apply_r6_closure`].
pub fn apply_r1_to_r5(p: &PatternStats, mechanism: Option<Mechanism>) -> FilterFlags {
    let re = angle_span();
    let r1 = p.exemplar_texts.iter().flatten().any(|t| re.is_match(t))
        || p.canonical_texts.iter().any(|t| re.is_match(t));
    let r2 = p.cluster_id_seq.windows(2).all(|w| w[0] == w[1]);
    let r3 = p.n_distinct_scenarios == 1;
    let r4 = (p.n_distinct_scenarios as f64) / (p.support_total.max(1) as f64) < R4_MIN_SCENARIO_RATIO;
    let r5 = mechanism == Some(Mechanism::SharedHigherLevelStep) && p.n_distinct_orgs < 2;
    let mut f = FilterFlags {
        r1_templated_outline: r1,
        r2_single_cluster_repetition: r2,
        r3_single_scenario: r3,
        r4_overlap_dominated: r4,
        r5_shl_insufficient_orgs: r5,
        r6_not_closed: false,
        survives: false,
    };
    f.refresh();
    f
}

/// Supports of every pattern indexed by its sequence minus the last step
/// and minus the first step.
pub struct ClosureIndex<'a> {
    by_prefix: HashMap<&'a [String], Vec<usize>>,
    by_suffix: HashMap<&'a [String], Vec<usize>>,
}

impl<'a> ClosureIndex<'a> {
    pub fn new(all: &'a [PatternStats]) -> Self {
        let mut by_prefix: HashMap<&[String], Vec<usize>> = HashMap::new();
        let mut by_suffix: HashMap<&[String], Vec<usize>> = HashMap::new();
        for q in all.iter().filter(|q| q.cluster_id_seq.len() >= 2) {
            let seq = q.cluster_id_seq.as_slice();
            by_prefix.entry(&seq[..seq.len() - 1]).or_default().push(q.support_total);
            by_suffix.entry(&seq[1..]).or_default().push(q.support_total);
        }
        ClosureIndex { by_prefix, by_suffix }
    }

    /// True when some one-step extension of `p` (prefix or suffix) has the
    /// same support.
    pub fn not_closed(&self, p: &PatternStats) -> bool {
        let seq = p.cluster_id_seq.as_slice();
        let hit = |m: &HashMap<&[String], Vec<usize>>| m.get(seq).is_some_and(|v| v.contains(&p.support_total));
        hit(&self.by_prefix) || hit(&self.by_suffix)
    }
}

/// R6 over the whole table: `candidates` get their flag from extensions
/// found anywhere in `all`.
pub fn apply_r6_closure(flags: &mut [FilterFlags], candidates: &[&PatternStats], all: &[PatternStats]) {
    let index = ClosureIndex::new(all);
    flags.par_iter_mut().zip(candidates.par_iter()).for_each(|(f, p)| {
        f.r6_not_closed = index.not_closed(p);
        f.refresh();
    });
}

/// Run R1..R6 on `candidates`. `mechanisms` maps pattern_ref to the
/// predicted mechanism; `all` is the full pattern table used for closure.
pub fn apply_filters(
    candidates: &[&PatternStats],
    all: &[PatternStats],
    mechanisms: &HashMap<String, Mechanism>,
) -> Vec<FilteredRow> {
    let mut flags: Vec<FilterFlags> = candidates
        .par_iter()
        .map(|p| apply_r1_to_r5(p, mechanisms.get(&p.pattern_ref()).copied()))
        .collect();
    apply_r6_closure(&mut flags, candidates, all);
    candidates
        .iter()
        .zip(flags)
        .map(|(p, f)| FilteredRow {
            cluster_id_seq: p.pattern_ref(),
            len: p.len,
            support_total: p.support_total,
            mechanism: mechanisms.get(&p.pattern_ref()).copied(),
            r1_templated_outline: f.r1_templated_outline,
            r2_single_cluster_repetition: f.r2_single_cluster_repetition,
            r3_single_scenario: f.r3_single_scenario,
            r4_overlap_dominated: f.r4_overlap_dominated,
            r5_shl_insufficient_orgs: f.r5_shl_insufficient_orgs,
            r6_not_closed: f.r6_not_closed,
            survives: f.survives,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelStep {
    pub rule: String,
    pub attrition: usize,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Funnel {
    pub input: usize,
    pub steps: Vec<FunnelStep>,
    pub survivors: usize,
}

/// Sequential survivors after R1, R2, ..., R6. A pattern is attributed to
/// the first rule that flags it.
pub fn funnel_report(flags: &[FilterFlags]) -> Funnel {
    let mut alive: Vec<bool> = vec![true; flags.len()];
    let mut survivors = flags.len();
    let mut steps = Vec::with_capacity(RULES.len());
    for (k, rule) in RULES.iter().enumerate() {
        let mut attrition = 0;
        for (a, f) in alive.iter_mut().zip(flags) {
            if *a && f.as_array()[k] {
                *a = false;
                attrition += 1;
            }
        }
        survivors -= attrition;
        steps.push(FunnelStep {
            rule: rule.to_string(),
            attrition,
            survivors,
        });
    }
    Funnel {
        input: flags.len(),
        steps,
        survivors,
    }
}
