use serde::{Deserialize, Serialize};
use slicemine_core::labels::Mechanism;
use slicemine_core::mine::{PatternStats, Scope};
use statrs::function::erf::erfc;

pub const RULE_OUTLIER_CUTOFF: f64 = 0.3;

/// Single-feature rule: extraction-worthy iff outlier_fraction < 0.3.
pub fn rule_baseline_ew(p: &PatternStats) -> bool {
    p.outlier_fraction < RULE_OUTLIER_CUTOFF
}

/// Scope-to-mechanism rule with RQ1 > RQ2 > RQ3 priority.
pub fn rule_mechanism(p: &PatternStats) -> Option<Mechanism> {
    p.most_specific_scope().map(|s| match s {
        Scope::Rq1 => Mechanism::Background,
        Scope::Rq2 => Mechanism::ReusableScenario,
        Scope::Rq3 => Mechanism::SharedHigherLevelStep,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// items only the first predictor gets right
    pub b: usize,
    /// items only the second predictor gets right
    pub c: usize,
    pub chi2: f64,
    pub p_value: f64,
}

/// Continuity-corrected McNemar test on discordant counts; p from the
/// chi-square distribution with one degree of freedom.
pub fn mcnemar(b: usize, c: usize) -> McNemar {
    if b + c == 0 {
        return McNemar {
            b,
            c,
            chi2: 0.0,
            p_value: 1.0,
        };
    }
    let d = ((b as f64 - c as f64).abs() - 1.0).max(0.0);
    let chi2 = d * d / (b + c) as f64;
    McNemar {
        b,
        c,
        chi2,
        p_value: erfc((chi2 / 2.0).sqrt()),
    }
}

/// Discordant counts between two predictors against the truth.
pub fn discordant<T: PartialEq>(a: &[T], b: &[T], truth: &[T]) -> (usize, usize) {
    let mut only_a = 0;
    let mut only_b = 0;
    for ((x, y), t) in a.iter().zip(b).zip(truth) {
        match (x == t, y == t) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    (only_a, only_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcnemar_reference_values() {
        let m = mcnemar(31, 14);
        assert!((m.chi2 - 256.0 / 45.0).abs() < 1e-12);
        assert!((m.p_value - 0.0171).abs() < 5e-4);
        assert!((mcnemar(52, 19).chi2 - 14.4).abs() < 0.05);
        assert!(mcnemar(71, 17).p_value < 1e-4);
        assert_eq!(mcnemar(0, 0).p_value, 1.0);
        assert_eq!(mcnemar(14, 31), McNemar { b: 14, c: 31, ..mcnemar(31, 14) });
    }

    #[test]
    fn rule_threshold_is_strict() {
        let mut p = PatternStats {
            cluster_id_seq: vec![],
            len: 2,
            support_total: 2,
            n_distinct_scenarios: 2,
            n_distinct_files: 1,
            n_distinct_repos: 1,
            n_distinct_orgs: 1,
            max_within_file_recurrence: 2,
            max_within_repo_files: 2,
            outlier_fraction: 0.0,
            has_template_structure: false,
            canonical_texts: vec![],
            exemplar_texts: vec![],
        };
        assert!(rule_baseline_ew(&p));
        p.outlier_fraction = 0.3;
        assert!(!rule_baseline_ew(&p));
        p.outlier_fraction = 0.29;
        assert!(rule_baseline_ew(&p));
        assert_eq!(rule_mechanism(&p), Some(Mechanism::Background));
        p.max_within_file_recurrence = 1;
        assert_eq!(rule_mechanism(&p), Some(Mechanism::ReusableScenario));
        p.max_within_repo_files = 1;
        p.n_distinct_orgs = 2;
        assert_eq!(rule_mechanism(&p), Some(Mechanism::SharedHigherLevelStep));
    }
}
