//! Labelling pool sampling, label schema, majority aggregation and
//! inter-rater agreement.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hash::derive_seed;
use crate::mine::{PatternStats, Scope};
use crate::stats::percentile;
use crate::{Error, Result};

/// Outlier fraction above which a pattern belongs to the spec-coverage stratum.
pub const SPEC_OUTLIER_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    Yes,
    No,
    Uncertain,
    FlaggedSpec,
}

impl Extraction {
    pub const ALL: [Extraction; 4] = [
        Extraction::Yes,
        Extraction::No,
        Extraction::Uncertain,
        Extraction::FlaggedSpec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Extraction::Yes => "yes",
            Extraction::No => "no",
            Extraction::Uncertain => "uncertain",
            Extraction::FlaggedSpec => "flagged_spec",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Background,
    ReusableScenario,
    SharedHigherLevelStep,
    Unsure,
    #[serde(alias = "n/a")]
    NotApplicable,
}

impl Mechanism {
    /// The three concrete mechanisms, in class-index order.
    pub const CONCRETE: [Mechanism; 3] = [
        Mechanism::Background,
        Mechanism::ReusableScenario,
        Mechanism::SharedHigherLevelStep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Background => "background",
            Mechanism::ReusableScenario => "reusable_scenario",
            Mechanism::SharedHigherLevelStep => "shared_higher_level_step",
            Mechanism::Unsure => "unsure",
            Mechanism::NotApplicable => "not_applicable",
        }
    }

    pub fn class_index(self) -> Option<usize> {
        Mechanism::CONCRETE.iter().position(|m| *m == self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub pattern_ref: String,
    pub rater: String,
    pub extraction: Extraction,
    pub mechanism: Mechanism,
    #[serde(default)]
    pub notes: String,
}

impl LabelRecord {
    pub fn validate(&self) -> Result<()> {
        let yes = self.extraction == Extraction::Yes;
        let na = self.mechanism == Mechanism::NotApplicable;
        if yes == na {
            return Err(Error::InvalidInput(format!(
                "label for {} by {}: mechanism must be not_applicable exactly when extraction is not yes",
                self.pattern_ref, self.rater
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMajority {
    Yes,
    No,
    Uncertain,
    FlaggedSpec,
    Tie,
}

impl From<Extraction> for ExtractionMajority {
    fn from(e: Extraction) -> Self {
        match e {
            Extraction::Yes => ExtractionMajority::Yes,
            Extraction::No => ExtractionMajority::No,
            Extraction::Uncertain => ExtractionMajority::Uncertain,
            Extraction::FlaggedSpec => ExtractionMajority::FlaggedSpec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub pattern_ref: String,
    pub extraction_majority: ExtractionMajority,
    pub mechanism_majority: Option<Mechanism>,
    #[serde(default)]
    pub n_raters: usize,
}

pub fn read_labels(path: &std::path::Path) -> Result<Vec<LabelRecord>> {
    let labels: Vec<LabelRecord> = crate::io::read_jsonl(path)?;
    for l in &labels {
        l.validate()?;
    }
    Ok(labels)
}

fn counts<T: Copy + Ord>(items: impl IntoIterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

/// Majority vote for one pattern. Extraction needs a strict majority of
/// raters, else `tie`. Mechanism is voted among the yes-voters only when the
/// extraction majority is yes; `unsure` is ignored unless every yes-voter
/// said unsure, and a tie among concrete mechanisms resolves to `unsure`.
pub fn aggregate_majority(labels: &[LabelRecord]) -> Result<AggregatedLabel> {
    let first = labels
        .first()
        .ok_or_else(|| Error::InvalidInput("no labels to aggregate".into()))?;
    if labels.iter().any(|l| l.pattern_ref != first.pattern_ref) {
        return Err(Error::InvalidInput("labels span several patterns".into()));
    }
    let n = labels.len();
    let extraction_majority = counts(labels.iter().map(|l| l.extraction))
        .into_iter()
        .find(|(_, c)| 2 * c > n)
        .map(|(e, _)| ExtractionMajority::from(e))
        .unwrap_or(ExtractionMajority::Tie);

    let mechanism_majority = if extraction_majority == ExtractionMajority::Yes {
        let yes_mechs: Vec<Mechanism> = labels
            .iter()
            .filter(|l| l.extraction == Extraction::Yes)
            .map(|l| l.mechanism)
            .collect();
        let concrete = counts(yes_mechs.iter().copied().filter(|m| m.class_index().is_some()));
        let best = concrete.values().copied().max().unwrap_or(0);
        let winners: Vec<Mechanism> = concrete
            .iter()
            .filter(|(_, c)| **c == best)
            .map(|(m, _)| *m)
            .collect();
        match winners.as_slice() {
            [m] => Some(*m),
            _ => Some(Mechanism::Unsure),
        }
    } else {
        None
    };

    Ok(AggregatedLabel {
        pattern_ref: first.pattern_ref.clone(),
        extraction_majority,
        mechanism_majority,
        n_raters: n,
    })
}

/// Aggregate every pattern in `labels`, ordered by pattern_ref.
pub fn aggregate_all(labels: &[LabelRecord]) -> Result<Vec<AggregatedLabel>> {
    let mut by_pattern: BTreeMap<&str, Vec<LabelRecord>> = BTreeMap::new();
    for l in labels {
        by_pattern.entry(&l.pattern_ref).or_default().push(l.clone());
    }
    by_pattern.values().map(|ls| aggregate_majority(ls)).collect()
}

/// Fleiss' kappa from per-item category counts. Every row must sum to the
/// same rater count n ≥ 2.
pub fn fleiss_kappa_counts(counts: &[Vec<usize>]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::InvalidInput("fleiss kappa needs at least one item".into()));
    }
    let k = counts[0].len();
    let n = counts[0].iter().sum::<usize>();
    if n < 2 {
        return Err(Error::InvalidInput("fleiss kappa needs at least two raters per item".into()));
    }
    if counts.iter().any(|row| row.len() != k || row.iter().sum::<usize>() != n) {
        return Err(Error::InvalidInput("every item must be rated by the same number of raters".into()));
    }
    let items = counts.len() as f64;
    let nf = n as f64;
    let p_bar = counts
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - nf) / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = counts.iter().map(|row| row[j] as f64).sum::<f64>() / (items * nf);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(Error::DegenerateMarginals);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Fleiss' kappa over an item × rater matrix of category labels.
pub fn fleiss_kappa<T: Eq + Hash + Ord + Clone>(matrix: &[Vec<T>]) -> Result<f64> {
    let mut cats: Vec<T> = matrix.iter().flatten().cloned().collect();
    cats.sort();
    cats.dedup();
    let index: HashMap<&T, usize> = cats.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let counts: Vec<Vec<usize>> = matrix
        .iter()
        .map(|row| {
            let mut c = vec![0; cats.len()];
            for v in row {
                c[index[v]] += 1;
            }
            c
        })
        .collect();
    fleiss_kappa_counts(&counts)
}

/// Cohen's kappa for two raters over the same items.
pub fn cohen_kappa<T: Eq + Hash + Ord + Clone>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("cohen kappa needs equal-length label vectors".into()));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("cohen kappa needs at least one item".into()));
    }
    // integer counts keep simple cases exact: kappa = (n*agree - E) / (n^2 - E)
    let n = a.len() as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let ca = counts(a.iter());
    let cb = counts(b.iter());
    let chance: u128 = ca
        .iter()
        .map(|(k, &c)| c as u128 * cb.get(k).copied().unwrap_or(0) as u128)
        .sum();
    if chance == n * n {
        return Err(Error::DegenerateMarginals);
    }
    Ok(((n * agree) as i128 - chance as i128) as f64 / (n * n - chance) as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub n_items: usize,
    pub raters: Vec<String>,
    pub fleiss_extraction: Option<f64>,
    pub fleiss_mechanism: Option<f64>,
    pub pairwise: Vec<PairwiseKappa>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseKappa {
    pub rater_a: String,
    pub rater_b: String,
    pub n_items: usize,
    pub extraction: Option<f64>,
    pub mechanism: Option<f64>,
}

fn degenerate_as_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(k) => Ok(Some(k)),
        Err(Error::DegenerateMarginals) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Agreement over items labelled by every rater (the overlap). Mechanism
/// kappa uses five categories, with not_applicable for non-yes verdicts.
pub fn agreement(labels: &[LabelRecord]) -> Result<AgreementReport> {
    let mut raters: Vec<String> = labels.iter().map(|l| l.rater.clone()).collect();
    raters.sort();
    raters.dedup();
    let mut by_item: BTreeMap<&str, BTreeMap<&str, &LabelRecord>> = BTreeMap::new();
    for l in labels {
        by_item.entry(&l.pattern_ref).or_default().insert(&l.rater, l);
    }
    let overlap: Vec<&BTreeMap<&str, &LabelRecord>> =
        by_item.values().filter(|m| m.len() == raters.len()).collect();
    let ext: Vec<Vec<Extraction>> = overlap.iter().map(|m| m.values().map(|l| l.extraction).collect()).collect();
    let mech: Vec<Vec<Mechanism>> = overlap.iter().map(|m| m.values().map(|l| l.mechanism).collect()).collect();
    let (fleiss_extraction, fleiss_mechanism) = if overlap.is_empty() || raters.len() < 2 {
        (None, None)
    } else {
        (degenerate_as_none(fleiss_kappa(&ext))?, degenerate_as_none(fleiss_kappa(&mech))?)
    };

    let mut pairwise = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            let (ra, rb) = (raters[i].as_str(), raters[j].as_str());
            let shared: Vec<(&LabelRecord, &LabelRecord)> = by_item
                .values()
                .filter_map(|m| Some((*m.get(ra)?, *m.get(rb)?)))
                .collect();
            let (extraction, mechanism) = if shared.is_empty() {
                (None, None)
            } else {
                let ea: Vec<_> = shared.iter().map(|p| p.0.extraction).collect();
                let eb: Vec<_> = shared.iter().map(|p| p.1.extraction).collect();
                let ma: Vec<_> = shared.iter().map(|p| p.0.mechanism).collect();
                let mb: Vec<_> = shared.iter().map(|p| p.1.mechanism).collect();
                (degenerate_as_none(cohen_kappa(&ea, &eb))?, degenerate_as_none(cohen_kappa(&ma, &mb))?)
            };
            pairwise.push(PairwiseKappa {
                rater_a: ra.to_string(),
                rater_b: rb.to_string(),
                n_items: shared.len(),
                extraction,
                mechanism,
            });
        }
    }
    Ok(AgreementReport {
        n_items: overlap.len(),
        raters,
        fleiss_extraction,
        fleiss_mechanism,
        pairwise,
    })
}

// ---------------------------------------------------------------- sampling

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LBucket {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "4-6")]
    FourToSix,
    #[serde(rename = "7-10")]
    SevenToTen,
    #[serde(rename = "11+")]
    ElevenPlus,
}

impl LBucket {
    pub fn of(len: usize) -> LBucket {
        match len {
            0..=2 => LBucket::Two,
            3 => LBucket::Three,
            4..=6 => LBucket::FourToSix,
            7..=10 => LBucket::SevenToTen,
            _ => LBucket::ElevenPlus,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LBucket::Two => "2",
            LBucket::Three => "3",
            LBucket::FourToSix => "4-6",
            LBucket::SevenToTen => "7-10",
            LBucket::ElevenPlus => "11+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stratum {
    pub l_bucket: LBucket,
    pub scope: Scope,
    /// 0, 1, 2 for the low, middle and high tertile of log support.
    pub support_bucket: u8,
}

impl Stratum {
    pub fn label(&self) -> String {
        format!("L{}/{}/s{}", self.l_bucket.as_str(), self.scope.as_str(), self.support_bucket)
    }

    fn distance(&self, other: &Stratum) -> usize {
        let l = (self.l_bucket as i32 - other.l_bucket as i32).unsigned_abs() as usize;
        let s = (self.scope as i32 - other.scope as i32).unsigned_abs() as usize;
        let b = (self.support_bucket as i32 - other.support_bucket as i32).unsigned_abs() as usize;
        l + s + b
    }
}

#[derive(Debug, Clone)]
pub struct PoolParams {
    pub pool_size: usize,
    pub overlap: usize,
    pub spec_coverage: usize,
    pub raters: Vec<String>,
    pub seed: u64,
}

impl Default for PoolParams {
    fn default() -> Self {
        PoolParams {
            pool_size: 200,
            overlap: 60,
            spec_coverage: 20,
            raters: vec!["A".into(), "B".into(), "C".into()],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub pattern_ref: String,
    pub stratum: String,
    pub overlap: bool,
    pub raters: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct PoolAssignment {
    pub items: Vec<PoolItem>,
    /// Human-readable notes about shortfall fallbacks.
    pub fallbacks: Vec<String>,
}

impl PoolAssignment {
    pub fn per_rater_totals(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for it in &self.items {
            for r in &it.raters {
                *m.entry(r.clone()).or_insert(0) += 1;
            }
        }
        m
    }

    /// Blank label rows for one rater, ready to be filled in.
    pub fn label_template(&self, rater: &str) -> Vec<LabelRecord> {
        self.items
            .iter()
            .filter(|it| it.raters.iter().any(|r| r == rater))
            .map(|it| LabelRecord {
                pattern_ref: it.pattern_ref.clone(),
                rater: rater.to_string(),
                extraction: Extraction::Uncertain,
                mechanism: Mechanism::NotApplicable,
                notes: String::new(),
            })
            .collect()
    }
}

/// Largest-remainder apportionment of `total` over `sizes`, proportional to size.
pub fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let quotas: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        if alloc[i] < sizes[i] {
            alloc[i] += 1;
            left -= 1;
        }
    }
    alloc
}

fn rng(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

/// Draw the labelling pool from the scope-eligible patterns.
///
/// `pool_size - spec_coverage` items come from the real-signal stratum
/// (outlier fraction ≤ 0.5), stratified by L-bucket × most-specific scope ×
/// support tertile; `spec_coverage` items come from the spec-coverage
/// stratum. A shortfall in one stratum is drawn from the nearest stratum
/// that still has patterns left.
pub fn sample_pool(patterns: &[PatternStats], params: &PoolParams) -> Result<PoolAssignment> {
    if params.raters.is_empty() {
        return Err(Error::InvalidInput("at least one rater is required".into()));
    }
    if params.overlap > params.pool_size || params.spec_coverage > params.pool_size {
        return Err(Error::InvalidInput("overlap and spec coverage cannot exceed the pool size".into()));
    }
    let mut eligible: Vec<&PatternStats> = patterns.iter().filter(|p| p.scope_eligible()).collect();
    if eligible.is_empty() {
        return Err(Error::InvalidInput("no scope-eligible patterns to sample".into()));
    }
    if eligible.len() < params.pool_size {
        return Err(Error::InsufficientPopulation {
            requested: params.pool_size,
            available: eligible.len(),
        });
    }
    eligible.sort_by_key(|p| p.pattern_ref());

    let (spec, real): (Vec<&PatternStats>, Vec<&PatternStats>) =
        eligible.into_iter().partition(|p| p.outlier_fraction > SPEC_OUTLIER_CUTOFF);

    let log_support: Vec<f64> = real.iter().map(|p| (p.support_total as f64).ln()).collect();
    let (t1, t2) = if log_support.is_empty() {
        (0.0, 0.0)
    } else {
        (percentile(&log_support, 100.0 / 3.0), percentile(&log_support, 200.0 / 3.0))
    };
    let mut strata: BTreeMap<Stratum, Vec<&PatternStats>> = BTreeMap::new();
    for (p, ls) in real.iter().zip(&log_support) {
        let support_bucket = if *ls <= t1 {
            0
        } else if *ls <= t2 {
            1
        } else {
            2
        };
        let s = Stratum {
            l_bucket: LBucket::of(p.len),
            scope: p.most_specific_scope().expect("scope-eligible"),
            support_bucket,
        };
        strata.entry(s).or_default().push(p);
    }

    let mut fallbacks = Vec::new();
    let mut real_target = params.pool_size - params.spec_coverage;
    let mut spec_target = params.spec_coverage;
    if spec.len() < spec_target {
        let short = spec_target - spec.len();
        let msg = format!("spec-coverage stratum has {} patterns, {} requested; drawing {} from real-signal", spec.len(), spec_target, short);
        log::warn!("{msg}");
        fallbacks.push(msg);
        spec_target = spec.len();
        real_target += short;
    }
    if real.len() < real_target {
        let short = real_target - real.len();
        let msg = format!("real-signal stratum has {} patterns, {} requested; drawing {} from spec-coverage", real.len(), real_target, short);
        log::warn!("{msg}");
        fallbacks.push(msg);
        real_target = real.len();
        spec_target += short;
    }

    let mut picked: Vec<(String, String)> = Vec::with_capacity(params.pool_size);

    // real-signal: proportional allocation, then per-stratum draws
    let keys: Vec<Stratum> = strata.keys().copied().collect();
    let sizes: Vec<usize> = keys.iter().map(|k| strata[k].len()).collect();
    let alloc = largest_remainder(&sizes, real_target);
    let mut leftovers: BTreeMap<Stratum, Vec<&PatternStats>> = BTreeMap::new();
    let mut shortfall = real_target - alloc.iter().sum::<usize>();
    for (i, k) in keys.iter().enumerate() {
        let mut members = strata[k].clone();
        members.shuffle(&mut rng(params.seed, "stratum", i as u64));
        let rest = members.split_off(alloc[i]);
        picked.extend(members.iter().map(|p| (p.pattern_ref(), k.label())));
        leftovers.insert(*k, rest);
    }
    // only reachable if apportionment could not place every item
    let mut from = keys.first().copied();
    while shortfall > 0 {
        let origin = from.expect("non-empty strata");
        let nearest = leftovers
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .min_by_key(|(k, _)| (k.distance(&origin), **k))
            .map(|(k, _)| *k);
        let Some(k) = nearest else { break };
        let p = leftovers.get_mut(&k).unwrap().remove(0);
        picked.push((p.pattern_ref(), k.label()));
        shortfall -= 1;
        from = Some(k);
    }

    let mut spec_members = spec.clone();
    spec_members.shuffle(&mut rng(params.seed, "spec", 0));
    picked.extend(spec_members.iter().take(spec_target).map(|p| (p.pattern_ref(), "spec_coverage".to_string())));

    // overlap and rater split
    let mut order: Vec<usize> = (0..picked.len()).collect();
    order.shuffle(&mut rng(params.seed, "overlap", 0));
    let n_raters = params.raters.len();
    let rest = picked.len() - params.overlap;
    let base = rest / n_raters;
    let mut items = Vec::with_capacity(picked.len());
    for (pos, &idx) in order.iter().enumerate() {
        let (pattern_ref, stratum) = picked[idx].clone();
        let (overlap, raters) = if pos < params.overlap {
            (true, params.raters.clone())
        } else {
            // floor share for every rater but the last, who takes the remainder
            let r = ((pos - params.overlap) / base.max(1)).min(n_raters - 1);
            (false, vec![params.raters[r].clone()])
        };
        items.push(PoolItem {
            pattern_ref,
            stratum,
            overlap,
            raters,
        });
    }
    items.sort_by(|a, b| a.pattern_ref.cmp(&b.pattern_ref));
    Ok(PoolAssignment { items, fallbacks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(p: &str, r: &str, e: Extraction, m: Mechanism) -> LabelRecord {
        LabelRecord {
            pattern_ref: p.into(),
            rater: r.into(),
            extraction: e,
            mechanism: m,
            notes: String::new(),
        }
    }

    #[test]
    fn fleiss_hand_oracle() {
        let k = fleiss_kappa_counts(&[vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3]]).unwrap();
        // P̄ = (1 + 1/3 + 1/3 + 1) / 4 = 2/3, Pe = 0.5
        assert!((k - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fleiss_perfect_and_degenerate() {
        let rows: Vec<Vec<&str>> = (0..10).map(|i| vec![if i % 2 == 0 { "a" } else { "b" }; 3]).collect();
        assert_eq!(fleiss_kappa(&rows).unwrap(), 1.0);
        let one: Vec<Vec<&str>> = (0..5).map(|_| vec!["a"; 3]).collect();
        assert!(matches!(fleiss_kappa(&one), Err(Error::DegenerateMarginals)));
    }

    #[test]
    fn cohen_two_by_two() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, n) in [(1, 1, 20), (1, 0, 5), (0, 1, 5), (0, 0, 20)] {
            for _ in 0..n {
                a.push(x);
                b.push(y);
            }
        }
        assert!((cohen_kappa(&a, &b).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn majority_examples() {
        use Extraction::*;
        use Mechanism::*;
        let agg = aggregate_majority(&[
            label("p", "A", Yes, Background),
            label("p", "B", Yes, Background),
            label("p", "C", No, NotApplicable),
        ])
        .unwrap();
        assert_eq!(agg.extraction_majority, ExtractionMajority::Yes);
        assert_eq!(agg.mechanism_majority, Some(Background));
        let tie = aggregate_majority(&[
            label("p", "A", Yes, Background),
            label("p", "B", No, NotApplicable),
            label("p", "C", FlaggedSpec, NotApplicable),
        ])
        .unwrap();
        assert_eq!(tie.extraction_majority, ExtractionMajority::Tie);
        let single = aggregate_majority(&[label("p", "A", No, NotApplicable)]).unwrap();
        assert_eq!(single.extraction_majority, ExtractionMajority::No);
    }

    #[test]
    fn unsure_only_wins_when_unanimous() {
        use Extraction::*;
        use Mechanism::*;
        let agg = aggregate_majority(&[
            label("p", "A", Yes, Unsure),
            label("p", "B", Yes, Unsure),
            label("p", "C", Yes, ReusableScenario),
        ])
        .unwrap();
        assert_eq!(agg.mechanism_majority, Some(ReusableScenario));
        let all = aggregate_majority(&[label("p", "A", Yes, Unsure), label("p", "B", Yes, Unsure)]).unwrap();
        assert_eq!(all.mechanism_majority, Some(Unsure));
    }

    #[test]
    fn invariant_checked() {
        assert!(label("p", "A", Extraction::Yes, Mechanism::NotApplicable).validate().is_err());
        assert!(label("p", "A", Extraction::No, Mechanism::Background).validate().is_err());
        assert!(label("p", "A", Extraction::No, Mechanism::NotApplicable).validate().is_ok());
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(&[5, 3, 2], 5), vec![3, 1, 1]);
        assert_eq!(largest_remainder(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(largest_remainder(&[10, 0], 4), vec![4, 0]);
    }
}
