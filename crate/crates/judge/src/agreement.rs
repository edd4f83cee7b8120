use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use slicemine_classify::eval::binary_metrics;
use slicemine_core::labels::{cohen_kappa, fleiss_kappa, AggregatedLabel, Extraction, ExtractionMajority, Mechanism};
use slicemine_core::Error;

use crate::parse::JudgeVerdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeAgreement {
    pub model_name: String,
    /// Non-tie human items with a parsed verdict.
    pub n_items: usize,
    pub n_unparseable: usize,
    /// Non-tie human items the judge never answered.
    pub n_missing: usize,
    pub accuracy_b: f64,
    pub kappa_b: Option<f64>,
    pub precision_yes: f64,
    pub recall_yes: f64,
    pub f1_yes: f64,
    /// Items where both sides said yes and both named a concrete mechanism.
    pub mechanism_n: usize,
    pub mechanism_accuracy: Option<f64>,
}

fn kappa_or_none(r: slicemine_core::Result<f64>) -> Option<f64> {
    match r {
        Ok(k) => Some(k),
        Err(Error::DegenerateMarginals) => None,
        Err(e) => {
            log::warn!("kappa: {e}");
            None
        }
    }
}

/// Binary agreement (yes vs everything else) on the non-tie subset, plus
/// mechanism accuracy where both sides said yes.
pub fn judge_agreement(verdicts: &[JudgeVerdict], human: &[AggregatedLabel]) -> JudgeAgreement {
    let by_ref: HashMap<&str, &JudgeVerdict> = verdicts.iter().map(|v| (v.pattern_ref.as_str(), v)).collect();
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    let (mut unparseable, mut missing) = (0, 0);
    let (mut mech_n, mut mech_ok) = (0, 0);
    let mut sorted: Vec<&AggregatedLabel> = human.iter().collect();
    sorted.sort_by(|a, b| a.pattern_ref.cmp(&b.pattern_ref));
    for h in sorted {
        if h.extraction_majority == ExtractionMajority::Tie {
            continue;
        }
        let Some(v) = by_ref.get(h.pattern_ref.as_str()) else {
            missing += 1;
            continue;
        };
        let Some(ew) = v.extraction_worthy.filter(|_| v.parse_ok) else {
            unparseable += 1;
            continue;
        };
        let h_yes = h.extraction_majority == ExtractionMajority::Yes;
        let j_yes = ew == Extraction::Yes;
        truth.push(h_yes);
        pred.push(j_yes);
        if h_yes && j_yes {
            let concrete = |m: Option<Mechanism>| m.filter(|m| m.class_index().is_some());
            if let (Some(hm), Some(jm)) = (concrete(h.mechanism_majority), concrete(v.mechanism)) {
                mech_n += 1;
                mech_ok += (hm == jm) as usize;
            }
        }
    }
    let scores: Vec<f64> = pred.iter().map(|&b| b as u8 as f64).collect();
    let m = binary_metrics(&pred, &scores, &truth);
    JudgeAgreement {
        model_name: verdicts.first().map(|v| v.model_name.clone()).unwrap_or_default(),
        n_items: truth.len(),
        n_unparseable: unparseable,
        n_missing: missing,
        accuracy_b: m.accuracy,
        kappa_b: if truth.is_empty() { None } else { kappa_or_none(cohen_kappa(&truth, &pred)) },
        precision_yes: m.precision,
        recall_yes: m.recall,
        f1_yes: m.f1,
        mechanism_n: mech_n,
        mechanism_accuracy: (mech_n > 0).then(|| mech_ok as f64 / mech_n as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterJudgeAgreement {
    pub judges: Vec<String>,
    pub n_items: usize,
    pub fleiss_4cat: Option<f64>,
    pub fleiss_binary: Option<f64>,
}

/// Fleiss' kappa across judges on items every judge answered.
pub fn inter_judge_agreement(per_judge: &[Vec<JudgeVerdict>]) -> Option<InterJudgeAgreement> {
    if per_judge.len() < 2 {
        return None;
    }
    let mut items: BTreeMap<&str, Vec<Extraction>> = BTreeMap::new();
    for verdicts in per_judge {
        for v in verdicts {
            if let Some(e) = v.extraction_worthy.filter(|_| v.parse_ok) {
                items.entry(&v.pattern_ref).or_default().push(e);
            }
        }
    }
    let rows: Vec<Vec<Extraction>> = items.into_values().filter(|r| r.len() == per_judge.len()).collect();
    let binary: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|e| *e == Extraction::Yes).collect()).collect();
    let (f4, fb) = if rows.is_empty() {
        (None, None)
    } else {
        (kappa_or_none(fleiss_kappa(&rows)), kappa_or_none(fleiss_kappa(&binary)))
    };
    Some(InterJudgeAgreement {
        judges: per_judge.iter().filter_map(|v| v.first().map(|x| x.model_name.clone())).collect(),
        n_items: rows.len(),
        fleiss_4cat: f4,
        fleiss_binary: fb,
    })
}
