//! Feature extraction, a gradient-boosted tree ensemble, cross-validated
//! evaluation and rule baselines for the extraction-worthy and mechanism
//! tasks.

pub mod baseline;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbdt;
pub mod mechanism;

pub use error::{ClassifyError, Result};

use std::path::Path;

use serde::{Deserialize, Serialize};
use slicemine_core::labels::Mechanism;
use slicemine_core::mine::PatternStats;

use crate::eval::THRESHOLD;
use crate::gbdt::Gbdt;

/// What `train` writes: the extraction-worthy ensemble and, when the labels
/// allow it, the mechanism ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub feature_names: Vec<String>,
    pub ew: Gbdt,
    pub mechanism: Option<Gbdt>,
}

impl SavedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        std::fs::write(path, s).map_err(|e| slicemine_core::Error::io(path, e).into())
    }

    pub fn load(path: &Path) -> Result<SavedModel> {
        let s = std::fs::read_to_string(path).map_err(|e| slicemine_core::Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

pub const VERDICT_COLUMNS: [&str; 4] = ["cluster_id_seq", "probability", "extraction_worthy", "mechanism"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub cluster_id_seq: String,
    pub probability: f64,
    pub extraction_worthy: bool,
    pub mechanism: Option<Mechanism>,
}

/// Score every scope-eligible pattern; others are skipped.
pub fn classify_patterns(model: &Gbdt, patterns: &[PatternStats]) -> Vec<Verdict> {
    patterns
        .iter()
        .filter(|p| p.scope_eligible())
        .map(|p| {
            let f = features::featurize(p).expect("scope-eligible");
            let probability = model.predict_proba(&f.to_array());
            Verdict {
                cluster_id_seq: p.pattern_ref(),
                probability,
                extraction_worthy: probability >= THRESHOLD,
                mechanism: None,
            }
        })
        .collect()
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    Ok(slicemine_core::io::write_csv(path, &VERDICT_COLUMNS, verdicts)?)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>> {
    Ok(slicemine_core::io::read_csv(path)?)
}
