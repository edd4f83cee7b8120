use serde::{Deserialize, Serialize};
use serde_json::Value;
use slicemine_core::labels::{Extraction, Mechanism};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub pattern_ref: String,
    pub model_name: String,
    pub extraction_worthy: Option<Extraction>,
    pub mechanism: Option<Mechanism>,
    pub raw_response: String,
    pub parse_ok: bool,
}

fn norm(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace(['-', ' '], "_")
}

fn extraction(v: &Value) -> Option<Extraction> {
    match v {
        Value::Bool(true) => Some(Extraction::Yes),
        Value::Bool(false) => Some(Extraction::No),
        Value::String(s) => match norm(s).as_str() {
            "yes" => Some(Extraction::Yes),
            "no" => Some(Extraction::No),
            "uncertain" => Some(Extraction::Uncertain),
            "flagged_spec" | "flaggedspec" => Some(Extraction::FlaggedSpec),
            _ => None,
        },
        _ => None,
    }
}

fn mechanism(v: &Value) -> Option<Mechanism> {
    match norm(v.as_str()?).as_str() {
        "background" => Some(Mechanism::Background),
        "reusable_scenario" => Some(Mechanism::ReusableScenario),
        "shared_higher_level_step" => Some(Mechanism::SharedHigherLevelStep),
        "unsure" => Some(Mechanism::Unsure),
        _ => None,
    }
}

/// End of the balanced object starting at `start`, skipping braces inside
/// JSON strings.
fn balanced_end(b: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut esc = false;
    for (i, &c) in b.iter().enumerate().skip(start) {
        if in_str {
            match c {
                _ if esc => esc = false,
                b'\\' => esc = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// First balanced `{...}` that parses as a JSON object with an
/// `extraction_worthy` key.
fn find_verdict_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    let b = text.as_bytes();
    for (start, _) in text.match_indices('{') {
        let Some(end) = balanced_end(b, start) else { continue };
        if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(&text[start..=end]) {
            if m.contains_key("extraction_worthy") {
                return Some(m);
            }
        }
    }
    None
}

pub fn parse_verdict(pattern_ref: &str, model_name: &str, raw: &str) -> JudgeVerdict {
    let stripped = raw.replace("```json", "").replace("```", "");
    let obj = find_verdict_object(&stripped);
    let ew = obj.as_ref().and_then(|m| extraction(&m["extraction_worthy"]));
    let mech = match ew {
        Some(Extraction::Yes) => obj.as_ref().and_then(|m| m.get("mechanism")).and_then(mechanism),
        _ => None,
    };
    JudgeVerdict {
        pattern_ref: pattern_ref.to_string(),
        model_name: model_name.to_string(),
        extraction_worthy: ew,
        mechanism: mech,
        raw_response: raw.to_string(),
        parse_ok: ew.is_some(),
    }
}
