//! Corpus ingestion: Gherkin parsing, step-record files and the scenario
//! audit that fixes the mining set and `L_max`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::stats::percentile_sorted;

pub const DEFAULT_LMAX_CAP: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Keyword {
    Given,
    When,
    Then,
    And,
    But,
    #[serde(rename = "*", alias = "Star")]
    Star,
}

impl Keyword {
    pub fn parse(s: &str) -> Option<Keyword> {
        match s.trim() {
            "Given" => Some(Keyword::Given),
            "When" => Some(Keyword::When),
            "Then" => Some(Keyword::Then),
            "And" => Some(Keyword::And),
            "But" => Some(Keyword::But),
            "*" | "Star" => Some(Keyword::Star),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Given => "Given",
            Keyword::When => "When",
            Keyword::Then => "Then",
            Keyword::And => "And",
            Keyword::But => "But",
            Keyword::Star => "*",
        }
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One parsed Gherkin step with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub repo_slug: String,
    pub file_path: String,
    pub scenario: String,
    pub keyword: Keyword,
    pub text: String,
    pub cluster_id: Option<String>,
    pub is_background: bool,
    pub is_outline: bool,
}

impl StepRecord {
    pub fn key(&self) -> ScenarioKey {
        ScenarioKey {
            repo_slug: self.repo_slug.clone(),
            file_path: self.file_path.clone(),
            scenario: self.scenario.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub repo_slug: String,
    pub file_path: String,
    pub scenario: String,
}

impl ScenarioKey {
    pub fn owner(&self) -> OwnerId {
        OwnerId::from_repo_slug(&self.repo_slug)
    }
}

/// Upstream owner: the segment of `repo_slug` before the first underscore.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OwnerId(pub String);

impl OwnerId {
    pub fn from_repo_slug(repo_slug: &str) -> OwnerId {
        let owner = repo_slug.split('_').next().unwrap_or_default();
        if owner.is_empty() {
            // a slug with a leading underscore has no owner segment; fall back
            // to the whole slug so the owner stays non-empty
            OwnerId(repo_slug.to_string())
        } else {
            OwnerId(owner.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// Gherkin parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Feature,
    Rule,
    Background,
    Scenario { outline: bool },
    Examples,
}

const SCENARIO_HEADERS: [(&str, bool); 4] = [
    ("Scenario Outline:", true),
    ("Scenario Template:", true),
    ("Scenario:", false),
    ("Example:", false),
];

fn header_rest<'a>(line: &'a str, header: &str) -> Option<&'a str> {
    line.strip_prefix(header).map(str::trim)
}

fn split_step(line: &str) -> Option<(Keyword, &str)> {
    for kw in ["Given", "When", "Then", "And", "But", "*"] {
        if let Some(rest) = line.strip_prefix(kw) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                return Some((Keyword::parse(kw).expect("known keyword"), rest.trim()));
            }
        }
    }
    None
}

fn language_header(line: &str) -> Option<&str> {
    let body = line.strip_prefix('#')?.trim();
    let rest = body.strip_prefix("language")?.trim_start();
    Some(rest.strip_prefix(':')?.trim())
}

/// Parse one `.feature` file into step records in document order.
///
/// Duplicate non-empty scenario names within the file are disambiguated by
/// appending `#k` (1-based occurrence index) to every occurrence.
pub fn parse_feature_file(source: &str, repo_slug: &str, file_path: &str) -> Result<Vec<StepRecord>> {
    let malformed = |line: usize, reason: &str| Error::MalformedGherkin {
        file: file_path.to_string(),
        line,
        reason: reason.to_string(),
    };

    let mut records = Vec::new();
    // (scenario name, record index range start) per scenario block
    let mut blocks: Vec<(String, usize)> = Vec::new();
    let mut section = Section::None;
    let mut section_name = String::new();
    let mut docstring: Option<(&str, usize)> = None;

    for (idx, raw) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();

        if let Some((delim, _)) = docstring {
            if line == delim {
                docstring = None;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(lang) = language_header(line) {
                if lang != "en" {
                    return Err(malformed(lineno, &format!("unsupported language `{lang}`")));
                }
            }
            continue;
        }
        if line.starts_with('@') || line.starts_with('|') {
            continue;
        }
        if line.starts_with("\"\"\"") || line.starts_with("```") {
            docstring = Some((&line[..3], lineno));
            continue;
        }

        if let Some(name) = header_rest(line, "Feature:")
            .or_else(|| header_rest(line, "Business Need:"))
            .or_else(|| header_rest(line, "Ability:"))
        {
            section = Section::Feature;
            section_name = name.to_string();
            continue;
        }
        if let Some(name) = header_rest(line, "Rule:") {
            section = Section::Rule;
            section_name = name.to_string();
            continue;
        }
        if let Some(name) = header_rest(line, "Background:") {
            if section == Section::None {
                return Err(malformed(lineno, "Background before Feature header"));
            }
            section = Section::Background;
            section_name = name.to_string();
            continue;
        }
        if let Some((name, outline)) = SCENARIO_HEADERS
            .iter()
            .find_map(|(h, outline)| header_rest(line, h).map(|n| (n, *outline)))
        {
            section = Section::Scenario { outline };
            section_name = name.to_string();
            blocks.push((section_name.clone(), records.len()));
            continue;
        }
        if header_rest(line, "Examples:").is_some() || header_rest(line, "Scenarios:").is_some() {
            section = Section::Examples;
            continue;
        }

        if let Some((keyword, text)) = split_step(line) {
            let (is_background, is_outline) = match section {
                Section::Background => (true, false),
                Section::Scenario { outline } => (false, outline),
                Section::Examples => {
                    return Err(malformed(lineno, "step inside an Examples block"));
                }
                Section::None | Section::Feature | Section::Rule => {
                    return Err(malformed(lineno, "step before any Scenario or Background header"));
                }
            };
            if text.is_empty() {
                log::warn!("{file_path}:{lineno}: step without text skipped");
                continue;
            }
            records.push(StepRecord {
                repo_slug: repo_slug.to_string(),
                file_path: file_path.to_string(),
                scenario: section_name.clone(),
                keyword,
                text: text.to_string(),
                cluster_id: None,
                is_background,
                is_outline,
            });
        }
        // anything else is free-form description text
    }

    if let Some((_, start)) = docstring {
        return Err(malformed(start, "unterminated doc-string"));
    }

    disambiguate_names(&mut records, &blocks);
    Ok(records)
}

fn disambiguate_names(records: &mut [StepRecord], blocks: &[(String, usize)]) {
    let mut totals: HashMap<&str, usize> = HashMap::new();
    for (name, _) in blocks {
        if !name.is_empty() {
            *totals.entry(name.as_str()).or_default() += 1;
        }
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, (name, start)) in blocks.iter().enumerate() {
        if name.is_empty() || totals[name.as_str()] < 2 {
            continue;
        }
        let k = seen.entry(name.as_str()).or_default();
        *k += 1;
        let end = blocks.get(i + 1).map_or(records.len(), |(_, s)| *s);
        let renamed = format!("{name}#{k}");
        for rec in &mut records[*start..end] {
            if !rec.is_background {
                rec.scenario = renamed.clone();
            }
        }
    }
}

/// A parse failure for one file. Failures never abort a corpus parse.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedFile {
    pub repo_slug: String,
    pub file_path: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub records: Vec<StepRecord>,
    pub skipped: Vec<SkippedFile>,
}

/// Parse every `.feature` file under `root`, treating `root` as one
/// repository whose slug is `repo_slug`.
pub fn parse_repository(root: &Path, repo_slug: &str) -> Result<ParsedCorpus> {
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() || entry.path().extension().is_none_or(|e| e != "feature") {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        files.push((rel, entry.path().to_path_buf()));
    }

    let parsed: Vec<std::result::Result<Vec<StepRecord>, SkippedFile>> = files
        .par_iter()
        .map(|(rel, path)| {
            let skipped = |reason: String| SkippedFile {
                repo_slug: repo_slug.to_string(),
                file_path: rel.clone(),
                reason,
            };
            let bytes = fs::read(path).map_err(|e| skipped(e.to_string()))?;
            let text = String::from_utf8(bytes).map_err(|_| skipped("not valid UTF-8".into()))?;
            parse_feature_file(&text, repo_slug, rel).map_err(|e| skipped(e.to_string()))
        })
        .collect();

    let mut out = ParsedCorpus::default();
    for r in parsed {
        match r {
            Ok(recs) => out.records.extend(recs),
            Err(skip) => {
                log::warn!("skipping {}/{}: {}", skip.repo_slug, skip.file_path, skip.reason);
                out.skipped.push(skip);
            }
        }
    }
    Ok(out)
}

/// Parse a corpus directory whose immediate subdirectories are repositories.
pub fn parse_corpus(root: &Path) -> Result<ParsedCorpus> {
    let mut repos: Vec<(String, PathBuf)> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    repos.sort();
    let mut out = ParsedCorpus::default();
    for (slug, path) in repos {
        let p = parse_repository(&path, &slug)?;
        out.records.extend(p.records);
        out.skipped.extend(p.skipped);
    }
    Ok(out)
}

/// Stable sort by `(repo_slug, file_path)`; source order is kept within a
/// file.
pub fn canonical_order(records: &mut [StepRecord]) {
    records.sort_by(|a, b| (&a.repo_slug, &a.file_path).cmp(&(&b.repo_slug, &b.file_path)));
}

// ---------------------------------------------------------------------------
// Step-record files
// ---------------------------------------------------------------------------

const STRING_FIELDS: [&str; 4] = ["repo_slug", "file_path", "scenario", "text"];

fn schema(row: usize, field: &str, reason: &str) -> Error {
    Error::Schema {
        row,
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

fn validate(rec: &StepRecord, row: usize) -> Result<()> {
    if rec.text.trim().is_empty() {
        return Err(schema(row, "text", "is empty"));
    }
    if !rec.file_path.ends_with(".feature") {
        return Err(schema(row, "file_path", "must end with .feature"));
    }
    if rec.repo_slug.is_empty() {
        return Err(schema(row, "repo_slug", "is empty"));
    }
    Ok(())
}

fn record_from_json(value: &Value, row: usize) -> Result<StepRecord> {
    let obj = value
        .as_object()
        .ok_or_else(|| schema(row, "<row>", "is not a JSON object"))?;
    let string = |field: &str| -> Result<String> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Null) | None => Err(schema(row, field, "is missing")),
            Some(_) => Err(schema(row, field, "is not a string")),
        }
    };
    let boolean = |field: &str| -> Result<bool> {
        match obj.get(field) {
            Some(Value::Bool(b)) => Ok(*b),
            Some(Value::Null) | None => Err(schema(row, field, "is missing")),
            Some(other) => parse_bool(&other.to_string()).ok_or_else(|| schema(row, field, "is not a boolean")),
        }
    };
    let [repo_slug, file_path, scenario, text] = STRING_FIELDS.map(string);
    let keyword_raw = string("keyword")?;
    let keyword = Keyword::parse(&keyword_raw).ok_or_else(|| schema(row, "keyword", "is not a step keyword"))?;
    let cluster_id = match obj.get("cluster_id") {
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(Value::String(_)) | Some(Value::Null) | None => None,
        Some(_) => return Err(schema(row, "cluster_id", "is not a string")),
    };
    let rec = StepRecord {
        repo_slug: repo_slug?,
        file_path: file_path?,
        scenario: scenario?,
        keyword,
        text: text?.trim().to_string(),
        cluster_id,
        is_background: boolean("is_background")?,
        is_outline: boolean("is_outline")?,
    };
    validate(&rec, row)?;
    Ok(rec)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().trim_matches('"') {
        "true" | "True" | "TRUE" | "1" => Some(true),
        "false" | "False" | "FALSE" | "0" => Some(false),
        _ => None,
    }
}

/// Load step records from a JSONL (`.jsonl`/`.json`) or CSV file. Row
/// indices in errors are 1-based data-row numbers.
pub fn load_step_records(path: &Path) -> Result<Vec<StepRecord>> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    if is_csv {
        load_csv(file)
    } else {
        load_jsonl(BufReader::new(file), path)
    }
}

fn load_jsonl(reader: impl BufRead, path: &Path) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    let mut row = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let value: Value = serde_json::from_str(&line).map_err(|e| schema(row, "<row>", &e.to_string()))?;
        out.push(record_from_json(&value, row)?);
    }
    Ok(out)
}

fn load_csv(reader: impl std::io::Read) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut out = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = result?;
        let mut obj = serde_json::Map::new();
        for field in STRING_FIELDS.iter().chain(["keyword", "cluster_id"].iter()) {
            if let Some(v) = col(field).and_then(|c| rec.get(c)) {
                obj.insert(field.to_string(), Value::String(v.to_string()));
            }
        }
        for field in ["is_background", "is_outline"] {
            if let Some(v) = col(field).and_then(|c| rec.get(c)) {
                let b = parse_bool(v).ok_or_else(|| schema(row, field, "is not a boolean"))?;
                obj.insert(field.to_string(), Value::Bool(b));
            }
        }
        out.push(record_from_json(&Value::Object(obj), row)?);
    }
    Ok(out)
}

pub fn write_records_jsonl(path: &Path, records: &[StepRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Scenario audit
// ---------------------------------------------------------------------------

/// One step of a mining-set scenario. `cluster` is `None` for steps that
/// carry no cluster id; those split the scenario into separate runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioStep {
    pub cluster: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub key: ScenarioKey,
    pub steps: Vec<ScenarioStep>,
}

impl Scenario {
    /// Maximal runs of consecutive cluster-assigned steps, as
    /// `(start position, length)`.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, step) in self.steps.iter().enumerate() {
            match (step.cluster.is_some(), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - s));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.steps.len() - s));
        }
        runs
    }

    pub fn clustered_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.cluster.is_some()).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthPercentiles {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusAudit {
    pub all_scenarios: usize,
    pub background_only_drops: usize,
    pub empty_name_drops: usize,
    pub length_drops: usize,
    pub mining_set: usize,
    pub length_percentiles: LengthPercentiles,
    pub hard_cap: usize,
    pub l_max: usize,
}

enum Fate {
    BackgroundOnly,
    EmptyName,
    TooShort,
    Kept(Scenario),
}

fn classify_scenarios(records: &[StepRecord]) -> Vec<Fate> {
    let mut groups: BTreeMap<ScenarioKey, (bool, Vec<&StepRecord>)> = BTreeMap::new();
    for rec in records {
        let entry = groups.entry(rec.key()).or_default();
        if rec.is_background {
            entry.0 = true;
        } else {
            entry.1.push(rec);
        }
    }
    groups
        .into_iter()
        .map(|(key, (_, steps))| {
            if steps.is_empty() {
                return Fate::BackgroundOnly;
            }
            if key.scenario.trim().is_empty() {
                return Fate::EmptyName;
            }
            let scenario = Scenario {
                key,
                steps: steps
                    .into_iter()
                    .map(|r| ScenarioStep {
                        cluster: r.cluster_id.clone(),
                        text: r.text.clone(),
                    })
                    .collect(),
            };
            if scenario.clustered_steps() < 2 {
                Fate::TooShort
            } else {
                Fate::Kept(scenario)
            }
        })
        .collect()
}

/// Group records into scenarios and keep the mining set: named,
/// non-background scenarios with at least two cluster-assigned steps.
/// Scenarios come out sorted by key.
pub fn mining_set(records: &[StepRecord]) -> Vec<Scenario> {
    classify_scenarios(records)
        .into_iter()
        .filter_map(|f| match f {
            Fate::Kept(s) => Some(s),
            _ => None,
        })
        .collect()
}

pub fn audit_scenarios(records: &[StepRecord], hard_cap: usize) -> CorpusAudit {
    let mut audit = CorpusAudit {
        hard_cap,
        ..Default::default()
    };
    let mut lengths = Vec::new();
    for fate in classify_scenarios(records) {
        audit.all_scenarios += 1;
        match fate {
            Fate::BackgroundOnly => audit.background_only_drops += 1,
            Fate::EmptyName => audit.empty_name_drops += 1,
            Fate::TooShort => audit.length_drops += 1,
            Fate::Kept(s) => {
                audit.mining_set += 1;
                lengths.push(s.steps.len() as f64);
            }
        }
    }
    lengths.sort_by(|a, b| a.total_cmp(b));
    if !lengths.is_empty() {
        audit.length_percentiles = LengthPercentiles {
            p50: percentile_sorted(&lengths, 50.0),
            p90: percentile_sorted(&lengths, 90.0),
            p95: percentile_sorted(&lengths, 95.0),
            p99: percentile_sorted(&lengths, 99.0),
            max: *lengths.last().expect("non-empty"),
        };
        audit.l_max = (audit.length_percentiles.p95.ceil() as usize).min(hard_cap);
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Vec<StepRecord> {
        parse_feature_file(src, "acme_shop", "features/login.feature").unwrap()
    }

    #[test]
    fn background_and_scenario() {
        let recs = parse(
            "Feature: Login\n  Background:\n    Given a user\n    And a db\n\n  Scenario: login\n    Given I open the page\n    When I log in\n    Then I see the dashboard\n",
        );
        assert_eq!(recs.len(), 5);
        assert!(recs[..2].iter().all(|r| r.is_background));
        assert!(recs[2..].iter().all(|r| !r.is_background && r.scenario == "login"));
        assert_eq!(recs[3].keyword, Keyword::When);
    }

    #[test]
    fn karate_star_steps_unnamed() {
        let recs = parse("Feature: api\n\nScenario:\n* url base\n* method get\n* status 200\n");
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.scenario.is_empty() && r.keyword == Keyword::Star));
    }

    #[test]
    fn empty_file() {
        assert!(parse("").is_empty());
    }

    #[test]
    fn docstrings_tables_tags_comments() {
        let src = r#"@smoke
Feature: x
  # a comment
  @tag
  Scenario Outline: outline
    Given I post:
      """
      Given not a step
      """
    And the table:
      | a | b |
      | 1 | 2 |
    Then I wait <seconds> seconds

    Examples:
      | seconds |
      | 3       |
"#;
        let recs = parse(src);
        let texts: Vec<_> = recs.iter().map(|r| r.text.as_str()).collect();
        assert_eq!(texts, ["I post:", "the table:", "I wait <seconds> seconds"]);
        assert!(recs.iter().all(|r| r.is_outline));
    }

    #[test]
    fn unterminated_docstring_reports_line() {
        let err = parse_feature_file("Feature: x\nScenario: s\nGiven a\n\"\"\"\nbody\n", "r", "a.feature").unwrap_err();
        match err {
            Error::MalformedGherkin { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_before_header_is_malformed() {
        let err = parse_feature_file("Given a thing\n", "r", "a.feature").unwrap_err();
        assert!(matches!(err, Error::MalformedGherkin { line: 1, .. }));
        let err = parse_feature_file("Feature: f\n  Given a thing\n", "r", "a.feature").unwrap_err();
        assert!(matches!(err, Error::MalformedGherkin { line: 2, .. }));
    }

    #[test]
    fn non_english_dialect_rejected() {
        let err = parse_feature_file("# language: fr\nFonctionnalité: x\n", "r", "a.feature").unwrap_err();
        assert!(matches!(err, Error::MalformedGherkin { line: 1, .. }));
        assert!(parse_feature_file("# language: en\nFeature: x\n", "r", "a.feature").is_ok());
    }

    #[test]
    fn duplicate_scenario_names_are_numbered() {
        let recs = parse("Feature: f\nScenario: s\nGiven a\nScenario: t\nGiven b\nScenario: s\nGiven c\n");
        let names: Vec<_> = recs.iter().map(|r| r.scenario.as_str()).collect();
        assert_eq!(names, ["s#1", "t", "s#2"]);
    }

    #[test]
    fn owner_is_prefix_before_underscore() {
        assert_eq!(OwnerId::from_repo_slug("datadog_api-client-go").as_str(), "datadog");
        assert_eq!(OwnerId::from_repo_slug("plain").as_str(), "plain");
    }

    fn rec(scenario: &str, cluster: Option<&str>, bg: bool) -> StepRecord {
        StepRecord {
            repo_slug: "o_r".into(),
            file_path: "a.feature".into(),
            scenario: scenario.into(),
            keyword: Keyword::Given,
            text: "t".into(),
            cluster_id: cluster.map(String::from),
            is_background: bg,
            is_outline: false,
        }
    }

    #[test]
    fn audit_counts_partition() {
        let records = vec![
            rec("bg", Some("a"), true),
            rec("", Some("a"), false),
            rec("", Some("b"), false),
            rec("one", Some("a"), false),
            rec("two", Some("a"), false),
            rec("two", None, false),
            rec("two", Some("b"), false),
        ];
        let audit = audit_scenarios(&records, DEFAULT_LMAX_CAP);
        assert_eq!(audit.all_scenarios, 4);
        assert_eq!(audit.background_only_drops, 1);
        assert_eq!(audit.empty_name_drops, 1);
        assert_eq!(audit.length_drops, 1);
        assert_eq!(audit.mining_set, 1);
        assert_eq!(audit.l_max, 3);
        let set = mining_set(&records);
        assert_eq!(set[0].runs(), vec![(0, 1), (2, 1)]);
    }

    #[test]
    fn single_step_scenario_is_not_mined() {
        let audit = audit_scenarios(&[rec("s", Some("a"), false)], 18);
        assert_eq!(audit.mining_set, 0);
        assert_eq!(audit.length_drops, 1);
        assert_eq!(audit.l_max, 0);
    }

    #[test]
    fn empty_corpus_audit_is_zero() {
        assert_eq!(audit_scenarios(&[], 18), CorpusAudit { hard_cap: 18, ..Default::default() });
    }
}
