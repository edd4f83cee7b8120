//! Step clustering: assigns a cluster id to each step when the corpus does
//! not carry upstream ids, and keeps one canonical text per cluster.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::hash::{hex_id, stable_hash};
use crate::ingest::StepRecord;
use crate::stats::dot;

pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCluster {
    pub cluster_id: String,
    pub canonical_text: String,
    pub member_count: usize,
    pub has_adjacent_placeholders: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    Passthrough,
    Exact,
    Embedding,
}

impl std::str::FromStr for ClusterMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "passthrough" => Ok(ClusterMode::Passthrough),
            "exact" => Ok(ClusterMode::Exact),
            "embedding" => Ok(ClusterMode::Embedding),
            other => Err(format!("unknown cluster mode `{other}`")),
        }
    }
}

/// Quoted span in a step text, as byte offsets `[start, end)` including the
/// quote characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QuotedSpan {
    start: usize,
    end: usize,
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Pair quotes left to right. Double quotes always open a span; a single
/// quote only opens one at a word boundary so apostrophes (`user's`) are
/// left alone.
fn quoted_spans(text: &str) -> Vec<QuotedSpan> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let opens = match c {
            '"' => true,
            '\'' => i == 0 || !is_word(chars[i - 1].1),
            _ => false,
        };
        if opens {
            let close = (i + 1..chars.len()).find(|&j| {
                chars[j].1 == c && (c == '"' || chars.get(j + 1).is_none_or(|&(_, n)| !is_word(n)))
            });
            if let Some(j) = close {
                spans.push(QuotedSpan {
                    start,
                    end: chars[j].0 + c.len_utf8(),
                });
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    spans
}

fn angle_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^<>]+>").expect("valid regex"))
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d+(?:\.\d+)?\b").expect("valid regex"))
}

/// Normalize a step text for exact-match clustering: lowercase, quoted
/// spans to `"_"`, `<param>` spans to `<_>`, standalone numbers to `0`,
/// whitespace collapsed.
pub fn normalize_step(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for span in quoted_spans(text) {
        out.push_str(&text[last..span.start]);
        out.push_str("\"_\"");
        last = span.end;
    }
    out.push_str(&text[last..]);
    let out = out.to_lowercase();
    let out = angle_re().replace_all(&out, "<_>");
    let out = number_re().replace_all(&out, "0");
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True when the text holds two quoted single-word spans separated only by
/// whitespace (e.g. `the result should be "_" "_"` or `"a""b"`).
pub fn has_adjacent_placeholders(text: &str) -> bool {
    let single_word = |s: &QuotedSpan| {
        let inner = &text[s.start + 1..s.end - 1];
        !inner.is_empty() && !inner.chars().any(char::is_whitespace)
    };
    quoted_spans(text)
        .windows(2)
        .any(|w| single_word(&w[0]) && single_word(&w[1]) && text[w[0].end..w[1].start].trim().is_empty())
}

pub fn exact_cluster_id(text: &str) -> String {
    hex_id("c", stable_hash([normalize_step(text)]))
}

fn most_frequent_text<'a>(counts: &BTreeMap<&'a str, usize>) -> &'a str {
    // first maximum in lexicographic order wins
    counts
        .iter()
        .fold(None::<(&str, usize)>, |best, (&t, &n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((t, n)),
        })
        .map(|(t, _)| t)
        .unwrap_or_default()
}

/// Rebuild the cluster table from records that already carry cluster ids.
/// The canonical text is the most frequent member text (lexicographically
/// smallest on ties). Records without an id are ignored.
pub fn reconstruct_clusters(records: &[StepRecord]) -> Vec<StepCluster> {
    let mut groups: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for rec in records {
        if let Some(id) = &rec.cluster_id {
            *groups.entry(id).or_default().entry(&rec.text).or_default() += 1;
        }
    }
    groups
        .into_iter()
        .map(|(id, texts)| {
            let canonical = most_frequent_text(&texts).to_string();
            StepCluster {
                cluster_id: id.to_string(),
                has_adjacent_placeholders: has_adjacent_placeholders(&canonical),
                canonical_text: canonical,
                member_count: texts.values().sum(),
            }
        })
        .collect()
}

pub struct ClusterConfig<'a> {
    pub mode: ClusterMode,
    pub merge_threshold: f64,
    pub provider: Option<&'a dyn EmbeddingProvider>,
}

impl Default for ClusterConfig<'_> {
    fn default() -> Self {
        ClusterConfig {
            mode: ClusterMode::Exact,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            provider: None,
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    // The smaller index becomes the root so the result is order-free.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Assign cluster ids to every record.
pub fn assign_clusters(records: &[StepRecord], config: &ClusterConfig<'_>) -> Result<(Vec<StepRecord>, Vec<StepCluster>)> {
    match config.mode {
        ClusterMode::Passthrough => {
            if let Some(index) = records.iter().position(|r| r.cluster_id.is_none()) {
                return Err(Error::MissingClusterId { index });
            }
            Ok((records.to_vec(), reconstruct_clusters(records)))
        }
        ClusterMode::Exact => {
            let out: Vec<StepRecord> = records
                .par_iter()
                .map(|r| StepRecord {
                    cluster_id: Some(exact_cluster_id(&r.text)),
                    ..r.clone()
                })
                .collect();
            let clusters = reconstruct_clusters(&out);
            Ok((out, clusters))
        }
        ClusterMode::Embedding => {
            let provider = config
                .provider
                .ok_or_else(|| Error::EmbeddingProviderUnavailable("embedding mode requires a provider".into()))?;
            let exact = assign_clusters(
                records,
                &ClusterConfig {
                    mode: ClusterMode::Exact,
                    ..*config
                },
            )?;
            merge_by_embedding(exact.0, &exact.1, provider, config.merge_threshold)
        }
    }
}

/// Coarsen exact clusters: any two whose canonical texts embed with cosine
/// similarity ≥ `threshold` end up in the same cluster (transitively). The
/// merged id is the smallest member id; the canonical text is the medoid
/// member text.
fn merge_by_embedding(
    records: Vec<StepRecord>,
    exact: &[StepCluster],
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<(Vec<StepRecord>, Vec<StepCluster>)> {
    let items: Vec<(String, String)> = exact
        .iter()
        .map(|c| (c.cluster_id.clone(), c.canonical_text.clone()))
        .collect();
    let vectors = provider.embed(&items)?;
    let n = exact.len();

    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let vectors = &vectors;
            (i + 1..n).filter(move |&j| dot(&vectors[i], &vectors[j]) >= threshold).map(move |j| (i, j))
        })
        .collect();
    let mut uf = UnionFind::new(n);
    for (i, j) in edges {
        uf.union(i, j);
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }

    let mut remap: HashMap<&str, &str> = HashMap::new();
    let mut merged = Vec::with_capacity(groups.len());
    for members in groups.values() {
        // exact clusters are sorted by id, so the root (smallest index) has
        // the smallest id
        let root_id = &exact[members[0]].cluster_id;
        let medoid = members
            .iter()
            .map(|&i| {
                let score: f64 = members
                    .iter()
                    .map(|&j| exact[j].member_count as f64 * dot(&vectors[i], &vectors[j]))
                    .sum();
                (i, score)
            })
            .fold(None::<(usize, f64)>, |best, (i, s)| match best {
                Some((bi, bs)) if bs > s || (bs == s && exact[bi].canonical_text <= exact[i].canonical_text) => best,
                _ => Some((i, s)),
            })
            .map(|(i, _)| i)
            .expect("non-empty group");
        for &i in members {
            remap.insert(&exact[i].cluster_id, root_id);
        }
        let canonical = exact[medoid].canonical_text.clone();
        merged.push(StepCluster {
            cluster_id: root_id.clone(),
            has_adjacent_placeholders: has_adjacent_placeholders(&canonical),
            canonical_text: canonical,
            member_count: members.iter().map(|&i| exact[i].member_count).sum(),
        });
    }

    let records = records
        .into_iter()
        .map(|mut r| {
            if let Some(id) = r.cluster_id.as_deref() {
                r.cluster_id = Some(remap[id].to_string());
            }
            r
        })
        .collect();
    Ok((records, merged))
}

pub fn write_clusters_csv(path: &Path, clusters: &[StepCluster]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["cluster_id", "canonical_text", "member_count", "has_adjacent_placeholders"])?;
    for c in clusters {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_clusters_csv(path: &Path) -> Result<Vec<StepCluster>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
