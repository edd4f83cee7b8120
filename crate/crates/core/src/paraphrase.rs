//! Paraphrase clustering of recurring patterns: each pattern is embedded as
//! the mean of its per-position canonical-text embeddings, optionally
//! projected to fewer dimensions, and grouped by density-based clustering.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingProvider;
use crate::error::Result;
use crate::hdbscan::{hdbscan, pca_reduce, HdbscanParams, NOISE};
use crate::mine::PatternStats;
use crate::stats::{l2_normalize, percentile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEmbedding {
    pub pattern_ref: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseCluster {
    pub cluster_label: i64,
    pub members: Vec<String>,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub reduce_dim: usize,
    pub hdbscan: HdbscanParams,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            reduce_dim: 50,
            hdbscan: HdbscanParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseSummary {
    pub n_patterns: usize,
    pub n_clusters: usize,
    pub noise_count: usize,
    pub noise_fraction: f64,
    pub median_cluster_size: f64,
    pub p95_cluster_size: f64,
    pub max_cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseClustering {
    /// Real clusters first (label order), then the noise group if any.
    pub clusters: Vec<ParaphraseCluster>,
    pub summary: ParaphraseSummary,
}

impl ParaphraseClustering {
    /// `(pattern_ref, label)` rows sorted by pattern_ref.
    pub fn assignments(&self) -> Vec<(String, i64)> {
        let mut rows: Vec<(String, i64)> = self
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |m| (m.clone(), c.cluster_label)))
            .collect();
        rows.sort();
        rows
    }
}

/// Embed each pattern as the L2-normalized mean of its canonical-text
/// embeddings. Distinct texts are embedded once.
pub fn embed_patterns(patterns: &[PatternStats], provider: &dyn EmbeddingProvider) -> Result<Vec<SliceEmbedding>> {
    let mut text_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for p in patterns {
        for t in &p.canonical_texts {
            let next = text_ids.len();
            text_ids.entry(t.as_str()).or_insert(next);
        }
    }
    let mut items = vec![(String::new(), String::new()); text_ids.len()];
    for (t, &i) in &text_ids {
        items[i] = (format!("t{i}"), t.to_string());
    }
    let vectors = provider.embed(&items)?;
    Ok(patterns
        .iter()
        .map(|p| {
            let dim = vectors.first().map_or(0, Vec::len);
            let mut mean = vec![0.0; dim];
            for t in &p.canonical_texts {
                for (m, x) in mean.iter_mut().zip(&vectors[text_ids[t.as_str()]]) {
                    *m += x;
                }
            }
            let k = p.canonical_texts.len().max(1) as f64;
            mean.iter_mut().for_each(|m| *m /= k);
            l2_normalize(&mut mean);
            SliceEmbedding {
                pattern_ref: p.pattern_ref(),
                vector: mean,
            }
        })
        .collect())
}

/// Cluster slice embeddings. Inputs are sorted by `pattern_ref` first, so
/// the partition does not depend on input order.
pub fn cluster_embeddings(embeddings: &[SliceEmbedding], params: &ClusterParams) -> ParaphraseClustering {
    let mut sorted: Vec<&SliceEmbedding> = embeddings.iter().collect();
    sorted.sort_by(|a, b| a.pattern_ref.cmp(&b.pattern_ref));
    let points: Vec<Vec<f64>> = sorted.iter().map(|e| e.vector.clone()).collect();
    let reduced = pca_reduce(&points, params.reduce_dim);
    let labels = hdbscan(&reduced, params.hdbscan);

    let mut groups: BTreeMap<i64, Vec<String>> = BTreeMap::new();
    for (e, &l) in sorted.iter().zip(&labels) {
        groups.entry(l).or_default().push(e.pattern_ref.clone());
    }
    let noise = groups.remove(&NOISE).unwrap_or_default();
    let mut clusters: Vec<ParaphraseCluster> = groups
        .into_iter()
        .map(|(label, members)| ParaphraseCluster {
            cluster_label: label,
            size: members.len(),
            members,
        })
        .collect();
    let sizes: Vec<f64> = clusters.iter().map(|c| c.size as f64).collect();
    let n = sorted.len();
    let summary = ParaphraseSummary {
        n_patterns: n,
        n_clusters: clusters.len(),
        noise_count: noise.len(),
        noise_fraction: if n == 0 { 0.0 } else { noise.len() as f64 / n as f64 },
        median_cluster_size: percentile(&sizes, 50.0),
        p95_cluster_size: percentile(&sizes, 95.0),
        max_cluster_size: clusters.iter().map(|c| c.size).max().unwrap_or(0),
    };
    if !noise.is_empty() {
        clusters.push(ParaphraseCluster {
            cluster_label: NOISE,
            size: noise.len(),
            members: noise,
        });
    }
    ParaphraseClustering { clusters, summary }
}

/// Scope-positive patterns (RQ1, RQ2 or cross-repo) embedded and clustered.
pub fn cluster_patterns(
    patterns: &[PatternStats],
    provider: &dyn EmbeddingProvider,
    params: &ClusterParams,
) -> Result<ParaphraseClustering> {
    let positive: Vec<PatternStats> = patterns.iter().filter(|p| p.scope_positive()).cloned().collect();
    let embeddings = embed_patterns(&positive, provider)?;
    Ok(cluster_embeddings(&embeddings, params))
}

pub fn label_map(clustering: &ParaphraseClustering) -> HashMap<String, i64> {
    clustering.assignments().into_iter().collect()
}
