//! Exact-greedy gradient-boosted regression trees with second-order leaf
//! weights, in the style of XGBoost's `exact` tree method. No row or column
//! subsampling, so training is a pure function of the data.

use serde::{Deserialize, Serialize};

use crate::{ClassifyError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub base_score: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_estimators: 200,
            max_depth: 4,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
            base_score: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left. The threshold is the
    /// largest training value on the left side.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

/// Row indices sorted by each feature, ties by row index. Computed once per
/// training run and reused by every tree.
pub struct SortedColumns {
    order: Vec<Vec<usize>>,
}

impl SortedColumns {
    pub fn new(x: &[Vec<f64>]) -> SortedColumns {
        let d = x.first().map_or(0, |r| r.len());
        let order = (0..d)
            .map(|f| {
                let mut idx: Vec<usize> = (0..x.len()).collect();
                idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        SortedColumns { order }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Level-wise exact greedy growth. Each level makes one pass per feature
/// over the presorted rows, scanning every open node at once.
fn fit_tree(x: &[Vec<f64>], cols: &SortedColumns, g: &[f64], h: &[f64], params: &GbdtParams) -> Tree {
    let lambda = params.lambda;
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let weight = |g: f64, h: f64| -g / (h + lambda) * params.learning_rate;

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // open node of every row, or usize::MAX once its node is final
    let mut at: Vec<usize> = vec![0; x.len()];
    let mut open: Vec<usize> = vec![0];
    for depth in 0..=params.max_depth {
        let mut gsum = vec![0.0; nodes.len()];
        let mut hsum = vec![0.0; nodes.len()];
        let mut count = vec![0usize; nodes.len()];
        for (i, &n) in at.iter().enumerate() {
            if n != usize::MAX {
                gsum[n] += g[i];
                hsum[n] += h[i];
                count[n] += 1;
            }
        }
        for &n in &open {
            nodes[n] = Node::Leaf {
                value: weight(gsum[n], hsum[n]),
            };
        }
        if depth == params.max_depth {
            break;
        }

        let mut best: Vec<Option<Candidate>> = vec![None; nodes.len()];
        let mut gl = vec![0.0; nodes.len()];
        let mut hl = vec![0.0; nodes.len()];
        let mut last: Vec<Option<f64>> = vec![None; nodes.len()];
        for (f, order) in cols.order.iter().enumerate() {
            for &n in &open {
                gl[n] = 0.0;
                hl[n] = 0.0;
                last[n] = None;
            }
            for &r in order {
                let n = at[r];
                if n == usize::MAX || count[n] < 2 {
                    continue;
                }
                let v = x[r][f];
                if let Some(prev) = last[n] {
                    if prev != v {
                        let (gr, hr) = (gsum[n] - gl[n], hsum[n] - hl[n]);
                        if hl[n] >= params.min_child_weight && hr >= params.min_child_weight {
                            let gain = 0.5 * (score(gl[n], hl[n]) + score(gr, hr) - score(gsum[n], hsum[n]));
                            if gain > 1e-12 && best[n].map_or(true, |b| gain > b.gain) {
                                best[n] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: prev,
                                });
                            }
                        }
                    }
                }
                gl[n] += g[r];
                hl[n] += h[r];
                last[n] = Some(v);
            }
        }

        let mut child = vec![(usize::MAX, usize::MAX); nodes.len()];
        let mut next_open = Vec::new();
        for &n in &open {
            if let Some(c) = best[n] {
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[n] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: l,
                    right: r,
                    gain: c.gain,
                };
                child[n] = (l, r);
                next_open.extend([l, r]);
            }
        }
        for (i, n) in at.iter_mut().enumerate() {
            if *n == usize::MAX {
                continue;
            }
            *n = match nodes[*n] {
                Node::Split { feature, threshold, .. } => {
                    if x[i][feature] <= threshold {
                        child[*n].0
                    } else {
                        child[*n].1
                    }
                }
                Node::Leaf { .. } => usize::MAX,
            };
        }
        if next_open.is_empty() {
            break;
        }
        open = next_open;
    }
    Tree { nodes }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// A trained ensemble. `trees[round][class]`; binary models have one class
/// slot per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub params: GbdtParams,
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Vec<Tree>>,
}

impl Gbdt {
    fn base_margin(&self) -> f64 {
        if self.n_classes == 2 {
            logit(self.params.base_score)
        } else {
            // equal margins give a uniform softmax start
            self.params.base_score
        }
    }

    fn margins(&self, x: &[f64]) -> Vec<f64> {
        let k = if self.n_classes == 2 { 1 } else { self.n_classes };
        let mut m = vec![self.base_margin(); k];
        for round in &self.trees {
            for (c, t) in round.iter().enumerate() {
                m[c] += t.predict(x);
            }
        }
        m
    }

    /// Positive-class probability for binary models.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margins(x)[0])
    }

    /// Class probabilities for multi-class models.
    pub fn predict_class_proba(&self, x: &[f64]) -> Vec<f64> {
        if self.n_classes == 2 {
            let p = self.predict_proba(x);
            return vec![1.0 - p, p];
        }
        softmax(&self.margins(x))
    }

    /// Arg-max class; the lowest index wins ties.
    pub fn predict_class(&self, x: &[f64]) -> usize {
        let p = self.predict_class_proba(x);
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        best
    }

    /// Mean split gain per feature, normalised to sum to one. Uniform when no
    /// tree ever split.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        let mut count = vec![0usize; self.n_features];
        for t in self.trees.iter().flatten() {
            for n in &t.nodes {
                if let Node::Split { feature, gain, .. } = n {
                    total[*feature] += gain;
                    count[*feature] += 1;
                }
            }
        }
        let mean: Vec<f64> = total
            .iter()
            .zip(&count)
            .map(|(t, &c)| if c == 0 { 0.0 } else { t / c as f64 })
            .collect();
        let s: f64 = mean.iter().sum();
        if s <= 0.0 {
            return vec![1.0 / self.n_features.max(1) as f64; self.n_features];
        }
        mean.iter().map(|m| m / s).collect()
    }
}

fn check_rows(x: &[Vec<f64>], n_labels: usize) -> Result<usize> {
    if x.len() != n_labels {
        return Err(ClassifyError::InvalidInput(format!("{} rows but {} labels", x.len(), n_labels)));
    }
    let d = x.first().map_or(0, |r| r.len());
    if x.iter().any(|r| r.len() != d) {
        return Err(ClassifyError::InvalidInput("ragged feature matrix".into()));
    }
    Ok(d)
}

/// Logistic-loss binary ensemble.
pub fn train_binary(x: &[Vec<f64>], y: &[bool], params: &GbdtParams) -> Result<Gbdt> {
    let d = check_rows(x, y.len())?;
    let pos = y.iter().filter(|v| **v).count();
    if pos == 0 || pos == y.len() {
        return Err(ClassifyError::DegenerateLabels("binary training needs both classes".into()));
    }
    let mut model = Gbdt {
        params: *params,
        n_classes: 2,
        n_features: d,
        trees: Vec::with_capacity(params.n_estimators),
    };
    let cols = SortedColumns::new(x);
    let mut margin = vec![model.base_margin(); x.len()];
    let mut g = vec![0.0; x.len()];
    let mut h = vec![0.0; x.len()];
    for _ in 0..params.n_estimators {
        for i in 0..x.len() {
            let p = sigmoid(margin[i]);
            g[i] = p - if y[i] { 1.0 } else { 0.0 };
            h[i] = (p * (1.0 - p)).max(1e-16);
        }
        let t = fit_tree(x, &cols, &g, &h, params);
        for (i, row) in x.iter().enumerate() {
            margin[i] += t.predict(row);
        }
        model.trees.push(vec![t]);
    }
    Ok(model)
}

/// Softmax multi-class ensemble over classes `0..n_classes`.
pub fn train_multiclass(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &GbdtParams) -> Result<Gbdt> {
    let d = check_rows(x, y.len())?;
    if n_classes < 3 {
        return Err(ClassifyError::InvalidInput("use train_binary for two classes".into()));
    }
    if y.iter().any(|&c| c >= n_classes) {
        return Err(ClassifyError::InvalidInput("class index out of range".into()));
    }
    let mut present: Vec<usize> = y.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(ClassifyError::DegenerateLabels("mechanism training needs at least two classes".into()));
    }
    let mut model = Gbdt {
        params: *params,
        n_classes,
        n_features: d,
        trees: Vec::with_capacity(params.n_estimators),
    };
    let cols = SortedColumns::new(x);
    let mut margin = vec![vec![model.base_margin(); n_classes]; x.len()];
    let mut g = vec![0.0; x.len()];
    let mut h = vec![0.0; x.len()];
    for _ in 0..params.n_estimators {
        let probs: Vec<Vec<f64>> = margin.iter().map(|m| softmax(m)).collect();
        let mut round = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            for i in 0..x.len() {
                let p = probs[i][c];
                g[i] = p - if y[i] == c { 1.0 } else { 0.0 };
                h[i] = (2.0 * p * (1.0 - p)).max(1e-16);
            }
            round.push(fit_tree(x, &cols, &g, &h, params));
        }
        for (i, row) in x.iter().enumerate() {
            for (c, t) in round.iter().enumerate() {
                margin[i][c] += t.predict(row);
            }
        }
        model.trees.push(round);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, ((i * 7) % 11) as f64]).collect();
        let y = x.iter().map(|r| r[0] < 0.2).collect();
        (x, y)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = grid(60);
        let m = train_binary(&x, &y, &GbdtParams::default()).unwrap();
        for (r, l) in x.iter().zip(&y) {
            assert_eq!(m.predict_proba(r) >= 0.5, *l);
        }
        let imp = m.feature_importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp[0] > imp[1]);
    }

    #[test]
    fn depth_is_bounded() {
        fn depth(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(t, *left).max(depth(t, *right)),
            }
        }
        let (x, y) = grid(80);
        let m = train_binary(&x, &y, &GbdtParams::default()).unwrap();
        assert!(m.trees.iter().flatten().all(|t| depth(t, 0) <= 4));
        assert_eq!(m.trees.len(), 200);
    }

    #[test]
    fn single_class_is_degenerate() {
        let (x, _) = grid(10);
        assert!(matches!(
            train_binary(&x, &[true; 10], &GbdtParams::default()),
            Err(ClassifyError::DegenerateLabels(_))
        ));
    }

    #[test]
    fn multiclass_learns_function_of_feature() {
        let x: Vec<Vec<f64>> = (0..45).map(|i| vec![(i % 3) as f64, i as f64]).collect();
        let y: Vec<usize> = (0..45).map(|i| i % 3).collect();
        let m = train_multiclass(&x, &y, 3, &GbdtParams::default()).unwrap();
        for (r, c) in x.iter().zip(&y) {
            assert_eq!(m.predict_class(r), *c);
        }
        let p = m.predict_class_proba(&x[0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
