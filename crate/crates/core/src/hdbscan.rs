//! Density-based clustering (HDBSCAN with excess-of-mass cluster selection)
//! and a PCA projection used as the dimensionality-reduction step.
//!
//! The implementation is exact and quadratic in the number of points:
//! core distances, a Prim minimum spanning tree over mutual-reachability
//! distances, the single-linkage hierarchy, its condensed form and the
//! stability-based flat selection. Every tie is broken by point index so the
//! output only depends on the input order.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

pub const NOISE: i64 = -1;

// Distances below this are treated as equal to it when converting to
// lambda = 1 / distance, keeping every stability finite.
const MIN_DISTANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 5,
            min_samples: 5,
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn lambda(distance: f64) -> f64 {
    1.0 / distance.max(MIN_DISTANCE)
}

/// Distance to the `k`-th nearest neighbour, counting the point itself.
fn core_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let k = k.clamp(1, n);
    points
        .par_iter()
        .map(|p| {
            let mut d: Vec<f64> = points.iter().map(|q| euclidean(p, q)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            *kth
        })
        .collect()
}

/// Prim's algorithm over the dense mutual-reachability graph.
fn mst(points: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let cur_point = &points[current];
        let cur_core = core[current];
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&j| !in_tree[j])
            .map(|j| (j, euclidean(cur_point, &points[j]).max(cur_core).max(core[j])))
            .collect();
        for (j, d) in updates {
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
            .expect("points remain outside the tree");
        in_tree[next] = true;
        edges.push((from[next], next, best[next]));
        current = next;
    }
    edges
}

struct Linkage {
    // internal node i (0-based) is hierarchy node n + i
    left: Vec<usize>,
    right: Vec<usize>,
    distance: Vec<f64>,
    size: Vec<usize>,
}

fn single_linkage(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Linkage {
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0.min(a.1), a.0.max(a.1)).cmp(&(b.0.min(b.1), b.0.max(b.1)))));
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut node_of: Vec<usize> = (0..n).collect(); // union-find root -> hierarchy node
    let find = |parent: &mut Vec<usize>, mut x: usize| {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    };
    let mut link = Linkage {
        left: Vec::with_capacity(n),
        right: Vec::with_capacity(n),
        distance: Vec::with_capacity(n),
        size: Vec::with_capacity(n),
    };
    let node_size = |link: &Linkage, node: usize| if node < n { 1 } else { link.size[node - n] };
    for (a, b, d) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        let (na, nb) = (node_of[ra], node_of[rb]);
        let (l, r) = if na < nb { (na, nb) } else { (nb, na) };
        let size = node_size(&link, l) + node_size(&link, r);
        link.left.push(l);
        link.right.push(r);
        link.distance.push(d);
        link.size.push(size);
        let new_node = n + link.left.len() - 1;
        let root = ra.min(rb);
        parent[ra.max(rb)] = root;
        node_of[root] = new_node;
    }
    link
}

struct CondensedEdge {
    parent: usize,
    // cluster label when `child_is_cluster`, else a point index
    child: usize,
    child_is_cluster: bool,
    lambda: f64,
    child_size: usize,
}

fn leaves(link: &Linkage, n: usize, node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            stack.push(link.right[x - n]);
            stack.push(link.left[x - n]);
        }
    }
}

fn condense(link: &Linkage, n: usize, min_cluster_size: usize) -> (Vec<CondensedEdge>, usize) {
    let root = 2 * n - 2;
    let mut edges = Vec::new();
    let mut label_of = vec![usize::MAX; 2 * n - 1];
    label_of[root] = 0;
    let mut next_label = 1;
    let size = |node: usize| if node < n { 1 } else { link.size[node - n] };

    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let i = node - n;
        let (l, r) = (link.left[i], link.right[i]);
        let lam = lambda(link.distance[i]);
        let parent_label = label_of[node];
        let (ls, rs) = (size(l), size(r));
        let fall_out = |child: usize, edges: &mut Vec<CondensedEdge>| {
            let mut pts = Vec::new();
            leaves(link, n, child, &mut pts);
            pts.sort_unstable();
            for p in pts {
                edges.push(CondensedEdge {
                    parent: parent_label,
                    child: p,
                    child_is_cluster: false,
                    lambda: lam,
                    child_size: 1,
                });
            }
        };
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, s) in [(l, ls), (r, rs)] {
                    label_of[child] = next_label;
                    edges.push(CondensedEdge {
                        parent: parent_label,
                        child: next_label,
                        child_is_cluster: true,
                        lambda: lam,
                        child_size: s,
                    });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (false, false) => {
                fall_out(l, &mut edges);
                fall_out(r, &mut edges);
            }
            (true, false) => {
                fall_out(r, &mut edges);
                label_of[l] = parent_label;
                queue.push_back(l);
            }
            (false, true) => {
                fall_out(l, &mut edges);
                label_of[r] = parent_label;
                queue.push_back(r);
            }
        }
    }
    (edges, next_label)
}

fn select_clusters(edges: &[CondensedEdge], n_clusters: usize) -> Vec<bool> {
    let mut birth = vec![0.0; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in edges.iter().filter(|e| e.child_is_cluster) {
        birth[e.child] = e.lambda;
        children[e.parent].push(e.child);
    }
    let mut stability = vec![0.0; n_clusters];
    for e in edges {
        stability[e.parent] += (e.lambda - birth[e.parent]) * e.child_size as f64;
    }

    let mut selected = vec![false; n_clusters];
    // children always carry larger labels than their parent
    for c in (1..n_clusters).rev() {
        let subtree: f64 = children[c].iter().map(|&k| stability[k]).sum();
        if subtree > stability[c] {
            stability[c] = subtree;
        } else {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend(children[k].iter().copied());
            }
        }
    }
    selected
}

/// Cluster `points`, returning one label per point; [`NOISE`] marks points
/// in no dense region. Labels are numbered by smallest member index.
pub fn hdbscan(points: &[Vec<f64>], params: HdbscanParams) -> Vec<i64> {
    let n = points.len();
    if n < 2 || n < params.min_cluster_size {
        return vec![NOISE; n];
    }
    let min_cluster_size = params.min_cluster_size.max(2);
    let core = core_distances(points, params.min_samples);
    let link = single_linkage(n, mst(points, &core));
    let (edges, n_clusters) = condense(&link, n, min_cluster_size);
    let selected = select_clusters(&edges, n_clusters);

    let mut cluster_parent = vec![usize::MAX; n_clusters];
    let mut point_parent = vec![0usize; n];
    for e in &edges {
        if e.child_is_cluster {
            cluster_parent[e.child] = e.parent;
        } else {
            point_parent[e.child] = e.parent;
        }
    }
    let mut raw = vec![NOISE; n];
    for (p, label) in raw.iter_mut().enumerate() {
        let mut c = point_parent[p];
        loop {
            if selected[c] {
                *label = c as i64;
                break;
            }
            if c == 0 {
                break;
            }
            c = cluster_parent[c];
        }
    }

    let mut renumber = std::collections::HashMap::new();
    raw.into_iter()
        .map(|l| {
            if l == NOISE {
                NOISE
            } else {
                let next = renumber.len() as i64;
                *renumber.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Project onto the top `dim` principal components. Points already at or
/// below `dim` dimensions are returned unchanged.
pub fn pca_reduce(points: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let Some(d) = points.first().map(Vec::len) else {
        return Vec::new();
    };
    if d <= dim || points.len() < 2 {
        return points.to_vec();
    }
    let n = points.len();
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(d, dim);
    for (k, &col) in order.iter().take(dim).enumerate() {
        let v = eig.eigenvectors.column(col);
        // fix the sign so the largest-magnitude entry is positive
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            basis[(j, k)] = sign * v[j];
        }
    }
    let projected = centered * basis;
    (0..n).map(|i| projected.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_ideal_blobs() {
        let mut pts = vec![vec![0.0, 0.0]; 20];
        pts.extend(vec![vec![10.0, 10.0]; 20]);
        let labels = hdbscan(&pts, HdbscanParams::default());
        assert!(labels[..20].iter().all(|&l| l == 0));
        assert!(labels[20..].iter().all(|&l| l == 1));
    }

    #[test]
    fn geometric_chain_is_all_noise() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![2f64.powi(i)]).collect();
        let labels = hdbscan(&pts, HdbscanParams::default());
        assert!(labels.iter().all(|&l| l == NOISE));
    }

    #[test]
    fn too_few_points_are_noise() {
        let labels = hdbscan(&[vec![0.0], vec![0.0]], HdbscanParams::default());
        assert_eq!(labels, vec![NOISE, NOISE]);
    }

    #[test]
    fn pca_preserves_distances_of_low_rank_data() {
        // 6 points living in a 2-d subspace of R^4
        let base = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0], [2.0, 2.0], [1.0, 5.0]];
        let pts: Vec<Vec<f64>> = base.iter().map(|[a, b]| vec![*a, *b, a + b, a - b]).collect();
        let red = pca_reduce(&pts, 2);
        assert_eq!(red[0].len(), 2);
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert!((euclidean(&pts[i], &pts[j]) - euclidean(&red[i], &red[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pca_skips_low_dimensional_input() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(pca_reduce(&pts, 50), pts);
    }
}
