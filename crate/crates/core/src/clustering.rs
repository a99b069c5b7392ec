//! Hierarchical density-based clustering over small dense point sets.
//!
//! Groups local dynamics models (flattened operator matrices) into hybrid
//! modes without knowing the number of clusters in advance. Built dense and
//! deterministic: Prim MST over the mutual-reachability graph, condensed
//! hierarchy, excess-of-mass cluster selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise label for points not assigned to any cluster.
pub const NOISE: i32 = -1;

// Stand-in for 1/0 when duplicate points produce zero-length edges.
const LAMBDA_CAP: f64 = 1e12;

/// A set of fixed-length real vectors to cluster.
#[derive(Debug, Clone)]
pub struct PointSet {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl PointSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::RejectedInput("point set must be nonempty".into()));
        }
        let dim = points[0].len();
        for p in &points {
            if p.len() != dim {
                return Err(Error::RejectedInput("inconsistent point dimensionality".into()));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::RejectedInput("non-finite point coordinate".into()));
            }
        }
        Ok(Self { points, dim })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// Clustering outcome: per-point labels plus per-cluster stability scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<i32>,
    pub num_clusters: usize,
    pub stabilities: Vec<f64>,
}

impl ClusterResult {
    /// CSV export: point_index,label,stability.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_index,label,stability\n");
        for (i, &l) in self.labels.iter().enumerate() {
            let s = if l >= 0 { self.stabilities[l as usize] } else { 0.0 };
            out.push_str(&format!("{i},{l},{s}\n"));
        }
        out
    }
}

/// Dense symmetric Euclidean distance matrix.
pub fn pairwise_distance(points: &PointSet) -> DMatrix<f64> {
    let s = points.len();
    let mut d = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in (i + 1)..s {
            let dist = points.points[i]
                .iter()
                .zip(&points.points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

/// Mutual-reachability transform: mr(i,j) = max(core_i, core_j, d(i,j)),
/// with core_i the distance from i to its min_samples-th nearest neighbor.
pub fn mutual_reachability(dist: &DMatrix<f64>, min_samples: usize) -> Result<DMatrix<f64>> {
    let s = dist.nrows();
    if min_samples == 0 {
        return Err(Error::Parameter("min_samples must be positive".into()));
    }
    if min_samples >= s {
        return Err(Error::Parameter(format!(
            "min_samples {min_samples} must be smaller than the point count {s}"
        )));
    }
    let mut core = vec![0.0_f64; s];
    let mut row = vec![0.0_f64; s - 1];
    for i in 0..s {
        let mut k = 0;
        for j in 0..s {
            if j != i {
                row[k] = dist[(i, j)];
                k += 1;
            }
        }
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        core[i] = row[min_samples - 1];
    }
    let mut mr = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in (i + 1)..s {
            let v = dist[(i, j)].max(core[i]).max(core[j]);
            mr[(i, j)] = v;
            mr[(j, i)] = v;
        }
    }
    Ok(mr)
}

/// How clusters are picked from the condensed hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    /// Maximum excess-of-mass stability.
    #[default]
    ExcessOfMass,
    /// Take the hierarchy leaves directly.
    Leaf,
}

struct MstEdge {
    a: usize,
    b: usize,
    w: f64,
}

/// Prim's algorithm on the dense mutual-reachability matrix.
/// Ties broken toward the lowest vertex index.
fn minimum_spanning_tree(mr: &DMatrix<f64>) -> Vec<MstEdge> {
    let s = mr.nrows();
    let mut in_tree = vec![false; s];
    let mut best = vec![f64::INFINITY; s];
    let mut best_from = vec![0usize; s];
    in_tree[0] = true;
    for j in 1..s {
        best[j] = mr[(0, j)];
    }
    let mut edges = Vec::with_capacity(s - 1);
    for _ in 1..s {
        let mut pick = usize::MAX;
        let mut pick_w = f64::INFINITY;
        for j in 0..s {
            if !in_tree[j] && best[j] < pick_w {
                pick_w = best[j];
                pick = j;
            }
        }
        edges.push(MstEdge { a: best_from[pick], b: pick, w: pick_w });
        in_tree[pick] = true;
        for j in 0..s {
            if !in_tree[j] && mr[(pick, j)] < best[j] {
                best[j] = mr[(pick, j)];
                best_from[j] = pick;
            }
        }
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    // node id representing each current component in the dendrogram
    component: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(s: usize) -> Self {
        Self {
            parent: (0..s).collect(),
            component: (0..s).collect(),
            size: vec![1; s],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

struct SlNode {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Single-linkage dendrogram from sorted MST edges. Leaves are 0..S-1,
/// internal nodes S..2S-2 in merge order.
fn single_linkage(edges: &mut Vec<MstEdge>, s: usize) -> Vec<SlNode> {
    edges.sort_by(|x, y| {
        x.w.partial_cmp(&y.w)
            .unwrap()
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    let mut uf = UnionFind::new(s);
    let mut nodes: Vec<SlNode> = Vec::with_capacity(s - 1);
    for e in edges.iter() {
        let ra = uf.find(e.a);
        let rb = uf.find(e.b);
        let (ca, cb) = (uf.component[ra], uf.component[rb]);
        let new_id = s + nodes.len();
        let new_size = uf.size[ra] + uf.size[rb];
        nodes.push(SlNode { left: ca.min(cb), right: ca.max(cb), distance: e.w, size: new_size });
        uf.parent[ra] = rb;
        uf.component[rb] = new_id;
        uf.size[rb] = new_size;
    }
    nodes
}

struct CondensedCluster {
    parent: Option<usize>,
    birth_lambda: f64,
    children: Vec<usize>,
    /// (point index, lambda at which it left this cluster)
    points: Vec<(usize, f64)>,
    size: usize,
    stability: f64,
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(LAMBDA_CAP)
    } else {
        LAMBDA_CAP
    }
}

/// Collect all leaf point indices beneath a dendrogram node.
fn collect_points(nodes: &[SlNode], s: usize, root: usize, out: &mut Vec<usize>) {
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        if n < s {
            out.push(n);
        } else {
            stack.push(nodes[n - s].left);
            stack.push(nodes[n - s].right);
        }
    }
}

fn condense(nodes: &[SlNode], s: usize, min_cluster_size: usize) -> Vec<CondensedCluster> {
    let root_sl = s + nodes.len() - 1;
    let mut clusters = vec![CondensedCluster {
        parent: None,
        birth_lambda: 0.0,
        children: Vec::new(),
        points: Vec::new(),
        size: s,
        stability: 0.0,
    }];
    // (dendrogram node, owning condensed cluster)
    let mut stack: Vec<(usize, usize)> = vec![(root_sl, 0)];
    while let Some((sl_id, cluster)) = stack.pop() {
        if sl_id < s {
            continue;
        }
        let node = &nodes[sl_id - s];
        let lambda = lambda_of(node.distance);
        let child_size = |id: usize| if id < s { 1 } else { nodes[id - s].size };
        let (l, r) = (node.left, node.right);
        let (ls, rs) = (child_size(l), child_size(r));
        let l_big = ls >= min_cluster_size;
        let r_big = rs >= min_cluster_size;
        if l_big && r_big {
            // true split: two new clusters are born
            for &child in &[l, r] {
                let id = clusters.len();
                clusters[cluster].children.push(id);
                clusters.push(CondensedCluster {
                    parent: Some(cluster),
                    birth_lambda: lambda,
                    children: Vec::new(),
                    points: Vec::new(),
                    size: child_size(child),
                    stability: 0.0,
                });
                stack.push((child, id));
            }
        } else if l_big || r_big {
            // cluster continues through the big side, the small side falls out
            let (big, small) = if l_big { (l, r) } else { (r, l) };
            let mut dropped = Vec::new();
            collect_points(nodes, s, small, &mut dropped);
            dropped.sort_unstable();
            for p in dropped {
                clusters[cluster].points.push((p, lambda));
            }
            stack.push((big, cluster));
        } else {
            // both sides below the minimum size: every point leaves here
            let mut dropped = Vec::new();
            collect_points(nodes, s, sl_id, &mut dropped);
            dropped.sort_unstable();
            for p in dropped {
                clusters[cluster].points.push((p, lambda));
            }
        }
    }
    // stability = sum over members of (lambda_leave - lambda_birth)
    for i in 0..clusters.len() {
        let birth = clusters[i].birth_lambda;
        let mut st: f64 = clusters[i].points.iter().map(|&(_, l)| l - birth).sum();
        for &c in clusters[i].children.clone().iter() {
            st += clusters[c].size as f64 * (clusters[c].birth_lambda - birth);
        }
        clusters[i].stability = st;
    }
    clusters
}

/// Excess-of-mass selection: a cluster is kept if its own stability exceeds
/// the combined stability of its subtree, otherwise its children win.
fn select_clusters(clusters: &[CondensedCluster], method: SelectionMethod) -> Vec<usize> {
    let n = clusters.len();
    match method {
        SelectionMethod::Leaf => (0..n).filter(|&i| clusters[i].children.is_empty()).collect(),
        SelectionMethod::ExcessOfMass => {
            let mut subtree = vec![0.0_f64; n];
            let mut keep = vec![false; n];
            // children always have larger ids than parents, so reverse order
            // is bottom-up
            for i in (0..n).rev() {
                if clusters[i].children.is_empty() {
                    subtree[i] = clusters[i].stability;
                    keep[i] = true;
                } else {
                    let child_sum: f64 =
                        clusters[i].children.iter().map(|&c| subtree[c]).sum();
                    if clusters[i].stability >= child_sum {
                        subtree[i] = clusters[i].stability;
                        keep[i] = true;
                    } else {
                        subtree[i] = child_sum;
                        keep[i] = false;
                    }
                }
            }
            // top-down: the highest kept cluster on each path wins
            let mut selected = Vec::new();
            let mut stack = vec![0usize];
            while let Some(i) = stack.pop() {
                if keep[i] {
                    selected.push(i);
                } else {
                    stack.extend(clusters[i].children.iter().rev());
                }
            }
            selected.sort_unstable();
            selected
        }
    }
}

/// Full pipeline with the default excess-of-mass selection.
pub fn hdbscan(points: &PointSet, min_cluster_size: usize, min_samples: usize) -> Result<ClusterResult> {
    hdbscan_with(points, min_cluster_size, min_samples, SelectionMethod::ExcessOfMass)
}

pub fn hdbscan_with(
    points: &PointSet,
    min_cluster_size: usize,
    min_samples: usize,
    method: SelectionMethod,
) -> Result<ClusterResult> {
    let s = points.len();
    if s < 2 {
        return Err(Error::Parameter("need at least two points to cluster".into()));
    }
    if min_cluster_size == 0 {
        return Err(Error::Parameter("min_cluster_size must be positive".into()));
    }
    if s < min_cluster_size {
        return Ok(ClusterResult { labels: vec![NOISE; s], num_clusters: 0, stabilities: vec![] });
    }
    let dist = pairwise_distance(points);
    if dist.iter().all(|&v| v == 0.0) {
        // constant dynamics: one cluster, never a crash
        return Ok(ClusterResult { labels: vec![0; s], num_clusters: 1, stabilities: vec![0.0] });
    }
    let min_samples = min_samples.max(1).min(s - 1);
    let mr = mutual_reachability(&dist, min_samples)?;
    let mut edges = minimum_spanning_tree(&mr);
    let nodes = single_linkage(&mut edges, s);
    let clusters = condense(&nodes, s, min_cluster_size);
    let mut selected = select_clusters(&clusters, method);
    if selected.is_empty() {
        return Ok(ClusterResult { labels: vec![NOISE; s], num_clusters: 0, stabilities: vec![] });
    }
    // Deterministic label order: by smallest member point index.
    let mut owner = vec![usize::MAX; s]; // condensed cluster each point fell out of
    for (ci, c) in clusters.iter().enumerate() {
        for &(p, _) in &c.points {
            owner[p] = ci;
        }
    }
    let selected_set: Vec<bool> = {
        let mut v = vec![false; clusters.len()];
        for &i in &selected {
            v[i] = true;
        }
        v
    };
    // nearest selected ancestor-or-self
    let assigned: Vec<Option<usize>> = (0..s)
        .map(|p| {
            let mut c = Some(owner[p]);
            while let Some(ci) = c {
                if selected_set[ci] {
                    return Some(ci);
                }
                c = clusters[ci].parent;
            }
            None
        })
        .collect();
    let mut min_member = vec![usize::MAX; clusters.len()];
    for (p, a) in assigned.iter().enumerate() {
        if let Some(ci) = a {
            min_member[*ci] = min_member[*ci].min(p);
        }
    }
    selected.retain(|&ci| min_member[ci] != usize::MAX);
    selected.sort_by_key(|&ci| min_member[ci]);
    let mut label_of = vec![NOISE; clusters.len()];
    let mut stabilities = Vec::with_capacity(selected.len());
    for (lbl, &ci) in selected.iter().enumerate() {
        label_of[ci] = lbl as i32;
        stabilities.push(clusters[ci].stability);
    }
    let labels: Vec<i32> = assigned
        .iter()
        .map(|a| a.map_or(NOISE, |ci| label_of[ci]))
        .collect();
    let num_clusters = selected.len();
    Ok(ClusterResult { labels, num_clusters, stabilities })
}

/// Adjusted Rand index between two labelings (noise treated as its own class).
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let uniq = |xs: &[i32]| -> Vec<i32> {
        let mut u: Vec<i32> = xs.to_vec();
        u.sort_unstable();
        u.dedup();
        u
    };
    let ua = uniq(a);
    let ub = uniq(b);
    let idx = |u: &[i32], v: i32| u.iter().position(|&x| x == v).unwrap();
    let mut table = vec![vec![0u64; ub.len()]; ua.len()];
    for k in 0..n {
        table[idx(&ua, a[k])][idx(&ub, b[k])] += 1;
    }
    let comb2 = |x: u64| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let sum_ij: f64 = table.iter().flatten().map(|&x| comb2(x)).sum();
    let sum_a: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let sum_b: f64 = (0..ub.len())
        .map(|j| comb2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = comb2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}
