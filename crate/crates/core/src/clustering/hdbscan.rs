//! Exact HDBSCAN over dense points with Euclidean distance.
//!
//! Core distance is the distance to the `min_samples`-th nearest other point.
//! The minimum spanning tree of the mutual-reachability graph is built with
//! Prim's algorithm, turned into a single-linkage hierarchy, condensed at
//! `min_cluster_size`, and flat clusters are picked by excess of mass or as
//! the leaves of the condensed tree. Equal distances resolve to the lower
//! point index.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Eom,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    /// Only `euclidean` is supported.
    pub metric: String,
    pub selection: SelectionMethod,
    pub allow_single_cluster: bool,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 10,
            min_samples: 10,
            metric: "euclidean".into(),
            selection: SelectionMethod::Eom,
            allow_single_cluster: false,
        }
    }
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_cluster_size < 2 {
            return Err(format!("min_cluster_size must be at least 2, got {}", self.min_cluster_size));
        }
        if self.min_samples < 1 {
            return Err("min_samples must be at least 1".into());
        }
        if self.metric != "euclidean" {
            return Err(format!("unsupported HDBSCAN metric {:?}; only \"euclidean\"", self.metric));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdbscanResult {
    /// Cluster label per point, `-1` for noise. Labels are dense from 0.
    pub labels: Vec<i64>,
    /// Stability of each selected cluster, indexed by label.
    pub stabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// One merge of the single-linkage hierarchy. Nodes below `n` are points;
/// merge `i` creates node `n + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkageRow {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Row of the condensed tree. Cluster ids start at `n` for the root; `child`
/// below `n` is a point falling out of `parent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedRow {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance to the `min_samples`-th nearest neighbour, not counting the point
/// itself. `k` is clamped to `n - 1` so tiny inputs still get a finite value.
pub fn core_distances(points: &[Vec<f64>], min_samples: usize) -> Vec<f64> {
    let n = points.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let k = min_samples.clamp(1, n - 1);
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> =
                points.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| euclidean(p, q)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

pub fn mutual_reachability(core: &[f64], points: &[Vec<f64>], a: usize, b: usize) -> f64 {
    euclidean(&points[a], &points[b]).max(core[a]).max(core[b])
}

/// Prim's algorithm on the complete mutual-reachability graph, starting from
/// point 0. Edges are returned in insertion order.
pub fn minimum_spanning_tree(points: &[Vec<f64>], core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = mutual_reachability(core, points, current, j);
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge { a: from[next], b: next, weight: best[next] });
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    next: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..2 * n).collect(), size: (0..2 * n).map(|i| usize::from(i < n)).collect(), next: n }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let up = self.parent[x];
            self.parent[x] = root;
            x = up;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let node = self.next;
        self.next += 1;
        self.parent[a] = node;
        self.parent[b] = node;
        self.size[node] = self.size[a] + self.size[b];
        self.size[node]
    }
}

/// Single-linkage merges from MST edges taken in ascending weight; equal
/// weights keep MST order.
pub fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<LinkageRow> {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight));
    let mut uf = UnionFind::new(n);
    edges
        .iter()
        .map(|e| {
            let left = uf.find(e.a);
            let right = uf.find(e.b);
            let size = uf.union(left, right);
            LinkageRow { left, right, distance: e.weight, size }
        })
        .collect()
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// Points under `node`, in breadth-first order.
fn leaves_under(node: usize, n: usize, linkage: &[LinkageRow]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::from([node]);
    while let Some(x) = queue.pop_front() {
        if x < n {
            out.push(x);
        } else {
            let row = &linkage[x - n];
            queue.push_back(row.left);
            queue.push_back(row.right);
        }
    }
    out
}

pub fn condense_tree(linkage: &[LinkageRow], n: usize, min_cluster_size: usize) -> Vec<CondensedRow> {
    if n < 2 || linkage.is_empty() {
        return Vec::new();
    }
    let root = 2 * n - 2;
    let size_of = |x: usize| if x < n { 1 } else { linkage[x - n].size };
    let mut relabel = vec![0usize; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let row = linkage[node - n];
        let lambda = lambda_of(row.distance);
        let parent = relabel[node];
        let (ls, rs) = (size_of(row.left), size_of(row.right));
        let fall_out = |child: usize, out: &mut Vec<CondensedRow>| {
            for p in leaves_under(child, n, linkage) {
                out.push(CondensedRow { parent, child: p, lambda, child_size: 1 });
            }
        };
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(row.left, ls), (row.right, rs)] {
                    relabel[child] = next_label;
                    out.push(CondensedRow { parent, child: next_label, lambda, child_size: size });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (false, false) => {
                fall_out(row.left, &mut out);
                fall_out(row.right, &mut out);
            }
            (false, true) => {
                fall_out(row.left, &mut out);
                relabel[row.right] = parent;
                queue.push_back(row.right);
            }
            (true, false) => {
                fall_out(row.right, &mut out);
                relabel[row.left] = parent;
                queue.push_back(row.left);
            }
        }
    }
    out
}

/// Excess-of-mass stability per condensed cluster. A point born and leaving
/// at infinite lambda contributes nothing.
pub fn stabilities(tree: &[CondensedRow], n: usize) -> BTreeMap<usize, f64> {
    let mut birth: BTreeMap<usize, f64> = BTreeMap::new();
    birth.insert(n, 0.0);
    for row in tree.iter().filter(|r| r.child >= n) {
        birth.insert(row.child, row.lambda);
    }
    let mut stability: BTreeMap<usize, f64> = birth.keys().map(|&c| (c, 0.0)).collect();
    for row in tree {
        let b = birth[&row.parent];
        let span = if row.lambda == b { 0.0 } else { row.lambda - b };
        *stability.get_mut(&row.parent).unwrap() += span * row.child_size as f64;
    }
    stability
}

fn cluster_children(tree: &[CondensedRow], n: usize) -> BTreeMap<usize, Vec<usize>> {
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for row in tree.iter().filter(|r| r.child >= n) {
        children.entry(row.parent).or_default().push(row.child);
    }
    children
}

fn descendants(node: usize, children: &BTreeMap<usize, Vec<usize>>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if let Some(cs) = children.get(&x) {
            for &c in cs {
                out.push(c);
                stack.push(c);
            }
        }
    }
    out
}

/// Chosen condensed-tree clusters, ascending by id.
pub fn select_clusters(
    tree: &[CondensedRow],
    n: usize,
    stability: &BTreeMap<usize, f64>,
    selection: SelectionMethod,
    allow_single_cluster: bool,
) -> BTreeSet<usize> {
    let root = n;
    let children = cluster_children(tree, n);
    match selection {
        SelectionMethod::Eom => {
            let mut stab = stability.clone();
            let mut is_cluster: BTreeMap<usize, bool> =
                stab.keys().filter(|&&c| allow_single_cluster || c != root).map(|&c| (c, true)).collect();
            let order: Vec<usize> = is_cluster.keys().rev().copied().collect();
            for node in order {
                let subtree: f64 = children.get(&node).map_or(0.0, |cs| cs.iter().map(|c| stab[c]).sum());
                if subtree > stab[&node] {
                    is_cluster.insert(node, false);
                    stab.insert(node, subtree);
                } else {
                    for d in descendants(node, &children) {
                        is_cluster.insert(d, false);
                    }
                }
            }
            is_cluster.into_iter().filter(|&(_, keep)| keep).map(|(c, _)| c).collect()
        }
        SelectionMethod::Leaf => {
            let leaves: BTreeSet<usize> =
                stability.keys().copied().filter(|c| *c != root && !children.contains_key(c)).collect();
            if leaves.is_empty() && allow_single_cluster && stability.contains_key(&root) {
                BTreeSet::from([root])
            } else {
                leaves
            }
        }
    }
}

/// Assigns each point to the selected cluster it falls out of, or to noise.
/// Selected clusters map to labels 0.. in ascending id order.
pub fn label_points(
    tree: &[CondensedRow],
    n: usize,
    selected: &BTreeSet<usize>,
    allow_single_cluster: bool,
) -> Vec<i64> {
    let root = n;
    let label_of: BTreeMap<usize, i64> = selected.iter().enumerate().map(|(i, &c)| (c, i as i64)).collect();
    let mut parent_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut point_lambda = vec![0.0; n];
    for row in tree {
        if row.child < n {
            point_lambda[row.child] = row.lambda;
        }
        if !selected.contains(&row.child) {
            parent_of.insert(row.child, row.parent);
        }
    }
    let top = |mut x: usize| {
        while let Some(&p) = parent_of.get(&x) {
            x = p;
        }
        x
    };
    let root_max_lambda = tree.iter().filter(|r| r.parent == root).map(|r| r.lambda).fold(f64::NEG_INFINITY, f64::max);
    (0..n)
        .map(|p| {
            if !parent_of.contains_key(&p) {
                return -1;
            }
            let c = top(p);
            if c == root {
                if allow_single_cluster
                    && selected.len() == 1
                    && selected.contains(&root)
                    && point_lambda[p] >= root_max_lambda
                {
                    label_of[&root]
                } else {
                    -1
                }
            } else {
                label_of.get(&c).copied().unwrap_or(-1)
            }
        })
        .collect()
}

pub fn hdbscan(points: &[Vec<f64>], params: &HdbscanParams) -> HdbscanResult {
    let n = points.len();
    if n < 2 {
        return HdbscanResult { labels: vec![-1; n], stabilities: Vec::new() };
    }
    let core = core_distances(points, params.min_samples);
    let mst = minimum_spanning_tree(points, &core);
    let linkage = single_linkage(n, &mst);
    let tree = condense_tree(&linkage, n, params.min_cluster_size);
    let stability = stabilities(&tree, n);
    let selected = select_clusters(&tree, n, &stability, params.selection, params.allow_single_cluster);
    let labels = label_points(&tree, n, &selected, params.allow_single_cluster);
    HdbscanResult { labels, stabilities: selected.iter().map(|c| stability[c]).collect() }
}
