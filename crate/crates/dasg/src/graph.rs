use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

/// Undirected graph on nodes `0..p` with unordered edge storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(p: usize) -> Self {
        Graph { p, edges: BTreeSet::new() }
    }

    pub fn with_edges<I: IntoIterator<Item = (usize, usize)>>(p: usize, edges: I) -> Result<Self> {
        let mut g = Graph::new(p);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn complete(p: usize) -> Self {
        let mut g = Graph::new(p);
        for i in 0..p {
            for j in (i + 1)..p {
                g.edges.insert((i, j));
            }
        }
        g
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
        }
        if i >= self.p || j >= self.p {
            return Err(Error::InvalidArgument(format!(
                "edge ({i},{j}) out of range for p = {}",
                self.p
            )));
        }
        self.edges.insert((i.min(j), i.max(j)));
        Ok(())
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as (i, j) with i < j, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Number of unordered non-self pairs.
    pub fn pair_count(&self) -> usize {
        self.p * (self.p - 1) / 2
    }

    /// N_i = { k != i : (i,k) in E }.
    pub fn neighborhood(&self, i: usize) -> Result<BTreeSet<usize>> {
        if i >= self.p {
            return Err(Error::InvalidArgument(format!(
                "node {i} out of range for p = {}",
                self.p
            )));
        }
        Ok((0..self.p).filter(|&k| self.has_edge(i, k)).collect())
    }

    pub fn max_degree(&self) -> usize {
        let mut deg = vec![0usize; self.p];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }
}

/// Edge-recovery metrics against a ground-truth graph. A metric is absent
/// when its denominator is empty (no true edges for tpr/f1, no true
/// non-edges for tnr).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphMetrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub f1: Option<f64>,
}

pub fn graph_metrics(estimate: &Graph, truth: &Graph) -> Result<GraphMetrics> {
    if estimate.p() != truth.p() {
        return Err(Error::InvalidArgument(format!(
            "node counts differ: estimate p = {}, truth p = {}",
            estimate.p(),
            truth.p()
        )));
    }
    let true_pos = truth.edges().filter(|&(i, j)| estimate.has_edge(i, j)).count();
    let n_edges = truth.edge_count();
    let n_non_edges = truth.pair_count() - n_edges;
    let false_pos = estimate.edge_count() - true_pos;
    let true_neg = n_non_edges - false_pos;

    let tpr = (n_edges > 0).then(|| true_pos as f64 / n_edges as f64);
    let tnr = (n_non_edges > 0).then(|| true_neg as f64 / n_non_edges as f64);
    let f1 = (n_edges > 0)
        .then(|| 2.0 * true_pos as f64 / (n_edges + estimate.edge_count()) as f64);
    Ok(GraphMetrics { tpr, tnr, f1 })
}

/// True iff removing the edge (i, j) and every edge between `r` and its
/// complement leaves i and j in distinct connected components (BFS).
pub fn is_separator(g: &Graph, i: usize, j: usize, r: &BTreeSet<usize>) -> Result<bool> {
    if i == j {
        return Err(Error::InvalidArgument("separator query needs i != j".into()));
    }
    if i >= g.p() || j >= g.p() {
        return Err(Error::InvalidArgument("node out of range".into()));
    }
    if r.contains(&i) || r.contains(&j) {
        return Err(Error::InvalidArgument(
            "separator set must not contain i or j".into(),
        ));
    }
    if let Some(&k) = r.iter().find(|&&k| k >= g.p()) {
        return Err(Error::InvalidArgument(format!("separator node {k} out of range")));
    }

    let keep = |a: usize, b: usize| -> bool {
        if (a == i && b == j) || (a == j && b == i) {
            return false;
        }
        // drop edges crossing the (R, V \ R) cut
        r.contains(&a) == r.contains(&b)
    };

    let mut seen = vec![false; g.p()];
    let mut queue = VecDeque::new();
    seen[i] = true;
    queue.push_back(i);
    while let Some(a) = queue.pop_front() {
        for b in 0..g.p() {
            if !seen[b] && g.has_edge(a, b) && keep(a, b) {
                if b == j {
                    return Ok(false);
                }
                seen[b] = true;
                queue.push_back(b);
            }
        }
    }
    Ok(true)
}
