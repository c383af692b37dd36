//! Node- and network-level metrics of passing networks.
//!
//! Closeness, betweenness, eigenvector centrality, clustering and average
//! shortest path are computed on the simple undirected unweighted projection
//! of a network: slots `u` and `v` are adjacent when at least one pass went
//! either way. Isolated slots stay in the graph as degree-0 vertices.
//!
//! Conventions for disconnected graphs:
//! - closeness is computed inside the node's component and scaled by
//!   `(|C| - 1) / (n - 1)`; isolated nodes score 0;
//! - betweenness sums over unordered pairs `{s, t}` with `s != v != t` and is
//!   not normalized; pairs in different components contribute nothing;
//! - the average shortest path averages over connected ordered pairs only and
//!   is undefined when there are none;
//! - eigenvector centrality is computed on the largest component (all largest
//!   components when several tie in size); other nodes get 0.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::passnet::{PassingNetwork, SLOTS};

const EIGEN_TOLERANCE: f64 = 1e-10;
const EIGEN_MAX_ITER: usize = 10_000;

/// Simple undirected graph on `n` vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    adjacency: Vec<Vec<bool>>,
    neighbors: Vec<Vec<usize>>,
}

impl SimpleGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: vec![vec![false; n]; n],
            neighbors: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    /// Binarized, symmetrized projection of a passing network.
    pub fn from_network(net: &PassingNetwork) -> Self {
        let mut g = Self::new(SLOTS);
        for u in 0..SLOTS {
            for v in (u + 1)..SLOTS {
                if net.weights[u][v] + net.weights[v][u] > 0 {
                    g.add_edge(u, v);
                }
            }
        }
        g
    }

    /// Adds `{u, v}`; self-loops and repeated edges are ignored.
    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u == v || self.adjacency[u][v] {
            return;
        }
        self.adjacency[u][v] = true;
        self.adjacency[v][u] = true;
        self.neighbors[u].push(v);
        self.neighbors[v].push(u);
        self.neighbors[u].sort_unstable();
        self.neighbors[v].sort_unstable();
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) {
        if !self.adjacency[u][v] {
            return;
        }
        self.adjacency[u][v] = false;
        self.adjacency[v][u] = false;
        self.neighbors[u].retain(|&w| w != v);
        self.neighbors[v].retain(|&w| w != u);
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u][v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|u| self.neighbors[u].iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    /// Hop distances from `source`; `None` for unreachable vertices.
    pub fn bfs(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &w in &self.neighbors[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n()];
        let mut out = Vec::new();
        for s in 0..self.n() {
            if seen[s] {
                continue;
            }
            let mut comp: Vec<usize> = self
                .bfs(s)
                .iter()
                .enumerate()
                .filter_map(|(v, d)| d.map(|_| v))
                .collect();
            comp.sort_unstable();
            for &v in &comp {
                seen[v] = true;
            }
            out.push(comp);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeMetric {
    DegreeCentrality,
    Closeness,
    Betweenness,
    Eigenvector,
    Clustering,
}

impl NodeMetric {
    pub const ALL: [NodeMetric; 5] = [
        NodeMetric::DegreeCentrality,
        NodeMetric::Closeness,
        NodeMetric::Betweenness,
        NodeMetric::Eigenvector,
        NodeMetric::Clustering,
    ];

    /// Column / feature name fragment.
    pub fn column_name(self) -> &'static str {
        match self {
            NodeMetric::DegreeCentrality => "degree_centrality",
            NodeMetric::Closeness => "closeness_centrality",
            NodeMetric::Betweenness => "betweenness_centrality",
            NodeMetric::Eigenvector => "eigenvector_centrality",
            NodeMetric::Clustering => "clustering",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetricVector {
    pub metric: NodeMetric,
    pub values: Vec<f64>,
}

/// `deg(v) / (n - 1)` on the undirected projection.
pub fn degree_centrality(g: &SimpleGraph) -> NodeMetricVector {
    let n = g.n();
    let denom = n.saturating_sub(1).max(1) as f64;
    NodeMetricVector {
        metric: NodeMetric::DegreeCentrality,
        values: (0..n).map(|v| g.degree(v) as f64 / denom).collect(),
    }
}

pub fn closeness_centrality(g: &SimpleGraph) -> NodeMetricVector {
    let n = g.n();
    let values = (0..n)
        .map(|v| {
            let dist = g.bfs(v);
            let (reach, total) = dist
                .iter()
                .flatten()
                .fold((0usize, 0usize), |(r, t), &d| (r + 1, t + d));
            let others = reach - 1;
            if others == 0 || n < 2 {
                return 0.0;
            }
            let raw = others as f64 / total as f64;
            raw * others as f64 / (n - 1) as f64
        })
        .collect();
    NodeMetricVector {
        metric: NodeMetric::Closeness,
        values,
    }
}

/// Brandes' accumulation over all sources, halved for unordered pairs.
pub fn betweenness_centrality(g: &SimpleGraph) -> NodeMetricVector {
    let n = g.n();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    NodeMetricVector {
        metric: NodeMetric::Betweenness,
        values: cb.into_iter().map(|c| c / 2.0).collect(),
    }
}

/// Result of the eigenvector power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvectorResult {
    pub vector: NodeMetricVector,
    /// Rayleigh-quotient estimate of the largest adjacency eigenvalue.
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the graph has no edges; the vector is then all zeros.
    pub no_edges: bool,
}

/// Power iteration with `A + I` (the shift keeps bipartite graphs from
/// oscillating), started from the all-ones vector on the largest component.
pub fn eigenvector_detail(g: &SimpleGraph) -> EigenvectorResult {
    let n = g.n();
    let zero = |no_edges| EigenvectorResult {
        vector: NodeMetricVector {
            metric: NodeMetric::Eigenvector,
            values: vec![0.0; n],
        },
        eigenvalue: 0.0,
        iterations: 0,
        converged: true,
        no_edges,
    };
    if g.edge_count() == 0 {
        log::warn!("eigenvector centrality requested on a graph without edges");
        return zero(true);
    }
    let comps = g.components();
    let largest = comps.iter().map(Vec::len).max().unwrap_or(0);
    let mut active = vec![false; n];
    for c in comps.iter().filter(|c| c.len() == largest) {
        for &v in c {
            active[v] = true;
        }
    }

    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);

    let mut converged = false;
    let mut iterations = 0;
    while iterations < EIGEN_MAX_ITER {
        iterations += 1;
        let mut next: Vec<f64> = (0..n)
            .map(|v| {
                if !active[v] {
                    return 0.0;
                }
                x[v] + g.neighbors(v).iter().map(|&w| x[w]).sum::<f64>()
            })
            .collect();
        let nn = norm(&next);
        next.iter_mut().for_each(|v| *v /= nn);
        let diff = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if diff < EIGEN_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("eigenvector power iteration hit {EIGEN_MAX_ITER} iterations");
    }
    let ax: Vec<f64> = (0..n).map(|v| g.neighbors(v).iter().map(|&w| x[w]).sum()).collect();
    let eigenvalue = ax.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    EigenvectorResult {
        vector: NodeMetricVector {
            metric: NodeMetric::Eigenvector,
            values: x.into_iter().map(|v| v.max(0.0)).collect(),
        },
        eigenvalue,
        iterations,
        converged,
        no_edges: false,
    }
}

pub fn eigenvector_centrality(g: &SimpleGraph) -> NodeMetricVector {
    eigenvector_detail(g).vector
}

/// Triangles through each vertex.
pub fn triangles(g: &SimpleGraph) -> Vec<usize> {
    (0..g.n())
        .map(|v| {
            let nb = g.neighbors(v);
            let mut t = 0;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if g.has_edge(a, b) {
                        t += 1;
                    }
                }
            }
            t
        })
        .collect()
}

pub fn clustering_coefficient(g: &SimpleGraph) -> NodeMetricVector {
    let tri = triangles(g);
    let values = (0..g.n())
        .map(|v| {
            let d = g.degree(v);
            if d < 2 {
                0.0
            } else {
                2.0 * tri[v] as f64 / (d * (d - 1)) as f64
            }
        })
        .collect();
    NodeMetricVector {
        metric: NodeMetric::Clustering,
        values,
    }
}

/// Mean hop distance over connected ordered pairs; `None` if no pair is
/// connected.
pub fn average_shortest_path(g: &SimpleGraph) -> Option<f64> {
    let (mut total, mut pairs) = (0usize, 0usize);
    for s in 0..g.n() {
        for (t, d) in g.bfs(s).into_iter().enumerate() {
            if let (true, Some(d)) = (t != s, d) {
                total += d;
                pairs += 1;
            }
        }
    }
    (pairs > 0).then(|| total as f64 / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub mean_x: f64,
    pub mean_y: f64,
    pub std_x: f64,
    pub std_y: f64,
}

/// Mean and population standard deviation of the present node positions.
pub fn network_centroid(net: &PassingNetwork) -> Result<Centroid> {
    let pts: Vec<_> = net.positions.iter().flatten().collect();
    if pts.is_empty() {
        return Err(Error::NoPositions);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let (mean_x, std_x) = mean_std(&xs);
    let (mean_y, std_y) = mean_std(&ys);
    Ok(Centroid {
        mean_x,
        mean_y,
        std_x,
        std_y,
    })
}

/// Mean and population standard deviation. Empty input gives `(0, 0)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std,
        }
    }
}

/// Per-network metric record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub degree_centrality: Aggregate,
    pub closeness: Aggregate,
    pub betweenness: Aggregate,
    pub eigenvector: Aggregate,
    pub clustering: Aggregate,
    pub avg_shortest_path: Option<f64>,
    pub centroid: Option<Centroid>,
}

/// Aggregate tags in column order.
pub const AGGREGATE_TAGS: [&str; 4] = ["min", "max", "avg", "std"];

impl NetworkMetrics {
    pub fn aggregate_for(&self, metric: NodeMetric) -> &Aggregate {
        match metric {
            NodeMetric::DegreeCentrality => &self.degree_centrality,
            NodeMetric::Closeness => &self.closeness,
            NodeMetric::Betweenness => &self.betweenness,
            NodeMetric::Eigenvector => &self.eigenvector,
            NodeMetric::Clustering => &self.clustering,
        }
    }

    /// Column names, in the order of [`NetworkMetrics::values`].
    pub fn column_names() -> Vec<String> {
        let mut names = Vec::with_capacity(25);
        for m in NodeMetric::ALL {
            for agg in AGGREGATE_TAGS {
                names.push(format!("{agg}_{}", m.column_name()));
            }
        }
        names.push("avg_shortest_path".into());
        for c in ["centroid_mean_x", "centroid_mean_y", "centroid_std_x", "centroid_std_y"] {
            names.push(c.into());
        }
        names
    }

    /// Flat value vector; `None` marks a missing value.
    pub fn values(&self) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(25);
        for m in NodeMetric::ALL {
            let a = self.aggregate_for(m);
            out.extend([Some(a.min), Some(a.max), Some(a.mean), Some(a.std)]);
        }
        out.push(self.avg_shortest_path);
        match self.centroid {
            Some(c) => out.extend([c.mean_x, c.mean_y, c.std_x, c.std_y].map(Some)),
            None => out.extend([None; 4]),
        }
        out
    }

    pub fn from_values(values: &[Option<f64>]) -> Result<Self> {
        if values.len() != 25 {
            return Err(Error::MalformedInput(format!(
                "expected 25 metric values, got {}",
                values.len()
            )));
        }
        let agg = |i: usize| -> Result<Aggregate> {
            let get = |k: usize| {
                values[i * 4 + k].ok_or_else(|| Error::MalformedInput("missing node-metric aggregate".into()))
            };
            Ok(Aggregate {
                min: get(0)?,
                max: get(1)?,
                mean: get(2)?,
                std: get(3)?,
            })
        };
        let centroid = match values[21..25] {
            [Some(mean_x), Some(mean_y), Some(std_x), Some(std_y)] => Some(Centroid {
                mean_x,
                mean_y,
                std_x,
                std_y,
            }),
            _ => None,
        };
        Ok(Self {
            degree_centrality: agg(0)?,
            closeness: agg(1)?,
            betweenness: agg(2)?,
            eigenvector: agg(3)?,
            clustering: agg(4)?,
            avg_shortest_path: values[20],
            centroid,
        })
    }
}

/// All node-level metric vectors of a graph, in [`NodeMetric::ALL`] order.
pub fn node_metrics(g: &SimpleGraph) -> [NodeMetricVector; 5] {
    [
        degree_centrality(g),
        closeness_centrality(g),
        betweenness_centrality(g),
        eigenvector_centrality(g),
        clustering_coefficient(g),
    ]
}

pub fn aggregate(net: &PassingNetwork) -> NetworkMetrics {
    let g = SimpleGraph::from_network(net);
    let [deg, clo, bet, eig, clu] = node_metrics(&g);
    NetworkMetrics {
        degree_centrality: Aggregate::of(&deg.values),
        closeness: Aggregate::of(&clo.values),
        betweenness: Aggregate::of(&bet.values),
        eigenvector: Aggregate::of(&eig.values),
        clustering: Aggregate::of(&clu.values),
        avg_shortest_path: average_shortest_path(&g),
        centroid: network_centroid(net).ok(),
    }
}
