//! Ground-truth undirected simple graphs.

use std::collections::HashMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::randomizers::RandomSource;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph needs at least one node")]
    Empty,
    #[error("edge probability must lie in [0, 1], got {0}")]
    Probability(f64),
    #[error("line {line}: expected two node labels, found {found} token(s)")]
    Parse { line: usize, found: usize },
    #[error("node {node} out of range for a graph on {n} nodes")]
    Node { node: usize, n: usize },
    #[error("percentile must lie in (0, 100], got {0}")]
    Percentile(f64),
    #[error("percentile of an empty degree vector")]
    NoDegrees,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Undirected simple graph on nodes `0..n`, stored as a dense symmetric 0/1
/// matrix so adjacency rows can be handed directly to the randomizers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<u8>,
    edges: usize,
}

impl Graph {
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        Ok(Self {
            n,
            adj: vec![0; n * n],
            edges: 0,
        })
    }

    /// Builds a graph from an edge iterator; self-loops and repeats are ignored.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut g = Self::empty(n)?;
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Adds `{i, j}`. Returns whether the edge is new; self-loops return false.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool, GraphError> {
        for node in [i, j] {
            if node >= self.n {
                return Err(GraphError::Node { node, n: self.n });
            }
        }
        if i == j || self.adj[i * self.n + j] == 1 {
            return Ok(false);
        }
        self.adj[i * self.n + j] = 1;
        self.adj[j * self.n + i] = 1;
        self.edges += 1;
        Ok(true)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] == 1
    }

    /// Adjacency list of node `i` as a 0/1 row of length `n`; entry `i` is 0.
    pub fn adjacency_row(&self, i: usize) -> &[u8] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency_row(i)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency_row(i).iter().map(|&b| b as usize).sum()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n)
                .filter(move |&j| self.has_edge(i, j))
                .map(move |j| (i, j))
        })
    }
}

/// Erdos-Renyi `G(n, p)`: one uniform draw per unordered pair, pairs visited
/// in lexicographic `i < j` order.
pub fn generate_er(n: usize, p: f64, rng: &mut RandomSource) -> Result<Graph, GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::Probability(p));
    }
    let mut g = Graph::empty(n)?;
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.uniform() < p {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// A graph read from an edge list, with the label each dense id came from.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub labels: Vec<String>,
    pub self_loops_dropped: usize,
}

const NODES_HEADER: &str = "# nodes:";

/// Parses a whitespace-separated edge list. Lines starting with `#` and blank
/// lines are skipped. Labels are arbitrary tokens remapped to `0..n` in
/// first-seen order; duplicate and reversed pairs collapse to one edge.
///
/// A leading `# nodes: N` comment (as written by [`write_edge_list`]) pads
/// the graph with isolated nodes up to `N`.
pub fn load_edge_list<'a>(text: &'a str) -> Result<LoadedGraph, GraphError> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut pairs = Vec::new();
    let mut self_loops = 0;
    let mut declared: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix(NODES_HEADER) {
            if declared.is_none() {
                declared = rest.split_whitespace().next().and_then(|t| t.parse().ok());
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(GraphError::Parse {
                line: idx + 1,
                found: tokens.len(),
            });
        }
        let mut id = |label: &'a str| -> usize {
            *ids.entry(label).or_insert_with(|| {
                labels.push(label.to_string());
                labels.len() - 1
            })
        };
        let a = id(tokens[0]);
        let b = id(tokens[1]);
        if a == b {
            self_loops += 1;
        } else {
            pairs.push((a, b));
        }
    }
    while labels.len() < declared.unwrap_or(0) {
        labels.push(format!("_isolated{}", labels.len()));
    }
    let n = labels.len();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let graph = Graph::from_edges(n, pairs)?;
    Ok(LoadedGraph {
        graph,
        labels,
        self_loops_dropped: self_loops,
    })
}

/// Writes `g` in the edge-list format read by [`load_edge_list`]. Isolated
/// nodes survive only through the `# nodes:` header.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> io::Result<()> {
    writeln!(out, "{NODES_HEADER} {} edges: {}", g.n(), g.edge_count())?;
    for (i, j) in g.edges() {
        writeln!(out, "{i} {j}")?;
    }
    Ok(())
}

pub fn degrees(g: &Graph) -> Vec<usize> {
    (0..g.n()).map(|i| g.degree(i)).collect()
}

/// Value at 1-based rank `ceil(k * n / 100)` of the ascending-sorted degrees.
pub fn degree_percentile(degs: &[usize], k: f64) -> Result<usize, GraphError> {
    if !(k > 0.0 && k <= 100.0) {
        return Err(GraphError::Percentile(k));
    }
    if degs.is_empty() {
        return Err(GraphError::NoDegrees);
    }
    let mut sorted = degs.to_vec();
    sorted.sort_unstable();
    let rank = ((k * sorted.len() as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}
