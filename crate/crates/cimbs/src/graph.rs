//! Directed influence graphs: loading, serialization, weight assignment,
//! and synthetic generation.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{Purpose, SeedStream};

/// Dense 0-based node identifier; valid indices are `0..n` for the graph the
/// id belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    /// Activation probability in [0, 1].
    pub p: f64,
}

/// How edge probabilities are obtained when loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Probabilities are read from the file (third column, required).
    Explicit,
    /// Probabilities in the file are ignored; p(u,v) = 1/indeg(v).
    WeightedCascade,
}

/// Immutable directed graph with dual CSR adjacency over edge indices.
#[derive(Debug, Clone)]
pub struct DirectedGraph {
    n: usize,
    edges: Vec<Edge>,
    out_offsets: Vec<usize>,
    out_edges: Vec<u32>,
    in_offsets: Vec<usize>,
    in_edges: Vec<u32>,
}

impl DirectedGraph {
    /// Builds a graph from an edge list, removing duplicate (src, dst) pairs
    /// (the first occurrence wins).
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        let mut deduped = Vec::with_capacity(edges.len());
        for e in edges {
            if e.src.index() >= n || e.dst.index() >= n {
                return Err(Error::Config(format!(
                    "edge ({}, {}) out of range for n = {}",
                    e.src, e.dst, n
                )));
            }
            if !(0.0..=1.0).contains(&e.p) {
                return Err(Error::Config(format!(
                    "edge ({}, {}) probability {} outside [0, 1]",
                    e.src, e.dst, e.p
                )));
            }
            if seen.insert((e.src, e.dst)) {
                deduped.push(e);
            }
        }
        Ok(Self::from_deduped(n, deduped))
    }

    fn from_deduped(n: usize, edges: Vec<Edge>) -> Self {
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for e in &edges {
            out_deg[e.src.index()] += 1;
            in_deg[e.dst.index()] += 1;
        }
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_offsets = vec![0usize; n + 1];
        for v in 0..n {
            out_offsets[v + 1] = out_offsets[v] + out_deg[v];
            in_offsets[v + 1] = in_offsets[v] + in_deg[v];
        }
        let mut out_edges = vec![0u32; edges.len()];
        let mut in_edges = vec![0u32; edges.len()];
        let mut out_pos = out_offsets.clone();
        let mut in_pos = in_offsets.clone();
        for (i, e) in edges.iter().enumerate() {
            out_edges[out_pos[e.src.index()]] = i as u32;
            out_pos[e.src.index()] += 1;
            in_edges[in_pos[e.dst.index()]] = i as u32;
            in_pos[e.dst.index()] += 1;
        }
        DirectedGraph {
            n,
            edges,
            out_offsets,
            out_edges,
            in_offsets,
            in_edges,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn edge(&self, id: u32) -> &Edge {
        &self.edges[id as usize]
    }

    /// Edge ids leaving `v`.
    #[inline]
    pub fn out_adj(&self, v: NodeId) -> &[u32] {
        &self.out_edges[self.out_offsets[v.index()]..self.out_offsets[v.index() + 1]]
    }

    /// Edge ids entering `v`.
    #[inline]
    pub fn in_adj(&self, v: NodeId) -> &[u32] {
        &self.in_edges[self.in_offsets[v.index()]..self.in_offsets[v.index() + 1]]
    }

    #[inline]
    pub fn indeg(&self, v: NodeId) -> usize {
        self.in_offsets[v.index() + 1] - self.in_offsets[v.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n as u32).map(NodeId)
    }
}

/// Parses the edge-list text format: first non-comment line `n m`, then `m`
/// lines `src dst [p]`. Lines starting with `#` are comments. The probability
/// column is required in `Explicit` mode and ignored in `WeightedCascade`
/// mode.
pub fn load_edge_list<R: Read>(source: R, weight_mode: WeightMode) -> Result<DirectedGraph> {
    let reader = BufReader::new(source);
    let mut header: Option<(usize, usize)> = None;
    let mut edges: Vec<Edge> = Vec::new();
    let mut n = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        if header.is_none() {
            let n_str = fields.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "missing node count".into(),
            })?;
            let m_str = fields.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "missing edge count".into(),
            })?;
            let n_val: usize = n_str.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid node count '{n_str}'"),
            })?;
            let m_val: usize = m_str.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid edge count '{m_str}'"),
            })?;
            if fields.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "trailing fields after header".into(),
                });
            }
            header = Some((n_val, m_val));
            n = n_val;
            continue;
        }

        let parse_node = |s: Option<&str>, what: &str| -> Result<NodeId> {
            let s = s.ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("missing {what}"),
            })?;
            let v: usize = s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid {what} '{s}'"),
            })?;
            if v >= n {
                return Err(Error::NodeRange {
                    line: line_no,
                    index: v,
                    n,
                });
            }
            Ok(NodeId(v as u32))
        };
        let src = parse_node(fields.next(), "source node")?;
        let dst = parse_node(fields.next(), "destination node")?;
        let p = match (fields.next(), weight_mode) {
            (Some(s), _) => {
                let p: f64 = s.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid probability '{s}'"),
                })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("probability {p} outside [0, 1]"),
                    });
                }
                p
            }
            (None, WeightMode::Explicit) => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "missing probability (required with explicit weights)".into(),
                })
            }
            // Placeholder, overwritten below.
            (None, WeightMode::WeightedCascade) => 0.0,
        };
        edges.push(Edge { src, dst, p });
    }

    let (n, m) = header.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "empty input: no header line".into(),
    })?;
    if edges.len() != m {
        return Err(Error::Parse {
            line: 0,
            msg: format!("header promised {m} edges, found {}", edges.len()),
        });
    }
    let graph = DirectedGraph::new(n, edges)?;
    Ok(match weight_mode {
        WeightMode::Explicit => graph,
        WeightMode::WeightedCascade => assign_weighted_cascade(graph),
    })
}

/// Writes the graph in the same edge-list format `load_edge_list` accepts.
pub fn write_edge_list<W: Write>(graph: &DirectedGraph, mut sink: W) -> Result<()> {
    writeln!(sink, "{} {}", graph.n(), graph.m())?;
    for e in graph.edges() {
        writeln!(sink, "{} {} {}", e.src, e.dst, e.p)?;
    }
    Ok(())
}

/// Reassigns every edge (u, v) the probability 1/indeg(v).
pub fn assign_weighted_cascade(graph: DirectedGraph) -> DirectedGraph {
    let mut g = graph;
    let indeg: Vec<usize> = (0..g.n).map(|v| g.indeg(NodeId(v as u32))).collect();
    for e in &mut g.edges {
        e.p = 1.0 / indeg[e.dst.index()] as f64;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    ErdosRenyi,
    ScaleFreeLike,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erdos_renyi" => Ok(SyntheticKind::ErdosRenyi),
            "scale_free_like" => Ok(SyntheticKind::ScaleFreeLike),
            other => Err(Error::Config(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

/// Deterministic synthetic graphs for desk-scale experiments. Edge
/// probabilities are drawn uniformly from [0, 1]; run the result through
/// `assign_weighted_cascade` for the weighted-cascade setting.
pub fn generate_synthetic(
    kind: SyntheticKind,
    n: usize,
    param: f64,
    seed: u64,
) -> Result<DirectedGraph> {
    if n < 1 {
        return Err(Error::Config("synthetic graph needs n >= 1".into()));
    }
    let mut rng = SeedStream::new(seed, Purpose::GraphGen).rng(0);
    let mut edges = Vec::new();
    match kind {
        SyntheticKind::ErdosRenyi => {
            if !(0.0..=1.0).contains(&param) {
                return Err(Error::Config(format!(
                    "erdos_renyi edge probability {param} outside [0, 1]"
                )));
            }
            for u in 0..n as u32 {
                for v in 0..n as u32 {
                    if u != v && rng.random::<f64>() < param {
                        edges.push(Edge {
                            src: NodeId(u),
                            dst: NodeId(v),
                            p: rng.random::<f64>(),
                        });
                    }
                }
            }
        }
        SyntheticKind::ScaleFreeLike => {
            if param < 1.0 {
                return Err(Error::Config(format!(
                    "scale_free_like attachment count {param} must be >= 1"
                )));
            }
            let attach = param as usize;
            // Preferential attachment on an initially complete pair; each new
            // node links to `attach` earlier nodes weighted by degree + 1,
            // adding edges in both directions (collaboration-style).
            let mut weight = vec![1u64; n];
            for v in 1..n {
                let mut targets = std::collections::HashSet::new();
                let total: u64 = weight[..v].iter().sum();
                let want = attach.min(v);
                let mut guard = 0;
                while targets.len() < want && guard < 64 * want {
                    guard += 1;
                    let mut ticket = rng.random_range(0..total);
                    let mut t = 0usize;
                    while ticket >= weight[t] {
                        ticket -= weight[t];
                        t += 1;
                    }
                    targets.insert(t);
                }
                let mut targets: Vec<usize> = targets.into_iter().collect();
                targets.sort_unstable();
                for t in targets {
                    let p1 = rng.random::<f64>();
                    let p2 = rng.random::<f64>();
                    edges.push(Edge {
                        src: NodeId(v as u32),
                        dst: NodeId(t as u32),
                        p: p1,
                    });
                    edges.push(Edge {
                        src: NodeId(t as u32),
                        dst: NodeId(v as u32),
                        p: p2,
                    });
                    weight[v] += 1;
                    weight[t] += 1;
                }
            }
        }
    }
    DirectedGraph::new(n, edges)
}
