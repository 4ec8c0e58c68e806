//! Sparse approximate personalized PageRank.
//!
//! Each row of the PPR matrix `alpha * (I - (1 - alpha) D^-1 A)^-1` is
//! approximated with forward push (estimate `p`, residual `r`, push while
//! some `r(u) >= epsilon * d(u)`), then truncated to its `top_k` largest
//! entries. Rows are independent, so callers may compute them in parallel
//! with one [`PushWorkspace`] per worker; the result never depends on the
//! schedule.
//!
//! PPR runs on the symmetrized graph without added self-loops, except that
//! isolated nodes get a self-loop so that `D^-1` exists.

mod oracle;

pub use oracle::dense_ppr_oracle;

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::graph::{Adjacency, CsrGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PprError {
    #[error("invalid PPR configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("source {source_node} out of range for {num_nodes} nodes")]
    SourceOutOfRange { source_node: usize, num_nodes: usize },
    #[error("push from source {source_node} exceeded {limit} operations")]
    NonConvergence { source_node: usize, limit: u64 },
    #[error("dense oracle limited to {limit} nodes, graph has {num_nodes}")]
    OracleTooLarge { num_nodes: usize, limit: usize },
    #[error("dense oracle hit a singular matrix")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PprConfig {
    /// Teleport probability.
    pub alpha: f64,
    /// Residual threshold, scaled by node degree.
    pub epsilon: f64,
    pub top_k: usize,
    pub threads: usize,
}

impl Default for PprConfig {
    fn default() -> Self {
        PprConfig {
            alpha: 0.25,
            epsilon: 1e-4,
            top_k: 32,
            threads: 1,
        }
    }
}

impl PprConfig {
    pub fn validate(&self) -> Result<(), PprError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(PprError::InvalidConfig("alpha must be in (0, 1]"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(PprError::InvalidConfig("epsilon must be > 0"));
        }
        if self.top_k == 0 {
            return Err(PprError::InvalidConfig("top_k must be >= 1"));
        }
        if self.threads == 0 {
            return Err(PprError::InvalidConfig("threads must be >= 1"));
        }
        Ok(())
    }
}

/// `(node, mass)` pairs ordered by mass descending, then node id ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsePprVector {
    pub entries: Vec<(NodeId, f64)>,
}

fn by_mass_then_id(a: &(NodeId, f64), b: &(NodeId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl SparsePprVector {
    pub fn from_unsorted(mut entries: Vec<(NodeId, f64)>) -> Self {
        entries.sort_by(by_mass_then_id);
        SparsePprVector { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == node)
            .map_or(0.0, |e| e.1)
    }
}

/// Keeps the `k` largest entries (ties: smaller node id). No renormalization.
pub fn topk_truncate(v: &SparsePprVector, k: usize) -> SparsePprVector {
    let mut entries = v.entries.clone();
    entries.sort_by(by_mass_then_id);
    entries.truncate(k);
    SparsePprVector { entries }
}

/// SHA-256 of the canonical edge list of a graph.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        use core::fmt::Write;
        let mut s = String::with_capacity(64);
        for b in self.0 {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 || !s.is_ascii() {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Fingerprint(out))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.to_hex())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Hashes `"<num_nodes>\n"` followed by one `"src,dst\n"` line per stored
/// directed edge in CSR order. Features and labels do not participate.
pub fn graph_fingerprint(g: &CsrGraph) -> Fingerprint {
    use core::fmt::Write;
    let mut h = Sha256::new();
    let mut line = String::new();
    let _ = writeln!(line, "{}", g.num_nodes());
    h.update(line.as_bytes());
    for (s, t) in g.edges() {
        line.clear();
        let _ = writeln!(line, "{s},{t}");
        h.update(line.as_bytes());
    }
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    Fingerprint(out)
}

/// Neighbors and degree as seen by the PPR engine: isolated nodes loop to
/// themselves.
#[inline]
fn ppr_row<'a>(g: &'a CsrGraph, u: usize, me: &'a [NodeId; 1]) -> &'a [NodeId] {
    let row = g.row(u);
    if row.is_empty() {
        me
    } else {
        row
    }
}

#[inline]
fn ppr_degree(g: &CsrGraph, u: usize) -> usize {
    g.row(u).len().max(1)
}

/// Reusable scratch for forward push. Dense arrays are sized to the graph and
/// only the touched slots are cleared between sources.
#[derive(Debug, Clone, Default)]
pub struct PushWorkspace {
    p: Vec<f64>,
    r: Vec<f64>,
    pending: Vec<bool>,
    touched: Vec<NodeId>,
    seen: Vec<bool>,
    queue: VecDeque<NodeId>,
}

impl PushWorkspace {
    pub fn new(num_nodes: usize) -> Self {
        PushWorkspace {
            p: vec![0.0; num_nodes],
            r: vec![0.0; num_nodes],
            pending: vec![false; num_nodes],
            touched: Vec::new(),
            seen: vec![false; num_nodes],
            queue: VecDeque::new(),
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.p.len() != n {
            *self = PushWorkspace::new(n);
        }
    }

    #[inline]
    fn touch(&mut self, v: NodeId) {
        let vi = v as usize;
        if !self.seen[vi] {
            self.seen[vi] = true;
            self.touched.push(v);
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            let vi = v as usize;
            self.p[vi] = 0.0;
            self.r[vi] = 0.0;
            self.pending[vi] = false;
            self.seen[vi] = false;
        }
        self.touched.clear();
        self.queue.clear();
    }

    /// Residual mass left after the last push run, keyed by node.
    pub fn residual(&self, v: NodeId) -> f64 {
        self.r[v as usize]
    }
}

/// Forward push from `source`.
///
/// The source is always pushed once; afterwards a node is (re)queued when its
/// residual reaches `epsilon * d(u)`. The worklist is FIFO and holds each
/// pending node at most once, so the result is deterministic.
pub fn push_ppr(
    g: &CsrGraph,
    source: usize,
    alpha: f64,
    epsilon: f64,
) -> Result<SparsePprVector, PprError> {
    let mut ws = PushWorkspace::new(g.num_nodes());
    push_ppr_with(g, source, alpha, epsilon, &mut ws)
}

pub fn push_ppr_with(
    g: &CsrGraph,
    source: usize,
    alpha: f64,
    epsilon: f64,
    ws: &mut PushWorkspace,
) -> Result<SparsePprVector, PprError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PprError::InvalidConfig("alpha must be in (0, 1]"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(PprError::InvalidConfig("epsilon must be positive"));
    }
    let n = g.num_nodes();
    if source >= n {
        return Err(PprError::SourceOutOfRange {
            source_node: source,
            num_nodes: n,
        });
    }
    ws.ensure(n);
    ws.reset();
    let limit = (10.0 * n as f64 / epsilon).min(u64::MAX as f64) as u64;
    let s = source as NodeId;
    ws.r[source] = 1.0;
    ws.touch(s);
    ws.pending[source] = true;
    ws.queue.push_back(s);
    let mut pushes: u64 = 0;
    let result = loop {
        let Some(u) = ws.queue.pop_front() else {
            break Ok(());
        };
        let ui = u as usize;
        ws.pending[ui] = false;
        let ru = ws.r[ui];
        ws.p[ui] += alpha * ru;
        ws.r[ui] = 0.0;
        let me = [u];
        let row = ppr_row(g, ui, &me);
        let share = (1.0 - alpha) * ru / row.len() as f64;
        if share > 0.0 {
            for &v in row {
                let vi = v as usize;
                ws.touch(v);
                ws.r[vi] += share;
                if !ws.pending[vi] && ws.r[vi] >= epsilon * ppr_degree(g, vi) as f64 {
                    ws.pending[vi] = true;
                    ws.queue.push_back(v);
                }
            }
        }
        pushes += 1;
        if pushes > limit {
            break Err(PprError::NonConvergence {
                source_node: source,
                limit,
            });
        }
    };
    result?;
    let entries = ws
        .touched
        .iter()
        .filter(|&&v| ws.p[v as usize] > 0.0)
        .map(|&v| (v, ws.p[v as usize]))
        .collect();
    Ok(SparsePprVector::from_unsorted(entries))
}

/// Row-wise top-k approximate PPR matrix together with the configuration and
/// the fingerprint of the graph it was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePprMatrix {
    pub rows: Vec<SparsePprVector>,
    pub config: PprConfig,
    pub fingerprint: Fingerprint,
}

impl SparsePprMatrix {
    pub fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &SparsePprVector {
        &self.rows[i]
    }

    /// Stored mass for `(i, j)`, exactly 0 when the pair was not kept.
    pub fn lookup(&self, i: usize, j: NodeId) -> f64 {
        self.rows[i].get(j)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }
}

/// One row of the matrix: push, then truncate.
pub fn ppr_matrix_row(
    g: &CsrGraph,
    source: usize,
    cfg: &PprConfig,
    ws: &mut PushWorkspace,
) -> Result<SparsePprVector, PprError> {
    let v = push_ppr_with(g, source, cfg.alpha, cfg.epsilon, ws)?;
    Ok(topk_truncate(&v, cfg.top_k))
}

/// Sequential matrix computation. `cfg.threads` is ignored here; see the
/// companion crate for the threaded driver, which produces identical rows.
pub fn compute_ppr_matrix(g: &CsrGraph, cfg: &PprConfig) -> Result<SparsePprMatrix, PprError> {
    cfg.validate()?;
    let mut ws = PushWorkspace::new(g.num_nodes());
    let rows = (0..g.num_nodes())
        .map(|i| ppr_matrix_row(g, i, cfg, &mut ws))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SparsePprMatrix {
        rows,
        config: *cfg,
        fingerprint: graph_fingerprint(g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Labels;

    fn graph(n: usize, edges: &[(u32, u32)]) -> CsrGraph {
        CsrGraph::from_edges(n, edges, 0, vec![], Labels::Multiclass(vec![0; n]), 0).unwrap()
    }

    fn close(v: &SparsePprVector, expected: &[(u32, f64)], tol: f64) {
        for &(node, mass) in expected {
            assert!(
                (v.get(node) - mass).abs() < tol,
                "node {node}: {} vs {mass}",
                v.get(node)
            );
        }
    }

    #[test]
    fn alpha_one_is_identity() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        for s in 0..4 {
            let v = push_ppr(&g, s, 1.0, 0.3).unwrap();
            assert_eq!(v.entries, vec![(s as u32, 1.0)]);
        }
    }

    #[test]
    fn k2_and_triangle() {
        let g = graph(2, &[(0, 1)]);
        let v = push_ppr(&g, 0, 0.25, 1e-8).unwrap();
        close(&v, &[(0, 4.0 / 7.0), (1, 3.0 / 7.0)], 2e-4);
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let v = push_ppr(&g, 0, 0.25, 1e-8).unwrap();
        close(&v, &[(0, 5.0 / 11.0), (1, 3.0 / 11.0), (2, 3.0 / 11.0)], 2e-4);
        assert_eq!(v.entries[0].0, 0);
    }

    #[test]
    fn truncation_rules() {
        let v = SparsePprVector::from_unsorted(vec![(0, 0.5), (1, 0.3), (2, 0.2)]);
        assert_eq!(topk_truncate(&v, 2).entries, vec![(0, 0.5), (1, 0.3)]);
        assert_eq!(topk_truncate(&v, 5), v);
        let v = SparsePprVector {
            entries: vec![(0, 0.4), (2, 0.3), (1, 0.3)],
        };
        assert_eq!(topk_truncate(&v, 2).entries, vec![(0, 0.4), (1, 0.3)]);
    }

    #[test]
    fn isolated_node_keeps_its_mass() {
        let g = graph(3, &[(0, 1)]);
        let v = push_ppr(&g, 2, 0.25, 1e-6).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v.get(2) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn bad_inputs() {
        let g = graph(2, &[(0, 1)]);
        assert!(matches!(
            push_ppr(&g, 9, 0.25, 1e-4),
            Err(PprError::SourceOutOfRange { .. })
        ));
        let cfg = PprConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(compute_ppr_matrix(&g, &cfg).is_err());
        let cfg = PprConfig {
            top_k: 0,
            ..Default::default()
        };
        assert!(compute_ppr_matrix(&g, &cfg).is_err());
    }

    #[test]
    fn lookup_and_topk_matrix() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let cfg = PprConfig {
            alpha: 0.25,
            epsilon: 1e-8,
            top_k: 1,
            threads: 1,
        };
        let m = compute_ppr_matrix(&g, &cfg).unwrap();
        for i in 0..3 {
            assert_eq!(m.row(i).len(), 1);
            assert_eq!(m.row(i).entries[0].0, i as u32);
            assert!((m.lookup(i, i as u32) - 5.0 / 11.0).abs() < 2e-4);
            assert_eq!(m.lookup(i, ((i + 1) % 3) as u32), 0.0);
        }
    }

    #[test]
    fn fingerprint_hex_roundtrip() {
        let g = graph(3, &[(0, 1)]);
        let f = graph_fingerprint(&g);
        assert_eq!(Fingerprint::from_hex(&f.to_hex()), Some(f));
        assert_ne!(f, graph_fingerprint(&graph(3, &[(0, 2)])));
        assert_ne!(f, graph_fingerprint(&graph(4, &[(0, 1)])));
    }
}
