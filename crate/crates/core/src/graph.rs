//! Graph container, dataset description and split handling.
//!
//! [`CsrGraph`] is the single graph type used everywhere. It is immutable
//! after construction and always satisfies:
//!
//! * `row_offsets` is nondecreasing, starts at 0 and ends at `col_indices.len()`,
//! * each row is strictly increasing and inside `0..num_nodes`,
//! * the adjacency is symmetric,
//! * every feature value is finite.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node id {node} out of range for a graph with {num_nodes} nodes")]
    NodeOutOfRange { node: u64, num_nodes: usize },
    #[error("feature matrix has {len} values, expected {num_nodes} x {num_features}")]
    FeatureShape {
        len: usize,
        num_nodes: usize,
        num_features: usize,
    },
    #[error("non-finite feature at node {node}, column {column}")]
    NonFiniteFeature { node: usize, column: usize },
    #[error("label {label} of node {node} is outside 0..{num_classes}")]
    LabelOutOfRange {
        node: usize,
        label: u64,
        num_classes: usize,
    },
    #[error("multilabel entry at node {node}, class {class} is not 0/1")]
    NonBinaryLabel { node: usize, class: usize },
    #[error("label table covers {got} nodes, graph has {num_nodes}")]
    LabelCount { got: usize, num_nodes: usize },
    #[error("malformed CSR structure: {0}")]
    MalformedCsr(&'static str),
    #[error("adjacency is not symmetric: edge ({0}, {1}) has no reverse")]
    Asymmetric(NodeId, NodeId),
    #[error("id {id} appears in both the {first} and {second} split")]
    SplitOverlap {
        id: u32,
        first: &'static str,
        second: &'static str,
    },
    #[error("split id {id} out of range ({limit})")]
    SplitOutOfRange { id: u32, limit: usize },
    #[error("a transductive dataset must contain exactly one graph, found {0}")]
    TransductiveGraphCount(usize),
    #[error("an inductive dataset needs at least one graph in each split")]
    InductiveSplitEmpty,
    #[error("label kind does not match the dataset task")]
    TaskMismatch,
}

/// Node labels: one class id per node or a 0/1 matrix for multilabel tasks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Labels {
    Multiclass(Vec<u32>),
    Multilabel { num_classes: usize, data: Vec<u8> },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Multiclass(v) => v.len(),
            Labels::Multilabel { num_classes, data } => {
                if *num_classes == 0 {
                    0
                } else {
                    data.len() / num_classes
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, num_nodes: usize, num_classes: usize) -> Result<(), GraphError> {
        if self.len() != num_nodes {
            return Err(GraphError::LabelCount {
                got: self.len(),
                num_nodes,
            });
        }
        match self {
            Labels::Multiclass(v) => {
                for (node, &c) in v.iter().enumerate() {
                    if c as usize >= num_classes {
                        return Err(GraphError::LabelOutOfRange {
                            node,
                            label: c as u64,
                            num_classes,
                        });
                    }
                }
            }
            Labels::Multilabel { num_classes: c, data } => {
                if *c != num_classes || data.len() != num_nodes * c {
                    return Err(GraphError::TaskMismatch);
                }
                for (idx, &b) in data.iter().enumerate() {
                    if b > 1 {
                        return Err(GraphError::NonBinaryLabel {
                            node: idx / c,
                            class: idx % c,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Read access shared by the plain graph and its self-loop augmentation.
pub trait Adjacency {
    fn num_nodes(&self) -> usize;
    fn row_offsets(&self) -> &[usize];
    fn col_indices(&self) -> &[NodeId];

    fn degree(&self, i: usize) -> Result<usize, GraphError> {
        self.check_node(i)?;
        let o = self.row_offsets();
        Ok(o[i + 1] - o[i])
    }

    /// The CSR row of `i`. It contains `i` only when a self-loop edge exists.
    fn neighbor_slice(&self, i: usize) -> Result<&[NodeId], GraphError> {
        self.check_node(i)?;
        Ok(self.row(i))
    }

    #[inline]
    fn row(&self, i: usize) -> &[NodeId] {
        let o = self.row_offsets();
        &self.col_indices()[o[i]..o[i + 1]]
    }

    fn check_node(&self, i: usize) -> Result<(), GraphError> {
        if i >= self.num_nodes() {
            Err(GraphError::NodeOutOfRange {
                node: i as u64,
                num_nodes: self.num_nodes(),
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<NodeId>,
    num_features: usize,
    features: Vec<f32>,
    labels: Labels,
    graph_id: u32,
}

impl CsrGraph {
    /// Builds a graph from an arbitrary edge list: edges are symmetrized,
    /// duplicates dropped and rows sorted.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(NodeId, NodeId)],
        num_features: usize,
        features: Vec<f32>,
        labels: Labels,
        graph_id: u32,
    ) -> Result<Self, GraphError> {
        let mut counts = vec![0usize; num_nodes + 1];
        for &(s, t) in edges {
            for v in [s, t] {
                if v as usize >= num_nodes {
                    return Err(GraphError::NodeOutOfRange {
                        node: v as u64,
                        num_nodes,
                    });
                }
            }
            counts[s as usize] += 1;
            if s != t {
                counts[t as usize] += 1;
            }
        }
        let mut offsets = vec![0usize; num_nodes + 1];
        for i in 0..num_nodes {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut cursor = offsets.clone();
        let mut cols = vec![0 as NodeId; offsets[num_nodes]];
        for &(s, t) in edges {
            cols[cursor[s as usize]] = t;
            cursor[s as usize] += 1;
            if s != t {
                cols[cursor[t as usize]] = s;
                cursor[t as usize] += 1;
            }
        }
        // sort + dedupe each row, compacting in place
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        row_offsets.push(0);
        let mut write = 0;
        for i in 0..num_nodes {
            let row = &mut cols[offsets[i]..offsets[i + 1]];
            row.sort_unstable();
            let mut last: Option<NodeId> = None;
            for k in offsets[i]..offsets[i + 1] {
                let v = cols[k];
                if last != Some(v) {
                    cols[write] = v;
                    write += 1;
                    last = Some(v);
                }
            }
            row_offsets.push(write);
        }
        cols.truncate(write);
        Self::from_csr(
            num_nodes,
            row_offsets,
            cols,
            num_features,
            features,
            labels,
            graph_id,
        )
    }

    /// Builds a graph from ready CSR arrays, checking every invariant.
    pub fn from_csr(
        num_nodes: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<NodeId>,
        num_features: usize,
        features: Vec<f32>,
        labels: Labels,
        graph_id: u32,
    ) -> Result<Self, GraphError> {
        let g = CsrGraph {
            num_nodes,
            row_offsets,
            col_indices,
            num_features,
            features,
            labels,
            graph_id,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), GraphError> {
        let n = self.num_nodes;
        let o = &self.row_offsets;
        if o.len() != n + 1 || o[0] != 0 || o[n] != self.col_indices.len() {
            return Err(GraphError::MalformedCsr("row_offsets length or bounds"));
        }
        for i in 0..n {
            if o[i] > o[i + 1] {
                return Err(GraphError::MalformedCsr("row_offsets decreasing"));
            }
            let row = &self.col_indices[o[i]..o[i + 1]];
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(GraphError::MalformedCsr("row not strictly increasing"));
                }
            }
            if let Some(&last) = row.last() {
                if last as usize >= n {
                    return Err(GraphError::NodeOutOfRange {
                        node: last as u64,
                        num_nodes: n,
                    });
                }
            }
        }
        for i in 0..n {
            for &j in self.row(i) {
                if self.row(j as usize).binary_search(&(i as NodeId)).is_err() {
                    return Err(GraphError::Asymmetric(i as NodeId, j));
                }
            }
        }
        if self.features.len() != n * self.num_features {
            return Err(GraphError::FeatureShape {
                len: self.features.len(),
                num_nodes: n,
                num_features: self.num_features,
            });
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(GraphError::NonFiniteFeature {
                node: pos / self.num_features.max(1),
                column: pos % self.num_features.max(1),
            });
        }
        if self.labels.len() != n {
            return Err(GraphError::LabelCount {
                got: self.labels.len(),
                num_nodes: n,
            });
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.col_indices.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn graph_id(&self) -> u32 {
        self.graph_id
    }

    /// Copy of this graph whose feature rows sum to one (all-zero rows stay zero).
    pub fn with_row_normalized_features(&self) -> CsrGraph {
        let mut out = self.clone();
        let f = self.num_features;
        if f == 0 {
            return out;
        }
        for row in out.features.chunks_mut(f) {
            let s: f32 = row.iter().sum();
            if s != 0.0 {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        out
    }

    /// Directed `(src, dst)` pairs in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes).flat_map(move |i| self.row(i).iter().map(move |&j| (i as NodeId, j)))
    }
}

impl Adjacency for CsrGraph {
    fn num_nodes(&self) -> usize {
        self.num_nodes
    }
    fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }
    fn col_indices(&self) -> &[NodeId] {
        &self.col_indices
    }
}

/// Adjacency with exactly one self-loop per node (`A + I`).
#[derive(Debug, Clone)]
pub struct SelfLoopGraph<'g> {
    base: &'g CsrGraph,
    row_offsets: Vec<usize>,
    col_indices: Vec<NodeId>,
}

impl<'g> SelfLoopGraph<'g> {
    pub fn base(&self) -> &'g CsrGraph {
        self.base
    }
}

impl Adjacency for SelfLoopGraph<'_> {
    fn num_nodes(&self) -> usize {
        self.base.num_nodes
    }
    fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }
    fn col_indices(&self) -> &[NodeId] {
        &self.col_indices
    }
}

pub fn add_self_loops(g: &CsrGraph) -> SelfLoopGraph<'_> {
    let n = g.num_nodes;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(g.num_edges() + n);
    row_offsets.push(0);
    for i in 0..n {
        let me = i as NodeId;
        let row = g.row(i);
        match row.binary_search(&me) {
            Ok(_) => col_indices.extend_from_slice(row),
            Err(pos) => {
                col_indices.extend_from_slice(&row[..pos]);
                col_indices.push(me);
                col_indices.extend_from_slice(&row[pos..]);
            }
        }
        row_offsets.push(col_indices.len());
    }
    SelfLoopGraph {
        base: g,
        row_offsets,
        col_indices,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Task {
    Multiclass,
    Multilabel,
}

/// Train/val/test assignment. Transductive splits hold node ids of the single
/// graph; inductive splits hold graph indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Split {
    Transductive {
        train: Vec<u32>,
        val: Vec<u32>,
        test: Vec<u32>,
    },
    Inductive {
        train: Vec<u32>,
        val: Vec<u32>,
        test: Vec<u32>,
    },
}

impl Split {
    pub fn parts(&self) -> [(&'static str, &[u32]); 3] {
        let (a, b, c) = match self {
            Split::Transductive { train, val, test } | Split::Inductive { train, val, test } => {
                (train, val, test)
            }
        };
        [("train", a), ("val", b), ("test", c)]
    }

    pub fn is_inductive(&self) -> bool {
        matches!(self, Split::Inductive { .. })
    }

    pub fn train(&self) -> &[u32] {
        self.parts()[0].1
    }
    pub fn val(&self) -> &[u32] {
        self.parts()[1].1
    }
    pub fn test(&self) -> &[u32] {
        self.parts()[2].1
    }

    fn validate(&self, limit: usize) -> Result<(), GraphError> {
        let mut owner: Vec<Option<&'static str>> = vec![None; limit];
        for (name, ids) in self.parts() {
            for &id in ids {
                let slot = owner
                    .get_mut(id as usize)
                    .ok_or(GraphError::SplitOutOfRange { id, limit })?;
                match slot {
                    Some(first) => {
                        return Err(GraphError::SplitOverlap {
                            id,
                            first,
                            second: name,
                        })
                    }
                    None => *slot = Some(name),
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<CsrGraph>,
    pub task: Task,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        graphs: Vec<CsrGraph>,
        task: Task,
        num_classes: usize,
        split: Split,
    ) -> Result<Self, GraphError> {
        match &split {
            Split::Transductive { .. } => {
                if graphs.len() != 1 {
                    return Err(GraphError::TransductiveGraphCount(graphs.len()));
                }
                split.validate(graphs[0].num_nodes)?;
            }
            Split::Inductive { train, val, test } => {
                if graphs.len() < 2 || train.is_empty() || val.is_empty() || test.is_empty() {
                    return Err(GraphError::InductiveSplitEmpty);
                }
                split.validate(graphs.len())?;
            }
        }
        for g in &graphs {
            match (task, &g.labels) {
                (Task::Multiclass, Labels::Multiclass(_))
                | (Task::Multilabel, Labels::Multilabel { .. }) => {}
                _ => return Err(GraphError::TaskMismatch),
            }
            g.labels.validate(g.num_nodes, num_classes)?;
        }
        Ok(Dataset {
            graphs,
            task,
            num_classes,
            split,
        })
    }

    pub fn num_features(&self) -> usize {
        self.graphs.first().map_or(0, |g| g.num_features)
    }

    pub fn is_inductive(&self) -> bool {
        self.split.is_inductive()
    }
}
