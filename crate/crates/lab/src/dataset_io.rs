//! Canonical dataset directories.
//!
//! ```text
//! meta.json     {"num_nodes", "num_features", "num_classes", "task", "inductive"}
//! edges.csv     "src,dst" (inductive: "graph_id,src,dst")
//! features.csv  one node per line (inductive: features_<gid>.csv)
//! labels.csv    multiclass "node,class"; multilabel one 0/1 row per node
//!               (inductive: labels_<gid>.csv)
//! split.json    {"train": [...], "val": [...], "test": [...]}
//! ```
//!
//! Transductive splits list node ids, inductive splits list graph ids.
//! Inductive graphs are numbered by their features files, from 0 up.

use std::fmt::Display;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use pprgat_core::graph::{Adjacency, CsrGraph, Dataset, GraphError, Labels, NodeId, Split, Task};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: file not found", path.display())]
    MissingFile { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: malformed row: {msg}", path.display())]
    MalformedRow { path: PathBuf, line: usize, msg: String },
    #[error("{}:{line}: node id {id} out of range for {num_nodes} nodes", path.display())]
    NodeOutOfRange {
        path: PathBuf,
        line: usize,
        id: u64,
        num_nodes: usize,
    },
    #[error("{}:{line}: label {label} outside 0..{num_classes}", path.display())]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        label: u64,
        num_classes: usize,
    },
    #[error("{}: id {id} is in both the {first} and {second} split", path.display())]
    SplitOverlap {
        path: PathBuf,
        id: u32,
        first: &'static str,
        second: &'static str,
    },
    #[error("{}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Graph {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
}

impl DatasetError {
    fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            DatasetError::MissingFile { path: path.into() }
        } else {
            DatasetError::Io {
                path: path.into(),
                source,
            }
        }
    }

    fn row(path: &Path, line: usize, msg: impl Display) -> Self {
        DatasetError::MalformedRow {
            path: path.into(),
            line,
            msg: msg.to_string(),
        }
    }

    fn invalid(path: &Path, msg: impl Display) -> Self {
        DatasetError::Invalid {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_nodes: Option<usize>,
    pub num_features: usize,
    pub num_classes: usize,
    pub task: Task,
    pub inductive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitFile {
    train: Vec<u32>,
    val: Vec<u32>,
    test: Vec<u32>,
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))
}

/// Non-empty data lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
}

fn parse_ints<const N: usize>(path: &Path, line: usize, s: &str) -> Result<[u64; N], DatasetError> {
    let mut out = [0u64; N];
    let mut parts = s.split(',');
    for slot in out.iter_mut() {
        let field = parts
            .next()
            .ok_or_else(|| DatasetError::row(path, line, format!("expected {N} fields")))?;
        *slot = field
            .trim()
            .parse()
            .map_err(|_| DatasetError::row(path, line, format!("{field:?} is not a non-negative integer")))?;
    }
    if parts.next().is_some() {
        return Err(DatasetError::row(path, line, format!("expected {N} fields")));
    }
    Ok(out)
}

fn expect_header(path: &Path, text: &str, header: &str) -> Result<(), DatasetError> {
    match lines(text).next() {
        Some((_, h)) if h.trim() == header => Ok(()),
        _ => Err(DatasetError::row(path, 1, format!("expected header {header:?}"))),
    }
}

fn node_id(path: &Path, line: usize, id: u64, num_nodes: usize) -> Result<NodeId, DatasetError> {
    if id >= num_nodes as u64 {
        return Err(DatasetError::NodeOutOfRange {
            path: path.into(),
            line,
            id,
            num_nodes,
        });
    }
    Ok(id as NodeId)
}

fn read_features(path: &Path, num_features: usize) -> Result<(usize, Vec<f32>), DatasetError> {
    let text = read_text(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, l) in lines(&text) {
        if num_features == 0 {
            if !l.trim().is_empty() {
                return Err(DatasetError::row(path, line, "expected an empty row"));
            }
        } else {
            let before = data.len();
            for field in l.split(',') {
                let v: f32 = field
                    .trim()
                    .parse()
                    .map_err(|_| DatasetError::row(path, line, format!("{field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(DatasetError::row(path, line, "non-finite feature"));
                }
                data.push(v);
            }
            if data.len() - before != num_features {
                return Err(DatasetError::row(
                    path,
                    line,
                    format!("{} features, expected {num_features}", data.len() - before),
                ));
            }
        }
        rows += 1;
    }
    Ok((rows, data))
}

fn read_multiclass(path: &Path, num_nodes: usize, num_classes: usize) -> Result<Labels, DatasetError> {
    let text = read_text(path)?;
    expect_header(path, &text, "node,class")?;
    let mut labels: Vec<Option<u32>> = vec![None; num_nodes];
    for (line, l) in lines(&text).skip(1) {
        let [node, class] = parse_ints::<2>(path, line, l)?;
        let node = node_id(path, line, node, num_nodes)? as usize;
        if class >= num_classes as u64 {
            return Err(DatasetError::LabelOutOfRange {
                path: path.into(),
                line,
                label: class,
                num_classes,
            });
        }
        if labels[node].replace(class as u32).is_some() {
            return Err(DatasetError::row(path, line, format!("node {node} labeled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| DatasetError::invalid(path, format!("node {i} has no label"))))
        .collect::<Result<_, _>>()
        .map(Labels::Multiclass)
}

fn read_multilabel(path: &Path, num_nodes: usize, num_classes: usize) -> Result<Labels, DatasetError> {
    let text = read_text(path)?;
    let mut data = Vec::with_capacity(num_nodes * num_classes);
    let mut rows = 0;
    for (line, l) in lines(&text) {
        let before = data.len();
        for field in l.split(',') {
            match field.trim() {
                "0" => data.push(0u8),
                "1" => data.push(1u8),
                other => {
                    return Err(DatasetError::LabelOutOfRange {
                        path: path.into(),
                        line,
                        label: other.parse().unwrap_or(u64::MAX),
                        num_classes: 2,
                    })
                }
            }
        }
        if data.len() - before != num_classes {
            return Err(DatasetError::row(
                path,
                line,
                format!("{} labels, expected {num_classes}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != num_nodes {
        return Err(DatasetError::invalid(path, format!("{rows} label rows for {num_nodes} nodes")));
    }
    Ok(Labels::Multilabel { num_classes, data })
}

fn read_labels(path: &Path, meta: &Meta, num_nodes: usize) -> Result<Labels, DatasetError> {
    match meta.task {
        Task::Multiclass => read_multiclass(path, num_nodes, meta.num_classes),
        Task::Multilabel => read_multilabel(path, num_nodes, meta.num_classes),
    }
}

fn read_split(path: &Path, inductive: bool, limit: usize) -> Result<Split, DatasetError> {
    let s: SplitFile = serde_json::from_str(&read_text(path)?).map_err(|e| DatasetError::row(path, e.line(), e))?;
    let split = if inductive {
        Split::Inductive {
            train: s.train,
            val: s.val,
            test: s.test,
        }
    } else {
        Split::Transductive {
            train: s.train,
            val: s.val,
            test: s.test,
        }
    };
    let mut owner: Vec<Option<&'static str>> = vec![None; limit];
    for (name, ids) in split.parts() {
        for &id in ids {
            let slot = owner
                .get_mut(id as usize)
                .ok_or_else(|| DatasetError::invalid(path, format!("{name} id {id} out of range 0..{limit}")))?;
            if let Some(first) = *slot {
                return Err(DatasetError::SplitOverlap {
                    path: path.into(),
                    id,
                    first,
                    second: name,
                });
            }
            *slot = Some(name);
        }
    }
    Ok(split)
}

pub fn read_meta(dir: &Path) -> Result<Meta, DatasetError> {
    let path = dir.join("meta.json");
    serde_json::from_str(&read_text(&path)?).map_err(|e| DatasetError::row(&path, e.line(), e))
}

fn build_graph(
    path: &Path,
    n: usize,
    edges: &[(NodeId, NodeId)],
    meta: &Meta,
    features: Vec<f32>,
    labels: Labels,
    gid: u32,
) -> Result<CsrGraph, DatasetError> {
    CsrGraph::from_edges(n, edges, meta.num_features, features, labels, gid).map_err(|source| DatasetError::Graph {
        path: path.into(),
        source,
    })
}

/// Loads and validates a canonical dataset directory. Edges are symmetrized
/// and deduplicated.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let meta_path = dir.join("meta.json");
    let edges_path = dir.join("edges.csv");
    let edge_text = read_text(&edges_path)?;
    let graphs = if meta.inductive {
        expect_header(&edges_path, &edge_text, "graph_id,src,dst")?;
        let mut graphs = Vec::new();
        let mut sizes = Vec::new();
        let mut feats = Vec::new();
        loop {
            let path = dir.join(format!("features_{}.csv", graphs.len() + feats.len()));
            if !path.exists() {
                break;
            }
            let (n, x) = read_features(&path, meta.num_features)?;
            sizes.push(n);
            feats.push(x);
        }
        if feats.is_empty() {
            return Err(DatasetError::MissingFile {
                path: dir.join("features_0.csv"),
            });
        }
        let mut per_graph: Vec<Vec<(NodeId, NodeId)>> = vec![Vec::new(); sizes.len()];
        for (line, l) in lines(&edge_text).skip(1) {
            let [gid, s, t] = parse_ints::<3>(&edges_path, line, l)?;
            let g = usize::try_from(gid)
                .ok()
                .filter(|&g| g < sizes.len())
                .ok_or_else(|| DatasetError::row(&edges_path, line, format!("graph id {gid} has no features file")))?;
            let s = node_id(&edges_path, line, s, sizes[g])?;
            let t = node_id(&edges_path, line, t, sizes[g])?;
            per_graph[g].push((s, t));
        }
        for (gid, (x, edges)) in feats.into_iter().zip(per_graph).enumerate() {
            let labels_path = dir.join(format!("labels_{gid}.csv"));
            let labels = read_labels(&labels_path, &meta, sizes[gid])?;
            graphs.push(build_graph(&edges_path, sizes[gid], &edges, &meta, x, labels, gid as u32)?);
        }
        graphs
    } else {
        let n = meta
            .num_nodes
            .ok_or_else(|| DatasetError::invalid(&meta_path, "transductive datasets need num_nodes"))?;
        expect_header(&edges_path, &edge_text, "src,dst")?;
        let mut edges = Vec::new();
        for (line, l) in lines(&edge_text).skip(1) {
            let [s, t] = parse_ints::<2>(&edges_path, line, l)?;
            edges.push((node_id(&edges_path, line, s, n)?, node_id(&edges_path, line, t, n)?));
        }
        let features_path = dir.join("features.csv");
        let (rows, x) = read_features(&features_path, meta.num_features)?;
        if rows != n {
            return Err(DatasetError::invalid(&features_path, format!("{rows} rows for {n} nodes")));
        }
        let labels = read_labels(&dir.join("labels.csv"), &meta, n)?;
        vec![build_graph(&edges_path, n, &edges, &meta, x, labels, 0)?]
    };
    let split_path = dir.join("split.json");
    let limit = if meta.inductive { graphs.len() } else { graphs[0].num_nodes() };
    let split = read_split(&split_path, meta.inductive, limit)?;
    Dataset::new(graphs, meta.task, meta.num_classes, split).map_err(|source| DatasetError::Graph {
        path: split_path,
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, DatasetError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| DatasetError::io(path, e))
}

fn write_features(path: &Path, g: &CsrGraph) -> Result<(), DatasetError> {
    let mut w = create(path)?;
    let io = |e| DatasetError::io(path, e);
    for i in 0..g.num_nodes() {
        let row: Vec<String> = g.feature_row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_labels(path: &Path, g: &CsrGraph) -> Result<(), DatasetError> {
    let mut w = create(path)?;
    let io = |e| DatasetError::io(path, e);
    match g.labels() {
        Labels::Multiclass(v) => {
            writeln!(w, "node,class").map_err(io)?;
            for (i, c) in v.iter().enumerate() {
                writeln!(w, "{i},{c}").map_err(io)?;
            }
        }
        Labels::Multilabel { num_classes, data } => {
            for row in data.chunks(*num_classes) {
                let row: Vec<&str> = row.iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
                writeln!(w, "{}", row.join(",")).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// Writes `ds` in the canonical layout. Each undirected edge is written once.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    let inductive = ds.is_inductive();
    let meta = Meta {
        num_nodes: (!inductive).then(|| ds.graphs[0].num_nodes()),
        num_features: ds.num_features(),
        num_classes: ds.num_classes,
        task: ds.task,
        inductive,
    };
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_string(&meta).expect("meta serializes")).map_err(|e| DatasetError::io(&meta_path, e))?;

    let edges_path = dir.join("edges.csv");
    let mut w = create(&edges_path)?;
    let io = |e| DatasetError::io(&edges_path, e);
    writeln!(w, "{}", if inductive { "graph_id,src,dst" } else { "src,dst" }).map_err(io)?;
    for (gid, g) in ds.graphs.iter().enumerate() {
        for (s, t) in g.edges().filter(|(s, t)| s <= t) {
            if inductive {
                writeln!(w, "{gid},{s},{t}").map_err(io)?;
            } else {
                writeln!(w, "{s},{t}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;

    for (gid, g) in ds.graphs.iter().enumerate() {
        let (f, l) = if inductive {
            (format!("features_{gid}.csv"), format!("labels_{gid}.csv"))
        } else {
            ("features.csv".to_string(), "labels.csv".to_string())
        };
        write_features(&dir.join(f), g)?;
        write_labels(&dir.join(l), g)?;
    }

    let [(_, train), (_, val), (_, test)] = ds.split.parts();
    let split = SplitFile {
        train: train.to_vec(),
        val: val.to_vec(),
        test: test.to_vec(),
    };
    let split_path = dir.join("split.json");
    fs::write(&split_path, serde_json::to_string(&split).expect("split serializes")).map_err(|e| DatasetError::io(&split_path, e))
}

/// Name used for presets: the last path component.
pub fn dataset_name(dir: &Path) -> String {
    dir.canonicalize()
        .unwrap_or_else(|_| dir.to_path_buf())
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
