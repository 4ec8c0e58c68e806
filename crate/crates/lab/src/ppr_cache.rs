//! Threaded PPR precompute and the on-disk cache format.
//!
//! A cache file is one JSON header line followed by `src,dst,mass` rows in
//! src order, each row's entries by mass descending then dst ascending.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pprgat_core::graph::{Adjacency, CsrGraph, NodeId};
use pprgat_core::ppr::{
    graph_fingerprint, ppr_matrix_row, Fingerprint, PprConfig, PprError, PushWorkspace, SparsePprMatrix,
    SparsePprVector,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THREADS_ENV: &str = "PPRGAT_THREADS";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{}: file not found", path.display())]
    Missing { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("{}: stale cache, computed for graph {found} but this graph is {expected}", path.display())]
    Stale {
        path: PathBuf,
        expected: Fingerprint,
        found: Fingerprint,
    },
    #[error("{}: cache holds alpha={}, epsilon={}, top_k={}; requested alpha={}, epsilon={}, top_k={}",
        path.display(), found.alpha, found.epsilon, found.top_k, wanted.alpha, wanted.epsilon, wanted.top_k)]
    ConfigMismatch {
        path: PathBuf,
        found: PprConfig,
        wanted: PprConfig,
    },
}

impl CacheError {
    fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            CacheError::Missing { path: path.into() }
        } else {
            CacheError::Io {
                path: path.into(),
                source,
            }
        }
    }
}

/// Worker count: `PPRGAT_THREADS` if set, else the machine's parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

const BLOCK: usize = 64;

/// Computes every row on `cfg.threads` workers. Rows are identical to the
/// sequential driver's for any thread count.
pub fn compute_ppr_matrix(g: &CsrGraph, cfg: &PprConfig) -> Result<SparsePprMatrix, PprError> {
    cfg.validate()?;
    let n = g.num_nodes();
    let threads = cfg.threads.clamp(1, n.div_ceil(BLOCK).max(1));
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<PprError>> = Mutex::new(None);
    let mut rows: Vec<SparsePprVector> = vec![SparsePprVector::default(); n];
    let slots: Vec<Mutex<&mut [SparsePprVector]>> = rows.chunks_mut(BLOCK).map(Mutex::new).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| {
                let mut ws = PushWorkspace::new(n);
                loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= slots.len() || failure.lock().unwrap().is_some() {
                        break;
                    }
                    let mut out = slots[b].lock().unwrap();
                    for (k, slot) in out.iter_mut().enumerate() {
                        match ppr_matrix_row(g, b * BLOCK + k, cfg, &mut ws) {
                            Ok(row) => *slot = row,
                            Err(e) => {
                                failure.lock().unwrap().get_or_insert(e);
                                return;
                            }
                        }
                    }
                }
            });
        }
    });
    drop(slots);
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(SparsePprMatrix {
        rows,
        config: *cfg,
        fingerprint: graph_fingerprint(g),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    alpha: f64,
    epsilon: f64,
    top_k: usize,
    fingerprint: String,
    num_nodes: usize,
}

pub fn write_ppr(m: &SparsePprMatrix, w: &mut impl Write) -> io::Result<()> {
    let header = Header {
        alpha: m.config.alpha,
        epsilon: m.config.epsilon,
        top_k: m.config.top_k,
        fingerprint: m.fingerprint.to_hex(),
        num_nodes: m.num_nodes(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(io::Error::other)?)?;
    for (src, row) in m.rows.iter().enumerate() {
        for &(dst, mass) in &row.entries {
            writeln!(w, "{src},{dst},{mass:.16e}")?;
        }
    }
    Ok(())
}

pub fn save_ppr(m: &SparsePprMatrix, path: impl AsRef<Path>) -> Result<(), CacheError> {
    let path = path.as_ref();
    let io = |e| CacheError::io(path, e);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    write_ppr(m, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Reads a cache file without checking it against a graph. `threads` in the
/// returned config is 1.
pub fn read_ppr(path: impl AsRef<Path>) -> Result<SparsePprMatrix, CacheError> {
    let path = path.as_ref();
    let bad = |line: usize, msg: String| CacheError::Malformed {
        path: path.into(),
        line,
        msg,
    };
    let file = fs::File::open(path).map_err(|e| CacheError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".into()))?
        .map_err(|e| CacheError::io(path, e))?;
    let h: Header = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    let fingerprint = Fingerprint::from_hex(&h.fingerprint).ok_or_else(|| bad(1, "bad fingerprint".into()))?;
    let mut rows: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); h.num_nodes];
    let mut last: Option<(usize, NodeId, f64)> = None;
    for (i, l) in lines.enumerate() {
        let line = i + 2;
        let l = l.map_err(|e| CacheError::io(path, e))?;
        let mut parts = l.split(',');
        let (Some(s), Some(d), Some(m), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad(line, "expected src,dst,mass".into()));
        };
        let src: usize = s.parse().map_err(|_| bad(line, format!("bad src {s:?}")))?;
        let dst: NodeId = d.parse().map_err(|_| bad(line, format!("bad dst {d:?}")))?;
        let mass: f64 = m.parse().map_err(|_| bad(line, format!("bad mass {m:?}")))?;
        if src >= h.num_nodes || dst as usize >= h.num_nodes {
            return Err(bad(line, format!("node id out of range for {} nodes", h.num_nodes)));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(bad(line, format!("mass {mass} is not positive")));
        }
        if let Some((ps, pd, pm)) = last {
            let ordered = src > ps || (src == ps && (mass < pm || (mass == pm && dst > pd)));
            if !ordered {
                return Err(bad(line, "rows out of order".into()));
            }
        }
        last = Some((src, dst, mass));
        rows[src].push((dst, mass));
    }
    let config = PprConfig {
        alpha: h.alpha,
        epsilon: h.epsilon,
        top_k: h.top_k,
        threads: 1,
    };
    config.validate().map_err(|e| bad(1, e.to_string()))?;
    if let Some(i) = rows.iter().position(|r| r.len() > h.top_k) {
        return Err(bad(1, format!("row {i} holds more than top_k entries")));
    }
    Ok(SparsePprMatrix {
        rows: rows.into_iter().map(|entries| SparsePprVector { entries }).collect(),
        config,
        fingerprint,
    })
}

/// Reads a cache and checks that it belongs to `g`.
pub fn load_ppr(path: impl AsRef<Path>, g: &CsrGraph) -> Result<SparsePprMatrix, CacheError> {
    let path = path.as_ref();
    let m = read_ppr(path)?;
    let expected = graph_fingerprint(g);
    if m.fingerprint != expected || m.num_nodes() != g.num_nodes() {
        return Err(CacheError::Stale {
            path: path.into(),
            expected,
            found: m.fingerprint,
        });
    }
    Ok(m)
}

/// Like [`load_ppr`], additionally requiring the cache's alpha, epsilon and
/// top_k to equal `wanted`.
pub fn load_ppr_for(path: impl AsRef<Path>, g: &CsrGraph, wanted: &PprConfig) -> Result<SparsePprMatrix, CacheError> {
    let path = path.as_ref();
    let m = load_ppr(path, g)?;
    let c = &m.config;
    if c.alpha != wanted.alpha || c.epsilon != wanted.epsilon || c.top_k != wanted.top_k {
        return Err(CacheError::ConfigMismatch {
            path: path.into(),
            found: m.config,
            wanted: *wanted,
        });
    }
    Ok(m)
}

/// File name of a per-graph cache inside a cache directory.
pub fn cache_file_name(g: &CsrGraph) -> String {
    format!("{}.ppr", graph_fingerprint(g).to_hex())
}
