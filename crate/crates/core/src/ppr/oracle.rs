use alloc::vec;
use alloc::vec::Vec;

use super::PprError;
use crate::graph::{Adjacency, CsrGraph};

const ORACLE_LIMIT: usize = 2000;

/// Exact `alpha * (I - (1 - alpha) D^-1 A)^-1` by dense Gauss-Jordan
/// elimination in 64-bit. Row-major `n x n`. Uses the same isolated-node
/// self-loop convention as the push engine.
pub fn dense_ppr_oracle(g: &CsrGraph, alpha: f64) -> Result<Vec<f64>, PprError> {
    let n = g.num_nodes();
    if n > ORACLE_LIMIT {
        return Err(PprError::OracleTooLarge {
            num_nodes: n,
            limit: ORACLE_LIMIT,
        });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PprError::InvalidConfig("alpha must be in (0, 1]"));
    }
    // m = I - (1 - alpha) P, inv starts as alpha * I
    let mut m = vec![0.0f64; n * n];
    let mut inv = vec![0.0f64; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
        inv[i * n + i] = alpha;
        let row = g.row(i);
        if row.is_empty() {
            m[i * n + i] -= 1.0 - alpha;
        } else {
            let w = (1.0 - alpha) / row.len() as f64;
            for &j in row {
                m[i * n + j as usize] -= w;
            }
        }
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a * n + col].abs().total_cmp(&m[b * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() < 1e-300 {
            return Err(PprError::Singular);
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[r * n + k] -= f * m[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Labels;

    fn graph(n: usize, edges: &[(u32, u32)]) -> CsrGraph {
        CsrGraph::from_edges(n, edges, 0, vec![], Labels::Multiclass(vec![0; n]), 0).unwrap()
    }

    #[test]
    fn k2_closed_form() {
        // 2x2 inverse by hand: M = [[1, -(1-a)], [-(1-a), 1]], det = 1 - (1-a)^2
        let a = 0.25f64;
        let det = 1.0 - (1.0 - a) * (1.0 - a);
        let expected = [a / det, a * (1.0 - a) / det];
        assert!((expected[0] - 4.0 / 7.0).abs() < 1e-15);
        let pi = dense_ppr_oracle(&graph(2, &[(0, 1)]), a).unwrap();
        assert!((pi[0] - expected[0]).abs() < 1e-12);
        assert!((pi[1] - expected[1]).abs() < 1e-12);
        assert!((pi[2] - expected[1]).abs() < 1e-12);
        assert!((pi[3] - expected[0]).abs() < 1e-12);
    }

    #[test]
    fn triangle_rows() {
        let pi = dense_ppr_oracle(&graph(3, &[(0, 1), (1, 2), (2, 0)]), 0.25).unwrap();
        for i in 0..3 {
            let s: f64 = pi[i * 3..i * 3 + 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            for j in 0..3 {
                let want = if i == j { 5.0 / 11.0 } else { 3.0 / 11.0 };
                assert!((pi[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_one_identity() {
        let pi = dense_ppr_oracle(&graph(3, &[(0, 1), (1, 2)]), 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(pi[i * 3 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn size_guard() {
        let g = graph(2001, &[]);
        assert!(matches!(
            dense_ppr_oracle(&g, 0.25),
            Err(PprError::OracleTooLarge { .. })
        ));
    }
}
