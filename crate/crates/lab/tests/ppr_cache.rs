mod common;

use std::fs;

use pprgat_core::graph::{CsrGraph, Labels};
use pprgat_core::ppr::{graph_fingerprint, PprConfig};
use pprgat_core::rng::{below, dropout_rng};
use pprgat_lab::ppr_cache::{
    cache_file_name, compute_ppr_matrix, load_ppr, load_ppr_for, read_ppr, save_ppr, write_ppr, CacheError,
};
use proptest::prelude::*;

fn random_graph(n: usize, extra: usize, seed: u64) -> CsrGraph {
    let mut rng = dropout_rng(seed);
    let mut edges: Vec<(u32, u32)> = (1..n).map(|i| (below(&mut rng, i) as u32, i as u32)).collect();
    for _ in 0..extra {
        let (a, b) = (below(&mut rng, n), below(&mut rng, n));
        if a != b {
            edges.push((a as u32, b as u32));
        }
    }
    CsrGraph::from_edges(n, &edges, 1, vec![1.0; n], Labels::Multiclass(vec![0; n]), 0).unwrap()
}

fn config(threads: usize) -> PprConfig {
    PprConfig {
        alpha: 0.25,
        epsilon: 1e-4,
        top_k: 32,
        threads,
    }
}

fn bytes(m: &pprgat_core::ppr::SparsePprMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    write_ppr(m, &mut out).unwrap();
    out
}

#[test]
fn thread_count_does_not_change_the_file() {
    let g = random_graph(100, 200, 1);
    let one = bytes(&compute_ppr_matrix(&g, &config(1)).unwrap());
    let eight = bytes(&compute_ppr_matrix(&g, &config(8)).unwrap());
    assert_eq!(one, eight);
}

#[test]
fn header_echoes_the_configuration() {
    let g = random_graph(30, 40, 2);
    let m = compute_ppr_matrix(&g, &config(2)).unwrap();
    let text = String::from_utf8(bytes(&m)).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["alpha"], 0.25);
    assert_eq!(header["epsilon"], 1e-4);
    assert_eq!(header["top_k"], 32);
    assert_eq!(header["num_nodes"], 30);
    assert_eq!(header["fingerprint"], graph_fingerprint(&g).to_hex());
}

#[test]
fn stale_cache_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ppr.cache");
    let g = random_graph(40, 30, 3);
    save_ppr(&compute_ppr_matrix(&g, &config(1)).unwrap(), &path).unwrap();
    let other = random_graph(40, 30, 4);
    match load_ppr(&path, &other) {
        Err(CacheError::Stale { expected, found, .. }) => {
            assert_eq!(expected, graph_fingerprint(&other));
            assert_eq!(found, graph_fingerprint(&g));
        }
        r => panic!("unexpected {r:?}"),
    }
}

#[test]
fn config_mismatch_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ppr.cache");
    let g = random_graph(20, 20, 5);
    save_ppr(&compute_ppr_matrix(&g, &config(1)).unwrap(), &path).unwrap();
    let wanted = PprConfig { top_k: 8, ..config(1) };
    assert!(matches!(load_ppr_for(&path, &g, &wanted), Err(CacheError::ConfigMismatch { .. })));
    assert!(load_ppr_for(&path, &g, &config(4)).is_ok());
}

#[test]
fn missing_and_corrupt_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ppr.cache");
    assert!(matches!(read_ppr(&path), Err(CacheError::Missing { .. })));
    let g = random_graph(10, 5, 6);
    save_ppr(&compute_ppr_matrix(&g, &config(1)).unwrap(), &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(1, 2);
    fs::write(&path, lines.join("\n")).unwrap();
    match read_ppr(&path) {
        Err(CacheError::Malformed { line, .. }) => assert_eq!(line, 3),
        r => panic!("unexpected {r:?}"),
    }
    fs::write(&path, format!("{}\n0,1,-0.5\n", text.lines().next().unwrap())).unwrap();
    assert!(matches!(read_ppr(&path), Err(CacheError::Malformed { line: 2, .. })));
}

#[test]
fn cache_file_name_is_the_fingerprint() {
    let g = random_graph(12, 10, 7);
    assert_eq!(cache_file_name(&g), format!("{}.ppr", graph_fingerprint(&g).to_hex()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn save_then_load_is_identity(n in 2usize..60, extra in 0usize..80, seed in any::<u64>(), k in 1usize..40) {
        let g = random_graph(n, extra, seed);
        let cfg = PprConfig { top_k: k, ..config(1) };
        let m = compute_ppr_matrix(&g, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppr");
        save_ppr(&m, &path).unwrap();
        let back = load_ppr_for(&path, &g, &cfg).unwrap();
        prop_assert_eq!(back, m);
    }
}
