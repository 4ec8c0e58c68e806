#![allow(dead_code)]

use std::path::PathBuf;

use pprgat_core::graph::{CsrGraph, Dataset, Labels, Split, Task};
use pprgat_core::rng::{below, dropout_rng, uniform};

pub fn data_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Three planted communities of 30 nodes with community-correlated binary
/// features; 5 train, 10 val and 15 test nodes per class.
pub fn planted_partition(seed: u64) -> Dataset {
    let (classes, per, nf) = (3usize, 30usize, 12usize);
    let n = classes * per;
    let mut rng = dropout_rng(seed);
    let class = |i: usize| i / per;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if class(i) == class(j) { 0.15 } else { 0.01 };
            if uniform(&mut rng) < p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let mut features = vec![0.0f32; n * nf];
    for i in 0..n {
        for f in 0..nf {
            let p = if f / 4 == class(i) { 0.5 } else { 0.1 };
            if uniform(&mut rng) < p {
                features[i * nf + f] = 1.0;
            }
        }
    }
    let labels = Labels::Multiclass((0..n).map(|i| class(i) as u32).collect());
    let g = CsrGraph::from_edges(n, &edges, nf, features, labels, 0).unwrap();
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..classes {
        let base = (c * per) as u32;
        train.extend(base..base + 5);
        val.extend(base + 5..base + 15);
        test.extend(base + 15..base + 30);
    }
    Dataset::new(vec![g], Task::Multiclass, classes, Split::Transductive { train, val, test }).unwrap()
}

/// Eight graphs of three planted communities each. A node's labels are the
/// bit pattern of its community; features are noisy community indicators.
/// Graphs 0..5 train, 5 validates, 6 and 7 test.
pub fn small_inductive(seed: u64) -> Dataset {
    let (nf, nl, comms) = (9usize, 3usize, 3usize);
    let pattern = [[1u8, 0, 0], [0, 1, 1], [1, 1, 0]];
    let mut rng = dropout_rng(seed);
    let mut graphs = Vec::new();
    for gid in 0..8u32 {
        let n = 18 + below(&mut rng, 10);
        let comm: Vec<usize> = (0..n).map(|i| i % comms).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if comm[i] == comm[j] { 0.4 } else { 0.03 };
                if uniform(&mut rng) < p {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        let mut features = vec![0.0f32; n * nf];
        let mut labels = vec![0u8; n * nl];
        for i in 0..n {
            for f in 0..nf {
                let p = if f / 3 == comm[i] { 0.6 } else { 0.15 };
                if uniform(&mut rng) < p {
                    features[i * nf + f] = 1.0;
                }
            }
            labels[i * nl..(i + 1) * nl].copy_from_slice(&pattern[comm[i]]);
        }
        let labels = Labels::Multilabel { num_classes: nl, data: labels };
        graphs.push(CsrGraph::from_edges(n, &edges, nf, features, labels, gid).unwrap());
    }
    let split = Split::Inductive {
        train: (0..5).collect(),
        val: vec![5],
        test: vec![6, 7],
    };
    Dataset::new(graphs, Task::Multilabel, nl, split).unwrap()
}
