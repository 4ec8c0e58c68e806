use std::sync::Arc;

use pprgat_core::attention::{
    build_edge_list, init_layer, layer_forward, normalize_attention, Activation, DropoutCtx, EdgeList, HeadCombine,
    HeadVars, LayerSpec, NeighborMode, Variant,
};
use pprgat_core::autodiff::{Adam, SegmentIndex, Tape, Tensor};
use pprgat_core::graph::{Adjacency, CsrGraph, Labels};
use pprgat_core::models::{appnp_propagate, normalized_adjacency, GraphContext, Model, ModelConfig, ModelKind};
use pprgat_core::ppr::{compute_ppr_matrix, PprConfig, SparsePprMatrix};
use pprgat_core::rng::{below, dropout_rng, param_rng, shuffle, uniform};
use proptest::prelude::*;

const VARIANTS: [(Variant, NeighborMode); 6] = [
    (Variant::Gat, NeighborMode::Local),
    (Variant::GatV2, NeighborMode::Local),
    (Variant::PprGat, NeighborMode::Local),
    (Variant::PprGat, NeighborMode::Topk),
    (Variant::PprGatV2, NeighborMode::Local),
    (Variant::PprGatV2, NeighborMode::Topk),
];

fn random_graph(n: usize, extra: usize, features: usize, seed: u64) -> CsrGraph {
    let mut rng = param_rng(seed, "graph");
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((below(&mut rng, v) as u32, v as u32));
    }
    for _ in 0..extra {
        let (a, b) = (below(&mut rng, n), below(&mut rng, n));
        if a != b {
            edges.push((a as u32, b as u32));
        }
    }
    let x: Vec<f32> = (0..n * features).map(|_| (2.0 * uniform(&mut rng) - 1.0) as f32).collect();
    CsrGraph::from_edges(n, &edges, features, x, Labels::Multiclass(vec![0; n]), 0).unwrap()
}

fn ppr(g: &CsrGraph, k: usize) -> SparsePprMatrix {
    let cfg = PprConfig {
        alpha: 0.25,
        epsilon: 1e-10,
        top_k: k,
        threads: 1,
    };
    compute_ppr_matrix(g, &cfg).unwrap()
}

fn spec(variant: Variant, mode: NeighborMode, in_dim: usize) -> LayerSpec {
    LayerSpec {
        variant,
        neighbor_mode: mode,
        in_dim,
        out_dim: 3,
        heads: 2,
        combine: HeadCombine::Concat,
        activation: Activation::Elu,
    }
}

fn run_layer(spec: &LayerSpec, seed: u64, x: Tensor<f64>, edges: &EdgeList) -> Tensor<f64> {
    let mut tape = Tape::<f64>::new();
    let heads: Vec<HeadVars> = init_layer::<f64>(spec, 0, seed)
        .chunks(2)
        .map(|c| HeadVars {
            w: tape.param(c[0].1.clone()).unwrap(),
            a: tape.param(c[1].1.clone()).unwrap(),
        })
        .collect();
    let x = tape.constant(x).unwrap();
    let mut rng = dropout_rng(0);
    let mut dc = DropoutCtx {
        rate: 0.0,
        training: false,
        rng: &mut rng,
    };
    let y = layer_forward(&mut tape, spec, &heads, x, edges, &mut dc).unwrap();
    tape.value(y).clone()
}

fn features(g: &CsrGraph) -> Tensor<f64> {
    Tensor::from_fn(g.num_nodes(), g.num_features(), |i, j| g.feature_row(i)[j] as f64)
}

fn max_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficients_sum_to_one(n in 3usize..25, seed in any::<u64>(), k in 1usize..6) {
        let g = random_graph(n, n, 2, seed);
        let m = ppr(&g, k);
        for mode in [NeighborMode::Local, NeighborMode::Topk] {
            let edges = build_edge_list(&g, Some(&m), mode).unwrap();
            let mut rng = param_rng(seed, "scores");
            let scores: Vec<f32> = (0..edges.len() * 3).map(|_| (uniform(&mut rng) * 30.0 - 15.0) as f32).collect();
            let mut tape = Tape::<f32>::new();
            let s = tape.constant(Tensor::new(edges.len(), 3, scores).unwrap()).unwrap();
            let c = normalize_attention(&mut tape, s, &edges).unwrap();
            let c = tape.value(c);
            let mut sums = vec![0f32; n * 3];
            for (e, &d) in edges.dst.iter().enumerate() {
                for h in 0..3 {
                    sums[d as usize * 3 + h] += c.get(e, h);
                }
            }
            prop_assert!(sums.iter().all(|s| (s - 1.0).abs() <= 1e-6));
        }
    }

    #[test]
    fn edge_order_within_group_is_irrelevant(n in 3usize..20, seed in any::<u64>()) {
        let g = random_graph(n, n, 4, seed);
        let m = ppr(&g, 4);
        for (variant, mode) in VARIANTS {
            let edges = build_edge_list(&g, variant.uses_ppr().then_some(&m), mode).unwrap();
            let mut order: Vec<usize> = (0..edges.len()).collect();
            let mut rng = param_rng(seed, "order");
            let mut start = 0;
            for i in 0..n {
                let size = edges.seg.group_size(i);
                shuffle(&mut rng, &mut order[start..start + size]);
                start += size;
            }
            let permuted = EdgeList {
                dst: order.iter().map(|&e| edges.dst[e]).collect::<Vec<_>>().into(),
                src: order.iter().map(|&e| edges.src[e]).collect::<Vec<_>>().into(),
                seg: edges.seg.clone(),
                ppr_values: edges.ppr_values.as_ref().map(|v| order.iter().map(|&e| v[e]).collect()),
            };
            let s = spec(variant, mode, 4);
            let a = run_layer(&s, seed, features(&g), &edges);
            let b = run_layer(&s, seed, features(&g), &permuted);
            prop_assert!(max_diff(&a, &b) <= 1e-6);
        }
    }

    #[test]
    fn relabeling_permutes_outputs(n in 3usize..20, seed in any::<u64>()) {
        let g = random_graph(n, n, 3, seed);
        let mut perm: Vec<u32> = (0..n as u32).collect();
        shuffle(&mut param_rng(seed, "perm"), &mut perm);
        let edges: Vec<(u32, u32)> = g.edges().map(|(a, b)| (perm[a as usize], perm[b as usize])).collect();
        let mut x = vec![0f32; n * 3];
        for i in 0..n {
            let p = perm[i] as usize;
            x[p * 3..p * 3 + 3].copy_from_slice(g.feature_row(i));
        }
        let h = CsrGraph::from_edges(n, &edges, 3, x, Labels::Multiclass(vec![0; n]), 0).unwrap();
        // k = n keeps every pushed entry, so no tie-breaking by id is involved.
        let (mg, mh) = (ppr(&g, n), ppr(&h, n));
        for (variant, mode) in VARIANTS {
            let s = spec(variant, mode, 3);
            let eg = build_edge_list(&g, variant.uses_ppr().then_some(&mg), mode).unwrap();
            let eh = build_edge_list(&h, variant.uses_ppr().then_some(&mh), mode).unwrap();
            let a = run_layer(&s, seed, features(&g), &eg);
            let b = run_layer(&s, seed, features(&h), &eh);
            for i in 0..n {
                for (u, v) in a.row(i).iter().zip(b.row(perm[i] as usize)) {
                    prop_assert!((u - v).abs() <= 1e-6, "{:?}/{:?}", variant, mode);
                }
            }
        }
    }

    #[test]
    fn appnp_contracts_on_regular_graphs(n in 3usize..30, seed in any::<u64>()) {
        // Cycles are 2-regular, so the normalized adjacency is row-stochastic.
        let edges: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, (i + 1) % n as u32)).collect();
        let g = CsrGraph::from_edges(n, &edges, 0, vec![], Labels::Multiclass(vec![0; n]), 0).unwrap();
        let adj = Arc::new(normalized_adjacency::<f64>(&g));
        let mut rng = param_rng(seed, "h");
        let h = Tensor::from_fn(n, 2, |_, _| uniform(&mut rng));
        let mut tape = Tape::<f64>::new();
        let hv = tape.constant(h).unwrap();
        let iterates: Vec<Tensor<f64>> = (0..8)
            .map(|k| {
                let z = appnp_propagate(&mut tape, hv, &adj, 0.25, k).unwrap();
                tape.value(z).clone()
            })
            .collect();
        for w in iterates.windows(3) {
            let (d1, d2) = (max_diff(&w[1], &w[0]), max_diff(&w[2], &w[1]));
            prop_assert!(d2 <= 0.75 * d1 + 1e-15, "{} > 0.75 * {}", d2, d1);
        }
    }
}

#[test]
fn inductive_logits_ignore_other_graphs() {
    let test_graph = random_graph(12, 10, 5, 1);
    let cfg = ModelConfig::inductive(ModelKind::PprGat, 5, 3, pprgat_core::models::InductiveShape::reduced());
    let model = Model::<f32>::new(cfg).unwrap();
    let m = ppr(&test_graph, 32);
    let logits = |train_seed: u64| {
        // A training graph exists alongside; its contents must not matter.
        let train = random_graph(20, 30, 5, train_seed);
        let _train_ctx = GraphContext::<f32>::new(model.config(), &train, Some(&ppr(&train, 32))).unwrap();
        let ctx = GraphContext::<f32>::new(model.config(), &test_graph, Some(&m)).unwrap();
        let mut tape = Tape::new();
        let f = model.forward(&mut tape, &ctx, false, &mut dropout_rng(0)).unwrap();
        tape.value(f.logits).clone()
    };
    let a = logits(7);
    let b = logits(8);
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

fn train_steps(seed: u64) -> Vec<Tensor<f32>> {
    let g = random_graph(15, 20, 4, 3);
    let m = ppr(&g, 8);
    let cfg = ModelConfig::transductive(ModelKind::PprGatV2, 4, 3, 1).with_seed(seed);
    let mut model = Model::<f32>::new(cfg.clone()).unwrap();
    let ctx = GraphContext::<f32>::new(&cfg, &g, Some(&m)).unwrap();
    let labels: Vec<u32> = (0..15).map(|i| i % 3).collect();
    let mut adam = Adam::new(cfg.optimizer, model.params());
    let mut rng = dropout_rng(seed);
    for _ in 0..5 {
        let mut tape = Tape::new();
        let f = model.forward(&mut tape, &ctx, true, &mut rng).unwrap();
        let loss = tape.softmax_cross_entropy(f.logits, &labels, &[0, 1, 2, 3, 4, 5]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g: Vec<Tensor<f32>> = f
            .params
            .iter()
            .zip(model.params())
            .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
            .collect();
        adam.step(model.params_mut(), &g).unwrap();
    }
    model.params().to_vec()
}

#[test]
fn same_seed_same_parameters() {
    assert_eq!(train_steps(4), train_steps(4));
    assert_ne!(train_steps(4), train_steps(5));
}

#[test]
fn segment_index_rejects_bad_groups() {
    assert!(SegmentIndex::new(vec![0, 3], 2).is_err());
    let s = SegmentIndex::new(vec![1, 1], 2).unwrap();
    assert!(s.check_nonempty().is_err());
    assert_eq!(s.group_size(1), 2);
    assert!(!s.is_empty());
    let g = random_graph(4, 0, 1, 0);
    assert_eq!(g.degree(0).unwrap(), g.row(0).len());
}
