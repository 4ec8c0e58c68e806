//! The built-in check list: every primitive op on random inputs, every
//! attention layer variant, and every model kind end to end on a toy graph.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{grad_check, GradCheckError, GradCheckOptions};
use crate::attention::{
    build_edge_list, init_layer, layer_forward, Activation, DropoutCtx, HeadCombine, HeadVars, LayerSpec,
    NeighborMode, Variant,
};
use crate::autodiff::{CsrMatrix, SegmentIndex, Tape, Tensor, TensorError, Var};
use crate::graph::{CsrGraph, Labels};
use crate::models::{GraphContext, InductiveShape, Model, ModelConfig, ModelKind};
use crate::ppr::{compute_ppr_matrix, PprConfig};
use crate::rng::{dropout_rng, param_rng, uniform, Rng};

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Max relative error, or the failure message.
    pub outcome: Result<f64, String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, Ok(e) if e <= TOLERANCE)
    }
}

fn record(name: impl Into<String>, outcome: Result<f64, GradCheckError>) -> CheckResult {
    CheckResult {
        name: name.into(),
        outcome: outcome.map_err(|e| format!("{e}")),
    }
}

/// Values uniform in `[-1, 1]`, pushed away from 0 by at least `gap`.
fn random(rng: &mut Rng, rows: usize, cols: usize, gap: f64) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| {
        let v = 2.0 * uniform(rng) - 1.0;
        if v.abs() < gap {
            v.signum() * gap + v
        } else {
            v
        }
    })
}

/// `sum(y * r)` for a fixed random `r`, which makes every output entry
/// contribute a distinct weight to the scalar.
fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var, TensorError> {
    let (r, c) = tape.value(y).shape();
    let w = random(&mut param_rng(seed, "projection"), r, c, 0.0);
    let w = tape.constant(w)?;
    let p = tape.mul(y, w)?;
    tape.sum_all(p)
}

fn check<F>(name: &str, params: Vec<Tensor<f64>>, f: F) -> CheckResult
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    record(name, grad_check(&params, f, GradCheckOptions::default()))
}

fn segments() -> Arc<SegmentIndex> {
    Arc::new(SegmentIndex::from_offsets(&[0, 2, 3, 6]))
}

pub fn primitive_checks() -> Vec<CheckResult> {
    let mut rng = param_rng(11, "primitive-inputs");
    let mut r = |rows, cols| random(&mut rng, rows, cols, 1e-2);
    let mut out = Vec::new();
    out.push(check("matmul", vec![r(5, 4), r(4, 3)], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        project(t, y, 1)
    }));
    out.push(check("concat_cols", vec![r(3, 2), r(3, 1), r(3, 3)], |t, v| {
        let y = t.concat_cols(v)?;
        project(t, y, 2)
    }));
    out.push(check("slice_rows", vec![r(5, 3)], |t, v| {
        let y = t.slice_rows(v[0], 1, 3)?;
        project(t, y, 3)
    }));
    out.push(check("slice_cols", vec![r(4, 5)], |t, v| {
        let y = t.slice_cols(v[0], 2, 2)?;
        project(t, y, 4)
    }));
    out.push(check("add", vec![r(3, 3), r(3, 3)], |t, v| {
        let y = t.add(v[0], v[1])?;
        project(t, y, 5)
    }));
    out.push(check("add_n / mean_n", vec![r(2, 3), r(2, 3), r(2, 3)], |t, v| {
        let s = t.add_n(v)?;
        let m = t.mean_n(v)?;
        let y = t.mul(s, m)?;
        project(t, y, 6)
    }));
    out.push(check("add_row", vec![r(4, 3), r(1, 3)], |t, v| {
        let y = t.add_row(v[0], v[1])?;
        project(t, y, 7)
    }));
    out.push(check("scale / mul", vec![r(3, 2), r(3, 2)], |t, v| {
        let s = t.scale(v[0], -1.7)?;
        let y = t.mul(s, v[1])?;
        project(t, y, 8)
    }));
    out.push(check("relu", vec![r(4, 4)], |t, v| {
        let y = t.relu(v[0])?;
        project(t, y, 9)
    }));
    out.push(check("leaky_relu", vec![r(4, 4)], |t, v| {
        let y = t.leaky_relu(v[0], 0.2)?;
        project(t, y, 10)
    }));
    out.push(check("elu", vec![r(4, 4)], |t, v| {
        let y = t.elu(v[0])?;
        project(t, y, 11)
    }));
    out.push(check("gather_rows", vec![r(4, 3)], |t, v| {
        let y = t.gather_rows(v[0], vec![3u32, 0, 0, 2, 3].into())?;
        project(t, y, 12)
    }));
    out.push(check("segment_softmax", vec![r(6, 2)], |t, v| {
        let y = t.segment_softmax(v[0], segments())?;
        project(t, y, 13)
    }));
    out.push(check("segment_weighted_sum", vec![r(6, 2), r(6, 6)], |t, v| {
        let y = t.segment_weighted_sum(v[0], v[1], segments())?;
        project(t, y, 14)
    }));
    out.push(check("gather_pair_sum", vec![r(4, 2), r(3, 2)], |t, v| {
        let y = t.gather_pair_sum(v[0], vec![3u32, 0, 0, 2].into(), v[1], vec![1u32, 1, 2, 0].into())?;
        project(t, y, 32)
    }));
    out.push(check("gather_weighted_sum", vec![r(6, 2), r(4, 6)], |t, v| {
        let y = t.gather_weighted_sum(v[0], v[1], vec![3u32, 0, 0, 2, 3, 1].into(), segments())?;
        project(t, y, 31)
    }));
    let sparse = Arc::new(
        CsrMatrix::from_rows(4, vec![vec![(0, 0.5), (3, -1.0)], vec![], vec![(1, 2.0), (2, 0.25), (3, 1.0)]])
            .expect("valid literal"),
    );
    out.push(check("sparse_matmul", vec![r(4, 3)], move |t, v| {
        let y = t.sparse_matmul(sparse.clone(), v[0])?;
        project(t, y, 15)
    }));
    out.push(check("dropout (fixed mask)", vec![r(5, 4)], |t, v| {
        let y = t.dropout(v[0], 0.5, true, &mut dropout_rng(3))?;
        project(t, y, 16)
    }));
    out.push(check("softmax_cross_entropy", vec![r(5, 3)], |t, v| {
        t.softmax_cross_entropy(v[0], &[0, 2, 1, 1, 0], &[0, 1, 3, 4])
    }));
    out.push(check("bce_with_logits", vec![r(3, 4)], |t, v| {
        t.bce_with_logits(v[0], &[1, 0, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0], &[0, 2])
    }));
    out
}

/// Three-node cycle with 3 features and two classes.
pub fn toy_triangle() -> CsrGraph {
    CsrGraph::from_edges(
        3,
        &[(0, 1), (1, 2), (2, 0)],
        3,
        vec![0.9, -0.3, 0.4, -0.6, 0.8, 0.1, 0.2, 0.5, -0.7],
        Labels::Multiclass(vec![0, 1, 1]),
        0,
    )
    .expect("valid literal")
}

fn toy_ppr(g: &CsrGraph, top_k: usize) -> crate::ppr::SparsePprMatrix {
    let cfg = PprConfig {
        alpha: 0.25,
        epsilon: 1e-6,
        top_k,
        threads: 1,
    };
    compute_ppr_matrix(g, &cfg).expect("toy graph converges")
}

pub fn layer_checks() -> Vec<CheckResult> {
    let g = toy_triangle();
    let ppr = toy_ppr(&g, 2);
    let mut out = Vec::new();
    let variants = [
        (Variant::Gat, NeighborMode::Local),
        (Variant::GatV2, NeighborMode::Local),
        (Variant::PprGat, NeighborMode::Local),
        (Variant::PprGat, NeighborMode::Topk),
        (Variant::PprGatV2, NeighborMode::Local),
        (Variant::PprGatV2, NeighborMode::Topk),
    ];
    for (variant, mode) in variants {
        for combine in [HeadCombine::Concat, HeadCombine::Average] {
            let spec = LayerSpec {
                variant,
                neighbor_mode: mode,
                in_dim: 3,
                out_dim: 2,
                heads: 2,
                combine,
                activation: Activation::Elu,
            };
            let edges = build_edge_list(&g, variant.uses_ppr().then_some(&ppr), mode).expect("toy edges");
            let features = Tensor::from_fn(3, 3, |i, j| g.feature_row(i)[j] as f64);
            let params: Vec<Tensor<f64>> = init_layer::<f64>(&spec, 0, 5).into_iter().map(|(_, t)| t).collect();
            let name = format!("layer {variant:?}/{mode:?}/{combine:?}");
            let f = |t: &mut Tape<f64>, v: &[Var]| {
                let heads: Vec<HeadVars> = v.chunks(2).map(|c| HeadVars { w: c[0], a: c[1] }).collect();
                let x = t.constant(features.clone())?;
                let mut rng = dropout_rng(0);
                let mut dc = DropoutCtx {
                    rate: 0.0,
                    training: false,
                    rng: &mut rng,
                };
                let y = layer_forward(t, &spec, &heads, x, &edges, &mut dc).map_err(|e| match e {
                    crate::attention::AttentionError::Tensor(t) => t,
                    _ => TensorError::EmptyInput("layer setup"),
                })?;
                project(t, y, 21)
            };
            out.push(record(name, grad_check(&params, f, GradCheckOptions::default())));
        }
    }
    out
}

fn model_check(name: String, model: Model<f64>, g: &CsrGraph, multilabel: bool) -> CheckResult {
    let ppr = toy_ppr(g, 3);
    let ctx = match GraphContext::<f64>::new(model.config(), g, Some(&ppr)) {
        Ok(c) => c,
        Err(e) => {
            return CheckResult {
                name,
                outcome: Err(format!("{e}")),
            }
        }
    };
    let f = |t: &mut Tape<f64>, v: &[Var]| {
        let logits = model
            .forward_with(t, v, &ctx, false, &mut dropout_rng(0))
            .map_err(|_| TensorError::EmptyInput("model setup"))?;
        if multilabel {
            t.bce_with_logits(logits, &[1, 0, 0, 1, 1, 1], &[0, 1, 2])
        } else {
            t.softmax_cross_entropy(logits, &[0, 1, 1], &[0, 1, 2])
        }
    };
    let mut result = record(name, grad_check(model.params(), &f, GradCheckOptions::default()));
    if result.passed() {
        // Every parameter must receive some gradient.
        let mut tape = Tape::new();
        let vars: Vec<Var> = model
            .params()
            .iter()
            .map(|p| tape.param(p.clone()).expect("finite init"))
            .collect();
        let dead = f(&mut tape, &vars)
            .and_then(|loss| tape.backward(loss))
            .map(|grads| {
                vars.iter()
                    .zip(model.names())
                    .find(|(v, _)| grads.get(**v).is_none_or(|g| g.data().iter().all(|&x| x == 0.0)))
                    .map(|(_, n)| n.clone())
            });
        match dead {
            Ok(Some(n)) => result.outcome = Err(format!("parameter {n} receives no gradient")),
            Ok(None) => {}
            Err(e) => result.outcome = Err(format!("{e}")),
        }
    }
    result
}

pub fn model_checks() -> Vec<CheckResult> {
    let g = toy_triangle();
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::transductive(kind, 3, 2, 1).with_seed(1);
        let model = Model::<f64>::new(cfg).expect("valid config");
        out.push(model_check(format!("model {kind}"), model, &g, false));
    }
    let shape = InductiveShape {
        hidden_layers: 2,
        heads: 2,
        features: 3,
        output_heads: 3,
    };
    for kind in [ModelKind::PprGat, ModelKind::GatV2] {
        let cfg = ModelConfig::inductive(kind, 3, 2, shape).with_seed(2);
        let model = Model::<f64>::new(cfg).expect("valid config");
        out.push(model_check(format!("model {kind} (inductive layout)"), model, &g, true));
    }
    out
}

/// Primitive, layer and model checks, in that order.
pub fn run_suite() -> Vec<CheckResult> {
    let mut all = primitive_checks();
    all.extend(layer_checks());
    all.extend(model_checks());
    all
}
