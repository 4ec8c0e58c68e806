//! Edge scoring, normalization and aggregation for GAT, GATv2 and their
//! PPR-aware counterparts.
//!
//! Scores are computed edge-parallel over an [`EdgeList`] grouped by
//! destination node. For the GAT family the attention vector is split as
//! `a = [a_dst; a_src; a_ppr]` so that `a^T [W h_i || W h_j || p_ij]` becomes
//! two per-node dot products gathered onto edges plus `a_ppr * p_ij`. For
//! GATv2 the weight is stored input-major, `(2 d [+ 1]) x d'`, and split the
//! same way by rows: `W [h_i || h_j || p_ij] = W_dst h_i + W_src h_j + w_ppr p_ij`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use rand_core::RngCore;
use thiserror::Error;

use crate::autodiff::{CsrMatrix, SegmentIndex, Tape, Tensor, TensorError, Var};
use crate::graph::{add_self_loops, Adjacency, CsrGraph};
use crate::ppr::SparsePprMatrix;
use crate::rng::{param_rng, uniform};
use crate::Real;

pub const LEAKY_RELU_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttentionError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0} needs a PPR matrix")]
    MissingPpr(&'static str),
    #[error("PPR matrix has {ppr} rows, graph has {graph} nodes")]
    PprSize { ppr: usize, graph: usize },
    #[error("PPR row {0} is empty")]
    EmptyPprRow(usize),
    #[error("invalid layer spec: {0}")]
    Spec(String),
    #[error("layer has {expected} heads, got parameters for {got}")]
    HeadCount { expected: usize, got: usize },
    #[error("parameter {name} has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Variant {
    Gat,
    GatV2,
    PprGat,
    PprGatV2,
}

impl Variant {
    pub fn uses_ppr(self) -> bool {
        matches!(self, Variant::PprGat | Variant::PprGatV2)
    }

    pub fn is_v2(self) -> bool {
        matches!(self, Variant::GatV2 | Variant::PprGatV2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NeighborMode {
    /// `j` ranges over the adjacency with self-loops.
    Local,
    /// `j` ranges over the stored entries of PPR row `i`.
    Topk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum HeadCombine {
    Concat,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Elu,
    None,
}

impl Activation {
    pub fn apply<T: Real>(self, tape: &mut Tape<T>, x: Var) -> Result<Var, TensorError> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Elu => tape.elu(x),
            Activation::None => Ok(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSpec {
    pub variant: Variant,
    pub neighbor_mode: NeighborMode,
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub combine: HeadCombine,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), AttentionError> {
        if self.in_dim == 0 || self.out_dim == 0 || self.heads == 0 {
            return Err(AttentionError::Spec(format!(
                "dimensions must be positive (in {}, out {}, heads {})",
                self.in_dim, self.out_dim, self.heads
            )));
        }
        if !self.variant.uses_ppr() && self.neighbor_mode == NeighborMode::Topk {
            return Err(AttentionError::Spec(format!(
                "{:?} attends over local neighbors only",
                self.variant
            )));
        }
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        match self.combine {
            HeadCombine::Concat => self.heads * self.out_dim,
            HeadCombine::Average => self.out_dim,
        }
    }

    fn ppr_slot(&self) -> usize {
        usize::from(self.variant.uses_ppr())
    }

    pub fn w_shape(&self) -> (usize, usize) {
        if self.variant.is_v2() {
            (2 * self.in_dim + self.ppr_slot(), self.out_dim)
        } else {
            (self.in_dim, self.out_dim)
        }
    }

    pub fn a_shape(&self) -> (usize, usize) {
        if self.variant.is_v2() {
            (self.out_dim, 1)
        } else {
            (2 * self.out_dim + self.ppr_slot(), 1)
        }
    }

    /// Shape of the same parameters without the PPR slot.
    fn base_shapes(&self) -> [(usize, usize); 2] {
        let (w, a) = (self.w_shape(), self.a_shape());
        if self.variant.is_v2() {
            [(w.0 - self.ppr_slot(), w.1), a]
        } else {
            [w, (a.0 - self.ppr_slot(), 1)]
        }
    }
}

pub fn head_param_names(layer: usize, head: usize) -> [String; 2] {
    [
        format!("layer{layer}.head{head}.W"),
        format!("layer{layer}.head{head}.a"),
    ]
}

/// Glorot-uniform draw of `rows x cols` values from `rng`, bound computed from
/// `fan = (fan_in, fan_out)`.
pub(crate) fn glorot<T: Real>(rng: &mut impl RngCore, rows: usize, cols: usize, fan: (usize, usize)) -> Vec<T> {
    let bound = libm::sqrt(6.0 / (fan.0 + fan.1) as f64);
    (0..rows * cols)
        .map(|_| T::from_f64((2.0 * uniform(rng) - 1.0) * bound))
        .collect()
}

/// Initial `(name, value)` pairs for one layer. The PPR slot of a PPR variant
/// comes from its own stream with the bound of the base shape, so the shared
/// entries of e.g. GAT and PPRGAT start out identical for a given seed.
pub fn init_layer<T: Real>(spec: &LayerSpec, layer: usize, seed: u64) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::with_capacity(2 * spec.heads);
    let full = [spec.w_shape(), spec.a_shape()];
    let base = spec.base_shapes();
    for head in 0..spec.heads {
        for (k, name) in head_param_names(layer, head).into_iter().enumerate() {
            let (r, c) = base[k];
            let mut data = glorot::<T>(&mut param_rng(seed, &name), r, c, (r, c));
            let extra = full[k].0 * full[k].1 - data.len();
            if extra > 0 {
                let mut rng = param_rng(seed, &format!("{name}#ppr"));
                data.extend(glorot::<T>(&mut rng, extra, 1, (r, c)));
            }
            out.push((
                name,
                Tensor::new(full[k].0, full[k].1, data).expect("shape computed above"),
            ));
        }
    }
    out
}

/// Attention pairs `(i, j)` grouped contiguously by destination `i`, sources
/// ascending inside each group.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub dst: Arc<[u32]>,
    pub src: Arc<[u32]>,
    pub seg: Arc<SegmentIndex>,
    /// `Pi[i][j]` per edge, 0 where the pair was not kept.
    pub ppr_values: Option<Vec<f64>>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.dst.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dst.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.seg.num_groups()
    }

    fn ppr_column<T: Real>(&self) -> Option<Tensor<T>> {
        self.ppr_values
            .as_ref()
            .map(|v| Tensor::column(v.iter().map(|&p| T::from_f64(p)).collect()))
    }
}

pub fn build_edge_list(
    g: &CsrGraph,
    ppr: Option<&SparsePprMatrix>,
    mode: NeighborMode,
) -> Result<EdgeList, AttentionError> {
    let n = g.num_nodes();
    if let Some(m) = ppr {
        if m.num_nodes() != n {
            return Err(AttentionError::PprSize {
                ppr: m.num_nodes(),
                graph: n,
            });
        }
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut dst = Vec::new();
    let mut src = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    match mode {
        NeighborMode::Local => {
            let sl = add_self_loops(g);
            for i in 0..n {
                for &j in sl.row(i) {
                    dst.push(i as u32);
                    src.push(j);
                    if let Some(m) = ppr {
                        values.push(m.lookup(i, j));
                    }
                }
                offsets.push(dst.len());
            }
        }
        NeighborMode::Topk => {
            let m = ppr.ok_or(AttentionError::MissingPpr("top-k neighbor mode"))?;
            for i in 0..n {
                let row = m.row(i);
                if row.is_empty() {
                    return Err(AttentionError::EmptyPprRow(i));
                }
                let mut entries = row.entries.clone();
                entries.sort_unstable_by_key(|&(j, _)| j);
                for (j, mass) in entries {
                    dst.push(i as u32);
                    src.push(j);
                    values.push(mass);
                }
                offsets.push(dst.len());
            }
        }
    }
    Ok(EdgeList {
        dst: dst.into(),
        src: src.into(),
        seg: Arc::new(SegmentIndex::from_offsets(&offsets)),
        ppr_values: ppr.map(|_| values),
    })
}

fn check_shape<T: Real>(tape: &Tape<T>, v: Var, name: &str, expected: (usize, usize)) -> Result<(), AttentionError> {
    let got = tape.value(v).shape();
    if got != expected {
        return Err(AttentionError::ParamShape {
            name: name.into(),
            expected,
            got,
        });
    }
    Ok(())
}

/// Pre-activation scores of several heads at once, `E x H`. Head `k` uses
/// `projs[k]` (`n x d'`) and `avecs[k]`.
fn gat_preactivation<T: Real>(
    tape: &mut Tape<T>,
    projs: &[Var],
    avecs: &[Var],
    edges: &EdgeList,
    ppr: Option<Var>,
) -> Result<Var, AttentionError> {
    let mut s_dst = Vec::with_capacity(projs.len());
    let mut s_src = Vec::with_capacity(projs.len());
    let mut a_ppr = Vec::with_capacity(projs.len());
    for (&proj, &a) in projs.iter().zip(avecs) {
        let d = tape.value(proj).cols();
        check_shape(tape, a, "a", (2 * d + usize::from(ppr.is_some()), 1))?;
        let a_dst = tape.slice_rows(a, 0, d)?;
        let a_src = tape.slice_rows(a, d, d)?;
        s_dst.push(tape.matmul(proj, a_dst)?);
        s_src.push(tape.matmul(proj, a_src)?);
        if ppr.is_some() {
            a_ppr.push(tape.slice_rows(a, 2 * d, 1)?);
        }
    }
    let s_dst = concat_or_single(tape, &s_dst)?;
    let s_src = concat_or_single(tape, &s_src)?;
    let e = tape.gather_pair_sum(s_dst, edges.dst.clone(), s_src, edges.src.clone())?;
    match ppr {
        None => Ok(e),
        Some(p) => {
            let a_ppr = concat_or_single(tape, &a_ppr)?;
            let pe = tape.matmul(p, a_ppr)?;
            Ok(tape.add(e, pe)?)
        }
    }
}

/// `LeakyReLU(a^T [W h_i || W h_j])` per edge, given `proj = H W` (`n x d'`)
/// and `a` of shape `2d' x 1`. Returns an `E x 1` column.
pub fn score_gat<T: Real>(tape: &mut Tape<T>, proj: Var, a: Var, edges: &EdgeList) -> Result<Var, AttentionError> {
    let e = gat_preactivation(tape, &[proj], &[a], edges, None)?;
    Ok(tape.leaky_relu(e, T::from_f64(LEAKY_RELU_SLOPE))?)
}

/// `LeakyReLU(a^T [W h_i || W h_j || p_ij])` with `a` of shape `(2d'+1) x 1`
/// and `ppr` the `E x 1` column of PPR values.
pub fn score_pprgat<T: Real>(
    tape: &mut Tape<T>,
    proj: Var,
    a: Var,
    edges: &EdgeList,
    ppr: Var,
) -> Result<Var, AttentionError> {
    let e = gat_preactivation(tape, &[proj], &[a], edges, Some(ppr))?;
    Ok(tape.leaky_relu(e, T::from_f64(LEAKY_RELU_SLOPE))?)
}

fn gatv2_score<T: Real>(
    tape: &mut Tape<T>,
    left: Var,
    right: Var,
    ppr: Option<(Var, Var)>,
    a: Var,
    edges: &EdgeList,
) -> Result<Var, AttentionError> {
    let d = tape.value(left).cols();
    check_shape(tape, right, "W_src h", tape.value(left).shape())?;
    check_shape(tape, a, "a", (d, 1))?;
    let z_dst = tape.gather_rows(left, edges.dst.clone())?;
    let z_src = tape.gather_rows(right, edges.src.clone())?;
    let mut z = tape.add(z_dst, z_src)?;
    if let Some((w_ppr, p)) = ppr {
        check_shape(tape, w_ppr, "w_ppr", (1, d))?;
        let zp = tape.matmul(p, w_ppr)?;
        z = tape.add(z, zp)?;
    }
    let act = tape.leaky_relu(z, T::from_f64(LEAKY_RELU_SLOPE))?;
    Ok(tape.matmul(act, a)?)
}

/// `a^T LeakyReLU(W [h_i || h_j])` per edge, given `left = H W_dst` and
/// `right = H W_src` (both `n x d'`) and `a` of shape `d' x 1`.
pub fn score_gatv2<T: Real>(
    tape: &mut Tape<T>,
    left: Var,
    right: Var,
    a: Var,
    edges: &EdgeList,
) -> Result<Var, AttentionError> {
    gatv2_score(tape, left, right, None, a, edges)
}

/// `a^T LeakyReLU(W [h_i || h_j || p_ij])`; `w_ppr` is the `1 x d'` row of
/// `W` that multiplies the PPR value.
pub fn score_pprgatv2<T: Real>(
    tape: &mut Tape<T>,
    left: Var,
    right: Var,
    w_ppr: Var,
    a: Var,
    edges: &EdgeList,
    ppr: Var,
) -> Result<Var, AttentionError> {
    gatv2_score(tape, left, right, Some((w_ppr, ppr)), a, edges)
}

/// Softmax of `E x H` scores over each destination group.
pub fn normalize_attention<T: Real>(tape: &mut Tape<T>, scores: Var, edges: &EdgeList) -> Result<Var, AttentionError> {
    Ok(tape.segment_softmax(scores, edges.seg.clone())?)
}

/// Weighted sum of source rows of `values` (`n x (H d')`, head-major column
/// blocks) with `E x H` coefficients, then head combine and activation.
pub fn aggregate_heads<T: Real>(
    tape: &mut Tape<T>,
    coeffs: Var,
    values: Var,
    edges: &EdgeList,
    combine: HeadCombine,
    activation: Activation,
) -> Result<Var, AttentionError> {
    let heads = tape.value(coeffs).cols();
    let summed = tape.gather_weighted_sum(coeffs, values, edges.src.clone(), edges.seg.clone())?;
    let combined = match combine {
        HeadCombine::Concat => summed,
        HeadCombine::Average => {
            let width = tape.value(summed).cols() / heads;
            let parts = (0..heads)
                .map(|h| tape.slice_cols(summed, h * width, width))
                .collect::<Result<Vec<_>, _>>()?;
            tape.mean_n(&parts)?
        }
    };
    Ok(activation.apply(tape, combined)?)
}

/// Tape handles of one head's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadVars {
    pub w: Var,
    pub a: Var,
}

/// Dropout settings for one forward pass.
pub struct DropoutCtx<'r, R: RngCore> {
    pub rate: f64,
    pub training: bool,
    pub rng: &'r mut R,
}

impl<R: RngCore> DropoutCtx<'_, R> {
    pub fn apply<T: Real>(&mut self, tape: &mut Tape<T>, x: Var) -> Result<Var, TensorError> {
        tape.dropout(x, self.rate, self.training, self.rng)
    }

    pub fn apply_input<T: Real>(&mut self, tape: &mut Tape<T>, x: LayerInput<T>) -> Result<LayerInput<T>, TensorError> {
        match x {
            LayerInput::Dense(v) => Ok(LayerInput::Dense(self.apply(tape, v)?)),
            LayerInput::Sparse(m) if self.training && self.rate > 0.0 => {
                Ok(LayerInput::Sparse(Arc::new(m.dropout(self.rate, self.rng)?)))
            }
            LayerInput::Sparse(m) => {
                if !(0.0..1.0).contains(&self.rate) {
                    return Err(TensorError::RateOutOfRange(self.rate));
                }
                Ok(LayerInput::Sparse(m))
            }
        }
    }
}

/// Node features entering a layer: a tape value, or a constant sparse matrix
/// such as bag-of-words input features.
#[derive(Debug, Clone)]
pub enum LayerInput<T> {
    Dense(Var),
    Sparse(Arc<CsrMatrix<T>>),
}

impl<T> From<Var> for LayerInput<T> {
    fn from(v: Var) -> Self {
        LayerInput::Dense(v)
    }
}

impl<T: Real> LayerInput<T> {
    pub fn shape(&self, tape: &Tape<T>) -> (usize, usize) {
        match self {
            LayerInput::Dense(v) => tape.value(*v).shape(),
            LayerInput::Sparse(m) => m.shape(),
        }
    }

    /// `x W`.
    pub fn project(&self, tape: &mut Tape<T>, w: Var) -> Result<Var, TensorError> {
        match self {
            LayerInput::Dense(v) => tape.matmul(*v, w),
            LayerInput::Sparse(m) => tape.sparse_matmul(m.clone(), w),
        }
    }
}

fn concat_or_single<T: Real>(tape: &mut Tape<T>, parts: &[Var]) -> Result<Var, TensorError> {
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        tape.concat_cols(parts)
    }
}

/// One attention layer: dropout on inputs, per-head scores, segment softmax,
/// dropout on coefficients, aggregation.
pub fn layer_forward<T: Real, R: RngCore>(
    tape: &mut Tape<T>,
    spec: &LayerSpec,
    heads: &[HeadVars],
    x: Var,
    edges: &EdgeList,
    dropout: &mut DropoutCtx<'_, R>,
) -> Result<Var, AttentionError> {
    layer_forward_input(tape, spec, heads, LayerInput::Dense(x), edges, dropout)
}

/// [`layer_forward`] for dense or sparse input.
pub fn layer_forward_input<T: Real, R: RngCore>(
    tape: &mut Tape<T>,
    spec: &LayerSpec,
    heads: &[HeadVars],
    x: LayerInput<T>,
    edges: &EdgeList,
    dropout: &mut DropoutCtx<'_, R>,
) -> Result<Var, AttentionError> {
    spec.validate()?;
    if heads.len() != spec.heads {
        return Err(AttentionError::HeadCount {
            expected: spec.heads,
            got: heads.len(),
        });
    }
    let expected = (edges.num_nodes(), spec.in_dim);
    if x.shape(tape) != expected {
        return Err(AttentionError::ParamShape {
            name: "layer input".into(),
            expected,
            got: x.shape(tape),
        });
    }
    for h in heads {
        check_shape(tape, h.w, "W", spec.w_shape())?;
        check_shape(tape, h.a, "a", spec.a_shape())?;
    }
    let ppr = if spec.variant.uses_ppr() {
        let col = edges
            .ppr_column::<T>()
            .ok_or(AttentionError::MissingPpr("PPR attention variant"))?;
        Some(tape.constant(col)?)
    } else {
        None
    };
    let x = dropout.apply_input(tape, x)?;
    let d = spec.out_dim;
    let mut scores = Vec::with_capacity(spec.heads);
    let values;
    if spec.variant.is_v2() {
        let din = spec.in_dim;
        let mut w_dst = Vec::with_capacity(spec.heads);
        let mut w_src = Vec::with_capacity(spec.heads);
        for h in heads {
            w_dst.push(tape.slice_rows(h.w, 0, din)?);
            w_src.push(tape.slice_rows(h.w, din, din)?);
        }
        let wl = concat_or_single(tape, &w_dst)?;
        let wr = concat_or_single(tape, &w_src)?;
        let left_all = x.project(tape, wl)?;
        let right_all = x.project(tape, wr)?;
        for (k, h) in heads.iter().enumerate() {
            let left = tape.slice_cols(left_all, k * d, d)?;
            let right = tape.slice_cols(right_all, k * d, d)?;
            let s = match ppr {
                Some(p) => {
                    let w_ppr = tape.slice_rows(h.w, 2 * din, 1)?;
                    score_pprgatv2(tape, left, right, w_ppr, h.a, edges, p)?
                }
                None => score_gatv2(tape, left, right, h.a, edges)?,
            };
            scores.push(s);
        }
        values = right_all;
    } else {
        let ws: Vec<Var> = heads.iter().map(|h| h.w).collect();
        let w_all = concat_or_single(tape, &ws)?;
        let proj_all = x.project(tape, w_all)?;
        let projs = (0..heads.len())
            .map(|k| tape.slice_cols(proj_all, k * d, d))
            .collect::<Result<Vec<_>, _>>()?;
        let avecs: Vec<Var> = heads.iter().map(|h| h.a).collect();
        let e = gat_preactivation(tape, &projs, &avecs, edges, ppr)?;
        scores.push(tape.leaky_relu(e, T::from_f64(LEAKY_RELU_SLOPE))?);
        values = proj_all;
    }
    let scores = concat_or_single(tape, &scores)?;
    let coeffs = normalize_attention(tape, scores, edges)?;
    let coeffs = dropout.apply(tape, coeffs)?;
    aggregate_heads(tape, coeffs, values, edges, spec.combine, spec.activation)
}
