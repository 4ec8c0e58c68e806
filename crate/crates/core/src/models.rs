//! Full networks: the four PPR attention variants, GAT/GATv2 and the
//! APPNP and PPRGo propagation baselines.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand_core::RngCore;
use thiserror::Error;

use crate::attention::{
    build_edge_list, glorot, init_layer, layer_forward_input, Activation, AttentionError, DropoutCtx, EdgeList,
    HeadCombine, HeadVars, LayerInput, LayerSpec, NeighborMode, Variant,
};
use crate::autodiff::{AdamConfig, CsrMatrix, Tape, Tensor, TensorError, Var};
use crate::graph::{add_self_loops, Adjacency, CsrGraph};
use crate::ppr::{graph_fingerprint, PprConfig, SparsePprMatrix};
use crate::rng::param_rng;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0} needs a PPR matrix for this graph: precompute required")]
    PrecomputeRequired(ModelKind),
    #[error("PPR matrix was computed for a different graph")]
    StalePpr,
    #[error("unknown model kind '{0}'")]
    UnknownKind(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parameter mismatch: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelKind {
    #[cfg_attr(feature = "serde", serde(rename = "gat"))]
    Gat,
    #[cfg_attr(feature = "serde", serde(rename = "gatv2"))]
    GatV2,
    #[cfg_attr(feature = "serde", serde(rename = "pprgat"))]
    PprGat,
    #[cfg_attr(feature = "serde", serde(rename = "pprgat-local"))]
    PprGatLocal,
    #[cfg_attr(feature = "serde", serde(rename = "pprgatv2"))]
    PprGatV2,
    #[cfg_attr(feature = "serde", serde(rename = "pprgatv2-local"))]
    PprGatV2Local,
    #[cfg_attr(feature = "serde", serde(rename = "appnp"))]
    Appnp,
    #[cfg_attr(feature = "serde", serde(rename = "pprgo"))]
    PprGo,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Gat,
        ModelKind::GatV2,
        ModelKind::PprGat,
        ModelKind::PprGatLocal,
        ModelKind::PprGatV2,
        ModelKind::PprGatV2Local,
        ModelKind::Appnp,
        ModelKind::PprGo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gat => "gat",
            ModelKind::GatV2 => "gatv2",
            ModelKind::PprGat => "pprgat",
            ModelKind::PprGatLocal => "pprgat-local",
            ModelKind::PprGatV2 => "pprgatv2",
            ModelKind::PprGatV2Local => "pprgatv2-local",
            ModelKind::Appnp => "appnp",
            ModelKind::PprGo => "pprgo",
        }
    }

    pub fn attention(self) -> Option<(Variant, NeighborMode)> {
        use NeighborMode::*;
        match self {
            ModelKind::Gat => Some((Variant::Gat, Local)),
            ModelKind::GatV2 => Some((Variant::GatV2, Local)),
            ModelKind::PprGat => Some((Variant::PprGat, Topk)),
            ModelKind::PprGatLocal => Some((Variant::PprGat, Local)),
            ModelKind::PprGatV2 => Some((Variant::PprGatV2, Topk)),
            ModelKind::PprGatV2Local => Some((Variant::PprGatV2, Local)),
            ModelKind::Appnp | ModelKind::PprGo => None,
        }
    }

    pub fn needs_ppr(self) -> bool {
        match self.attention() {
            Some((v, _)) => v.uses_ppr(),
            None => self == ModelKind::PprGo,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase", tag = "type"))]
pub enum Architecture {
    Attention {
        layers: Vec<LayerSpec>,
    },
    /// `mlp` lists layer widths, input first.
    Appnp {
        mlp: Vec<usize>,
        alpha: f64,
        steps: usize,
    },
    PprGo {
        mlp: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub arch: Architecture,
    pub ppr: PprConfig,
    pub optimizer: AdamConfig,
    pub dropout: f64,
    pub seed: u64,
}

/// Hidden-layer layout of the inductive attention model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InductiveShape {
    pub hidden_layers: usize,
    pub heads: usize,
    pub features: usize,
    pub output_heads: usize,
}

impl InductiveShape {
    /// Three layers: two of 4 x 256, then 6 averaged output heads.
    pub fn full() -> Self {
        InductiveShape {
            hidden_layers: 2,
            heads: 4,
            features: 256,
            output_heads: 6,
        }
    }

    /// Desk-scale variant: one hidden layer of 4 x 64.
    pub fn reduced() -> Self {
        InductiveShape {
            hidden_layers: 1,
            heads: 4,
            features: 64,
            output_heads: 6,
        }
    }
}

pub const APPNP_STEPS: usize = 10;
pub const APPNP_HIDDEN: usize = 64;
pub const PPRGO_HIDDEN: usize = 32;
pub const TRANSDUCTIVE_DROPOUT: f64 = 0.6;
pub const WEIGHT_DECAY: f64 = 5e-4;

fn attention_stack(
    kind: ModelKind,
    num_features: usize,
    num_classes: usize,
    hidden: &[(usize, usize)],
    hidden_activation: Activation,
    output_heads: usize,
) -> Vec<LayerSpec> {
    let (variant, neighbor_mode) = kind.attention().expect("attention kind");
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut in_dim = num_features;
    for &(heads, features) in hidden {
        layers.push(LayerSpec {
            variant,
            neighbor_mode,
            in_dim,
            out_dim: features,
            heads,
            combine: HeadCombine::Concat,
            activation: hidden_activation,
        });
        in_dim = heads * features;
    }
    layers.push(LayerSpec {
        variant,
        neighbor_mode,
        in_dim,
        out_dim: num_classes,
        heads: output_heads,
        combine: HeadCombine::Average,
        activation: Activation::None,
    });
    layers
}

impl ModelConfig {
    /// Two attention layers (8 heads x 8 features, ReLU, then `output_heads`
    /// averaged heads), or the MLP baselines with matching defaults.
    pub fn transductive(kind: ModelKind, num_features: usize, num_classes: usize, output_heads: usize) -> Self {
        let arch = match kind {
            ModelKind::Appnp => Architecture::Appnp {
                mlp: vec![num_features, APPNP_HIDDEN, num_classes],
                alpha: PprConfig::default().alpha,
                steps: APPNP_STEPS,
            },
            ModelKind::PprGo => Architecture::PprGo {
                mlp: vec![num_features, PPRGO_HIDDEN, num_classes],
            },
            _ => Architecture::Attention {
                layers: attention_stack(
                    kind,
                    num_features,
                    num_classes,
                    &[(8, 8)],
                    Activation::Relu,
                    output_heads,
                ),
            },
        };
        ModelConfig {
            kind,
            arch,
            ppr: PprConfig::default(),
            optimizer: AdamConfig {
                weight_decay: WEIGHT_DECAY,
                ..AdamConfig::default()
            },
            dropout: TRANSDUCTIVE_DROPOUT,
            seed: 0,
        }
    }

    /// Multi-graph multilabel setting: ELU hidden layers, averaged output
    /// heads, no dropout.
    pub fn inductive(kind: ModelKind, num_features: usize, num_classes: usize, shape: InductiveShape) -> Self {
        let mut cfg = Self::transductive(kind, num_features, num_classes, shape.output_heads);
        if kind.attention().is_some() {
            let hidden = vec![(shape.heads, shape.features); shape.hidden_layers];
            cfg.arch = Architecture::Attention {
                layers: attention_stack(
                    kind,
                    num_features,
                    num_classes,
                    &hidden,
                    Activation::Elu,
                    shape.output_heads,
                ),
            };
        }
        cfg.dropout = 0.0;
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn input_dim(&self) -> usize {
        match &self.arch {
            Architecture::Attention { layers } => layers.first().map_or(0, |l| l.in_dim),
            Architecture::Appnp { mlp, .. } | Architecture::PprGo { mlp } => mlp.first().copied().unwrap_or(0),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.arch {
            Architecture::Attention { layers } => layers.last().map_or(0, |l| l.output_width()),
            Architecture::Appnp { mlp, .. } | Architecture::PprGo { mlp } => mlp.last().copied().unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        match (&self.arch, self.kind) {
            (Architecture::Attention { layers }, kind) => {
                let Some((variant, mode)) = kind.attention() else {
                    return bad(format!("{kind} is not an attention model"));
                };
                if layers.is_empty() {
                    return bad("no layers".into());
                }
                let mut width = layers[0].in_dim;
                for (i, l) in layers.iter().enumerate() {
                    l.validate()?;
                    if l.variant != variant || l.neighbor_mode != mode {
                        return bad(format!("layer {i} does not match {kind}"));
                    }
                    if l.in_dim != width {
                        return bad(format!("layer {i} expects width {}, gets {width}", l.in_dim));
                    }
                    width = l.output_width();
                }
                Ok(())
            }
            (Architecture::Appnp { mlp, alpha, steps }, ModelKind::Appnp) => {
                if mlp.len() < 2 || mlp.contains(&0) {
                    return bad("APPNP needs an MLP with positive widths".into());
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) || *steps == 0 {
                    return bad("APPNP needs alpha in (0, 1] and at least one step".into());
                }
                Ok(())
            }
            (Architecture::PprGo { mlp }, ModelKind::PprGo) => {
                if mlp.len() < 2 || mlp.contains(&0) {
                    return bad("PPRGo needs an MLP with positive widths".into());
                }
                Ok(())
            }
            (_, kind) => bad(format!("architecture does not match {kind}")),
        }
    }
}

/// Dense layers `(W, b)` with ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<(Tensor<T>, Tensor<T>)>,
}

fn mlp_names(k: usize) -> [String; 2] {
    [format!("mlp.layer{k}.W"), format!("mlp.layer{k}.b")]
}

impl<T: Real> MlpParams<T> {
    pub fn init(dims: &[usize], seed: u64) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let [wn, _] = mlp_names(k);
                let data = glorot::<T>(&mut param_rng(seed, &wn), w[0], w[1], (w[0], w[1]));
                (
                    Tensor::new(w[0], w[1], data).expect("shape computed above"),
                    Tensor::zeros(1, w[1]),
                )
            })
            .collect();
        MlpParams { layers }
    }
}

/// Tape-side forward of an MLP: dropout before every dense layer, ReLU
/// between layers.
pub fn mlp_forward<T: Real, R: RngCore>(
    tape: &mut Tape<T>,
    layers: &[(Var, Var)],
    x: impl Into<LayerInput<T>>,
    dropout: &mut DropoutCtx<'_, R>,
) -> Result<Var, TensorError> {
    let mut h = x.into();
    for (k, &(w, b)) in layers.iter().enumerate() {
        let dropped = dropout.apply_input(tape, h)?;
        let mut z = dropped.project(tape, w)?;
        z = tape.add_row(z, b)?;
        if k + 1 < layers.len() {
            z = tape.relu(z)?;
        }
        h = LayerInput::Dense(z);
    }
    match h {
        LayerInput::Dense(v) => Ok(v),
        LayerInput::Sparse(m) => tape.constant(m.to_dense()),
    }
}

/// `Z^{t+1} = (1 - alpha) adj Z^t + alpha H`, `Z^0 = H`, for `steps` steps.
pub fn appnp_propagate<T: Real>(
    tape: &mut Tape<T>,
    h: Var,
    adj: &Arc<CsrMatrix<T>>,
    alpha: f64,
    steps: usize,
) -> Result<Var, TensorError> {
    let teleport = tape.scale(h, T::from_f64(alpha))?;
    let mut z = h;
    for _ in 0..steps {
        let az = tape.sparse_matmul(adj.clone(), z)?;
        let az = tape.scale(az, T::from_f64(1.0 - alpha))?;
        z = tape.add(az, teleport)?;
    }
    Ok(z)
}

/// MLP prediction followed by personalized-PageRank propagation.
pub fn appnp_forward<T: Real, R: RngCore>(
    tape: &mut Tape<T>,
    mlp: &[(Var, Var)],
    x: impl Into<LayerInput<T>>,
    adj: &Arc<CsrMatrix<T>>,
    alpha: f64,
    steps: usize,
    dropout: &mut DropoutCtx<'_, R>,
) -> Result<Var, TensorError> {
    let h = mlp_forward(tape, mlp, x, dropout)?;
    appnp_propagate(tape, h, adj, alpha, steps)
}

/// `Pi * MLP(X)` over the stored entries of the PPR matrix.
pub fn pprgo_forward<T: Real, R: RngCore>(
    tape: &mut Tape<T>,
    mlp: &[(Var, Var)],
    ppr: &Arc<CsrMatrix<T>>,
    x: impl Into<LayerInput<T>>,
    dropout: &mut DropoutCtx<'_, R>,
) -> Result<Var, TensorError> {
    let h = mlp_forward(tape, mlp, x, dropout)?;
    tape.sparse_matmul(ppr.clone(), h)
}

/// `D~^-1/2 (A + I) D~^-1/2`.
pub fn normalized_adjacency<T: Real>(g: &CsrGraph) -> CsrMatrix<T> {
    let sl = add_self_loops(g);
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / libm::sqrt(sl.row(i).len() as f64)).collect();
    let rows = (0..n).map(|i| {
        sl.row(i)
            .iter()
            .map(|&j| (j, T::from_f64(inv_sqrt[i] * inv_sqrt[j as usize])))
            .collect::<Vec<_>>()
    });
    CsrMatrix::from_rows(n, rows).expect("rows come from a valid graph")
}

/// The PPR matrix as a sparse operator, columns ascending in each row.
pub fn ppr_operator<T: Real>(m: &SparsePprMatrix) -> CsrMatrix<T> {
    let n = m.num_nodes();
    let rows = m.rows.iter().map(|r| {
        let mut e: Vec<(u32, T)> = r.entries.iter().map(|&(j, v)| (j, T::from_f64(v))).collect();
        e.sort_unstable_by_key(|&(j, _)| j);
        e
    });
    CsrMatrix::from_rows(n, rows).expect("entries are node ids")
}

/// Everything a forward pass needs about one graph, derived once.
#[derive(Debug, Clone)]
pub struct GraphContext<T> {
    /// Node features, stored sparse.
    pub features: Arc<CsrMatrix<T>>,
    pub edges: Option<EdgeList>,
    pub operator: Option<Arc<CsrMatrix<T>>>,
}

impl<T: Real> GraphContext<T> {
    pub fn new(config: &ModelConfig, g: &CsrGraph, ppr: Option<&SparsePprMatrix>) -> Result<Self, ModelError> {
        let kind = config.kind;
        let ppr = if kind.needs_ppr() {
            let m = ppr.ok_or(ModelError::PrecomputeRequired(kind))?;
            if m.num_nodes() != g.num_nodes() || m.fingerprint != graph_fingerprint(g) {
                return Err(ModelError::StalePpr);
            }
            Some(m)
        } else {
            None
        };
        let features = Arc::new(CsrMatrix::from_dense(&Tensor::new(
            g.num_nodes(),
            g.num_features(),
            g.features().iter().map(|&v| T::from_f64(v as f64)).collect(),
        )?));
        let mut edges = None;
        let mut operator = None;
        match &config.arch {
            Architecture::Attention { .. } => {
                let (_, mode) = kind.attention().expect("validated config");
                edges = Some(build_edge_list(g, ppr, mode)?);
            }
            Architecture::Appnp { .. } => operator = Some(Arc::new(normalized_adjacency(g))),
            Architecture::PprGo { .. } => {
                operator = Some(Arc::new(ppr_operator(ppr.expect("pprgo needs ppr"))));
            }
        }
        Ok(GraphContext {
            features,
            edges,
            operator,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.shape().0
    }
}

/// Logits plus the tape handles of every parameter, in [`Model::names`] order.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    pub params: Vec<Var>,
}

/// A configured network with its named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

fn initial_params<T: Real>(config: &ModelConfig) -> Vec<(String, Tensor<T>)> {
    match &config.arch {
        Architecture::Attention { layers } => layers
            .iter()
            .enumerate()
            .flat_map(|(i, spec)| init_layer::<T>(spec, i, config.seed))
            .collect(),
        Architecture::Appnp { mlp, .. } | Architecture::PprGo { mlp } => MlpParams::<T>::init(mlp, config.seed)
            .layers
            .into_iter()
            .enumerate()
            .flat_map(|(k, (w, b))| {
                let [wn, bn] = mlp_names(k);
                [(wn, w), (bn, b)]
            })
            .collect(),
    }
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (names, params) = initial_params::<T>(&config).into_iter().unzip();
        Ok(Model { config, names, params })
    }

    /// Rebuild a model from stored parameters; names and shapes must match a
    /// fresh model of the same config.
    pub fn from_params(config: ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self, ModelError> {
        let fresh = Self::new(config)?;
        if named.len() != fresh.names.len() {
            return Err(ModelError::Params(format!(
                "expected {} tensors, got {}",
                fresh.names.len(),
                named.len()
            )));
        }
        for ((name, t), (fname, ft)) in named.iter().zip(fresh.names.iter().zip(&fresh.params)) {
            if name != fname || t.shape() != ft.shape() {
                return Err(ModelError::Params(format!(
                    "{name} {:?} where {fname} {:?} was expected",
                    t.shape(),
                    ft.shape()
                )));
            }
        }
        let (names, params) = named.into_iter().unzip();
        Ok(Model {
            config: fresh.config,
            names,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.params[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }

    /// Sets every parameter entry that multiplies a PPR value to zero.
    pub fn zero_ppr_channel(&mut self) {
        let Architecture::Attention { layers } = &self.config.arch else {
            return;
        };
        if !layers.first().is_some_and(|l| l.variant.uses_ppr()) {
            return;
        }
        let mut k = 0;
        for spec in layers {
            for _ in 0..spec.heads {
                let (w, a) = (k, k + 1);
                if spec.variant.is_v2() {
                    let last = self.params[w].rows() - 1;
                    self.params[w].row_mut(last).fill(T::zero());
                } else {
                    let n = self.params[a].len();
                    self.params[a].data_mut()[n - 1] = T::zero();
                }
                k += 2;
            }
        }
    }

    /// Records the forward pass on `tape`. Parameters enter as trainable
    /// leaves; dropout is active only when `training` is set.
    pub fn forward<R: RngCore>(
        &self,
        tape: &mut Tape<T>,
        ctx: &GraphContext<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward, ModelError> {
        let params = self
            .params
            .iter()
            .map(|p| tape.param(p.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let logits = self.forward_with(tape, &params, ctx, training, rng)?;
        Ok(Forward { logits, params })
    }

    /// Forward pass with caller-provided parameter handles, which must follow
    /// [`Model::names`] order and shapes.
    pub fn forward_with<R: RngCore>(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        ctx: &GraphContext<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        if params.len() != self.params.len() {
            return Err(ModelError::Params(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if ctx.features.shape().1 != self.config.input_dim() {
            return Err(ModelError::Config(format!(
                "model expects {} input features, graph has {}",
                self.config.input_dim(),
                ctx.features.shape().1
            )));
        }
        let x = LayerInput::Sparse(ctx.features.clone());
        let mut dropout = DropoutCtx {
            rate: self.config.dropout,
            training,
            rng,
        };
        let missing = || ModelError::PrecomputeRequired(self.config.kind);
        let logits = match &self.config.arch {
            Architecture::Attention { layers } => {
                let edges = ctx.edges.as_ref().ok_or_else(missing)?;
                let mut h = x;
                let mut k = 0;
                for spec in layers {
                    let heads: Vec<HeadVars> = (0..spec.heads)
                        .map(|j| HeadVars {
                            w: params[k + 2 * j],
                            a: params[k + 2 * j + 1],
                        })
                        .collect();
                    k += 2 * spec.heads;
                    h = LayerInput::Dense(layer_forward_input(tape, spec, &heads, h, edges, &mut dropout)?);
                }
                match h {
                    LayerInput::Dense(v) => v,
                    LayerInput::Sparse(_) => return Err(ModelError::Config("no attention layers".into())),
                }
            }
            Architecture::Appnp { alpha, steps, .. } => {
                let adj = ctx.operator.as_ref().ok_or_else(missing)?;
                let mlp: Vec<(Var, Var)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
                appnp_forward(tape, &mlp, x, adj, *alpha, *steps, &mut dropout)?
            }
            Architecture::PprGo { .. } => {
                let ppr = ctx.operator.as_ref().ok_or_else(missing)?;
                let mlp: Vec<(Var, Var)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
                pprgo_forward(tape, &mlp, ppr, x, &mut dropout)?
            }
        };
        Ok(logits)
    }
}
