//! Full-batch training with early stopping, evaluation and run directories.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pprgat_core::autodiff::{Adam, Tape, Tensor, TensorError};
use pprgat_core::graph::{Adjacency, CsrGraph, Dataset, Labels, Split, Task};
use pprgat_core::metrics::{accuracy, threshold_logits, F1Counts, MetricError};
use pprgat_core::models::{GraphContext, InductiveShape, Model, ModelConfig, ModelError, ModelKind};
use pprgat_core::ppr::{PprConfig, PprError, SparsePprMatrix};
use pprgat_core::rng::{dropout_rng, shuffle, shuffle_rng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::ppr_cache::{cache_file_name, compute_ppr_matrix, load_ppr_for, save_ppr, CacheError};

pub const RECORD: &str = "record.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const DEFAULT_PATIENCE: usize = 100;
pub const DEFAULT_MAX_EPOCHS: usize = 100_000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Ppr(#[from] PprError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training diverged at epoch {epoch}: {source}")]
    Divergence {
        epoch: usize,
        #[source]
        source: TensorError,
    },
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Record { path: PathBuf, msg: String },
}

impl TrainError {
    /// Errors caused by inputs the caller controls, as opposed to failures
    /// inside the engine.
    pub fn is_user_error(&self) -> bool {
        match self {
            TrainError::Model(e) => !matches!(e, ModelError::Tensor(_) | ModelError::Attention(_)),
            TrainError::Cache(_) | TrainError::Config(_) | TrainError::Record { .. } | TrainError::Io { .. } => true,
            TrainError::Checkpoint(_) => true,
            TrainError::Ppr(e) => matches!(e, PprError::InvalidConfig(_)),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValLoss,
    ValMicroF1,
}

impl Monitor {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Multiclass => Monitor::ValLoss,
            Task::Multilabel => Monitor::ValMicroF1,
        }
    }

    /// Strict improvement, no minimum delta.
    pub fn improves(self, candidate: f64, best: f64) -> bool {
        match self {
            Monitor::ValLoss => candidate < best,
            Monitor::ValMicroF1 => candidate > best,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub monitor: Monitor,
    pub seed: u64,
    /// Scale each feature row to sum 1 before training.
    pub normalize_features: bool,
}

impl TrainConfig {
    /// Defaults for `ds`: val loss and row-normalized features for
    /// multiclass data, val micro-F1 and raw features for multilabel data.
    pub fn for_dataset(ds: &Dataset, seed: u64) -> Self {
        TrainConfig {
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            monitor: Monitor::for_task(ds.task),
            seed,
            normalize_features: ds.task == Task::Multiclass,
        }
    }

    pub fn validate(&self, task: Task) -> Result<(), TrainError> {
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be at least 1".into()));
        }
        if self.monitor != Monitor::for_task(task) {
            return Err(TrainError::Config(format!(
                "monitor {:?} does not match a {task:?} task",
                self.monitor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopState {
    Improved,
    Waiting,
    Stop,
}

/// Patience counter over a monitored value. Epochs are numbered from 1.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    monitor: Monitor,
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(monitor: Monitor, patience: usize) -> Self {
        EarlyStopping {
            monitor,
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopState {
        let improved = match self.best {
            None => true,
            Some((_, best)) => self.monitor.improves(value, best),
        };
        if improved {
            self.best = Some((epoch, value));
            self.since_best = 0;
            StopState::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopState::Stop
            } else {
                StopState::Waiting
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.map(|(_, v)| v)
    }
}

/// Feeds `values` (epoch 1 first) through early stopping and returns
/// `(best_epoch, stop_epoch)`. The run ends at the stop signal, at
/// `max_epochs`, or when the sequence runs out.
pub fn replay_monitor(monitor: Monitor, patience: usize, max_epochs: usize, values: &[f64]) -> (usize, usize) {
    let mut es = EarlyStopping::new(monitor, patience);
    let mut last = 0;
    for (i, &v) in values.iter().enumerate().take(max_epochs) {
        last = i + 1;
        if es.observe(last, v) == StopState::Stop {
            break;
        }
    }
    (es.best_epoch().unwrap_or(0), last)
}

/// One optional PPR matrix per graph of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PprSet {
    pub matrices: Vec<Option<SparsePprMatrix>>,
}

impl PprSet {
    pub fn none(ds: &Dataset) -> Self {
        PprSet {
            matrices: vec![None; ds.graphs.len()],
        }
    }

    pub fn compute(ds: &Dataset, cfg: &PprConfig) -> Result<Self, PprError> {
        let matrices = ds
            .graphs
            .iter()
            .map(|g| compute_ppr_matrix(g, cfg).map(Some))
            .collect::<Result<_, _>>()?;
        Ok(PprSet { matrices })
    }

    /// Transductive datasets use one cache file at `path`; inductive datasets
    /// use a directory of per-graph files named by graph fingerprint.
    pub fn load(ds: &Dataset, path: &Path, cfg: &PprConfig) -> Result<Self, CacheError> {
        let matrices = if ds.is_inductive() {
            ds.graphs
                .iter()
                .map(|g| load_ppr_for(path.join(cache_file_name(g)), g, cfg).map(Some))
                .collect::<Result<_, _>>()?
        } else {
            vec![Some(load_ppr_for(path, &ds.graphs[0], cfg)?)]
        };
        Ok(PprSet { matrices })
    }

    pub fn save(&self, ds: &Dataset, path: &Path) -> Result<(), CacheError> {
        for (g, m) in ds.graphs.iter().zip(&self.matrices) {
            if let Some(m) = m {
                if ds.is_inductive() {
                    save_ppr(m, path.join(cache_file_name(g)))?;
                } else {
                    save_ppr(m, path)?;
                }
            }
        }
        Ok(())
    }

    pub fn fingerprints(&self) -> Vec<String> {
        self.matrices.iter().flatten().map(|m| m.fingerprint.to_hex()).collect()
    }

    pub fn get(&self, gid: usize) -> Option<&SparsePprMatrix> {
        self.matrices.get(gid).and_then(Option::as_ref)
    }
}

/// Model configuration used by the CLI and the benchmarks: the transductive
/// layout for single-graph data (Pubmed: 8 output heads, weight decay 1e-3),
/// the inductive layout with `shape` otherwise.
pub fn preset(kind: ModelKind, ds: &Dataset, name: &str, shape: InductiveShape, seed: u64) -> ModelConfig {
    let nf = ds.num_features();
    let nc = ds.num_classes;
    let mut cfg = if ds.is_inductive() {
        ModelConfig::inductive(kind, nf, nc, shape)
    } else if name.eq_ignore_ascii_case("pubmed") {
        let mut c = ModelConfig::transductive(kind, nf, nc, 8);
        c.optimizer.weight_decay = 1e-3;
        c
    } else {
        ModelConfig::transductive(kind, nf, nc, 1)
    };
    cfg.seed = seed;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: String,
    /// `accuracy` or `micro_f1`.
    pub metric: String,
    pub epochs: Vec<EpochRow>,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub test_metric: f64,
    pub wall_clock_sec: f64,
    /// One entry per graph with a PPR matrix.
    pub ppr_fingerprint: Vec<String>,
    pub ppr_cache: Option<String>,
}

impl RunRecord {
    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        let path = dir.join(RECORD);
        fs::create_dir_all(dir).map_err(|source| TrainError::Io {
            path: dir.into(),
            source,
        })?;
        let json = serde_json::to_string_pretty(self).expect("record serializes");
        fs::write(&path, json).map_err(|source| TrainError::Io { path, source })
    }

    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        let path = dir.join(RECORD);
        let text = fs::read_to_string(&path).map_err(|source| TrainError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| TrainError::Record {
            path,
            msg: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    fn ids(self, split: &Split) -> &[u32] {
        match self {
            Part::Train => split.train(),
            Part::Val => split.val(),
            Part::Test => split.test(),
        }
    }
}

impl std::str::FromStr for Part {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Part::Train),
            "val" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            _ => Err(format!("unknown split {s:?} (train, val, test)")),
        }
    }
}

/// Graphs and forward-pass contexts prepared once per run.
struct Prepared<'d> {
    ds: &'d Dataset,
    graphs: Vec<CsrGraph>,
    ctxs: Vec<GraphContext<f32>>,
}

impl<'d> Prepared<'d> {
    fn new(ds: &'d Dataset, config: &ModelConfig, train: &TrainConfig, ppr: &PprSet) -> Result<Self, TrainError> {
        let graphs: Vec<CsrGraph> = ds
            .graphs
            .iter()
            .map(|g| {
                if train.normalize_features {
                    g.with_row_normalized_features()
                } else {
                    g.clone()
                }
            })
            .collect();
        let ctxs = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| GraphContext::new(config, g, ppr.get(i)))
            .collect::<Result<_, _>>()?;
        Ok(Prepared { ds, graphs, ctxs })
    }

    /// Loss and metric on one part of the split, dropout off.
    fn score(&self, model: &Model<f32>, part: Part) -> Result<(f64, f64), TrainError> {
        let ids = part.ids(&self.ds.split);
        let mut rng = dropout_rng(0);
        if !self.ds.is_inductive() {
            let mut tape = Tape::new();
            let f = model.forward(&mut tape, &self.ctxs[0], false, &mut rng)?;
            let Labels::Multiclass(labels) = self.graphs[0].labels() else {
                return Err(TrainError::Config("transductive training needs multiclass labels".into()));
            };
            let loss = tape.softmax_cross_entropy(f.logits, labels, ids)?;
            let acc = accuracy(tape.value(f.logits), labels, ids)?;
            return Ok((tape.value(loss).get(0, 0) as f64, acc));
        }
        let mut counts = F1Counts::default();
        let mut loss_sum = 0.0;
        let mut nodes = 0usize;
        for &gid in ids {
            let gid = gid as usize;
            let (loss, logits, truth) = self.graph_loss(model, gid, false, &mut rng)?;
            let n = self.graphs[gid].num_nodes();
            loss_sum += loss * n as f64;
            nodes += n;
            counts.add(&threshold_logits(&logits), truth)?;
        }
        Ok((loss_sum / nodes.max(1) as f64, counts.micro_f1()))
    }

    /// BCE over every node of inductive graph `gid`.
    fn graph_loss(
        &self,
        model: &Model<f32>,
        gid: usize,
        training: bool,
        rng: &mut pprgat_core::rng::Rng,
    ) -> Result<(f64, Tensor<f32>, &[u8]), TrainError> {
        let g = &self.graphs[gid];
        let Labels::Multilabel { data, .. } = g.labels() else {
            return Err(TrainError::Config("inductive training needs multilabel labels".into()));
        };
        let mut tape = Tape::new();
        let f = model.forward(&mut tape, &self.ctxs[gid], training, rng)?;
        let all: Vec<u32> = (0..g.num_nodes() as u32).collect();
        let loss = tape.bce_with_logits(f.logits, data, &all)?;
        Ok((tape.value(loss).get(0, 0) as f64, tape.value(f.logits).clone(), data))
    }
}

fn diverged(epoch: usize) -> impl Fn(TrainError) -> TrainError {
    move |e| match e {
        TrainError::Tensor(source @ TensorError::NonFinite { .. })
        | TrainError::Model(ModelError::Tensor(source @ TensorError::NonFinite { .. })) => {
            TrainError::Divergence { epoch, source }
        }
        TrainError::Model(ModelError::Attention(pprgat_core::attention::AttentionError::Tensor(
            source @ TensorError::NonFinite { .. },
        ))) => TrainError::Divergence { epoch, source },
        other => other,
    }
}

/// One optimizer step on graph `gid`: the train nodes of a transductive
/// graph, every node of an inductive one.
fn step(
    prep: &Prepared,
    model: &mut Model<f32>,
    adam: &mut Adam<f32>,
    gid: usize,
    rng: &mut pprgat_core::rng::Rng,
) -> Result<f64, TrainError> {
    let g = &prep.graphs[gid];
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, &prep.ctxs[gid], true, rng)?;
    let loss = match g.labels() {
        Labels::Multiclass(labels) => tape.softmax_cross_entropy(f.logits, labels, prep.ds.split.train())?,
        Labels::Multilabel { data, .. } => {
            let all: Vec<u32> = (0..g.num_nodes() as u32).collect();
            tape.bce_with_logits(f.logits, data, &all)?
        }
    };
    let value = tape.value(loss).get(0, 0) as f64;
    let grads = tape.backward(loss)?;
    let grads: Vec<Tensor<f32>> = f
        .params
        .iter()
        .zip(model.params())
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect();
    adam.step(model.params_mut(), &grads)?;
    Ok(value)
}

/// Result of [`train`]: the record plus the best-epoch model.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub model: Model<f32>,
}

/// Trains until patience runs out, restores the best-monitor parameters and
/// evaluates the test split once with them.
pub fn train(
    config: &ModelConfig,
    ds: &Dataset,
    dataset_name: &str,
    tc: &TrainConfig,
    ppr: &PprSet,
    mut on_epoch: impl FnMut(&EpochRow),
) -> Result<TrainedRun, TrainError> {
    let start = Instant::now();
    tc.validate(ds.task)?;
    let mut config = config.clone();
    config.seed = tc.seed;
    crate::alloc_tuning::tune();
    let prep = Prepared::new(ds, &config, tc, ppr)?;
    let mut model = Model::<f32>::new(config.clone())?;
    let mut adam = Adam::new(config.optimizer, model.params());
    let mut rng = dropout_rng(tc.seed);
    let mut order: Vec<usize> = ds.split.train().iter().map(|&g| g as usize).collect();
    if ds.is_inductive() {
        shuffle(&mut shuffle_rng(tc.seed), &mut order);
    } else {
        order = vec![0];
    }
    let mut es = EarlyStopping::new(tc.monitor, tc.patience);
    let mut best_params = model.params().to_vec();
    let mut epochs = Vec::new();
    for epoch in 1..=tc.max_epochs {
        let mut train_loss = 0.0;
        for &gid in &order {
            train_loss += step(&prep, &mut model, &mut adam, gid, &mut rng).map_err(diverged(epoch))?;
        }
        train_loss /= order.len() as f64;
        let (val_loss, val_metric) = prep.score(&model, Part::Val).map_err(diverged(epoch))?;
        let row = EpochRow {
            epoch,
            train_loss,
            val_loss,
            val_metric,
        };
        on_epoch(&row);
        epochs.push(row);
        let monitored = match tc.monitor {
            Monitor::ValLoss => val_loss,
            Monitor::ValMicroF1 => val_metric,
        };
        match es.observe(epoch, monitored) {
            StopState::Improved => best_params.clone_from_slice(model.params()),
            StopState::Waiting => {}
            StopState::Stop => break,
        }
    }
    model.params_mut().clone_from_slice(&best_params);
    let (_, test_metric) = prep.score(&model, Part::Test)?;
    let record = RunRecord {
        model: config,
        train: tc.clone(),
        dataset: dataset_name.to_string(),
        metric: metric_name(ds.task).to_string(),
        stop_epoch: epochs.len(),
        epochs,
        best_epoch: es.best_epoch().unwrap_or(0),
        test_metric,
        wall_clock_sec: start.elapsed().as_secs_f64(),
        ppr_fingerprint: ppr.fingerprints(),
        ppr_cache: None,
    };
    Ok(TrainedRun { record, model })
}

pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Multiclass => "accuracy",
        Task::Multilabel => "micro_f1",
    }
}

/// Writes `record.json` and the checkpoint into `dir`.
pub fn save_run(run: &TrainedRun, dir: &Path) -> Result<(), TrainError> {
    run.record.save(dir)?;
    save_checkpoint(dir.join(CHECKPOINT_DIR), run.model.names(), run.model.params())?;
    Ok(())
}

/// Metric of `model` on one split part, computed exactly as during training.
pub fn evaluate_model(
    model: &Model<f32>,
    ds: &Dataset,
    tc: &TrainConfig,
    ppr: &PprSet,
    part: Part,
) -> Result<f64, TrainError> {
    let prep = Prepared::new(ds, model.config(), tc, ppr)?;
    Ok(prep.score(model, part)?.1)
}

/// Loads the model stored in a run directory.
pub fn load_run(dir: &Path) -> Result<(RunRecord, Model<f32>), TrainError> {
    let record = RunRecord::load(dir)?;
    let params = load_checkpoint(dir.join(CHECKPOINT_DIR))?;
    let model = Model::from_params(record.model.clone(), params)?;
    Ok((record, model))
}

/// Re-evaluates a run directory on `part`.
pub fn evaluate_run(dir: &Path, ds: &Dataset, ppr: &PprSet, part: Part) -> Result<f64, TrainError> {
    let (record, model) = load_run(dir)?;
    if model.config().input_dim() != ds.num_features() || model.config().output_dim() != ds.num_classes {
        return Err(TrainError::Config(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            model.config().input_dim(),
            model.config().output_dim(),
            ds.num_features(),
            ds.num_classes
        )));
    }
    evaluate_model(&model, ds, &record.train, ppr, part)
}
