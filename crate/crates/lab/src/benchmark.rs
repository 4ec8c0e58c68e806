//! Repeated runs over seeds and the results table.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pprgat_core::graph::Dataset;
use pprgat_core::models::{ModelConfig, ModelKind};

use crate::harness::{save_run, train, PprSet, TrainConfig, TrainError};

/// Test metrics of one model over consecutive seeds, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub dataset: String,
    pub seeds: Vec<u64>,
    /// `None` marks a failed run.
    pub values: Vec<Option<f64>>,
}

/// Rounds to one decimal, the precision the results table reports.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ResultRow {
    /// Percent values as reported, rounded to one decimal.
    pub fn reported(&self) -> Vec<f64> {
        self.values.iter().flatten().map(|&v| round1(v)).collect()
    }

    /// Mean and std of the reported per-seed values, so the CSV is
    /// internally consistent.
    pub fn summary(&self) -> (f64, f64) {
        mean_std(&self.reported())
    }

    /// Mean of the unrounded values.
    pub fn exact_mean(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().flatten().copied().collect();
        mean_std(&v).0
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let runs = rows.iter().map(|r| r.seeds.len()).max().unwrap_or(0);
    let mut out = String::from("model,dataset,runs,mean,std");
    let seeds = rows.first().map(|r| r.seeds.clone()).unwrap_or_default();
    for k in 0..runs {
        let _ = write!(out, ",seed{}", seeds.get(k).copied().unwrap_or(k as u64));
    }
    out.push('\n');
    for r in rows {
        let (mean, std) = r.summary();
        let _ = write!(out, "{},{},{},{:.1},{:.1}", r.model, r.dataset, r.seeds.len(), mean, std);
        for v in &r.values {
            match v {
                Some(v) => {
                    let _ = write!(out, ",{:.1}", round1(*v));
                }
                None => out.push_str(",failed"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, results_csv(rows))
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub models: Vec<ModelKind>,
    pub runs: usize,
    pub base_seed: u64,
    pub workers: usize,
    /// Run directories go to `<out>/<model>/seed<k>` when set.
    pub out: Option<PathBuf>,
}

/// Error of one (model, seed) cell.
#[derive(Debug)]
pub struct CellFailure {
    pub model: ModelKind,
    pub seed: u64,
    pub error: TrainError,
}

/// Trains every (model, seed) cell on a pool of `workers` threads. A failed
/// cell is reported and marked in its row; the other cells still run.
pub fn benchmark(
    ds: &Dataset,
    dataset_name: &str,
    cfg: &BenchmarkConfig,
    model_config: impl Fn(ModelKind, u64) -> ModelConfig + Sync,
    train_config: impl Fn(u64) -> TrainConfig + Sync,
    ppr: &PprSet,
) -> (Vec<ResultRow>, Vec<CellFailure>) {
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|k| cfg.base_seed + k).collect();
    let cells: Vec<(usize, usize)> = (0..cfg.models.len())
        .flat_map(|m| (0..seeds.len()).map(move |s| (m, s)))
        .collect();
    let results: Vec<Mutex<Option<Result<f64, TrainError>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.clamp(1, cells.len().max(1)) {
            scope.spawn(|| loop {
                let c = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(m, s)) = cells.get(c) else { break };
                let (kind, seed) = (cfg.models[m], seeds[s]);
                let outcome = train(&model_config(kind, seed), ds, dataset_name, &train_config(seed), ppr, |_| {})
                    .and_then(|run| {
                        if let Some(out) = &cfg.out {
                            save_run(&run, &out.join(kind.name()).join(format!("seed{seed}")))?;
                        }
                        Ok(run.record.test_metric * 100.0)
                    });
                *results[c].lock().unwrap() = Some(outcome);
            });
        }
    });
    let mut rows: Vec<ResultRow> = cfg
        .models
        .iter()
        .map(|k| ResultRow {
            model: k.name().to_string(),
            dataset: dataset_name.to_string(),
            seeds: seeds.clone(),
            values: vec![None; seeds.len()],
        })
        .collect();
    let mut failures = Vec::new();
    for (&(m, s), slot) in cells.iter().zip(results) {
        match slot.into_inner().unwrap().expect("every cell ran") {
            Ok(v) => rows[m].values[s] = Some(v),
            Err(error) => failures.push(CellFailure {
                model: cfg.models[m],
                seed: seeds[s],
                error,
            }),
        }
    }
    (rows, failures)
}
