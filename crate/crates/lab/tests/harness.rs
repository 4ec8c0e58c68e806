mod common;

use pprgat_core::autodiff::Tensor;
use pprgat_core::metrics::{accuracy, micro_f1, F1Counts};
use pprgat_core::models::{InductiveShape, ModelConfig, ModelError, ModelKind};
use pprgat_core::ppr::PprConfig;
use pprgat_lab::harness::{
    evaluate_model, evaluate_run, load_run, preset, replay_monitor, save_run, train, EarlyStopping, Monitor, Part,
    PprSet, StopState, TrainConfig, TrainError,
};
use proptest::prelude::*;

fn ppr_config() -> PprConfig {
    PprConfig {
        alpha: 0.25,
        epsilon: 1e-4,
        top_k: 32,
        threads: 2,
    }
}

fn short(ds: &pprgat_core::graph::Dataset, seed: u64, max_epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        patience,
        ..TrainConfig::for_dataset(ds, seed)
    }
}

#[test]
fn patience_counts_from_the_last_improvement() {
    let mut values: Vec<f64> = (1..=5).map(|e| 1.0 / e as f64).collect();
    values.extend(std::iter::repeat(1.0).take(500));
    assert_eq!(replay_monitor(Monitor::ValLoss, 100, 100_000, &values), (5, 105));
}

#[test]
fn strictly_improving_monitor_runs_to_max_epochs() {
    let values: Vec<f64> = (0..400).map(|e| 10.0 - e as f64 * 1e-3).collect();
    assert_eq!(replay_monitor(Monitor::ValLoss, 100, 300, &values), (300, 300));
}

#[test]
fn equal_values_are_not_improvements() {
    let values = vec![0.5; 300];
    assert_eq!(replay_monitor(Monitor::ValLoss, 100, 100_000, &values), (1, 101));
    assert_eq!(replay_monitor(Monitor::ValMicroF1, 100, 100_000, &values), (1, 101));
}

#[test]
fn micro_f1_monitor_maximizes() {
    let mut es = EarlyStopping::new(Monitor::ValMicroF1, 2);
    assert_eq!(es.observe(1, 0.3), StopState::Improved);
    assert_eq!(es.observe(2, 0.5), StopState::Improved);
    assert_eq!(es.observe(3, 0.4), StopState::Waiting);
    assert_eq!(es.observe(4, 0.5), StopState::Stop);
    assert_eq!((es.best_epoch(), es.best_value()), (Some(2), Some(0.5)));
}

proptest! {
    #[test]
    fn best_epoch_holds_the_first_extremum(values in prop::collection::vec(0.0f64..1.0, 1..400), patience in 1usize..60) {
        let (best, stop) = replay_monitor(Monitor::ValLoss, patience, 100_000, &values);
        let seen = &values[..stop];
        let min = seen.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(best, seen.iter().position(|&v| v == min).unwrap() + 1);
        prop_assert!(stop == values.len() || stop - best == patience);
    }
}

#[test]
fn accuracy_examples() {
    let labels = [2u32, 0, 1];
    let mut one_hot = Tensor::<f32>::zeros(3, 3);
    for (i, &c) in labels.iter().enumerate() {
        one_hot.set(i, c as usize, 1.0);
    }
    assert_eq!(accuracy(&one_hot, &labels, &[0, 1, 2]).unwrap(), 1.0);
    let wrong = [0u32, 1, 2];
    assert_eq!(accuracy(&one_hot, &wrong, &[0, 1, 2]).unwrap(), 0.0);
}

#[test]
fn micro_f1_examples() {
    // TP=2, FP=1, FN=1
    let pred = [1u8, 1, 1, 0, 0];
    let truth = [1u8, 1, 0, 1, 0];
    assert!((micro_f1(&pred, &truth).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let counts = F1Counts { tp: 3, fp: 1, fn_: 2 };
    assert!((counts.micro_f1() - 6.0 / 9.0).abs() < 1e-15);
    assert_eq!(micro_f1(&truth, &truth).unwrap(), 1.0);
    assert_eq!(micro_f1(&[0, 0, 0], &[1, 1, 1]).unwrap(), 0.0);
    assert!(micro_f1(&[2], &[1]).is_err());
}

#[test]
fn gat_learns_planted_partition_and_run_dir_reproduces() {
    let ds = common::planted_partition(1);
    let cfg = preset(ModelKind::Gat, &ds, "planted", InductiveShape::reduced(), 0);
    let tc = short(&ds, 0, 150, 30);
    let ppr = PprSet::none(&ds);
    let run = train(&cfg, &ds, "planted", &tc, &ppr, |_| {}).unwrap();
    let rec = &run.record;
    assert_eq!(rec.epochs.len(), rec.stop_epoch);
    let best = rec
        .epochs
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .unwrap();
    assert_eq!(best.epoch, rec.best_epoch);
    assert!(rec.test_metric > 0.8, "test accuracy {}", rec.test_metric);

    let dir = tempfile::tempdir().unwrap();
    save_run(&run, dir.path()).unwrap();
    let (loaded, model) = load_run(dir.path()).unwrap();
    assert_eq!(&loaded, rec);
    assert_eq!(model, run.model);
    assert_eq!(evaluate_run(dir.path(), &ds, &ppr, Part::Test).unwrap(), rec.test_metric);
    assert_eq!(evaluate_model(&run.model, &ds, &tc, &ppr, Part::Test).unwrap(), rec.test_metric);
}

#[test]
fn same_seed_gives_identical_records() {
    let ds = common::planted_partition(2);
    let ppr = PprSet::compute(&ds, &ppr_config()).unwrap();
    let cfg = preset(ModelKind::PprGat, &ds, "planted", InductiveShape::reduced(), 3);
    let tc = short(&ds, 3, 20, 100);
    let a = train(&cfg, &ds, "planted", &tc, &ppr, |_| {}).unwrap();
    let b = train(&cfg, &ds, "planted", &tc, &ppr, |_| {}).unwrap();
    assert_eq!(a.record.epochs, b.record.epochs);
    assert_eq!(a.model, b.model);
    assert_eq!(a.record.ppr_fingerprint.len(), 1);
}

#[test]
fn ppr_models_require_a_matrix() {
    let ds = common::planted_partition(1);
    let cfg = preset(ModelKind::PprGat, &ds, "planted", InductiveShape::reduced(), 0);
    let err = train(&cfg, &ds, "planted", &short(&ds, 0, 5, 5), &PprSet::none(&ds), |_| {}).unwrap_err();
    assert!(matches!(err, TrainError::Model(ModelError::PrecomputeRequired(ModelKind::PprGat))));
    assert!(err.is_user_error());
}

#[test]
fn divergence_reports_the_epoch() {
    let ds = common::planted_partition(1);
    let mut cfg = preset(ModelKind::Gat, &ds, "planted", InductiveShape::reduced(), 0);
    cfg.optimizer.lr = 1e38;
    let err = train(&cfg, &ds, "planted", &short(&ds, 0, 50, 50), &PprSet::none(&ds), |_| {}).unwrap_err();
    match err {
        TrainError::Divergence { epoch, .. } => assert!(epoch <= 3, "epoch {epoch}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn mismatched_monitor_is_rejected() {
    let ds = common::planted_partition(1);
    let cfg = preset(ModelKind::Gat, &ds, "planted", InductiveShape::reduced(), 0);
    let tc = TrainConfig {
        monitor: Monitor::ValMicroF1,
        ..short(&ds, 0, 5, 5)
    };
    assert!(matches!(train(&cfg, &ds, "planted", &tc, &PprSet::none(&ds), |_| {}), Err(TrainError::Config(_))));
}

#[test]
fn inductive_pipeline_uses_per_graph_caches() {
    let ds = common::small_inductive(4);
    let computed = PprSet::compute(&ds, &ppr_config()).unwrap();
    let cache = tempfile::tempdir().unwrap();
    computed.save(&ds, cache.path()).unwrap();
    let ppr = PprSet::load(&ds, cache.path(), &ppr_config()).unwrap();
    assert_eq!(ppr.matrices.len(), 8);
    for (a, b) in ppr.matrices.iter().zip(&computed.matrices) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        assert_eq!((&a.rows, a.fingerprint), (&b.rows, b.fingerprint));
    }

    let shape = InductiveShape {
        hidden_layers: 1,
        heads: 2,
        features: 16,
        output_heads: 2,
    };
    let cfg: ModelConfig = preset(ModelKind::PprGatLocal, &ds, "small", shape, 0);
    let tc = short(&ds, 0, 200, 50);
    assert_eq!(tc.monitor, Monitor::ValMicroF1);
    let run = train(&cfg, &ds, "small", &tc, &ppr, |_| {}).unwrap();
    let rec = &run.record;
    assert_eq!(rec.metric, "micro_f1");
    assert_eq!(rec.ppr_fingerprint.len(), 8);
    let best = rec
        .epochs
        .iter()
        .max_by(|a, b| a.val_metric.total_cmp(&b.val_metric).then(b.epoch.cmp(&a.epoch)))
        .unwrap();
    assert_eq!(best.epoch, rec.best_epoch);
    assert!(rec.test_metric > 0.7, "test micro-F1 {}", rec.test_metric);

    let dir = tempfile::tempdir().unwrap();
    save_run(&run, dir.path()).unwrap();
    assert_eq!(evaluate_run(dir.path(), &ds, &ppr, Part::Test).unwrap(), rec.test_metric);
}

