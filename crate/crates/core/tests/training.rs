//! Training-loop behavior: determinism, error paths, logging cadence.

use seqc_core::data::{synth_generate, Dataset, SplitTag};
use seqc_core::error::Error;
use seqc_core::model::{ArchConfig, Model, WaveNetConfig};
use seqc_core::rng;
use seqc_core::train::{save_checkpoint, train, TrainConfig};

fn tiny_dataset(seed: u64) -> Dataset {
    let mut ds = synth_generate(40, 256, 5000.0, seed).unwrap();
    ds.assign_split((0.7, 0.2, 0.1), seed + 1).unwrap();
    ds
}

fn tiny_config() -> ArchConfig {
    ArchConfig::Wavenet(WaveNetConfig {
        dilations: vec![1, 2, 4],
        filters: 4,
        kernel_size: 3,
        num_classes: 4,
        input_length: 256,
        ..WaveNetConfig::default()
    })
}

fn tiny_train_cfg() -> TrainConfig {
    TrainConfig {
        micro_batch: 8,
        accumulation: 2,
        max_epochs: 2,
        snapshot_every: 5,
        ..TrainConfig::wavenet()
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let ds = tiny_dataset(900);
    let run = || {
        let mut model = Model::<f32>::build(tiny_config(), &mut rng::stream(11)).unwrap();
        let mut lines = Vec::new();
        let outcome = train(&mut model, &ds, &tiny_train_cfg(), &mut |l| {
            lines.push(l.to_string())
        })
        .unwrap();
        (outcome, lines)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a.records, b.records);
    assert_eq!(la, lb);
    assert!(la.iter().any(|l| l.starts_with("snapshot ")));
    assert!(la.iter().filter(|l| l.starts_with("epoch=")).count() == 2);

    // checkpoint bytes are identical too
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    save_checkpoint(&a.best.model, &p1, Some(a.best.macro_f1), Some(a.best.epoch)).unwrap();
    save_checkpoint(&b.best.model, &p2, Some(b.best.macro_f1), Some(b.best.epoch)).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn missing_split_is_a_configuration_error() {
    let ds = synth_generate(40, 256, 5000.0, 1).unwrap(); // no split assigned
    let mut model = Model::<f32>::build(tiny_config(), &mut rng::stream(1)).unwrap();
    let err = train(&mut model, &ds, &tiny_train_cfg(), &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "got {err:?}");
}

#[test]
fn class_absent_from_train_split_is_rejected() {
    // craft a split where class 3 only appears in the test set
    let mut ds = synth_generate(10, 256, 5000.0, 2).unwrap();
    ds.assign_split((0.7, 0.2, 0.1), 3).unwrap();
    let split = ds.split.as_mut().unwrap();
    for (i, s) in ds.samples.iter().enumerate() {
        if s.label == 3 {
            split.tags[i] = SplitTag::Test;
        }
    }
    let mut model = Model::<f32>::build(tiny_config(), &mut rng::stream(4)).unwrap();
    let err = train(&mut model, &ds, &tiny_train_cfg(), &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "got {err:?}");
}

#[test]
fn records_carry_valid_metric_ranges() {
    let ds = tiny_dataset(901);
    let mut model = Model::<f32>::build(tiny_config(), &mut rng::stream(12)).unwrap();
    let outcome = train(&mut model, &ds, &tiny_train_cfg(), &mut |_| {}).unwrap();
    for r in &outcome.records {
        assert!((0.0..=1.0).contains(&r.train_accuracy));
        assert!((0.0..=1.0).contains(&r.val_accuracy));
        assert!((0.0..=1.0).contains(&r.val_auc));
        assert!((0.0..=1.0).contains(&r.macro_f1));
        assert!(r.val_loss >= 0.0);
    }
    // epoch 1 leaves the initial rate untouched (controller inactive)
    assert_eq!(outcome.records[0].dropout_rate_after, 0.20);
}
