mod common;

use common::checks::{small_config, tiny_basin};
use common::suites::{allreduce_gap, trajectory_gap};
use hydrogat::model::{init_state, model_forward};
use hydrogat::train::{checkpoint_load, checkpoint_save, epoch_schedule, train, Checkpoint, TrainConfig};
use hydrogat::Error;

fn quick(epochs: usize, workers: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        num_workers: workers,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn sharded_gradient_matches_full_batch() {
    for w in [2, 3, 4] {
        assert!(allreduce_gap(w) < 1e-10, "W={w}");
    }
}

#[test]
fn worker_count_does_not_change_the_trajectory() {
    let (gap, histories) = trajectory_gap(4, &[2, 3]);
    assert!(gap < 1e-8, "gap {gap:e}");
    assert!(histories);
}

#[test]
fn repeated_runs_are_identical() {
    let (g, ds) = tiny_basin();
    let model = small_config(6, 3);
    let a = train(&ds, &g, &model, &quick(3, 2)).unwrap();
    let b = train(&ds, &g, &model, &quick(3, 2)).unwrap();
    assert_eq!(a.last.bit_hash(), b.last.bit_hash());
    let losses = |o: &hydrogat::train::TrainOutcome| o.history.iter().map(|r| (r.train_loss, r.val_loss)).collect::<Vec<_>>();
    assert_eq!(losses(&a), losses(&b));
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let (g, ds) = tiny_basin();
    let model = small_config(6, 3);
    let config = TrainConfig {
        patience: 1,
        lr: 0.05,
        ..quick(40, 1)
    };
    let out = train(&ds, &g, &model, &config).unwrap();
    let best = out
        .history
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .unwrap();
    assert_eq!(best.epoch, out.best_epoch);
    if out.stopped_early {
        assert_eq!(out.history.len(), out.best_epoch + 1 + config.patience);
    } else {
        assert_eq!(out.history.len(), 40);
    }
    assert!(out.history.iter().all(|r| r.train_loss.is_finite() && r.val_loss.is_finite()));
}

#[test]
fn schedule_covers_every_window_once() {
    let config = quick(1, 1);
    for epoch in 0..3 {
        let mut seen: Vec<usize> = epoch_schedule(103, &config, epoch).into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..103).collect::<Vec<_>>());
    }
    assert_ne!(epoch_schedule(103, &config, 0), epoch_schedule(103, &config, 1));
}

#[test]
fn bad_configurations_are_rejected() {
    let (g, ds) = tiny_basin();
    let model = small_config(6, 3);
    for config in [
        TrainConfig { batch_size: 0, ..quick(1, 1) },
        TrainConfig { lr: -1.0, ..quick(1, 1) },
        quick(1, 100_000),
    ] {
        assert!(matches!(train(&ds, &g, &model, &config), Err(Error::InvalidInput(_))));
    }
    assert!(train(&ds, &g, &small_config(8, 3), &quick(1, 1)).is_err());
}

#[test]
fn checkpoint_reload_forecasts_bit_identically() {
    let (g, ds) = tiny_basin();
    let model = small_config(6, 3);
    let out = train(&ds, &g, &model, &quick(2, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ck = Checkpoint {
        state: out.best.clone(),
        norm: ds.norm,
        model: model.clone(),
        train: quick(2, 1),
        epoch: out.best_epoch,
        station_ids: vec!["a".into(); ds.num_targets()],
    };
    checkpoint_save(dir.path(), &ck).unwrap();
    let back = checkpoint_load(dir.path()).unwrap();
    assert_eq!(back, ck);
    for t in [0, 33, 120] {
        let s = ds.sample(t);
        let a = model_forward(&s, &g, &out.best, &model, false).unwrap().0;
        let b = model_forward(&s, &g, &back.state, &model, false).unwrap().0;
        assert_eq!(a, b);
    }
}

#[test]
fn checkpoint_with_wrong_layout_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_config(6, 3);
    let (_, ds) = tiny_basin();
    let ck = Checkpoint {
        state: init_state(&hydrogat::model::ModelConfig::with_width(16, 2, 6, 3), 0).unwrap(),
        norm: ds.norm,
        model,
        train: TrainConfig::default(),
        epoch: 0,
        station_ids: vec![],
    };
    checkpoint_save(dir.path(), &ck).unwrap();
    assert!(matches!(checkpoint_load(dir.path()), Err(Error::Checkpoint(_))));
    assert!(checkpoint_load(&dir.path().join("missing")).is_err());
}

#[test]
fn edited_manifest_is_a_checkpoint_error() {
    let (_, ds) = tiny_basin();
    let model = small_config(6, 3);
    let ck = Checkpoint {
        state: init_state(&model, 1).unwrap(),
        norm: ds.norm,
        model,
        train: TrainConfig::default(),
        epoch: 0,
        station_ids: vec![],
    };
    let edits: [fn(&mut serde_json::Value); 3] = [
        |m| m["version"] = 99.into(),
        |m| m["tensors"][0]["shape"][0] = 1000.into(),
        |m| m["tensors"][1]["offset"] = 1.into(),
    ];
    for edit in edits {
        let dir = tempfile::tempdir().unwrap();
        checkpoint_save(dir.path(), &ck).unwrap();
        let path = dir.path().join("params.json");
        let mut manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        edit(&mut manifest);
        std::fs::write(&path, manifest.to_string()).unwrap();
        assert!(matches!(checkpoint_load(dir.path()), Err(Error::Checkpoint(_))));
    }
}
