use std::sync::{Arc, Barrier, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{allreduce_average, compute_bundle, evaluate_loss, GradientBundle};
use crate::data::{sequential_sampler, Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::BasinGraph;
use crate::model::{init_state, DropoutStream, ModelConfig, ModelGraphs, ModelState};
use crate::tensor::{AdamW, AdamWConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per synchronized step, summed over all workers.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub num_workers: usize,
    pub seed: u64,
    /// Visit the global batches in a seeded random order each epoch.
    pub shuffle: bool,
    /// Compare replica parameter hashes before every step.
    pub verify_replicas: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            lr: 0.01,
            weight_decay: 1e-4,
            patience: 5,
            num_workers: 1,
            seed: 0,
            shuffle: true,
            verify_replicas: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.num_workers == 0 || self.epochs == 0 {
            return Err(Error::invalid("epochs, batch_size and num_workers must be positive"));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("lr must be positive and weight_decay non-negative"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub best: ModelState,
    pub best_epoch: usize,
    pub last: ModelState,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub steps: usize,
    /// Replica hash comparisons performed (zero unless verifying).
    pub replica_checks: usize,
    /// Parameters after each epoch, when requested.
    pub snapshots: Vec<ModelState>,
}

/// Window ranges of each synchronized step in `epoch`.
pub fn epoch_schedule(num_windows: usize, config: &TrainConfig, epoch: usize) -> Vec<std::ops::Range<usize>> {
    let mut batches: Vec<_> = (0..num_windows)
        .step_by(config.batch_size)
        .map(|s| s..(s + config.batch_size).min(num_windows))
        .collect();
    if config.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        batches.shuffle(&mut rng);
    }
    batches
}

/// Worker `id`'s contiguous share of a global batch of `len` windows.
pub fn worker_share(len: usize, workers: usize, id: usize) -> Result<std::ops::Range<usize>> {
    if len >= workers {
        sequential_sampler(len, workers, id)
    } else if id < len {
        Ok(id..id + 1)
    } else {
        Ok(0..0)
    }
}

#[derive(Default)]
struct Control {
    stop: bool,
    error: Option<Error>,
}

struct Shared {
    barrier: Barrier,
    slots: Mutex<Vec<Option<GradientBundle>>>,
    hashes: Mutex<Vec<u64>>,
    reduced: Mutex<Option<Arc<GradientBundle>>>,
    control: Mutex<Control>,
}

struct Context<'a> {
    dataset: &'a Dataset,
    graphs: &'a ModelGraphs,
    model: &'a ModelConfig,
    config: &'a TrainConfig,
    train: &'a [usize],
    val: &'a [usize],
    snapshots: bool,
}

/// Data-parallel training from a seeded initialization.
pub fn train(dataset: &Dataset, graph: &BasinGraph, model: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    train_from(dataset, graph, model, config, init_state(model, config.seed)?, false)
}

/// As [`train`], from `initial` parameters, optionally keeping a snapshot
/// of the parameters after every epoch.
pub fn train_from(
    dataset: &Dataset,
    graph: &BasinGraph,
    model: &ModelConfig,
    config: &TrainConfig,
    initial: ModelState,
    snapshots: bool,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    if dataset.t_in != model.t_in || dataset.t_out != model.t_out {
        return Err(Error::invalid("dataset window lengths differ from the model configuration"));
    }
    let train = dataset.split_starts(Split::Train);
    let val = dataset.split_starts(Split::Validation);
    if train.len() < config.num_workers {
        return Err(Error::invalid(format!(
            "{} training windows cannot feed {} workers",
            train.len(),
            config.num_workers
        )));
    }
    if val.is_empty() {
        return Err(Error::invalid("validation split holds no complete window"));
    }
    let graphs = ModelGraphs::new(graph);
    let workers = config.num_workers;
    let shared = Shared {
        barrier: Barrier::new(workers),
        slots: Mutex::new(vec![None; workers]),
        hashes: Mutex::new(vec![0; workers]),
        reduced: Mutex::new(None),
        control: Mutex::new(Control::default()),
    };
    let ctx = Context {
        dataset,
        graphs: &graphs,
        model,
        config,
        train: &train,
        val: &val,
        snapshots,
    };
    log::info!(
        "train_windows={} val_windows={} workers={} batch_size={} params={}",
        train.len(),
        val.len(),
        workers,
        config.batch_size,
        initial.num_values()
    );
    let outcome = std::thread::scope(|scope| {
        let handles: Vec<_> = (1..workers)
            .map(|id| {
                let (ctx, shared, state) = (&ctx, &shared, initial.clone());
                scope.spawn(move || run_worker(id, ctx, shared, state))
            })
            .collect();
        let lead = run_worker(0, &ctx, &shared, initial.clone());
        for h in handles {
            h.join().expect("worker thread panicked");
        }
        lead
    });
    if let Some(err) = shared.control.into_inner().expect("control lock").error {
        return Err(err);
    }
    outcome.ok_or_else(|| Error::invalid("training produced no outcome"))
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().expect("poisoned training lock")
}

/// Runs one replica. Worker 0 reduces, validates and returns the outcome.
fn run_worker(id: usize, ctx: &Context, shared: &Shared, mut state: ModelState) -> Option<TrainOutcome> {
    let config = ctx.config;
    let workers = config.num_workers;
    let lead = id == 0;
    let mut opt = AdamW::new(config.optimizer(), &state);
    let mut history = Vec::new();
    let mut snapshots = Vec::new();
    let mut best = (f64::INFINITY, state.clone(), 0);
    let mut since_best = 0;
    let mut steps = 0;
    let mut checks = 0;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let (mut loss_sum, mut loss_count) = (0.0, 0usize);
        let stream = DropoutStream {
            seed: config.seed,
            epoch: epoch as u64,
            rate: ctx.model.dropout,
        };
        for (bi, range) in epoch_schedule(ctx.train.len(), config, epoch).into_iter().enumerate() {
            let window = &ctx.train[range];
            let bundle = worker_share(window.len(), workers, id)
                .and_then(|share| compute_bundle(ctx.dataset, ctx.graphs, &state, ctx.model, &window[share], Some(stream)));
            let bundle = bundle.unwrap_or_else(|e| {
                lock(&shared.control).error.get_or_insert(e);
                GradientBundle::empty(&state)
            });
            lock(&shared.slots)[id] = Some(bundle);
            if config.verify_replicas {
                lock(&shared.hashes)[id] = state.bit_hash();
            }
            shared.barrier.wait();

            if lead {
                let bundles: Vec<_> = lock(&shared.slots).iter_mut().map(|s| s.take().expect("deposited")).collect();
                let mut control = lock(&shared.control);
                if config.verify_replicas {
                    let hashes = lock(&shared.hashes);
                    checks += 1;
                    if hashes.iter().any(|&h| h != hashes[0]) {
                        control.error.get_or_insert(Error::Numerical {
                            epoch,
                            batch: bi,
                            detail: format!("replica parameters diverged: {hashes:?}"),
                        });
                    }
                }
                match allreduce_average(&bundles) {
                    Ok(r) if !r.loss_sum.is_finite() || !r.gradients.is_finite() => {
                        control.error.get_or_insert(Error::Numerical {
                            epoch,
                            batch: bi,
                            detail: format!("non-finite loss or gradient (loss sum {})", r.loss_sum),
                        });
                    }
                    Ok(r) => *lock(&shared.reduced) = Some(Arc::new(r)),
                    Err(e) => {
                        control.error.get_or_insert(e);
                    }
                }
            }
            shared.barrier.wait();

            if lock(&shared.control).error.is_some() {
                return None;
            }
            let reduced = lock(&shared.reduced).clone().expect("reduced gradient");
            if let Err(e) = opt.step(&mut state, &reduced.gradients) {
                // Identical on every replica, so every worker returns here.
                if lead {
                    lock(&shared.control).error.get_or_insert(e);
                }
                return None;
            }
            loss_sum += reduced.loss_sum;
            loss_count += reduced.sample_count;
            steps += 1;
        }

        if lead {
            let val_loss = evaluate_loss(ctx.dataset, ctx.graphs, &state, ctx.model, ctx.val, 64);
            let mut control = lock(&shared.control);
            match val_loss {
                Ok(v) if v.is_finite() => {
                    let record = EpochRecord {
                        epoch,
                        train_loss: loss_sum / loss_count.max(1) as f64,
                        val_loss: v,
                        seconds: started.elapsed().as_secs_f64(),
                    };
                    log::info!(
                        "epoch={} train_loss={:.6} val_loss={:.6} seconds={:.2}",
                        record.epoch,
                        record.train_loss,
                        record.val_loss,
                        record.seconds
                    );
                    history.push(record);
                    if ctx.snapshots {
                        snapshots.push(state.clone());
                    }
                    if v < best.0 {
                        best = (v, state.clone(), epoch);
                        since_best = 0;
                    } else {
                        since_best += 1;
                        if since_best >= config.patience {
                            control.stop = true;
                            stopped_early = epoch + 1 < config.epochs;
                        }
                    }
                }
                Ok(v) => {
                    control.error.get_or_insert(Error::Numerical {
                        epoch,
                        batch: 0,
                        detail: format!("validation loss {v}"),
                    });
                }
                Err(e) => {
                    control.error.get_or_insert(e);
                }
            }
        }
        shared.barrier.wait();
        let control = lock(&shared.control);
        if control.error.is_some() {
            return None;
        }
        if control.stop {
            break;
        }
    }

    if config.verify_replicas {
        lock(&shared.hashes)[id] = state.bit_hash();
        shared.barrier.wait();
        if lead {
            let hashes = lock(&shared.hashes);
            checks += 1;
            if hashes.iter().any(|&h| h != hashes[0]) {
                lock(&shared.control).error.get_or_insert(Error::Numerical {
                    epoch: history.len(),
                    batch: 0,
                    detail: "replica parameters diverged".into(),
                });
            }
        }
    }

    lead.then_some(TrainOutcome {
        best: best.1,
        best_epoch: best.2,
        last: state,
        history,
        stopped_early,
        steps,
        replica_checks: checks,
        snapshots,
    })
}
