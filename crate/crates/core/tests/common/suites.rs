//! One measurement per acceptance criterion. Each returns a verdict and a
//! short description of what was measured.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use hydrogat::data::{denormalize, impute_upstream, normalize, sequential_sampler, Split};
use hydrogat::eval::{metrics, stitch, WindowForecast};
use hydrogat::graph::{build_graph, d8_receivers, fill_depressions};
use hydrogat::model::{
    fuse_branches, gru_gat_step, init_state, model_forward, predict_batch, temporal_encode, DropoutStream,
    ForwardOptions, MessageGraph, ModelConfig, ModelGraphs,
};
use hydrogat::tensor::{Tape, Tensor};
use hydrogat::train::{allreduce_average, compute_bundle, train_from, worker_share, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checks::{self, small_config, tiny_basin};
use super::fd::random_tensor;
use super::graph_oracle::{fill_by_relaxation, random_dem, steepest_by_scan};
use super::primitives::fd_primitives;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub verdict: Verdict,
    pub detail: String,
}

impl Report {
    fn judge(ok: bool, detail: String) -> Self {
        Self {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

pub fn gradient_suite() -> Report {
    let started = Instant::now();
    let prims = fd_primitives();
    let (worst_name, worst_prim) = prims
        .iter()
        .copied()
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let cells = [
        checks::fd_gat_layer(),
        checks::fd_gru_cell(),
        checks::fd_temporal_encoder(),
        checks::fd_fusion_and_predictor(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let model = checks::fd_full_model();
    let secs = started.elapsed().as_secs_f64();
    Report::judge(
        worst_prim < 1e-4 && cells < 1e-4 && model < 1e-3 && secs < 60.0,
        format!(
            "{} primitives worst {worst_prim:.1e} ({worst_name}), cells worst {cells:.1e}, full model {model:.1e}, {secs:.1}s",
            prims.len()
        ),
    )
}

fn encode(config: &ModelConfig, state: &hydrogat::model::ModelState, x: &Tensor) -> Tensor {
    let tape = Tape::new();
    let p = state.bind(&tape);
    temporal_encode(tape.constant(x.clone()), &p, config).unwrap().value()
}

pub fn causality_suite() -> Report {
    let (t, f) = (40, 3);
    let mut config = ModelConfig::with_width(8, 2, t, 3);
    config.attn_window = 24;
    let state = init_state(&config, 5).unwrap();
    let x = random_tensor(&[2, t, f], 1, 1.0);
    let base = encode(&config, &state, &x);
    let d = config.d_model;
    let step = |e: &Tensor, s: usize, i: usize| e.data()[(s * t + i) * d..(s * t + i + 1) * d].to_vec();
    let mut failures = Vec::new();
    let mut probes = 0;

    for tau in [1, 10, 23, 24, 39] {
        let mut moved = x.clone();
        for c in 0..f {
            moved.data_mut()[tau * f + c] += 0.7;
        }
        let e = encode(&config, &state, &moved);
        for i in 0..t {
            probes += 1;
            let same = step(&base, 0, i) == step(&e, 0, i);
            // earlier steps must not move; the window bounds which later ones may
            let must_hold = i < tau || i >= tau + config.attn_window;
            if must_hold && !same {
                failures.push(format!("input {tau} moved e_{i}"));
            }
            if (tau..tau + config.attn_window).contains(&i) && same {
                failures.push(format!("input {tau} did not reach e_{i}"));
            }
        }
    }

    let (g, ds) = tiny_basin();
    let model = small_config(6, 3);
    let mstate = init_state(&model, 3).unwrap();
    for start in [0, 40, 150] {
        let sample = ds.sample(start);
        let (a, _) = model_forward(&sample, &g, &mstate, &model, false).unwrap();
        let mut other = sample.clone();
        other.labels.data_mut().iter_mut().for_each(|v| *v = 1e3 - *v);
        other.label_mask.data_mut().iter_mut().for_each(|v| *v = 0.0);
        probes += 1;
        if model_forward(&other, &g, &mstate, &model, false).unwrap().0 != a {
            failures.push(format!("labels moved the forecast at window {start}"));
        }
    }
    Report::judge(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{probes} probes bit-exact (future inputs, out-of-window inputs, labels)")
        } else {
            failures.join("; ")
        },
    )
}

/// Largest difference between the full-batch gradient and the all-reduced
/// gradient of `workers` shards.
pub fn allreduce_gap(workers: usize) -> f64 {
    let (g, ds) = tiny_basin();
    let config = small_config(6, 3);
    let state = init_state(&config, 21).unwrap();
    let graphs = ModelGraphs::new(&g);
    let starts: Vec<usize> = ds.split_starts(Split::Train)[10..21].to_vec();
    let stream = Some(DropoutStream {
        seed: 4,
        epoch: 2,
        rate: 0.1,
    });
    let full = compute_bundle(&ds, &graphs, &state, &config, &starts, stream).unwrap();
    let shards: Vec<_> = (0..workers)
        .map(|w| {
            let r = worker_share(starts.len(), workers, w).unwrap();
            compute_bundle(&ds, &graphs, &state, &config, &starts[r], stream).unwrap()
        })
        .collect();
    let reduced = allreduce_average(&shards).unwrap();
    assert_eq!(reduced.sample_count, full.sample_count);
    full.gradients.max_abs_diff(&reduced.gradients)
}

/// Largest per-parameter gap between the per-epoch snapshots of runs with
/// 1 worker and with each of `workers`.
pub fn trajectory_gap(epochs: usize, workers: &[usize]) -> (f64, bool) {
    let (g, ds) = tiny_basin();
    let model = small_config(6, 3);
    let run = |w: usize| {
        let config = TrainConfig {
            epochs,
            patience: epochs + 1,
            num_workers: w,
            seed: 13,
            ..TrainConfig::default()
        };
        train_from(&ds, &g, &model, &config, init_state(&model, 13).unwrap(), true).unwrap()
    };
    let reference = run(1);
    let mut gap: f64 = 0.0;
    let mut histories_match = true;
    for &w in workers {
        let other = run(w);
        assert_eq!(other.snapshots.len(), reference.snapshots.len());
        for (a, b) in reference.snapshots.iter().zip(&other.snapshots) {
            gap = gap.max(a.max_abs_diff(b));
        }
        for (a, b) in reference.history.iter().zip(&other.history) {
            histories_match &= (a.train_loss - b.train_loss).abs() < 1e-8 && (a.val_loss - b.val_loss).abs() < 1e-8;
        }
    }
    (gap, histories_match)
}

pub fn distributed_suite() -> Report {
    let started = Instant::now();
    let grad = [2, 4].into_iter().map(allreduce_gap).fold(0.0, f64::max);
    let (traj, hist) = trajectory_gap(30, &[2, 4]);
    let secs = started.elapsed().as_secs_f64();
    Report::judge(
        grad < 1e-10 && traj < 1e-8 && hist && secs < 300.0,
        format!("all-reduce gap {grad:.1e} (W=2,4), 30-epoch trajectory gap {traj:.1e} (W=1,2,4), histories match {hist}, {secs:.1}s"),
    )
}

pub fn graph_suite() -> Report {
    let mut bad = Vec::new();
    for seed in 0..50 {
        let dem = random_dem(seed, 20, 20, seed % 3 == 0);
        let filled = fill_depressions(&dem).unwrap();
        if filled.elevations != fill_by_relaxation(&dem) {
            bad.push(format!("fill seed {seed}"));
        }
        if d8_receivers(&filled).unwrap() != steepest_by_scan(&filled) {
            bad.push(format!("d8 seed {seed}"));
        }
        if build_graph(&dem, &[], &[]).and_then(|g| g.validate()).is_err() {
            bad.push(format!("graph seed {seed}"));
        }
    }
    Report::judge(
        bad.is_empty(),
        if bad.is_empty() {
            "50 DEMs 20x20: fill and D8 exact, flow edges acyclic".into()
        } else {
            bad.join(", ")
        },
    )
}

/// Per-timestep average over every window covering each step, by brute force.
pub fn naive_stitch(windows: &[WindowForecast], station: usize, t: usize) -> Option<f64> {
    let vals: Vec<f64> = windows
        .iter()
        .filter(|w| (w.origin..w.origin + w.values.cols()).contains(&t))
        .map(|w| w.values.get(&[station, t - w.origin]))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn random_windows(seed: u64, count: usize, k: usize, t_out: usize) -> Vec<WindowForecast> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| WindowForecast {
            origin: rng.random_range(0..40),
            values: random_tensor(&[k, t_out], seed * 1000 + i as u64, 50.0),
        })
        .collect()
}

pub fn metric_suite() -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let obs: Vec<f64> = (0..500).map(|_| rng.random_range(0.5..80.0)).collect();
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let perfect = metrics(&obs, &obs).unwrap();
    let flat = metrics(&vec![mean; obs.len()], &obs).unwrap();
    let scaled: Vec<f64> = obs.iter().map(|o| 1.1 * o).collect();
    let biased = metrics(&scaled, &obs).unwrap();
    let errs = [
        (perfect.nse - 1.0).abs(),
        flat.nse.abs(),
        (biased.pbias - 10.0).abs(),
        (perfect.kge - 1.0).abs(),
    ];
    let metric_err = errs.into_iter().fold(0.0, f64::max);

    let mut stitch_err: f64 = 0.0;
    for seed in 0..20 {
        let windows = random_windows(seed, 25, 3, 7);
        let frame = stitch(&windows).unwrap();
        for s in 0..3 {
            for t in 0..60 {
                match (frame.value(s, t), naive_stitch(&windows, s, t)) {
                    (Some(a), Some(b)) => stitch_err = stitch_err.max((a - b).abs()),
                    (None, None) => {}
                    _ => stitch_err = f64::INFINITY,
                }
            }
        }
    }
    Report::judge(
        metric_err < 1e-12 && stitch_err < 1e-12,
        format!("NSE/KGE/PBIAS closed forms within {metric_err:.1e}; stitch vs naive oracle {stitch_err:.1e}"),
    )
}

pub fn normalization_suite() -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst_round: f64 = 0.0;
    for _ in 0..50 {
        let raw: Vec<f64> = (0..200)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..500.0) })
            .collect();
        let (norm, state) = normalize(&raw, None).unwrap();
        for (a, b) in raw.iter().zip(denormalize(&norm, &state)) {
            worst_round = worst_round.max((a - b).abs() / a.abs().max(1e-12));
        }
    }

    let mut worst_ab: f64 = 0.0;
    let mut altered = 0;
    for _ in 0..50 {
        let (a, b) = (rng.random_range(-5.0..5.0), rng.random_range(0.1..3.0));
        let down: Vec<f64> = (0..300).map(|_| rng.random_range(1.0..100.0)).collect();
        let up: Vec<Option<f64>> = down
            .iter()
            .map(|d| (!rng.random_bool(0.3)).then_some(a + b * d))
            .collect();
        let imp = impute_upstream(&up, &down).unwrap();
        worst_ab = worst_ab.max((imp.a - a).abs()).max((imp.b - b).abs());
        altered += up
            .iter()
            .zip(&imp.values)
            .filter(|(u, v)| u.is_some_and(|u| u.to_bits() != v.to_bits()))
            .count();
    }
    Report::judge(
        worst_round < 1e-9 && worst_ab < 1e-10 && altered == 0,
        format!("round trip rel err {worst_round:.1e}; OLS (a,b) err {worst_ab:.1e}; observed entries altered {altered}"),
    )
}

pub fn invariant_suite() -> Report {
    let mut bad = Vec::new();
    let (g, ds) = tiny_basin();
    let config = small_config(6, 3);
    let state = init_state(&config, 8).unwrap();
    let graphs = ModelGraphs::new(&g);
    let opts = ForwardOptions {
        capture_attention: true,
        ..Default::default()
    };
    let (_, att) = predict_batch(&graphs, &state, &config, &ds.batch(&[0, 7, 20, 99]), &opts).unwrap();
    let att = att.unwrap();
    let mut worst_row: f64 = 0.0;
    for m in &att.spatial {
        for v in 0..m.rows() {
            worst_row = worst_row.max((m.row(v).iter().sum::<f64>() - 1.0).abs());
        }
    }
    for s in 0..att.temporal.rows() {
        worst_row = worst_row.max((att.temporal.row(s).iter().sum::<f64>() - 1.0).abs());
    }
    if worst_row >= 1e-12 {
        bad.push(format!("attention rows off by {worst_row:e}"));
    }

    // gate ranges and the convex update on a random graph
    let mg = MessageGraph::new(5, &[(0, 1), (1, 2), (3, 2), (2, 4)]);
    let tape = Tape::new();
    let p = state.bind(&tape);
    let e = tape.constant(random_tensor(&[5, config.d_model], 31, 3.0));
    let h = tape.constant(random_tensor(&[5, config.hidden], 32, 1.0));
    for branch in ["flow", "catch"] {
        let cell = gru_gat_step(&mg, e, h, &p, branch, config.num_heads).unwrap();
        let (z, r) = (cell.z.value(), cell.r.value());
        if !z.data().iter().chain(r.data()).all(|v| *v > 0.0 && *v < 1.0) {
            bad.push(format!("{branch} gates left (0,1)"));
        }
        let (hn, c, h0) = (cell.h.value(), cell.candidate.value(), h.value());
        for i in 0..hn.numel() {
            let (lo, hi) = (c.data()[i].min(h0.data()[i]), c.data()[i].max(h0.data()[i]));
            if hn.data()[i] < lo - 1e-15 || hn.data()[i] > hi + 1e-15 {
                bad.push(format!("{branch} update left [min(h,c), max(h,c)] at {i}"));
                break;
            }
        }
    }

    // fusion: alpha in (0,1) and identity off the targets
    let alpha_raw = tape.constant(random_tensor(&[config.num_heads], 33, 6.0));
    let alpha = alpha_raw.sigmoid().value();
    if !alpha.data().iter().all(|a| *a > 0.0 && *a < 1.0) {
        bad.push("alpha left (0,1)".into());
    }
    let hf = tape.constant(random_tensor(&[5, config.hidden], 34, 1.0));
    let hc = tape.constant(random_tensor(&[2, config.hidden], 35, 1.0));
    let fused = fuse_branches(hf, hc, alpha_raw, Arc::new(vec![3, 1])).unwrap().value();
    let hf = hf.value();
    for row in [0, 2, 4] {
        if fused.row(row) != hf.row(row) {
            bad.push(format!("fusion changed non-target row {row}"));
        }
    }

    // sampler partition
    for n in 1..60 {
        for w in 1..=n.min(9) {
            let mut seen = Vec::new();
            for id in 0..w {
                seen.extend(sequential_sampler(n, w, id).unwrap());
            }
            if seen != (0..n).collect::<Vec<_>>() {
                bad.push(format!("sampler n={n} w={w}"));
            }
        }
    }

    // replica hashes after every step
    let tc = TrainConfig {
        epochs: 2,
        num_workers: 3,
        verify_replicas: true,
        seed: 2,
        ..TrainConfig::default()
    };
    match train_from(&ds, &g, &config, &tc, init_state(&config, 2).unwrap(), false) {
        Ok(out) if out.replica_checks == out.steps + 1 => {}
        Ok(out) => bad.push(format!("{} hash checks for {} steps", out.replica_checks, out.steps)),
        Err(e) => bad.push(format!("replica check failed: {e}")),
    }

    Report::judge(
        bad.is_empty(),
        if bad.is_empty() {
            format!("attention rows within {worst_row:.1e}; gates, alpha, convex bound, fusion identity, sampler partition, replica hashes hold")
        } else {
            bad.join("; ")
        },
    )
}

fn cli(args: &[&str]) -> i32 {
    hydrogat::cli::run(std::iter::once("hydrogat").chain(args.iter().copied()))
}

/// `nse` of the row with the given group and station in a metrics CSV.
pub fn metric_nse(path: &Path, group: &str, station: &str) -> Option<f64> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines().skip(1).find_map(|line| {
        let cols: Vec<&str> = line.split(',').collect();
        (cols[0] == group && cols[1] == station).then(|| cols[3].parse().ok()).flatten()
    })
}

pub struct EndToEnd {
    pub pooled: f64,
    pub outlet: f64,
    pub ablated: f64,
    pub seconds: f64,
}

/// synth, train, predict and evaluate through the command line, with and
/// without catchment edges.
pub fn end_to_end(root: &Path) -> Result<EndToEnd, String> {
    let started = Instant::now();
    let full = root.join("full");
    let fs = full.to_str().unwrap();
    let steps: [&[&str]; 1] = [&["synth", "--out", fs, "--seed", "7", "--rows", "5", "--cols", "5", "--horizon", "2000"]];
    for args in steps {
        if cli(args) != 0 {
            return Err(format!("`{}` failed", args.join(" ")));
        }
    }
    let ablated = root.join("ablated");
    let abl = ablated.to_str().unwrap();
    for d in ["data", "graph"] {
        copy_dir(&full.join(d), &ablated.join(d)).map_err(|e| e.to_string())?;
    }
    let train = ["--hidden", "16", "--heads", "2", "--t-in", "24", "--t-out", "12", "--epochs", "200", "--workers", "2", "--seed", "7"];
    for (out, extra) in [(fs, None), (abl, Some("--no-catchment"))] {
        let mut args = vec!["train", "--out", out];
        args.extend(train);
        args.extend(extra);
        for a in [args, vec!["predict", "--out", out], vec!["evaluate", "--out", out]] {
            if cli(&a) != 0 {
                return Err(format!("`{}` failed", a.join(" ")));
            }
        }
    }
    let metrics = |dir: &Path, group: &str, station: &str| {
        metric_nse(&dir.join("metrics/metrics.csv"), group, station).ok_or_else(|| format!("no {group}/{station} row"))
    };
    Ok(EndToEnd {
        pooled: metrics(&full, "basin", "all")?,
        outlet: metrics(&full, "station", "G00")?,
        ablated: metrics(&ablated, "basin", "all")?,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        std::fs::copy(entry.path(), to.join(entry.file_name()))?;
    }
    Ok(())
}

pub fn end_to_end_suite() -> Report {
    let dir = tempfile::tempdir().unwrap();
    match end_to_end(dir.path()) {
        Ok(r) => {
            let margin = r.pooled - r.ablated;
            Report::judge(
                r.pooled >= 0.8 && r.outlet >= 0.85 && margin >= 0.02 && r.seconds < 600.0,
                format!(
                    "pooled NSE {:.4}, outlet NSE {:.4}, without catchment edges {:.4} (margin {margin:.4}), {:.0}s",
                    r.pooled, r.outlet, r.ablated, r.seconds
                ),
            )
        }
        Err(e) => Report::judge(false, e),
    }
}

pub fn throughput_suite() -> Report {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        return Report {
            verdict: Verdict::Skip,
            detail: format!("needs >= 4 cores, found {cores}"),
        };
    }
    let s = hydrogat::data::synth_basin(3, 5, 5, 600).unwrap();
    let g = build_graph(&s.dem, &s.catchment, &s.targets).unwrap();
    let norm = hydrogat::data::NormStates::fit(&s.store, 0..600).unwrap();
    let ds = hydrogat::data::Dataset::new(&s.store, 12, 6, norm).unwrap();
    let model = ModelConfig::with_width(16, 2, 12, 6);
    let time = |w: usize| {
        let config = TrainConfig {
            epochs: 2,
            batch_size: 32,
            patience: 10,
            num_workers: w,
            ..TrainConfig::default()
        };
        let t = Instant::now();
        train_from(&ds, &g, &model, &config, init_state(&model, 0).unwrap(), false).unwrap();
        t.elapsed().as_secs_f64()
    };
    let (one, four) = (time(1), time(4));
    Report::judge(four <= 0.6 * one, format!("1 worker {one:.1}s, 4 workers {four:.1}s, ratio {:.2}", four / one))
}
