//! Command-line entry point. Every command reads and writes files under one
//! output directory laid out as `data/`, `graph/`, `checkpoints/`,
//! `forecasts/`, `metrics/` and `attention/`.

mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{EvalOptions, Paths, RunConfig};

use crate::data::{split_range, synth_basin, Dataset, NormStates, SeriesStore, Split};
use crate::error::{Error, Result};
use crate::eval::{
    collect_attention, evaluate, forecast_windows, read_windows_csv, stitch, write_attention, write_metrics_csv,
    write_windows_csv, Grouping,
};
use crate::graph::{build_graph, read_catchment_csv, read_targets_csv, write_catchment_csv, write_targets_csv, BasinGraph, DemGrid, Relation};
use crate::model::{ForecastNoise, ForwardOptions, ModelGraphs};
use crate::train::{checkpoint_load, checkpoint_save, train, write_history, Checkpoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hydrogat", version, about = "Graph attention discharge forecasting for gauged river basins")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration with [paths], [model], [train] and [eval] sections.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `paths.output`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the DEM, derive flow edges and write graph/graph.json.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        /// ESRI ASCII grid.
        #[arg(long)]
        dem: Option<PathBuf>,
        /// CSV `src_row,src_col,dst_row,dst_col`, upstream gauge cell first.
        #[arg(long)]
        catchment: Option<PathBuf>,
        /// CSV `row,col,station_id`.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Generate a synthetic basin under data/ and its graph.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        rows: usize,
        #[arg(long, default_value_t = 5)]
        cols: usize,
        /// Hours to generate.
        #[arg(long, default_value_t = 2000)]
        horizon: usize,
    },
    /// Train and write checkpoints/best, checkpoints/last and checkpoints/history.csv.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: TrainArgs,
    },
    /// Forecast a split and write forecasts/windows.csv and forecasts/forecast.csv.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory; defaults to checkpoints/best.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train, validation or test.
        #[arg(long)]
        split: Option<Split>,
        /// Std of Gaussian noise added to normalized forecast rainfall.
        #[arg(long)]
        forecast_noise_std: Option<f64>,
        #[arg(long)]
        noise_seed: Option<u64>,
        /// Directory with precipitation.csv and discharge.csv.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Score forecasts/windows.csv against observations into metrics/metrics.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of basin, per-station, per-lead-hour, per-year.
        #[arg(long, value_delimiter = ',')]
        groupings: Option<Vec<Grouping>>,
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Average attention over a split and write CSV matrices to attention/.
    DumpAttention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        split: Option<Split>,
        /// Comma-separated station ids for temporal attention; default all.
        #[arg(long, value_delimiter = ',')]
        stations: Option<Vec<String>>,
        #[arg(long)]
        series: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden and embedding width.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub t_in: Option<usize>,
    #[arg(long)]
    pub t_out: Option<usize>,
    #[arg(long)]
    pub attn_window: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Drop the catchment relation from the model.
    #[arg(long)]
    pub no_catchment: bool,
    /// Compare replica parameter hashes before every step.
    #[arg(long)]
    pub verify_replicas: bool,
    #[arg(long)]
    pub series: Option<PathBuf>,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}`"))),
        }
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical { .. } => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "ts={} level={} target={} {}",
                buf.timestamp_seconds(),
                record.level().as_str().to_lowercase(),
                record.target(),
                record.args()
            )
        })
        .try_init();
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Failures print one diagnostic line to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(common: &Common) -> Result<(RunConfig, Option<String>)> {
    let (mut cfg, text) = match &common.config {
        Some(path) => {
            let (c, t) = RunConfig::load(path)?;
            (c, Some(t))
        }
        None => (RunConfig::default(), None),
    };
    if let Some(out) = &common.out {
        cfg.paths.output = out.clone();
    }
    Ok((cfg, text))
}

/// Writes the effective configuration, and the given file verbatim, to
/// `config/<command>.toml` and `config/<command>.input.toml`.
fn echo_config(cfg: &RunConfig, input: Option<&str>, command: &str) -> Result<()> {
    let dir = cfg.out().join("config");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("{command}.toml"));
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    if let Some(text) = input {
        let path = dir.join(format!("{command}.input.toml"));
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} `{}` does not exist", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn execute(command: Command) -> Result<()> {
    let started = Instant::now();
    let name = match &command {
        Command::BuildGraph { .. } => "build-graph",
        Command::Synth { .. } => "synth",
        Command::Train { .. } => "train",
        Command::Predict { .. } => "predict",
        Command::Evaluate { .. } => "evaluate",
        Command::DumpAttention { .. } => "dump-attention",
    };
    log::info!("command={name} phase=start");
    match command {
        Command::BuildGraph {
            common,
            dem,
            catchment,
            targets,
        } => {
            let (mut cfg, text) = resolve(&common)?;
            cfg.paths.dem = dem.or(cfg.paths.dem);
            cfg.paths.catchment = catchment.or(cfg.paths.catchment);
            cfg.paths.targets = targets.or(cfg.paths.targets);
            echo_config(&cfg, text.as_deref(), name)?;
            cmd_build_graph(&cfg)?;
        }
        Command::Synth {
            common,
            seed,
            rows,
            cols,
            horizon,
        } => {
            let (cfg, text) = resolve(&common)?;
            echo_config(&cfg, text.as_deref(), name)?;
            cmd_synth(&cfg, seed, rows, cols, horizon)?;
        }
        Command::Train { common, opts } => {
            let (mut cfg, text) = resolve(&common)?;
            apply_train_args(&mut cfg, &opts);
            echo_config(&cfg, text.as_deref(), name)?;
            cmd_train(&cfg)?;
        }
        Command::Predict {
            common,
            checkpoint,
            split,
            forecast_noise_std,
            noise_seed,
            series,
        } => {
            let (mut cfg, text) = resolve(&common)?;
            cfg.paths.series = series.or(cfg.paths.series);
            cfg.eval.split = split.unwrap_or(cfg.eval.split);
            cfg.eval.forecast_noise_std = forecast_noise_std.unwrap_or(cfg.eval.forecast_noise_std);
            cfg.eval.noise_seed = noise_seed.unwrap_or(cfg.eval.noise_seed);
            echo_config(&cfg, text.as_deref(), name)?;
            cmd_predict(&cfg, checkpoint)?;
        }
        Command::Evaluate {
            common,
            groupings,
            series,
        } => {
            let (mut cfg, text) = resolve(&common)?;
            cfg.paths.series = series.or(cfg.paths.series);
            if let Some(g) = groupings {
                cfg.eval.groupings = g;
            }
            echo_config(&cfg, text.as_deref(), name)?;
            cmd_evaluate(&cfg)?;
        }
        Command::DumpAttention {
            common,
            checkpoint,
            split,
            stations,
            series,
        } => {
            let (mut cfg, text) = resolve(&common)?;
            cfg.paths.series = series.or(cfg.paths.series);
            cfg.eval.split = split.unwrap_or(cfg.eval.split);
            if let Some(s) = stations {
                cfg.eval.stations = s;
            }
            echo_config(&cfg, text.as_deref(), name)?;
            cmd_dump_attention(&cfg, checkpoint)?;
        }
    }
    log::info!("command={name} phase=done seconds={:.2}", started.elapsed().as_secs_f64());
    Ok(())
}

fn apply_train_args(cfg: &mut RunConfig, a: &TrainArgs) {
    let (m, t) = (&mut cfg.model, &mut cfg.train);
    if let Some(h) = a.hidden {
        m.hidden = h;
        m.d_model = h;
    }
    m.num_heads = a.heads.unwrap_or(m.num_heads);
    m.t_in = a.t_in.unwrap_or(m.t_in);
    m.t_out = a.t_out.unwrap_or(m.t_out);
    m.attn_window = a.attn_window.unwrap_or(m.attn_window);
    m.dropout = a.dropout.unwrap_or(m.dropout);
    if a.no_catchment {
        m.relations.retain(|r| *r != Relation::Catchment);
    }
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.lr = a.lr.unwrap_or(t.lr);
    t.weight_decay = a.weight_decay.unwrap_or(t.weight_decay);
    t.patience = a.patience.unwrap_or(t.patience);
    t.num_workers = a.workers.unwrap_or(t.num_workers);
    t.seed = a.seed.unwrap_or(t.seed);
    t.verify_replicas |= a.verify_replicas;
    if a.series.is_some() {
        cfg.paths.series = a.series.clone();
    }
}

fn cmd_build_graph(cfg: &RunConfig) -> Result<()> {
    let (dem_path, targets_path, catchment_path) = (cfg.dem_path(), cfg.targets_path(), cfg.catchment_path());
    require(&dem_path, "DEM")?;
    require(&targets_path, "target table")?;
    let dem = DemGrid::read_ascii(&dem_path)?;
    let targets = read_targets_csv(&targets_path)?;
    let catchment = if cfg.paths.catchment.is_some() || catchment_path.exists() {
        read_catchment_csv(&catchment_path)?
    } else {
        Vec::new()
    };
    let graph = build_graph(&dem, &catchment, &targets)?;
    save_graph(cfg, &graph)
}

fn save_graph(cfg: &RunConfig, graph: &BasinGraph) -> Result<()> {
    let path = cfg.graph_path();
    create_dir(path.parent().expect("graph dir"))?;
    graph.save(&path)?;
    log::info!(
        "command=build-graph nodes={} flow_edges={} catchment_edges={} targets={} path={}",
        graph.num_nodes,
        graph.flow_edges.len(),
        graph.catchment_edges.len(),
        graph.targets.len(),
        path.display()
    );
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, seed: u64, rows: usize, cols: usize, horizon: usize) -> Result<()> {
    let basin = synth_basin(seed, rows, cols, horizon)?;
    let data = cfg.data_dir();
    create_dir(&data)?;
    basin.dem.write_ascii(&data.join("dem.asc"))?;
    write_targets_csv(&data.join("targets.csv"), &basin.targets)?;
    write_catchment_csv(&data.join("catchment.csv"), &basin.catchment)?;
    basin.store.write_csv(&data)?;
    log::info!(
        "command=synth seed={seed} rows={rows} cols={cols} horizon={horizon} stations={} dir={}",
        basin.targets.len(),
        data.display()
    );
    save_graph(cfg, &build_graph(&basin.dem, &basin.catchment, &basin.targets)?)
}

fn load_graph(cfg: &RunConfig) -> Result<BasinGraph> {
    let path = cfg.graph_path();
    require(&path, "graph (run build-graph or synth first)")?;
    let graph = BasinGraph::load(&path)?;
    graph.validate()?;
    Ok(graph)
}

fn load_series(cfg: &RunConfig, graph: &BasinGraph) -> Result<SeriesStore> {
    let dir = cfg.series_dir();
    let (p, q) = (dir.join("precipitation.csv"), dir.join("discharge.csv"));
    require(&p, "precipitation table")?;
    require(&q, "discharge table")?;
    SeriesStore::read_csv(&p, &q, graph)
}

fn load_checkpoint(cfg: &RunConfig, explicit: Option<PathBuf>, graph: &BasinGraph) -> Result<Checkpoint> {
    let dir = explicit.unwrap_or_else(|| cfg.checkpoint_dir().join("best"));
    if !dir.is_dir() {
        return Err(Error::Checkpoint(format!("no checkpoint at `{}`", dir.display())));
    }
    let ck = checkpoint_load(&dir).map_err(|e| match e {
        Error::Io { path, source } => Error::Checkpoint(format!("{}: {source}", path.display())),
        other => other,
    })?;
    if ck.station_ids != graph.station_ids {
        return Err(Error::Checkpoint(format!(
            "checkpoint stations {:?} do not match the graph's {:?}",
            ck.station_ids, graph.station_ids
        )));
    }
    Ok(ck)
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    let graph = load_graph(cfg)?;
    let store = load_series(cfg, &graph)?;
    let norm = NormStates::fit(&store, split_range(store.horizon, Split::Train))?;
    let dataset = Dataset::imputed(&store, &graph, cfg.model.t_in, cfg.model.t_out, norm)?;
    let outcome = train(&dataset, &graph, &cfg.model, &cfg.train)?;
    let dir = cfg.checkpoint_dir();
    let last_epoch = outcome.history.last().map_or(0, |r| r.epoch);
    for (sub, state, epoch) in [("best", &outcome.best, outcome.best_epoch), ("last", &outcome.last, last_epoch)] {
        let ck = Checkpoint {
            state: state.clone(),
            norm,
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            epoch,
            station_ids: graph.station_ids.clone(),
        };
        let path = dir.join(sub);
        create_dir(&path)?;
        checkpoint_save(&path, &ck)?;
    }
    write_history(&dir.join("history.csv"), &outcome.history)?;
    log::info!(
        "command=train epochs_run={} best_epoch={} best_val_loss={:.6} stopped_early={} replica_checks={}",
        outcome.history.len(),
        outcome.best_epoch,
        outcome.history.get(outcome.best_epoch).map_or(f64::NAN, |r| r.val_loss),
        outcome.stopped_early,
        outcome.replica_checks
    );
    Ok(())
}

fn prepare(cfg: &RunConfig, checkpoint: Option<PathBuf>) -> Result<(BasinGraph, SeriesStore, Checkpoint, Dataset)> {
    let graph = load_graph(cfg)?;
    let ck = load_checkpoint(cfg, checkpoint, &graph)?;
    let store = load_series(cfg, &graph)?;
    let dataset = Dataset::imputed(&store, &graph, ck.model.t_in, ck.model.t_out, ck.norm)?;
    Ok((graph, store, ck, dataset))
}

fn cmd_predict(cfg: &RunConfig, checkpoint: Option<PathBuf>) -> Result<()> {
    let (graph, store, ck, dataset) = prepare(cfg, checkpoint)?;
    let starts = dataset.split_starts(cfg.eval.split);
    if starts.is_empty() {
        return Err(Error::invalid(format!("{:?} split holds no complete window", cfg.eval.split)));
    }
    let std = cfg.eval.forecast_noise_std;
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::invalid(format!("forecast noise std {std} must be finite and non-negative")));
    }
    let options = ForwardOptions {
        forecast_noise: (std > 0.0).then_some(ForecastNoise {
            std,
            seed: cfg.eval.noise_seed,
        }),
        ..ForwardOptions::default()
    };
    let (windows, _) = forecast_windows(&dataset, &ModelGraphs::new(&graph), &ck.state, &ck.model, &starts, &options)?;
    let dir = cfg.forecast_dir();
    create_dir(&dir)?;
    write_windows_csv(&dir.join("windows.csv"), &windows, &store.station_ids)?;
    stitch(&windows)?.write_csv(&dir.join("forecast.csv"), &store)?;
    log::info!(
        "command=predict split={:?} windows={} forecast_noise_std={std} dir={}",
        cfg.eval.split,
        windows.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let graph = load_graph(cfg)?;
    let store = load_series(cfg, &graph)?;
    let path = cfg.forecast_dir().join("windows.csv");
    require(&path, "window forecasts (run predict first)")?;
    let windows = read_windows_csv(&path, &store.station_ids)?;
    let frame = stitch(&windows)?;
    let rows = evaluate(&frame, &store, &cfg.eval.groupings)?;
    let dir = cfg.metrics_dir();
    create_dir(&dir)?;
    write_metrics_csv(&dir.join("metrics.csv"), &rows)?;
    for r in rows.iter().filter(|r| r.group.starts_with("basin") || r.group == "station") {
        log::info!(
            "command=evaluate group={} station={} nse={:.4} kge={:.4} pbias={:.2}",
            r.group,
            r.station,
            r.metrics.nse,
            r.metrics.kge,
            r.metrics.pbias
        );
    }
    Ok(())
}

fn cmd_dump_attention(cfg: &RunConfig, checkpoint: Option<PathBuf>) -> Result<()> {
    let (graph, store, ck, dataset) = prepare(cfg, checkpoint)?;
    let starts = dataset.split_starts(cfg.eval.split);
    let record = collect_attention(&dataset, &ModelGraphs::new(&graph), &ck.state, &ck.model, &starts)?;
    let files = write_attention(&cfg.attention_dir(), &record, &store.station_ids, &cfg.eval.stations)?;
    log::info!(
        "command=dump-attention samples={} files={} dir={}",
        record.samples,
        files.len(),
        cfg.attention_dir().display()
    );
    Ok(())
}
