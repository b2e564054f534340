use chrono::TimeDelta;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use super::series::{parse_time, SeriesStore};
use crate::error::{Error, Result};
use crate::graph::{build_graph, d8_receivers, fill_depressions, CatchmentPair, DemGrid, TargetSpec};

const CELL_SIZE: f64 = 4000.0;
const WARMUP: usize = 240;
const STORM_RATE: f64 = 0.04;
const MEAN_INTENSITY: f64 = 4.0;
const RAIN_FLOOR: f64 = 0.05;

/// A generated basin in the same shape the file readers produce.
#[derive(Debug, Clone)]
pub struct SynthBasin {
    pub dem: DemGrid,
    pub catchment: Vec<CatchmentPair>,
    pub targets: Vec<TargetSpec>,
    pub store: SeriesStore,
    /// Station position of the basin outlet.
    pub outlet_station: usize,
    /// Per-cell reservoir constant.
    pub recession: Vec<f64>,
}

/// Linear-reservoir routing along `receivers`.
///
/// With `q_v = k_v S_v` the storage of every cell evolves as
/// `S_v' = S_v + rain_v + Σ q_u − q_v` over its upstream neighbors `u`.
/// Returns per-cell outflow `[N × horizon]` in the units of `rain` and the
/// storage left at the end.
pub fn reservoir_cascade(
    receivers: &[Option<usize>],
    recession: &[f64],
    rain: &[f64],
    horizon: usize,
    initial_storage: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = receivers.len();
    let mut storage = initial_storage.to_vec();
    let mut outflow = vec![0.0; n * horizon];
    let mut inflow = vec![0.0; n];
    for t in 0..horizon {
        inflow.fill(0.0);
        for v in 0..n {
            let q = recession[v] * storage[v];
            outflow[v * horizon + t] = q;
            if let Some(r) = receivers[v] {
                inflow[r] += q;
            }
        }
        for v in 0..n {
            storage[v] += rain[v * horizon + t] + inflow[v] - outflow[v * horizon + t];
        }
    }
    (outflow, storage)
}

/// Deterministic synthetic basin: a noisy valley draining east, storm
/// rainfall and reservoir-cascade discharge at a handful of gauges.
pub fn synth_basin(seed: u64, rows: usize, cols: usize, horizon: usize) -> Result<SynthBasin> {
    if rows * cols < 4 {
        return Err(Error::invalid(format!("{rows}x{cols} grid is too small")));
    }
    if horizon < 300 {
        return Err(Error::invalid(format!("horizon {horizon} is below 300 steps")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outlet = (rows / 2) * cols + cols - 1;
    let (dem, receivers) = loop {
        let dem = valley(&mut rng, rows, cols);
        if fill_depressions(&dem)? != dem {
            continue;
        }
        let rec = d8_receivers(&dem)?;
        if (0..rows * cols).all(|i| (i == outlet) == rec[i].is_none()) {
            break (dem, rec);
        }
    };
    let n = rows * cols;

    let stations = pick_gauges(&receivers, outlet, n);
    let targets: Vec<TargetSpec> = stations
        .iter()
        .enumerate()
        .map(|(s, &cell)| TargetSpec {
            station_id: format!("G{s:02}"),
            row: cell / cols,
            col: cell % cols,
        })
        .collect();
    let catchment: Vec<CatchmentPair> = stations
        .iter()
        .filter_map(|&cell| {
            let mut cur = receivers[cell];
            while let Some(c) = cur {
                if stations.contains(&c) {
                    return Some(CatchmentPair {
                        src_row: cell / cols,
                        src_col: cell % cols,
                        dst_row: c / cols,
                        dst_col: c % cols,
                    });
                }
                cur = receivers[c];
            }
            None
        })
        .collect();

    let recession: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..=0.3)).collect();
    let steps = horizon + WARMUP;
    let rain = storms(&mut rng, rows, cols, steps);
    let (outflow, _) = reservoir_cascade(&receivers, &recession, &rain, steps, &vec![0.0; n]);

    // mm/h over one cell to m³/s
    let to_flow = CELL_SIZE * CELL_SIZE * 1e-3 / 3600.0;
    let precipitation = (0..n)
        .flat_map(|v| rain[v * steps + WARMUP..(v + 1) * steps].iter().copied())
        .collect();
    let discharge = stations
        .iter()
        .flat_map(|&v| outflow[v * steps + WARMUP..(v + 1) * steps].iter().map(|q| Some(q * to_flow)))
        .collect();

    let graph = build_graph(&dem, &catchment, &targets)?;
    let t0 = parse_time("2012-05-01T00:00").expect("literal timestamp");
    let store = SeriesStore {
        num_nodes: n,
        horizon,
        timestamps: (0..horizon).map(|h| t0 + TimeDelta::hours(h as i64)).collect(),
        precipitation,
        discharge,
        target_index: graph.targets.clone(),
        station_ids: graph.station_ids.clone(),
    };
    store.validate()?;
    Ok(SynthBasin {
        dem,
        catchment,
        targets,
        store,
        outlet_station: 0,
        recession,
    })
}

/// Valley sloping east with flanks falling toward the middle row.
fn valley(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DemGrid {
    let mid = (rows / 2) as f64;
    let e = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            100.0 + 2.0 * ((cols - 1) as f64 - c) + 1.5 * (r - mid).abs() + rng.random_range(-0.3..0.3)
        })
        .collect();
    DemGrid::new(rows, cols, CELL_SIZE, -9999.0, e).expect("valid by construction")
}

/// Outlet first, then the cells with the largest drainage area, skipping
/// direct flow neighbors of gauges already chosen.
fn pick_gauges(receivers: &[Option<usize>], outlet: usize, n: usize) -> Vec<usize> {
    let mut area = vec![1usize; n];
    for v in 0..n {
        let mut cur = receivers[v];
        while let Some(c) = cur {
            area[c] += 1;
            cur = receivers[c];
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&v| v != outlet).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(area[v]), v));
    let wanted = (n / 8).clamp(2, 6).min(n - 1);
    let mut chosen = vec![outlet];
    for &v in &order {
        if chosen.len() > wanted {
            break;
        }
        let touches = chosen
            .iter()
            .any(|&g| receivers[v] == Some(g) || receivers[g] == Some(v));
        if !touches {
            chosen.push(v);
        }
    }
    for &v in &order {
        if chosen.len() > wanted {
            break;
        }
        if !chosen.contains(&v) {
            chosen.push(v);
        }
    }
    chosen
}

/// Stationary storms with a Gaussian footprint, arriving as a Poisson process.
fn storms(rng: &mut ChaCha8Rng, rows: usize, cols: usize, steps: usize) -> Vec<f64> {
    let n = rows * cols;
    let mut rain = vec![0.0; n * steps];
    let arrivals = Poisson::new(STORM_RATE).expect("positive rate");
    let intensity = Exp::new(1.0 / MEAN_INTENSITY).expect("positive rate");
    for t in 0..steps {
        let count = arrivals.sample(rng) as usize;
        for _ in 0..count {
            let duration = rng.random_range(3..=12usize);
            let peak = intensity.sample(rng);
            let cr = rng.random_range(0.0..rows as f64);
            let cc = rng.random_range(0.0..cols as f64);
            let sigma = rng.random_range(1.0..3.0);
            for v in 0..n {
                let (r, c) = ((v / cols) as f64, (v % cols) as f64);
                let d2 = (r - cr).powi(2) + (c - cc).powi(2);
                let depth = peak * (-d2 / (2.0 * sigma * sigma)).exp();
                for s in t..(t + duration).min(steps) {
                    rain[v * steps + s] += depth;
                }
            }
        }
    }
    for r in &mut rain {
        if *r < RAIN_FLOOR {
            *r = 0.0;
        }
    }
    rain
}
