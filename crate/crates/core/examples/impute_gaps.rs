//! Punch gaps into a generated discharge record, fill them from the gauge
//! downstream and report the error on the hidden values.

use hydrogat::data::{denormalize, normalize, synth_basin};
use hydrogat::graph::build_graph;
use hydrogat::Result;

fn main() -> Result<()> {
    let basin = synth_basin(4, 6, 6, 1500)?;
    let graph = build_graph(&basin.dem, &basin.catchment, &basin.targets)?;
    let truth = basin.store.clone();
    let mut gappy = truth.clone();
    let h = gappy.horizon;
    for s in 0..gappy.num_targets() {
        for t in (200 + 90 * s..260 + 90 * s).chain(900..940) {
            gappy.discharge[s * h + t] = None;
        }
    }
    let mut filled = gappy.clone();
    filled.impute_discharge(&graph)?;
    for s in 0..truth.num_targets() {
        let (mut se, mut n) = (0.0, 0);
        for t in 0..h {
            if gappy.discharge[s * h + t].is_none() {
                se += (filled.discharge[s * h + t].unwrap() - truth.discharge[s * h + t].unwrap()).powi(2);
                n += 1;
            }
        }
        println!("station {}: {n} gaps filled, rmse {:.4}", truth.station_ids[s], (se / n as f64).sqrt());
    }

    let outlet: Vec<f64> = filled.discharge_row(basin.outlet_station).iter().map(|v| v.unwrap()).collect();
    let (scaled, state) = normalize(&outlet, None)?;
    let back = denormalize(&scaled, &state);
    let worst = outlet.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("outlet scaled to [0, 1] with min {:.4} max {:.4}; round trip error {worst:.2e}", state.min, state.max);
    Ok(())
}
