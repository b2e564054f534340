//! Fill a DEM, route it with D8 and attach gauges.
//!
//! `cargo run --example build_graph -- [dem.asc]` uses a generated 8x8
//! basin when no grid is given.

use hydrogat::data::synth_basin;
use hydrogat::graph::{build_graph, d8_receivers, fill_depressions, DemGrid};
use hydrogat::Result;

fn main() -> Result<()> {
    let basin = synth_basin(11, 8, 8, 300)?;
    let dem = match std::env::args().nth(1) {
        Some(path) => DemGrid::read_ascii(path.as_ref())?,
        None => basin.dem.clone(),
    };
    let filled = fill_depressions(&dem)?;
    let raised = dem.elevations.iter().zip(&filled.elevations).filter(|(a, b)| a != b).count();
    let receivers = d8_receivers(&filled)?;
    let outlets = receivers.iter().enumerate().filter(|(i, r)| r.is_none() && !dem.is_nodata(*i)).count();
    println!("grid {}x{}: {raised} cells raised by filling, {outlets} outlets", dem.rows, dem.cols);

    let targets = if std::env::args().nth(1).is_some() { Vec::new() } else { basin.targets.clone() };
    let catchment = if targets.is_empty() { Vec::new() } else { basin.catchment.clone() };
    let graph = build_graph(&dem, &catchment, &targets)?;
    graph.validate()?;
    println!(
        "{} nodes, {} flow edges, {} catchment edges, stations {:?}",
        graph.num_nodes,
        graph.flow_edges.len(),
        graph.catchment_edges.len(),
        graph.station_ids
    );
    for s in graph.outlet_stations() {
        println!("outlet station {}", graph.station_ids[s]);
    }
    Ok(())
}
