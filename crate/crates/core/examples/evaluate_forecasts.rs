//! Forecast the test split, stitch overlapping windows and score them by
//! basin, station, lead hour and year. Also prints the rain to discharge lag
//! profile at the outlet.

use hydrogat::data::{split_range, synth_basin, Dataset, NormStates, Split};
use hydrogat::eval::{evaluate, forecast_windows, precip_discharge_lag_correlation, stitch, Grouping};
use hydrogat::graph::build_graph;
use hydrogat::model::{ForwardOptions, ModelConfig, ModelGraphs};
use hydrogat::train::{train, TrainConfig};
use hydrogat::Result;

fn main() -> Result<()> {
    let basin = synth_basin(2, 4, 4, 1000)?;
    let graph = build_graph(&basin.dem, &basin.catchment, &basin.targets)?;
    let norm = NormStates::fit(&basin.store, split_range(1000, Split::Train))?;
    let dataset = Dataset::new(&basin.store, 24, 6, norm)?;
    let model = ModelConfig::with_width(16, 2, 24, 6);
    let outcome = train(&dataset, &graph, &model, &TrainConfig { epochs: 5, ..TrainConfig::default() })?;

    let starts = dataset.split_starts(Split::Test);
    let graphs = ModelGraphs::new(&graph);
    let (windows, _) = forecast_windows(&dataset, &graphs, &outcome.best, &model, &starts, &ForwardOptions::default())?;
    let frame = stitch(&windows)?;
    for row in evaluate(&frame, &basin.store, &Grouping::ALL)? {
        let lead = row.lead.map(|l| format!(" lead {l}")).unwrap_or_default();
        println!(
            "{:>20} {:>4}{lead}: nse {:.3} kge {:.3} pbias {:+.2}% n {}",
            row.group, row.station, row.metrics.nse, row.metrics.kge, row.metrics.pbias, row.metrics.n
        );
    }

    let outlet = basin.outlet_station;
    let node = graph.targets[outlet];
    let q: Vec<f64> = basin.store.discharge_row(outlet).iter().map(|v| v.unwrap_or(0.0)).collect();
    let lags = precip_discharge_lag_correlation(basin.store.precip_row(node), &q, 24)?;
    for (lag, r) in lags.iter().enumerate() {
        println!("lag {lag:>2}h: r = {}", r.map_or("n/a".into(), |r| format!("{r:.3}")));
    }
    Ok(())
}
