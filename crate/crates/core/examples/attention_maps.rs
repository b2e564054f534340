//! Train briefly, then print which upstream gauges each station attends to
//! and how far back it looks.
//!
//! `cargo run --release --example attention_maps -- [epochs]`

use hydrogat::data::{split_range, synth_basin, Dataset, NormStates, Split};
use hydrogat::eval::collect_attention;
use hydrogat::graph::build_graph;
use hydrogat::model::{ModelConfig, ModelGraphs};
use hydrogat::train::{train, TrainConfig};
use hydrogat::Result;

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).map_or(3, |a| a.parse().expect("epoch count"));
    let basin = synth_basin(7, 5, 5, 800)?;
    let graph = build_graph(&basin.dem, &basin.catchment, &basin.targets)?;
    let norm = NormStates::fit(&basin.store, split_range(800, Split::Train))?;
    let dataset = Dataset::new(&basin.store, 24, 6, norm)?;
    let model = ModelConfig::with_width(16, 2, 24, 6);
    let config = TrainConfig {
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };
    let outcome = train(&dataset, &graph, &model, &config)?;

    let starts = dataset.split_starts(Split::Test);
    let record = collect_attention(&dataset, &ModelGraphs::new(&graph), &outcome.best, &model, &starts)?;
    let ids = &graph.station_ids;
    for (h, m) in record.spatial.iter().enumerate() {
        println!("head {h}");
        for (k, id) in ids.iter().enumerate() {
            let row: Vec<String> = m.row(k).iter().map(|a| format!("{a:.2}")).collect();
            println!("  {id} <- [{}]", row.join(" "));
        }
    }
    for (k, id) in ids.iter().enumerate() {
        let row = record.temporal.row(k);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        println!("{id}: strongest temporal weight {:.3} at {} steps back", row[peak], row.len() - 1 - peak);
    }
    Ok(())
}
