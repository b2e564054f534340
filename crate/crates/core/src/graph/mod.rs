//! Basin graph construction from a digital elevation model.

mod basin;
mod d8;
mod dem;
mod fill;

pub use basin::{
    build_graph, extract_subgraph, in_neighbors, read_catchment_csv, read_targets_csv, remap_edges, target_specs,
    write_catchment_csv, write_targets_csv, BasinGraph, CatchmentPair, GridInfo, Relation, TargetSpec,
};
pub use d8::{d8_flow_direction, d8_receivers};
pub use dem::{DemGrid, D8_OFFSETS};
pub use fill::fill_depressions;
