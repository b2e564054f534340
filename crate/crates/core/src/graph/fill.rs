use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::dem::{DemGrid, D8_OFFSETS};
use crate::error::{Error, Result};

#[derive(PartialEq)]
struct Open {
    elevation: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // Min-heap on elevation, then index for a stable pop order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .elevation
            .total_cmp(&self.elevation)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority-flood depression filling.
///
/// Edge cells (grid border or next to nodata) seed the queue unchanged.
/// Cells are then popped lowest-first and every unvisited neighbor is raised
/// to at least the popped elevation, which yields the minimal surface with a
/// non-increasing drainage path from every cell to an edge.
pub fn fill_depressions(dem: &DemGrid) -> Result<DemGrid> {
    dem.validate()?;
    if dem.data_cells().next().is_none() {
        return Err(Error::invalid("grid has no data cells"));
    }
    let mut out = dem.clone();
    let mut closed = vec![false; dem.len()];
    let mut open = BinaryHeap::new();
    for i in dem.data_cells() {
        if dem.is_edge_cell(i) {
            closed[i] = true;
            open.push(Open {
                elevation: dem.elevations[i],
                index: i,
            });
        }
    }
    while let Some(Open { elevation, index }) = open.pop() {
        for &offset in &D8_OFFSETS {
            let Some(n) = dem.neighbor(index, offset) else { continue };
            if closed[n] || dem.is_nodata(n) {
                continue;
            }
            closed[n] = true;
            let raised = out.elevations[n].max(elevation);
            out.elevations[n] = raised;
            open.push(Open {
                elevation: raised,
                index: n,
            });
        }
    }
    Ok(out)
}
