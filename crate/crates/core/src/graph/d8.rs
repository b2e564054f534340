use super::dem::{DemGrid, D8_OFFSETS};
use crate::error::Result;

/// Steepest-descent receiver of every data cell, as grid cell indices.
///
/// Cells without a strictly lower neighbor (outlets, and flats left by
/// filling) have no receiver. Slope ties go to the earliest neighbor in
/// [`D8_OFFSETS`] order.
pub fn d8_receivers(dem: &DemGrid) -> Result<Vec<Option<usize>>> {
    dem.validate()?;
    let diag = dem.cell_size * std::f64::consts::SQRT_2;
    let mut receivers = vec![None; dem.len()];
    for u in dem.data_cells() {
        let eu = dem.elevations[u];
        let mut best: Option<(f64, usize)> = None;
        for &offset in &D8_OFFSETS {
            let Some(v) = dem.neighbor(u, offset) else { continue };
            if dem.is_nodata(v) {
                continue;
            }
            let drop = eu - dem.elevations[v];
            if drop <= 0.0 {
                continue;
            }
            let dist = if offset.0 != 0 && offset.1 != 0 { diag } else { dem.cell_size };
            let slope = drop / dist;
            if best.is_none_or(|(s, _)| slope > s) {
                best = Some((slope, v));
            }
        }
        receivers[u] = best.map(|(_, v)| v);
    }
    Ok(receivers)
}

/// D8 flow edges `(src, dst)` over grid cell indices, ordered by source.
pub fn d8_flow_direction(dem: &DemGrid) -> Result<Vec<(usize, usize)>> {
    Ok(d8_receivers(dem)?
        .into_iter()
        .enumerate()
        .filter_map(|(u, v)| v.map(|v| (u, v)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn east_tilted_plane_flows_east() {
        let (rows, cols) = (4, 6);
        let e: Vec<f64> = (0..rows * cols).map(|i| 100.0 - (i % cols) as f64).collect();
        let dem = DemGrid::new(rows, cols, 10.0, -9999.0, e).unwrap();
        let rec = d8_receivers(&dem).unwrap();
        for i in 0..rows * cols {
            let (r, c) = dem.coords(i);
            if c + 1 < cols {
                assert_eq!(rec[i], Some(dem.index(r, c + 1)));
            } else {
                assert_eq!(rec[i], None);
            }
        }
    }

    #[test]
    fn diagonal_distance_is_longer() {
        // east drop 1 (slope 1), southeast drop 1.3 (slope 0.92): east wins
        let e = vec![10.0, 9.0, 9.0, 9.0, 10.0, 8.7, 9.0, 9.0, 9.0];
        let dem = DemGrid::new(3, 3, 1.0, -9999.0, e).unwrap();
        assert_eq!(d8_receivers(&dem).unwrap()[0], Some(1));
    }

    #[test]
    fn ties_follow_scan_order() {
        // E and S have identical drops from the corner
        let e = vec![5.0, 4.0, 4.0, 4.0, 6.0, 6.0, 4.0, 6.0, 6.0];
        let dem = DemGrid::new(3, 3, 1.0, -9999.0, e).unwrap();
        assert_eq!(d8_receivers(&dem).unwrap()[0], Some(1));
    }

    #[test]
    fn edges_never_exceed_data_cells() {
        let e = vec![3.0, 2.0, 1.0, 2.0, -1.0, 0.5];
        let dem = DemGrid::new(2, 3, 1.0, -1.0, e).unwrap();
        let edges = d8_flow_direction(&dem).unwrap();
        assert!(edges.len() <= dem.data_cells().count());
        assert!(edges.iter().all(|&(u, v)| !dem.is_nodata(u) && !dem.is_nodata(v)));
    }
}
