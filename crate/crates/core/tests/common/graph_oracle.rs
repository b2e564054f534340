//! Independent reference implementations for the DEM pipeline.

use hydrogat::graph::DemGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NEIGHBORS: [(isize, isize); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

fn at(dem: &DemGrid, r: isize, c: isize) -> Option<usize> {
    (r >= 0 && c >= 0 && (r as usize) < dem.rows && (c as usize) < dem.cols).then(|| r as usize * dem.cols + c as usize)
}

fn nodata(dem: &DemGrid, i: usize) -> bool {
    dem.elevations[i] == dem.nodata
}

/// Planchon-Darboux relaxation: start from +inf inside, lower to
/// `max(dem, min neighbor)` until nothing moves.
pub fn fill_by_relaxation(dem: &DemGrid) -> Vec<f64> {
    let n = dem.rows * dem.cols;
    let mut w = vec![f64::INFINITY; n];
    for r in 0..dem.rows as isize {
        for c in 0..dem.cols as isize {
            let i = at(dem, r, c).unwrap();
            if nodata(dem, i) {
                w[i] = dem.elevations[i];
                continue;
            }
            let border = NEIGHBORS
                .iter()
                .any(|&(dr, dc)| at(dem, r + dr, c + dc).is_none_or(|j| nodata(dem, j)));
            if border {
                w[i] = dem.elevations[i];
            }
        }
    }
    loop {
        let mut changed = false;
        for r in 0..dem.rows as isize {
            for c in 0..dem.cols as isize {
                let i = at(dem, r, c).unwrap();
                if nodata(dem, i) || w[i] == dem.elevations[i] {
                    continue;
                }
                let lowest = NEIGHBORS
                    .iter()
                    .filter_map(|&(dr, dc)| at(dem, r + dr, c + dc))
                    .filter(|&j| !nodata(dem, j))
                    .map(|j| w[j])
                    .fold(f64::INFINITY, f64::min);
                let next = dem.elevations[i].max(lowest);
                if next < w[i] {
                    w[i] = next;
                    changed = true;
                }
            }
        }
        if !changed {
            return w;
        }
    }
}

/// Steepest strictly-downhill neighbor by scanning all eight directions and
/// keeping the first maximum.
pub fn steepest_by_scan(dem: &DemGrid) -> Vec<Option<usize>> {
    let mut out = vec![None; dem.rows * dem.cols];
    for r in 0..dem.rows as isize {
        for c in 0..dem.cols as isize {
            let i = at(dem, r, c).unwrap();
            if nodata(dem, i) {
                continue;
            }
            let slopes: Vec<(f64, usize)> = NEIGHBORS
                .iter()
                .filter_map(|&(dr, dc)| {
                    let j = at(dem, r + dr, c + dc)?;
                    let drop = dem.elevations[i] - dem.elevations[j];
                    if nodata(dem, j) || drop <= 0.0 {
                        return None;
                    }
                    let dist = ((dr * dr + dc * dc) as f64).sqrt() * dem.cell_size;
                    Some((drop / dist, j))
                })
                .collect();
            let max = slopes.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
            out[i] = slopes.iter().find(|s| s.0 == max).map(|s| s.1);
        }
    }
    out
}

/// Rough terrain with pits, plateaus and optional nodata holes.
pub fn random_dem(seed: u64, rows: usize, cols: usize, with_nodata: bool) -> DemGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e: Vec<f64> = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            // integer-rounded terrain creates flats and exact slope ties
            (0.3 * r + 0.2 * c + rng.random_range(0.0..6.0)).round()
        })
        .collect();
    if with_nodata {
        for _ in 0..rng.random_range(1..6) {
            let i = rng.random_range(0..rows * cols);
            e[i] = -9999.0;
        }
    }
    DemGrid::new(rows, cols, 30.0, -9999.0, e).unwrap()
}
