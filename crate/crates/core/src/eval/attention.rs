use std::io::Write;
use std::path::{Path, PathBuf};

use super::stitch::forecast_windows;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{AttentionRecord, ForwardOptions, ModelConfig, ModelGraphs, ModelState};

/// Attention averaged over the windows starting at `starts`.
pub fn collect_attention(
    dataset: &Dataset,
    graphs: &ModelGraphs,
    state: &ModelState,
    config: &ModelConfig,
    starts: &[usize],
) -> Result<AttentionRecord> {
    if starts.is_empty() {
        return Err(Error::invalid("attention needs at least one sample"));
    }
    let options = ForwardOptions {
        capture_attention: true,
        ..ForwardOptions::default()
    };
    let (_, record) = forecast_windows(dataset, graphs, state, config, starts, &options)?;
    Ok(record.expect("attention captured"))
}

/// Writes `spatial_head{h}.csv` (receiving station per row, sending
/// station per column) and `temporal_{station}.csv` for the requested
/// stations, or all of them when `stations` is empty. Returns the paths.
pub fn write_attention(dir: &Path, record: &AttentionRecord, station_ids: &[String], stations: &[String]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let k = station_ids.len();
    if record.temporal.rows() != k {
        return Err(Error::invalid("attention record does not match the station list"));
    }
    let mut written = Vec::new();
    let emit = |path: &Path, body: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    };
    for (h, m) in record.spatial.iter().enumerate() {
        let path = dir.join(format!("spatial_head{h}.csv"));
        emit(&path, &|w| {
            writeln!(w, "station,{}", station_ids.join(","))?;
            for (i, id) in station_ids.iter().enumerate() {
                let row: Vec<String> = m.row(i).iter().map(f64::to_string).collect();
                writeln!(w, "{id},{}", row.join(","))?;
            }
            Ok(())
        })?;
        written.push(path);
    }
    let t_in = record.temporal.cols();
    for (s, id) in station_ids.iter().enumerate() {
        if !stations.is_empty() && !stations.contains(id) {
            continue;
        }
        let path = dir.join(format!("temporal_{id}.csv"));
        emit(&path, &|w| {
            writeln!(w, "step,offset,attention")?;
            for (j, v) in record.temporal.row(s).iter().enumerate() {
                writeln!(w, "{j},{},{v}", j as i64 - (t_in as i64 - 1))?;
            }
            Ok(())
        })?;
        written.push(path);
    }
    for id in stations {
        if !station_ids.contains(id) {
            return Err(Error::invalid(format!("unknown station `{id}`")));
        }
    }
    Ok(written)
}
