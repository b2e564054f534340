use std::ops::Range;
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};

use super::impute::{impute_upstream, interpolate_downstream};
use crate::error::{Error, Result};
use crate::graph::BasinGraph;

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Hourly per-node forcing and per-station discharge.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStore {
    pub num_nodes: usize,
    pub horizon: usize,
    /// UTC hour of every step, strictly increasing.
    pub timestamps: Vec<NaiveDateTime>,
    /// `[num_nodes × horizon]` in mm/h, node-major.
    pub precipitation: Vec<f64>,
    /// `[num_targets × horizon]` in m³/s, station-major; `None` is missing.
    pub discharge: Vec<Option<f64>>,
    /// Node id of each discharge row.
    pub target_index: Vec<usize>,
    pub station_ids: Vec<String>,
}

impl SeriesStore {
    pub fn num_targets(&self) -> usize {
        self.target_index.len()
    }

    pub fn precip_row(&self, node: usize) -> &[f64] {
        &self.precipitation[node * self.horizon..(node + 1) * self.horizon]
    }

    pub fn discharge_row(&self, station: usize) -> &[Option<f64>] {
        &self.discharge[station * self.horizon..(station + 1) * self.horizon]
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.horizon {
            return Err(Error::invalid("timestamp count differs from horizon"));
        }
        if self.precipitation.len() != self.num_nodes * self.horizon {
            return Err(Error::invalid("precipitation block has the wrong size"));
        }
        if self.discharge.len() != self.num_targets() * self.horizon || self.station_ids.len() != self.num_targets() {
            return Err(Error::invalid("discharge rows do not align with targets"));
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("timestamps are not strictly increasing"));
        }
        if self.precipitation.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("precipitation must be finite and non-negative"));
        }
        Ok(())
    }

    /// Maximal runs of consecutive hours.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for t in 1..=self.horizon {
            if t == self.horizon || self.timestamps[t] - self.timestamps[t - 1] != TimeDelta::hours(1) {
                out.push(start..t);
                start = t;
            }
        }
        out
    }

    /// Two-step gap filling. Stations with a gauge downstream on their flow
    /// path are regressed on it; the rest are interpolated in time. A station
    /// whose regression is degenerate falls back to interpolation.
    pub fn impute_discharge(&mut self, graph: &BasinGraph) -> Result<()> {
        let k = self.num_targets();
        let rec = graph.receivers();
        let station_of = |node: usize| self.target_index.iter().position(|&t| t == node);
        let downstream: Vec<Option<usize>> = (0..k)
            .map(|s| {
                let mut cur = rec[self.target_index[s]];
                while let Some(n) = cur {
                    if let Some(d) = station_of(n) {
                        return Some(d);
                    }
                    cur = rec[n];
                }
                None
            })
            .collect();
        let mut filled: Vec<Option<Vec<f64>>> = vec![None; k];
        // downstream stations first; the gauge chain is acyclic
        let mut order = Vec::with_capacity(k);
        let mut placed = vec![false; k];
        while order.len() < k {
            for s in 0..k {
                if !placed[s] && downstream[s].is_none_or(|d| placed[d]) {
                    placed[s] = true;
                    order.push(s);
                }
            }
        }
        for s in order {
            let row = self.discharge_row(s).to_vec();
            let values = match downstream[s] {
                Some(d) => {
                    let down = filled[d].as_ref().expect("downstream filled first");
                    match impute_upstream(&row, down) {
                        Ok(fit) => {
                            log::debug!("impute station={} a={:.4} b={:.4}", self.station_ids[s], fit.a, fit.b);
                            fit.values
                        }
                        Err(Error::DegenerateRegression(why)) => {
                            log::warn!("impute station={} fallback=interpolate reason={why:?}", self.station_ids[s]);
                            interpolate_downstream(&row)?
                        }
                        Err(e) => return Err(e),
                    }
                }
                None => interpolate_downstream(&row)?,
            };
            filled[s] = Some(values);
        }
        for (s, values) in filled.into_iter().enumerate() {
            let values = values.expect("every station filled");
            for (t, v) in values.into_iter().enumerate() {
                self.discharge[s * self.horizon + t] = Some(v);
            }
        }
        Ok(())
    }

    /// Writes `precipitation.csv` (one column per node id) and
    /// `discharge.csv` (one column per station id) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let header: Vec<String> = (0..self.num_nodes).map(|n| n.to_string()).collect();
        write_table(&dir.join("precipitation.csv"), &header, &self.timestamps, |t, c| {
            Some(self.precipitation[c * self.horizon + t])
        })?;
        write_table(&dir.join("discharge.csv"), &self.station_ids, &self.timestamps, |t, c| {
            self.discharge[c * self.horizon + t]
        })
    }

    /// Reads the two tables written by [`SeriesStore::write_csv`], aligning
    /// columns to the graph's node ids and station order. Negative or
    /// missing precipitation is cleaned to zero.
    pub fn read_csv(precipitation: &Path, discharge: &Path, graph: &BasinGraph) -> Result<Self> {
        let (p_header, p_times, p_rows) = read_table(precipitation)?;
        let (q_header, q_times, q_rows) = read_table(discharge)?;
        if p_times != q_times {
            return Err(Error::parse(discharge, "timestamps differ from the precipitation table"));
        }
        let horizon = p_times.len();
        let n = graph.num_nodes;
        let mut precip = vec![0.0; n * horizon];
        let mut seen = vec![false; n];
        let mut cleaned = 0usize;
        for (c, name) in p_header.iter().enumerate() {
            let node: usize = name
                .parse()
                .ok()
                .filter(|&v| v < n)
                .ok_or_else(|| Error::parse(precipitation, format!("column {name:?} is not a node id")))?;
            seen[node] = true;
            for t in 0..horizon {
                let v = p_rows[t][c].filter(|v| *v >= 0.0);
                if v.is_none() {
                    cleaned += 1;
                }
                precip[node * horizon + t] = v.unwrap_or(0.0);
            }
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(Error::parse(precipitation, format!("no column for node {node}")));
        }
        if cleaned > 0 {
            log::warn!("precipitation cleaned={cleaned} path={}", precipitation.display());
        }
        let k = graph.num_targets();
        let mut q = vec![None; k * horizon];
        for (s, id) in graph.station_ids.iter().enumerate() {
            let c = q_header
                .iter()
                .position(|h| h == id)
                .ok_or_else(|| Error::parse(discharge, format!("no column for station {id:?}")))?;
            for t in 0..horizon {
                q[s * horizon + t] = q_rows[t][c];
            }
        }
        let store = Self {
            num_nodes: n,
            horizon,
            timestamps: p_times,
            precipitation: precip,
            discharge: q,
            target_index: graph.targets.clone(),
            station_ids: graph.station_ids.clone(),
        };
        store.validate().map_err(|e| Error::parse(precipitation, e.to_string()))?;
        Ok(store)
    }
}

pub fn format_time(t: &NaiveDateTime) -> String {
    t.format(TIME_FORMAT).to_string()
}

pub fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim().trim_end_matches('Z');
    ["%Y-%m-%dT%H:%M:%S", TIME_FORMAT, "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

type Table = (Vec<String>, Vec<NaiveDateTime>, Vec<Vec<Option<f64>>>);

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let stamp = record.get(0).unwrap_or_default();
        times.push(parse_time(stamp).ok_or_else(|| Error::parse(path, format!("row {}: bad timestamp {stamp:?}", line + 2)))?);
        let values = record
            .iter()
            .skip(1)
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::parse(path, format!("row {}: bad number {cell:?}", line + 2)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != header.len() {
            return Err(Error::parse(path, format!("row {} has {} values", line + 2, values.len())));
        }
        rows.push(values);
    }
    Ok((header, times, rows))
}

fn write_table(
    path: &Path,
    header: &[String],
    times: &[NaiveDateTime],
    value: impl Fn(usize, usize) -> Option<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let csv_err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(std::iter::once("timestamp").chain(header.iter().map(String::as_str)))
        .map_err(csv_err)?;
    for (t, stamp) in times.iter().enumerate() {
        let mut record = vec![format_time(stamp)];
        record.extend((0..header.len()).map(|c| value(t, c).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
