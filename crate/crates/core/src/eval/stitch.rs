use std::io::Write;
use std::path::Path;

use crate::data::{format_time, Dataset, SeriesStore};
use crate::error::{Error, Result};
use crate::model::{predict_batch, AttentionRecord, ForwardOptions, ModelConfig, ModelGraphs, ModelState};
use crate::tensor::Tensor;

/// Forecast of one window in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowForecast {
    /// Timestep of lead 1.
    pub origin: usize,
    /// `[K, T_out]`.
    pub values: Tensor,
}

/// Overlapping window forecasts averaged per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastFrame {
    /// First timestep of the frame.
    pub start: usize,
    pub len: usize,
    pub num_stations: usize,
    pub t_out: usize,
    /// `[K × len]`, station-major; zero where nothing covers the step.
    pub values: Vec<f64>,
    /// Windows covering each step.
    pub coverage: Vec<usize>,
    pub windows: Vec<WindowForecast>,
}

impl ForecastFrame {
    /// Stitched value of `station` at absolute timestep `t`.
    pub fn value(&self, station: usize, t: usize) -> Option<f64> {
        let i = t.checked_sub(self.start).filter(|&i| i < self.len)?;
        (self.coverage[i] > 0).then(|| self.values[station * self.len + i])
    }

    /// Absolute timesteps with at least one contributing window.
    pub fn covered_steps(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.coverage[i] > 0).map(|i| self.start + i)
    }

    /// `timestamp,station,predicted,observed,coverage`; missing
    /// observations are left blank.
    pub fn write_csv(&self, path: &Path, store: &SeriesStore) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut out = || -> std::io::Result<()> {
            writeln!(w, "timestamp,station,predicted,observed,coverage")?;
            for s in 0..self.num_stations {
                for t in self.covered_steps() {
                    let obs = store.discharge_row(s)[t].map(|v| v.to_string()).unwrap_or_default();
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        format_time(&store.timestamps[t]),
                        store.station_ids[s],
                        self.value(s, t).expect("covered"),
                        obs,
                        self.coverage[t - self.start]
                    )?;
                }
            }
            w.flush()
        };
        out().map_err(|e| Error::io(path, e))
    }
}

/// `origin,station,lead,predicted`, one row per window, station and lead.
pub fn write_windows_csv(path: &Path, windows: &[WindowForecast], station_ids: &[String]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "origin,station,lead,predicted")?;
        for win in windows {
            for (s, id) in station_ids.iter().enumerate() {
                for (j, v) in win.values.row(s).iter().enumerate() {
                    writeln!(w, "{},{id},{},{v}", win.origin, j + 1)?;
                }
            }
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_windows_csv`]; windows come back ordered by origin.
pub fn read_windows_csv(path: &Path, station_ids: &[String]) -> Result<Vec<WindowForecast>> {
    #[derive(serde::Deserialize)]
    struct Row {
        origin: usize,
        station: String,
        lead: usize,
        predicted: f64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut by_origin: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
    let mut t_out = 0;
    for row in reader.deserialize() {
        let r: Row = row.map_err(|e| Error::parse(path, e.to_string()))?;
        let s = station_ids
            .iter()
            .position(|id| *id == r.station)
            .ok_or_else(|| Error::parse(path, format!("unknown station `{}`", r.station)))?;
        if r.lead == 0 {
            return Err(Error::parse(path, "leads start at 1"));
        }
        t_out = t_out.max(r.lead);
        by_origin.entry(r.origin).or_default().push((s, r.lead - 1, r.predicted));
    }
    let k = station_ids.len();
    by_origin
        .into_iter()
        .map(|(origin, cells)| {
            if cells.len() != k * t_out {
                return Err(Error::parse(path, format!("window at {origin} is incomplete")));
            }
            let mut values = vec![f64::NAN; k * t_out];
            for (s, j, v) in cells {
                values[s * t_out + j] = v;
            }
            if values.iter().any(|v| v.is_nan()) {
                return Err(Error::parse(path, format!("window at {origin} repeats an entry")));
            }
            Ok(WindowForecast {
                origin,
                values: Tensor::new(vec![k, t_out], values)?,
            })
        })
        .collect()
}

/// Averages overlapping window forecasts per timestep.
pub fn stitch(windows: &[WindowForecast]) -> Result<ForecastFrame> {
    let first = windows.first().ok_or_else(|| Error::invalid("no windows to stitch"))?;
    let shape = first.values.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::shape("stitch", &shape, &[0, 0]));
    }
    if let Some(w) = windows.iter().find(|w| w.values.shape() != shape.as_slice()) {
        return Err(Error::shape("stitch", &shape, w.values.shape()));
    }
    let (k, t_out) = (shape[0], shape[1]);
    let start = windows.iter().map(|w| w.origin).min().expect("non-empty");
    let len = windows.iter().map(|w| w.origin + t_out).max().expect("non-empty") - start;
    let mut values = vec![0.0; k * len];
    let mut coverage = vec![0; len];
    for w in windows {
        let off = w.origin - start;
        for c in &mut coverage[off..off + t_out] {
            *c += 1;
        }
        for s in 0..k {
            for (acc, v) in values[s * len + off..s * len + off + t_out].iter_mut().zip(w.values.row(s)) {
                *acc += v;
            }
        }
    }
    for s in 0..k {
        for (v, &c) in values[s * len..(s + 1) * len].iter_mut().zip(&coverage) {
            if c > 0 {
                *v /= c as f64;
            }
        }
    }
    Ok(ForecastFrame {
        start,
        len,
        num_stations: k,
        t_out,
        values,
        coverage,
        windows: windows.to_vec(),
    })
}

/// Evaluation-mode forecasts for the windows starting at `starts`,
/// denormalized to discharge units, with the attention record when
/// `options.capture_attention` is set.
pub fn forecast_windows(
    dataset: &Dataset,
    graphs: &ModelGraphs,
    state: &ModelState,
    config: &ModelConfig,
    starts: &[usize],
    options: &ForwardOptions,
) -> Result<(Vec<WindowForecast>, Option<AttentionRecord>)> {
    let (k, t_out) = (graphs.targets.len(), config.t_out);
    let mut out = Vec::with_capacity(starts.len());
    let mut record: Option<AttentionRecord> = None;
    for chunk in starts.chunks(64) {
        let batch = dataset.batch(chunk);
        let (pred, att) = predict_batch(graphs, state, config, &batch, options)?;
        for (b, &t) in chunk.iter().enumerate() {
            let vals = pred.data()[b * k * t_out..(b + 1) * k * t_out]
                .iter()
                .map(|&v| dataset.norm.discharge.invert(v))
                .collect();
            out.push(WindowForecast {
                origin: t + dataset.t_in,
                values: Tensor::new(vec![k, t_out], vals)?,
            });
        }
        match (&mut record, att) {
            (Some(r), Some(a)) => r.merge(&a)?,
            (None, Some(a)) => record = Some(a),
            _ => {}
        }
    }
    Ok((out, record))
}
