use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::stitch::ForecastFrame;
use crate::data::SeriesStore;
use crate::error::{Error, Result};

/// Goodness-of-fit scores in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub nse: f64,
    pub kge: f64,
    /// KGE components: correlation, variability ratio, bias ratio.
    pub kge_r: f64,
    pub kge_alpha: f64,
    pub kge_beta: f64,
    /// Percent.
    pub pbias: f64,
    pub nrmse: f64,
    pub nmae: f64,
    pub mape: f64,
    /// Zero observations left out of MAPE.
    pub mape_excluded: usize,
    pub n: usize,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// NSE, KGE (2009 form), PBIAS, NRMSE, NMAE and MAPE of `pred` against
/// `obs`. A constant prediction has correlation 0.
pub fn metrics(pred: &[f64], obs: &[f64]) -> Result<Metrics> {
    if pred.len() != obs.len() || obs.len() < 2 {
        return Err(Error::invalid(format!(
            "metrics need equal series of length >= 2, got {} and {}",
            pred.len(),
            obs.len()
        )));
    }
    let n = obs.len() as f64;
    let (mo, mp) = (mean(obs), mean(pred));
    let sso: f64 = obs.iter().map(|o| (o - mo).powi(2)).sum();
    let ssp: f64 = pred.iter().map(|p| (p - mp).powi(2)).sum();
    if sso == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "nse",
            reason: "observations are constant".into(),
        });
    }
    let sum_obs: f64 = obs.iter().sum();
    if sum_obs == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "pbias",
            reason: "observations sum to zero".into(),
        });
    }
    let sse: f64 = pred.iter().zip(obs).map(|(p, o)| (o - p).powi(2)).sum();
    let sae: f64 = pred.iter().zip(obs).map(|(p, o)| (o - p).abs()).sum();
    let cov: f64 = pred.iter().zip(obs).map(|(p, o)| (p - mp) * (o - mo)).sum();
    let kge_r = if ssp == 0.0 { 0.0 } else { cov / (ssp * sso).sqrt() };
    let kge_alpha = (ssp / sso).sqrt();
    let kge_beta = mp / mo;
    let kge = 1.0 - ((kge_r - 1.0).powi(2) + (kge_alpha - 1.0).powi(2) + (kge_beta - 1.0).powi(2)).sqrt();
    let nonzero: Vec<f64> = pred
        .iter()
        .zip(obs)
        .filter(|(_, o)| **o != 0.0)
        .map(|(p, o)| (p - o).abs() / o.abs())
        .collect();
    Ok(Metrics {
        nse: 1.0 - sse / sso,
        kge,
        kge_r,
        kge_alpha,
        kge_beta,
        pbias: 100.0 * pred.iter().zip(obs).map(|(p, o)| p - o).sum::<f64>() / sum_obs,
        nrmse: (sse / n).sqrt() / mo,
        nmae: sae / n / mo,
        mape: mean(&nonzero),
        mape_excluded: obs.len() - nonzero.len(),
        n: obs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// All stations pooled, plus the mean of per-station scores.
    Basin,
    PerStation,
    /// Raw window values at each lead, pooled over stations.
    PerLeadHour,
    PerYear,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [Grouping::Basin, Grouping::PerStation, Grouping::PerLeadHour, Grouping::PerYear];
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basin" => Ok(Grouping::Basin),
            "per-station" | "station" => Ok(Grouping::PerStation),
            "per-lead-hour" | "lead" => Ok(Grouping::PerLeadHour),
            "per-year" | "year" => Ok(Grouping::PerYear),
            _ => Err(Error::invalid(format!("unknown grouping `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub group: String,
    pub station: String,
    pub lead: Option<usize>,
    pub metrics: Metrics,
}

/// Stitched prediction and observation pairs of `station` over the
/// covered, observed steps accepted by `keep`.
fn station_pairs(frame: &ForecastFrame, store: &SeriesStore, station: usize, keep: impl Fn(usize) -> bool) -> (Vec<f64>, Vec<f64>) {
    let obs = store.discharge_row(station);
    frame
        .covered_steps()
        .filter(|&t| keep(t))
        .filter_map(|t| Some((frame.value(station, t)?, obs.get(t).copied().flatten()?)))
        .unzip()
}

/// Metric table for each requested grouping against the observations in
/// `store`. Missing observations are skipped.
pub fn evaluate(frame: &ForecastFrame, store: &SeriesStore, groupings: &[Grouping]) -> Result<Vec<MetricRow>> {
    if store.num_targets() != frame.num_stations || frame.start + frame.len > store.horizon {
        return Err(Error::invalid("forecast frame does not align with the observations"));
    }
    let k = frame.num_stations;
    let row = |group: String, station: &str, lead, pairs: (Vec<f64>, Vec<f64>)| -> Result<MetricRow> {
        Ok(MetricRow {
            group,
            station: station.to_string(),
            lead,
            metrics: metrics(&pairs.0, &pairs.1)?,
        })
    };
    let mut rows = Vec::new();
    for g in groupings {
        match g {
            Grouping::Basin => {
                let (mut p, mut o) = (Vec::new(), Vec::new());
                let mut per_station = Vec::new();
                for s in 0..k {
                    let (ps, os) = station_pairs(frame, store, s, |_| true);
                    per_station.push(metrics(&ps, &os)?);
                    p.extend(ps);
                    o.extend(os);
                }
                rows.push(row("basin".into(), "all", None, (p, o))?);
                rows.push(MetricRow {
                    group: "basin_station_mean".into(),
                    station: "all".into(),
                    lead: None,
                    metrics: average(&per_station),
                });
            }
            Grouping::PerStation => {
                for s in 0..k {
                    rows.push(row("station".into(), &store.station_ids[s], None, station_pairs(frame, store, s, |_| true))?);
                }
            }
            Grouping::PerLeadHour => {
                for lead in 1..=frame.t_out {
                    let (mut p, mut o) = (Vec::new(), Vec::new());
                    for w in &frame.windows {
                        let t = w.origin + lead - 1;
                        for s in 0..k {
                            if let Some(v) = store.discharge_row(s)[t] {
                                p.push(w.values.get(&[s, lead - 1]));
                                o.push(v);
                            }
                        }
                    }
                    rows.push(row("lead".into(), "all", Some(lead), (p, o))?);
                }
            }
            Grouping::PerYear => {
                let mut years: Vec<i32> = frame.covered_steps().map(|t| store.timestamps[t].year()).collect();
                years.dedup();
                years.sort_unstable();
                years.dedup();
                for y in years {
                    let (mut p, mut o) = (Vec::new(), Vec::new());
                    for s in 0..k {
                        let (ps, os) = station_pairs(frame, store, s, |t| store.timestamps[t].year() == y);
                        p.extend(ps);
                        o.extend(os);
                    }
                    rows.push(row(format!("year:{y}"), "all", None, (p, o))?);
                }
            }
        }
    }
    Ok(rows)
}

fn average(all: &[Metrics]) -> Metrics {
    let m = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / all.len() as f64;
    Metrics {
        nse: m(|x| x.nse),
        kge: m(|x| x.kge),
        kge_r: m(|x| x.kge_r),
        kge_alpha: m(|x| x.kge_alpha),
        kge_beta: m(|x| x.kge_beta),
        pbias: m(|x| x.pbias),
        nrmse: m(|x| x.nrmse),
        nmae: m(|x| x.nmae),
        mape: m(|x| x.mape),
        mape_excluded: all.iter().map(|x| x.mape_excluded).sum(),
        n: all.iter().map(|x| x.n).sum(),
    }
}

/// `group,station,lead,nse,kge,pbias,nrmse,nmae,mape` followed by the KGE
/// components, the MAPE exclusion count and the pair count.
pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "group,station,lead,nse,kge,pbias,nrmse,nmae,mape,kge_r,kge_alpha,kge_beta,mape_excluded,n")?;
        for r in rows {
            let m = &r.metrics;
            let lead = r.lead.map(|l| l.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{lead},{},{},{},{},{},{},{},{},{},{},{}",
                r.group, r.station, m.nse, m.kge, m.pbias, m.nrmse, m.nmae, m.mape, m.kge_r, m.kge_alpha, m.kge_beta, m.mape_excluded, m.n
            )?;
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path, e))
}

/// Rows keyed by group for quick lookup.
pub fn index_rows(rows: &[MetricRow]) -> BTreeMap<(String, String, Option<usize>), Metrics> {
    rows.iter()
        .map(|r| ((r.group.clone(), r.station.clone(), r.lead), r.metrics))
        .collect()
}
