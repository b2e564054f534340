use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::norm::{NormState, NormStates};
use super::series::SeriesStore;
use crate::error::{Error, Result};
use crate::graph::BasinGraph;
use crate::tensor::Tensor;

/// Input channels per node and step: precipitation, discharge, availability.
pub const NUM_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Contiguous time range of a split: the first 4/7 of the horizon trains,
/// the next 1/7 validates, the last 2/7 tests.
pub fn split_range(horizon: usize, split: Split) -> Range<usize> {
    let a = horizon * 4 / 7;
    let b = horizon * 5 / 7;
    match split {
        Split::Train => 0..a,
        Split::Validation => a..b,
        Split::Test => b..horizon,
    }
}

/// Partition of `0..num_windows` into contiguous per-worker chunks. The
/// first `num_windows % num_workers` workers get one extra window.
pub fn sequential_sampler(num_windows: usize, num_workers: usize, worker_id: usize) -> Result<Range<usize>> {
    if num_workers == 0 || worker_id >= num_workers {
        return Err(Error::invalid(format!("worker {worker_id} of {num_workers}")));
    }
    if num_workers > num_windows {
        return Err(Error::invalid(format!("{num_workers} workers for {num_windows} windows")));
    }
    let base = num_windows / num_workers;
    let extra = num_windows % num_workers;
    let start = worker_id * base + worker_id.min(extra);
    let len = base + usize::from(worker_id < extra);
    Ok(start..start + len)
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub t_start: usize,
    /// `[N, T_in, F]`.
    pub inputs: Tensor,
    /// `[N, T_out]`, normalized future precipitation.
    pub forecast_rain: Tensor,
    /// `[K, T_out]`, normalized future discharge at targets.
    pub labels: Tensor,
    /// `[K, T_out]`, 1 where the label was observed.
    pub label_mask: Tensor,
}

/// Several windows stacked sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub t_starts: Vec<usize>,
    /// `[B·N, T_in, F]`.
    pub inputs: Tensor,
    /// `[B·N, T_out]`.
    pub forecast_rain: Tensor,
    /// `[B·K, T_out]`.
    pub labels: Tensor,
    pub label_mask: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.t_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_starts.is_empty()
    }
}

/// Normalized series ready for windowing. Windows never cross a gap in the
/// timestamps.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub num_nodes: usize,
    pub targets: Vec<usize>,
    pub horizon: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub norm: NormStates,
    precip: Vec<f64>,
    discharge: Vec<f64>,
    /// Discharge present as model input.
    available: Vec<bool>,
    /// Discharge present as a label.
    observed: Vec<bool>,
    blocks: Vec<Range<usize>>,
}

impl NormStates {
    /// Fits both channels over the time steps in `range`, pooling all nodes.
    pub fn fit(store: &SeriesStore, range: Range<usize>) -> Result<Self> {
        let h = store.horizon;
        let precip = (0..store.num_nodes).flat_map(|n| &store.precipitation[n * h + range.start..n * h + range.end]);
        let discharge = (0..store.num_targets())
            .flat_map(|s| &store.discharge[s * h + range.start..s * h + range.end])
            .filter_map(|v| v.as_ref());
        Ok(Self {
            precipitation: NormState::fit(precip)?,
            discharge: NormState::fit(discharge)?,
        })
    }
}

impl Dataset {
    pub fn new(store: &SeriesStore, t_in: usize, t_out: usize, norm: NormStates) -> Result<Self> {
        store.validate()?;
        if t_in == 0 || t_out == 0 {
            return Err(Error::invalid("window lengths must be positive"));
        }
        if store.horizon < t_in + t_out {
            return Err(Error::invalid(format!(
                "horizon {} shorter than one window ({t_in} + {t_out})",
                store.horizon
            )));
        }
        let precip = store.precipitation.iter().map(|&p| norm.precipitation.apply(p)).collect();
        let discharge = store
            .discharge
            .iter()
            .map(|q| q.map_or(0.0, |q| norm.discharge.apply(q)))
            .collect();
        let observed: Vec<bool> = store.discharge.iter().map(Option::is_some).collect();
        Ok(Self {
            num_nodes: store.num_nodes,
            targets: store.target_index.clone(),
            horizon: store.horizon,
            t_in,
            t_out,
            norm,
            precip,
            discharge,
            available: observed.clone(),
            observed,
            blocks: store.blocks(),
        })
    }

    /// Like [`Dataset::new`] with discharge inputs gap-filled by
    /// [`SeriesStore::impute_discharge`]. Labels stay masked wherever the raw
    /// series is missing.
    pub fn imputed(raw: &SeriesStore, graph: &BasinGraph, t_in: usize, t_out: usize, norm: NormStates) -> Result<Self> {
        let mut filled = raw.clone();
        filled.impute_discharge(graph)?;
        let mut ds = Self::new(&filled, t_in, t_out, norm)?;
        ds.observed = raw.discharge.iter().map(Option::is_some).collect();
        Ok(ds)
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn window_len(&self) -> usize {
        self.t_in + self.t_out
    }

    /// Start steps of all windows lying inside `range` and inside one block.
    pub fn window_starts(&self, range: Range<usize>) -> Vec<usize> {
        let len = self.window_len();
        self.blocks
            .iter()
            .flat_map(|b| {
                let lo = b.start.max(range.start);
                let hi = b.end.min(range.end);
                lo..(hi + 1).saturating_sub(len).max(lo)
            })
            .collect()
    }

    pub fn split_starts(&self, split: Split) -> Vec<usize> {
        self.window_starts(split_range(self.horizon, split))
    }

    /// Normalized precipitation at `node`, whole horizon.
    pub fn precip_row(&self, node: usize) -> &[f64] {
        &self.precip[node * self.horizon..(node + 1) * self.horizon]
    }

    pub fn discharge_row(&self, station: usize) -> &[f64] {
        &self.discharge[station * self.horizon..(station + 1) * self.horizon]
    }

    pub fn sample(&self, t_start: usize) -> WindowSample {
        let b = self.batch(&[t_start]);
        let (n, k) = (self.num_nodes, self.num_targets());
        WindowSample {
            t_start,
            inputs: b.inputs,
            forecast_rain: b.forecast_rain.reshape([n, self.t_out]).expect("same size"),
            labels: b.labels.reshape([k, self.t_out]).expect("same size"),
            label_mask: b.label_mask.reshape([k, self.t_out]).expect("same size"),
        }
    }

    /// Stacks the windows starting at `starts`.
    pub fn batch(&self, starts: &[usize]) -> Batch {
        let (n, k, h) = (self.num_nodes, self.num_targets(), self.horizon);
        let (t_in, t_out) = (self.t_in, self.t_out);
        let bsz = starts.len();
        let mut station = vec![usize::MAX; n];
        for (s, &node) in self.targets.iter().enumerate() {
            station[node] = s;
        }
        let mut inputs = vec![0.0; bsz * n * t_in * NUM_FEATURES];
        let mut rain = vec![0.0; bsz * n * t_out];
        let mut labels = vec![0.0; bsz * k * t_out];
        let mut mask = vec![0.0; bsz * k * t_out];
        for (b, &s0) in starts.iter().enumerate() {
            for node in 0..n {
                let row = b * n + node;
                let p = &self.precip[node * h..];
                for j in 0..t_in {
                    let o = (row * t_in + j) * NUM_FEATURES;
                    inputs[o] = p[s0 + j];
                    let s = station[node];
                    if s != usize::MAX {
                        let t = s * h + s0 + j;
                        if self.available[t] {
                            inputs[o + 1] = self.discharge[t];
                            inputs[o + 2] = 1.0;
                        }
                    }
                }
                rain[row * t_out..(row + 1) * t_out].copy_from_slice(&p[s0 + t_in..s0 + t_in + t_out]);
            }
            for s in 0..k {
                let row = b * k + s;
                for j in 0..t_out {
                    let t = s * h + s0 + t_in + j;
                    if self.observed[t] {
                        labels[row * t_out + j] = self.discharge[t];
                        mask[row * t_out + j] = 1.0;
                    }
                }
            }
        }
        Batch {
            t_starts: starts.to_vec(),
            inputs: Tensor::from_parts(vec![bsz * n, t_in, NUM_FEATURES], inputs),
            forecast_rain: Tensor::from_parts(vec![bsz * n, t_out], rain),
            labels: Tensor::from_parts(vec![bsz * k, t_out], labels),
            label_mask: Tensor::from_parts(vec![bsz * k, t_out], mask),
        }
    }
}

/// Every window of `store` in time order.
pub fn make_windows(store: &SeriesStore, norm: NormStates, t_in: usize, t_out: usize) -> Result<Vec<WindowSample>> {
    let ds = Dataset::new(store, t_in, t_out, norm)?;
    Ok(ds.window_starts(0..ds.horizon).into_iter().map(|s| ds.sample(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeDelta;
    use proptest::prelude::*;

    fn store(horizon: usize) -> SeriesStore {
        let t0 = super::super::series::parse_time("2012-05-01T00:00").unwrap();
        SeriesStore {
            num_nodes: 3,
            horizon,
            timestamps: (0..horizon).map(|h| t0 + TimeDelta::hours(h as i64)).collect(),
            precipitation: (0..3 * horizon).map(|i| (i % 7) as f64).collect(),
            discharge: (0..horizon).map(|t| (t % 5 != 2).then_some(1.0 + t as f64)).collect(),
            target_index: vec![1],
            station_ids: vec!["g".into()],
        }
    }

    fn norm() -> NormStates {
        let s = NormState { min: 0.0, max: 10.0 };
        NormStates {
            precipitation: s,
            discharge: s,
        }
    }

    #[test]
    fn window_counts() {
        let w = make_windows(&store(200), norm(), 72, 72).unwrap();
        assert_eq!(w.len(), 57);
        assert!(w.windows(2).all(|p| p[1].t_start == p[0].t_start + 1));
        assert_eq!(make_windows(&store(10), norm(), 6, 4).unwrap().len(), 1);
        assert!(make_windows(&store(9), norm(), 6, 4).is_err());
    }

    #[test]
    fn windows_do_not_straddle_gaps() {
        let mut s = store(30);
        for t in 12..30 {
            s.timestamps[t] += TimeDelta::hours(100);
        }
        let ds = Dataset::new(&s, 4, 2, norm()).unwrap();
        let starts = ds.window_starts(0..30);
        assert_eq!(starts.len(), (12 - 6 + 1) + (18 - 6 + 1));
        assert!(!starts.contains(&7) && starts.contains(&6) && starts.contains(&12));
    }

    #[test]
    fn sample_layout() {
        let s = store(20);
        let ds = Dataset::new(&s, 4, 3, norm()).unwrap();
        let w = ds.sample(5);
        assert_eq!(w.inputs.shape(), &[3, 4, NUM_FEATURES]);
        // node 0 is ungauged: discharge and flag zero
        assert_eq!(w.inputs.get(&[0, 1, 1]), 0.0);
        assert_eq!(w.inputs.get(&[0, 1, 2]), 0.0);
        // node 1 at step 5 + 1 = 6 is observed
        assert_eq!(w.inputs.get(&[1, 1, 2]), 1.0);
        assert_eq!(w.inputs.get(&[1, 1, 1]), norm().discharge.apply(7.0));
        // step 7 is missing (7 % 5 == 2)
        assert_eq!(w.inputs.get(&[1, 2, 2]), 0.0);
        assert_eq!(w.forecast_rain.get(&[2, 0]), norm().precipitation.apply(s.precip_row(2)[9]));
        // label steps 9, 10, 11; step 12 would be missing but lies outside
        assert_eq!(w.label_mask.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn batch_rows_are_sample_major() {
        let ds = Dataset::new(&store(20), 4, 3, norm()).unwrap();
        let b = ds.batch(&[2, 6]);
        let second = ds.sample(6);
        assert_eq!(&b.inputs.data()[3 * 4 * NUM_FEATURES..], second.inputs.data());
        assert_eq!(&b.labels.data()[3..], second.labels.data());
    }

    #[test]
    fn sampler_examples() {
        assert_eq!(sequential_sampler(100, 4, 0).unwrap(), 0..25);
        let parts: Vec<_> = (0..3).map(|w| sequential_sampler(10, 3, w).unwrap()).collect();
        assert_eq!(parts, vec![0..4, 4..7, 7..10]);
        assert_eq!(sequential_sampler(9, 1, 0).unwrap(), 0..9);
        assert!(sequential_sampler(2, 3, 0).is_err());
    }

    #[test]
    fn splits_cover_horizon() {
        assert_eq!(split_range(700, Split::Train), 0..400);
        assert_eq!(split_range(700, Split::Validation), 400..500);
        assert_eq!(split_range(700, Split::Test), 500..700);
    }

    proptest! {
        #[test]
        fn sampler_partitions(n in 1usize..500, w in 1usize..16) {
            prop_assume!(w <= n);
            let mut next = 0;
            for id in 0..w {
                let r = sequential_sampler(n, w, id).unwrap();
                prop_assert_eq!(r.start, next);
                prop_assert!(!r.is_empty());
                next = r.end;
            }
            prop_assert_eq!(next, n);
        }
    }
}
