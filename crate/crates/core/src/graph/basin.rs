use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::d8::d8_receivers;
use super::dem::DemGrid;
use super::fill::fill_depressions;
use crate::error::{Error, Result};

/// Which edge set of a [`BasinGraph`] to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Flow,
    Catchment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    /// `(row, col)` of every node, indexed by node id.
    pub coords: Vec<(usize, usize)>,
}

/// A gauged node, addressed by grid position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub row: usize,
    pub col: usize,
    pub station_id: String,
}

/// A directed catchment edge between two gauged cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatchmentPair {
    pub src_row: usize,
    pub src_col: usize,
    pub dst_row: usize,
    pub dst_col: usize,
}

/// Basin as a directed graph over grid cells with two edge relations.
///
/// Node ids number the data cells of the source grid in row-major order.
/// Self-loops are never stored; message passing adds them itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinGraph {
    pub num_nodes: usize,
    pub flow_edges: Vec<(usize, usize)>,
    pub catchment_edges: Vec<(usize, usize)>,
    /// Gauged node ids, in station order.
    pub targets: Vec<usize>,
    pub grid: GridInfo,
    pub station_ids: Vec<String>,
}

/// Fills `dem`, derives D8 flow edges and attaches gauges and catchment edges.
pub fn build_graph(dem: &DemGrid, catchment: &[CatchmentPair], targets: &[TargetSpec]) -> Result<BasinGraph> {
    let filled = fill_depressions(dem)?;
    let receivers = d8_receivers(&filled)?;
    let mut node_of = vec![usize::MAX; dem.len()];
    let mut coords = Vec::new();
    for (n, cell) in dem.data_cells().enumerate() {
        node_of[cell] = n;
        coords.push(dem.coords(cell));
    }
    let lookup = |row: usize, col: usize, what: &str| -> Result<usize> {
        if row >= dem.rows || col >= dem.cols {
            return Err(Error::invalid(format!("{what} ({row}, {col}) lies outside the grid")));
        }
        let cell = dem.index(row, col);
        if dem.is_nodata(cell) {
            return Err(Error::invalid(format!("{what} ({row}, {col}) is a nodata cell")));
        }
        Ok(node_of[cell])
    };

    let flow_edges = dem
        .data_cells()
        .filter_map(|u| receivers[u].map(|v| (node_of[u], node_of[v])))
        .collect();
    let mut target_nodes = Vec::with_capacity(targets.len());
    let mut station_ids = Vec::with_capacity(targets.len());
    for t in targets {
        target_nodes.push(lookup(t.row, t.col, &format!("target {}", t.station_id))?);
        station_ids.push(t.station_id.clone());
    }
    let mut catchment_edges = Vec::with_capacity(catchment.len());
    for p in catchment {
        let u = lookup(p.src_row, p.src_col, "catchment source")?;
        let v = lookup(p.dst_row, p.dst_col, "catchment destination")?;
        catchment_edges.push((u, v));
    }
    let graph = BasinGraph {
        num_nodes: coords.len(),
        flow_edges,
        catchment_edges,
        targets: target_nodes,
        grid: GridInfo {
            rows: dem.rows,
            cols: dem.cols,
            cell_size: dem.cell_size,
            coords,
        },
        station_ids,
    };
    graph.validate()?;
    Ok(graph)
}

/// Copy of `graph` keeping only the edges of `relation`.
pub fn extract_subgraph(graph: &BasinGraph, relation: Relation) -> BasinGraph {
    let mut sub = graph.clone();
    match relation {
        Relation::Flow => sub.catchment_edges.clear(),
        Relation::Catchment => sub.flow_edges.clear(),
    }
    sub
}

impl BasinGraph {
    pub fn edges(&self, relation: Relation) -> &[(usize, usize)] {
        match relation {
            Relation::Flow => &self.flow_edges,
            Relation::Catchment => &self.catchment_edges,
        }
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    /// Position of `node` in the station order, if it is gauged.
    pub fn target_position(&self, node: usize) -> Option<usize> {
        self.targets.iter().position(|&t| t == node)
    }

    pub fn node_at(&self, row: usize, col: usize) -> Option<usize> {
        self.grid.coords.iter().position(|&rc| rc == (row, col))
    }

    pub fn station_position(&self, station_id: &str) -> Option<usize> {
        self.station_ids.iter().position(|s| s == station_id)
    }

    /// Flow receiver of every node.
    pub fn receivers(&self) -> Vec<Option<usize>> {
        let mut rec = vec![None; self.num_nodes];
        for &(u, v) in &self.flow_edges {
            rec[u] = Some(v);
        }
        rec
    }

    /// Station positions whose flow path reaches no other station.
    pub fn outlet_stations(&self) -> Vec<usize> {
        let rec = self.receivers();
        let gauged: HashSet<usize> = self.targets.iter().copied().collect();
        (0..self.targets.len())
            .filter(|&k| {
                let mut cur = rec[self.targets[k]];
                while let Some(n) = cur {
                    if gauged.contains(&n) {
                        return false;
                    }
                    cur = rec[n];
                }
                true
            })
            .collect()
    }

    /// Checks every structural invariant of the graph.
    pub fn validate(&self) -> Result<()> {
        if self.grid.coords.len() != self.num_nodes {
            return Err(Error::invalid(format!(
                "{} coordinates for {} nodes",
                self.grid.coords.len(),
                self.num_nodes
            )));
        }
        if self.station_ids.len() != self.targets.len() {
            return Err(Error::invalid("station ids and targets differ in length"));
        }
        let mut seen = HashSet::new();
        for &t in &self.targets {
            if t >= self.num_nodes {
                return Err(Error::invalid(format!("target {t} out of range")));
            }
            if !seen.insert(t) {
                return Err(Error::invalid(format!("node {t} is gauged twice")));
            }
        }
        let ids: HashSet<&str> = self.station_ids.iter().map(String::as_str).collect();
        if ids.len() != self.station_ids.len() {
            return Err(Error::invalid("duplicate station id"));
        }
        for relation in [Relation::Flow, Relation::Catchment] {
            let mut pairs = HashSet::new();
            for &(u, v) in self.edges(relation) {
                if u >= self.num_nodes || v >= self.num_nodes {
                    return Err(Error::invalid(format!("{relation:?} edge ({u}, {v}) out of range")));
                }
                if u == v {
                    return Err(Error::invalid(format!("{relation:?} self-loop at node {u}")));
                }
                if !pairs.insert((u, v)) {
                    return Err(Error::invalid(format!("duplicate {relation:?} edge ({u}, {v})")));
                }
                if relation == Relation::Catchment && !(seen.contains(&u) && seen.contains(&v)) {
                    return Err(Error::invalid(format!("catchment edge ({u}, {v}) touches an ungauged node")));
                }
            }
        }
        let mut out_degree = vec![0usize; self.num_nodes];
        for &(u, _) in &self.flow_edges {
            out_degree[u] += 1;
            if out_degree[u] > 1 {
                return Err(Error::invalid(format!("node {u} has two flow receivers")));
            }
        }
        // with out-degree at most one, a cycle shows up as a walk longer than n
        let rec = self.receivers();
        for start in 0..self.num_nodes {
            let mut cur = rec[start];
            let mut steps = 0;
            while let Some(n) = cur {
                steps += 1;
                if steps > self.num_nodes {
                    return Err(Error::invalid(format!("flow cycle through node {start}")));
                }
                cur = rec[n];
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let graph: Self = serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        graph.validate()?;
        Ok(graph)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidInput(detail) => Error::parse(path, detail),
            other => other,
        })
    }
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for r in records {
        writer.serialize(r).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads `row,col,station_id` rows.
pub fn read_targets_csv(path: &Path) -> Result<Vec<TargetSpec>> {
    read_records(path)
}

pub fn write_targets_csv(path: &Path, targets: &[TargetSpec]) -> Result<()> {
    write_records(path, targets)
}

/// Reads `src_row,src_col,dst_row,dst_col` rows.
pub fn read_catchment_csv(path: &Path) -> Result<Vec<CatchmentPair>> {
    read_records(path)
}

pub fn write_catchment_csv(path: &Path, pairs: &[CatchmentPair]) -> Result<()> {
    write_records(path, pairs)
}

/// Grid-position lookup of the gauges of `graph`, for tooling.
pub fn target_specs(graph: &BasinGraph) -> Vec<TargetSpec> {
    graph
        .targets
        .iter()
        .zip(&graph.station_ids)
        .map(|(&n, id)| {
            let (row, col) = graph.grid.coords[n];
            TargetSpec {
                station_id: id.clone(),
                row,
                col,
            }
        })
        .collect()
}

/// In-neighbor lists including the implicit self-loop, keyed by destination.
pub fn in_neighbors(num_nodes: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut lists: Vec<Vec<usize>> = (0..num_nodes).map(|v| vec![v]).collect();
    for &(u, v) in edges {
        lists[v].push(u);
    }
    lists
}

/// Relabels `edges` among `nodes` to positions in that slice, dropping the rest.
pub fn remap_edges(nodes: &[usize], edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let pos: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    edges
        .iter()
        .filter_map(|(u, v)| Some((*pos.get(u)?, *pos.get(v)?)))
        .collect()
}
