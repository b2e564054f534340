use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major elevation raster. Row 0 is the northern edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    pub rows: usize,
    pub cols: usize,
    /// Cell edge length in meters.
    pub cell_size: f64,
    pub nodata: f64,
    pub elevations: Vec<f64>,
    /// Lower-left corner, carried through for round trips only.
    pub origin: (f64, f64),
}

/// The eight D8 neighbors in scan order E, SE, S, SW, W, NW, N, NE as
/// `(d_row, d_col)`. Ties in steepest descent go to the earliest entry.
pub const D8_OFFSETS: [(isize, isize); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

impl DemGrid {
    pub fn new(rows: usize, cols: usize, cell_size: f64, nodata: f64, elevations: Vec<f64>) -> Result<Self> {
        let dem = Self {
            rows,
            cols,
            cell_size,
            nodata,
            elevations,
            origin: (0.0, 0.0),
        };
        dem.validate()?;
        Ok(dem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows * self.cols != self.elevations.len() {
            return Err(Error::invalid(format!(
                "{}x{} grid holds {} elevations",
                self.rows,
                self.cols,
                self.elevations.len()
            )));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::invalid(format!("cell size {} must be positive", self.cell_size)));
        }
        if let Some(i) = (0..self.elevations.len()).find(|&i| !self.is_nodata(i) && !self.elevations[i].is_finite()) {
            return Err(Error::invalid(format!("non-finite elevation at cell {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elevations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elevations.is_empty()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn is_nodata(&self, index: usize) -> bool {
        let v = self.elevations[index];
        v == self.nodata || v.is_nan()
    }

    pub fn elevation(&self, row: usize, col: usize) -> f64 {
        self.elevations[self.index(row, col)]
    }

    /// Cell index of the neighbor at `offset`, if inside the grid.
    pub fn neighbor(&self, index: usize, offset: (isize, isize)) -> Option<usize> {
        let (r, c) = self.coords(index);
        let nr = r as isize + offset.0;
        let nc = c as isize + offset.1;
        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
            None
        } else {
            Some(nr as usize * self.cols + nc as usize)
        }
    }

    /// True for data cells that touch the grid edge or a nodata cell.
    pub fn is_edge_cell(&self, index: usize) -> bool {
        D8_OFFSETS.iter().any(|&o| match self.neighbor(index, o) {
            None => true,
            Some(n) => self.is_nodata(n),
        })
    }

    pub fn data_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.is_nodata(i))
    }

    /// Reads an ESRI ASCII grid.
    pub fn read_ascii(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_ascii(&text).map_err(|e| match e {
            Error::InvalidInput(detail) => Error::parse(path, detail),
            other => other,
        })
    }

    pub fn parse_ascii(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace().peekable();
        let (mut ncols, mut nrows, mut cell) = (None, None, None);
        let (mut xll, mut yll, mut nodata) = (0.0, 0.0, -9999.0);
        while let Some(&tok) = tokens.peek() {
            if tok.parse::<f64>().is_ok() {
                break;
            }
            let key = tok.to_ascii_lowercase();
            tokens.next();
            let value = tokens
                .next()
                .ok_or_else(|| Error::invalid(format!("header {key} has no value")))?;
            let num: f64 = value
                .parse()
                .map_err(|_| Error::invalid(format!("header {key}: bad number {value:?}")))?;
            match key.as_str() {
                "ncols" => ncols = Some(num as usize),
                "nrows" => nrows = Some(num as usize),
                "cellsize" => cell = Some(num),
                "xllcorner" | "xllcenter" => xll = num,
                "yllcorner" | "yllcenter" => yll = num,
                "nodata_value" => nodata = num,
                _ => return Err(Error::invalid(format!("unknown header {key}"))),
            }
        }
        let cols = ncols.ok_or_else(|| Error::invalid("missing ncols"))?;
        let rows = nrows.ok_or_else(|| Error::invalid("missing nrows"))?;
        let cell_size = cell.ok_or_else(|| Error::invalid("missing cellsize"))?;
        let elevations = tokens
            .map(|t| t.parse::<f64>().map_err(|_| Error::invalid(format!("bad elevation {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut dem = Self::new(rows, cols, cell_size, nodata, elevations)?;
        dem.origin = (xll, yll);
        Ok(dem)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.cols);
        let _ = writeln!(out, "nrows {}", self.rows);
        let _ = writeln!(out, "xllcorner {}", self.origin.0);
        let _ = writeln!(out, "yllcorner {}", self.origin.1);
        let _ = writeln!(out, "cellsize {}", self.cell_size);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| format!("{}", self.elevation(r, c))).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn write_ascii(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii()).map_err(|e| Error::io(path, e))
    }
}
