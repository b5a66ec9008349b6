use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtf::MtfReading;

/// One IOPC cell: count-weighted mean AP of the tuples binned into it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub ap: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IopcMeta {
    pub detector: String,
    pub class: String,
    pub recipe: String,
    pub seed: u64,
}

/// Detection AP over a (noise sigma, MTF) grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iopc {
    pub sigma_grid: Vec<f64>,
    pub mtf_grid: Vec<f64>,
    /// Frequency (lines/px) of the MTF axis.
    pub frequency: f64,
    #[serde(default)]
    pub reading: MtfReading,
    /// Row-major, `sigma_grid.len()` rows of `mtf_grid.len()` cells.
    pub cells: Vec<Cell>,
    pub meta: IopcMeta,
}

fn strictly_increasing(v: &[f64]) -> bool {
    !v.is_empty() && v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

fn nearest(grid: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - v).abs() < (grid[best] - v).abs() {
            best = i;
        }
    }
    best
}

/// Bracketing index and fraction: `v = grid[i] + t (grid[i+1] - grid[i])`.
fn bracket(grid: &[f64], v: f64) -> Option<(usize, f64)> {
    let last = grid.len() - 1;
    if !(v >= grid[0] && v <= grid[last]) {
        return None;
    }
    if last == 0 {
        return Some((0, 0.0));
    }
    let i = grid.partition_point(|g| *g <= v).saturating_sub(1).min(last - 1);
    Some((i, (v - grid[i]) / (grid[i + 1] - grid[i])))
}

impl Iopc {
    pub fn new(sigma_grid: Vec<f64>, mtf_grid: Vec<f64>, frequency: f64, meta: IopcMeta) -> Result<Self> {
        if !strictly_increasing(&sigma_grid) || !strictly_increasing(&mtf_grid) {
            return Err(Error::InvalidParameter("IOPC grids must be strictly increasing".into()));
        }
        let cells = vec![Cell::default(); sigma_grid.len() * mtf_grid.len()];
        Ok(Self {
            sigma_grid,
            mtf_grid,
            frequency,
            reading: MtfReading::Mean,
            cells,
            meta,
        })
    }

    pub fn cell(&self, i_sigma: usize, j_mtf: usize) -> &Cell {
        &self.cells[i_sigma * self.mtf_grid.len() + j_mtf]
    }

    pub fn set(&mut self, i_sigma: usize, j_mtf: usize, ap: f64, count: usize) {
        let n = self.mtf_grid.len();
        self.cells[i_sigma * n + j_mtf] = Cell { ap: Some(ap), count };
    }

    /// Bin an `(σ̃, M̃TF, AP)` tuple into the nearest cell per axis, merging
    /// with what is there by weighted mean. Returns the cell index.
    pub fn insert(&mut self, sigma: f64, mtf: f64, ap: f64, weight: usize) -> Result<(usize, usize)> {
        if !(0.0..=1.0).contains(&ap) {
            return Err(Error::InvalidParameter(format!("AP {ap} outside [0, 1]")));
        }
        let (i, j) = (nearest(&self.sigma_grid, sigma), nearest(&self.mtf_grid, mtf));
        let n = self.mtf_grid.len();
        let c = &mut self.cells[i * n + j];
        let merged = match c.ap {
            Some(old) => (old * c.count as f64 + ap * weight as f64) / (c.count + weight) as f64,
            None => ap,
        };
        *c = Cell {
            ap: Some(merged),
            count: c.count + weight,
        };
        Ok((i, j))
    }

    pub fn populated(&self) -> usize {
        self.cells.iter().filter(|c| c.ap.is_some()).count()
    }

    pub fn contains(&self, sigma: f64, mtf: f64) -> bool {
        bracket(&self.sigma_grid, sigma).is_some() && bracket(&self.mtf_grid, mtf).is_some()
    }

    /// Bilinear interpolation between the surrounding cells. A neighbour
    /// with zero interpolation weight may be empty; any other empty
    /// neighbour is an error.
    pub fn lookup(&self, sigma: f64, mtf: f64) -> Result<f64> {
        let out = || Error::OutOfHull { sigma, mtf };
        let (i, ts) = bracket(&self.sigma_grid, sigma).ok_or_else(out)?;
        let (j, tm) = bracket(&self.mtf_grid, mtf).ok_or_else(out)?;
        let get = |a: usize, b: usize| -> Result<f64> {
            self.cell(a, b).ap.ok_or(Error::EmptyCell(a, b))
        };
        let along_mtf = |a: usize| -> Result<f64> {
            if tm == 0.0 {
                get(a, j)
            } else if tm == 1.0 {
                get(a, j + 1)
            } else {
                let (lo, hi) = (get(a, j)?, get(a, j + 1)?);
                Ok(lo + tm * (hi - lo))
            }
        };
        if ts == 0.0 {
            along_mtf(i)
        } else if ts == 1.0 {
            along_mtf(i + 1)
        } else {
            let (lo, hi) = (along_mtf(i)?, along_mtf(i + 1)?);
            Ok(lo + ts * (hi - lo))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: Self = serde_json::from_str(s)?;
        if !strictly_increasing(&v.sigma_grid)
            || !strictly_increasing(&v.mtf_grid)
            || v.cells.len() != v.sigma_grid.len() * v.mtf_grid.len()
        {
            return Err(Error::InvalidParameter("malformed IOPC".into()));
        }
        Ok(v)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// AP matrix: one row per sigma, one column per MTF value; empty cells
    /// are blank.
    pub fn to_csv_matrix(&self) -> String {
        let mut out = String::from("sigma\\mtf");
        for m in &self.mtf_grid {
            out.push_str(&format!(",{m:.4}"));
        }
        out.push('\n');
        for (i, s) in self.sigma_grid.iter().enumerate() {
            out.push_str(&format!("{s}"));
            for j in 0..self.mtf_grid.len() {
                out.push(',');
                if let Some(ap) = self.cell(i, j).ap {
                    out.push_str(&format!("{ap:.4}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Iopc {
        Iopc::new(vec![0.0, 10.0, 20.0], vec![0.5, 0.8, 1.0], 0.1, IopcMeta::default()).unwrap()
    }

    #[test]
    fn lookup_examples() {
        let mut g = grid();
        for i in 0..3 {
            g.set(i, 0, 0.4, 1);
            g.set(i, 1, 0.8, 1);
        }
        assert_eq!(g.lookup(10.0, 0.5).unwrap(), 0.4);
        assert!((g.lookup(10.0, 0.65).unwrap() - 0.6).abs() < 1e-12);
        // column 2 empty but zero-weighted on its border
        assert_eq!(g.lookup(5.0, 0.8).unwrap(), 0.8);
        assert!(matches!(g.lookup(5.0, 0.9), Err(Error::EmptyCell(0, 2))));
        assert!(matches!(g.lookup(25.0, 0.9), Err(Error::OutOfHull { .. })));
        assert!(matches!(g.lookup(5.0, 0.4), Err(Error::OutOfHull { .. })));
    }

    #[test]
    fn constant_is_exact() {
        let mut g = grid();
        for i in 0..3 {
            for j in 0..3 {
                g.set(i, j, 0.7, 1);
            }
        }
        for (s, m) in [(3.3, 0.61), (17.0, 0.97), (0.0, 1.0)] {
            assert_eq!(g.lookup(s, m).unwrap(), 0.7);
        }
    }

    #[test]
    fn insert_nearest_weighted() {
        let mut g = grid();
        assert_eq!(g.insert(4.0, 0.9, 0.5, 1).unwrap(), (0, 1));
        g.insert(1.0, 0.75, 0.8, 3).unwrap();
        let c = g.cell(0, 1);
        assert_eq!(c.count, 4);
        assert!((c.ap.unwrap() - (0.5 + 2.4) / 4.0).abs() < 1e-12);
        assert!(g.insert(0.0, 1.0, 1.5, 1).is_err());
    }

    #[test]
    fn grids_validated_and_json() {
        assert!(Iopc::new(vec![0.0, 0.0], vec![1.0], 0.1, IopcMeta::default()).is_err());
        let mut g = grid();
        g.set(1, 1, 0.25, 2);
        let back = Iopc::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        assert!(g.to_csv_matrix().starts_with("sigma\\mtf,0.5000,0.8000,1.0000\n0,,,\n10,,0.2500,\n"));
    }
}
