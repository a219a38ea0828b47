//! Per-node real values on a [`Grid`] and their PGM / CSV exports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(
                "values",
                format!("expected {} values, got {}", grid.len(), values.len()),
            ));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let len = grid.len();
        ScalarField {
            grid,
            values: vec![value; len],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize, usize) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                values.push(f(i, j));
            }
        }
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::Geometry("fields live on different grids".into()))
        }
    }

    /// 16-bit binary PGM (`P5`), linearly scaled so that the maximum finite
    /// value maps to 65535. The scale is recorded as `# scale=<max>`.
    /// Rows are written top row first.
    pub fn to_pgm(&self) -> Vec<u8> {
        let n = self.grid.n();
        let scale = self
            .values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let mut out = format!("P5\n# scale={scale}\n{n} {n}\n65535\n").into_bytes();
        out.reserve(2 * n * n);
        for j in (0..n).rev() {
            for i in 0..n {
                let v = self.at(i, j);
                let level = if scale > 0.0 && v.is_finite() {
                    (v / scale * 65535.0).round().clamp(0.0, 65535.0) as u16
                } else if v.is_infinite() && v > 0.0 {
                    u16::MAX
                } else {
                    0
                };
                out.extend_from_slice(&level.to_be_bytes());
            }
        }
        out
    }

    /// CSV with header `i,j,value`, rows ordered by `j` then `i`.
    pub fn to_csv(&self) -> String {
        let n = self.grid.n();
        let mut out = String::from("i,j,value\n");
        for j in 0..n {
            for i in 0..n {
                let _ = writeln!(out, "{i},{j},{}", self.at(i, j));
            }
        }
        out
    }

    /// Parses [`ScalarField::to_csv`] output back onto `grid`.
    pub fn from_csv(text: &str, grid: Grid) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        let mut offset = 0usize;
        let n = grid.n();
        for (line_no, line) in text.split_inclusive('\n').enumerate() {
            let start = offset;
            offset += line.len();
            let line = line.trim_end();
            if line_no == 0 {
                if line != "i,j,value" {
                    return Err(Error::Format {
                        offset: start,
                        reason: "expected header `i,j,value`".into(),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::Format {
                offset: start,
                reason: format!("line {}: {reason}", line_no + 1),
            };
            let mut parts = line.split(',');
            let (Some(a), Some(b), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected three columns"));
            };
            let i: usize = a.parse().map_err(|_| bad("bad i"))?;
            let j: usize = b.parse().map_err(|_| bad("bad j"))?;
            let v: f64 = c.parse().map_err(|_| bad("bad value"))?;
            if i >= n || j >= n {
                return Err(bad("index outside the grid"));
            }
            values[j * n + i] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Format {
                offset,
                reason: format!("field does not cover all {n}x{n} nodes"),
            });
        }
        ScalarField::new(grid, values)
    }

    /// Infers `n` from a CSV field and places it on a grid
    /// anchored at the origin with spacing `h`.
    pub fn from_csv_with_spacing(text: &str, h: f64) -> Result<Self> {
        let rows = text.lines().skip(1).filter(|l| !l.trim().is_empty()).count();
        let n = (rows as f64).sqrt().round() as usize;
        if n * n != rows {
            return Err(Error::Format {
                offset: 0,
                reason: format!("{rows} rows do not form a square field"),
            });
        }
        let grid = Grid::square([0.0, 0.0], h * (n.max(2) - 1) as f64, n).map_err(|e| Error::Format {
            offset: 0,
            reason: e.to_string(),
        })?;
        ScalarField::from_csv(text, grid)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => std::fs::write(path, self.to_csv())?,
            _ => std::fs::write(path, self.to_pgm())?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_scaling() {
        let grid = Grid::unit(3).unwrap();
        let f = ScalarField::from_fn(grid, |i, j| (i + j) as f64 * 0.5);
        let pgm = f.to_pgm();
        let header = b"P5\n# scale=2\n3 3\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 18);
        // First pixel is the top-left node (i = 0, j = 2): value 1 → half scale.
        assert_eq!(u16::from_be_bytes([pgm[header.len()], pgm[header.len() + 1]]), 32768);
        // Last pixel is the bottom-right node (2, 0): value 1.
        let last = pgm.len() - 2;
        assert_eq!(u16::from_be_bytes([pgm[last], pgm[last + 1]]), 32768);
    }

    #[test]
    fn csv_round_trip() {
        let grid = Grid::unit(5).unwrap();
        let f = ScalarField::from_fn(grid.clone(), |i, j| (i as f64).sqrt() / (1.0 + j as f64));
        let back = ScalarField::from_csv(&f.to_csv(), grid).unwrap();
        assert_eq!(back, f);
        let inferred = ScalarField::from_csv_with_spacing(&f.to_csv(), 0.25).unwrap();
        assert_eq!(inferred.values(), f.values());
    }

    #[test]
    fn incomplete_csv_is_rejected() {
        let grid = Grid::unit(3).unwrap();
        assert!(ScalarField::from_csv("i,j,value\n0,0,1\n", grid.clone()).is_err());
        assert!(ScalarField::from_csv("x,y\n", grid).is_err());
    }
}
