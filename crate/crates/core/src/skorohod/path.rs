//! Time grids and piecewise-constant vector paths.
//!
//! A [`VectorPath`] stores one point of `ℝⁿ` per grid time; the value at
//! index `k` is held on `[t_k, t_{k+1})`, which makes every stored path
//! càdlàg.

use std::io::{Read, Write};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug)]
enum Times {
    /// `t_k = k·step` for `k < last`, with `t_last = horizon`.
    Uniform {
        step: f64,
        last: usize,
        horizon: f64,
    },
    Explicit(Vec<f64>),
}

/// Finite, strictly increasing sequence of times starting at zero.
#[derive(Clone, Debug)]
pub struct TimeGrid {
    times: Times,
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl TimeGrid {
    /// Grid `0, step, 2·step, …` ending exactly at `horizon`. When `horizon`
    /// is not a multiple of `step` the final interval is shorter.
    pub fn uniform(horizon: f64, step: f64) -> Result<TimeGrid> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::input(format!("grid step must be positive, got {step}")));
        }
        if !(horizon.is_finite() && horizon >= step) {
            return Err(Error::input(format!(
                "grid horizon {horizon} must be finite and at least the step {step}"
            )));
        }
        let ratio = horizon / step;
        let nearest = ratio.round();
        let last = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.floor() as usize + 1
        };
        Ok(TimeGrid {
            times: Times::Uniform { step, last, horizon },
        })
    }

    pub fn from_times(times: Vec<f64>) -> Result<TimeGrid> {
        if times.first() != Some(&0.0) {
            return Err(Error::input("time grid must start at 0"));
        }
        for w in times.windows(2) {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(Error::input(format!(
                    "time grid must be finite and strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid {
            times: Times::Explicit(times),
        })
    }

    /// Number of grid points (`K + 1`).
    pub fn len(&self) -> usize {
        match &self.times {
            Times::Uniform { last, .. } => last + 1,
            Times::Explicit(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        match &self.times {
            Times::Uniform { step, last, horizon } => {
                debug_assert!(k <= *last);
                if k == *last {
                    *horizon
                } else {
                    k as f64 * step
                }
            }
            Times::Explicit(t) => t[k],
        }
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }

    /// Index of the last grid time `≤ t` (the càdlàg value at `t`).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        if t < 0.0 || self.is_empty() {
            return None;
        }
        let (mut lo, mut hi) = (0usize, self.len() - 1);
        if self.time(hi) <= t {
            return Some(hi);
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.time(mid) <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }

    /// Grid restricted to its first `len` points.
    pub fn truncated(&self, len: usize) -> Result<TimeGrid> {
        if len == 0 || len > self.len() {
            return Err(Error::input(format!(
                "cannot truncate a grid of {} points to {len}",
                self.len()
            )));
        }
        TimeGrid::from_times(self.iter().take(len).collect())
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.len() == other.len() && (0..self.len()).all(|k| self.time(k) == other.time(k))
    }
}

/// Piecewise-constant `ℝⁿ`-valued path sampled on a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct VectorPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl VectorPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<VectorPath> {
        if dim == 0 {
            return Err(Error::input("path dimension must be positive"));
        }
        check_dim(grid.len() * dim, values.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite path value at grid index {}",
                pos / dim
            )));
        }
        Ok(VectorPath { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> VectorPath {
        let values = vec![0.0; grid.len() * dim];
        VectorPath { grid, dim, values }
    }

    /// Samples `f(t)` at every grid time.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<VectorPath> {
        let mut values = vec![0.0; grid.len() * dim];
        for (k, chunk) in values.chunks_mut(dim).enumerate() {
            f(grid.time(k), chunk);
        }
        VectorPath::new(grid, dim, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn point_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn coordinate(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(i).step_by(self.dim).copied()
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    /// Càdlàg value at time `t`.
    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        self.grid.index_at(t).map(|k| self.point(k))
    }

    /// Applies `f` to every grid point, keeping the grid.
    pub fn map_points(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> VectorPath {
        let mut values = vec![0.0; self.len() * out_dim];
        for (src, dst) in self.points().zip(values.chunks_mut(out_dim)) {
            f(src, dst);
        }
        VectorPath {
            grid: self.grid.clone(),
            dim: out_dim,
            values,
        }
    }

    /// First `k` coordinates.
    pub fn leading_coordinates(&self, k: usize) -> Result<VectorPath> {
        if k == 0 || k > self.dim {
            return Err(Error::input(format!(
                "cannot take {k} leading coordinates of a {}-dimensional path",
                self.dim
            )));
        }
        Ok(self.map_points(k, |src, dst| dst.copy_from_slice(&src[..k])))
    }

    /// Largest `|self - other|` over grid points and coordinates.
    pub fn sup_distance(&self, other: &VectorPath) -> Result<f64> {
        check_dim(self.dim, other.dim)?;
        if !self.grid.same_as(&other.grid) {
            return Err(Error::input("paths live on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Path CSV: header `t,x1,…,xn`, one row per grid point, values written
    /// in shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, out: W, prefix: &str) -> Result<()> {
        write_columns(out, &self.grid, &[(prefix, self)])
    }

    pub fn read_csv<R: Read>(input: R) -> Result<VectorPath> {
        let (grid, columns) = read_columns(input)?;
        let dim = columns.len();
        if dim == 0 {
            return Err(Error::input("path CSV has no value columns"));
        }
        let mut values = vec![0.0; grid.len() * dim];
        for (i, col) in columns.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                values[k * dim + i] = *v;
            }
        }
        VectorPath::new(grid, dim, values)
    }
}

/// Writes `t` followed by every column of each named block, e.g.
/// `t,w1,w2,l1,l2`.
pub(crate) fn write_columns<W: Write>(out: W, grid: &TimeGrid, blocks: &[(&str, &VectorPath)]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for (prefix, path) in blocks {
        if !path.grid.same_as(grid) {
            return Err(Error::input("paths live on different grids"));
        }
        header.extend((1..=path.dim).map(|i| format!("{prefix}{i}")));
    }
    writer.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for k in 0..grid.len() {
        row.clear();
        row.push(grid.time(k).to_string());
        for (_, path) in blocks {
            row.extend(path.point(k).iter().map(|v| v.to_string()));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a CSV whose first column is `t`; returns the grid and the remaining
/// columns in header order.
pub(crate) fn read_columns<R: Read>(input: R) -> Result<(TimeGrid, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("t") {
        return Err(Error::input("CSV header must start with column `t`"));
    }
    let width = headers.len();
    let mut times = Vec::new();
    let mut columns = vec![Vec::new(); width - 1];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::input(format!(
                "CSV row {} has {} fields, expected {width}",
                row_idx + 1,
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::input(format!("CSV row {}: not a number: {field:?}", row_idx + 1)))?;
            if c == 0 {
                times.push(v);
            } else {
                columns[c - 1].push(v);
            }
        }
    }
    Ok((TimeGrid::from_times(times)?, columns))
}

/// Pointwise `a + X`.
pub fn shift(a: &[f64], x: &VectorPath) -> Result<VectorPath> {
    check_dim(x.dim(), a.len())?;
    if let Some(v) = a.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::input(format!(
            "initial vector entries must be finite and nonnegative, got {v}"
        )));
    }
    Ok(x.map_points(x.dim(), |src, dst| {
        for ((d, s), ai) in dst.iter_mut().zip(src).zip(a) {
            *d = ai + s;
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_ends_on_horizon() {
        let g = TimeGrid::uniform(1.0, 0.5).unwrap();
        assert_eq!(g.to_vec(), vec![0.0, 0.5, 1.0]);
        let g = TimeGrid::uniform(0.3, 0.1).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.horizon(), 0.3);
        let g = TimeGrid::uniform(1.05, 0.5).unwrap();
        assert_eq!(g.to_vec(), vec![0.0, 0.5, 1.0, 1.05]);
        assert!(TimeGrid::uniform(1.0, 0.0).is_err());
        assert!(TimeGrid::uniform(0.1, 1.0).is_err());
    }

    #[test]
    fn explicit_grid_validation() {
        assert!(TimeGrid::from_times(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.5, 1.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn index_at_is_cadlag() {
        let g = TimeGrid::uniform(2.0, 0.5).unwrap();
        assert_eq!(g.index_at(0.0), Some(0));
        assert_eq!(g.index_at(0.49), Some(0));
        assert_eq!(g.index_at(0.5), Some(1));
        assert_eq!(g.index_at(9.0), Some(4));
        assert_eq!(g.index_at(-1.0), None);
    }

    #[test]
    fn shift_examples() {
        let g = TimeGrid::uniform(2.0, 0.5).unwrap();
        let ramp = VectorPath::from_fn(g.clone(), 1, |t, x| x[0] = -t.min(1.0)).unwrap();
        assert_eq!(shift(&[0.0], &ramp).unwrap(), ramp);
        let shifted = shift(&[2.0], &ramp).unwrap();
        assert_eq!(shifted.coordinate(0).collect::<Vec<_>>(), vec![2.0, 1.5, 1.0, 1.0, 1.0]);
        let zero = VectorPath::zeros(g, 2);
        let ones = shift(&[1.0, 1.0], &zero).unwrap();
        assert!(ones.values().iter().all(|&v| v == 1.0));
        assert!(matches!(shift(&[1.0], &zero), Err(Error::DimensionMismatch { .. })));
        assert!(shift(&[-1.0, 0.0], &zero).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = TimeGrid::uniform(1.0, 0.1).unwrap();
        let p = VectorPath::from_fn(g, 2, |t, x| {
            x[0] = (t * 7.3).sin() / 3.0;
            x[1] = 1e-300 * t - 0.1;
        })
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf, "x").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2\n"));
        assert_eq!(VectorPath::read_csv(buf.as_slice()).unwrap(), p.clone());
    }
}
