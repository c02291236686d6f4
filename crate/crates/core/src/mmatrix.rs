//! Routing matrices and the M-matrix `R = I - Pᵗ`.
//!
//! A [`RoutingMatrix`] holds a nonnegative `P` whose spectral radius is
//! strictly below one. Construction validates that bound and caches both the
//! spectral radius and `R⁻¹ = (Σ Pᵏ)ᵗ`, which every downstream solver needs.
//!
//! Matrices are dense and row-major; the networks handled here are small.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Largest admissible spectral radius for a routing matrix.
pub const MAX_SPECTRAL_RADIUS: f64 = 1.0 - 1e-12;

/// Tolerance used for the cached inverse held by every [`RoutingMatrix`].
pub const INVERSE_TOL: f64 = 1e-14;

const POWER_ITERATION_CAP: usize = 10_000;
const MAX_DOUBLINGS: usize = 128;

/// Dense square matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

/// JSON layout: `{"n": int, "entries": [row-major n·n reals]}`.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    entries: Vec<f64>,
}

impl TryFrom<MatrixJson> for Matrix {
    type Error = Error;

    fn try_from(value: MatrixJson) -> Result<Self> {
        Matrix::from_entries(value.n, value.entries)
    }
}

impl From<Matrix> for MatrixJson {
    fn from(m: Matrix) -> Self {
        MatrixJson {
            n: m.n,
            entries: m.data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.n).map(|i| self.row(i)).collect();
        f.debug_struct("Matrix").field("rows", &rows).finish()
    }
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::input(format!(
                "matrix of dimension {n} needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Ok(Matrix { n, data: entries })
    }

    /// Panics on ragged input; meant for literals in code and tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix rows must all have length {n}");
            data.extend_from_slice(r);
        }
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { n: self.n, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { n: self.n, data }
    }

    /// `out = self · x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = self.data[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Leading `k × k` block.
    pub fn leading_block(&self, k: usize) -> Matrix {
        assert!(k <= self.n);
        let mut out = Matrix::zeros(k);
        for i in 0..k {
            for j in 0..k {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// Solves `self · x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` when a pivot vanishes.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
                .unwrap();
            if a[pivot * n + col].abs() <= 1e-14 * scale {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                x.swap(pivot, col);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in col + 1..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Some(x)
    }

    /// Lower-triangular `F` with `F·Fᵗ = self` for a symmetric positive
    /// semidefinite matrix. Zero pivots are allowed, so degenerate
    /// covariances (including the zero matrix) factor cleanly.
    pub fn psd_factor(&self) -> Result<Matrix> {
        let n = self.n;
        let scale = self.max_abs().max(1.0);
        let eps = 1e-12 * scale;
        for i in 0..n {
            for j in 0..i {
                if (self.get(i, j) - self.get(j, i)).abs() > eps {
                    return Err(Error::model("covariance matrix is not symmetric"));
                }
            }
        }
        let mut f = Matrix::zeros(n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= f.get(j, k) * f.get(j, k);
            }
            if d < -eps {
                return Err(Error::model("covariance matrix is not positive semidefinite"));
            }
            if d <= eps {
                // Zero pivot: the remaining column must vanish as well.
                for i in j + 1..n {
                    let mut s = self.get(i, j);
                    for k in 0..j {
                        s -= f.get(i, k) * f.get(j, k);
                    }
                    if s.abs() > 1e-9 * scale {
                        return Err(Error::model("covariance matrix is not positive semidefinite"));
                    }
                }
                continue;
            }
            let root = d.sqrt();
            f.set(j, j, root);
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= f.get(i, k) * f.get(j, k);
                }
                f.set(i, j, s / root);
            }
        }
        Ok(f)
    }

    pub fn from_json_str(s: &str) -> Result<Matrix> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("matrix serializes")
    }

    /// Parses `n` rows of `n` comma-separated reals with no header.
    pub fn from_csv_str(s: &str) -> Result<Matrix> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(s.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field
                        .parse::<f64>()
                        .map_err(|_| Error::input(format!("not a number: {field:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        for row in &rows {
            check_dim(n, row.len())?;
        }
        Matrix::from_entries(n, rows.concat())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads a matrix that is either JSON (first non-blank char `{`) or CSV.
    pub fn parse_auto(s: &str) -> Result<Matrix> {
        if s.trim_start().starts_with('{') {
            Matrix::from_json_str(s)
        } else {
            Matrix::from_csv_str(s)
        }
    }
}

fn validate_nonnegative(p: &Matrix) -> Result<()> {
    for (idx, &v) in p.entries().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::input(format!(
                "non-finite matrix entry at ({}, {})",
                idx / p.dim(),
                idx % p.dim()
            )));
        }
        if v < 0.0 {
            return Err(Error::input(format!(
                "negative matrix entry {v} at ({}, {})",
                idx / p.dim(),
                idx % p.dim()
            )));
        }
    }
    Ok(())
}

/// Spectral radius of a nonnegative matrix.
///
/// The matrix is split into strongly connected components of its support
/// graph; acyclic parts (in particular all nilpotent matrices) contribute
/// exactly zero. Each cyclic component is irreducible, and its Perron root is
/// pinned between Collatz–Wielandt bounds from a shifted power iteration.
pub fn spectral_radius(p: &Matrix) -> Result<f64> {
    validate_nonnegative(p)?;
    let n = p.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut reach = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            reach[i * n + j] = p.get(i, j) > 0.0;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if !reach[i * n + k] {
                continue;
            }
            for j in 0..n {
                if reach[k * n + j] {
                    reach[i * n + j] = true;
                }
            }
        }
    }

    let mut assigned = vec![false; n];
    let mut rho: f64 = 0.0;
    for i in 0..n {
        if assigned[i] || !reach[i * n + i] {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&j| reach[i * n + j] && reach[j * n + i]).collect();
        for &j in &members {
            assigned[j] = true;
        }
        let mut block = Matrix::zeros(members.len());
        for (a, &r) in members.iter().enumerate() {
            for (b, &c) in members.iter().enumerate() {
                block.set(a, b, p.get(r, c));
            }
        }
        rho = rho.max(perron_root(&block));
    }
    Ok(rho)
}

/// Perron root of an irreducible nonnegative matrix.
fn perron_root(a: &Matrix) -> f64 {
    let n = a.dim();
    if n == 1 {
        return a.get(0, 0);
    }
    // Shifting by the largest row sum makes the matrix primitive without
    // moving the Perron eigenvector.
    let shift = a.inf_norm();
    let mut v = vec![1.0; n];
    let mut y = vec![0.0; n];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..POWER_ITERATION_CAP {
        a.mul_vec_into(&v, &mut y);
        let mut it_lo = f64::INFINITY;
        let mut it_hi: f64 = 0.0;
        let mut top: f64 = 0.0;
        for i in 0..n {
            y[i] += shift * v[i];
            let r = y[i] / v[i];
            it_lo = it_lo.min(r);
            it_hi = it_hi.max(r);
            top = top.max(y[i]);
        }
        lo = f64::max(lo, it_lo);
        hi = f64::min(hi, it_hi);
        if hi - lo <= 1e-14 * hi {
            break;
        }
        for i in 0..n {
            v[i] = y[i] / top;
        }
    }
    (0.5 * (lo + hi) - shift).max(0.0)
}

/// `R⁻¹ = (Σ Pᵏ)ᵗ` for `R = I - Pᵗ`.
///
/// Partial sums are doubled, `S₂ₘ = Sₘ + Pᵐ·Sₘ`, so the number of matrix
/// products grows with `log(log(tol)/log ρ)`. Truncation happens once the
/// next power `Pᵐ` has norm at most `tol·(1 - ρ)`; since
/// `R·Sᵗ - I = -(Pᵐ)ᵗ` this also bounds the residual by `tol`.
pub fn neumann_inverse(p: &Matrix, tol: f64) -> Result<Matrix> {
    let rho = spectral_radius(p)?;
    if rho > MAX_SPECTRAL_RADIUS {
        return Err(Error::InvalidRouting(format!("spectral radius {rho} is not below one")));
    }
    neumann_inverse_with_radius(p, rho, tol)
}

fn neumann_inverse_with_radius(p: &Matrix, rho: f64, tol: f64) -> Result<Matrix> {
    let n = p.dim();
    let mut sum = Matrix::identity(n);
    let mut power = p.clone();
    let threshold = tol * (1.0 - rho);
    for _ in 0..MAX_DOUBLINGS {
        if power.one_norm() <= threshold {
            return Ok(sum.transpose());
        }
        sum = sum.add(&power.mul(&sum));
        power = power.mul(&power);
    }
    Err(Error::Convergence {
        iterations: MAX_DOUBLINGS,
        context: "Neumann series for R⁻¹".into(),
    })
}

/// Nonnegative routing matrix `P` with spectral radius below one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct RoutingMatrix {
    p: Matrix,
    rho: f64,
    inverse: Matrix,
}

impl TryFrom<Matrix> for RoutingMatrix {
    type Error = Error;

    fn try_from(p: Matrix) -> Result<Self> {
        RoutingMatrix::new(p)
    }
}

impl From<RoutingMatrix> for Matrix {
    fn from(r: RoutingMatrix) -> Self {
        r.p
    }
}

impl RoutingMatrix {
    pub fn new(p: Matrix) -> Result<Self> {
        let rho = spectral_radius(&p)?;
        if rho > MAX_SPECTRAL_RADIUS {
            return Err(Error::InvalidRouting(format!(
                "spectral radius {rho} must be below {MAX_SPECTRAL_RADIUS}"
            )));
        }
        let inverse = neumann_inverse_with_radius(&p, rho, INVERSE_TOL)?;
        Ok(RoutingMatrix { p, rho, inverse })
    }

    pub fn zero(n: usize) -> Self {
        RoutingMatrix {
            p: Matrix::zeros(n),
            rho: 0.0,
            inverse: Matrix::identity(n),
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        RoutingMatrix::new(Matrix::from_rows(rows))
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn spectral_radius(&self) -> f64 {
        self.rho
    }

    /// Cached `R⁻¹`.
    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    /// `R = I - Pᵗ`.
    pub fn reflection(&self) -> Matrix {
        Matrix::identity(self.dim()).sub(&self.p.transpose())
    }

    pub fn neumann_inverse(&self, tol: f64) -> Result<Matrix> {
        neumann_inverse_with_radius(&self.p, self.rho, tol)
    }

    /// `out = R·v = v - Pᵗ·v`.
    pub fn apply_reflection_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = v[i];
            for j in 0..n {
                s -= self.p.get(j, i) * v[j];
            }
            out[i] = s;
        }
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        self.inverse.mul_vec(v)
    }

    pub fn is_zero(&self) -> bool {
        self.p.is_zero()
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.dim()).all(|i| self.p.get(i, i) == 0.0)
    }

    /// True when `P` is strictly upper triangular, i.e. `R` is lower
    /// triangular with unit diagonal.
    pub fn is_feedforward(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..=i).all(|j| self.p.get(i, j) == 0.0))
    }

    pub fn leading_block(&self, k: usize) -> Result<RoutingMatrix> {
        RoutingMatrix::new(self.p.leading_block(k))
    }
}

/// Diagonal map `S = (I - D)^{1/2}` produced by [`normalize_diagonal`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalScale {
    /// `√(1 - pᵢᵢ)` per coordinate.
    pub factors: Vec<f64>,
}

impl DiagonalScale {
    pub fn matrix(&self) -> Matrix {
        Matrix::diagonal(&self.factors)
    }

    /// Input and regulated paths transform as `Ỹ = S⁻¹·Y`.
    pub fn to_normalized(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.factors).map(|(v, s)| v / s).collect()
    }

    pub fn from_normalized(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.factors).map(|(v, s)| v * s).collect()
    }

    /// The regulator transforms as `L̃ = S·L`, so `L = S⁻¹·L̃`.
    pub fn regulator_from_normalized(&self, l: &[f64]) -> Vec<f64> {
        l.iter().zip(&self.factors).map(|(v, s)| v / s).collect()
    }
}

/// Removes the diagonal of `P`: returns `P̃ = S⁻¹(P - D)S⁻¹` with
/// `S = (I - D)^{1/2}`, which has zero diagonal and `ρ(P̃) ≤ ρ(P)`.
///
/// With `W̃ = S⁻¹W`, `X̃ = S⁻¹X` and `L̃ = S·L` the pair `(W̃, L̃)` is the
/// reflection of `X̃` under `I - P̃ᵗ`.
pub fn normalize_diagonal(p: &Matrix) -> Result<(RoutingMatrix, DiagonalScale)> {
    validate_nonnegative(p)?;
    let n = p.dim();
    let mut factors = Vec::with_capacity(n);
    for i in 0..n {
        let d = p.get(i, i);
        if d >= 1.0 {
            return Err(Error::InvalidRouting(format!(
                "diagonal entry p[{i}][{i}] = {d} is not below one"
            )));
        }
        factors.push((1.0 - d).sqrt());
    }
    let mut normalized = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                normalized.set(i, j, p.get(i, j) / (factors[i] * factors[j]));
            }
        }
    }
    Ok((RoutingMatrix::new(normalized)?, DiagonalScale { factors }))
}
