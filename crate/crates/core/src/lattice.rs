//! Lattice bases, Gaussian weights over lattice points, exact one-dimensional
//! integer Gaussians and theta sums.
//!
//! A lattice is `{B x : x in Z^n}` for a full-rank square basis `B` whose
//! columns are the basis vectors. Every sampler in the crate works on the
//! integer coefficient vector `x` and reads the geometry through the cached
//! factorization `B = Q R` with a strictly positive diagonal on `R`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{LatticeError, Result};

/// Default support half-width of the 1-D integer Gaussian, in standard deviations.
pub const DEFAULT_TAIL_FACTOR: f64 = 12.0;

/// Default relative tolerance for theta sums.
pub const DEFAULT_THETA_TOL: f64 = 1e-15;

const RANK_TOL: f64 = 1e-10;

/// Full-rank lattice basis with its QR factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBasis {
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    gs_norms: Vec<f64>,
}

impl LatticeBasis {
    /// Factorizes `columns` (basis vectors as columns). Column signs of `Q` are
    /// chosen so that `R` has a positive diagonal.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let n = columns.nrows();
        if n == 0 || columns.ncols() != n {
            return Err(LatticeError::InvalidBasis(format!(
                "expected a non-empty square matrix, got {}x{}",
                columns.nrows(),
                columns.ncols()
            )));
        }
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(LatticeError::InvalidBasis("non-finite entry".into()));
        }

        let qr = columns.clone().qr();
        let mut q = qr.q();
        let mut r = qr.r();
        for i in 0..n {
            if r[(i, i)] < 0.0 {
                r.row_mut(i).neg_mut();
                q.column_mut(i).neg_mut();
            }
        }

        let max_norm = (0..n).map(|j| columns.column(j).norm()).fold(0.0_f64, f64::max);
        for i in 0..n {
            if r[(i, i)] < RANK_TOL * max_norm || max_norm == 0.0 {
                return Err(LatticeError::RankDeficient {
                    index: i,
                    value: r[(i, i)],
                });
            }
        }
        // Entries below the diagonal are exact zeros by construction; keep them so.
        for j in 0..n {
            for i in (j + 1)..n {
                r[(i, j)] = 0.0;
            }
        }
        let gs_norms = (0..n).map(|i| r[(i, i)]).collect();
        Ok(Self {
            b: columns,
            q,
            r,
            gs_norms,
        })
    }

    /// Builds a basis from a row-major matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LatticeError::InvalidBasis("rows of unequal length".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Parses the plain-text basis format: one row per line, whitespace separated.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| LatticeError::Parse(format!("line {}: {tok:?}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(LatticeError::Parse("no rows".into()));
        }
        Self::from_rows(&rows)
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Gram-Schmidt norms `||b^_i|| = r_{i,i}`.
    pub fn gs_norms(&self) -> &[f64] {
        &self.gs_norms
    }

    pub fn max_gs_norm(&self) -> f64 {
        self.gs_norms.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_gs_norm(&self) -> f64 {
        self.gs_norms.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Basis of the same lattice with columns reordered: column `j` of the
    /// result is column `perm[j]` of `self` (that is, `B E`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        check_permutation(perm, n)?;
        Self::new(DMatrix::from_fn(n, n, |i, j| self.b[(i, perm[j])]))
    }

    /// `Q^T c`.
    pub fn rotate(&self, center: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(center);
        (self.q.transpose() * c).iter().cloned().collect()
    }

    /// Real solution of `B x = c`, computed as `R^{-1} Q^T c`.
    pub fn solve(&self, center: &[f64]) -> Vec<f64> {
        let rotated = self.rotate(center);
        let n = self.dim();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = rotated[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                acc -= self.r[(i, j)] * xj;
            }
            x[i] = acc / self.r[(i, i)];
        }
        x
    }

    /// `B x` for an integer coefficient vector.
    pub fn point(&self, x: &[i64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.b[(i, j)] * x[j] as f64).sum())
            .collect()
    }

    /// `||B x - c||^2`.
    pub fn sq_distance(&self, x: &[i64], center: &[f64]) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return Err(LatticeError::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        if center.len() != n {
            return Err(LatticeError::DimensionMismatch {
                expected: n,
                got: center.len(),
            });
        }
        Ok(self.point(x).iter().zip(center).map(|(p, c)| (p - c) * (p - c)).sum())
    }

    /// Squared norm of basis column `i`.
    pub fn column_sq_norm(&self, i: usize) -> f64 {
        self.b.column(i).norm_squared()
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(LatticeError::DimensionMismatch {
            expected: n,
            got: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(LatticeError::InvalidParameter(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Standard deviation and center of the lattice Gaussian `D_{L, sigma, c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    sigma: f64,
    center: Vec<f64>,
}

impl GaussianParams {
    pub fn new(sigma: f64, center: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(LatticeError::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(LatticeError::InvalidParameter("non-finite center".into()));
        }
        Ok(Self { sigma, center })
    }

    /// Zero-centered parameters in dimension `n`.
    pub fn centered(sigma: f64, n: usize) -> Result<Self> {
        Self::new(sigma, vec![0.0; n])
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Same center with `sigma` multiplied by `factor` (a tempered target).
    pub fn with_scaled_sigma(&self, factor: f64) -> Result<Self> {
        Self::new(self.sigma * factor, self.center.clone())
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        if self.center.len() != n {
            return Err(LatticeError::DimensionMismatch {
                expected: n,
                got: self.center.len(),
            });
        }
        Ok(())
    }
}

/// `-||B x - c||^2 / (2 sigma^2)`, the log of the unnormalized lattice Gaussian mass.
pub fn density_exponent(basis: &LatticeBasis, params: &GaussianParams, x: &[i64]) -> Result<f64> {
    params.check_dim(basis.dim())?;
    let d2 = basis.sq_distance(x, params.center())?;
    Ok(-d2 / (2.0 * params.sigma * params.sigma))
}

/// Finite distribution over integers, stored as parallel value/probability lists.
///
/// `log_mass` keeps the log of the unnormalized total, measured in units of
/// `exp(-(k - center)^2 / (2 s^2))`, so that restricted theta sums fall out of
/// the same table.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerPmf {
    values: Vec<i64>,
    probs: Vec<f64>,
    log_mass: f64,
}

impl IntegerPmf {
    /// Normalizes log weights over `values` with log-sum-exp.
    pub fn from_log_weights(values: Vec<i64>, log_weights: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(LatticeError::InvalidParameter("empty support".into()));
        }
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            values,
            probs,
            log_mass: max + total.ln(),
        })
    }

    /// Discrete Gaussian with the given center and deviation over `values`.
    pub fn gaussian(values: Vec<i64>, center: f64, sigma: f64) -> Result<Self> {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let lw: Vec<f64> = values
            .iter()
            .map(|&k| {
                let d = k as f64 - center;
                -d * d * inv
            })
            .collect();
        Self::from_log_weights(values, &lw)
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Probability of `k`; zero off the support.
    pub fn prob(&self, k: i64) -> f64 {
        self.values.iter().position(|&v| v == k).map_or(0.0, |i| self.probs[i])
    }

    /// Total probability of every value except `k`, summed directly so that
    /// it keeps full relative precision when `k` carries almost all the mass.
    pub fn complement(&self, k: i64) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .filter(|(&v, _)| v != k)
            .map(|(_, &p)| p)
            .sum()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (v, p) in self.values.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *v;
            }
        }
        // u landed in the rounding gap above the accumulated total
        *self.values.last().expect("non-empty support")
    }

    /// Inverse-CDF draw that never returns `excluded`, using weights
    /// renormalized over the rest of the support. `None` when nothing remains.
    pub fn sample_excluding<R: Rng + ?Sized>(&self, excluded: i64, rng: &mut R) -> Option<i64> {
        let rest = self.complement(excluded);
        if rest <= 0.0 {
            return None;
        }
        let u: f64 = rng.random::<f64>() * rest;
        let mut acc = 0.0;
        let mut last = None;
        for (v, p) in self.values.iter().zip(&self.probs) {
            if *v == excluded {
                continue;
            }
            acc += p;
            last = Some(*v);
            if u < acc {
                return Some(*v);
            }
        }
        last
    }
}

/// Integer window `[ceil(c - t s), floor(c + t s)]`, widened to contain the
/// nearest integer to `c` when it would otherwise be empty.
pub fn gaussian_window(center: f64, sigma: f64, tail_factor: f64) -> (i64, i64) {
    let lo = (center - tail_factor * sigma).ceil() as i64;
    let hi = (center + tail_factor * sigma).floor() as i64;
    let nearest = center.round() as i64;
    (lo.min(nearest), hi.max(nearest))
}

/// One-dimensional integer Gaussian `D_{Z, sigma, center}` truncated at
/// `tail_factor` standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dgauss1dSpec {
    sigma: f64,
    center: f64,
    tail_factor: f64,
}

impl Dgauss1dSpec {
    pub fn new(sigma: f64, center: f64, tail_factor: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(LatticeError::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(tail_factor > 0.0 && tail_factor.is_finite()) {
            return Err(LatticeError::InvalidParameter(format!(
                "tail factor must be positive, got {tail_factor}"
            )));
        }
        if !center.is_finite() {
            return Err(LatticeError::InvalidParameter("non-finite center".into()));
        }
        let spec = Self {
            sigma,
            center,
            tail_factor,
        };
        let (lo, hi) = spec.support();
        if lo > hi {
            return Err(LatticeError::InvalidParameter(format!(
                "empty support for center {center}, sigma {sigma}, tail {tail_factor}"
            )));
        }
        Ok(spec)
    }

    pub fn with_default_tail(sigma: f64, center: f64) -> Result<Self> {
        Self::new(sigma, center, DEFAULT_TAIL_FACTOR)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn tail_factor(&self) -> f64 {
        self.tail_factor
    }

    /// Inclusive truncated support.
    pub fn support(&self) -> (i64, i64) {
        let lo = (self.center - self.tail_factor * self.sigma).ceil() as i64;
        let hi = (self.center + self.tail_factor * self.sigma).floor() as i64;
        (lo, hi)
    }

    /// The whole normalized table.
    pub fn table(&self) -> IntegerPmf {
        let (lo, hi) = self.support();
        IntegerPmf::gaussian((lo..=hi).collect(), self.center, self.sigma)
            .expect("support checked non-empty at construction")
    }

    pub fn pmf(&self, k: i64) -> f64 {
        self.table().prob(k)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.table().sample(rng)
    }
}

/// Natural log of `sum_k exp(-(spacing k + offset)^2 / (2 sigma^2))`.
///
/// Terms are added symmetrically outward from the index minimizing
/// `|spacing k + offset|` until both new terms drop below `rel_tol` times the
/// running sum. The leading term is factored out, so this stays finite even
/// when every term underflows.
pub fn log_theta_sum(sigma: f64, spacing: f64, offset: f64, rel_tol: f64) -> f64 {
    debug_assert!(sigma > 0.0 && spacing > 0.0 && rel_tol > 0.0);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let log_term = |k: f64| {
        let d = spacing * k + offset;
        -d * d * inv
    };
    let k0 = (-offset / spacing).round();
    let lead = log_term(k0);
    let mut sum = 1.0;
    let mut step = 1.0;
    loop {
        let up = (log_term(k0 + step) - lead).exp();
        let down = (log_term(k0 - step) - lead).exp();
        sum += up + down;
        if up.max(down) < rel_tol * sum {
            break;
        }
        step += 1.0;
    }
    lead + sum.ln()
}

/// `rho_sigma(spacing Z + offset) = sum_k exp(-(spacing k + offset)^2 / (2 sigma^2))`.
pub fn theta_sum(sigma: f64, spacing: f64, offset: f64, rel_tol: f64) -> f64 {
    log_theta_sum(sigma, spacing, offset, rel_tol).exp()
}
