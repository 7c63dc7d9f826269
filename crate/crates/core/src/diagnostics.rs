//! Exact-enumeration diagnostics on a finite box of coefficient vectors.
//!
//! Every conditional and block alphabet is restricted to the box and
//! renormalized, so each enumerated kernel has the box-restricted lattice
//! Gaussian as its exact stationary law. On that finite space the forward
//! operator is a matrix, and its spectral radius on mean-zero functions is
//! the second-largest eigenvalue modulus of `D^{1/2} P D^{-1/2}`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::blocked::enumerate_box;
use crate::chain::KernelKind;
use crate::error::{LatticeError, Result};
use crate::lattice::{GaussianParams, LatticeBasis};
use crate::tempering::{swap_log_ratio, TemperLadder};
use crate::univariate::{ChainState, DEGENERATE_MASS};

/// Default limit on the number of enumerated target states.
pub const DEFAULT_STATE_CAP: u64 = 1_000_000;
/// Limit on the number of states of a dense transition matrix.
pub const KERNEL_STATE_CAP: u64 = 4096;
/// Limit on the number of pair states of a tempering product kernel.
pub const PRODUCT_STATE_CAP: u64 = 2500;
/// Largest dimension for which Gibbs-Klein kernels average over all permutations.
pub const MAX_PERMUTATION_DIM: usize = 5;
/// Tolerance of the stationarity and reversibility checks.
pub const CHECK_TOL: f64 = 1e-10;
/// Limit of the mixing-time search.
pub const MAX_MIXING_TIME: u64 = 1_000_000;
/// Eigenvalues and TV values below this are rounding noise and read as 0.
pub const NOISE_FLOOR: f64 = 1e-12;

/// Inclusive per-coordinate bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoxSpec {
    pub bounds: Vec<(i64, i64)>,
}

impl BoxSpec {
    pub fn new(bounds: Vec<(i64, i64)>) -> Result<Self> {
        if bounds.is_empty() || bounds.iter().any(|(lo, hi)| lo > hi) {
            return Err(LatticeError::InvalidParameter(format!("empty box {bounds:?}")));
        }
        Ok(Self { bounds })
    }

    /// `[-radius, radius]^n`.
    pub fn symmetric(n: usize, radius: i64) -> Result<Self> {
        Self::new(vec![(-radius, radius); n])
    }

    /// Per-dimension `+-max(ceil(4 sigma / ||b^_i||), 3)` around the rounded real solution of `B x = c`.
    pub fn default_for(basis: &LatticeBasis, params: &GaussianParams) -> Result<Self> {
        params.check_dim(basis.dim())?;
        let center = basis.solve(params.center());
        let bounds = center
            .iter()
            .zip(basis.gs_norms())
            .map(|(&c, &g)| {
                let r = ((4.0 * params.sigma() / g).ceil() as i64).max(3);
                let mid = c.round() as i64;
                (mid - r, mid + r)
            })
            .collect();
        Self::new(bounds)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.bounds.iter().map(|(lo, hi)| (hi - lo + 1) as u64).collect()
    }

    /// Number of states, saturating.
    pub fn count(&self) -> u64 {
        self.sizes().iter().fold(1u64, |acc, &s| acc.saturating_mul(s))
    }

    fn strides(&self) -> Vec<usize> {
        let sizes = self.sizes();
        let mut strides = vec![1usize; sizes.len()];
        for d in (0..sizes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * sizes[d + 1] as usize;
        }
        strides
    }

    /// Lexicographic index of `x` (last coordinate fastest).
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let strides = self.strides();
        let mut idx = 0;
        for ((&v, &(lo, hi)), s) in x.iter().zip(&self.bounds).zip(strides) {
            if v < lo || v > hi {
                return None;
            }
            idx += (v - lo) as usize * s;
        }
        Some(idx)
    }

    pub fn states(&self) -> Vec<Vec<i64>> {
        enumerate_box(&self.bounds)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.index_of(x).is_some()
    }
}

/// Finite probability table over integer vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfTable {
    support: Vec<Vec<i64>>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    index: HashMap<Vec<i64>, usize>,
}

impl PmfTable {
    pub fn new(support: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Self::with_logs(support, probs, log_probs)
    }

    fn with_logs(support: Vec<Vec<i64>>, probs: Vec<f64>, log_probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(LatticeError::DimensionMismatch {
                expected: support.len(),
                got: probs.len(),
            });
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(LatticeError::InvalidParameter(
                "probabilities must be non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LatticeError::InvalidParameter(format!("probabilities sum to {total}")));
        }
        let mut index = HashMap::with_capacity(support.len());
        for (i, x) in support.iter().enumerate() {
            if index.insert(x.clone(), i).is_some() {
                return Err(LatticeError::InvalidParameter(format!("duplicate support point {x:?}")));
            }
        }
        Ok(Self {
            support,
            probs,
            log_probs,
            index,
        })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(support: Vec<Vec<i64>>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        Self::new(support, weights.iter().map(|w| w / total).collect())
    }

    /// Normalizes log weights with log-sum-exp.
    pub fn from_log_weights(support: Vec<Vec<i64>>, log_weights: &[f64]) -> Result<Self> {
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_weights.iter().map(|l| (l - max).exp()).sum();
        let log_norm = max + total.ln();
        let log_probs: Vec<f64> = log_weights.iter().map(|l| l - log_norm).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self::with_logs(support, probs, log_probs)
    }

    /// Empirical distribution of `samples`, ordered by first appearance.
    pub fn empirical(samples: &[Vec<i64>]) -> Result<Self> {
        let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
        for s in samples {
            *counts.entry(s.clone()).or_default() += 1;
        }
        let n = samples.len() as f64;
        let (support, probs) = counts.into_iter().map(|(k, c)| (k, c as f64 / n)).unzip();
        Self::new(support, probs)
    }

    pub fn support(&self) -> &[Vec<i64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn prob(&self, x: &[i64]) -> f64 {
        self.index.get(x).map_or(0.0, |&i| self.probs[i])
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        self.index.get(x).copied()
    }
}

/// Box-restricted lattice Gaussian.
pub fn enumerate_target(basis: &LatticeBasis, params: &GaussianParams, bx: &BoxSpec) -> Result<PmfTable> {
    enumerate_target_capped(basis, params, bx, DEFAULT_STATE_CAP)
}

pub fn enumerate_target_capped(
    basis: &LatticeBasis,
    params: &GaussianParams,
    bx: &BoxSpec,
    cap: u64,
) -> Result<PmfTable> {
    let n = basis.dim();
    params.check_dim(n)?;
    if bx.dim() != n {
        return Err(LatticeError::DimensionMismatch {
            expected: n,
            got: bx.dim(),
        });
    }
    let count = bx.count();
    if count > cap {
        return Err(LatticeError::StateSpaceTooLarge { states: count, cap });
    }
    let states = bx.states();
    let inv = 1.0 / (2.0 * params.sigma() * params.sigma());
    let logw = states
        .iter()
        .map(|x| basis.sq_distance(x, params.center()).map(|d| -d * inv))
        .collect::<Result<Vec<_>>>()?;
    PmfTable::from_log_weights(states, &logw)
}

/// Row-stochastic transition matrix over the states of a box.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub kind: KernelKind,
    pub states: Vec<Vec<i64>>,
    pub matrix: DMatrix<f64>,
}

impl KernelMatrix {
    /// Wraps an arbitrary row-stochastic matrix.
    pub fn from_matrix(kind: KernelKind, states: Vec<Vec<i64>>, matrix: DMatrix<f64>) -> Result<Self> {
        let k = states.len();
        if matrix.nrows() != k || matrix.ncols() != k {
            return Err(LatticeError::DimensionMismatch {
                expected: k,
                got: matrix.nrows(),
            });
        }
        for i in 0..k {
            let s: f64 = matrix.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-12 || matrix.row(i).iter().any(|&v| v < 0.0) {
                return Err(LatticeError::InvalidParameter(format!("row {i} is not a distribution")));
            }
        }
        Ok(Self { kind, states, matrix })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest deviation of a row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.matrix.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Probabilities proportional to `exp(logw)` over the given state indices.
fn local_pmf(logw: &[f64], idx: &[usize]) -> Vec<f64> {
    let max = idx.iter().map(|&i| logw[i]).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = idx.iter().map(|&i| (logw[i] - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Exact transition matrix of a kernel on the box, with conditionals
/// restricted to the box. Scan indices (uniform) and, for Gibbs-Klein, the
/// random permutations are averaged analytically.
pub fn build_kernel(
    kind: KernelKind,
    basis: &LatticeBasis,
    params: &GaussianParams,
    bx: &BoxSpec,
) -> Result<KernelMatrix> {
    let n = basis.dim();
    params.check_dim(n)?;
    if bx.dim() != n {
        return Err(LatticeError::DimensionMismatch {
            expected: n,
            got: bx.dim(),
        });
    }
    let count = bx.count();
    if count > KERNEL_STATE_CAP {
        return Err(LatticeError::StateSpaceTooLarge {
            states: count,
            cap: KERNEL_STATE_CAP,
        });
    }
    // weighted coordinate groups updated jointly
    let groups: Vec<(Vec<usize>, f64)> = match kind {
        KernelKind::Gibbs | KernelKind::Mwg => (0..n).map(|i| (vec![i], 1.0 / n as f64)).collect(),
        KernelKind::Gk { m } => {
            if m == 0 || m > n {
                return Err(LatticeError::InvalidParameter(format!(
                    "block size {m} outside 1..={n}"
                )));
            }
            if n > MAX_PERMUTATION_DIM {
                return Err(LatticeError::PermutationSpaceTooLarge {
                    n,
                    max: MAX_PERMUTATION_DIM,
                });
            }
            let perms = permutations(n);
            let total = perms.len() as f64;
            let mut sets: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
            for p in perms {
                let mut s = p[..m].to_vec();
                s.sort_unstable();
                *sets.entry(s).or_default() += 1;
            }
            sets.into_iter().map(|(s, c)| (s, c as f64 / total)).collect()
        }
    };

    let states = bx.states();
    let inv = 1.0 / (2.0 * params.sigma() * params.sigma());
    let logw = states
        .iter()
        .map(|x| basis.sq_distance(x, params.center()).map(|d| -d * inv))
        .collect::<Result<Vec<_>>>()?;
    let strides = bx.strides();
    let sizes = bx.sizes();
    let mwg = matches!(kind, KernelKind::Mwg);

    let rows: Vec<Vec<(usize, f64)>> = states
        .par_iter()
        .enumerate()
        .map(|(s, x)| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut diag = 0.0;
            for (sites, weight) in &groups {
                // index of x with the group coordinates at the box minimum
                let mut base = s;
                for &i in sites {
                    base -= (x[i] - bx.bounds[i].0) as usize * strides[i];
                }
                let mut idx = vec![base];
                for &i in sites {
                    let mut next = Vec::with_capacity(idx.len() * sizes[i] as usize);
                    for &b in &idx {
                        for k in 0..sizes[i] as usize {
                            next.push(b + k * strides[i]);
                        }
                    }
                    idx = next;
                }
                let p = local_pmf(&logw, &idx);
                if !mwg {
                    for (&t, &pt) in idx.iter().zip(&p) {
                        if t == s {
                            diag += weight * pt;
                        } else {
                            row.push((t, weight * pt));
                        }
                    }
                    continue;
                }
                let cur = idx.iter().position(|&t| t == s).expect("state lies on its own line");
                let rest: f64 = p.iter().enumerate().filter(|&(j, _)| j != cur).map(|(_, v)| v).sum();
                if rest < DEGENERATE_MASS {
                    diag += weight;
                    continue;
                }
                let mut moved = 0.0;
                for (j, (&t, &pt)) in idx.iter().zip(&p).enumerate() {
                    if j == cur {
                        continue;
                    }
                    let rest_t: f64 = p.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, v)| v).sum();
                    let alpha = if rest_t <= 0.0 || rest >= rest_t {
                        1.0
                    } else {
                        rest / rest_t
                    };
                    let q = weight * (pt / rest) * alpha;
                    moved += q;
                    row.push((t, q));
                }
                diag += weight - moved;
            }
            row.push((s, diag));
            row
        })
        .collect();

    let k = states.len();
    let mut matrix = DMatrix::<f64>::zeros(k, k);
    for (s, row) in rows.into_iter().enumerate() {
        for (t, v) in row {
            matrix[(s, t)] += v;
        }
    }
    Ok(KernelMatrix { kind, states, matrix })
}

fn check_aligned(kernel: &KernelMatrix, target: &PmfTable) -> Result<()> {
    if kernel.states.len() != target.len() || kernel.states.iter().zip(target.support()).any(|(a, b)| a != b) {
        return Err(LatticeError::InvalidParameter(
            "kernel and target use different state orders".into(),
        ));
    }
    Ok(())
}

/// `||pi^T P - pi^T||_inf`.
pub fn stationarity_residual(kernel: &KernelMatrix, target: &PmfTable) -> Result<f64> {
    check_aligned(kernel, target)?;
    let pi = DVector::from_column_slice(target.probs());
    let moved = kernel.matrix.tr_mul(&pi);
    Ok((moved - pi).amax())
}

/// `||diag(pi) P - (diag(pi) P)^T||_inf`.
pub fn reversibility_residual(kernel: &KernelMatrix, target: &PmfTable) -> Result<f64> {
    check_aligned(kernel, target)?;
    let pi = target.probs();
    let k = kernel.len();
    let mut worst = 0.0_f64;
    for x in 0..k {
        for y in (x + 1)..k {
            let d = (pi[x] * kernel.matrix[(x, y)] - pi[y] * kernel.matrix[(y, x)]).abs();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// Spectral radius of the forward operator on mean-zero functions.
    pub rho: f64,
    pub gap: f64,
    /// `||S sqrt(pi) - sqrt(pi)||_inf` for the symmetrized matrix `S`.
    pub eigen_residual: f64,
    /// Largest non-trivial eigenvalue.
    pub lambda_second: f64,
    /// Smallest eigenvalue.
    pub lambda_min: f64,
    /// False when `rho` is 1 (frozen or reducible chain).
    pub ergodic: bool,
}

pub fn spectral_radius_forward(kernel: &KernelMatrix, target: &PmfTable) -> Result<SpectralReport> {
    let stat = stationarity_residual(kernel, target)?;
    if stat.is_nan() || stat >= CHECK_TOL {
        return Err(LatticeError::NotStationary(stat));
    }
    let rev = reversibility_residual(kernel, target)?;
    if rev.is_nan() || rev >= CHECK_TOL {
        return Err(LatticeError::NotReversible(rev));
    }
    let k = kernel.len();
    let lp = target.log_probs();
    let mut s = DMatrix::<f64>::zeros(k, k);
    for x in 0..k {
        for y in 0..k {
            let v = kernel.matrix[(x, y)];
            if v != 0.0 {
                s[(x, y)] = v * (0.5 * (lp[x] - lp[y])).exp();
            }
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let root = DVector::from_iterator(k, target.probs().iter().map(|p| p.sqrt()));
    let eigen_residual = (&s * &root - &root).amax();
    let deflated = &s - &root * root.transpose();
    let eig = SymmetricEigen::new(deflated);
    let lambda_second = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let snap = |v: f64| if v.abs() < NOISE_FLOOR { 0.0 } else { v };
    let (lambda_second, lambda_min) = (snap(lambda_second), snap(lambda_min));
    let rho = lambda_second.abs().max(lambda_min.abs()).min(1.0);
    Ok(SpectralReport {
        rho,
        gap: 1.0 - rho,
        eigen_residual,
        lambda_second,
        lambda_min,
        ergodic: rho < 1.0 - 1e-12,
    })
}

/// `(1/2) sum |a - b|`, aligning supports by key.
pub fn tv_distance(a: &PmfTable, b: &PmfTable) -> f64 {
    let mut total = 0.0;
    for (x, &p) in a.support().iter().zip(a.probs()) {
        total += (p - b.prob(x)).abs();
    }
    for (x, &q) in b.support().iter().zip(b.probs()) {
        if a.index_of(x).is_none() {
            total += q;
        }
    }
    (0.5 * total).min(1.0)
}

fn tv_dense(row: &[f64], pi: &[f64]) -> f64 {
    0.5 * row.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    /// `(t, TV(P^t(x0, .), pi))` for `t = 0..=t_max`.
    pub points: Vec<(u64, f64)>,
    /// Least-squares slope of `ln TV` against `t` over the tail half.
    pub tail_slope: f64,
    /// `exp` of the fitted intercept; a proxy for `M(x0)`.
    pub intercept: f64,
}

impl DecayCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,tv\n");
        for (t, tv) in &self.points {
            out.push_str(&format!("{t},{tv:e}\n"));
        }
        out
    }
}

pub fn tv_decay_curve(kernel: &KernelMatrix, target: &PmfTable, x0: &[i64], t_max: u64) -> Result<DecayCurve> {
    check_aligned(kernel, target)?;
    if t_max > 10_000 {
        return Err(LatticeError::InvalidParameter(format!("t_max {t_max} exceeds 10000")));
    }
    let start = target
        .index_of(x0)
        .ok_or_else(|| LatticeError::InvalidParameter(format!("{x0:?} is not a state of the box")))?;
    let pi = target.probs();
    let k = kernel.len();
    let mut v = DVector::<f64>::zeros(k);
    v[start] = 1.0;
    let mut points = Vec::with_capacity(t_max as usize + 1);
    points.push((0, tv_dense(v.as_slice(), pi)));
    for t in 1..=t_max {
        v = kernel.matrix.tr_mul(&v);
        points.push((t, tv_dense(v.as_slice(), pi)));
    }
    let tail: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, tv)| *t >= t_max / 2 && *tv > NOISE_FLOOR)
        .map(|&(t, tv)| (t as f64, tv.ln()))
        .collect();
    let (tail_slope, log_intercept) = least_squares(&tail);
    Ok(DecayCurve {
        points,
        tail_slope,
        intercept: log_intercept.exp(),
    })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `max_x TV(M(x, .), pi)`.
fn worst_tv(m: &DMatrix<f64>, pi: &[f64]) -> f64 {
    (0..m.nrows())
        .map(|i| 0.5 * m.row(i).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest `t` with `max_x TV(P^t(x, .), pi) <= epsilon`, by repeated
/// squaring followed by a binary descent over the stored powers.
pub fn estimate_mixing(kernel: &KernelMatrix, target: &PmfTable, epsilon: f64) -> Result<u64> {
    check_aligned(kernel, target)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(LatticeError::InvalidParameter(format!(
            "epsilon {epsilon} outside (0, 1)"
        )));
    }
    let pi = target.probs();
    let k = kernel.len();
    if worst_tv(&DMatrix::identity(k, k), pi) <= epsilon {
        return Ok(0);
    }
    // powers[j] = P^(2^j)
    let mut powers = vec![kernel.matrix.clone()];
    loop {
        let j = powers.len() - 1;
        if worst_tv(&powers[j], pi) <= epsilon {
            break;
        }
        if (1u64 << j) > MAX_MIXING_TIME {
            return Err(LatticeError::NotConverged(MAX_MIXING_TIME));
        }
        let sq = &powers[j] * &powers[j];
        powers.push(sq);
    }
    let top = powers.len() - 1;
    if top == 0 {
        return Ok(1);
    }
    // invariant: d(P^t) > epsilon for the accumulated t
    let mut t: u64 = 1 << (top - 1);
    let mut acc = powers[top - 1].clone();
    for j in (0..top - 1).rev() {
        let cand = &acc * &powers[j];
        if worst_tv(&cand, pi) > epsilon {
            acc = cand;
            t += 1 << j;
        }
    }
    let t = t + 1;
    if t > MAX_MIXING_TIME {
        return Err(LatticeError::NotConverged(MAX_MIXING_TIME));
    }
    Ok(t)
}

/// Two-temperature tempering chain on `box x box`: `swap_stride` kernel steps
/// on each coordinate, then one swap attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    /// Pairs `(cold, hot)` in lexicographic order of their box indices.
    pub states: Vec<(Vec<i64>, Vec<i64>)>,
    pub matrix: DMatrix<f64>,
    /// Product of the two tempered box targets.
    pub target: Vec<f64>,
}

impl ProductKernel {
    /// `||pi^T P - pi^T||_inf`.
    pub fn stationarity_residual(&self) -> f64 {
        let pi = DVector::from_column_slice(&self.target);
        (self.matrix.tr_mul(&pi) - pi).amax()
    }
}

pub fn tempering_product_kernel(
    kind: KernelKind,
    basis: &LatticeBasis,
    params: &GaussianParams,
    bx: &BoxSpec,
    ladder: &TemperLadder,
) -> Result<ProductKernel> {
    if ladder.len() != 2 {
        return Err(LatticeError::InvalidParameter(format!(
            "product check needs two temperatures, got {}",
            ladder.len()
        )));
    }
    let (t0, t1) = (ladder.temps()[0], ladder.temps()[1]);
    let (p0, p1) = (params.with_scaled_sigma(t0)?, params.with_scaled_sigma(t1)?);
    let k = bx.count();
    if k.saturating_mul(k) > PRODUCT_STATE_CAP {
        return Err(LatticeError::StateSpaceTooLarge {
            states: k.saturating_mul(k),
            cap: PRODUCT_STATE_CAP,
        });
    }
    let stride = ladder.swap_stride() as usize;
    let step = |p: &GaussianParams| -> Result<(DMatrix<f64>, PmfTable)> {
        let m = build_kernel(kind, basis, p, bx)?;
        let mut pow = m.matrix.clone();
        for _ in 1..stride {
            pow = &pow * &m.matrix;
        }
        Ok((pow, enumerate_target(basis, p, bx)?))
    };
    let (m0, pi0) = step(&p0)?;
    let (m1, pi1) = step(&p1)?;
    let moves = m0.kronecker(&m1);
    let states = bx.states();
    let k = states.len();
    let chain = |x: usize| ChainState::new(basis, &p0, states[x].clone());
    let hot = |x: usize| ChainState::new(basis, &p1, states[x].clone());
    let mut swap = DMatrix::<f64>::zeros(k * k, k * k);
    for a in 0..k {
        for b in 0..k {
            let from = a * k + b;
            let log_alpha = swap_log_ratio(&chain(a)?, &hot(b)?, basis, params, t0, t1)?;
            let alpha = log_alpha.exp().min(1.0);
            swap[(from, b * k + a)] += alpha;
            swap[(from, from)] += 1.0 - alpha;
        }
    }
    let mut pairs = Vec::with_capacity(k * k);
    let mut target = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            pairs.push((states[a].clone(), states[b].clone()));
            target.push(pi0.probs()[a] * pi1.probs()[b]);
        }
    }
    Ok(ProductKernel {
        states: pairs,
        matrix: moves * swap,
        target,
    })
}

/// One spectral record as emitted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRecord {
    pub kind: String,
    pub n: usize,
    pub sigma: f64,
    #[serde(rename = "box")]
    pub bx: Vec<(i64, i64)>,
    pub rho: f64,
    pub gap: f64,
}

impl SpectralRecord {
    pub fn new(kind: KernelKind, params: &GaussianParams, bx: &BoxSpec, report: &SpectralReport) -> Self {
        Self {
            kind: kind.label(),
            n: bx.dim(),
            sigma: params.sigma(),
            bx: bx.bounds.clone(),
            rho: report.rho,
            gap: report.gap,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}
