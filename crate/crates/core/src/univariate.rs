//! Single-site kernels: random-scan Gibbs and Metropolis-within-Gibbs.
//!
//! Both kernels resample one coordinate of the coefficient vector per step.
//! The conditional of coordinate `i` is a 1-D integer Gaussian with center
//! `mu_i = b_i^T (c - sum_{j != i} x_j b_j) / ||b_i||^2` and deviation
//! `sigma / ||b_i||`, optionally restricted to a finite per-site alphabet.

use rand::Rng;

use crate::error::{LatticeError, Result};
use crate::lattice::{density_exponent, gaussian_window, GaussianParams, IntegerPmf, LatticeBasis};

/// Mass below which a Metropolis-within-Gibbs proposal has no support.
pub const DEGENERATE_MASS: f64 = 1e-300;

/// Random-scan site selection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPolicy {
    probs: Vec<f64>,
}

impl ScanPolicy {
    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(LatticeError::InvalidParameter(
                "selection probabilities must be positive".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LatticeError::InvalidParameter(format!(
                "selection probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.probs.len();
        if n == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        n - 1
    }
}

/// Current Markov state: coefficients and their cached log target weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub coeffs: Vec<i64>,
    pub log_target: f64,
}

impl ChainState {
    pub fn new(basis: &LatticeBasis, params: &GaussianParams, coeffs: Vec<i64>) -> Result<Self> {
        let log_target = density_exponent(basis, params, &coeffs)?;
        Ok(Self { coeffs, log_target })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub(crate) fn with_coeffs(basis: &LatticeBasis, params: &GaussianParams, coeffs: Vec<i64>) -> Self {
        let log_target = density_exponent(basis, params, &coeffs).expect("dimensions checked by caller");
        Self { coeffs, log_target }
    }
}

/// Candidate values for one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteSet {
    /// All of Z, truncated at the alphabet's tail factor around the conditional center.
    Integers,
    /// Inclusive range.
    Range(i64, i64),
    /// Explicit sorted list of values.
    List(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteAlphabet {
    sites: Vec<SiteSet>,
    tail_factor: f64,
}

impl SiteAlphabet {
    pub fn integers(n: usize, tail_factor: f64) -> Self {
        Self {
            sites: vec![SiteSet::Integers; n],
            tail_factor,
        }
    }

    /// Per-coordinate inclusive ranges.
    pub fn ranges(bounds: &[(i64, i64)]) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if lo > hi {
                return Err(LatticeError::EmptyAlphabet(i));
            }
        }
        Ok(Self {
            sites: bounds.iter().map(|&(lo, hi)| SiteSet::Range(lo, hi)).collect(),
            tail_factor: crate::lattice::DEFAULT_TAIL_FACTOR,
        })
    }

    pub fn uniform_range(n: usize, lo: i64, hi: i64) -> Result<Self> {
        Self::ranges(&vec![(lo, hi); n])
    }

    pub fn from_sets(sites: Vec<SiteSet>, tail_factor: f64) -> Result<Self> {
        for (i, s) in sites.iter().enumerate() {
            match s {
                SiteSet::Range(lo, hi) if lo > hi => return Err(LatticeError::EmptyAlphabet(i)),
                SiteSet::List(v) if v.is_empty() => return Err(LatticeError::EmptyAlphabet(i)),
                _ => {}
            }
        }
        let sites = sites
            .into_iter()
            .map(|s| match s {
                SiteSet::List(mut v) => {
                    v.sort_unstable();
                    v.dedup();
                    SiteSet::List(v)
                }
                other => other,
            })
            .collect();
        Ok(Self { sites, tail_factor })
    }

    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    pub fn tail_factor(&self) -> f64 {
        self.tail_factor
    }

    pub fn site(&self, i: usize) -> &SiteSet {
        &self.sites[i]
    }

    pub fn is_finite(&self) -> bool {
        self.sites.iter().all(|s| !matches!(s, SiteSet::Integers))
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        if self.sites.len() != n {
            return Err(LatticeError::DimensionMismatch {
                expected: n,
                got: self.sites.len(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, i: usize, k: i64) -> bool {
        match &self.sites[i] {
            SiteSet::Integers => true,
            SiteSet::Range(lo, hi) => (*lo..=*hi).contains(&k),
            SiteSet::List(v) => v.binary_search(&k).is_ok(),
        }
    }

    /// Nearest admissible value to the real number `v` (ties to the lower value).
    pub fn nearest(&self, i: usize, v: f64) -> i64 {
        match &self.sites[i] {
            SiteSet::Integers => v.round() as i64,
            SiteSet::Range(lo, hi) => (v.round() as i64).clamp(*lo, *hi),
            SiteSet::List(vals) => *vals
                .iter()
                .min_by(|a, b| {
                    let da = (**a as f64 - v).abs();
                    let db = (**b as f64 - v).abs();
                    da.partial_cmp(&db).expect("finite")
                })
                .expect("non-empty list"),
        }
    }

    /// Candidate values of site `i` for a conditional with the given center and deviation.
    pub fn candidates(&self, i: usize, center: f64, dev: f64) -> Vec<i64> {
        match &self.sites[i] {
            SiteSet::Integers => {
                let (lo, hi) = gaussian_window(center, dev, self.tail_factor);
                (lo..=hi).collect()
            }
            SiteSet::Range(lo, hi) => (*lo..=*hi).collect(),
            SiteSet::List(v) => v.clone(),
        }
    }

    /// 1-D integer Gaussian over the candidates of site `i`.
    pub fn site_pmf(&self, i: usize, center: f64, dev: f64) -> Result<IntegerPmf> {
        let values = self.candidates(i, center, dev);
        if values.is_empty() {
            return Err(LatticeError::EmptyAlphabet(i));
        }
        IntegerPmf::gaussian(values, center, dev)
    }
}

/// Center and deviation of the 1-D conditional of coordinate `i`.
pub fn conditional_moments(basis: &LatticeBasis, params: &GaussianParams, coeffs: &[i64], i: usize) -> (f64, f64) {
    let b = basis.b();
    let n = basis.dim();
    let c = params.center();
    let mut dot = 0.0;
    for row in 0..n {
        let mut v = c[row];
        for j in 0..n {
            if j != i {
                v -= coeffs[j] as f64 * b[(row, j)];
            }
        }
        dot += b[(row, i)] * v;
    }
    let norm_sq = basis.column_sq_norm(i);
    (dot / norm_sq, params.sigma() / norm_sq.sqrt())
}

/// `P_i(k | x_[-i])` over the alphabet of site `i`.
pub fn conditional_pmf(
    basis: &LatticeBasis,
    params: &GaussianParams,
    state: &ChainState,
    i: usize,
    alphabet: &SiteAlphabet,
) -> Result<IntegerPmf> {
    let n = basis.dim();
    if i >= n {
        return Err(LatticeError::InvalidParameter(format!(
            "site {i} out of range for n = {n}"
        )));
    }
    if state.dim() != n {
        return Err(LatticeError::DimensionMismatch {
            expected: n,
            got: state.dim(),
        });
    }
    params.check_dim(n)?;
    alphabet.check_dim(n)?;
    let (mu, dev) = conditional_moments(basis, params, &state.coeffs, i);
    alphabet.site_pmf(i, mu, dev)
}

fn check_inputs(
    basis: &LatticeBasis,
    params: &GaussianParams,
    state: &ChainState,
    scan: &ScanPolicy,
    alphabet: &SiteAlphabet,
) -> Result<()> {
    let n = basis.dim();
    params.check_dim(n)?;
    alphabet.check_dim(n)?;
    if state.dim() != n {
        return Err(LatticeError::DimensionMismatch {
            expected: n,
            got: state.dim(),
        });
    }
    if scan.dim() != n {
        return Err(LatticeError::DimensionMismatch {
            expected: n,
            got: scan.dim(),
        });
    }
    Ok(())
}

/// One random-scan Gibbs update. Returns the new state and the updated site.
pub fn gibbs_step_at<R: Rng + ?Sized>(
    state: &ChainState,
    basis: &LatticeBasis,
    params: &GaussianParams,
    scan: &ScanPolicy,
    alphabet: &SiteAlphabet,
    rng: &mut R,
) -> Result<(ChainState, usize)> {
    check_inputs(basis, params, state, scan, alphabet)?;
    let i = scan.choose(rng);
    let pmf = conditional_pmf(basis, params, state, i, alphabet)?;
    let k = pmf.sample(rng);
    if k == state.coeffs[i] {
        return Ok((state.clone(), i));
    }
    let mut coeffs = state.coeffs.clone();
    coeffs[i] = k;
    Ok((ChainState::with_coeffs(basis, params, coeffs), i))
}

pub fn gibbs_step<R: Rng + ?Sized>(
    state: &ChainState,
    basis: &LatticeBasis,
    params: &GaussianParams,
    scan: &ScanPolicy,
    alphabet: &SiteAlphabet,
    rng: &mut R,
) -> Result<ChainState> {
    gibbs_step_at(state, basis, params, scan, alphabet, rng).map(|(s, _)| s)
}

/// Outcome of one Metropolis-within-Gibbs update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwgMove {
    pub site: usize,
    pub proposed: Option<i64>,
    pub accept_prob: f64,
    pub accepted: bool,
    /// The conditional was concentrated on the current value; the step was a self-loop.
    pub degenerate: bool,
}

/// `min{1, (1 - P(current)) / (1 - P(proposed))}`, from the conditional table.
pub fn mwg_accept_prob(pmf: &IntegerPmf, current: i64, proposed: i64) -> f64 {
    let num = pmf.complement(current);
    let den = pmf.complement(proposed);
    if den <= 0.0 || num >= den {
        1.0
    } else {
        num / den
    }
}

/// One Metropolis-within-Gibbs update: propose a value different from the
/// current one from the conditional renormalized without it, then accept
/// with `min{1, (1 - P(x*)) / (1 - P(x_new))}`.
pub fn mwg_step<R: Rng + ?Sized>(
    state: &ChainState,
    basis: &LatticeBasis,
    params: &GaussianParams,
    scan: &ScanPolicy,
    alphabet: &SiteAlphabet,
    rng: &mut R,
) -> Result<(ChainState, MwgMove)> {
    check_inputs(basis, params, state, scan, alphabet)?;
    let i = scan.choose(rng);
    let pmf = conditional_pmf(basis, params, state, i, alphabet)?;
    let current = state.coeffs[i];
    let stay = |accept_prob, proposed, degenerate| MwgMove {
        site: i,
        proposed,
        accept_prob,
        accepted: false,
        degenerate,
    };
    if pmf.complement(current) < DEGENERATE_MASS {
        return Ok((state.clone(), stay(0.0, None, true)));
    }
    let Some(proposed) = pmf.sample_excluding(current, rng) else {
        return Ok((state.clone(), stay(0.0, None, true)));
    };
    let alpha = mwg_accept_prob(&pmf, current, proposed);
    let u: f64 = rng.random();
    if u < alpha {
        let mut coeffs = state.coeffs.clone();
        coeffs[i] = proposed;
        let mv = MwgMove {
            site: i,
            proposed: Some(proposed),
            accept_prob: alpha,
            accepted: true,
            degenerate: false,
        };
        Ok((ChainState::with_coeffs(basis, params, coeffs), mv))
    } else {
        Ok((state.clone(), stay(alpha, Some(proposed), false)))
    }
}
