//! Klein's randomized nearest-plane sampler and the exact probability it
//! assigns to each lattice point.

use rand::Rng;

use crate::error::{LatticeError, Result};
use crate::lattice::{gaussian_window, GaussianParams, IntegerPmf, LatticeBasis, DEFAULT_TAIL_FACTOR};
use crate::univariate::SiteAlphabet;

#[derive(Debug, Clone, PartialEq)]
pub struct KleinSample {
    pub coeffs: Vec<i64>,
    /// `ln P_Klein(coeffs)`.
    pub log_prob: f64,
}

/// Level `i` distribution given the already fixed coordinates `x[i+1..]`.
fn level_pmf(
    basis: &LatticeBasis,
    rotated: &[f64],
    sigma: f64,
    x: &[i64],
    i: usize,
    alphabet: &SiteAlphabet,
) -> Result<IntegerPmf> {
    let n = basis.dim();
    let r = basis.r();
    let mut acc = rotated[i];
    for j in (i + 1)..n {
        acc -= r[(i, j)] * x[j] as f64;
    }
    let rii = r[(i, i)];
    let center = acc / rii;
    let dev = sigma / rii;
    alphabet.site_pmf(i, center, dev)
}

/// Draws `x_n, ..., x_1` in turn from the 1-D integer Gaussians with
/// deviation `sigma / r_ii` and center `(c'_i - sum_{j>i} r_ij x_j) / r_ii`.
pub fn klein_sample<R: Rng + ?Sized>(
    basis: &LatticeBasis,
    params: &GaussianParams,
    rng: &mut R,
) -> Result<KleinSample> {
    klein_sample_in(
        basis,
        params,
        &SiteAlphabet::integers(basis.dim(), DEFAULT_TAIL_FACTOR),
        rng,
    )
}

/// Klein's sampler with every level restricted to its alphabet set.
pub fn klein_sample_in<R: Rng + ?Sized>(
    basis: &LatticeBasis,
    params: &GaussianParams,
    alphabet: &SiteAlphabet,
    rng: &mut R,
) -> Result<KleinSample> {
    let n = basis.dim();
    params.check_dim(n)?;
    alphabet.check_dim(n)?;
    let rotated = basis.rotate(params.center());
    let mut x = vec![0i64; n];
    let mut log_prob = 0.0;
    for i in (0..n).rev() {
        let pmf = level_pmf(basis, &rotated, params.sigma(), &x, i, alphabet)?;
        x[i] = pmf.sample(rng);
        log_prob += pmf.prob(x[i]).ln();
    }
    Ok(KleinSample { coeffs: x, log_prob })
}

/// `P_Klein(x)`: the product of the level probabilities along the backward
/// pass. Zero when some coordinate falls outside its level's support.
pub fn klein_pmf(basis: &LatticeBasis, params: &GaussianParams, x: &[i64]) -> Result<f64> {
    klein_log_pmf_in(
        basis,
        params,
        &SiteAlphabet::integers(basis.dim(), DEFAULT_TAIL_FACTOR),
        x,
    )
    .map(f64::exp)
}

pub fn klein_log_pmf_in(
    basis: &LatticeBasis,
    params: &GaussianParams,
    alphabet: &SiteAlphabet,
    x: &[i64],
) -> Result<f64> {
    let n = basis.dim();
    if x.len() != n {
        return Err(LatticeError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    params.check_dim(n)?;
    alphabet.check_dim(n)?;
    let rotated = basis.rotate(params.center());
    let mut log_prob = 0.0;
    for i in (0..n).rev() {
        let p = level_pmf(basis, &rotated, params.sigma(), x, i, alphabet)?.prob(x[i]);
        if p == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_prob += p.ln();
    }
    Ok(log_prob)
}

/// Every point reachable by the truncated backward pass, with its probability.
/// Exponential in `n`; meant for small exhaustive checks.
pub fn klein_support_tree(basis: &LatticeBasis, params: &GaussianParams) -> Result<Vec<(Vec<i64>, f64)>> {
    let n = basis.dim();
    params.check_dim(n)?;
    let rotated = basis.rotate(params.center());
    let mut out = Vec::new();
    let mut x = vec![0i64; n];
    expand(basis, &rotated, params.sigma(), n, &mut x, 0.0, &mut out);
    Ok(out)
}

fn expand(
    basis: &LatticeBasis,
    rotated: &[f64],
    sigma: f64,
    level: usize,
    x: &mut Vec<i64>,
    log_prob: f64,
    out: &mut Vec<(Vec<i64>, f64)>,
) {
    if level == 0 {
        out.push((x.clone(), log_prob.exp()));
        return;
    }
    let i = level - 1;
    let r = basis.r();
    let mut acc = rotated[i];
    for j in (i + 1)..basis.dim() {
        acc -= r[(i, j)] * x[j] as f64;
    }
    let center = acc / r[(i, i)];
    let dev = sigma / r[(i, i)];
    let (lo, hi) = gaussian_window(center, dev, DEFAULT_TAIL_FACTOR);
    let pmf = IntegerPmf::gaussian((lo..=hi).collect(), center, dev).expect("non-empty window");
    for (&v, &p) in pmf.values().iter().zip(pmf.probs()) {
        x[i] = v;
        expand(basis, rotated, sigma, i, x, log_prob + p.ln(), out);
    }
    x[i] = 0;
}
