//! Gibbs-Klein blocked kernel.
//!
//! Each step draws a uniformly random permutation `E`, moves to the permuted
//! coordinates `z = E^{-1} x` of the basis `B E`, and resamples the first `m`
//! coordinates jointly with a Klein pass conditioned on the rest. The Klein
//! block law is `rho(z_block) / prod_i rho_sigma(r_ii Z + xi_i)`; accepting it
//! with probability `prod_i rho_sigma(r_ii Z + xi_i) / prod_i rho_sigma(r_ii Z)`
//! leaves exactly the conditional lattice Gaussian of the block.
//!
//! With a finite alphabet the level normalizers are the restricted sums over
//! that level's candidates, and the ratio is taken against the largest
//! numerator reachable from the fixed coordinates. Any such bound leaves the
//! accepted law equal to the conditional restricted to the alphabet.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{LatticeError, Result};
use crate::lattice::{check_permutation, log_theta_sum, GaussianParams, LatticeBasis, DEFAULT_THETA_TOL};
use crate::univariate::{ChainState, SiteAlphabet, SiteSet};

pub const DEFAULT_RETRY_CAP: u32 = 100;

/// Largest dimension for which per-permutation factorizations are cached.
const CACHE_MAX_DIM: usize = 6;

/// A permutation with the factorization of the permuted basis.
#[derive(Debug, Clone)]
pub struct BlockPlan {
    permutation: Vec<usize>,
    block_size: usize,
    permuted_basis: LatticeBasis,
    rotated_center: Vec<f64>,
}

impl BlockPlan {
    pub fn new(
        basis: &LatticeBasis,
        params: &GaussianParams,
        permutation: Vec<usize>,
        block_size: usize,
    ) -> Result<Self> {
        let n = basis.dim();
        params.check_dim(n)?;
        check_permutation(&permutation, n)?;
        if block_size == 0 || block_size > n {
            return Err(LatticeError::InvalidParameter(format!(
                "block size {block_size} outside 1..={n}"
            )));
        }
        let permuted_basis = basis.permuted(&permutation)?;
        let rotated_center = permuted_basis.rotate(params.center());
        Ok(Self {
            permutation,
            block_size,
            permuted_basis,
            rotated_center,
        })
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn permuted_basis(&self) -> &LatticeBasis {
        &self.permuted_basis
    }

    pub fn rotated_center(&self) -> &[f64] {
        &self.rotated_center
    }

    /// Original coordinates that form the block.
    pub fn block_sites(&self) -> &[usize] {
        &self.permutation[..self.block_size]
    }

    /// `z = E^{-1} x`.
    pub fn to_permuted(&self, x: &[i64]) -> Vec<i64> {
        self.permutation.iter().map(|&p| x[p]).collect()
    }

    /// `x = E z`.
    pub fn from_permuted(&self, z: &[i64]) -> Vec<i64> {
        let mut x = vec![0; z.len()];
        for (j, &p) in self.permutation.iter().enumerate() {
            x[p] = z[j];
        }
        x
    }

    /// `rbar`, the leading `m x m` block of `R`.
    pub fn r_segment(&self) -> DMatrix<f64> {
        let m = self.block_size;
        self.permuted_basis.r().view((0, 0), (m, m)).into_owned()
    }

    /// `cbar_i = c'_i - sum_{j' >= m} r_{i,j'} z_{j'}` for the block levels.
    fn reduced_center(&self, z_fixed: &[i64]) -> Vec<f64> {
        let m = self.block_size;
        let n = self.permutation.len();
        let r = self.permuted_basis.r();
        (0..m)
            .map(|i| {
                let mut acc = self.rotated_center[i];
                for j in m..n {
                    acc -= r[(i, j)] * z_fixed[j - m] as f64;
                }
                acc
            })
            .collect()
    }

    /// Alphabet of permuted level `i`.
    fn level_set<'a>(&self, alphabet: &'a SiteAlphabet, i: usize) -> &'a SiteSet {
        alphabet.site(self.permutation[i])
    }
}

/// A block candidate that passed the rejection test.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDraw {
    pub z_block: Vec<i64>,
    pub xi_offsets: Vec<f64>,
    pub accept_prob: f64,
    /// Rejected candidates before this one.
    pub retries: u32,
    /// Drawn from the enumerated conditional after the retry cap was hit.
    /// `xi_offsets` is empty in that case.
    pub fallback: bool,
}

/// Klein pass over the block levels `m-1, ..., 0`.
struct Candidate {
    z_block: Vec<i64>,
    xi: Vec<f64>,
    log_numerator: f64,
}

fn klein_block_pass<R: Rng + ?Sized>(
    plan: &BlockPlan,
    sigma: f64,
    cbar: &[f64],
    alphabet: &SiteAlphabet,
    rng: &mut R,
) -> Result<Candidate> {
    let m = plan.block_size;
    let r = plan.permuted_basis.r();
    let mut z = vec![0i64; m];
    let mut xi = vec![0.0; m];
    let mut log_numerator = 0.0;
    for i in (0..m).rev() {
        let mut acc = cbar[i];
        for j in (i + 1)..m {
            acc -= r[(i, j)] * z[j] as f64;
        }
        let rii = r[(i, i)];
        xi[i] = -acc;
        let pmf = alphabet.site_pmf(plan.permutation[i], acc / rii, sigma / rii)?;
        z[i] = pmf.sample(rng);
        log_numerator += match plan.level_set(alphabet, i) {
            SiteSet::Integers => log_theta_sum(sigma, rii, xi[i], DEFAULT_THETA_TOL),
            _ => pmf.log_mass(),
        };
    }
    Ok(Candidate {
        z_block: z,
        xi,
        log_numerator,
    })
}

fn log_denominator(plan: &BlockPlan, sigma: f64) -> f64 {
    let r = plan.permuted_basis.r();
    (0..plan.block_size)
        .map(|i| log_theta_sum(sigma, r[(i, i)], 0.0, DEFAULT_THETA_TOL))
        .sum()
}

/// Largest number of upper-level paths searched for the finite-alphabet bound.
const BOUND_TREE_CAP: usize = 4096;

/// Upper bound on the log numerator over all candidates given `cbar`.
///
/// Over `Z` this is `sum_i log theta(sigma, r_ii, 0)`. When every block level
/// has a finite alphabet, the restricted masses can sit far below the
/// centered theta sums, so the bound is instead the exact maximum of the
/// numerator over the candidate tree (level 0 needs no branching).
fn log_bound(plan: &BlockPlan, sigma: f64, cbar: &[f64], alphabet: &SiteAlphabet) -> Result<f64> {
    let m = plan.block_size;
    let mut paths = 1usize;
    for i in 1..m {
        let size = match plan.level_set(alphabet, i) {
            SiteSet::Integers => return Ok(log_denominator(plan, sigma)),
            SiteSet::Range(lo, hi) => (hi - lo + 1) as usize,
            SiteSet::List(v) => v.len(),
        };
        paths = paths.saturating_mul(size);
    }
    if matches!(plan.level_set(alphabet, 0), SiteSet::Integers) || paths > BOUND_TREE_CAP {
        return Ok(log_denominator(plan, sigma));
    }
    let mut z = vec![0i64; m];
    max_numerator(plan, sigma, cbar, alphabet, m, &mut z)
}

fn max_numerator(
    plan: &BlockPlan,
    sigma: f64,
    cbar: &[f64],
    alphabet: &SiteAlphabet,
    level: usize,
    z: &mut Vec<i64>,
) -> Result<f64> {
    let i = level - 1;
    let r = plan.permuted_basis.r();
    let mut acc = cbar[i];
    for j in (i + 1)..plan.block_size {
        acc -= r[(i, j)] * z[j] as f64;
    }
    let rii = r[(i, i)];
    let pmf = alphabet.site_pmf(plan.permutation[i], acc / rii, sigma / rii)?;
    if i == 0 {
        return Ok(pmf.log_mass());
    }
    let mut best = f64::NEG_INFINITY;
    for &v in pmf.values() {
        z[i] = v;
        best = best.max(max_numerator(plan, sigma, cbar, alphabet, i, z)?);
    }
    z[i] = 0;
    Ok(best + pmf.log_mass())
}

/// `prod_i rho_sigma(r_ii Z + xi_i) / prod_i rho_sigma(r_ii Z)`, clamped to 1.
pub fn block_accept_ratio(r_segment: &DMatrix<f64>, xi_offsets: &[f64], sigma: f64, rel_tol: f64) -> f64 {
    let m = xi_offsets.len();
    debug_assert_eq!(r_segment.nrows(), m);
    let mut log_ratio = 0.0;
    for (i, &xi) in xi_offsets.iter().enumerate() {
        let rii = r_segment[(i, i)];
        log_ratio += log_theta_sum(sigma, rii, xi, rel_tol) - log_theta_sum(sigma, rii, 0.0, rel_tol);
    }
    log_ratio.min(0.0).exp()
}

/// Runs the Klein pass with rejection until a block is accepted. Returns the
/// accepted block in permuted coordinates.
pub fn sample_block<R: Rng + ?Sized>(
    plan: &BlockPlan,
    params: &GaussianParams,
    z_fixed: &[i64],
    alphabet: &SiteAlphabet,
    retry_cap: u32,
    rng: &mut R,
) -> Result<BlockDraw> {
    let n = plan.permutation.len();
    alphabet.check_dim(n)?;
    if z_fixed.len() != n - plan.block_size {
        return Err(LatticeError::DimensionMismatch {
            expected: n - plan.block_size,
            got: z_fixed.len(),
        });
    }
    if retry_cap == 0 {
        return Err(LatticeError::InvalidParameter("retry cap must be at least 1".into()));
    }
    let sigma = params.sigma();
    let cbar = plan.reduced_center(z_fixed);
    let log_den = log_bound(plan, sigma, &cbar, alphabet)?;
    for retries in 0..retry_cap {
        let cand = klein_block_pass(plan, sigma, &cbar, alphabet, rng)?;
        let accept_prob = (cand.log_numerator - log_den).min(0.0).exp();
        let u: f64 = rng.random();
        if u < accept_prob {
            return Ok(BlockDraw {
                z_block: cand.z_block,
                xi_offsets: cand.xi,
                accept_prob,
                retries,
                fallback: false,
            });
        }
    }
    Err(LatticeError::RetryCapExceeded(retry_cap))
}

fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

fn apply_block(plan: &BlockPlan, state: &ChainState, draw: &BlockDraw) -> Vec<i64> {
    let mut z = plan.to_permuted(&state.coeffs);
    z[..plan.block_size].copy_from_slice(&draw.z_block);
    plan.from_permuted(&z)
}

/// One Gibbs-Klein step over the whole integer lattice.
pub fn gk_step<R: Rng + ?Sized>(
    state: &ChainState,
    basis: &LatticeBasis,
    params: &GaussianParams,
    block_size: usize,
    rng: &mut R,
    retry_cap: u32,
) -> Result<(ChainState, BlockDraw)> {
    let alphabet = SiteAlphabet::integers(basis.dim(), crate::lattice::DEFAULT_TAIL_FACTOR);
    GibbsKlein::new(basis, params.clone(), block_size, alphabet, retry_cap)?.step(state, rng)
}

/// Gibbs-Klein kernel with a per-permutation factorization cache.
#[derive(Debug)]
pub struct GibbsKlein<'a> {
    basis: &'a LatticeBasis,
    params: GaussianParams,
    block_size: usize,
    alphabet: SiteAlphabet,
    retry_cap: u32,
    exact_fallback: bool,
    cache: RwLock<HashMap<Vec<usize>, Arc<BlockPlan>>>,
}

impl<'a> GibbsKlein<'a> {
    pub fn new(
        basis: &'a LatticeBasis,
        params: GaussianParams,
        block_size: usize,
        alphabet: SiteAlphabet,
        retry_cap: u32,
    ) -> Result<Self> {
        let n = basis.dim();
        params.check_dim(n)?;
        alphabet.check_dim(n)?;
        if block_size == 0 || block_size > n {
            return Err(LatticeError::InvalidParameter(format!(
                "block size {block_size} outside 1..={n}"
            )));
        }
        if retry_cap == 0 {
            return Err(LatticeError::InvalidParameter("retry cap must be at least 1".into()));
        }
        Ok(Self {
            basis,
            params,
            block_size,
            alphabet,
            retry_cap,
            exact_fallback: false,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// After `retry_cap` rejections, draw the block from its enumerated
    /// conditional instead of failing. Needs finite range alphabets on the
    /// block with at most 4096 joint values; other blocks still fail.
    /// The step law is unchanged, since every accepted candidate already
    /// follows that conditional.
    pub fn with_exact_fallback(mut self, enabled: bool) -> Self {
        self.exact_fallback = enabled;
        self
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }

    pub fn alphabet(&self) -> &SiteAlphabet {
        &self.alphabet
    }

    pub fn plan(&self, permutation: Vec<usize>) -> Result<Arc<BlockPlan>> {
        if self.basis.dim() > CACHE_MAX_DIM {
            return Ok(Arc::new(BlockPlan::new(
                self.basis,
                &self.params,
                permutation,
                self.block_size,
            )?));
        }
        if let Some(plan) = self.cache.read().expect("cache lock").get(&permutation) {
            return Ok(Arc::clone(plan));
        }
        let plan = Arc::new(BlockPlan::new(
            self.basis,
            &self.params,
            permutation.clone(),
            self.block_size,
        )?);
        self.cache
            .write()
            .expect("cache lock")
            .entry(permutation)
            .or_insert_with(|| Arc::clone(&plan));
        Ok(plan)
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Result<(ChainState, BlockDraw)> {
        let n = self.basis.dim();
        if state.dim() != n {
            return Err(LatticeError::DimensionMismatch {
                expected: n,
                got: state.dim(),
            });
        }
        let plan = self.plan(random_permutation(n, rng))?;
        let z = plan.to_permuted(&state.coeffs);
        let fixed = &z[self.block_size..];
        let draw = match sample_block(&plan, &self.params, fixed, &self.alphabet, self.retry_cap, rng) {
            Err(LatticeError::RetryCapExceeded(cap)) if self.exact_fallback => self
                .enumerated_draw(&plan, fixed, rng)?
                .ok_or(LatticeError::RetryCapExceeded(cap))?,
            other => other?,
        };
        let coeffs = apply_block(&plan, state, &draw);
        Ok((ChainState::with_coeffs(self.basis, &self.params, coeffs), draw))
    }
}

impl GibbsKlein<'_> {
    fn enumerated_draw<R: Rng + ?Sized>(
        &self,
        plan: &BlockPlan,
        fixed: &[i64],
        rng: &mut R,
    ) -> Result<Option<BlockDraw>> {
        let mut bounds = Vec::with_capacity(self.block_size);
        let mut count = 1usize;
        for &site in plan.block_sites() {
            let SiteSet::Range(lo, hi) = *self.alphabet.site(site) else {
                return Ok(None);
            };
            count = count.saturating_mul((hi - lo + 1) as usize);
            bounds.push((lo, hi));
        }
        if count > BOUND_TREE_CAP {
            return Ok(None);
        }
        let table = block_conditional_table(plan, &self.params, fixed, &bounds)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = table.len() - 1;
        for (k, (_, p)) in table.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        Ok(Some(BlockDraw {
            z_block: table[pick].0.clone(),
            xi_offsets: Vec::new(),
            accept_prob: 1.0,
            retries: self.retry_cap,
            fallback: true,
        }))
    }
}

/// Enumerates `box_ranges[0] x ... x box_ranges[m-1]` in lexicographic order.
pub(crate) fn enumerate_box(ranges: &[(i64, i64)]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(ranges.len())];
    for &(lo, hi) in ranges {
        let mut next = Vec::with_capacity(out.len() * (hi - lo + 1).max(0) as usize);
        for prefix in &out {
            for v in lo..=hi {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Exact conditional `D(z_block | z_fixed)` normalized over `block_box`.
pub fn block_conditional_table(
    plan: &BlockPlan,
    params: &GaussianParams,
    z_fixed: &[i64],
    block_box: &[(i64, i64)],
) -> Result<Vec<(Vec<i64>, f64)>> {
    let m = plan.block_size;
    let n = plan.permutation.len();
    if z_fixed.len() != n - m {
        return Err(LatticeError::DimensionMismatch {
            expected: n - m,
            got: z_fixed.len(),
        });
    }
    if block_box.len() != m {
        return Err(LatticeError::DimensionMismatch {
            expected: m,
            got: block_box.len(),
        });
    }
    let basis = &plan.permuted_basis;
    let inv = 1.0 / (2.0 * params.sigma() * params.sigma());
    let blocks = enumerate_box(block_box);
    let mut logw = Vec::with_capacity(blocks.len());
    for blk in &blocks {
        let mut z = blk.clone();
        z.extend_from_slice(z_fixed);
        logw.push(-basis.sq_distance(&z, params.center())? * inv);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(blocks.into_iter().zip(w).map(|(b, wi)| (b, wi / total)).collect())
}

/// Probability of `z_block` under [`block_conditional_table`].
pub fn block_conditional_pmf(
    plan: &BlockPlan,
    params: &GaussianParams,
    z_fixed: &[i64],
    z_block: &[i64],
    block_box: &[(i64, i64)],
) -> Result<f64> {
    if z_block.len() != plan.block_size {
        return Err(LatticeError::DimensionMismatch {
            expected: plan.block_size,
            got: z_block.len(),
        });
    }
    let table = block_conditional_table(plan, params, z_fixed, block_box)?;
    Ok(table.into_iter().find(|(b, _)| b == z_block).map_or(0.0, |(_, p)| p))
}

/// Analytic law of an accepted block: the Klein block probability times the
/// acceptance probability, renormalized over every reachable candidate.
pub fn accepted_block_pmf(
    plan: &BlockPlan,
    params: &GaussianParams,
    z_fixed: &[i64],
    alphabet: &SiteAlphabet,
) -> Result<Vec<(Vec<i64>, f64)>> {
    let n = plan.permutation.len();
    alphabet.check_dim(n)?;
    if z_fixed.len() != n - plan.block_size {
        return Err(LatticeError::DimensionMismatch {
            expected: n - plan.block_size,
            got: z_fixed.len(),
        });
    }
    let sigma = params.sigma();
    let cbar = plan.reduced_center(z_fixed);
    let log_den = log_bound(plan, sigma, &cbar, alphabet)?;
    let mut out = Vec::new();
    let mut z = vec![0i64; plan.block_size];
    walk_block_tree(
        plan,
        sigma,
        &cbar,
        alphabet,
        plan.block_size,
        &mut z,
        0.0,
        0.0,
        log_den,
        &mut out,
    )?;
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut out {
        *w /= total;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk_block_tree(
    plan: &BlockPlan,
    sigma: f64,
    cbar: &[f64],
    alphabet: &SiteAlphabet,
    level: usize,
    z: &mut Vec<i64>,
    log_klein: f64,
    log_num: f64,
    log_den: f64,
    out: &mut Vec<(Vec<i64>, f64)>,
) -> Result<()> {
    if level == 0 {
        let accept = (log_num - log_den).min(0.0);
        out.push((z.clone(), (log_klein + accept).exp()));
        return Ok(());
    }
    let i = level - 1;
    let m = plan.block_size;
    let r = plan.permuted_basis.r();
    let mut acc = cbar[i];
    for j in (i + 1)..m {
        acc -= r[(i, j)] * z[j] as f64;
    }
    let rii = r[(i, i)];
    let pmf = alphabet.site_pmf(plan.permutation[i], acc / rii, sigma / rii)?;
    let num = match plan.level_set(alphabet, i) {
        SiteSet::Integers => log_theta_sum(sigma, rii, -acc, DEFAULT_THETA_TOL),
        _ => pmf.log_mass(),
    };
    for (&v, &p) in pmf.values().iter().zip(pmf.probs()) {
        z[i] = v;
        walk_block_tree(
            plan,
            sigma,
            cbar,
            alphabet,
            i,
            z,
            log_klein + p.ln(),
            log_num + num,
            log_den,
            out,
        )?;
    }
    z[i] = 0;
    Ok(())
}

/// Advisory smoothing check `sigma >= factor * sqrt(max(ln m, 1)) * max r_ii`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub threshold: f64,
    /// `sigma / threshold`.
    pub margin: f64,
}

pub fn validity_check(r_diagonal: &[f64], sigma: f64, block_size: usize, factor: f64) -> Result<ValidityReport> {
    if block_size == 0 || block_size > r_diagonal.len() {
        return Err(LatticeError::InvalidParameter(format!(
            "block size {block_size} outside 1..={}",
            r_diagonal.len()
        )));
    }
    let max_r = r_diagonal[..block_size].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let threshold = factor * (block_size as f64).ln().max(1.0).sqrt() * max_r;
    Ok(ValidityReport {
        valid: sigma >= threshold,
        threshold,
        margin: sigma / threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::theta_sum;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_basis() -> LatticeBasis {
        LatticeBasis::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.1]]).unwrap()
    }

    fn brute_theta(sigma: f64, r: f64, xi: f64) -> f64 {
        (-40..=40)
            .map(|k: i64| {
                let d = r * k as f64 + xi;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .sum()
    }

    #[test]
    fn centered_offsets_accept_always() {
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.3, 0.0, 0.8, 0.4, 0.0, 0.0, 1.3]);
        assert_eq!(block_accept_ratio(&r, &[0.0, 0.0, 0.0], 0.7, DEFAULT_THETA_TOL), 1.0);
        // integer multiples of r_ii are equivalent to zero offsets
        let ratio = block_accept_ratio(&r, &[2.0, -0.8, 1.3], 0.7, DEFAULT_THETA_TOL);
        assert!((ratio - 1.0).abs() < 1e-14);
    }

    #[test]
    fn worst_case_offsets_match_brute_force() {
        let diag = [1.0, 0.8, 1.3];
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.3, 0.0, 0.8, 0.4, 0.0, 0.0, 1.3]);
        let sigma = 0.6;
        let xi: Vec<f64> = diag.iter().map(|d| d / 2.0).collect();
        let oracle: f64 = diag
            .iter()
            .zip(&xi)
            .map(|(&d, &x)| brute_theta(sigma, d, x) / brute_theta(sigma, d, 0.0))
            .product();
        let got = block_accept_ratio(&r, &xi, sigma, DEFAULT_THETA_TOL);
        assert!((got - oracle).abs() < 1e-13, "{got} vs {oracle}");
        assert!(got < 1.0);
    }

    #[test]
    fn smooth_regime_ratio_is_near_one() {
        let diag = [1.0, 0.9, 1.2, 0.7];
        let mut r = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            r[(i, i)] = diag[i];
        }
        let sigma = (4.0_f64).ln().sqrt() * 1.2;
        let xi: Vec<f64> = diag.iter().map(|d| d / 2.0).collect();
        let ratio = block_accept_ratio(&r, &xi, sigma, DEFAULT_THETA_TOL);
        assert!(ratio > 0.9, "ratio = {ratio}");
        assert!(ratio <= 1.0);
        // the brute-force oracle agrees
        let oracle: f64 = diag
            .iter()
            .map(|&d| brute_theta(sigma, d, d / 2.0) / brute_theta(sigma, d, 0.0))
            .product();
        assert!((ratio - oracle).abs() < 1e-13);
        assert!(theta_sum(sigma, 1.0, 0.0, 1e-15) > 0.0);
    }

    #[test]
    fn orthogonal_full_block_accepts_first_time() {
        let basis = LatticeBasis::from_rows(&[vec![1.3, 0.0], vec![0.0, 0.7]]).unwrap();
        let params = GaussianParams::centered(0.4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = ChainState::new(&basis, &params, vec![1, -1]).unwrap();
        for _ in 0..200 {
            let (next, draw) = gk_step(&state, &basis, &params, 2, &mut rng, 1).unwrap();
            assert_eq!(draw.accept_prob, 1.0);
            assert_eq!(draw.retries, 0);
            state = next;
        }
    }

    #[test]
    fn single_block_conditional_matches_univariate() {
        let basis = example_basis();
        let params = GaussianParams::new(1.0, vec![0.2, -0.4]).unwrap();
        let plan = BlockPlan::new(&basis, &params, vec![1, 0], 1).unwrap();
        let x = [2i64, -1];
        let z = plan.to_permuted(&x);
        let table = block_conditional_table(&plan, &params, &z[1..], &[(-20, 20)]).unwrap();
        let state = ChainState::new(&basis, &params, x.to_vec()).unwrap();
        let uni = crate::univariate::conditional_pmf(
            &basis,
            &params,
            &state,
            1,
            &SiteAlphabet::uniform_range(2, -20, 20).unwrap(),
        )
        .unwrap();
        for (blk, p) in &table {
            assert!((p - uni.prob(blk[0])).abs() < 1e-12);
        }
        let total: f64 = table.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_block_conditional_is_the_target() {
        let basis = example_basis();
        let params = GaussianParams::centered(1.0, 2).unwrap();
        let plan = BlockPlan::new(&basis, &params, vec![0, 1], 2).unwrap();
        let table = block_conditional_table(&plan, &params, &[], &[(-3, 3), (-3, 3)]).unwrap();
        let weights: Vec<f64> = table
            .iter()
            .map(|(z, _)| crate::lattice::density_exponent(&basis, &params, z).unwrap().exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for ((_, p), w) in table.iter().zip(&weights) {
            assert!((p - w / total).abs() < 1e-14);
        }
        assert!(
            (block_conditional_pmf(&plan, &params, &[], &[0, 0], &[(-3, 3), (-3, 3)]).unwrap()
                - table.iter().find(|(z, _)| z == &vec![0, 0]).unwrap().1)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn retry_cap_is_enforced() {
        let basis = example_basis();
        // tiny sigma: the half-offset levels are rejected almost surely
        let params = GaussianParams::new(0.05, vec![0.5, 0.55]).unwrap();
        let plan = BlockPlan::new(&basis, &params, vec![0, 1], 2).unwrap();
        let alphabet = SiteAlphabet::integers(2, 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_block(&plan, &params, &[], &alphabet, 5, &mut rng).unwrap_err();
        assert_eq!(err, LatticeError::RetryCapExceeded(5));
    }

    #[test]
    fn validity_examples() {
        let single = validity_check(&[0.8], 1.0, 1, 1.0).unwrap();
        assert!((single.threshold - 0.8).abs() < 1e-15);
        assert!(single.valid);
        let r = [1.0, 0.5, 2.0, 1.5];
        let rep = validity_check(&r, 20.0, 4, 1.0).unwrap();
        assert!(rep.valid);
        assert!((rep.margin - 10.0 / 4.0_f64.ln().sqrt()).abs() < 1e-12);
        assert!(!validity_check(&r, 0.02, 4, 1.0).unwrap().valid);
    }

    #[test]
    fn permutation_roundtrip() {
        let basis = LatticeBasis::from_rows(&[vec![1.0, 0.2, 0.1], vec![0.0, 1.0, 0.3], vec![0.4, 0.0, 1.0]]).unwrap();
        let params = GaussianParams::centered(1.0, 3).unwrap();
        let plan = BlockPlan::new(&basis, &params, vec![2, 0, 1], 2).unwrap();
        let x = vec![5, -3, 7];
        assert_eq!(plan.to_permuted(&x), vec![7, 5, -3]);
        assert_eq!(plan.from_permuted(&plan.to_permuted(&x)), x);
        assert_eq!(plan.block_sites(), &[2, 0]);
        // B x = (B E) z
        let z = plan.to_permuted(&x);
        let a = basis.point(&x);
        let b = plan.permuted_basis().point(&z);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(BlockPlan::new(&basis, &params, vec![0, 0, 1], 1).is_err());
    }
}
