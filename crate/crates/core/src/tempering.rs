//! Parallel tempering over a ladder of scaled-sigma targets.
//!
//! Chain `j` targets `D_{L, t_j sigma, c}`. After every `swap_stride` kernel
//! steps on each chain, adjacent pairs `(1,2), (2,3), ...` are offered a state
//! swap in that order. Only the `t = 1` chain is reported.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{ChainStats, Kernel, KernelKind};
use crate::error::{LatticeError, Result};
use crate::lattice::{GaussianParams, LatticeBasis};
use crate::univariate::{ChainState, ScanPolicy, SiteAlphabet};

#[derive(Debug, Clone, PartialEq)]
pub struct TemperLadder {
    temps: Vec<f64>,
    swap_stride: u64,
}

impl TemperLadder {
    /// Strictly increasing temperatures starting at exactly 1.
    pub fn new(temps: Vec<f64>, swap_stride: u64) -> Result<Self> {
        let ladder = Self::non_strict(temps, swap_stride)?;
        if ladder.temps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LatticeError::InvalidParameter(format!(
                "temperatures must be strictly increasing: {:?}",
                ladder.temps
            )));
        }
        Ok(ladder)
    }

    /// Like [`TemperLadder::new`] but allows repeated temperatures.
    pub fn non_strict(temps: Vec<f64>, swap_stride: u64) -> Result<Self> {
        if temps.first() != Some(&1.0) {
            return Err(LatticeError::InvalidParameter("the first temperature must be 1".into()));
        }
        if temps.windows(2).any(|w| w[1] < w[0]) || temps.iter().any(|t| !t.is_finite()) {
            return Err(LatticeError::InvalidParameter(format!(
                "bad temperature ladder {temps:?}"
            )));
        }
        if swap_stride == 0 {
            return Err(LatticeError::InvalidParameter("swap stride must be at least 1".into()));
        }
        Ok(Self { temps, swap_stride })
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn swap_stride(&self) -> u64 {
        self.swap_stride
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }
}

/// Seeds for each chain plus a separate stream for swap decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct PtSeeds {
    pub chains: Vec<u64>,
    pub swap: u64,
}

/// `ln alpha_swap` for exchanging the states of chains at `t_j` and `t_j1`,
/// clamped at 0. Only unnormalized exponents enter; the normalizers cancel.
pub fn swap_log_ratio(
    state_j: &ChainState,
    state_j1: &ChainState,
    basis: &LatticeBasis,
    params: &GaussianParams,
    t_j: f64,
    t_j1: f64,
) -> Result<f64> {
    let e_j = basis.sq_distance(&state_j.coeffs, params.center())?;
    let e_j1 = basis.sq_distance(&state_j1.coeffs, params.center())?;
    let s2 = params.sigma() * params.sigma();
    let coupling = 1.0 / (2.0 * t_j * t_j * s2) - 1.0 / (2.0 * t_j1 * t_j1 * s2);
    Ok(((e_j - e_j1) * coupling).min(0.0))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SwapStats {
    pub attempts: Vec<u64>,
    pub accepts: Vec<u64>,
}

impl SwapStats {
    pub fn rates(&self) -> Vec<f64> {
        self.attempts
            .iter()
            .zip(&self.accepts)
            .map(|(&a, &k)| if a == 0 { 0.0 } else { k as f64 / a as f64 })
            .collect()
    }
}

/// Running tempering ensemble.
pub struct Tempering<'a> {
    ladder: TemperLadder,
    base: GaussianParams,
    kernels: Vec<Kernel<'a>>,
    states: Vec<ChainState>,
    rngs: Vec<ChaCha8Rng>,
    swap_rng: ChaCha8Rng,
    swaps_enabled: bool,
    steps: u64,
    chain_stats: Vec<ChainStats>,
    swap_stats: SwapStats,
}

impl<'a> Tempering<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ladder: TemperLadder,
        kind: KernelKind,
        basis: &'a LatticeBasis,
        params: &GaussianParams,
        alphabet: &SiteAlphabet,
        retry_cap: u32,
        x0: &[i64],
        seeds: &PtSeeds,
    ) -> Result<Self> {
        let m = ladder.len();
        if seeds.chains.len() != m {
            return Err(LatticeError::DimensionMismatch {
                expected: m,
                got: seeds.chains.len(),
            });
        }
        let n = basis.dim();
        let mut kernels = Vec::with_capacity(m);
        let mut states = Vec::with_capacity(m);
        for &t in ladder.temps() {
            let p = params.with_scaled_sigma(t)?;
            let k = Kernel::new(kind, basis, p, ScanPolicy::uniform(n), alphabet.clone(), retry_cap)?;
            states.push(k.initial_state(x0.to_vec())?);
            kernels.push(k);
        }
        Ok(Self {
            base: params.clone(),
            kernels,
            states,
            rngs: seeds.chains.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect(),
            swap_rng: ChaCha8Rng::seed_from_u64(seeds.swap),
            swaps_enabled: true,
            steps: 0,
            chain_stats: (0..m).map(|_| ChainStats::new(n)).collect(),
            swap_stats: SwapStats {
                attempts: vec![0; m.saturating_sub(1)],
                accepts: vec![0; m.saturating_sub(1)],
            },
            ladder,
        })
    }

    pub fn set_swaps_enabled(&mut self, enabled: bool) {
        self.swaps_enabled = enabled;
    }

    pub fn cold(&self) -> &ChainState {
        &self.states[0]
    }

    pub fn states(&self) -> &[ChainState] {
        &self.states
    }

    pub fn swap_stats(&self) -> &SwapStats {
        &self.swap_stats
    }

    pub fn chain_stats(&self) -> &[ChainStats] {
        &self.chain_stats
    }

    /// One kernel step on every chain, followed by a swap round when due.
    pub fn advance(&mut self) -> Result<()> {
        for j in 0..self.kernels.len() {
            let (next, info) = self.kernels[j].step(&self.states[j], &mut self.rngs[j])?;
            self.chain_stats[j].record(&info);
            self.states[j] = next;
        }
        self.steps += 1;
        if self.swaps_enabled && self.steps.is_multiple_of(self.ladder.swap_stride()) {
            self.swap_round()?;
        }
        Ok(())
    }

    fn swap_round(&mut self) -> Result<()> {
        let temps = self.ladder.temps().to_vec();
        for j in 0..temps.len().saturating_sub(1) {
            let basis = self.kernels[j].basis();
            let log_alpha = swap_log_ratio(
                &self.states[j],
                &self.states[j + 1],
                basis,
                &self.base,
                temps[j],
                temps[j + 1],
            )?;
            let u: f64 = self.swap_rng.random();
            self.swap_stats.attempts[j] += 1;
            if u < log_alpha.exp() {
                self.swap_stats.accepts[j] += 1;
                let a = std::mem::take(&mut self.states[j].coeffs);
                let b = std::mem::take(&mut self.states[j + 1].coeffs);
                self.states[j] = ChainState::new(basis, self.kernels[j].params(), b)?;
                self.states[j + 1] = ChainState::new(basis, self.kernels[j + 1].params(), a)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtRun {
    pub cold_samples: Vec<Vec<i64>>,
    pub swap_stats: SwapStats,
    pub chain_stats: Vec<ChainStats>,
}

/// Runs the ensemble for `iterations` rounds and emits the cold chain after
/// burn-in, every `thin` rounds.
#[allow(clippy::too_many_arguments)]
pub fn pt_run(
    ladder: TemperLadder,
    kind: KernelKind,
    basis: &LatticeBasis,
    params: &GaussianParams,
    alphabet: &SiteAlphabet,
    retry_cap: u32,
    x0: &[i64],
    iterations: u64,
    burn_in: u64,
    thin: u64,
    seeds: &PtSeeds,
    swaps_enabled: bool,
) -> Result<PtRun> {
    if iterations < burn_in {
        return Err(LatticeError::InvalidParameter(format!(
            "iterations ({iterations}) must be at least burn_in ({burn_in})"
        )));
    }
    if thin == 0 {
        return Err(LatticeError::InvalidParameter("thin must be at least 1".into()));
    }
    let mut pt = Tempering::new(ladder, kind, basis, params, alphabet, retry_cap, x0, seeds)?;
    pt.set_swaps_enabled(swaps_enabled);
    let mut cold_samples = Vec::new();
    for t in 1..=iterations {
        pt.advance()?;
        if t > burn_in && (t - burn_in).is_multiple_of(thin) {
            cold_samples.push(pt.cold().coeffs.clone());
        }
    }
    Ok(PtRun {
        cold_samples,
        swap_stats: pt.swap_stats.clone(),
        chain_stats: pt.chain_stats.clone(),
    })
}
