//! Sampler kernels behind one interface, and the burn-in/thinning driver.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::blocked::{GibbsKlein, DEFAULT_RETRY_CAP};
use crate::error::{LatticeError, Result};
use crate::lattice::{GaussianParams, LatticeBasis};
use crate::univariate::{gibbs_step_at, mwg_step, ChainState, ScanPolicy, SiteAlphabet};

/// Which transition rule a chain uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Gibbs,
    Mwg,
    Gk { m: usize },
}

impl KernelKind {
    pub fn label(&self) -> String {
        match self {
            KernelKind::Gibbs => "gibbs".into(),
            KernelKind::Mwg => "mwg".into(),
            KernelKind::Gk { m } => format!("gk{m}"),
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// What happened during one kernel step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// Updated site for single-site kernels.
    pub site: Option<usize>,
    pub accepted: bool,
    pub degenerate: bool,
    pub retries: u32,
    /// The block came from the enumerated conditional after the retry cap.
    pub fallback: bool,
}

enum Inner<'a> {
    Gibbs,
    Mwg,
    Gk(GibbsKlein<'a>),
}

/// A ready-to-step kernel bound to a basis and target.
pub struct Kernel<'a> {
    kind: KernelKind,
    basis: &'a LatticeBasis,
    params: GaussianParams,
    scan: ScanPolicy,
    alphabet: SiteAlphabet,
    inner: Inner<'a>,
}

impl<'a> Kernel<'a> {
    pub fn new(
        kind: KernelKind,
        basis: &'a LatticeBasis,
        params: GaussianParams,
        scan: ScanPolicy,
        alphabet: SiteAlphabet,
        retry_cap: u32,
    ) -> Result<Self> {
        let n = basis.dim();
        params.check_dim(n)?;
        alphabet.check_dim(n)?;
        if scan.dim() != n {
            return Err(LatticeError::DimensionMismatch {
                expected: n,
                got: scan.dim(),
            });
        }
        let inner = match kind {
            KernelKind::Gibbs => Inner::Gibbs,
            KernelKind::Mwg => Inner::Mwg,
            KernelKind::Gk { m } => Inner::Gk(GibbsKlein::new(basis, params.clone(), m, alphabet.clone(), retry_cap)?),
        };
        Ok(Self {
            kind,
            basis,
            params,
            scan,
            alphabet,
            inner,
        })
    }

    /// Uniform scan, default retry cap.
    pub fn simple(
        kind: KernelKind,
        basis: &'a LatticeBasis,
        params: GaussianParams,
        alphabet: SiteAlphabet,
    ) -> Result<Self> {
        let n = basis.dim();
        Self::new(kind, basis, params, ScanPolicy::uniform(n), alphabet, DEFAULT_RETRY_CAP)
    }

    /// Enables the enumerated fallback of Gibbs-Klein blocks; no effect on other kinds.
    pub fn with_exact_block_fallback(mut self, enabled: bool) -> Self {
        if let Inner::Gk(gk) = self.inner {
            self.inner = Inner::Gk(gk.with_exact_fallback(enabled));
        }
        self
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn basis(&self) -> &'a LatticeBasis {
        self.basis
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }

    pub fn alphabet(&self) -> &SiteAlphabet {
        &self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn initial_state(&self, coeffs: Vec<i64>) -> Result<ChainState> {
        ChainState::new(self.basis, &self.params, coeffs)
    }

    pub fn step(&self, state: &ChainState, rng: &mut dyn RngCore) -> Result<(ChainState, StepInfo)> {
        match &self.inner {
            Inner::Gibbs => {
                let (next, site) = gibbs_step_at(state, self.basis, &self.params, &self.scan, &self.alphabet, rng)?;
                Ok((
                    next,
                    StepInfo {
                        site: Some(site),
                        accepted: true,
                        ..Default::default()
                    },
                ))
            }
            Inner::Mwg => {
                let (next, mv) = mwg_step(state, self.basis, &self.params, &self.scan, &self.alphabet, rng)?;
                Ok((
                    next,
                    StepInfo {
                        site: Some(mv.site),
                        accepted: mv.accepted,
                        degenerate: mv.degenerate,
                        ..Default::default()
                    },
                ))
            }
            Inner::Gk(gk) => {
                let (next, draw) = gk.step(state, rng)?;
                Ok((
                    next,
                    StepInfo {
                        site: None,
                        accepted: true,
                        degenerate: false,
                        retries: draw.retries,
                        fallback: draw.fallback,
                    },
                ))
            }
        }
    }
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ChainStats {
    pub steps: u64,
    pub site_updates: Vec<u64>,
    pub site_accepts: Vec<u64>,
    pub degenerate: u64,
    pub block_retries: u64,
    pub max_block_retries: u32,
    pub block_fallbacks: u64,
}

impl ChainStats {
    pub fn new(n: usize) -> Self {
        Self {
            site_updates: vec![0; n],
            site_accepts: vec![0; n],
            ..Default::default()
        }
    }

    pub fn record(&mut self, info: &StepInfo) {
        self.steps += 1;
        if let Some(i) = info.site {
            self.site_updates[i] += 1;
            if info.accepted {
                self.site_accepts[i] += 1;
            }
        }
        if info.degenerate {
            self.degenerate += 1;
        }
        self.block_retries += info.retries as u64;
        self.max_block_retries = self.max_block_retries.max(info.retries);
        if info.fallback {
            self.block_fallbacks += 1;
        }
    }

    /// Per-site acceptance rates; 1.0 for sites never updated and for block kernels.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.site_updates
            .iter()
            .zip(&self.site_accepts)
            .map(|(&u, &a)| if u == 0 { 1.0 } else { a as f64 / u as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub samples: Vec<Vec<i64>>,
    pub final_state: ChainState,
    pub stats: ChainStats,
}

/// Runs `iterations` kernel steps from `x0`. States after step `t` with
/// `t > burn_in` and `(t - burn_in).is_multiple_of(thin)` are emitted.
pub fn run_chain<R: Rng>(
    kernel: &Kernel<'_>,
    x0: ChainState,
    iterations: u64,
    burn_in: u64,
    thin: u64,
    rng: &mut R,
) -> Result<ChainRun> {
    if iterations < burn_in {
        return Err(LatticeError::InvalidParameter(format!(
            "iterations ({iterations}) must be at least burn_in ({burn_in})"
        )));
    }
    if thin == 0 {
        return Err(LatticeError::InvalidParameter("thin must be at least 1".into()));
    }
    if x0.dim() != kernel.dim() {
        return Err(LatticeError::DimensionMismatch {
            expected: kernel.dim(),
            got: x0.dim(),
        });
    }
    let mut stats = ChainStats::new(kernel.dim());
    let mut samples = Vec::with_capacity(((iterations - burn_in) / thin) as usize);
    let mut state = x0;
    for t in 1..=iterations {
        let (next, info) = kernel.step(&state, rng)?;
        stats.record(&info);
        state = next;
        if t > burn_in && (t - burn_in).is_multiple_of(thin) {
            samples.push(state.coeffs.clone());
        }
    }
    Ok(ChainRun {
        samples,
        final_state: state,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (LatticeBasis, GaussianParams) {
        (
            LatticeBasis::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.1]]).unwrap(),
            GaussianParams::centered(1.0, 2).unwrap(),
        )
    }

    #[test]
    fn burn_in_equal_to_iterations_is_empty() {
        let (b, p) = setup();
        let k = Kernel::simple(KernelKind::Gibbs, &b, p, SiteAlphabet::integers(2, 12.0)).unwrap();
        let x0 = k.initial_state(vec![0, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let run = run_chain(&k, x0, 50, 50, 1, &mut rng).unwrap();
        assert!(run.samples.is_empty());
        assert_eq!(run.stats.steps, 50);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (b, p) = setup();
        for kind in [KernelKind::Gibbs, KernelKind::Mwg, KernelKind::Gk { m: 2 }] {
            let k = Kernel::simple(kind, &b, p.clone(), SiteAlphabet::integers(2, 12.0)).unwrap();
            let go = || {
                let mut rng = ChaCha8Rng::seed_from_u64(77);
                run_chain(&k, k.initial_state(vec![1, -1]).unwrap(), 500, 100, 3, &mut rng).unwrap()
            };
            let (a, c) = (go(), go());
            assert_eq!(a, c);
            assert_eq!(a.samples.len(), 400 / 3);
        }
    }

    #[test]
    fn gibbs_acceptance_is_one() {
        let (b, p) = setup();
        let k = Kernel::simple(KernelKind::Gibbs, &b, p, SiteAlphabet::integers(2, 12.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let run = run_chain(&k, k.initial_state(vec![0, 0]).unwrap(), 200, 0, 1, &mut rng).unwrap();
        assert!(run.stats.acceptance_rates().iter().all(|&r| r == 1.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        let (b, p) = setup();
        let k = Kernel::simple(KernelKind::Mwg, &b, p, SiteAlphabet::integers(2, 12.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x0 = k.initial_state(vec![0, 0]).unwrap();
        assert!(run_chain(&k, x0.clone(), 5, 10, 1, &mut rng).is_err());
        assert!(run_chain(&k, x0, 5, 0, 0, &mut rng).is_err());
    }
}
