//! Lattice Gaussian sampling.
//!
//! Samplers for `D(x) ∝ exp(-||Bx - c||² / 2σ²)` over integer coefficient
//! vectors: Klein's sequential sampler, random-scan Gibbs,
//! Metropolis-within-Gibbs, blocked Gibbs-Klein with a rejection correction,
//! and parallel tempering. The [`diagnostics`] module builds exact transition
//! matrices on finite boxes; [`mimo`] runs MIMO detection experiments.

pub mod blocked;
pub mod chain;
pub mod diagnostics;
pub mod error;
pub mod klein;
pub mod lattice;
pub mod mimo;
pub mod tempering;
pub mod univariate;

pub use blocked::{
    accepted_block_pmf, block_accept_ratio, block_conditional_pmf, gk_step, sample_block, validity_check, BlockDraw,
    BlockPlan, GibbsKlein, ValidityReport, DEFAULT_RETRY_CAP,
};
pub use chain::{run_chain, ChainRun, ChainStats, Kernel, KernelKind, StepInfo};
pub use diagnostics::{
    build_kernel, enumerate_target, estimate_mixing, spectral_radius_forward, tv_decay_curve, tv_distance, BoxSpec,
    DecayCurve, KernelMatrix, PmfTable, SpectralRecord, SpectralReport,
};
pub use error::{LatticeError, Result};
pub use klein::{klein_pmf, klein_sample, klein_sample_in, KleinSample};
pub use lattice::{density_exponent, log_theta_sum, theta_sum, Dgauss1dSpec, GaussianParams, IntegerPmf, LatticeBasis};
pub use mimo::{
    babai_round, ber_experiment, ber_orderings, detect, generate_instance, realize_lattice, BerConfig, BerRow,
    DetectionInstance, DetectorKind, RealizedLattice,
};
pub use tempering::{pt_run, swap_log_ratio, PtRun, PtSeeds, TemperLadder, Tempering};
pub use univariate::{conditional_pmf, gibbs_step, mwg_step, ChainState, MwgMove, ScanPolicy, SiteAlphabet, SiteSet};
