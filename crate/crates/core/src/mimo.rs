//! MIMO detection by lattice Gaussian sampling.
//!
//! An `n x n` complex channel with square QAM is turned into a `2n`-dimensional
//! real lattice whose coefficients are the PAM level indices `0..Q-1`, so
//! every detector samples over a finite consecutive-integer alphabet.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Kernel, KernelKind};
use crate::error::{LatticeError, Result};
use crate::klein::klein_sample_in;
use crate::lattice::{GaussianParams, LatticeBasis};
use crate::tempering::{PtSeeds, TemperLadder, Tempering};
use crate::univariate::{ChainState, ScanPolicy, SiteAlphabet};

/// Rejections before a Gibbs-Klein block over the constellation is drawn
/// from its enumerated conditional instead.
pub const MIMO_RETRY_CAP: u32 = 1000;

/// Square QAM with unit average symbol energy and Gray labels per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Qam {
    order: u32,
    side: u32,
    bits_per_axis: u32,
    scale: f64,
}

impl Qam {
    pub fn new(order: u32) -> Result<Self> {
        let side = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            _ => {
                return Err(LatticeError::InvalidParameter(format!(
                    "QAM order {order} not in {{4, 16, 64}}"
                )))
            }
        };
        Ok(Self {
            order,
            side,
            bits_per_axis: side.trailing_zeros(),
            scale: (3.0 / (2.0 * (order as f64 - 1.0))).sqrt(),
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Levels per real axis.
    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn bits_per_axis(&self) -> u32 {
        self.bits_per_axis
    }

    pub fn bits_per_symbol(&self) -> u32 {
        2 * self.bits_per_axis
    }

    /// Half the spacing between adjacent levels.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Amplitude of level index `u`.
    pub fn level(&self, u: i64) -> f64 {
        self.scale * (2.0 * u as f64 - (self.side as f64 - 1.0))
    }

    pub fn gray(u: i64) -> u32 {
        let u = u as u32;
        u ^ (u >> 1)
    }

    /// Gray label of a complex symbol, real-axis bits first.
    pub fn symbol_label(&self, u_re: i64, u_im: i64) -> u32 {
        (Self::gray(u_re) << self.bits_per_axis) | Self::gray(u_im)
    }

    pub fn symbol(&self, u_re: i64, u_im: i64) -> Complex64 {
        Complex64::new(self.level(u_re), self.level(u_im))
    }
}

/// `sigma_w^2 = n / (log2(M) * 10^(snr_db / 10))`.
pub fn noise_var_for(n: usize, qam: &Qam, snr_db: f64) -> f64 {
    n as f64 / (qam.bits_per_symbol() as f64 * 10f64.powf(snr_db / 10.0))
}

/// Inverse of [`noise_var_for`].
pub fn snr_db_for(n: usize, qam: &Qam, noise_var: f64) -> f64 {
    10.0 * (n as f64 / (qam.bits_per_symbol() as f64 * noise_var)).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionInstance {
    pub qam: Qam,
    pub channel: DMatrix<Complex64>,
    /// Level indices, real parts of all symbols first, then imaginary parts.
    pub tx: Vec<i64>,
    pub rx: DVector<Complex64>,
    pub noise_var: f64,
    pub snr_db: f64,
}

impl DetectionInstance {
    pub fn n(&self) -> usize {
        self.channel.nrows()
    }

    pub fn tx_symbols(&self) -> Vec<Complex64> {
        let n = self.n();
        (0..n).map(|k| self.qam.symbol(self.tx[k], self.tx[n + k])).collect()
    }

    /// Gray labels of the transmitted symbols.
    pub fn tx_labels(&self) -> Vec<u32> {
        let n = self.n();
        (0..n)
            .map(|k| self.qam.symbol_label(self.tx[k], self.tx[n + k]))
            .collect()
    }

    /// Same channel and symbols with the noise removed.
    pub fn without_noise(&self) -> Self {
        let s = DVector::from_vec(self.tx_symbols());
        Self {
            rx: &self.channel * s,
            noise_var: 0.0,
            snr_db: f64::INFINITY,
            ..self.clone()
        }
    }

    /// Bit errors of the detected level indices under Gray demapping.
    pub fn bit_errors(&self, detected: &[i64]) -> u64 {
        self.tx
            .iter()
            .zip(detected)
            .map(|(&a, &b)| (Qam::gray(a) ^ Qam::gray(b)).count_ones() as u64)
            .sum()
    }

    pub fn symbol_errors(&self, detected: &[i64]) -> u64 {
        let n = self.n();
        (0..n)
            .filter(|&k| self.tx[k] != detected[k] || self.tx[n + k] != detected[n + k])
            .count() as u64
    }

    pub fn total_bits(&self) -> u64 {
        self.n() as u64 * self.qam.bits_per_symbol() as u64
    }
}

fn complex_normal<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws the channel (row-major), then the symbols, then the noise.
pub fn generate_instance<R: Rng + ?Sized>(
    n: usize,
    qam_order: u32,
    snr_db: f64,
    rng: &mut R,
) -> Result<DetectionInstance> {
    if n == 0 {
        return Err(LatticeError::InvalidParameter("n must be at least 1".into()));
    }
    let qam = Qam::new(qam_order)?;
    let noise_var = noise_var_for(n, &qam, snr_db);
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        entries.push(complex_normal(1.0, rng));
    }
    let channel = DMatrix::from_row_slice(n, n, &entries);
    let tx: Vec<i64> = (0..2 * n).map(|_| rng.random_range(0..qam.side()) as i64).collect();
    let s = DVector::from_iterator(n, (0..n).map(|k| qam.symbol(tx[k], tx[n + k])));
    let noise = DVector::from_iterator(n, (0..n).map(|_| complex_normal(noise_var, rng)));
    let rx = &channel * s + noise;
    Ok(DetectionInstance {
        qam,
        channel,
        tx,
        rx,
        noise_var,
        snr_db,
    })
}

/// `[[Re H, -Im H], [Im H, Re H]]`.
pub fn embed_channel(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = h.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = h[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// `[Re c; Im c]`.
pub fn embed_vector(c: &DVector<Complex64>) -> Vec<f64> {
    c.iter().map(|v| v.re).chain(c.iter().map(|v| v.im)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedLattice {
    pub basis: LatticeBasis,
    pub center: Vec<f64>,
    pub alphabet: SiteAlphabet,
    pub qam: Qam,
}

impl RealizedLattice {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `||B x - c||`, which equals `||H s - rx||` for the symbols `s` of `x`.
    pub fn distance(&self, x: &[i64]) -> Result<f64> {
        Ok(self.basis.sq_distance(x, &self.center)?.sqrt())
    }
}

/// Real lattice over level indices: `B = 2a [H]` and
/// `c = [rx] + (Q - 1) a [H] 1`, so that `B u - c = [H s - rx]`.
pub fn realize_lattice(instance: &DetectionInstance) -> Result<RealizedLattice> {
    let qam = instance.qam;
    let a = qam.scale();
    let h = embed_channel(&instance.channel);
    let dim = h.nrows();
    let shift = &h * DVector::from_element(dim, (qam.side() as f64 - 1.0) * a);
    let center: Vec<f64> = embed_vector(&instance.rx)
        .iter()
        .zip(shift.iter())
        .map(|(c, s)| c + s)
        .collect();
    let basis = LatticeBasis::new(h * (2.0 * a))?;
    let alphabet = SiteAlphabet::uniform_range(dim, 0, qam.side() as i64 - 1)?;
    Ok(RealizedLattice {
        basis,
        center,
        alphabet,
        qam,
    })
}

/// Zero-forcing: `round(B^-1 c)` clamped into the alphabet.
pub fn babai_round(realized: &RealizedLattice) -> Result<ChainState> {
    let sol = realized.basis.solve(&realized.center);
    let coeffs = sol
        .iter()
        .enumerate()
        .map(|(i, &v)| realized.alphabet.nearest(i, v))
        .collect();
    let params = GaussianParams::new(default_sigma(&realized.basis), realized.center.clone())?;
    ChainState::new(&realized.basis, &params, coeffs)
}

/// `min_i ||b^_i|| / sqrt(log2(dim))`, with the logarithm floored at 1.
pub fn default_sigma(basis: &LatticeBasis) -> f64 {
    basis.min_gs_norm() / (basis.dim() as f64).log2().max(1.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorKind {
    /// Independent alphabet-restricted Klein draws, one per full iteration.
    Klein,
    Gibbs,
    Mwg,
    Gk {
        m: usize,
    },
    /// Parallel tempering over Metropolis-within-Gibbs chains.
    Pt {
        temps: Vec<f64>,
        swap_stride: u64,
    },
}

impl DetectorKind {
    pub fn label(&self) -> String {
        match self {
            DetectorKind::Klein => "klein".into(),
            DetectorKind::Gibbs => "gibbs".into(),
            DetectorKind::Mwg => "mwg".into(),
            DetectorKind::Gk { m } => format!("gk{m}"),
            DetectorKind::Pt { .. } => "pt".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Sampling deviation; `None` selects [`default_sigma`].
    pub sigma: Option<f64>,
    pub retry_cap: u32,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            sigma: None,
            retry_cap: MIMO_RETRY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub best: Vec<i64>,
    pub distance: f64,
    /// Best candidate and distance after each full iteration; entry 0 is the Babai state.
    pub history: Vec<(Vec<i64>, f64)>,
}

impl Detection {
    pub fn distance_trace(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.1).collect()
    }
}

struct Tracker<'r> {
    realized: &'r RealizedLattice,
    best: Vec<i64>,
    best_sq: f64,
    history: Vec<(Vec<i64>, f64)>,
}

impl<'r> Tracker<'r> {
    fn new(realized: &'r RealizedLattice, start: Vec<i64>) -> Result<Self> {
        let best_sq = realized.basis.sq_distance(&start, &realized.center)?;
        Ok(Self {
            realized,
            history: vec![(start.clone(), best_sq.sqrt())],
            best: start,
            best_sq,
        })
    }

    fn visit(&mut self, x: &[i64]) -> Result<()> {
        let d = self.realized.basis.sq_distance(x, &self.realized.center)?;
        if d < self.best_sq {
            self.best_sq = d;
            self.best = x.to_vec();
        }
        Ok(())
    }

    fn checkpoint(&mut self) {
        self.history.push((self.best.clone(), self.best_sq.sqrt()));
    }

    fn finish(self) -> Detection {
        Detection {
            distance: self.best_sq.sqrt(),
            best: self.best,
            history: self.history,
        }
    }
}

/// Runs a detector from the Babai state and keeps the closest point ever visited.
/// A full iteration is `2n` single-site updates, `ceil(2n / m)` block updates,
/// `2n` tempering rounds, or one Klein draw.
pub fn detect<R: RngCore>(
    realized: &RealizedLattice,
    kind: &DetectorKind,
    full_iterations: u64,
    options: &DetectOptions,
    rng: &mut R,
) -> Result<Detection> {
    let dim = realized.dim();
    let sigma = options.sigma.unwrap_or_else(|| default_sigma(&realized.basis));
    let params = GaussianParams::new(sigma, realized.center.clone())?;
    let start = babai_round(realized)?.coeffs;
    let mut tracker = Tracker::new(realized, start.clone())?;
    match kind {
        DetectorKind::Klein => {
            for _ in 0..full_iterations {
                let draw = klein_sample_in(&realized.basis, &params, &realized.alphabet, rng)?;
                tracker.visit(&draw.coeffs)?;
                tracker.checkpoint();
            }
        }
        DetectorKind::Gibbs | DetectorKind::Mwg | DetectorKind::Gk { .. } => {
            let (kk, per_iter) = match kind {
                DetectorKind::Gibbs => (KernelKind::Gibbs, dim),
                DetectorKind::Mwg => (KernelKind::Mwg, dim),
                DetectorKind::Gk { m } => (KernelKind::Gk { m: *m }, dim.div_ceil((*m).max(1))),
                _ => unreachable!(),
            };
            let kernel = Kernel::new(
                kk,
                &realized.basis,
                params.clone(),
                ScanPolicy::uniform(dim),
                realized.alphabet.clone(),
                options.retry_cap,
            )?
            .with_exact_block_fallback(true);
            let mut state = kernel.initial_state(start)?;
            for _ in 0..full_iterations {
                for _ in 0..per_iter {
                    state = kernel.step(&state, rng)?.0;
                    tracker.visit(&state.coeffs)?;
                }
                tracker.checkpoint();
            }
        }
        DetectorKind::Pt { temps, swap_stride } => {
            let ladder = TemperLadder::new(temps.clone(), *swap_stride)?;
            let seeds = PtSeeds {
                chains: (0..ladder.len()).map(|_| rng.next_u64()).collect(),
                swap: rng.next_u64(),
            };
            let mut pt = Tempering::new(
                ladder,
                KernelKind::Mwg,
                &realized.basis,
                &params,
                &realized.alphabet,
                options.retry_cap,
                &start,
                &seeds,
            )?;
            for _ in 0..full_iterations {
                for _ in 0..dim {
                    pt.advance()?;
                    tracker.visit(&pt.cold().coeffs)?;
                }
                tracker.checkpoint();
            }
        }
    }
    Ok(tracker.finish())
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a stream identified by `tags` under a base seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(base), |acc, &t| mix64(acc ^ mix64(t)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerConfig {
    pub n: usize,
    pub qam: u32,
    pub snr_db: Vec<f64>,
    pub samplers: Vec<DetectorKind>,
    pub iterations: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: u32,
}

fn default_retry_cap() -> u32 {
    MIMO_RETRY_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerRow {
    pub sampler: String,
    pub n: usize,
    pub qam: u32,
    pub snr_db: f64,
    pub iterations: u64,
    pub trials: u64,
    pub ber: f64,
    pub ci_halfwidth: f64,
    #[serde(skip)]
    pub bit_errors: u64,
    #[serde(skip)]
    pub bits: u64,
}

impl BerRow {
    /// `ber - ci <= other.ber + other.ci`.
    pub fn leq_within_ci(&self, other: &BerRow) -> bool {
        self.ber - self.ci_halfwidth <= other.ber + other.ci_halfwidth
    }
}

pub const BER_CSV_HEADER: &str = "sampler,n,qam,snr_db,iterations,trials,ber,ci_halfwidth";

pub fn ber_csv(rows: &[BerRow]) -> String {
    let mut out = format!("{BER_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6e},{:.6e}\n",
            r.sampler, r.n, r.qam, r.snr_db, r.iterations, r.trials, r.ber, r.ci_halfwidth
        ));
    }
    out
}

/// Ordering verdicts over a BER table, each judged with [`BerRow::leq_within_ci`]
/// at every shared (snr, iterations) cell. `None` when a sampler is absent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerOrderings {
    /// Per sampler: BER at each iteration count is at most the previous one.
    pub non_increasing: std::collections::BTreeMap<String, bool>,
    pub mwg_leq_gibbs: Option<bool>,
    /// `gk(m+1) <= gk(m)` for consecutive block sizes present.
    pub gk_monotone: Option<bool>,
    pub pt_leq_mwg: Option<bool>,
}

fn pair_leq(rows: &[BerRow], a: &str, b: &str) -> Option<bool> {
    let mut seen = false;
    let mut ok = true;
    for ra in rows.iter().filter(|r| r.sampler == a) {
        if let Some(rb) = rows
            .iter()
            .find(|r| r.sampler == b && r.iterations == ra.iterations && r.snr_db == ra.snr_db)
        {
            seen = true;
            ok &= ra.leq_within_ci(rb);
        }
    }
    seen.then_some(ok)
}

pub fn ber_orderings(rows: &[BerRow]) -> BerOrderings {
    let mut non_increasing = std::collections::BTreeMap::new();
    let mut labels: Vec<&str> = rows.iter().map(|r| r.sampler.as_str()).collect();
    labels.dedup();
    for &label in &labels {
        let mut ok = true;
        let mut snrs: Vec<f64> = rows.iter().filter(|r| r.sampler == label).map(|r| r.snr_db).collect();
        snrs.dedup();
        for snr in snrs {
            let mut curve: Vec<&BerRow> = rows.iter().filter(|r| r.sampler == label && r.snr_db == snr).collect();
            curve.sort_by_key(|r| r.iterations);
            ok &= curve.windows(2).all(|w| w[1].leq_within_ci(w[0]));
        }
        non_increasing.insert(label.to_string(), ok);
    }
    let mut gk: Vec<usize> = labels
        .iter()
        .filter_map(|l| l.strip_prefix("gk")?.parse().ok())
        .collect();
    gk.sort_unstable();
    let gk_monotone = (gk.len() >= 2).then(|| {
        gk.windows(2)
            .all(|w| pair_leq(rows, &format!("gk{}", w[1]), &format!("gk{}", w[0])).unwrap_or(true))
    });
    BerOrderings {
        non_increasing,
        mwg_leq_gibbs: pair_leq(rows, "mwg", "gibbs"),
        gk_monotone,
        pt_leq_mwg: pair_leq(rows, "pt", "mwg"),
    }
}

/// BER per (snr, sampler, iterations). Each (snr, trial) pair has one shared
/// instance; each detector runs once to the largest iteration count and is
/// read off at every requested count.
pub fn ber_experiment(config: &BerConfig) -> Result<Vec<BerRow>> {
    if config.trials < 100 {
        return Err(LatticeError::InvalidParameter(format!(
            "trials {} below 100",
            config.trials
        )));
    }
    if config.samplers.is_empty() || config.iterations.is_empty() || config.snr_db.is_empty() {
        return Err(LatticeError::InvalidParameter("empty experiment grid".into()));
    }
    Qam::new(config.qam)?;
    let max_iter = *config.iterations.iter().max().expect("non-empty");
    let options = DetectOptions {
        sigma: config.sigma,
        retry_cap: config.retry_cap,
    };
    let mut rows = Vec::new();
    for (si, &snr) in config.snr_db.iter().enumerate() {
        // errors[trial][sampler][iteration index]
        let per_trial: Vec<(Vec<Vec<u64>>, u64)> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut irng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[si as u64, t, 0]));
                let inst = generate_instance(config.n, config.qam, snr, &mut irng)?;
                let realized = realize_lattice(&inst)?;
                let mut errs = Vec::with_capacity(config.samplers.len());
                for (ki, kind) in config.samplers.iter().enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[si as u64, t, 1 + ki as u64]));
                    let det = detect(&realized, kind, max_iter, &options, &mut rng)?;
                    errs.push(
                        config
                            .iterations
                            .iter()
                            .map(|&k| inst.bit_errors(&det.history[k as usize].0))
                            .collect(),
                    );
                }
                Ok((errs, inst.total_bits()))
            })
            .collect::<Result<_>>()?;
        let bits: u64 = per_trial.iter().map(|p| p.1).sum();
        for (ki, kind) in config.samplers.iter().enumerate() {
            for (ii, &k) in config.iterations.iter().enumerate() {
                let bit_errors: u64 = per_trial.iter().map(|p| p.0[ki][ii]).sum();
                let ber = bit_errors as f64 / bits as f64;
                rows.push(BerRow {
                    sampler: kind.label(),
                    n: config.n,
                    qam: config.qam,
                    snr_db: snr,
                    iterations: k,
                    trials: config.trials,
                    ber,
                    ci_halfwidth: 1.96 * (ber * (1.0 - ber) / bits as f64).sqrt(),
                    bit_errors,
                    bits,
                });
            }
        }
    }
    Ok(rows)
}
