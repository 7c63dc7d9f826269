//! One line per acceptance criterion; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use lattice_gibbs::blocked::block_conditional_table;
use lattice_gibbs::diagnostics::{reversibility_residual, stationarity_residual, tempering_product_kernel};
use lattice_gibbs::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

const SEEDS: u64 = 20;
const SIGMAS: [f64; 3] = [0.5, 1.0, 2.0];
const ORDER_SLACK: f64 = 1e-9;
const PESKUN_SLACK: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
const BLOCK_PMF_TOL: f64 = 1e-10;
const BLOCK_TV_TOL: f64 = 1e-3;
const BLOCK_DRAWS: usize = 1_000_000;
const KLEIN_CLOSE_TV: f64 = 0.01;
const KLEIN_FAR_TV: f64 = 0.05;
const SLOPE_REL_TOL: f64 = 0.10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn builtin_2d() -> LatticeBasis {
    LatticeBasis::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.1]]).unwrap()
}

/// `I + 0.3 diag(N) + 0.5 offdiag(N)` and a center in `[-1/2, 1/2]^n`.
fn random_case(n: usize, seed: u64) -> (LatticeBasis, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |i, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        if i == j {
            1.0 + 0.3 * z
        } else {
            0.5 * z
        }
    });
    let center = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    (LatticeBasis::new(m).unwrap(), center)
}

struct Case {
    label: String,
    basis: LatticeBasis,
    params: GaussianParams,
    bx: BoxSpec,
}

fn cases(dims: &[usize]) -> Vec<Case> {
    let mut out = Vec::new();
    for &n in dims {
        let radius = if n == 2 { 5 } else { 3 };
        for seed in 0..SEEDS {
            let (basis, center) = random_case(n, 100 * n as u64 + seed);
            for sigma in SIGMAS {
                out.push(Case {
                    label: format!("n={n} seed={seed} sigma={sigma}"),
                    basis: basis.clone(),
                    params: GaussianParams::new(sigma, center.clone()).unwrap(),
                    bx: BoxSpec::symmetric(n, radius).unwrap(),
                });
            }
        }
    }
    out
}

fn rho(kind: KernelKind, c: &Case, target: &PmfTable) -> f64 {
    let k = build_kernel(kind, &c.basis, &c.params, &c.bx).unwrap();
    spectral_radius_forward(&k, target).unwrap().rho
}

fn spectral_ordering() -> Outcome {
    let cases = cases(&[2, 3]);
    let gaps: Vec<(f64, String)> = cases
        .par_iter()
        .map(|c| {
            let t = enumerate_target(&c.basis, &c.params, &c.bx).unwrap();
            (
                rho(KernelKind::Mwg, c, &t) - rho(KernelKind::Gibbs, c, &t),
                c.label.clone(),
            )
        })
        .collect();
    let worst = gaps
        .iter()
        .cloned()
        .fold((f64::NEG_INFINITY, String::new()), |a, b| if b.0 > a.0 { b } else { a });
    let fails = gaps.iter().filter(|g| g.0 > ORDER_SLACK).count();
    outcome(
        fails == 0,
        format!(
            "{} cases, {fails} violations, worst rho_mwg - rho_gibbs = {:.3e} ({})",
            gaps.len(),
            worst.0,
            worst.1
        ),
    )
}

fn blocked_ordering() -> Outcome {
    let cases = cases(&[3]);
    let gaps: Vec<f64> = cases
        .par_iter()
        .map(|c| {
            let t = enumerate_target(&c.basis, &c.params, &c.bx).unwrap();
            let r: Vec<f64> = (1..=3).map(|m| rho(KernelKind::Gk { m }, c, &t)).collect();
            (r[1] - r[0]).max(r[2] - r[1])
        })
        .collect();
    let worst = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fails = gaps.iter().filter(|&&g| g > ORDER_SLACK).count();
    outcome(
        fails == 0,
        format!("{} cases, {fails} violations, worst increase {worst:.3e}", gaps.len()),
    )
}

fn peskun() -> Outcome {
    let cases = cases(&[2, 3]);
    let counts: Vec<(usize, usize)> = cases
        .par_iter()
        .map(|c| {
            let g = build_kernel(KernelKind::Gibbs, &c.basis, &c.params, &c.bx).unwrap();
            let m = build_kernel(KernelKind::Mwg, &c.basis, &c.params, &c.bx).unwrap();
            let k = g.states.len();
            let mut bad = 0;
            let mut checked = 0;
            for x in 0..k {
                for y in 0..k {
                    if x != y {
                        checked += 1;
                        bad += (m.matrix[(x, y)] < g.matrix[(x, y)] - PESKUN_SLACK) as usize;
                    }
                }
            }
            (bad, checked)
        })
        .collect();
    let bad: usize = counts.iter().map(|c| c.0).sum();
    let checked: usize = counts.iter().map(|c| c.1).sum();
    outcome(
        bad == 0,
        format!(
            "{checked} off-diagonal entries over {} cases, {bad} violations",
            counts.len()
        ),
    )
}

fn stationarity_and_reversibility() -> Outcome {
    let cases = cases(&[2, 3]);
    let worst: Vec<(f64, f64)> = cases
        .par_iter()
        .map(|c| {
            let n = c.basis.dim();
            let t = enumerate_target(&c.basis, &c.params, &c.bx).unwrap();
            let mut kinds = vec![KernelKind::Gibbs, KernelKind::Mwg];
            kinds.extend((1..=n).map(|m| KernelKind::Gk { m }));
            kinds.iter().fold((0.0_f64, 0.0_f64), |acc, &kind| {
                let k = build_kernel(kind, &c.basis, &c.params, &c.bx).unwrap();
                (
                    acc.0.max(stationarity_residual(&k, &t).unwrap()),
                    acc.1.max(reversibility_residual(&k, &t).unwrap()),
                )
            })
        })
        .collect();
    let stat = worst.iter().map(|w| w.0).fold(0.0, f64::max);
    let rev = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    outcome(
        stat < RESIDUAL_TOL && rev < RESIDUAL_TOL,
        format!(
            "{} cases, max stationarity {stat:.2e}, max reversibility {rev:.2e}",
            worst.len()
        ),
    )
}

/// Basis, target, permutation, block size, fixed coordinates, alphabet.
type BlockCase = (LatticeBasis, GaussianParams, Vec<usize>, usize, Vec<i64>, SiteAlphabet);

fn block_exactness() -> Outcome {
    let (b3, c3) = random_case(3, 77);
    let configs: Vec<BlockCase> = vec![
        (
            builtin_2d(),
            GaussianParams::new(0.8, vec![0.3, -0.2]).unwrap(),
            vec![0, 1],
            2,
            vec![],
            SiteAlphabet::integers(2, 12.0),
        ),
        (
            builtin_2d(),
            GaussianParams::new(0.5, vec![0.1, 0.6]).unwrap(),
            vec![1, 0],
            1,
            vec![2],
            SiteAlphabet::integers(2, 12.0),
        ),
        (
            b3.clone(),
            GaussianParams::new(0.9, c3.clone()).unwrap(),
            vec![2, 0, 1],
            2,
            vec![1],
            SiteAlphabet::integers(3, 12.0),
        ),
        (
            b3.clone(),
            GaussianParams::new(0.6, c3.clone()).unwrap(),
            vec![1, 2, 0],
            3,
            vec![],
            SiteAlphabet::integers(3, 12.0),
        ),
        (
            b3,
            GaussianParams::new(0.4, vec![3.0, -2.0, 2.5]).unwrap(),
            vec![0, 2, 1],
            2,
            vec![2],
            SiteAlphabet::uniform_range(3, 0, 3).unwrap(),
        ),
    ];
    let mut worst = 0.0_f64;
    for (basis, params, perm, m, fixed, alphabet) in &configs {
        let plan = BlockPlan::new(basis, params, perm.clone(), *m).unwrap();
        let block_box: Vec<(i64, i64)> = plan
            .block_sites()
            .iter()
            .map(|&i| match alphabet.site(i) {
                SiteSet::Range(lo, hi) => (*lo, *hi),
                _ => (-12, 12),
            })
            .collect();
        let exact: BTreeMap<Vec<i64>, f64> = block_conditional_table(&plan, params, fixed, &block_box)
            .unwrap()
            .into_iter()
            .collect();
        let analytic: BTreeMap<Vec<i64>, f64> = accepted_block_pmf(&plan, params, fixed, alphabet)
            .unwrap()
            .into_iter()
            .collect();
        for z in exact.keys().chain(analytic.keys()) {
            let d = (exact.get(z).copied().unwrap_or(0.0) - analytic.get(z).copied().unwrap_or(0.0)).abs();
            worst = worst.max(d);
        }
    }
    let basis = builtin_2d();
    let params = GaussianParams::new(0.3, vec![0.3, -0.2]).unwrap();
    let plan = BlockPlan::new(&basis, &params, vec![0, 1], 2).unwrap();
    let alphabet = SiteAlphabet::integers(2, 12.0);
    let exact: BTreeMap<Vec<i64>, f64> = block_conditional_table(&plan, &params, &[], &[(-12, 12), (-12, 12)])
        .unwrap()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    let mut retries = 0u64;
    for _ in 0..BLOCK_DRAWS {
        let d = sample_block(&plan, &params, &[], &alphabet, 1000, &mut rng).unwrap();
        retries += d.retries as u64;
        *counts.entry(d.z_block).or_default() += 1.0 / BLOCK_DRAWS as f64;
    }
    let mut tv = 0.0;
    for (z, p) in &exact {
        tv += (counts.remove(z).unwrap_or(0.0) - p).abs();
    }
    tv = 0.5 * (tv + counts.values().sum::<f64>());
    outcome(
        worst < BLOCK_PMF_TOL && tv < BLOCK_TV_TOL,
        format!(
            "{} pointwise cases, max |diff| {worst:.2e}; {BLOCK_DRAWS} accepted draws, TV {tv:.2e}, {retries} rejections",
            configs.len()
        ),
    )
}

fn klein_tv(basis: &LatticeBasis, sigma: f64, center: &[f64]) -> f64 {
    let params = GaussianParams::new(sigma, center.to_vec()).unwrap();
    let bx = BoxSpec::symmetric(2, 15).unwrap();
    let t = enumerate_target(basis, &params, &bx).unwrap();
    let (mut tv, mut inside) = (0.0, 0.0);
    for (x, &p) in t.support().iter().zip(t.probs()) {
        let k = klein_pmf(basis, &params, x).unwrap();
        inside += k;
        tv += (k - p).abs();
    }
    0.5 * (tv + (1.0 - inside).max(0.0))
}

fn klein_closeness() -> Outcome {
    let basis = builtin_2d();
    let g = basis.max_gs_norm();
    let center = [0.5, 0.5];
    let (wide, narrow) = (3.0 * g * 2f64.ln().sqrt(), 0.3 * g);
    let (close, far) = (klein_tv(&basis, wide, &center), klein_tv(&basis, narrow, &center));
    outcome(
        close < KLEIN_CLOSE_TV && far > KLEIN_FAR_TV,
        format!("sigma {wide:.4}: TV {close:.2e}; sigma {narrow:.4}: TV {far:.4}"),
    )
}

fn geometric_decay() -> Outcome {
    let basis = builtin_2d();
    let params = GaussianParams::centered(1.0, 2).unwrap();
    let bx = BoxSpec::default_for(&basis, &params).unwrap();
    let t = enumerate_target(&basis, &params, &bx).unwrap();
    let k = build_kernel(KernelKind::Gibbs, &basis, &params, &bx).unwrap();
    let rep = spectral_radius_forward(&k, &t).unwrap();
    let x0: Vec<i64> = bx.bounds.iter().map(|b| b.0).collect();
    let curve = tv_decay_curve(&k, &t, &x0, 60).unwrap();
    let rel = (curve.tail_slope / rep.rho.ln() - 1.0).abs();
    outcome(
        rel < SLOPE_REL_TOL,
        format!(
            "slope {:.5}, log rho {:.5}, relative error {rel:.2e}",
            curve.tail_slope,
            rep.rho.ln()
        ),
    )
}

fn tempering() -> Outcome {
    let mut worst = 0.0_f64;
    let mut checks = 0;
    for (basis, temps) in [(builtin_2d(), vec![1.0, 2.0]), (random_case(2, 5).0, vec![1.0, 1.6])] {
        let params = GaussianParams::new(0.7, vec![0.2, -0.1]).unwrap();
        let bx = BoxSpec::symmetric(2, 2).unwrap();
        for stride in [1, 3] {
            let ladder = TemperLadder::new(temps.clone(), stride).unwrap();
            for kind in [
                KernelKind::Gibbs,
                KernelKind::Mwg,
                KernelKind::Gk { m: 1 },
                KernelKind::Gk { m: 2 },
            ] {
                let pk = tempering_product_kernel(kind, &basis, &params, &bx, &ladder).unwrap();
                worst = worst.max(pk.stationarity_residual());
                checks += 1;
            }
        }
    }
    let basis = builtin_2d();
    let params = GaussianParams::new(1.0, vec![0.2, 0.1]).unwrap();
    let alphabet = SiteAlphabet::integers(2, 12.0);
    let mut identical = true;
    for seed in [1u64, 2, 3] {
        let seeds = PtSeeds {
            chains: vec![seed, seed + 100],
            swap: seed + 200,
        };
        let ladder = TemperLadder::new(vec![1.0, 2.0], 1).unwrap();
        let run = pt_run(
            ladder,
            KernelKind::Mwg,
            &basis,
            &params,
            &alphabet,
            100,
            &[0, 0],
            5000,
            0,
            1,
            &seeds,
            false,
        )
        .unwrap();
        let plain = Kernel::simple(KernelKind::Mwg, &basis, params.clone(), alphabet.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = run_chain(&plain, plain.initial_state(vec![0, 0]).unwrap(), 5000, 0, 1, &mut rng).unwrap();
        identical &= run.cold_samples == reference.samples;
    }
    outcome(
        worst < RESIDUAL_TOL && identical,
        format!("{checks} product kernels, max residual {worst:.2e}; swap-disabled cold chain identical to MWG: {identical}"),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lattice-gibbs")
}

fn reference_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/mimo_reference.json")
}

fn mimo_orderings() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ber.csv");
    let status = Command::new(bin())
        .args([
            "mimo",
            "--config",
            reference_config().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    if !status.success() {
        return outcome(false, format!("mimo exited with {status}"));
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ber.csv.meta.json")).unwrap()).unwrap();
    let o = &meta["orderings"];
    let monotone: Vec<String> = o["non_increasing"]
        .as_object()
        .unwrap()
        .iter()
        .filter(|(_, v)| **v != true)
        .map(|(k, _)| k.clone())
        .collect();
    let flags = ["mwg_leq_gibbs", "gk_monotone", "pt_leq_mwg"];
    let pass = monotone.is_empty() && flags.iter().all(|f| o[*f] == true);
    let mut detail = format!("non-increasing failures {monotone:?}");
    for f in flags {
        detail.push_str(&format!(", {f} {}", o[f]));
    }
    outcome(pass, detail)
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let reference = reference_config();
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "sample-klein",
            vec![
                "sample".into(),
                "--sampler".into(),
                "klein".into(),
                "--iterations".into(),
                "2000".into(),
            ],
        ),
        (
            "sample-gibbs",
            vec![
                "sample".into(),
                "--sampler".into(),
                "gibbs".into(),
                "--iterations".into(),
                "2000".into(),
            ],
        ),
        (
            "sample-mwg",
            vec![
                "sample".into(),
                "--sampler".into(),
                "mwg".into(),
                "--iterations".into(),
                "2000".into(),
            ],
        ),
        (
            "sample-gk",
            vec![
                "sample".into(),
                "--sampler".into(),
                "gk".into(),
                "--m".into(),
                "2".into(),
                "--iterations".into(),
                "2000".into(),
            ],
        ),
        (
            "sample-pt",
            vec![
                "sample".into(),
                "--sampler".into(),
                "pt".into(),
                "--temps".into(),
                "1,2,4".into(),
                "--iterations".into(),
                "2000".into(),
            ],
        ),
        (
            "diagnose",
            vec![
                "diagnose".into(),
                "--basis".into(),
                "3d".into(),
                "--box".into(),
                "2".into(),
                "--epsilon".into(),
                "0.25".into(),
            ],
        ),
        (
            "mimo",
            vec![
                "mimo".into(),
                "--config".into(),
                reference.to_str().unwrap().into(),
                "--trials".into(),
                "200".into(),
            ],
        ),
    ];
    let mut mismatched = Vec::new();
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for (k, threads) in ["1", "4"].iter().enumerate() {
            let run_dir = dir.path().join(format!("{name}-{k}"));
            std::fs::create_dir(&run_dir).unwrap();
            let out = run_dir.join("out");
            let status = Command::new(bin())
                .current_dir(&run_dir)
                .args(args)
                .args(["--seed", "11", "--out", "out"])
                .env("LATTICE_GIBBS_THREADS", threads)
                .status()
                .unwrap();
            let mut files: Vec<PathBuf> = std::fs::read_dir(&run_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            let mut bytes = Vec::new();
            for p in files.iter().filter(|p| **p != out).chain(std::iter::once(&out)) {
                bytes.extend(p.file_name().unwrap().as_encoded_bytes());
                bytes.extend(std::fs::read(p).unwrap_or_default());
            }
            outputs.push((status.success(), bytes));
        }
        if !(outputs[0].0 && outputs[1].0 && outputs[0].1 == outputs[1].1) {
            mismatched.push(*name);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!(
            "{} commands run twice (1 and 4 threads), mismatches {mismatched:?}",
            runs.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("spectral ordering mwg <= gibbs", spectral_ordering),
        ("blocked ordering gk1 >= gk2 >= gk3", blocked_ordering),
        ("peskun dominance", peskun),
        ("stationarity and reversibility", stationarity_and_reversibility),
        ("gibbs-klein block exactness", block_exactness),
        ("klein closeness", klein_closeness),
        ("geometric decay", geometric_decay),
        ("tempering correctness", tempering),
        ("mimo orderings", mimo_orderings),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += !o.pass as usize;
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
