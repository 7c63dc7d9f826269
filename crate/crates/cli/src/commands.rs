use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lattice_gibbs::mimo::{ber_csv, ber_experiment, ber_orderings, derive_seed, BerConfig, DetectorKind};
use lattice_gibbs::{
    build_kernel, estimate_mixing, klein_sample_in, pt_run, run_chain, spectral_radius_forward, tv_decay_curve,
    BoxSpec, ChainStats, GaussianParams, Kernel, KernelKind, PtSeeds, ScanPolicy, SiteAlphabet, SpectralRecord,
    TemperLadder,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{parse_kernel_kind, Format, Overrides, Resolved};
use crate::CliError;

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.with_extension("");
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn single<T: Copy>(values: &[T], default: T, what: &str) -> Result<T, CliError> {
    match values {
        [] => Ok(default),
        [v] => Ok(*v),
        _ => Err(CliError::Config(format!("sample takes a single {what}"))),
    }
}

fn stats_json(stats: &ChainStats) -> Value {
    json!({
        "acceptance_rates": stats.acceptance_rates(),
        "site_updates": stats.site_updates,
        "degenerate": stats.degenerate,
        "block_retries": stats.block_retries,
        "max_block_retries": stats.max_block_retries,
        "block_fallbacks": stats.block_fallbacks,
    })
}

pub fn sample(o: &Overrides) -> Result<(), CliError> {
    let cfg = Resolved::from_sources("sample", o)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Config("sample needs --out".into()))?;
    let label = match cfg.samplers.as_slice() {
        [] => "gibbs".to_string(),
        [s] => s.clone(),
        _ => return Err(CliError::Config("sample runs a single sampler".into())),
    };
    let iterations = single(&cfg.iterations, 1000, "iteration count")?;
    if iterations < cfg.burn_in {
        return Err(CliError::Config(format!(
            "iterations ({iterations}) below burn_in ({})",
            cfg.burn_in
        )));
    }
    let basis = &cfg.basis;
    let n = basis.dim();
    let params = GaussianParams::new(cfg.sigma, cfg.center.clone()).map_err(CliError::config)?;
    let alphabet = match &cfg.bx {
        Some(b) => SiteAlphabet::ranges(&b.bounds).map_err(CliError::config)?,
        None => SiteAlphabet::integers(n, cfg.tail_factor),
    };
    let x0 = match &cfg.x0 {
        Some(x) if x.len() == n => x.clone(),
        Some(x) => {
            return Err(CliError::Config(format!(
                "x0 has {} entries, basis has dimension {n}",
                x.len()
            )))
        }
        None => basis
            .solve(&cfg.center)
            .iter()
            .enumerate()
            .map(|(i, &v)| alphabet.nearest(i, v))
            .collect(),
    };
    if x0.iter().enumerate().any(|(i, &v)| !alphabet.contains(i, v)) {
        return Err(CliError::Config(format!("x0 {x0:?} lies outside the box")));
    }
    let scan = match &cfg.scan {
        Some(p) => ScanPolicy::new(p.clone()).map_err(CliError::config)?,
        None => ScanPolicy::uniform(n),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut meta = Map::new();
    meta.insert("sampler".into(), json!(label));
    let samples: Vec<Vec<i64>> = match label.as_str() {
        "klein" => {
            let mut samples = Vec::new();
            for t in 1..=iterations {
                let draw = klein_sample_in(basis, &params, &alphabet, &mut rng)?;
                if t > cfg.burn_in && (t - cfg.burn_in).is_multiple_of(cfg.thin) {
                    samples.push(draw.coeffs);
                }
            }
            samples
        }
        "pt" => {
            let ladder = TemperLadder::new(cfg.temps.clone(), cfg.swap_stride).map_err(CliError::config)?;
            let kind = parse_kernel_kind(&cfg.pt_base, cfg.m)?;
            let mut chains = vec![cfg.seed];
            chains.extend((1..ladder.len() as u64).map(|j| derive_seed(cfg.seed, &[j])));
            let seeds = PtSeeds {
                chains,
                swap: derive_seed(cfg.seed, &[u64::MAX]),
            };
            meta.insert("temps".into(), json!(ladder.temps()));
            meta.insert("swap_stride".into(), json!(ladder.swap_stride()));
            meta.insert("base".into(), json!(kind.label()));
            let run = pt_run(
                ladder,
                kind,
                basis,
                &params,
                &alphabet,
                cfg.block_retry_cap(),
                &x0,
                iterations,
                cfg.burn_in,
                cfg.thin,
                &seeds,
                true,
            )?;
            meta.insert("swap_acceptance".into(), json!(run.swap_stats.rates()));
            meta.insert(
                "chains".into(),
                Value::Array(run.chain_stats.iter().map(stats_json).collect()),
            );
            run.cold_samples
        }
        other => {
            let kind = parse_kernel_kind(other, cfg.m)?;
            let kernel = Kernel::new(kind, basis, params.clone(), scan, alphabet, cfg.block_retry_cap())?;
            let run = run_chain(
                &kernel,
                kernel.initial_state(x0.clone())?,
                iterations,
                cfg.burn_in,
                cfg.thin,
                &mut rng,
            )?;
            meta.insert("sampler".into(), json!(kind.label()));
            if let Value::Object(m) = stats_json(&run.stats) {
                meta.extend(m);
            }
            run.samples
        }
    };
    let mut text = String::new();
    for s in &samples {
        match cfg.format {
            Format::Csv => {
                let line: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                writeln!(text, "{}", line.join(",")).expect("string write");
            }
            Format::Json => writeln!(text, "{}", json!(s)).expect("string write"),
        }
    }
    std::fs::write(&out, text)?;
    meta.insert("dim".into(), json!(n));
    meta.insert("sigma".into(), json!(cfg.sigma));
    meta.insert("center".into(), json!(cfg.center));
    meta.insert("x0".into(), json!(x0));
    meta.insert("iterations".into(), json!(iterations));
    meta.insert("burn_in".into(), json!(cfg.burn_in));
    meta.insert("thin".into(), json!(cfg.thin));
    meta.insert("seed".into(), json!(cfg.seed));
    meta.insert("samples".into(), json!(samples.len()));
    std::fs::write(sidecar_path(&out), pretty(&Value::Object(meta)))?;
    Ok(())
}

pub fn diagnose(o: &Overrides) -> Result<(), CliError> {
    let cfg = Resolved::from_sources("diagnose", o)?;
    let basis = &cfg.basis;
    let n = basis.dim();
    let params = GaussianParams::new(cfg.sigma, cfg.center.clone()).map_err(CliError::config)?;
    let bx = match &cfg.bx {
        Some(b) => b.clone(),
        None => BoxSpec::default_for(basis, &params)?,
    };
    let kinds: Vec<KernelKind> = if cfg.samplers.is_empty() {
        let mut k = vec![KernelKind::Gibbs, KernelKind::Mwg];
        k.extend((1..=n.min(3)).map(|m| KernelKind::Gk { m }));
        k
    } else {
        cfg.samplers
            .iter()
            .map(|s| parse_kernel_kind(s, cfg.m))
            .collect::<Result<_, _>>()?
    };
    let x0: Vec<i64> = match &cfg.x0 {
        Some(x) => x.clone(),
        None => bx.bounds.iter().map(|b| b.0).collect(),
    };
    let target = lattice_gibbs::enumerate_target(basis, &params, &bx)?;
    let mut report = Map::new();
    let mut records = Vec::new();
    let mut t_mix = Map::new();
    let mut rho = Vec::new();
    let mut decay_files = Vec::new();
    let mut csv = String::from("kind,n,sigma,rho,gap,lambda_second,lambda_min\n");
    for kind in &kinds {
        let kernel = build_kernel(*kind, basis, &params, &bx)?;
        let rep = spectral_radius_forward(&kernel, &target)?;
        let label = kind.label();
        report.insert(format!("rho_{label}"), json!(rep.rho));
        writeln!(
            csv,
            "{label},{n},{},{:e},{:e},{:e},{:e}",
            cfg.sigma, rep.rho, rep.gap, rep.lambda_second, rep.lambda_min
        )
        .expect("string write");
        let mut rec = serde_json::to_value(SpectralRecord::new(*kind, &params, &bx, &rep)).expect("record serializes");
        rec["lambda_second"] = json!(rep.lambda_second);
        rec["lambda_min"] = json!(rep.lambda_min);
        rec["ergodic"] = json!(rep.ergodic);
        if cfg.t_max > 0 {
            let curve = tv_decay_curve(&kernel, &target, &x0, cfg.t_max)?;
            rec["tail_slope"] = json!(curve.tail_slope);
            if let Some(out) = &cfg.out {
                let path = with_suffix(out, &format!(".{label}.decay.csv"));
                std::fs::write(&path, curve.to_csv())?;
                decay_files.push(path.display().to_string());
            }
        }
        if let Some(eps) = cfg.epsilon {
            t_mix.insert(label.clone(), json!(estimate_mixing(&kernel, &target, eps)?));
        }
        records.push(rec);
        rho.push((*kind, rep.rho));
    }
    let find = |k: KernelKind| rho.iter().find(|(kk, _)| *kk == k).map(|r| r.1);
    let mwg_leq_gibbs = match (find(KernelKind::Mwg), find(KernelKind::Gibbs)) {
        (Some(a), Some(b)) => json!(a <= b + 1e-9),
        _ => Value::Null,
    };
    let mut gk: Vec<(usize, f64)> = rho
        .iter()
        .filter_map(|(k, r)| {
            if let KernelKind::Gk { m } = k {
                Some((*m, *r))
            } else {
                None
            }
        })
        .collect();
    gk.sort_by_key(|g| g.0);
    let gk_monotone = if gk.len() >= 2 {
        json!(gk.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9))
    } else {
        Value::Null
    };
    report.insert("n".into(), json!(n));
    report.insert("sigma".into(), json!(cfg.sigma));
    report.insert("center".into(), json!(cfg.center));
    report.insert("box".into(), json!(bx.bounds));
    report.insert("states".into(), json!(target.len()));
    report.insert("x0".into(), json!(x0));
    report.insert("records".into(), Value::Array(records));
    report.insert("mwg_leq_gibbs".into(), mwg_leq_gibbs);
    report.insert("gk_monotone".into(), gk_monotone);
    if cfg.epsilon.is_some() {
        report.insert("epsilon".into(), json!(cfg.epsilon));
        report.insert("t_mix".into(), Value::Object(t_mix));
    }
    if !decay_files.is_empty() {
        report.insert("decay_files".into(), json!(decay_files));
    }
    let text = match cfg.format {
        Format::Json => pretty(&Value::Object(report)),
        Format::Csv => {
            if let Some(out) = &cfg.out {
                std::fs::write(sidecar_path(out), pretty(&Value::Object(report)))?;
            }
            csv
        }
    };
    emit(cfg.out.as_deref(), &text)
}

fn detector(label: &str, cfg: &Resolved) -> Result<DetectorKind, CliError> {
    Ok(match label {
        "klein" => DetectorKind::Klein,
        "pt" => DetectorKind::Pt {
            temps: cfg.temps.clone(),
            swap_stride: cfg.swap_stride,
        },
        other => match parse_kernel_kind(other, cfg.m)? {
            KernelKind::Gibbs => DetectorKind::Gibbs,
            KernelKind::Mwg => DetectorKind::Mwg,
            KernelKind::Gk { m } => DetectorKind::Gk { m },
        },
    })
}

pub fn mimo(o: &Overrides) -> Result<(), CliError> {
    let cfg = Resolved::from_sources("mimo", o)?;
    let samplers = match (&cfg.detectors, cfg.samplers.is_empty()) {
        (Some(d), true) => d.clone(),
        _ => {
            let labels: Vec<String> = if cfg.samplers.is_empty() {
                ["klein", "gibbs", "mwg", "gk1", "gk2", "pt"].map(String::from).to_vec()
            } else {
                cfg.samplers.clone()
            };
            labels.iter().map(|l| detector(l, &cfg)).collect::<Result<_, _>>()?
        }
    };
    let iterations = if cfg.iterations.is_empty() {
        vec![0, 1, 2, 4, 8]
    } else {
        cfg.iterations.clone()
    };
    let ber = BerConfig {
        n: cfg.n,
        qam: cfg.qam,
        snr_db: cfg.snr_db.clone(),
        samplers,
        iterations,
        trials: cfg.trials,
        seed: cfg.seed,
        sigma: cfg.sigma_override,
        retry_cap: cfg.mimo_retry_cap(),
    };
    let rows = ber_experiment(&ber).map_err(|e| {
        if e.is_runtime_limit() {
            CliError::from(e)
        } else {
            CliError::config(e)
        }
    })?;
    let text = match cfg.format {
        Format::Csv => ber_csv(&rows),
        Format::Json => pretty(&json!(rows)),
    };
    if let Some(out) = &cfg.out {
        let meta = json!({
            "n": ber.n,
            "qam": ber.qam,
            "snr_db": ber.snr_db,
            "iterations": ber.iterations,
            "trials": ber.trials,
            "seed": ber.seed,
            "samplers": ber.samplers,
            "orderings": ber_orderings(&rows),
        });
        std::fs::write(sidecar_path(out), pretty(&meta))?;
    }
    emit(cfg.out.as_deref(), &text)
}
