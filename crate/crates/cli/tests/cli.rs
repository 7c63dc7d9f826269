mod common;

use common::*;

#[test]
fn zero_iterations_write_an_empty_file_and_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    run_ok(&[
        "sample",
        "--sampler",
        "gibbs",
        "--iterations",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");
    let meta = read_json(&dir.path().join("s.csv.meta.json"));
    assert_eq!(meta["samples"], 0);
    assert!(meta["acceptance_rates"].is_array());
    assert!(meta["degenerate"].is_u64());
}

#[test]
fn sample_outputs_repeat_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    for sampler in ["klein", "gibbs", "mwg", "gk", "pt"] {
        let files: Vec<_> = (0..2)
            .map(|k| {
                let out = dir.path().join(format!("{sampler}{k}.csv"));
                run_ok(&[
                    "sample",
                    "--sampler",
                    sampler,
                    "--m",
                    "2",
                    "--iterations",
                    "500",
                    "--seed",
                    "9",
                    "--out",
                    out.to_str().unwrap(),
                ]);
                (
                    std::fs::read(&out).unwrap(),
                    std::fs::read(dir.path().join(format!("{sampler}{k}.csv.meta.json"))).unwrap(),
                )
            })
            .collect();
        assert_eq!(files[0], files[1], "{sampler}");
        assert_eq!(files[0].0.iter().filter(|&&b| b == b'\n').count(), 500);
    }
}

#[test]
fn different_seeds_give_different_streams() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(&[
        "sample",
        "--iterations",
        "200",
        "--seed",
        "1",
        "--out",
        a.to_str().unwrap(),
    ]);
    run_ok(&[
        "sample",
        "--iterations",
        "200",
        "--seed",
        "2",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_ne!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn json_sample_lines_are_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.jsonl");
    run_ok(&[
        "sample",
        "--iterations",
        "3",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    for line in std::fs::read_to_string(&out).unwrap().lines() {
        let v: Vec<i64> = serde_json::from_str(line).unwrap();
        assert_eq!(v.len(), 2);
    }
}

#[test]
fn burn_in_and_thinning_set_the_sample_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    run_ok(&[
        "sample",
        "--iterations",
        "100",
        "--burn-in",
        "10",
        "--thin",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(read_samples(&out).len(), 90 / 7);
}

#[test]
fn blocked_samples_match_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gk.csv");
    run_ok(&[
        "sample",
        "--sampler",
        "gk",
        "--m",
        "2",
        "--iterations",
        "100000",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let samples = read_samples(&out);
    let tv = empirical_tv(&samples, &target_2d(builtin_2d(), [0.0, 0.0], 1.0, 12));
    assert!(tv < 0.02, "tv {tv}");
}

#[test]
fn diagnose_reports_orderings_on_the_builtin_plane() {
    let out = run_ok(&["diagnose", "--basis", "2d", "--sigma", "1"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["rho_gibbs", "rho_mwg", "rho_gk2"] {
        let r = v[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r), "{key} {r}");
    }
    assert_eq!(v["mwg_leq_gibbs"], true);
    assert_eq!(v["gk_monotone"], true);
    assert!(v["records"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["box"].is_array() && r["gap"].is_f64()));
}

#[test]
fn diagnose_on_one_dimension_has_a_zero_gibbs_radius() {
    let out = run_ok(&["diagnose", "--basis", "1d", "--sigma", "1", "--sampler", "gibbs"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rho_gibbs"].as_f64(), Some(0.0));
}

#[test]
fn diagnose_reports_mixing_times_and_decay_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    run_ok(&[
        "diagnose",
        "--epsilon",
        "0.25",
        "--sampler",
        "gibbs,mwg",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v = read_json(&out);
    for k in ["gibbs", "mwg"] {
        assert!(v["t_mix"][k].as_u64().unwrap() >= 1);
        let csv = std::fs::read_to_string(dir.path().join(format!("report.{k}.decay.csv"))).unwrap();
        assert!(csv.starts_with("t,tv\n0,"));
        assert_eq!(csv.lines().count(), 102);
    }
}

#[test]
fn diagnose_is_deterministic() {
    let args = [
        "diagnose",
        "--basis",
        "3d",
        "--sigma",
        "0.8",
        "--box",
        "2",
        "--epsilon",
        "0.1",
    ];
    assert_eq!(run_ok(&args).stdout, run_ok(&args).stdout);
}

#[test]
fn mimo_smoke_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ber.csv");
    run_ok(&[
        "mimo",
        "--trials",
        "100",
        "--iterations",
        "0,1,2",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("sampler,n,qam,snr_db,iterations,trials,ber,ci_halfwidth")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6 * 3);
    let mut zero = Vec::new();
    for r in &rows {
        let ber: f64 = r[6].parse().unwrap();
        assert!((0.0..=0.5).contains(&ber));
        if r[4] == "0" {
            zero.push(r[6]);
        }
    }
    assert!(zero.windows(2).all(|w| w[0] == w[1]), "{zero:?}");
    let meta = read_json(&dir.path().join("ber.csv.meta.json"));
    assert!(meta["orderings"]["gk_monotone"].is_boolean());
}

#[test]
fn config_files_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"version": 1, "command": "sample", "sampler": {"kind": "gk", "m": 2}, "iterations": [50], "seed": 4}"#,
    )
    .unwrap();
    let out = dir.path().join("s.csv");
    run_ok(&[
        "sample",
        "--config",
        cfg.to_str().unwrap(),
        "--iterations",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(read_samples(&out).len(), 20);
    assert_eq!(read_json(&dir.path().join("s.csv.meta.json"))["sampler"], "gk2");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"version": 1, "sigma": 1.0, "colour": "blue"}"#).unwrap();
    let out = dir.path().join("s.csv");
    let o = out.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["sample", "--config", cfg.to_str().unwrap(), "--out", o],
        vec!["sample", "--sigma", "-1", "--out", o],
        vec!["sample", "--sampler", "hmc", "--out", o],
        vec!["sample", "--basis", "7d", "--out", o],
        vec!["sample", "--center", "1,2,3", "--out", o],
        vec!["sample"],
        vec!["mimo", "--trials", "10"],
    ];
    for args in cases {
        let r = run(&args);
        assert_eq!(r.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&r.stderr).starts_with("error: "));
    }
    std::fs::write(&cfg, r#"{"version": 2}"#).unwrap();
    assert_eq!(
        run(&["diagnose", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn runtime_limits_exit_with_three() {
    let r = run(&["diagnose", "--box", "100"]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("StateSpaceTooLarge"));
}

#[test]
fn exhausted_block_retries_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let r = run(&[
        "sample",
        "--basis",
        "3d",
        "--sampler",
        "gk",
        "--m",
        "3",
        "--sigma",
        "0.3",
        "--center",
        "0.3,0.2,0.4",
        "--retry-cap",
        "1",
        "--iterations",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("RetryCapExceeded"));
}
