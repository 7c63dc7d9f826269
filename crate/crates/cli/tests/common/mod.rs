#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lattice-gibbs"))
        .args(args)
        .env("LATTICE_GIBBS_THREADS", "2")
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read_samples(path: &Path) -> Vec<Vec<i64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn builtin_2d() -> [[f64; 2]; 2] {
    [[1.0, 0.5], [0.0, 1.1]]
}

/// Normalized weights of the 2-D target on `[-r, r]^2`, plain loops.
pub fn target_2d(b: [[f64; 2]; 2], c: [f64; 2], sigma: f64, r: i64) -> Vec<([i64; 2], f64)> {
    let mut out = Vec::new();
    for x0 in -r..=r {
        for x1 in -r..=r {
            let mut d2 = 0.0;
            for i in 0..2 {
                let v = b[i][0] * x0 as f64 + b[i][1] * x1 as f64 - c[i];
                d2 += v * v;
            }
            out.push(([x0, x1], (-d2 / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    out.iter_mut().for_each(|p| p.1 /= total);
    out
}

/// TV between the empirical law of `samples` and `target`; samples off the grid count as mismatch.
pub fn empirical_tv(samples: &[Vec<i64>], target: &[([i64; 2], f64)]) -> f64 {
    let mut counts = std::collections::BTreeMap::<[i64; 2], f64>::new();
    for s in samples {
        *counts.entry([s[0], s[1]]).or_default() += 1.0 / samples.len() as f64;
    }
    let mut tv = 0.0;
    for (x, p) in target {
        tv += (counts.remove(x).unwrap_or(0.0) - p).abs();
    }
    tv += counts.values().sum::<f64>();
    0.5 * tv
}
