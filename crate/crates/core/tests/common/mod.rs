#![allow(dead_code)]

use lattice_gibbs::LatticeBasis;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `I + 0.3 diag(N) + 0.5 offdiag(N)` from a seeded stream.
pub fn random_basis(n: usize, seed: u64) -> LatticeBasis {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |i, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        if i == j {
            1.0 + 0.3 * z
        } else {
            0.5 * z
        }
    });
    LatticeBasis::new(m).unwrap()
}

/// Columns given as rows of the basis matrix `B`.
pub fn example_basis() -> LatticeBasis {
    LatticeBasis::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.1]]).unwrap()
}

/// `exp(-||Bx - c||^2 / 2 sigma^2)` with plain loops.
pub fn weight(b: &DMatrix<f64>, c: &[f64], sigma: f64, x: &[i64]) -> f64 {
    let mut d2 = 0.0;
    for i in 0..b.nrows() {
        let mut v = -c[i];
        for j in 0..b.ncols() {
            v += b[(i, j)] * x[j] as f64;
        }
        d2 += v * v;
    }
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Half the L1 distance between two weight maps.
pub fn tv_maps(a: &std::collections::HashMap<Vec<i64>, f64>, b: &std::collections::HashMap<Vec<i64>, f64>) -> f64 {
    let mut total = 0.0;
    for (k, &p) in a {
        total += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &q) in b {
        if !a.contains_key(k) {
            total += q;
        }
    }
    total / 2.0
}

pub fn frequencies(samples: &[Vec<i64>]) -> std::collections::HashMap<Vec<i64>, f64> {
    let mut out = std::collections::HashMap::new();
    for s in samples {
        *out.entry(s.clone()).or_insert(0.0) += 1.0;
    }
    let n = samples.len() as f64;
    out.values_mut().for_each(|v| *v /= n);
    out
}
