use lattice_gibbs::mimo::*;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Modified Gram-Schmidt on the columns.
fn gs_oracle(b: &DMatrix<f64>) -> Vec<f64> {
    let n = b.ncols();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| b.column(j).iter().copied().collect()).collect();
    let mut norms = Vec::new();
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = v[j].iter().zip(&v[k]).map(|(a, b)| a * b).sum();
            let nk: f64 = v[k].iter().map(|a| a * a).sum();
            let vk = v[k].clone();
            v[j].iter_mut().zip(&vk).for_each(|(a, b)| *a -= dot / nk * b);
        }
        norms.push(v[j].iter().map(|a| a * a).sum::<f64>().sqrt());
    }
    norms
}

#[test]
fn embedded_gram_schmidt_norms_match_oracle() {
    let inst = generate_instance(4, 16, 15.0, &mut ChaCha8Rng::seed_from_u64(31)).unwrap();
    let real = realize_lattice(&inst).unwrap();
    let scale = 2.0 * inst.qam.scale();
    let oracle = gs_oracle(&(embed_channel(&inst.channel) * scale));
    for (a, b) in real.basis.gs_norms().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn babai_is_imperfect_and_sampling_does_not_hurt() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut babai, mut sampled, mut symbols) = (0u64, 0u64, 0u64);
    for t in 0..200u64 {
        let inst = generate_instance(4, 16, 20.0, &mut rng).unwrap();
        let real = realize_lattice(&inst).unwrap();
        babai += inst.symbol_errors(&babai_round(&real).unwrap().coeffs);
        let mut srng = ChaCha8Rng::seed_from_u64(1000 + t);
        let det = detect(&real, &DetectorKind::Gibbs, 8, &DetectOptions::default(), &mut srng).unwrap();
        sampled += inst.symbol_errors(&det.best);
        symbols += 4;
    }
    assert!(babai < symbols);
    assert!(sampled <= babai);
}

#[test]
fn gk_detection_recovers_from_capped_blocks() {
    let inst = generate_instance(4, 16, 10.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let real = realize_lattice(&inst).unwrap();
    let opts = DetectOptions {
        sigma: None,
        retry_cap: 1,
    };
    let d = detect(
        &real,
        &DetectorKind::Gk { m: 3 },
        10,
        &opts,
        &mut ChaCha8Rng::seed_from_u64(9),
    )
    .unwrap();
    assert!(d.distance <= d.history[0].1);
}

#[test]
fn detection_is_reproducible() {
    let inst = generate_instance(3, 64, 18.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let real = realize_lattice(&inst).unwrap();
    let kind = DetectorKind::Pt {
        temps: vec![1.0, 2.0],
        swap_stride: 1,
    };
    let a = detect(
        &real,
        &kind,
        5,
        &DetectOptions::default(),
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap();
    let b = detect(
        &real,
        &kind,
        5,
        &DetectOptions::default(),
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap();
    assert_eq!(a, b);
    assert!(a.best.iter().all(|&v| (0..8).contains(&v)));
}
