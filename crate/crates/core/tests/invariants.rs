//! Property checks over the numeric kernels and losses.

use camoe_core::kernels::{cosine_sim, softmax, softmax_slice};
use camoe_core::loss::{dsl_loss, symmetric_ce, LossConfig, SimilarityMatrix};
use camoe_core::rng::Rng;
use camoe_core::{Matrix, Vector};
use proptest::prelude::*;

#[test]
fn softmax_simplex_over_ten_thousand_random_vectors() {
    let mut rng = Rng::new(12345);
    for trial in 0..10_000usize {
        let dim = 1 + trial % 64;
        let xs: Vec<f64> = (0..dim).map(|_| rng.uniform(-30.0, 30.0)).collect();
        let out = softmax_slice(&xs).unwrap();
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12, "trial {trial}: sum {sum}");
        assert!(out.iter().all(|&p| p >= 0.0));
        // order preservation: argmax of input equals argmax of output
        let arg_in = (0..dim).max_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap()).unwrap();
        let arg_out = (0..dim).max_by(|&a, &b| out[a].partial_cmp(&out[b]).unwrap()).unwrap();
        assert_eq!(arg_in, arg_out, "trial {trial}");
    }
}

proptest! {
    #[test]
    fn softmax_shift_invariance(xs in prop::collection::vec(-50.0f64..50.0, 1..16), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
        let a = softmax_slice(&xs).unwrap();
        let b = softmax_slice(&shifted).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_symmetry(a in prop::collection::vec(-10.0f64..10.0, 2..8), bseed in 0u64..1000) {
        let mut rng = Rng::new(bseed);
        let b: Vec<f64> = (0..a.len()).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let va = Vector::new(a).unwrap();
        let vb = Vector::new(b).unwrap();
        let norm = |v: &Vector| v.as_slice().iter().map(|x| x * x).sum::<f64>();
        prop_assume!(norm(&va) > 1e-12 && norm(&vb) > 1e-12);
        let ab = cosine_sim(&va, &vb).unwrap();
        let ba = cosine_sim(&vb, &va).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-15);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn losses_invariant_under_batch_permutation(seed in 0u64..5000, n in 2usize..7) {
        let mut rng = Rng::new(seed);
        let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = SimilarityMatrix::from_matrix(Matrix::new(n, n, data.clone()).unwrap()).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut permuted = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                permuted[i * n + j] = data[order[i] * n + order[j]];
            }
        }
        let sp = SimilarityMatrix::from_matrix(Matrix::new(n, n, permuted).unwrap()).unwrap();
        let (a1, b1) = symmetric_ce(&s, 7.0).unwrap();
        let (a2, b2) = symmetric_ce(&sp, 7.0).unwrap();
        prop_assert!((a1 - a2).abs() <= 1e-12);
        prop_assert!((b1 - b2).abs() <= 1e-12);
        let cfg = LossConfig { dsl_enabled: true, temperature: 5.0, ..LossConfig::default() };
        let (d1, e1) = dsl_loss(&s, &cfg).unwrap();
        let (d2, e2) = dsl_loss(&sp, &cfg).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12);
        prop_assert!((e1 - e2).abs() <= 1e-12);
    }

    #[test]
    fn dsl_tiny_temperature_matches_scaled_symmetric(seed in 0u64..2000, n in 2usize..6) {
        let mut rng = Rng::new(seed);
        let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = SimilarityMatrix::from_matrix(Matrix::new(n, n, data).unwrap()).unwrap();
        let cfg = LossConfig {
            log_logit_scale: 1.2f64.ln(),
            temperature: 1e-8,
            dsl_enabled: true,
            ..LossConfig::default()
        };
        let (dv, dt) = dsl_loss(&s, &cfg).unwrap();
        let (sv, st) = symmetric_ce(&s, 1.2 / n as f64).unwrap();
        prop_assert!((dv - sv).abs() < 1e-6);
        prop_assert!((dt - st).abs() < 1e-6);
    }
}

#[test]
fn softmax_matrix_wrapper_matches_slice() {
    let v = Vector::new(vec![0.5, -0.25, 3.0]).unwrap();
    let a = softmax(&v).unwrap();
    let b = softmax_slice(v.as_slice()).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
}
