use nalgebra::DMatrix;
use perron_core::finite::{
    hitting_law, matrix_exponential, perron_triplet_finite, rotation_chain, verify_h1, verify_h2, FiniteGenerator,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_state() -> FiniteGenerator {
    FiniteGenerator::conservative(&[vec![0.0, 1.0, 2.0], vec![0.5, 0.0, 1.5], vec![3.0, 0.7, 0.0]]).unwrap()
}

/// Stationary law by solving `pi L = 0`, `sum pi = 1` directly.
fn stationary_law(g: &FiniteGenerator) -> Vec<f64> {
    let n = g.n_states();
    let l = g.matrix();
    let mut a = l.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn conservative_triplet_is_stationary_law() {
    let g = three_state();
    let tr = perron_triplet_finite(&g, 1.0).unwrap();
    assert!(tr.lambda.abs() < 1e-10, "lambda = {}", tr.lambda);
    assert!(tr.h.iter().all(|h| (h - 1.0).abs() < 1e-12));
    let pi = stationary_law(&g);
    let tv: f64 = tr.gamma.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
    assert!(tv < 1e-12, "tv = {tv}");
}

#[test]
fn triplet_residuals_are_small() {
    let g = FiniteGenerator::new(&[vec![0.0, 1.0, 0.2], vec![0.4, 0.0, 2.0], vec![1.0, 0.1, 0.0]], vec![0.3, -1.0, 0.5])
        .unwrap();
    let tr = perron_triplet_finite(&g, 0.7).unwrap();
    assert!(tr.residual_h < 1e-10 && tr.residual_gamma < 1e-10, "{tr:?}");
    let gh: f64 = tr.gamma.iter().zip(&tr.h).map(|(a, b)| a * b).sum();
    assert!((gh - 1.0).abs() < 1e-12);
    let top = tr.h.iter().copied().fold(0.0, f64::max);
    assert!((top - 1.0).abs() < 1e-15);
    // dominant eigenvalue of L from a dense eigen-solver
    let eig = g.matrix().complex_eigenvalues();
    let best = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    assert!((tr.lambda - best).abs() < 1e-10);
}

#[test]
fn near_deterministic_two_cycle_still_converges() {
    let g = FiniteGenerator::conservative(&[vec![0.0, 50.0], vec![50.0, 0.0]]).unwrap();
    let tr = perron_triplet_finite(&g, 0.05).unwrap();
    assert!(tr.lambda.abs() < 1e-10);
}

#[test]
fn first_return_matches_monte_carlo() {
    let q = 1.0;
    let tau = 4.0;
    let g = FiniteGenerator::conservative(&[vec![0.0, q], vec![q, 0.0]]).unwrap();
    let law = hitting_law(&g, 0, 0, tau, 1025).unwrap();
    // conditioned cdf from the trapezoid weights, linearly interpolated
    let mut cdf = vec![0.0];
    for w in law.weights.windows(2) {
        let last = *cdf.last().unwrap();
        cdf.push(last + (w[0] + w[1]) / 2.0);
    }
    let total = *cdf.last().unwrap();
    let h = tau / 1024.0;
    let model_cdf = |t: f64| {
        let k = ((t / h) as usize).min(1023);
        let frac = t / h - k as f64;
        (cdf[k] + frac * (cdf[k + 1] - cdf[k])) / total
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut samples = Vec::new();
    while samples.len() < 1_000_000 {
        let leave = -rng.gen::<f64>().ln() / q;
        let back = -rng.gen::<f64>().ln() / q;
        let t = leave + back;
        if t <= tau {
            samples.push(t);
        }
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = samples.len() as f64;
    let ks = samples
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = model_cdf(t);
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "ks = {ks}");
}

#[test]
fn all_to_all_chain_passes_h1_and_h2() {
    let r = verify_h1(&three_state(), 1.0, 256).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.constants.c > 0.0);
    assert!(r.constants.mass_bound >= 1.0);
    let margin = verify_h2(&r.laws).unwrap();
    assert!(margin > 1e-6, "margin = {margin}");
}

#[test]
fn h1_inequality_recertified_independently() {
    let g = three_state();
    let tau = 1.0;
    let n_time = 256;
    let r = verify_h1(&g, tau, n_time).unwrap();
    let c = r.constants.c;
    let h = tau / (n_time - 1) as f64;
    let lhs = matrix_exponential(&g, tau).unwrap();
    for x in 0..3 {
        for y in 0..3 {
            let law = r.law(x, y);
            for z in 0..3 {
                let rhs: f64 = law
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| {
                        let s = j as f64 * h;
                        w * matrix_exponential(&g, tau - s).unwrap().get(y, z)
                    })
                    .sum();
                assert!(lhs.get(x, z) >= c * rhs - 1e-9, "({x},{y},{z})");
            }
        }
    }
}

#[test]
fn rotation_chain_h2_margin_vanishes() {
    let mut margins = Vec::new();
    for n in [64, 128] {
        let g = rotation_chain(n).unwrap();
        let r = verify_h1(&g, 1.5, 256).unwrap();
        let m = verify_h2(&r.laws).unwrap();
        margins.push(m);
    }
    assert!(margins[0] < 0.2, "{margins:?}");
    assert!(margins[1] < 0.1, "{margins:?}");
    assert!(margins[1] < margins[0]);
}

fn random_generator(seed: u64, n: usize) -> FiniteGenerator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect()).collect();
    let extra = (0..n).map(|_| rng.gen_range(-1.0..0.5)).collect();
    FiniteGenerator::new(&rates, extra).unwrap()
}

#[test]
fn semigroup_law_on_random_generators() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..50 {
        let g = random_generator(k, 5);
        let s = rng.gen_range(0.0..5.0);
        let t = rng.gen_range(0.0..5.0);
        let a = matrix_exponential(&g, s + t).unwrap();
        let b = matrix_exponential(&g, s).unwrap().compose(&matrix_exponential(&g, t).unwrap());
        let scale = a.to_dmatrix().max().max(1.0);
        assert!(a.max_abs_diff(&b) < 1e-10 * scale, "k={k} diff={}", a.max_abs_diff(&b));
    }
}

#[test]
fn mass_bounds_hold() {
    for k in 0..20 {
        let g = random_generator(100 + k, 5);
        let a_min = g.diag_extra().iter().copied().fold(f64::INFINITY, f64::min);
        let a_max = g.diag_extra().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let q_max = (0..5).map(|i| g.exit_rate(i)).fold(0.0, f64::max);
        for s in [0.1, 1.0, 10.0] {
            let m = matrix_exponential(&g, s).unwrap();
            for r in m.row_sums() {
                assert!(r >= (s * a_min).exp() * (1.0 - 1e-12));
                assert!(r <= (s * (a_max + q_max)).exp() * (1.0 + 1e-12));
            }
        }
    }
}

proptest! {
    #[test]
    fn exponential_is_nonnegative(seed in 0u64..10_000, t in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let g = random_generator(seed, 4);
        let m = matrix_exponential(&g, t).unwrap();
        prop_assert!(m.to_dmatrix().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn conservative_rows_sum_to_one(seed in 0u64..10_000, t in 0.0f64..10.0) {
        let g = random_generator(seed, 4).conservative_part();
        let m = matrix_exponential(&g, t).unwrap();
        for r in m.row_sums() {
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn dense_reference_exponential() {
    // eigen-decomposition of a symmetric generator as an independent reference
    let rates = vec![vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 2.0], vec![0.5, 2.0, 0.0]];
    let g = FiniteGenerator::conservative(&rates).unwrap();
    let l = g.matrix();
    let eig = l.clone().symmetric_eigen();
    let t = 0.8;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| (v * t).exp()));
    let reference = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    let m = matrix_exponential(&g, t).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((m.get(i, j) - reference[(i, j)]).abs() < 1e-13);
        }
    }
}
