use perron_core::ergodicity::{power_triplet, PowerOptions};
use perron_core::model::{Kernel, ModelSpec, Potential};
use perron_core::oracle::{evolve_scaled, Action, ScaledVector, SemigroupOracle};
use perron_core::pde::PdeSemigroup;
use perron_core::spaces::Grid1D;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn band(a: Potential, kappa0: f64) -> ModelSpec {
    ModelSpec::new(a, Kernel::UniformBand { kappa0, eps: 1.0 }).unwrap()
}

fn random_pair(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mu = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (mu, f)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tv(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn duality_holds_over_ten_thousand_steps() {
    // a + Q_bar <= 0, so both actions are contractions and no rescaling is needed
    let s = PdeSemigroup::new(band(Potential::Quadratic { a_bar: -2.0, s: 1.0 }, 1.0), Grid1D::symmetric(8.0, 500).unwrap())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (mu, f) = random_pair(&mut rng, s.len());
        let mut m = mu.clone();
        let mut g = f.clone();
        let mut buf = vec![0.0; s.len()];
        let mut worst = 0.0_f64;
        for _ in 0..10_000 {
            s.apply_left(&m, &mut buf);
            std::mem::swap(&mut m, &mut buf);
            s.apply_right(&g, &mut buf);
            std::mem::swap(&mut g, &mut buf);
        }
        worst = worst.max((dot(&m, &f) - dot(&mu, &g)).abs());
        assert!(worst <= 1e-10 * tv(&mu) * sup(&f), "{worst}");
    }
}

#[test]
fn duality_relative_to_growth_on_compliant_model() {
    let s = PdeSemigroup::new(band(Potential::Quadratic { a_bar: 1.0, s: 1.0 }, 1.0), Grid1D::symmetric(8.0, 500).unwrap())
        .unwrap();
    let lambda = power_triplet(&s, 0.4, &PowerOptions::default()).unwrap().lambda;
    let steps = 10_000;
    let t = steps as f64 * s.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let (mu, f) = random_pair(&mut rng, s.len());
        let m = evolve_scaled(&s, Action::Left, ScaledVector::new(mu.clone()), steps);
        let g = evolve_scaled(&s, Action::Right, ScaledVector::new(f.clone()), steps);
        let a = dot(&m.values, &f) * (m.log_scale - lambda * t).exp();
        let b = dot(&mu, &g.values) * (g.log_scale - lambda * t).exp();
        assert!((a - b).abs() <= 1e-10 * tv(&mu) * sup(&f), "{a} {b}");
    }
}

#[test]
fn constant_rates_follow_gronwall() {
    // a = 1/2, Q(x, R) = 1: M_t 1 = e^{3t/2} away from the boundary
    let s = PdeSemigroup::new(band(Potential::Constant { a_bar: 0.5 }, 0.5), Grid1D::symmetric(60.0, 6000).unwrap()).unwrap();
    let x = s.grid().nearest(-15.0);
    let mut f = vec![1.0; s.len()];
    let mut buf = vec![0.0; s.len()];
    let dt = s.dt();
    for k in 1..=s.steps_for(10.0) {
        s.apply_right(&f, &mut buf);
        std::mem::swap(&mut f, &mut buf);
        let t = k as f64 * dt;
        let exact = (1.5 * t).exp();
        assert!((f[x] - exact).abs() <= 5.0 * dt * t * exact, "t = {t}: {} vs {exact}", f[x]);
    }
}

#[test]
fn direct_and_dual_steps_are_transposes() {
    let s = PdeSemigroup::new(band(Potential::Quadratic { a_bar: 1.0, s: 1.0 }, 1.0), Grid1D::symmetric(3.0, 60).unwrap()).unwrap();
    let n = s.len();
    let mut right = vec![vec![0.0; n]; n];
    let mut left = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let mut col = vec![0.0; n];
        s.apply_right(&e, &mut col);
        let mut row = vec![0.0; n];
        s.apply_left(&e, &mut row);
        for i in 0..n {
            right[i][j] = col[i];
            left[j][i] = row[i];
        }
    }
    for i in 0..n {
        for j in 0..n {
            assert!((right[i][j] - left[i][j]).abs() <= 1e-15 * right[i][j].abs().max(1.0));
        }
    }
}

#[test]
fn positivity_lemma_on_separated_windows() {
    let s = PdeSemigroup::new(band(Potential::Quadratic { a_bar: 1.0, s: 1.0 }, 1.0), Grid1D::symmetric(8.0, 800).unwrap()).unwrap();
    let eta = s.check_positivity_lemma(2.0, 2.5, -3.0, -2.0, 0.4).unwrap();
    assert!(eta > 0.0, "{eta}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_data_stays_positive(seed in 0u64..1000, steps in 1usize..200) {
        let s = PdeSemigroup::new(band(Potential::Quadratic { a_bar: 1.0, s: 0.5 }, 1.0), Grid1D::symmetric(4.0, 200).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = perron_core::oracle::evolve(&s, Action::Right, &f, steps);
        prop_assert!(g.iter().all(|v| *v >= 0.0));
        let m = perron_core::oracle::evolve(&s, Action::Left, &f, steps);
        prop_assert!(m.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn duality_on_small_grids(seed in 0u64..1000, n in 20usize..120, steps in 1usize..300) {
        let s = PdeSemigroup::new(band(Potential::Quadratic { a_bar: 0.0, s: 1.0 }, 0.5), Grid1D::symmetric(3.0, n).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mu, f) = random_pair(&mut rng, n);
        let m = perron_core::oracle::evolve(&s, Action::Left, &mu, steps);
        let g = perron_core::oracle::evolve(&s, Action::Right, &f, steps);
        prop_assert!((dot(&m, &f) - dot(&mu, &g)).abs() <= 1e-12 * tv(&mu) * sup(&f));
    }
}
