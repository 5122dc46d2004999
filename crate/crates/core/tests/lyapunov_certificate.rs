use perron_core::ergodicity::estimate_d_and_ctilde;
use perron_core::lyapunov::{
    build_construction, check_generator_drift, check_semigroup_drift, check_iterated_bound, integral_identity,
    integral_identity_quadrature, psi0, ConstructionOptions, KRule, X0Choice,
};
use perron_core::model::{Kernel, ModelSpec, Potential};
use perron_core::pde::PdeSemigroup;
use perron_core::sigma::{verify_h1prime_h2prime, CertificationOptions};
use perron_core::spaces::Grid1D;
use perron_core::Error;
use proptest::prelude::*;

fn compliant() -> PdeSemigroup {
    let q = ModelSpec::new(Potential::Quadratic { a_bar: 1.0, s: 1.0 }, Kernel::UniformBand { kappa0: 1.0, eps: 1.0 }).unwrap();
    PdeSemigroup::new(q, Grid1D::symmetric(8.0, 2000).unwrap()).unwrap()
}

fn options(k_rule: KRule) -> ConstructionOptions {
    ConstructionOptions { x0: X0Choice::Fixed { x0: 2.0 }, r_factor: 2.0, k_rule }
}

#[test]
fn identity_at_one() {
    assert_eq!(integral_identity(1.0), 8.0 / 15.0);
    assert!((integral_identity_quadrature(1.0) - 8.0 / 15.0).abs() <= 1e-12);
}

#[test]
fn generator_drift_on_compliant_model() {
    let s = compliant();
    let con = build_construction(&s, 0.4, &options(KRule::Realized)).unwrap();
    assert!((con.beta0 + 33.0).abs() < 1e-12);
    let report = check_generator_drift(&s, &con).unwrap();
    assert!(report.lower.pass, "{:?}", report.lower);
    // L V = a + Q_bar = 2 - x^2 exceeds alpha0 + theta0 psi0 near the origin
    assert!(!report.upper.pass);
    assert!(report.upper.worst_x.unwrap().abs() < con.x0);
}

#[test]
fn fixed_point_radius_is_not_admissible_here() {
    let s = compliant();
    let err = build_construction(&s, 0.4, &ConstructionOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NoAdmissibleRadius(_)), "{err:?}");
}

#[test]
fn level_rule_misses_the_upper_drift() {
    let s = compliant();
    let con = build_construction(&s, 0.4, &options(KRule::Level)).unwrap();
    let report = check_semigroup_drift(&s, &con).unwrap();
    assert!(!report.upper.pass);
    assert!(report.lower.pass);
}

#[test]
fn realized_rule_certifies_the_compact_set() {
    let s = compliant();
    let con = build_construction(&s, 0.4, &options(KRule::Realized)).unwrap();
    assert!(con.alpha < con.beta);
    let (lo, hi) = con.k_range().unwrap();
    assert!(lo > 0 && hi + 1 < s.grid().len());
    assert!(con.k_contiguous);

    let drift = check_semigroup_drift(&s, &con).unwrap();
    assert!(drift.pass, "{drift:?}");
    assert!(drift.formulations_agree);
    let iterated = check_iterated_bound(&s, &con, 20).unwrap();
    assert!(iterated.pass, "{iterated:?}");
    assert_eq!(iterated.margins.len(), 20);

    let opts = CertificationOptions { level_cap: 32, ..Default::default() };
    let cert = verify_h1prime_h2prime(&s, &con, &opts).unwrap();
    assert!(cert.pass && cert.c > 0.0 && cert.eps_overlap > 0.0, "{cert:?}");
    let p = cert.samples.len();
    for i in 0..p {
        for k in 0..p {
            for j in 0..p {
                assert!(cert.m_values[i][i][j] >= cert.m_values[i][k][j] - 1e-15);
            }
        }
    }
    for i in 0..p {
        let (law, c) = cert.law(i, i);
        assert!(c > 0.0 && (law.total_mass() - 1.0).abs() < 1e-8);
    }

    let t_list = [0.4, 0.8, 2.0, 4.0];
    let mino = estimate_d_and_ctilde(&s, &con, &cert, &t_list, 10, 11).unwrap();
    assert!(mino.d > 0.0 && mino.d <= 1.0);
    assert_eq!(mino.pairs.len(), 10);
    assert!(mino.pass, "{mino:?}");
    for pair in &mino.pairs {
        assert!((pair.nu_mass - 1.0).abs() < 1e-8);
    }
}

#[test]
fn default_cap_rejects_the_compact_set() {
    let s = compliant();
    let con = build_construction(&s, 0.4, &options(KRule::Realized)).unwrap();
    assert!(verify_h1prime_h2prime(&s, &con, &CertificationOptions::default()).is_err());
}

proptest! {
    #[test]
    fn psi0_is_a_bump(x in -5.0f64..5.0, x0 in 0.5f64..4.0) {
        let v = psi0(x, x0);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v == 0.0, x.abs() >= x0);
    }

    #[test]
    fn identity_dominates_its_leading_term(r in 0.0f64..1.0) {
        prop_assert!(integral_identity(r) >= 8.0 * r.powi(3) / 15.0 - 1e-15);
        prop_assert!((integral_identity(r) - integral_identity_quadrature(r)).abs() <= 1e-12);
    }
}
