//! Lyapunov pair `(V, psi)` with `V = 1` and `psi = zeta^{-1} M_tau psi0`,
//! and cellwise checks of the drift conditions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::{evolve, evolve_scaled, Action, ScaledVector, SemigroupOracle};
use crate::pde::PdeSemigroup;

/// How `x0` (the half-width of `supp psi0`) is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum X0Choice {
    /// Use the given value.
    Fixed { x0: f64 },
    /// Iterate `x0 <- max(eps, sqrt(2) r0(x0))` starting from `sqrt(2) eps`.
    FixedPoint,
}

/// Which small set `K` and constant `theta` the construction carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    /// `K = {V <= R psi}`, `theta = theta0 zeta`.
    Level,
    /// `K = {M_tau V > alpha V}`, `theta = max_K (M_tau V - alpha V) / psi`:
    /// the smallest set and constant for which the upper drift holds on the grid.
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionOptions {
    pub x0: X0Choice,
    /// `R = r_factor * theta0 zeta / (e^{alpha0 tau} (e^tau - 1))`; must exceed 1.
    pub r_factor: f64,
    pub k_rule: KRule,
}

impl Default for ConstructionOptions {
    fn default() -> Self {
        Self { x0: X0Choice::FixedPoint, r_factor: 2.0, k_rule: KRule::Level }
    }
}

/// Constants and functions of the Lyapunov construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovConstruction {
    pub tau: f64,
    pub x0: f64,
    /// Largest `|x_i|` with `a(x_i) >= -Q_bar + alpha0`.
    pub r0: f64,
    /// Whether `x0 >= sqrt(2) r0`.
    pub r0_admissible: bool,
    pub inf_a: f64,
    pub beta0: f64,
    pub alpha0: f64,
    pub theta0: f64,
    /// `e^{(a_bar + Q_bar) tau}`, the bound with `M_tau V <= zeta V`.
    pub zeta: f64,
    /// `e^{-(a_bar + Q_bar) tau}`, reported for comparison.
    pub zeta_reciprocal: f64,
    pub r_bound: f64,
    pub big_r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub k_rule: KRule,
    /// Cell indices of `K`, increasing.
    pub k_cells: Vec<usize>,
    pub k_contiguous: bool,
    pub psi0: Vec<f64>,
    pub psi: Vec<f64>,
    pub v: Vec<f64>,
    /// `M_tau V`, kept for the realized rule and the drift checks.
    #[serde(skip)]
    pub mv: Vec<f64>,
}

impl LyapunovConstruction {
    pub fn k_range(&self) -> Option<(usize, usize)> {
        Some((*self.k_cells.first()?, *self.k_cells.last()?))
    }
}

/// `psi0(x) = ((1 - (x/x0)^2)_+)^2`.
pub fn psi0(x: f64, x0: f64) -> f64 {
    let u = 1.0 - (x / x0).powi(2);
    if u > 0.0 {
        u * u
    } else {
        0.0
    }
}

/// `psi0'(x) = -(4x/x0^2)(1 - (x/x0)^2)_+`.
pub fn psi0_prime(x: f64, x0: f64) -> f64 {
    let u = 1.0 - (x / x0).powi(2);
    if u > 0.0 {
        -4.0 * x / (x0 * x0) * u
    } else {
        0.0
    }
}

/// `int_{1-r}^1 (1-y)^2 (1+y)^2 dy` in closed form, `r^3 (20 - 15 r + 3 r^2) / 15`.
/// The polynomial part is exact in integers, so `r = 1` gives the nearest
/// double to `8/15`.
pub fn integral_identity(r: f64) -> f64 {
    r.powi(3) * (20.0 - 15.0 * r + 3.0 * r * r) / 15.0
}

/// The same integral by three-point Gauss-Legendre quadrature (exact for
/// quartics up to rounding).
pub fn integral_identity_quadrature(r: f64) -> f64 {
    let (a, b) = (1.0 - r, 1.0);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let node = (0.6f64).sqrt();
    let f = |y: f64| (1.0 - y).powi(2) * (1.0 + y).powi(2);
    half * (5.0 / 9.0 * f(mid - half * node) + 8.0 / 9.0 * f(mid) + 5.0 / 9.0 * f(mid + half * node))
}

fn beta0_for(s: &PdeSemigroup, x0: f64) -> (f64, f64) {
    let m = s.model();
    let inf_a = m.potential.inf_on(-x0, x0);
    let k0 = m.kappa0();
    let eps = m.eps();
    (-30.0 / (k0 * eps.powi(3)) + inf_a, inf_a)
}

fn r0_for(s: &PdeSemigroup, alpha0: f64) -> f64 {
    let q_bar = s.model().q_bar();
    let g = s.grid();
    (0..g.len())
        .filter(|&i| s.potential_values()[i] >= -q_bar + alpha0)
        .map(|i| g.center(i).abs())
        .fold(0.0, f64::max)
}

/// Build the construction: constants, `psi0`, `psi = zeta^{-1} M_tau psi0`
/// and the small set `K`.
pub fn build_construction(s: &PdeSemigroup, tau: f64, opts: &ConstructionOptions) -> Result<LyapunovConstruction> {
    let m = s.model();
    let g = *s.grid();
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    let eps = m.eps();
    let k0 = m.kappa0();
    if !(k0 > 0.0 && eps > 0.0) {
        return Err(Error::Construction(
            "the kernel has no band lower bound (kappa0 > 0 on (x - eps, x + eps)) required by psi0".into(),
        ));
    }
    if !(opts.r_factor > 1.0) {
        return invalid("r_factor must exceed 1 so that R is strictly above its bound");
    }
    let x0 = match opts.x0 {
        X0Choice::Fixed { x0 } => {
            if !(x0 >= eps) {
                return invalid(format!("x0 = {x0} must be at least eps = {eps}"));
            }
            x0
        }
        X0Choice::FixedPoint => {
            let mut x0 = eps.max(std::f64::consts::SQRT_2 * eps);
            let mut history = Vec::new();
            let edge = g.center(0).abs().min(g.center(g.len() - 1).abs());
            let mut done = false;
            for _ in 0..50 {
                let (beta0, _) = beta0_for(s, x0);
                let r0 = r0_for(s, beta0 - 1.0);
                if r0 >= edge - g.dx() || x0 > edge {
                    return Err(Error::NoAdmissibleRadius(format!(
                        "x0 iteration left the grid (x0 = {x0:.4}, r0 = {r0:.4}, grid edge {edge:.4})"
                    )));
                }
                let next = eps.max(std::f64::consts::SQRT_2 * r0);
                history.push(next);
                if (next - x0).abs() <= g.dx() {
                    x0 = next;
                    done = true;
                    break;
                }
                x0 = next;
            }
            if !done {
                return Err(Error::NoAdmissibleRadius(format!(
                    "x0 iteration did not settle in 50 steps (last values {:?})",
                    &history[history.len().saturating_sub(4)..]
                )));
            }
            x0
        }
    };
    let (beta0, inf_a) = beta0_for(s, x0);
    let alpha0 = beta0 - 1.0;
    let r0 = r0_for(s, alpha0);
    let r0_admissible = x0 >= std::f64::consts::SQRT_2 * r0;
    let a_bar = m.a_bar();
    let q_bar = m.q_bar();
    let theta0 = 4.0 * (a_bar + q_bar);
    let zeta = ((a_bar + q_bar) * tau).exp();
    let r_bound = theta0 * zeta / ((alpha0 * tau).exp() * (tau.exp() - 1.0));
    let big_r = opts.r_factor * r_bound;
    let alpha = (alpha0 * tau).exp() + theta0 * zeta / big_r;
    let beta = (beta0 * tau).exp();

    let centers = g.centers();
    let psi0v: Vec<f64> = centers.iter().map(|x| psi0(*x, x0)).collect();
    let steps = s.steps_for(tau);
    let m_psi0 = evolve(s, Action::Right, &psi0v, steps);
    let psi: Vec<f64> = m_psi0.iter().map(|v| v / zeta).collect();
    if let Some(i) = psi.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Construction(format!(
            "psi vanishes at x = {:.4}; the grid or tau is too small",
            g.center(i)
        )));
    }
    let v = vec![1.0; g.len()];
    let mv = evolve(s, Action::Right, &v, steps);

    let (k_cells, theta) = match opts.k_rule {
        KRule::Level => {
            let k: Vec<usize> = (0..g.len()).filter(|&i| v[i] <= big_r * psi[i]).collect();
            (k, theta0 * zeta)
        }
        KRule::Realized => {
            let k: Vec<usize> = (0..g.len()).filter(|&i| mv[i] > alpha * v[i]).collect();
            let theta = k.iter().map(|&i| (mv[i] - alpha * v[i]) / psi[i]).fold(0.0, f64::max);
            (k, theta)
        }
    };
    let k_contiguous = k_cells.windows(2).all(|w| w[1] == w[0] + 1);

    Ok(LyapunovConstruction {
        tau,
        x0,
        r0,
        r0_admissible,
        inf_a,
        beta0,
        alpha0,
        theta0,
        zeta,
        zeta_reciprocal: 1.0 / zeta,
        r_bound,
        big_r,
        alpha,
        beta,
        theta,
        k_rule: opts.k_rule,
        k_cells,
        k_contiguous,
        psi0: psi0v,
        psi,
        v,
        mv,
    })
}

/// One cellwise inequality check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub pass: bool,
    /// Cell with the smallest margin.
    pub worst_cell: Option<usize>,
    pub worst_x: Option<f64>,
    /// Smallest `rhs - lhs` (or `lhs - rhs` for lower bounds); negative means
    /// a violation before tolerance.
    pub margin: f64,
    pub tolerance_budget: f64,
}

impl ConditionReport {
    fn from_margins(condition: &str, margins: impl Iterator<Item = (usize, f64)>, tol: f64, x: impl Fn(usize) -> f64) -> Self {
        let mut worst: Option<(usize, f64)> = None;
        for (i, m) in margins {
            if worst.is_none_or(|(_, w)| m < w) {
                worst = Some((i, m));
            }
        }
        let (cell, margin) = match worst {
            Some((i, m)) => (Some(i), m),
            None => (None, f64::INFINITY),
        };
        Self {
            condition: condition.to_string(),
            pass: margin >= -tol,
            worst_cell: cell,
            worst_x: cell.map(x),
            margin,
            tolerance_budget: tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorDriftReport {
    /// `L psi0 >= beta0 psi0`.
    pub lower: ConditionReport,
    /// `L V <= alpha0 V + theta0 psi0`.
    pub upper: ConditionReport,
    pub identity_at_one: f64,
    pub identity_at_one_quadrature: f64,
    pub pass: bool,
}

/// Evaluate `L psi0` and `L V` cellwise.
///
/// The budget covers the midpoint quadrature of the kernel term: interior
/// cells contribute `dx^2 / 24 sup|psi0''|` per unit length and the two partial
/// end cells `dx^2 sup|psi0'|`.
pub fn check_generator_drift(s: &PdeSemigroup, c: &LyapunovConstruction) -> Result<GeneratorDriftReport> {
    let g = *s.grid();
    let centers = g.centers();
    let dx = g.dx();
    let x0 = c.x0;
    let d_psi0: Vec<f64> = centers.iter().map(|x| psi0_prime(*x, x0)).collect();
    let l_psi0 = s.generator(&c.psi0, &d_psi0);
    let zeros = vec![0.0; g.len()];
    let l_v = s.generator(&c.v, &zeros);
    let (lo, hi) = s.model().kernel.support();
    let kernel_peak = s.stencil().weights.iter().copied().fold(0.0, f64::max) / dx;
    let budget = 1e-8
        + kernel_peak * ((hi - lo) * dx * dx / 24.0 * 8.0 / (x0 * x0) + 2.0 * dx * dx * 1.54 / x0);
    let lower = ConditionReport::from_margins(
        "L psi0 >= beta0 psi0",
        (0..g.len()).map(|i| (i, l_psi0[i] - c.beta0 * c.psi0[i])),
        budget,
        |i| g.center(i),
    );
    let upper = ConditionReport::from_margins(
        "L V <= alpha0 V + theta0 psi0",
        (0..g.len()).map(|i| (i, c.alpha0 * c.v[i] + c.theta0 * c.psi0[i] - l_v[i])),
        1e-8,
        |i| g.center(i),
    );
    let pass = lower.pass && upper.pass;
    Ok(GeneratorDriftReport {
        lower,
        upper,
        identity_at_one: integral_identity(1.0),
        identity_at_one_quadrature: integral_identity_quadrature(1.0),
        pass,
    })
}

/// Two-sided comparability of `M_s V` with `V` and `M_s psi` with `psi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparabilityReport {
    pub sample_times: Vec<f64>,
    /// `sup_{s, x} M_s V / V`.
    pub v_upper: f64,
    /// `inf_{s, x} M_s psi / psi`.
    pub psi_lower: f64,
    /// `sup_{s, x} M_s V / (e^{(a_bar + Q_bar) s} V)`; at most `1 + 10 dt`.
    pub gronwall_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemigroupDriftReport {
    /// `M_tau V <= alpha V + theta 1_K psi`.
    pub upper: ConditionReport,
    /// `M_tau psi >= beta psi`, in log form.
    pub lower: ConditionReport,
    /// `M_{2 tau} psi0 >= e^{beta0 tau} M_tau psi0`, in log form.
    pub lower_psi0: ConditionReport,
    /// Both formulations of the lower drift give the same verdict.
    pub formulations_agree: bool,
    pub comparability: ComparabilityReport,
    /// Cells outside `K` exist at both ends of the grid.
    pub k_bounded: bool,
    pub pass: bool,
}

/// Relative tolerance of semigroup-level checks: `1e-8 + dx`.
fn relative_budget(dx: f64) -> f64 {
    1e-8 + dx
}

/// Check the upper and lower drift conditions and the comparability bounds
/// on the grid.
pub fn check_semigroup_drift(s: &PdeSemigroup, c: &LyapunovConstruction) -> Result<SemigroupDriftReport> {
    let g = *s.grid();
    let n = g.len();
    if c.psi.len() != n {
        return Err(Error::GridMismatch("construction was built on another grid".into()));
    }
    let steps = s.steps_for(c.tau);
    let dx = g.dx();
    let rel = relative_budget(dx);
    let mut in_k = vec![false; n];
    for &i in &c.k_cells {
        in_k[i] = true;
    }
    let mv = evolve(s, Action::Right, &c.v, steps);
    // relative margin of M V <= alpha V + theta 1_K psi
    let upper = ConditionReport::from_margins(
        "M_tau V <= alpha V + theta 1_K psi",
        (0..n).map(|i| {
            let rhs = c.alpha * c.v[i] + if in_k[i] { c.theta * c.psi[i] } else { 0.0 };
            (i, (rhs - mv[i]) / rhs)
        }),
        rel,
        |i| g.center(i),
    );
    let m_psi = evolve(s, Action::Right, &c.psi, steps);
    let log_beta = c.beta0 * c.tau;
    let lower = ConditionReport::from_margins(
        "M_tau psi >= beta psi",
        (0..n).map(|i| (i, m_psi[i].ln() - c.psi[i].ln() - log_beta)),
        rel,
        |i| g.center(i),
    );
    // M_{2 tau} psi0 = zeta M_tau psi, M_tau psi0 = zeta psi
    let lower_psi0 = ConditionReport::from_margins(
        "M_2tau psi0 >= e^{beta0 tau} M_tau psi0",
        (0..n).map(|i| (i, (c.zeta * m_psi[i]).ln() - (c.zeta * c.psi[i]).ln() - log_beta)),
        rel,
        |i| g.center(i),
    );
    let formulations_agree = lower.pass == lower_psi0.pass;

    let n_samples = 8;
    let mut sample_times = Vec::new();
    let mut v_upper = 0.0_f64;
    let mut psi_lower = f64::INFINITY;
    let mut gronwall_ratio = 0.0_f64;
    let growth = s.model().a_bar() + s.model().q_bar();
    let mut cur_v = c.v.clone();
    let mut cur_psi = c.psi.clone();
    let mut done = 0usize;
    for k in 1..=n_samples {
        let target = (steps * k) / n_samples;
        let more = target - done;
        cur_v = evolve(s, Action::Right, &cur_v, more);
        cur_psi = evolve(s, Action::Right, &cur_psi, more);
        done = target;
        let t = done as f64 * s.dt();
        sample_times.push(t);
        for i in 0..n {
            v_upper = v_upper.max(cur_v[i] / c.v[i]);
            psi_lower = psi_lower.min(cur_psi[i] / c.psi[i]);
            gronwall_ratio = gronwall_ratio.max(cur_v[i] / ((growth * t).exp() * c.v[i]));
        }
    }
    let comparability = ComparabilityReport {
        sample_times,
        v_upper,
        psi_lower,
        gronwall_ratio,
        pass: v_upper.is_finite() && psi_lower > 0.0 && gronwall_ratio <= 1.0 + 10.0 * s.dt(),
    };
    let k_bounded = c.k_range().is_some_and(|(a, b)| a > 0 && b + 1 < n);
    let pass = upper.pass && lower.pass && comparability.pass && k_bounded;
    Ok(SemigroupDriftReport { upper, lower, lower_psi0, formulations_agree, comparability, k_bounded, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IteratedBoundReport {
    pub k_max: usize,
    pub pass: bool,
    /// Worst relative margin per `k`.
    pub margins: Vec<f64>,
    pub first_violation: Option<(usize, usize)>,
    /// `max_K (M_{k tau} V / M_{k tau} psi)` at `k_max` over `theta / (beta - alpha)`.
    pub terminal_ratio_on_k: f64,
    pub tolerance_budget: f64,
}

/// Check `M_{k tau} V / M_{k tau} psi <= (alpha/beta)^k V/psi + theta/(beta - alpha)`
/// for `k = 1..=k_max`, in log form.
pub fn check_iterated_bound(s: &PdeSemigroup, c: &LyapunovConstruction, k_max: usize) -> Result<IteratedBoundReport> {
    if !(c.alpha < c.beta) {
        return Err(Error::CheckFailed(format!("alpha = {} is not below beta = {}", c.alpha, c.beta)));
    }
    let g = *s.grid();
    let n = g.len();
    let steps = s.steps_for(c.tau);
    let rel = relative_budget(g.dx());
    let ln_q = (c.alpha / c.beta).ln();
    let plateau = c.theta / (c.beta - c.alpha);
    let mut v = ScaledVector::new(c.v.clone());
    let mut p = ScaledVector::new(c.psi.clone());
    let mut margins = Vec::with_capacity(k_max);
    let mut first_violation = None;
    let mut terminal_ratio_on_k = 0.0;
    for k in 1..=k_max {
        v = evolve_scaled(s, Action::Right, v, steps);
        p = evolve_scaled(s, Action::Right, p, steps);
        let shift = v.log_scale - p.log_scale;
        let mut worst = f64::INFINITY;
        let mut worst_cell = 0;
        for i in 0..n {
            let lhs = (v.values[i] / p.values[i]).ln() + shift;
            let geometric = k as f64 * ln_q + (c.v[i] / c.psi[i]).ln();
            let rhs = log_add(geometric, plateau.ln());
            let m = rhs - lhs;
            if m < worst {
                worst = m;
                worst_cell = i;
            }
        }
        if worst < -rel && first_violation.is_none() {
            first_violation = Some((k, worst_cell));
        }
        margins.push(worst);
        if k == k_max {
            terminal_ratio_on_k = c
                .k_cells
                .iter()
                .map(|&i| ((v.values[i] / p.values[i]).ln() + shift).exp() / plateau)
                .fold(0.0, f64::max);
        }
    }
    Ok(IteratedBoundReport {
        k_max,
        pass: first_violation.is_none(),
        margins,
        first_violation,
        terminal_ratio_on_k,
        tolerance_budget: rel,
    })
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Kernel, ModelSpec, Potential};
    use crate::spaces::Grid1D;
    use approx::assert_relative_eq;

    fn semigroup(a: Potential, n: usize) -> PdeSemigroup {
        let m = ModelSpec::new(a, Kernel::UniformBand { kappa0: 1.0, eps: 1.0 }).unwrap();
        PdeSemigroup::new(m, Grid1D::symmetric(8.0, n).unwrap()).unwrap()
    }

    #[test]
    fn beta0_example() {
        let s = semigroup(Potential::Quadratic { a_bar: 0.0, s: 1.0 }, 400);
        let opts = ConstructionOptions { x0: X0Choice::Fixed { x0: 2.0 }, ..Default::default() };
        let c = build_construction(&s, 0.4, &opts).unwrap();
        assert_relative_eq!(c.beta0, -34.0, epsilon = 1e-12);
        assert_relative_eq!(c.alpha0, -35.0, epsilon = 1e-12);
    }

    #[test]
    fn psi0_values() {
        assert_eq!(psi0(0.0, 2.0), 1.0);
        assert_eq!(psi0(2.0, 2.0), 0.0);
        assert_eq!(psi0(-2.0, 2.0), 0.0);
        assert_relative_eq!(psi0(2.0 / 2f64.sqrt(), 2.0), 0.25, epsilon = 1e-15);
        assert_eq!(psi0(3.0, 2.0), 0.0);
    }

    #[test]
    fn theta0_example() {
        let m = ModelSpec::new(
            Potential::Quadratic { a_bar: 1.0, s: 1.0 },
            Kernel::UniformBand { kappa0: 0.5, eps: 1.0 },
        )
        .unwrap();
        let s = PdeSemigroup::new(m, Grid1D::symmetric(8.0, 400).unwrap()).unwrap();
        let opts = ConstructionOptions { x0: X0Choice::Fixed { x0: 2.0 }, ..Default::default() };
        let c = build_construction(&s, 0.4, &opts).unwrap();
        assert_relative_eq!(c.theta0, 8.0);
    }

    #[test]
    fn identity_values() {
        assert_relative_eq!(integral_identity(1.0), 8.0 / 15.0, epsilon = 1e-15);
        assert!((integral_identity_quadrature(1.0) - 8.0 / 15.0).abs() < 1e-12);
        assert_relative_eq!(integral_identity(0.5), 53.0 / 480.0, epsilon = 1e-15);
        assert!(integral_identity(0.5) >= 1.0 / 15.0);
        for k in 1..=20 {
            let r = k as f64 / 20.0;
            assert!((integral_identity_quadrature(r) - integral_identity(r)).abs() < 1e-14);
            assert!(integral_identity(r) >= 8.0 * r.powi(3) / 15.0 - 1e-15);
        }
    }

    #[test]
    fn psi0_derivative_matches_finite_differences() {
        let x0 = 1.7;
        for k in 0..40 {
            let x = -2.0 + 0.1 * k as f64;
            let h = 1e-6;
            let fd = (psi0(x + h, x0) - psi0(x - h, x0)) / (2.0 * h);
            assert!((fd - psi0_prime(x, x0)).abs() < 1e-5, "x = {x}");
        }
    }

    #[test]
    fn psi0_symmetric_on_symmetric_grid() {
        let g = Grid1D::symmetric(8.0, 400).unwrap();
        let c = g.centers();
        for i in 0..200 {
            assert_relative_eq!(psi0(c[i], 2.5), psi0(c[399 - i], 2.5), epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_point_diverges_for_confining_quadratic() {
        let s = semigroup(Potential::Quadratic { a_bar: 1.0, s: 1.0 }, 400);
        let err = build_construction(&s, 0.4, &ConstructionOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoAdmissibleRadius(_)), "{err}");
    }

    #[test]
    fn alpha_below_beta() {
        let s = semigroup(Potential::Quadratic { a_bar: 1.0, s: 1.0 }, 400);
        for x0 in [1.0, 2.0, 3.0] {
            let opts = ConstructionOptions { x0: X0Choice::Fixed { x0 }, ..Default::default() };
            let c = build_construction(&s, 0.4, &opts).unwrap();
            assert!(c.alpha < c.beta);
            assert!(c.psi.iter().all(|p| *p > 0.0));
            assert!(c.psi.iter().all(|p| *p <= 1.0));
        }
    }

    #[test]
    fn enlarging_r_keeps_upper_drift() {
        let s = semigroup(Potential::Quadratic { a_bar: 1.0, s: 1.0 }, 400);
        let mut prev_alpha = f64::INFINITY;
        for r_factor in [2.0, 4.0, 8.0] {
            let opts = ConstructionOptions { x0: X0Choice::Fixed { x0: 2.0 }, r_factor, k_rule: KRule::Realized };
            let c = build_construction(&s, 0.4, &opts).unwrap();
            assert!(c.alpha < prev_alpha);
            prev_alpha = c.alpha;
            let r = check_semigroup_drift(&s, &c).unwrap();
            assert!(r.upper.pass, "{:?}", r.upper);
        }
    }
}
