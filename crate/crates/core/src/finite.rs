//! Finite state spaces: matrix semigroups `exp(tL)`, phase-type hitting-time
//! laws and exact checks of the global path-crossing and aperiodicity
//! conditions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::ergodicity::{power_triplet, Eigentriplet, PowerOptions};
use crate::oracle::SemigroupOracle;
use crate::spaces::{trapezoid_weights, tv_distance_time_measures, uniform_time_nodes, TimeMeasure};

/// Generator of a finite Markov chain plus a multiplicative potential.
///
/// The full generator is `L = Q - diag(row sums of Q) + diag(diag_extra)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGenerator {
    n_states: usize,
    /// Row-major jump rates; the diagonal is stored as zero.
    off_diag: Vec<f64>,
    diag_extra: Vec<f64>,
}

impl FiniteGenerator {
    /// Build from a dense rate matrix (diagonal entries ignored) and a
    /// potential per state.
    pub fn new(rates: &[Vec<f64>], diag_extra: Vec<f64>) -> Result<Self> {
        let n = rates.len();
        if n == 0 {
            return invalid("generator needs at least one state");
        }
        if diag_extra.len() != n {
            return invalid(format!("diag_extra has {} entries, expected {n}", diag_extra.len()));
        }
        let mut off_diag = vec![0.0; n * n];
        for (i, row) in rates.iter().enumerate() {
            if row.len() != n {
                return invalid(format!("rate matrix row {i} has {} entries, expected {n}", row.len()));
            }
            for (j, &q) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                if !(q.is_finite() && q >= 0.0) {
                    return invalid(format!("rate q({i}->{j}) = {q} must be finite and nonnegative"));
                }
                off_diag[i * n + j] = q;
            }
        }
        if diag_extra.iter().any(|a| !a.is_finite()) {
            return invalid("diag_extra must be finite");
        }
        Ok(Self { n_states: n, off_diag, diag_extra })
    }

    /// Conservative generator (no potential).
    pub fn conservative(rates: &[Vec<f64>]) -> Result<Self> {
        Self::new(rates, vec![0.0; rates.len()])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.off_diag[i * self.n_states + j]
    }

    pub fn diag_extra(&self) -> &[f64] {
        &self.diag_extra
    }

    pub fn is_conservative(&self) -> bool {
        self.diag_extra.iter().all(|a| *a == 0.0)
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        let n = self.n_states;
        self.off_diag[i * n..(i + 1) * n].iter().sum()
    }

    /// Same jump rates, potential removed.
    pub fn conservative_part(&self) -> Self {
        Self { diag_extra: vec![0.0; self.n_states], ..self.clone() }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n_states;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag_extra[i] - self.exit_rate(i)
            } else {
                self.rate(i, j)
            }
        })
    }
}

/// `M_t` of a finite chain: `M_t f(x) = sum_z m_xz f(z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    n_states: usize,
    time: f64,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub(crate) fn from_dmatrix(m: &DMatrix<f64>, time: f64) -> Self {
        let n = m.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(m[(i, j)]);
            }
        }
        Self { n_states: n, time, entries }
    }

    pub fn identity(n_states: usize) -> Self {
        Self::from_dmatrix(&DMatrix::identity(n_states, n_states), 0.0)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n_states + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n_states..(i + 1) * self.n_states]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_states, self.n_states, &self.entries)
    }

    /// `M_s M_t = M_{s+t}`.
    pub fn compose(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let m = self.to_dmatrix() * other.to_dmatrix();
        Self::from_dmatrix(&m, self.time + other.time)
    }

    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_states).map(|i| self.row(i).iter().sum()).collect()
    }
}

impl SemigroupOracle for TransitionMatrix {
    fn len(&self) -> usize {
        self.n_states
    }

    fn time_step(&self) -> f64 {
        self.time
    }

    fn apply_right(&self, f: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(f).map(|(m, v)| m * v).sum();
        }
    }

    fn apply_left(&self, mu: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += m * a;
            }
        }
    }
}

const PADE_ORDER: usize = 8;

fn pade_coefficients() -> [f64; PADE_ORDER + 1] {
    let q = PADE_ORDER;
    let mut c = [0.0; PADE_ORDER + 1];
    c[0] = 1.0;
    for k in 1..=q {
        c[k] = c[k - 1] * (q + 1 - k) as f64 / ((k * (2 * q + 1 - k)) as f64);
    }
    c
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal `[8/8]` Padé
/// approximant. Rounding noise below zero is clipped.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let b = a / 2f64.powi(squarings as i32);
    let c = pade_coefficients();
    let mut num = DMatrix::identity(n, n) * c[0];
    let mut den = DMatrix::identity(n, n) * c[0];
    let mut power = DMatrix::identity(n, n);
    for (k, ck) in c.iter().enumerate().skip(1) {
        power = &power * &b;
        num += &power * *ck;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        den += &power * (sign * ck);
    }
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is nonsingular for scaled norms below 1/2");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// `M_t = exp(t L)` for a finite generator.
pub fn matrix_exponential(gen: &FiniteGenerator, t: f64) -> Result<TransitionMatrix> {
    if !(t.is_finite() && t >= 0.0) {
        return invalid(format!("time must be finite and nonnegative, got {t}"));
    }
    let mut m = expm(&(gen.matrix() * t));
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for v in m.iter_mut() {
        if *v < 0.0 {
            debug_assert!(*v > -1e-10 * scale.max(1.0), "negative entry {v} in exp(tL)");
            *v = 0.0;
        }
    }
    Ok(TransitionMatrix::from_dmatrix(&m, t))
}

/// `exp(tL)` by uniformization, `e^{-ct} sum_k (ct)^k/k! P^k` with
/// `P = I + L/c >= 0`, combined with squaring. Every intermediate quantity is
/// entrywise nonnegative.
pub fn uniformization(gen: &FiniteGenerator, t: f64) -> Result<TransitionMatrix> {
    if !(t.is_finite() && t >= 0.0) {
        return invalid(format!("time must be finite and nonnegative, got {t}"));
    }
    let n = gen.n_states();
    let l = gen.matrix();
    let c = (0..n).map(|i| -l[(i, i)]).fold(1e-300_f64, f64::max);
    let squarings = if c * t > 1.0 { (c * t).log2().ceil() as u32 } else { 0 };
    let h = t / 2f64.powi(squarings as i32);
    let p = DMatrix::identity(n, n) + &l / c;
    let ct = c * h;
    let mut term = DMatrix::identity(n, n);
    let mut weight = (-ct).exp();
    let mut acc = &term * weight;
    let mut k = 0usize;
    // Poisson(ct <= 1) tail below 1e-18 after ~20 terms; row sums of P^k stay bounded.
    while k < 60 {
        k += 1;
        term = &term * &p;
        weight *= ct / k as f64;
        acc += &term * weight;
        if weight < 1e-20 && k as f64 > ct {
            break;
        }
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    Ok(TransitionMatrix::from_dmatrix(&acc, t))
}

/// Law of the first hitting time `T(x, y)` (first return when `x = y`)
/// conditioned on `0 < T <= tau`, sampled on a uniform grid of `[0, tau]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingLaw {
    pub source: usize,
    pub target: usize,
    pub tau: f64,
    pub nodes: Vec<f64>,
    /// Unconditioned density of `T` at the nodes.
    pub density: Vec<f64>,
    /// Node masses of the conditioned law; sum to one when `p > 0`.
    pub weights: Vec<f64>,
    /// `P(0 < T <= tau)`.
    pub success_probability: f64,
}

impl HittingLaw {
    pub fn reachable(&self) -> bool {
        self.success_probability > 0.0 && self.weights.iter().any(|w| *w > 0.0)
    }

    pub fn time_measure(&self) -> Result<TimeMeasure> {
        TimeMeasure::from_weights(self.tau, self.nodes.clone(), self.weights.clone())
    }
}

/// Phase-type representation `(start, sub-generator, exit vector)` of the
/// hitting time of `y`.
fn phase_type(gen: &FiniteGenerator, x: usize, y: usize) -> (usize, DMatrix<f64>, DVector<f64>) {
    let n = gen.n_states();
    let transient: Vec<usize> = (0..n).filter(|&i| i != y).collect();
    let extra = usize::from(x == y);
    let m = transient.len() + extra;
    let mut index = vec![usize::MAX; n];
    for (k, &i) in transient.iter().enumerate() {
        index[i] = k;
    }
    let mut sub = DMatrix::zeros(m, m);
    let mut exit = DVector::zeros(m);
    for (k, &i) in transient.iter().enumerate() {
        sub[(k, k)] = -gen.exit_rate(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            if j == y {
                exit[k] = gen.rate(i, y);
            } else {
                sub[(k, index[j])] = gen.rate(i, j);
            }
        }
    }
    let start = if x == y {
        // copy of y that has not left yet
        let s = m - 1;
        sub[(s, s)] = -gen.exit_rate(y);
        for j in 0..n {
            if j != y {
                sub[(s, index[j])] = gen.rate(y, j);
            }
        }
        s
    } else {
        index[x]
    };
    (start, sub, exit)
}

/// Hitting-time law of `y` from `x` on `[0, tau]` with `n_time` nodes.
pub fn hitting_law(gen: &FiniteGenerator, x: usize, y: usize, tau: f64, n_time: usize) -> Result<HittingLaw> {
    let laws = hitting_laws_to(gen, y, tau, n_time)?;
    if x >= gen.n_states() {
        return invalid(format!("state {x} out of range"));
    }
    Ok(laws.into_iter().nth(x).expect("one law per source state"))
}

/// Hitting-time laws of `y` from every source state.
pub fn hitting_laws_to(gen: &FiniteGenerator, y: usize, tau: f64, n_time: usize) -> Result<Vec<HittingLaw>> {
    let n = gen.n_states();
    if y >= n {
        return invalid(format!("state {y} out of range"));
    }
    if !gen.is_conservative() {
        return invalid("hitting laws need a conservative generator (diag_extra = 0)");
    }
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    if n_time < 2 {
        return invalid("n_time must be at least 2");
    }
    let nodes = uniform_time_nodes(tau, n_time);
    if n == 1 {
        // single state: sigma is the atom at 0 and the crossing inequality is M_tau >= M_tau
        let law = HittingLaw {
            source: 0,
            target: 0,
            tau,
            nodes: nodes.clone(),
            density: vec![0.0; n_time],
            weights: {
                let mut w = vec![0.0; n_time];
                w[0] = 1.0;
                w
            },
            success_probability: 1.0,
        };
        return Ok(vec![law]);
    }
    let h = tau / (n_time - 1) as f64;
    let tw = trapezoid_weights(&nodes);

    // x != y share one sub-generator; x == y needs the augmented one.
    let (_, sub, exit) = phase_type(gen, if y == 0 { 1 } else { 0 }, y);
    let (start_ret, sub_ret, exit_ret) = phase_type(gen, y, y);

    let column_densities = |sub: &DMatrix<f64>, exit: &DVector<f64>| {
        let step = expm(&(sub * h));
        let mut d = exit.clone();
        let mut surv = DVector::from_element(sub.nrows(), 1.0);
        let mut cols = Vec::with_capacity(n_time);
        cols.push(d.clone());
        for _ in 1..n_time {
            d = &step * &d;
            surv = &step * &surv;
            cols.push(d.clone());
        }
        (cols, surv)
    };
    let (cols, surv) = column_densities(&sub, &exit);
    let (cols_ret, surv_ret) = column_densities(&sub_ret, &exit_ret);

    let mut out = Vec::with_capacity(n);
    let mut k = 0usize;
    for x in 0..n {
        let (density, p): (Vec<f64>, f64) = if x == y {
            (
                cols_ret.iter().map(|c| c[start_ret].max(0.0)).collect(),
                (1.0 - surv_ret[start_ret]).clamp(0.0, 1.0),
            )
        } else {
            let d = (cols.iter().map(|c| c[k].max(0.0)).collect(), (1.0 - surv[k]).clamp(0.0, 1.0));
            k += 1;
            d
        };
        let raw: Vec<f64> = density.iter().zip(&tw).map(|(d, w)| d * w).collect();
        let total: f64 = raw.iter().sum();
        let (weights, p) = if total > 0.0 && p > 1e-300 {
            (raw.iter().map(|r| r / total).collect(), p)
        } else {
            (vec![0.0; n_time], 0.0)
        };
        out.push(HittingLaw {
            source: x,
            target: y,
            tau,
            nodes: nodes.clone(),
            density,
            weights,
            success_probability: p,
        });
    }
    Ok(out)
}

/// Constants of the global hypothesis on a finite chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisConstants {
    pub tau: f64,
    /// Crossing constant `c`.
    pub c: f64,
    /// `C` with `1/C <= M_s 1 <= C` on `[0, tau]`.
    pub mass_bound: f64,
    /// `2 - sup_{x,x'} inf_y ||sigma_{x,y} - sigma_{x',y}||_TV`, once computed.
    pub h2_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H1Report {
    pub constants: HypothesisConstants,
    pub pass: bool,
    /// First unreachable pair, if any.
    pub unreachable: Option<(usize, usize)>,
    /// Smallest `lhs - (rhs - tol)` over all `(x, y, z)`.
    pub worst_margin: f64,
    pub worst_triple: Option<(usize, usize, usize)>,
    pub tolerance: f64,
    /// Laws indexed `x * n + y`.
    #[serde(skip)]
    pub laws: Vec<HittingLaw>,
}

impl H1Report {
    pub fn law(&self, x: usize, y: usize) -> &HittingLaw {
        let n = (self.laws.len() as f64).sqrt().round() as usize;
        &self.laws[x * n + y]
    }
}

/// Build `sigma_{x,y}` from hitting laws, extract `c`, and certify
/// `delta_x M_tau >= c int delta_y M_{tau-s} sigma_{x,y}(ds)` entrywise.
pub fn verify_h1(gen: &FiniteGenerator, tau: f64, n_time: usize) -> Result<H1Report> {
    let n = gen.n_states();
    let cons = gen.conservative_part();
    let mut laws = vec![None; n * n];
    for y in 0..n {
        for law in hitting_laws_to(&cons, y, tau, n_time)? {
            let x = law.source;
            laws[x * n + y] = Some(law);
        }
    }
    let laws: Vec<HittingLaw> = laws.into_iter().map(|l| l.expect("all pairs computed")).collect();

    let nodes = uniform_time_nodes(tau, n_time);
    let h = tau / (n_time - 1) as f64;
    let step = matrix_exponential(gen, h)?.to_dmatrix();
    // powers[k] = M_{k h}
    let mut powers = Vec::with_capacity(n_time);
    powers.push(DMatrix::identity(n, n));
    for k in 1..n_time {
        let next = &powers[k - 1] * &step;
        powers.push(next);
    }
    let m_tau = matrix_exponential(gen, tau)?;

    let mut mass_min = f64::INFINITY;
    let mut mass_max = 0.0_f64;
    for p in &powers {
        for i in 0..n {
            let s: f64 = p.row(i).iter().sum();
            mass_min = mass_min.min(s);
            mass_max = mass_max.max(s);
        }
    }
    let mass_bound = mass_max.max(1.0 / mass_min).max(1.0);

    let unreachable = laws.iter().find(|l| !l.reachable()).map(|l| (l.source, l.target));
    let min_p = laws.iter().map(|l| l.success_probability).fold(f64::INFINITY, f64::min);
    let min_a = gen.diag_extra().iter().copied().fold(0.0_f64, f64::min);
    let c = if unreachable.is_some() { 0.0 } else { 0.99 * min_p * (tau * min_a).exp() };

    let mut worst_margin = f64::INFINITY;
    let mut worst_triple = None;
    let mut max_tol = 1e-9_f64;
    if unreachable.is_none() {
        for x in 0..n {
            for y in 0..n {
                let law = &laws[x * n + y];
                for z in 0..n {
                    let g: Vec<f64> = (0..n_time).map(|j| powers[n_time - 1 - j][(y, z)]).collect();
                    let rhs: f64 = c * law.weights.iter().zip(&g).map(|(w, v)| w * v).sum::<f64>();
                    // trapezoid error h^2 tau / 12 * max |(f g)''| on the normalized density
                    let fg: Vec<f64> = law.density.iter().zip(&g).map(|(d, v)| d * v).collect();
                    let curv = fg
                        .windows(3)
                        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs() / (h * h))
                        .fold(0.0, f64::max);
                    let quad = c / law.success_probability.max(1e-300) * tau * h * h / 12.0 * curv;
                    let tol = 1e-9 + quad;
                    max_tol = max_tol.max(tol);
                    let margin = m_tau.get(x, z) - (rhs - tol);
                    if margin < worst_margin {
                        worst_margin = margin;
                        worst_triple = Some((x, y, z));
                    }
                }
            }
        }
    } else {
        worst_margin = f64::NEG_INFINITY;
    }
    let _ = nodes;
    let pass = unreachable.is_none() && c > 0.0 && worst_margin >= 0.0;
    Ok(H1Report {
        constants: HypothesisConstants { tau, c, mass_bound, h2_margin: None },
        pass,
        unreachable,
        worst_margin,
        worst_triple,
        tolerance: max_tol,
        laws,
    })
}

/// Margin `2 - sup_{x,x'} inf_y ||sigma_{x,y} - sigma_{x',y}||_TV`; laws
/// indexed `x * n + y`. Unreachable pairs count as fully separated.
pub fn verify_h2(laws: &[HittingLaw]) -> Result<f64> {
    let n = (laws.len() as f64).sqrt().round() as usize;
    if n * n != laws.len() || n == 0 {
        return invalid("verify_h2 expects an n x n family of laws");
    }
    let measures: Vec<Option<TimeMeasure>> = laws
        .iter()
        .map(|l| if l.reachable() { l.time_measure().ok() } else { None })
        .collect();
    let mut sup_inf = 0.0_f64;
    for x in 0..n {
        for xp in 0..n {
            let mut inf = f64::INFINITY;
            for y in 0..n {
                let d = match (&measures[x * n + y], &measures[xp * n + y]) {
                    (Some(a), Some(b)) => tv_distance_time_measures(a, b)?,
                    _ => 2.0,
                };
                inf = inf.min(d);
            }
            sup_inf = sup_inf.max(inf);
        }
    }
    Ok(2.0 - sup_inf)
}

/// Tolerance used to turn the H2 margin into a verdict.
pub const H2_TOLERANCE: f64 = 1e-6;

/// Perron eigentriplet of `exp(tau L)` by power iteration on both actions.
pub fn perron_triplet_finite(gen: &FiniteGenerator, tau: f64) -> Result<Eigentriplet> {
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    let m = matrix_exponential(gen, tau)?;
    let opts = PowerOptions { tol: 1e-13, max_iter: 100_000, window: 10 };
    power_triplet(&m, tau, &opts).map_err(|e| match e {
        Error::NonConvergent { .. } => e,
        other => other,
    })
}

/// `n`-cycle with unit-speed successor jumps (rate `n`), the finite analogue
/// of the rotation `x -> x + t mod 1`.
pub fn rotation_chain(n: usize) -> Result<FiniteGenerator> {
    if n < 2 {
        return invalid("rotation chain needs at least 2 states");
    }
    let mut rates = vec![vec![0.0; n]; n];
    for (i, row) in rates.iter_mut().enumerate() {
        row[(i + 1) % n] = n as f64;
    }
    FiniteGenerator::conservative(&rates)
}
