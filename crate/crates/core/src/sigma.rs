//! Crossing-time families `(sigma^{t,n}_{x,y}, c^{t,n}_{x,y})`: for `f >= 0`,
//! `M_t f(x) >= c^{t,n}_{x,y} int_0^t M_{t-s} f(y) sigma^{t,n}_{x,y}(ds)`
//! whenever `|y - x - t| <= n eps / 2`.
//!
//! Families are tabulated per target `y` as the unnormalized density
//! `G(z; t, s) = c^{t,n}_{z,y} s^{t,n}_{z,y}(s)` on a spatial grid in `z` and a
//! shared uniform time grid, so that every convolution index aligns.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::fmt12;
use crate::lyapunov::LyapunovConstruction;
use crate::model::{ModelSpec, Potential};
use crate::oracle::{evolve, trajectory, Action, SemigroupOracle};
use crate::pde::PdeSemigroup;
use crate::spaces::{trapezoid_weights, uniform_time_nodes, TimeMeasure};

/// `(kappa0, eps)` of the band lower bound, or an error for kernels without one.
fn band(model: &ModelSpec) -> Result<(f64, f64)> {
    let eps = model.eps();
    let k0 = model.kappa0();
    if model.kernel.is_atomic() || !(k0 > 0.0 && eps > 0.0) {
        return Err(Error::Construction(
            "the kernel has no density lower bound kappa0 1_(x-eps, x+eps)(y) dy; crossing-time families need one".into(),
        ));
    }
    Ok((k0, eps))
}

fn slack(x: f64, y: f64) -> f64 {
    1e-12 * (1.0 + x.abs() + y.abs())
}

/// Level zero: `sigma = delta_t` and `c = exp(int_x^y a)` for `y = x + t`, the
/// integral by the composite midpoint rule with step close to `dx`.
pub fn sigma_level0(model: &ModelSpec, x: f64, y: f64, t: f64, dx: f64) -> Result<(TimeMeasure, f64)> {
    if !(t.is_finite() && t >= 0.0) {
        return invalid(format!("t must be finite and nonnegative, got {t}"));
    }
    if !(dx.is_finite() && dx > 0.0) {
        return invalid(format!("dx must be positive, got {dx}"));
    }
    if (y - x - t).abs() > slack(x, y) {
        return invalid(format!("level zero needs y = x + t, got y - x - t = {:e}", y - x - t));
    }
    let n = ((t / dx).round() as usize).max(1);
    let h = t / n as f64;
    let integral = (0..n).map(|k| model.potential.value(x + (k as f64 + 0.5) * h)).sum::<f64>() * h;
    Ok((TimeMeasure::atom(t)?, integral.exp()))
}

/// `exp(A(x + k h) - A(x))`, `k = 0..n`.
fn forward_factors(a: &Potential, x: f64, h: f64, n: usize) -> Vec<f64> {
    let base = a.antiderivative(x);
    (0..n).map(|k| (a.antiderivative(x + k as f64 * h) - base).exp()).collect()
}

/// `exp(A(y) - A(y - k h))`, `k = 0..n`.
fn backward_factors(a: &Potential, y: f64, h: f64, n: usize) -> Vec<f64> {
    let base = a.antiderivative(y);
    (0..n).map(|k| (base - a.antiderivative(y - k as f64 * h)).exp()).collect()
}

/// Level-one profile `G(s_j) = kappa0 int_0^{s_j} ex(s') ey(s_j - s') ds'`
/// by the trapezoid rule.
fn level1_profile(k0: f64, h: f64, ex: &[f64], ey: &[f64]) -> Vec<f64> {
    (0..ex.len())
        .map(|j| {
            if j == 0 {
                return 0.0;
            }
            let mut acc = 0.5 * (ex[0] * ey[j] + ex[j] * ey[0]);
            for k in 1..j {
                acc += ex[k] * ey[j - k];
            }
            k0 * h * acc
        })
        .collect()
}

/// Level one at a single point, on `n_time` uniform nodes over `[0, t]`.
pub fn sigma_level1(model: &ModelSpec, x: f64, y: f64, t: f64, n_time: usize) -> Result<(TimeMeasure, f64)> {
    let (k0, eps) = band(model)?;
    if !(t > 0.0 && t < eps / 2.0) {
        return invalid(format!("t = {t} must lie in (0, eps/2) with eps = {eps}"));
    }
    if n_time < 2 {
        return invalid("n_time must be at least 2");
    }
    if (y - x - t).abs() > eps / 2.0 + slack(x, y) {
        return invalid(format!("y = {y} is outside the reach band [x + t - eps/2, x + t + eps/2] of x = {x}"));
    }
    let h = t / (n_time - 1) as f64;
    let ex = forward_factors(&model.potential, x, h, n_time);
    let ey = backward_factors(&model.potential, y, h, n_time);
    let g = level1_profile(k0, h, &ex, &ey);
    let nodes = uniform_time_nodes(t, n_time);
    let c: f64 = trapezoid_weights(&nodes).iter().zip(&g).map(|(w, v)| w * v).sum();
    Ok((TimeMeasure::from_density(t, nodes, g)?, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaOptions {
    /// Nodes of the shared time grid over `[0, tau]`.
    pub n_time: usize,
    /// Spacing of the `z` grid; `eps / 16` when absent.
    pub dz: Option<f64>,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        Self { n_time: 26, dz: None }
    }
}

/// Tabulated `G(z; t_m, s_j)` for one target `y`, stored `[m][j][z]`.
#[derive(Debug, Clone, PartialEq)]
struct SigmaTable {
    y: f64,
    z0: f64,
    n_z: usize,
    values: Vec<f64>,
}

/// One level of the family for a set of targets `y`, with `t` on the shared
/// grid `t_m = m tau / (n_time - 1)`.
#[derive(Debug, Clone)]
pub struct SigmaFamily {
    pub level: usize,
    pub tau: f64,
    pub n_time: usize,
    pub dz: f64,
    pub kappa0: f64,
    pub eps: f64,
    model: ModelSpec,
    tables: Vec<SigmaTable>,
    /// Grid nodes inside the reach band at `t = tau` where `c` vanished, as `(x, y)`.
    pub excluded: Vec<(f64, f64)>,
}

/// `z` grid covering the level-`n` band of `y` for every `t` in `[0, tau]`,
/// padded by two nodes on each side.
fn table_range(y: f64, tau: f64, n: usize, eps: f64, dz: f64) -> (f64, usize) {
    let reach = n as f64 * eps / 2.0;
    let z0 = y - tau - reach - 2.0 * dz;
    let n_z = ((tau + 2.0 * reach + 4.0 * dz) / dz).ceil() as usize + 1;
    (z0, n_z)
}

impl SigmaFamily {
    /// The level-one family for the given targets.
    pub fn level1(model: &ModelSpec, tau: f64, targets: &[f64], opts: &SigmaOptions) -> Result<Self> {
        let (k0, eps) = band(model)?;
        if !(tau > 0.0 && tau < eps / 2.0) {
            return invalid(format!("tau = {tau} must lie in (0, eps/2) with eps = {eps}"));
        }
        if opts.n_time < 2 {
            return invalid("n_time must be at least 2");
        }
        if targets.is_empty() || targets.iter().any(|y| !y.is_finite()) {
            return invalid("targets must be a nonempty list of finite points");
        }
        let dz = opts.dz.unwrap_or(eps / 16.0);
        if !(dz.is_finite() && dz > 0.0) {
            return invalid(format!("dz must be positive, got {dz}"));
        }
        let nt = opts.n_time;
        let h = tau / (nt - 1) as f64;
        let tables = targets
            .iter()
            .map(|&y| {
                let (z0, n_z) = table_range(y, tau, 1, eps, dz);
                let ey = backward_factors(&model.potential, y, h, nt);
                let mut values = vec![0.0; nt * nt * n_z];
                for i in 0..n_z {
                    let ez = forward_factors(&model.potential, z0 + i as f64 * dz, h, nt);
                    let g = level1_profile(k0, h, &ez, &ey);
                    for m in 0..nt {
                        for j in 0..=m {
                            values[(m * nt + j) * n_z + i] = g[j];
                        }
                    }
                }
                SigmaTable { y, z0, n_z, values }
            })
            .collect();
        let mut fam = Self { level: 1, tau, n_time: nt, dz, kappa0: k0, eps, model: model.clone(), tables, excluded: vec![] };
        fam.excluded = fam.scan_exclusions();
        Ok(fam)
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn targets(&self) -> Vec<f64> {
        self.tables.iter().map(|t| t.y).collect()
    }

    /// Step of the shared time grid.
    pub fn step(&self) -> f64 {
        self.tau / (self.n_time - 1) as f64
    }

    /// `n eps / 2`.
    pub fn reach(&self) -> f64 {
        self.level as f64 * self.eps / 2.0
    }

    pub fn in_band(&self, x: f64, y: f64, t: f64) -> bool {
        (y - x - t).abs() <= self.reach() + slack(x, y)
    }

    fn index(&self, n_z: usize, m: usize, j: usize, i: usize) -> usize {
        (m * self.n_time + j) * n_z + i
    }

    /// `G(x; t_m, s_j)` for `j = 0..=m`.
    fn profile(&self, target: usize, m: usize, x: f64) -> Vec<f64> {
        let tab = &self.tables[target];
        if self.level == 1 {
            let h = self.step();
            let ex = forward_factors(&self.model.potential, x, h, m + 1);
            let ey = backward_factors(&self.model.potential, tab.y, h, m + 1);
            return level1_profile(self.kappa0, h, &ex, &ey);
        }
        let u = (x - tab.z0) / self.dz;
        if u < 0.0 || u > (tab.n_z - 1) as f64 {
            return vec![0.0; m + 1];
        }
        let i = (u.floor() as usize).min(tab.n_z - 2);
        let th = u - i as f64;
        (0..=m)
            .map(|j| {
                let k = self.index(tab.n_z, m, j, i);
                (1.0 - th) * tab.values[k] + th * tab.values[k + 1]
            })
            .collect()
    }

    /// `(sigma^{t_m,n}_{x,y}, c^{t_m,n}_{x,y})` for the `target`-th `y`.
    pub fn evaluate(&self, x: f64, target: usize, m: usize) -> Result<(TimeMeasure, f64)> {
        let Some(tab) = self.tables.get(target) else {
            return invalid(format!("target index {target} out of range"));
        };
        if m == 0 || m >= self.n_time {
            return invalid(format!("time index {m} must lie in 1..{}", self.n_time));
        }
        let t = m as f64 * self.step();
        if !self.in_band(x, tab.y, t) {
            return invalid(format!(
                "(x, y, t) = ({x}, {}, {t}) is outside the level-{} reach band",
                tab.y, self.level
            ));
        }
        let g = self.profile(target, m, x);
        let nodes = uniform_time_nodes(t, m + 1);
        let c: f64 = trapezoid_weights(&nodes).iter().zip(&g).map(|(w, v)| w * v).sum();
        if !(c > 0.0) {
            return Err(Error::Construction(format!("c vanishes at (x, y, t) = ({x}, {}, {t})", tab.y)));
        }
        Ok((TimeMeasure::from_density(t, nodes, g)?, c))
    }

    /// In-band grid nodes and their `c` at `t = tau`, per target.
    fn top_row(&self, target: usize) -> Vec<(f64, f64)> {
        let tab = &self.tables[target];
        let m = self.n_time - 1;
        let tw = trapezoid_weights(&uniform_time_nodes(self.tau, self.n_time));
        (0..tab.n_z)
            .map(|i| tab.z0 + i as f64 * self.dz)
            .filter(|x| self.in_band(*x, tab.y, self.tau))
            .map(|x| {
                let g = self.profile(target, m, x);
                (x, tw.iter().zip(&g).map(|(w, v)| w * v).sum())
            })
            .collect()
    }

    fn scan_exclusions(&self) -> Vec<(f64, f64)> {
        (0..self.tables.len())
            .flat_map(|k| {
                let y = self.tables[k].y;
                self.top_row(k).into_iter().filter(|(_, c)| !(*c > 0.0)).map(move |(x, _)| (x, y))
            })
            .collect()
    }

    /// `max |c(x + dz) - c(x)| / (c dz)` over in-band nodes at `t = tau`; a
    /// finite value is the grid form of continuity of `x -> c`.
    pub fn continuity_modulus(&self) -> f64 {
        let mut kappa = 0.0_f64;
        for k in 0..self.tables.len() {
            let row = self.top_row(k);
            for w in row.windows(2) {
                let lo = w[0].1.min(w[1].1);
                kappa = kappa.max((w[1].1 - w[0].1).abs() / (lo * self.dz));
            }
        }
        kappa
    }
}

/// Cumulative trapezoid integrals in `z` of every `(m, j)` row of a table.
fn prefix_table(tab: &SigmaTable, nt: usize, dz: f64) -> Vec<f64> {
    let mut p = vec![0.0; tab.values.len()];
    for row in 0..nt * nt {
        let base = row * tab.n_z;
        for i in 1..tab.n_z {
            p[base + i] = p[base + i - 1] + 0.5 * dz * (tab.values[base + i - 1] + tab.values[base + i]);
        }
    }
    p
}

/// `int_{z0}^{z} G` for the piecewise-linear interpolant of one table row.
fn row_primitive(tab: &SigmaTable, prefix: &[f64], base: usize, dz: f64, z: f64) -> f64 {
    let u = ((z - tab.z0) / dz).clamp(0.0, (tab.n_z - 1) as f64);
    let i = (u.floor() as usize).min(tab.n_z - 2);
    let th = u - i as f64;
    let g0 = tab.values[base + i];
    let g1 = tab.values[base + i + 1];
    prefix[base + i] + dz * (th * g0 + 0.5 * th * th * (g1 - g0))
}

/// Level `n + 1` from level `n`:
/// `G^{n+1}(x; t, s) = kappa0 int_0^s e^{A(x+s') - A(x)} int_{I(s')} G^n(z; t - s', s - s') dz ds'`
/// with `I(s') = [max(x+s'-eps, y-t+s'-n eps/2), min(x+s'+eps, y-t+s'+n eps/2)]`.
pub fn sigma_induct(fam: &SigmaFamily) -> Result<SigmaFamily> {
    let n = fam.level;
    let nt = fam.n_time;
    let h = fam.step();
    let eps = fam.eps;
    let dz = fam.dz;
    let reach = n as f64 * eps / 2.0;
    let tables = fam
        .tables
        .iter()
        .map(|old| {
            let prefix = prefix_table(old, nt, dz);
            let y = old.y;
            let (z0, n_z) = table_range(y, fam.tau, n + 1, eps, dz);
            let mut values = vec![0.0; nt * nt * n_z];
            let mut zint = vec![0.0; nt];
            for i in 0..n_z {
                let x = z0 + i as f64 * dz;
                let ex = forward_factors(&fam.model.potential, x, h, nt);
                for m in 1..nt {
                    for j in 1..=m {
                        // zint[k] = int_{I} G^n(z; t_{m-k}, s_{j-k}) dz
                        for (k, zk) in zint.iter_mut().enumerate().take(j + 1) {
                            let sk = k as f64 * h;
                            let centre = y - (m - k) as f64 * h;
                            let lo = (x + sk - eps).max(centre - reach);
                            let hi = (x + sk + eps).min(centre + reach);
                            *zk = if hi > lo {
                                let base = ((m - k) * nt + (j - k)) * old.n_z;
                                row_primitive(old, &prefix, base, dz, hi) - row_primitive(old, &prefix, base, dz, lo)
                            } else {
                                0.0
                            };
                        }
                        let mut acc = 0.5 * (ex[0] * zint[0] + ex[j] * zint[j]);
                        for k in 1..j {
                            acc += ex[k] * zint[k];
                        }
                        values[(m * nt + j) * n_z + i] = fam.kappa0 * h * acc;
                    }
                }
            }
            SigmaTable { y, z0, n_z, values }
        })
        .collect();
    let mut next = SigmaFamily { level: n + 1, tables, excluded: vec![], ..fam.clone() };
    next.excluded = next.scan_exclusions();
    Ok(next)
}

/// Build levels `1..=level` for the given targets.
pub fn build_family(model: &ModelSpec, tau: f64, targets: &[f64], level: usize, opts: &SigmaOptions) -> Result<SigmaFamily> {
    if level == 0 {
        return invalid("families are tabulated from level one");
    }
    let mut fam = SigmaFamily::level1(model, tau, targets, opts)?;
    while fam.level < level {
        fam = sigma_induct(&fam)?;
    }
    Ok(fam)
}

/// `(lhs, rhs)` of the family inequality at `(x_cell, target, t_m)` for `f`,
/// both sides from the scheme.
pub fn domination_sides(
    fam: &SigmaFamily,
    s: &PdeSemigroup,
    target: usize,
    m: usize,
    x_cell: usize,
    f: &[f64],
) -> Result<(f64, f64)> {
    let g = s.grid();
    let stride = time_stride(fam, s)?;
    let y_cell = target_cell(fam, s, target)?;
    if x_cell >= g.len() {
        return invalid("x cell outside the grid");
    }
    let (law, c) = fam.evaluate(g.center(x_cell), target, m)?;
    let traj = trajectory(s, Action::Right, f, m * stride);
    let lhs = traj[m * stride][x_cell];
    let rhs = c * law.weights().iter().enumerate().map(|(l, w)| w * traj[(m - l) * stride][y_cell]).sum::<f64>();
    Ok((lhs, rhs))
}

/// Scheme steps per family time step; the two grids must align.
fn time_stride(fam: &SigmaFamily, s: &PdeSemigroup) -> Result<usize> {
    let r = fam.step() / s.dt();
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * r {
        return invalid(format!(
            "family time step {} is not a multiple of the scheme step {}",
            fam.step(),
            s.dt()
        ));
    }
    Ok(k as usize)
}

fn target_cell(fam: &SigmaFamily, s: &PdeSemigroup, target: usize) -> Result<usize> {
    let g = s.grid();
    let Some(tab) = fam.tables.get(target) else {
        return invalid(format!("target index {target} out of range"));
    };
    let cell = g.nearest(tab.y);
    if (g.center(cell) - tab.y).abs() > 1e-9 * (1.0 + tab.y.abs()) {
        return invalid(format!("target y = {} is not a cell center", tab.y));
    }
    Ok(cell)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialWitness {
    pub trial: usize,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub level: usize,
    pub trials: usize,
    pub seed: u64,
    /// Trials where both sides vanish.
    pub zero_trials: usize,
    pub min_ratio: f64,
    /// Allowed shortfall `1e-3 + 2 dx`.
    pub relaxation: f64,
    pub pass: bool,
    /// The trial with the smallest ratio.
    pub witness: Option<TrialWitness>,
}

/// Random nonnegative piecewise-linear function on the grid: ten knots at
/// random positions, each value zero with probability 0.3.
pub fn random_nonnegative_pl(grid: &crate::spaces::Grid1D, rng: &mut impl Rng) -> Vec<f64> {
    let (lo, hi) = (grid.lower(), grid.upper());
    let mut knots: Vec<f64> = (0..8).map(|_| rng.gen_range(lo..hi)).collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    let values: Vec<f64> = knots.iter().map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
    grid.centers()
        .iter()
        .map(|x| {
            let k = knots.partition_point(|z| z <= x).clamp(1, knots.len() - 1);
            let (z0, z1) = (knots[k - 1], knots[k]);
            let th = if z1 > z0 { (x - z0) / (z1 - z0) } else { 0.0 };
            values[k - 1] + th * (values[k] - values[k - 1])
        })
        .collect()
}

/// Check the family inequality on `trials` seeded random `(x, y, t, f)`.
pub fn verify_domination(fam: &SigmaFamily, s: &PdeSemigroup, trials: usize, seed: u64) -> Result<DominationReport> {
    if fam.model() != s.model() {
        return invalid("family and semigroup use different models");
    }
    time_stride(fam, s)?;
    let g = *s.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relaxation = 1e-3 + 2.0 * g.dx();
    let mut min_ratio = f64::INFINITY;
    let mut witness = None;
    let mut zero_trials = 0;
    let h = fam.step();
    for trial in 0..trials {
        let target = rng.gen_range(0..fam.tables.len());
        let m = rng.gen_range(1..fam.n_time);
        let t = m as f64 * h;
        let y = fam.tables[target].y;
        let cells = g.cells_in(y - t - fam.reach() + 1e-9, y - t + fam.reach() - 1e-9);
        if cells.is_empty() {
            return invalid(format!("no cell of the grid lies in the reach band of y = {y}"));
        }
        let x_cell = rng.gen_range(cells);
        let f = random_nonnegative_pl(&g, &mut rng);
        let (lhs, rhs) = domination_sides(fam, s, target, m, x_cell, &f)?;
        if rhs <= 0.0 {
            zero_trials += 1;
            continue;
        }
        let ratio = lhs / rhs;
        if ratio < min_ratio {
            min_ratio = ratio;
            witness = Some(TrialWitness { trial, x: g.center(x_cell), y, t, lhs, rhs, ratio });
        }
    }
    Ok(DominationReport {
        level: fam.level,
        trials,
        seed,
        zero_trials,
        min_ratio,
        relaxation,
        pass: min_ratio >= 1.0 - relaxation,
        witness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertificationOptions {
    /// Points of `K` sampled for `x`, `x'` and `y` (evenly spaced over the cells of `K`).
    pub max_samples: usize,
    pub level_cap: usize,
    pub sigma: SigmaOptions,
}

impl Default for CertificationOptions {
    fn default() -> Self {
        Self { max_samples: 9, level_cap: 16, sigma: SigmaOptions::default() }
    }
}

/// Smallest `n` with `|y - x - tau| <= n eps / 2` for all `x, y` in `[lo, hi]`.
pub fn required_level(lo: f64, hi: f64, tau: f64, eps: f64) -> usize {
    ((2.0 * (hi - lo + tau) / eps) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Evenly spaced subsample of at most `max` entries, keeping both ends.
pub fn subsample(cells: &[usize], max: usize) -> Vec<usize> {
    if cells.len() <= max || max < 2 {
        return cells.iter().copied().take(max.max(cells.len().min(1))).collect();
    }
    let mut out: Vec<usize> = (0..max)
        .map(|i| cells[((i as f64) * (cells.len() - 1) as f64 / (max - 1) as f64).round() as usize])
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct H1H2PrimeReport {
    pub level: usize,
    pub tau: f64,
    /// Horizon of the family; below `eps / 2`, equal to `tau` when possible.
    pub family_tau: f64,
    pub samples: Vec<f64>,
    /// `min c^{tau,n}_{x,y}` over the sample.
    pub c_min: f64,
    /// `min c^{tau,n}_{x,y} psi(y) / psi(x)` over the sample.
    pub c_weighted: f64,
    pub psi_inf: f64,
    pub psi_sup: f64,
    /// `c_min psi_inf / psi_sup`, the constant certified for `K`.
    pub c: f64,
    /// `sup_K M_tau psi / psi`.
    pub growth_on_k: f64,
    /// `min_{x,x'} max_y m_{x,x',y}`.
    pub eps_overlap: f64,
    pub worst_pair: (f64, f64),
    pub best_y: f64,
    pub continuity_modulus: f64,
    pub excluded: usize,
    pub pass: bool,
    #[serde(skip)]
    pub sample_cells: Vec<usize>,
    /// `sigma_{x_i, y_j}` with `c^{tau,n}_{x_i,y_j}`.
    #[serde(skip)]
    pub laws: SigmaSample,
    /// `M_{tau - s_l}(psi 1_K)(y_j) / psi(y_j)` on the family time nodes.
    #[serde(skip)]
    pub overlap_weights: Vec<Vec<f64>>,
    /// `m_{x_i, x_k, y_j}` indexed `[i][k][j]`.
    #[serde(skip)]
    pub m_values: Vec<Vec<Vec<f64>>>,
}

impl H1H2PrimeReport {
    /// `sigma_{x_i, y_j}` and its constant.
    pub fn law(&self, i: usize, j: usize) -> (&TimeMeasure, f64) {
        let k = i * self.samples.len() + j;
        (&self.laws.laws[k], self.laws.entries[k].c)
    }
}

/// Certify the local path-crossing and overlap hypotheses on `K` of the
/// construction, with `sigma_{x,y} = sigma^{tau,n}_{x,y}`.
pub fn verify_h1prime_h2prime(
    s: &PdeSemigroup,
    con: &LyapunovConstruction,
    opts: &CertificationOptions,
) -> Result<H1H2PrimeReport> {
    let model = s.model();
    let (_, eps) = band(model)?;
    let g = *s.grid();
    if con.psi.len() != g.len() {
        return Err(Error::GridMismatch("construction was built on another grid".into()));
    }
    let Some((k_lo, k_hi)) = con.k_range() else {
        return Err(Error::CheckFailed("K is empty".into()));
    };
    let tau = con.tau;
    // beyond eps / 2 the certificate at a shorter horizon composes with M_{tau - family_tau}
    let family_tau = if tau < eps / 2.0 { tau } else { eps / 4.0 };
    let level = required_level(g.center(k_lo), g.center(k_hi), family_tau, eps);
    if level > opts.level_cap {
        return Err(Error::LevelCap { required: level, cap: opts.level_cap });
    }
    let cells = subsample(&con.k_cells, opts.max_samples);
    let pts: Vec<f64> = cells.iter().map(|&i| g.center(i)).collect();
    let fam = build_family(model, family_tau, &pts, level, &opts.sigma)?;
    let mm = fam.n_time - 1;

    let p = pts.len();
    let mut entries = Vec::with_capacity(p * p);
    let mut laws = Vec::with_capacity(p * p);
    let mut c_min = f64::INFINITY;
    let mut c_weighted = f64::INFINITY;
    for (i, &x) in pts.iter().enumerate() {
        for (j, &y) in pts.iter().enumerate() {
            let (law, c) = fam.evaluate(x, j, mm)?;
            c_min = c_min.min(c);
            c_weighted = c_weighted.min(c * con.psi[cells[j]] / con.psi[cells[i]]);
            entries.push(SigmaEntry { x, y, t: family_tau, c });
            laws.push(law);
        }
    }
    let psi_k = con.k_cells.iter().map(|&i| con.psi[i]);
    let psi_inf = psi_k.clone().fold(f64::INFINITY, f64::min);
    let psi_sup = psi_k.fold(0.0, f64::max);
    let c = c_min * psi_inf / psi_sup;

    let steps = s.steps_for(tau);
    let m_psi = evolve(s, Action::Right, &con.psi, steps);
    let growth_on_k = con.k_cells.iter().map(|&i| m_psi[i] / con.psi[i]).fold(0.0, f64::max);

    let mut psi_k_only = vec![0.0; g.len()];
    for &i in &con.k_cells {
        psi_k_only[i] = con.psi[i];
    }
    let traj = trajectory(s, Action::Right, &psi_k_only, steps);
    let nodes = uniform_time_nodes(family_tau, fam.n_time);
    let overlap_weights: Vec<Vec<f64>> = cells
        .iter()
        .map(|&yc| {
            nodes
                .iter()
                .map(|sj| interpolate_in_time(&traj, s.dt(), tau - sj, yc) / con.psi[yc])
                .collect()
        })
        .collect();

    let mut m_values = vec![vec![vec![0.0; p]; p]; p];
    let mut eps_overlap = f64::INFINITY;
    let mut worst_pair = (pts[0], pts[0]);
    let mut best_y = pts[0];
    for i in 0..p {
        for k in i..p {
            let mut best = (f64::NEG_INFINITY, 0);
            for j in 0..p {
                let overlap = laws[i * p + j].overlap_weights(&laws[k * p + j])?;
                let m: f64 = overlap.iter().zip(&overlap_weights[j]).map(|(o, w)| o * w).sum();
                m_values[i][k][j] = m;
                m_values[k][i][j] = m;
                if m > best.0 {
                    best = (m, j);
                }
            }
            if best.0 < eps_overlap {
                eps_overlap = best.0;
                worst_pair = (pts[i], pts[k]);
                best_y = pts[best.1];
            }
        }
    }
    let pass = c > 0.0 && eps_overlap > 0.0 && fam.excluded.is_empty();
    Ok(H1H2PrimeReport {
        level,
        tau,
        family_tau,
        samples: pts,
        c_min,
        c_weighted,
        psi_inf,
        psi_sup,
        c,
        growth_on_k,
        eps_overlap,
        worst_pair,
        best_y,
        continuity_modulus: fam.continuity_modulus(),
        excluded: fam.excluded.len(),
        pass,
        sample_cells: cells,
        laws: SigmaSample { level, tau: family_tau, entries, laws },
        overlap_weights,
        m_values,
    })
}

/// Linear interpolation in time of a recorded trajectory at one cell.
pub(crate) fn interpolate_in_time(traj: &[Vec<f64>], dt: f64, t: f64, cell: usize) -> f64 {
    let last = traj.len() - 1;
    let u = (t / dt).clamp(0.0, last as f64);
    let k = (u.floor() as usize).min(last.saturating_sub(1));
    if last == 0 {
        return traj[0][cell];
    }
    let th = u - k as f64;
    (1.0 - th) * traj[k][cell] + th * traj[k + 1][cell]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEntry {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub c: f64,
}

/// Evaluated laws `sigma_{x,y}` with their constants, persisted as one JSON
/// header line followed by one CSV block `s,density` per entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SigmaSample {
    pub level: usize,
    pub tau: f64,
    pub entries: Vec<SigmaEntry>,
    #[serde(skip)]
    pub laws: Vec<TimeMeasure>,
}

#[derive(Serialize, Deserialize)]
struct SampleHeader {
    format: String,
    version: u32,
    level: usize,
    tau: f64,
    entries: Vec<SigmaEntry>,
}

const SAMPLE_FORMAT: &str = "sigma-sample";

impl SigmaSample {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = SampleHeader {
            format: SAMPLE_FORMAT.into(),
            version: 1,
            level: self.level,
            tau: self.tau,
            entries: self.entries.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).map_err(std::io::Error::other)?)?;
        for (k, law) in self.laws.iter().enumerate() {
            writeln!(w, "# block {k}")?;
            writeln!(w, "s,density")?;
            let density = law.density().unwrap_or(law.weights());
            for (s, d) in law.nodes().iter().zip(density) {
                writeln!(w, "{},{}", fmt12(*s), fmt12(*d))?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let bad = |m: String| Error::InvalidInput(format!("sigma sample: {m}"));
        let first = lines.next().ok_or_else(|| bad("empty input".into()))?.map_err(|e| bad(e.to_string()))?;
        let header: SampleHeader = serde_json::from_str(&first).map_err(|e| bad(e.to_string()))?;
        if header.format != SAMPLE_FORMAT {
            return Err(bad(format!("unknown format {}", header.format)));
        }
        let mut blocks: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line == "s,density" {
                continue;
            }
            if line.starts_with("# block") {
                blocks.push((vec![], vec![]));
                continue;
            }
            let block = blocks.last_mut().ok_or_else(|| bad("data before the first block".into()))?;
            let (a, b) = line.split_once(',').ok_or_else(|| bad(format!("bad row {line}")))?;
            block.0.push(a.parse().map_err(|_| bad(format!("bad number {a}")))?);
            block.1.push(b.parse().map_err(|_| bad(format!("bad number {b}")))?);
        }
        if blocks.len() != header.entries.len() {
            return Err(bad(format!("{} blocks for {} entries", blocks.len(), header.entries.len())));
        }
        let laws = blocks
            .into_iter()
            .zip(&header.entries)
            .map(|((nodes, density), e)| TimeMeasure::from_density(e.t, nodes, density))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { level: header.level, tau: header.tau, entries: header.entries, laws })
    }
}
