//! Upwind splitting scheme for the nonlocal transport equation with `dt = dx`.
//!
//! One dual step is `(M f)_i = E_i (f_{i+1} + dt (W f)_{i+1})` with
//! `E_i = exp(dx a(x_i + dx/2))` and `W` the kernel quadrature matrix; the
//! direct step is its exact transpose. Values beyond the grid are zero; the
//! kernel term is still evaluated at the virtual cell just past the right end.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::{Kernel, ModelSpec};
use crate::oracle::SemigroupOracle;
use crate::spaces::{DiscreteMeasure, Grid1D, GridFunction};

/// Translation-invariant quadrature weights `W_ij = w[j - i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stencil {
    /// Offset of `weights[0]`.
    pub offset_min: isize,
    pub weights: Vec<f64>,
    reversed: Vec<f64>,
    /// Nonzero taps, used when the stencil is mostly empty.
    taps: Vec<(isize, f64)>,
    sparse: bool,
}

impl Stencil {
    fn new(offset_min: isize, weights: Vec<f64>) -> Self {
        let taps: Vec<(isize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, w)| (offset_min + k as isize, *w))
            .collect();
        let sparse = taps.len() * 2 < weights.len();
        let reversed = weights.iter().rev().copied().collect();
        Self { offset_min, weights, reversed, taps, sparse }
    }

    pub fn offset_max(&self) -> isize {
        self.offset_min + self.weights.len() as isize - 1
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Quadrature weights of `Q(x, dy)` on a grid of spacing `dx`.
    pub fn for_kernel(kernel: &Kernel, dx: f64) -> Self {
        if let Kernel::DiracPair { weight } = kernel {
            let m = (1.0 / dx).round() as isize;
            if ((m as f64) * dx - 1.0).abs() > 1e-9 {
                log::warn!("dx = {dx} does not divide 1; dirac atoms moved to the nearest cells");
            }
            let mut w = vec![0.0; (2 * m + 1) as usize];
            w[0] = *weight;
            w[(2 * m) as usize] = *weight;
            return Self::new(-m, w);
        }
        let (lo, hi) = kernel.support();
        let kmin = (lo / dx - 0.5).floor() as isize;
        let kmax = (hi / dx + 0.5).ceil() as isize;
        let weights = (kmin..=kmax)
            .map(|k| {
                let c = k as f64 * dx;
                let a = (c - dx / 2.0).max(lo);
                let b = (c + dx / 2.0).min(hi);
                if b <= a {
                    return 0.0;
                }
                kernel.density((a + b) / 2.0) * (b - a)
            })
            .collect();
        let mut s = Self::new(kmin, weights);
        s.trim();
        s
    }

    fn trim(&mut self) {
        let first = self.weights.iter().position(|w| *w != 0.0).unwrap_or(0);
        let last = self.weights.iter().rposition(|w| *w != 0.0).unwrap_or(0);
        if first > last {
            *self = Self::new(0, vec![0.0]);
            return;
        }
        *self = Self::new(self.offset_min + first as isize, self.weights[first..=last].to_vec());
    }

    /// `out_i = sum_k w[k] f[i + k]`, entries beyond the grid read zero.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len() as isize;
        if self.sparse {
            for (i, o) in out.iter_mut().enumerate() {
                let i = i as isize;
                let mut acc = 0.0;
                for &(k, w) in &self.taps {
                    let j = i + k;
                    if j >= 0 && j < n {
                        acc += w * f[j as usize];
                    }
                }
                *o = acc;
            }
            return;
        }
        let kmax = self.offset_max();
        for (i, o) in out.iter_mut().enumerate() {
            let i = i as isize;
            let j0 = (i + self.offset_min).max(0);
            let j1 = (i + kmax).min(n - 1);
            if j1 < j0 {
                *o = 0.0;
                continue;
            }
            let w0 = (j0 - i - self.offset_min) as usize;
            let len = (j1 - j0 + 1) as usize;
            *o = dot4(&self.weights[w0..w0 + len], &f[j0 as usize..j0 as usize + len]);
        }
    }

    /// `out_k = sum_i nu[i] w[k - i]`, the transpose of [`Stencil::apply`].
    pub fn apply_transpose(&self, nu: &[f64], out: &mut [f64]) {
        let n = nu.len() as isize;
        if self.sparse {
            for (k, o) in out.iter_mut().enumerate() {
                let k = k as isize;
                let mut acc = 0.0;
                for &(d, w) in &self.taps {
                    let i = k - d;
                    if i >= 0 && i < n {
                        acc += w * nu[i as usize];
                    }
                }
                *o = acc;
            }
            return;
        }
        let kmax = self.offset_max();
        for (k, o) in out.iter_mut().enumerate() {
            let k = k as isize;
            // i runs over k - kmax ..= k - kmin, reversed weights index t = i - (k - kmax)
            let i0 = (k - kmax).max(0);
            let i1 = (k - self.offset_min).min(n - 1);
            if i1 < i0 {
                *o = 0.0;
                continue;
            }
            let t0 = (i0 - (k - kmax)) as usize;
            let len = (i1 - i0 + 1) as usize;
            *o = dot4(&self.reversed[t0..t0 + len], &nu[i0 as usize..i0 as usize + len]);
        }
    }

    /// `sum_j W_ij` restricted to `j` inside a grid of `n` cells.
    pub fn inside_mass(&self, i: usize, n: usize) -> f64 {
        let i = i as isize;
        (self.offset_min..=self.offset_max())
            .zip(&self.weights)
            .filter(|(k, _)| i + k >= 0 && i + k < n as isize)
            .map(|(_, w)| w)
            .sum()
    }
}

/// Dot product with four independent accumulators (fixed summation order).
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// The semigroup of the nonlocal transport equation on a truncated grid.
#[derive(Debug, Clone)]
pub struct PdeSemigroup {
    model: ModelSpec,
    grid: Grid1D,
    dt: f64,
    exp_factors: Vec<f64>,
    potential: Vec<f64>,
    stencil: Stencil,
    inside_mass: Vec<f64>,
    /// Leaked fraction of the initial mass above which evolutions warn.
    pub leak_warning: f64,
}

/// Mass discarded at the boundary during a direct evolution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Leakage {
    pub transport: f64,
    pub kernel: f64,
}

impl Leakage {
    pub fn total(&self) -> f64 {
        self.transport + self.kernel
    }
}

impl PdeSemigroup {
    pub fn new(model: ModelSpec, grid: Grid1D) -> Result<Self> {
        model.validate()?;
        let dx = grid.dx();
        let exp_factors = (0..grid.len())
            .map(|i| (dx * model.potential.value(grid.center(i) + dx / 2.0)).exp())
            .collect();
        let potential = grid.centers().iter().map(|x| model.potential.value(*x)).collect();
        let stencil = Stencil::for_kernel(&model.kernel, dx);
        // one extra entry for the virtual cell past the right end
        let inside_mass = (0..=grid.len()).map(|i| stencil.inside_mass(i, grid.len())).collect();
        Ok(Self { model, grid, dt: dx, exp_factors, potential, stencil, inside_mass, leak_warning: 1e-6 })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// `a` at the cell centers.
    pub fn potential_values(&self) -> &[f64] {
        &self.potential
    }

    /// `exp(int a)` over the cell traversed in one step, per source cell.
    pub fn exp_factors(&self) -> &[f64] {
        &self.exp_factors
    }

    /// Kernel quadrature `int f(y) Q(x_i, dy)` at every cell.
    pub fn kernel_apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.stencil.apply(f, &mut out);
        out
    }

    /// One dual step `f -> M_dt f`.
    pub fn step_dual(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let dt = self.dt;
        let st = &self.stencil;
        let kmax = st.offset_max();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let s = i + 1;
            let gain = if st.sparse {
                st.taps
                    .iter()
                    .filter_map(|&(k, w)| {
                        let j = s as isize + k;
                        (j >= 0 && j < n as isize).then(|| w * f[j as usize])
                    })
                    .sum::<f64>()
            } else {
                let si = s as isize;
                let j0 = (si + st.offset_min).max(0);
                let j1 = (si + kmax).min(n as isize - 1);
                if j1 < j0 {
                    0.0
                } else {
                    let w0 = (j0 - si - st.offset_min) as usize;
                    let len = (j1 - j0 + 1) as usize;
                    dot4(&st.weights[w0..w0 + len], &f[j0 as usize..j0 as usize + len])
                }
            };
            let fs = if s < n { f[s] } else { 0.0 };
            *o = self.exp_factors[i] * (fs + dt * gain);
        }
    }

    /// One direct step `mu -> mu M_dt`; returns the mass discarded at the
    /// boundary.
    pub fn step_direct(&self, mu: &[f64], out: &mut [f64]) -> Leakage {
        let n = mu.len();
        let mut nu = vec![0.0; n];
        for k in 1..n {
            nu[k] = mu[k - 1] * self.exp_factors[k - 1];
        }
        // mass pushed to the virtual cell `n` still jumps back through the kernel
        let transport = mu[n - 1] * self.exp_factors[n - 1];
        self.stencil.apply_transpose(&nu, out);
        let st = &self.stencil;
        for k in (n as isize + st.offset_min).max(0)..(n as isize + st.offset_max() + 1).min(n as isize) {
            out[k as usize] += st.weights[(k - n as isize - st.offset_min) as usize] * transport;
        }
        let total = st.total();
        let mut kernel = transport * (total - self.inside_mass[n]);
        for k in 0..n {
            kernel += nu[k] * (total - self.inside_mass[k]);
            out[k] = nu[k] + self.dt * out[k];
        }
        Leakage { transport, kernel: self.dt * kernel }
    }

    /// `M_t f`, with `t` rounded down to a multiple of `dt`.
    pub fn evolve_function(&self, f: &GridFunction, t: f64) -> Result<GridFunction> {
        self.check_grid(f.grid())?;
        check_time(t)?;
        let steps = self.steps_for(t);
        let v = crate::oracle::evolve(self, crate::oracle::Action::Right, f.values(), steps);
        GridFunction::new(self.grid, v)
    }

    /// `mu M_t` and the accumulated boundary leakage.
    pub fn evolve_measure(&self, mu: &DiscreteMeasure, t: f64) -> Result<(DiscreteMeasure, Leakage)> {
        self.check_grid(mu.grid())?;
        check_time(t)?;
        let steps = self.steps_for(t);
        let initial = mu.total_variation();
        let mut cur = mu.masses().to_vec();
        let mut next = vec![0.0; cur.len()];
        let mut leak = Leakage::default();
        for _ in 0..steps {
            let l = self.step_direct(&cur, &mut next);
            leak.transport += l.transport;
            leak.kernel += l.kernel;
            std::mem::swap(&mut cur, &mut next);
        }
        if initial > 0.0 && leak.total().abs() > self.leak_warning * initial {
            log::warn!(
                "boundary leakage {:.3e} exceeds {:.1e} of the initial mass; the grid may be too small",
                leak.total(),
                self.leak_warning
            );
        }
        Ok((DiscreteMeasure::new(self.grid, cur)?, leak))
    }

    /// Generator `L f = f' + a f + int f(y) Q(x, dy)` at the cell centers,
    /// given values and derivative values.
    pub fn generator(&self, f: &[f64], f_prime: &[f64]) -> Vec<f64> {
        let q = self.kernel_apply(f);
        (0..f.len()).map(|i| f_prime[i] + self.potential[i] * f[i] + q[i]).collect()
    }

    /// `eta = min_{[y1, y2]} M_tau 1_{[x1, x2]}`; positivity of `eta` is the
    /// grid form of the positivity lemma.
    pub fn check_positivity_lemma(&self, x1: f64, x2: f64, y1: f64, y2: f64, tau: f64) -> Result<f64> {
        if !(x1 < x2 && y1 < y2 && tau > 0.0) {
            return invalid("positivity lemma needs x1 < x2, y1 < y2 and tau > 0");
        }
        let g = &self.grid;
        if y1 < g.lower() || y2 > g.upper() {
            return invalid(format!("window [{y1}, {y2}] is outside the grid"));
        }
        let ys = g.cells_in(y1, y2);
        if ys.is_empty() {
            return invalid(format!("window [{y1}, {y2}] contains no cell center"));
        }
        let xs = g.cells_in(x1, x2);
        let mut f = vec![0.0; g.len()];
        f[xs].iter_mut().for_each(|v| *v = 1.0);
        let steps = self.steps_for(tau);
        let out = crate::oracle::evolve(self, crate::oracle::Action::Right, &f, steps);
        Ok(out[ys].iter().copied().fold(f64::INFINITY, f64::min))
    }

    fn check_grid(&self, g: &Grid1D) -> Result<()> {
        if g != &self.grid {
            return Err(crate::Error::GridMismatch("state lives on a different grid".into()));
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return invalid(format!("time must be finite and nonnegative, got {t}"));
    }
    Ok(())
}

impl SemigroupOracle for PdeSemigroup {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn time_step(&self) -> f64 {
        self.dt
    }

    fn apply_right(&self, f: &[f64], out: &mut [f64]) {
        self.step_dual(f, out);
    }

    fn apply_left(&self, mu: &[f64], out: &mut [f64]) {
        self.step_direct(mu, out);
    }
}
