//! Perron eigentriplets by power iteration, convergence profiles with rate
//! fits and verdicts, and the counterexample scenarios.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lyapunov::LyapunovConstruction;
use crate::oracle::{evolve, evolve_scaled, trajectory, Action, ScaledVector, SemigroupOracle};
use crate::pde::PdeSemigroup;
use crate::sigma::H1H2PrimeReport;
use crate::spaces::{sup_norm, tv_norm, DiscreteMeasure};

/// Stopping rule of [`power_triplet`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerOptions {
    /// Successive normalized iterates must differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of trailing iterations whose log growth factors are averaged.
    pub window: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 20_000, window: 10 }
    }
}

/// `(lambda, h, gamma)` with `gamma(h) = 1` and `sup h = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigentriplet {
    pub lambda: f64,
    /// Estimate from the right (function) iteration.
    pub lambda_right: f64,
    /// Estimate from the left (measure) iteration.
    pub lambda_left: f64,
    pub tau: f64,
    pub h: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `sup |M_tau h - e^{lambda tau} h|`.
    pub residual_h: f64,
    /// `||gamma M_tau - e^{lambda tau} gamma||_TV`.
    pub residual_gamma: f64,
    pub iterations_right: usize,
    pub iterations_left: usize,
}

impl Eigentriplet {
    /// `mu(h)` for a vector of cell masses.
    pub fn project(&self, mu: &[f64]) -> f64 {
        mu.iter().zip(&self.h).map(|(m, h)| m * h).sum()
    }
}

fn apply_steps<S: SemigroupOracle + ?Sized>(s: &S, action: Action, v: &mut Vec<f64>, buf: &mut Vec<f64>, steps: usize) {
    for _ in 0..steps {
        match action {
            Action::Right => s.apply_right(v, buf),
            Action::Left => s.apply_left(v, buf),
        }
        std::mem::swap(v, buf);
    }
}

struct PowerRun {
    vector: Vec<f64>,
    log_growth: f64,
    iterations: usize,
}

fn power_one_side<S: SemigroupOracle + ?Sized>(
    s: &S,
    action: Action,
    start: Vec<f64>,
    steps: usize,
    tau: f64,
    opts: &PowerOptions,
) -> Result<PowerRun> {
    let norm = |v: &[f64]| match action {
        Action::Right => sup_norm(v),
        Action::Left => tv_norm(v),
    };
    let mut v = start;
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut buf = vec![0.0; v.len()];
    let mut prev = v.clone();
    let mut logs: Vec<f64> = Vec::new();
    let mut converged_at = None;
    let mut last_diff = f64::INFINITY;
    for it in 1..=opts.max_iter {
        apply_steps(s, action, &mut v, &mut buf, steps);
        let f = norm(&v);
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Construction(format!("iterate norm became {f} at iteration {it}")));
        }
        v.iter_mut().for_each(|x| *x /= f);
        logs.push(f.ln());
        if converged_at.is_none() {
            last_diff = match action {
                Action::Right => v.iter().zip(&prev).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs())),
                Action::Left => v.iter().zip(&prev).map(|(x, y)| (x - y).abs()).sum(),
            };
            if last_diff < opts.tol {
                converged_at = Some(it);
            }
            prev.copy_from_slice(&v);
        }
        if let Some(c) = converged_at {
            if it >= c + opts.window {
                let tail = &logs[logs.len() - opts.window.max(1)..];
                let mean = tail.iter().sum::<f64>() / tail.len() as f64;
                return Ok(PowerRun { vector: v, log_growth: mean / tau, iterations: it });
            }
        }
    }
    let keep = logs.len().saturating_sub(50);
    Err(Error::NonConvergent {
        iterations: opts.max_iter,
        last_residual: last_diff,
        growth_factors: logs[keep..].to_vec(),
    })
}

/// Power iteration on both actions of `M_tau`.
///
/// The right iteration starts from `h = 1`, the left one from the uniform
/// probability vector. `tau` must be a multiple of the oracle's time step.
pub fn power_triplet<S: SemigroupOracle + ?Sized>(s: &S, tau: f64, opts: &PowerOptions) -> Result<Eigentriplet> {
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return invalid("power iteration needs tol > 0 and max_iter > 0");
    }
    let n = s.len();
    let steps = s.steps_for(tau).max(1);
    let tau = steps as f64 * s.time_step();
    let right = power_one_side(s, Action::Right, vec![1.0; n], steps, tau, opts)?;
    let left = power_one_side(s, Action::Left, vec![1.0 / n as f64; n], steps, tau, opts)?;
    let lambda = right.log_growth;

    let h = right.vector;
    let mut gamma = left.vector;
    let gh: f64 = gamma.iter().zip(&h).map(|(g, v)| g * v).sum();
    if !(gh > 0.0) {
        return Err(Error::Construction(format!("gamma(h) = {gh} is not positive")));
    }
    gamma.iter_mut().for_each(|g| *g /= gh);

    let growth = (lambda * tau).exp();
    let mut buf = vec![0.0; n];
    let mut mh = h.clone();
    apply_steps(s, Action::Right, &mut mh, &mut buf, steps);
    let residual_h = mh.iter().zip(&h).fold(0.0_f64, |a, (m, v)| a.max((m - growth * v).abs()));
    let mut mg = gamma.clone();
    apply_steps(s, Action::Left, &mut mg, &mut buf, steps);
    let residual_gamma = mg.iter().zip(&gamma).map(|(m, g)| (m - growth * g).abs()).sum();

    Ok(Eigentriplet {
        lambda,
        lambda_right: right.log_growth,
        lambda_left: left.log_growth,
        tau,
        h,
        gamma,
        residual_h,
        residual_gamma,
        iterations_right: right.iterations,
        iterations_left: left.iterations,
    })
}

/// Classification of a residual series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Exponential,
    Stalled,
    Periodic,
}

/// Thresholds used to classify a residual series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileOptions {
    /// Fraction of the horizon where the fit window starts.
    pub window_start: f64,
    /// Minimum coefficient of determination of the log-linear fit.
    pub min_fit_quality: f64,
    /// Periodogram peak over median ratio that counts as periodic.
    pub peak_ratio: f64,
    /// Residuals below `floor * (|mu(h)| ||gamma||_TV + ||mu||_TV)` are at
    /// rounding level and left out of the fit.
    pub floor: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { window_start: 0.25, min_fit_quality: 0.99, peak_ratio: 5.0, floor: 1e-9 }
    }
}

/// Dominant frequency of a sampled series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralPeak {
    pub period: f64,
    /// Peak power over the median power of the raw periodogram.
    pub ratio: f64,
}

/// Residual series `r_k = ||e^{-lambda t_k} mu M_{t_k} - mu(h) gamma||_TV`
/// with its rate fit and verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(e^{-lambda t} mu M_t - mu(h) gamma)(g)` for the probe `g(x) = x`
    /// (cell index on abstract state spaces).
    pub moment_residuals: Vec<f64>,
    /// Growth rate of `log ||mu M_t||_TV` between samples.
    pub lambda_running: Vec<f64>,
    pub omega: Option<f64>,
    pub prefactor: Option<f64>,
    pub fit_quality: Option<f64>,
    pub fit_points: usize,
    pub verdict: Verdict,
    pub peak: Option<SpectralPeak>,
    /// Largest residual over the fit window.
    pub late_max_residual: f64,
    pub projection: f64,
    /// `e^{-lambda T} mu M_T` at the final time.
    #[serde(skip)]
    pub terminal: Vec<f64>,
}

/// Least-squares line `y = a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return (my, 0.0, 0.0);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 0.0 };
    (a, b, r2)
}

fn power_at(x: &[f64], dt: f64, freq: f64) -> f64 {
    let n = x.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        // Hann taper
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        let ph = -2.0 * std::f64::consts::PI * freq * k as f64 * dt;
        re += w * v * ph.cos();
        im += w * v * ph.sin();
    }
    re * re + im * im
}

/// Periodogram peak of a uniformly sampled series after removing its mean;
/// `None` for series that are constant up to rounding.
///
/// The peak frequency is located on the Fourier grid, then refined by a
/// golden-section search of the tapered power between the neighbouring bins.
pub fn periodogram_peak(series: &[f64], dt: f64) -> Option<SpectralPeak> {
    let n = series.len();
    if n < 8 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    // a series constant up to rounding carries no frequency
    let scale = series.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if !(rms > 1e-10 * scale) {
        return None;
    }
    let span = n as f64 * dt;
    let bins: Vec<f64> = (1..=n / 2).map(|k| power_at(&x, dt, k as f64 / span)).collect();
    let mut sorted = bins.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let (kmax, pmax) = bins.iter().enumerate().fold((0, 0.0), |acc, (k, p)| if *p > acc.1 { (k, *p) } else { acc });
    if !(pmax > 0.0) {
        return None;
    }
    let ratio = if median > 0.0 { pmax / median } else { f64::INFINITY };
    let f0 = (kmax + 1) as f64 / span;
    let df = 1.0 / span;
    let (mut a, mut b) = ((f0 - df).max(0.5 * df), f0 + df);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut pc, mut pd) = (power_at(&x, dt, c), power_at(&x, dt, d));
    for _ in 0..80 {
        if pc > pd {
            b = d;
            d = c;
            pd = pc;
            c = b - g * (b - a);
            pc = power_at(&x, dt, c);
        } else {
            a = c;
            c = d;
            pc = pd;
            d = a + g * (b - a);
            pd = power_at(&x, dt, d);
        }
    }
    let f = 0.5 * (a + b);
    Some(SpectralPeak { period: 1.0 / f, ratio })
}

/// Evolve `mu0` to `horizon`, record residuals every `sample_dt` and
/// classify the series.
pub fn convergence_profile<S: SemigroupOracle + ?Sized>(
    s: &S,
    triplet: &Eigentriplet,
    mu0: &[f64],
    horizon: f64,
    sample_dt: f64,
    opts: &ProfileOptions,
) -> Result<ConvergenceReport> {
    if mu0.len() != s.len() {
        return Err(Error::GridMismatch("initial measure has the wrong length".into()));
    }
    if !(horizon > 0.0 && sample_dt > 0.0 && sample_dt <= horizon) {
        return invalid("need 0 < sample_dt <= horizon");
    }
    if triplet.residual_h.max(triplet.residual_gamma) > 1e-6 {
        log::warn!(
            "eigentriplet residuals ({:.2e}, {:.2e}) exceed 1e-6",
            triplet.residual_h,
            triplet.residual_gamma
        );
    }
    let dt = s.time_step();
    let stride = s.steps_for(sample_dt).max(1);
    let sample_dt = stride as f64 * dt;
    let n_samples = (horizon / sample_dt + 1e-9).floor() as usize;
    let mass0 = tv_norm(mu0);
    let projection = triplet.project(mu0);
    let target: Vec<f64> = triplet.gamma.iter().map(|g| projection * g).collect();
    let probe: Vec<f64> = (0..s.len()).map(|i| i as f64).collect();
    let target_moment: f64 = target.iter().zip(&probe).map(|(a, b)| a * b).sum();

    let mut values = mu0.to_vec();
    let mut log_scale = 0.0_f64;
    let mut buf = vec![0.0; values.len()];
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut residuals = Vec::with_capacity(n_samples + 1);
    let mut moments = Vec::with_capacity(n_samples + 1);
    let mut running = Vec::with_capacity(n_samples + 1);
    let mut last_log_mass = mass0.ln();
    let mut record = |t: f64, values: &[f64], log_scale: f64, running_rate: f64| {
        let factor = (log_scale - triplet.lambda * t).exp();
        let mut r = 0.0;
        let mut m = 0.0;
        for ((v, g), p) in values.iter().zip(&target).zip(&probe) {
            let d = factor * v - g;
            r += d.abs();
            m += factor * v * p;
        }
        times.push(t);
        residuals.push(r);
        moments.push(m - target_moment);
        running.push(running_rate);
    };
    record(0.0, &values, 0.0, triplet.lambda);
    for k in 1..=n_samples {
        for _ in 0..stride {
            s.apply_left(&values, &mut buf);
            std::mem::swap(&mut values, &mut buf);
        }
        let m = tv_norm(&values);
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Construction(format!("measure mass became {m}")));
        }
        values.iter_mut().for_each(|v| *v /= m);
        log_scale += m.ln();
        let log_mass = log_scale;
        let rate = (log_mass - last_log_mass) / sample_dt;
        last_log_mass = log_mass;
        record(k as f64 * sample_dt, &values, log_scale, rate);
    }
    let t_end = n_samples as f64 * sample_dt;
    let terminal_factor = (log_scale - triplet.lambda * t_end).exp();
    let terminal: Vec<f64> = values.iter().map(|v| v * terminal_factor).collect();

    let start = opts.window_start * horizon;
    let idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= start - 1e-12).collect();
    let late_max_residual = idx.iter().map(|&k| residuals[k]).fold(0.0, f64::max);
    let floor = opts.floor * (projection.abs() * tv_norm(&triplet.gamma) + mass0).max(1e-300);
    let fit_idx: Vec<usize> = idx.iter().copied().filter(|&k| residuals[k] > floor).collect();

    let mut omega = None;
    let mut prefactor = None;
    let mut fit_quality = None;
    let mut verdict = None;
    if fit_idx.len() >= 3 {
        let x: Vec<f64> = fit_idx.iter().map(|&k| times[k]).collect();
        let y: Vec<f64> = fit_idx.iter().map(|&k| residuals[k].ln()).collect();
        let (a, b, r2) = linear_fit(&x, &y);
        omega = Some(-b);
        prefactor = Some(a.exp() / mass0.max(1e-300));
        fit_quality = Some(r2);
        if b < 0.0 && r2 >= opts.min_fit_quality {
            verdict = Some(Verdict::Exponential);
        }
    } else if late_max_residual <= floor {
        // converged to the residual floor before the window
        let (x, y): (Vec<f64>, Vec<f64>) =
            (0..times.len()).filter(|&k| residuals[k] > floor).map(|k| (times[k], residuals[k].ln())).unzip();
        if x.len() >= 3 {
            let (a, b, r2) = linear_fit(&x, &y);
            omega = Some(-b);
            prefactor = Some(a.exp() / mass0.max(1e-300));
            fit_quality = Some(r2);
        } else {
            prefactor = Some(late_max_residual / mass0.max(1e-300));
        }
        verdict = Some(Verdict::Exponential);
    }

    let series_r: Vec<f64> = idx.iter().map(|&k| residuals[k]).collect();
    let series_m: Vec<f64> = idx.iter().map(|&k| moments[k]).collect();
    let peak = [periodogram_peak(&series_r, sample_dt), periodogram_peak(&series_m, sample_dt)]
        .into_iter()
        .flatten()
        .filter(|p| p.ratio.is_finite())
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let verdict = verdict.unwrap_or(match &peak {
        Some(p) if p.ratio >= opts.peak_ratio => Verdict::Periodic,
        _ => Verdict::Stalled,
    });

    Ok(ConvergenceReport {
        times,
        residuals,
        moment_residuals: moments,
        lambda_running: running,
        omega,
        prefactor,
        fit_quality,
        fit_points: fit_idx.len(),
        verdict,
        peak,
        late_max_residual,
        projection,
        terminal,
    })
}

/// Cyclic shift on `n` cells of `[0, 1)`, the exact semigroup
/// `M_t f(x) = f(x + t - floor(x + t))` sampled at `dt = 1/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicShift {
    n: usize,
}

impl CyclicShift {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid("cyclic shift needs at least 2 cells");
        }
        Ok(Self { n })
    }
}

impl SemigroupOracle for CyclicShift {
    fn len(&self) -> usize {
        self.n
    }

    fn time_step(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn apply_right(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = f[(i + 1) % n];
        }
    }

    fn apply_left(&self, mu: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[(i + 1) % n] = mu[i];
        }
    }
}

/// Outcome of a counterexample scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    /// Error message of the power iteration at the requested `tau`, if any.
    pub power_iteration: Option<String>,
    pub triplet_tau: f64,
    pub lambda: f64,
    pub report: ConvergenceReport,
    /// Largest deviation of `M_t 1` from one (rotation only).
    pub mass_defect: Option<f64>,
    /// H2 margin of the Dirac crossing laws (rotation only).
    pub h2_margin: Option<f64>,
    /// Largest mass fraction outside the lattice `x0 + t + Z` (atomic kernel only).
    pub sublattice_defect: Option<f64>,
}

/// H2 margin of the rotation, whose crossing laws are the atoms
/// `sigma_{x,y} = delta_{(y - x) mod 1}` on the time grid `k / n`.
pub fn rotation_h2_margin(n: usize) -> f64 {
    let mut sup_inf = 0.0_f64;
    for x in 0..n {
        for xp in 0..n {
            let inf = (0..n)
                .map(|y| if (y + n - x) % n == (y + n - xp) % n { 0.0 } else { 2.0 })
                .fold(f64::INFINITY, f64::min);
            sup_inf = sup_inf.max(inf);
        }
    }
    2.0 - sup_inf
}

/// The rotation `x -> x + t mod 1` on `n_cells` cells: mass is conserved,
/// the crossing laws are Dirac masses and residuals never decay.
pub fn scenario_rotation(n_cells: usize, horizon: f64, sample_dt: f64, x0: f64) -> Result<ScenarioReport> {
    let s = CyclicShift::new(n_cells)?;
    let dt = s.time_step();
    // mass conservation over one full turn
    let mut one = vec![1.0; n_cells];
    let mut buf = vec![0.0; n_cells];
    let mut defect = 0.0_f64;
    for _ in 0..n_cells {
        s.apply_right(&one, &mut buf);
        std::mem::swap(&mut one, &mut buf);
        defect = defect.max(sup_norm(&one.iter().map(|v| v - 1.0).collect::<Vec<_>>()));
    }
    let h2_margin = rotation_h2_margin(n_cells);
    let opts = PowerOptions { tol: 1e-12, max_iter: 2_000, window: 10 };
    let tau = 0.4_f64.max(dt);
    let triplet = power_triplet(&s, tau, &opts)?;
    let i0 = ((x0.rem_euclid(1.0)) * n_cells as f64).floor() as usize % n_cells;
    let mut mu0 = vec![0.0; n_cells];
    mu0[i0] = 1.0;
    let report = convergence_profile(&s, &triplet, &mu0, horizon, sample_dt, &ProfileOptions::default())?;
    Ok(ScenarioReport {
        power_iteration: None,
        triplet_tau: triplet.tau,
        lambda: triplet.lambda,
        report,
        mass_defect: Some(defect),
        h2_margin: Some(h2_margin),
        sublattice_defect: None,
    })
}

/// The nonlocal equation with an atomic kernel `delta_{x-1} + delta_{x+1}`.
///
/// The power iteration is tried at `tau`; when it does not converge the
/// error is recorded and the triplet is taken at `tau = 1`, the atom spacing.
pub fn scenario_singular_kernel(
    s: &PdeSemigroup,
    tau: f64,
    horizon: f64,
    sample_dt: f64,
    x0: f64,
) -> Result<ScenarioReport> {
    if !s.model().kernel.is_atomic() {
        return invalid("the singular scenario needs an atomic kernel");
    }
    let g = *s.grid();
    let opts = PowerOptions::default();
    let first = PowerOptions { max_iter: 2_000, ..opts.clone() };
    let (triplet, power_iteration) = match power_triplet(s, tau, &first) {
        Ok(t) => (t, None),
        Err(e @ Error::NonConvergent { .. }) => (power_triplet(s, 1.0, &opts)?, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let i0 = g.nearest(x0);
    let mu0 = DiscreteMeasure::dirac(g, g.center(i0))?.into_masses();
    let report = convergence_profile(s, &triplet, &mu0, horizon, sample_dt, &ProfileOptions::default())?;
    // atoms only shift by one cell per step and jump by +-1
    let period = (1.0 / g.dx()).round() as usize;
    let steps = s.steps_for(horizon);
    let mut mu = mu0;
    let mut buf = vec![0.0; mu.len()];
    let mut defect = 0.0_f64;
    for k in 1..=steps {
        s.apply_left(&mu, &mut buf);
        std::mem::swap(&mut mu, &mut buf);
        let total = tv_norm(&mu);
        mu.iter_mut().for_each(|v| *v /= total);
        let off: f64 = mu
            .iter()
            .enumerate()
            .filter(|(j, _)| (*j as isize - i0 as isize - k as isize).rem_euclid(period as isize) != 0)
            .map(|(_, v)| v.abs())
            .sum();
        defect = defect.max(off);
    }
    Ok(ScenarioReport {
        power_iteration,
        triplet_tau: triplet.tau,
        lambda: triplet.lambda,
        report,
        mass_defect: None,
        h2_margin: None,
        sublattice_defect: Some(defect),
    })
}

/// `min_K r_t / max_K r_t` with `r_t = M_t psi / psi`, for each `t`.
pub fn harnack_ratios(s: &PdeSemigroup, psi: &[f64], cells: &[usize], t_list: &[f64]) -> Result<Vec<f64>> {
    if cells.is_empty() {
        return invalid("no cells to compare");
    }
    if t_list.windows(2).any(|w| w[1] < w[0]) || t_list.iter().any(|t| !(*t >= 0.0)) {
        return invalid("t_list must be nonnegative and increasing");
    }
    let mut cur = ScaledVector::new(psi.to_vec());
    let mut done = 0;
    let mut out = Vec::with_capacity(t_list.len());
    for t in t_list {
        let steps = s.steps_for(*t);
        cur = evolve_scaled(s, Action::Right, cur, steps - done);
        done = steps;
        let r = cells.iter().map(|&i| cur.values[i] / psi[i]);
        let lo = r.clone().fold(f64::INFINITY, f64::min);
        let hi = r.fold(0.0, f64::max);
        out.push(lo / hi);
    }
    Ok(out)
}

/// Minorization check for one pair `(x, x')`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMinorization {
    pub x: f64,
    pub x_prime: f64,
    /// The `y` maximizing `m_{x,x',y}`.
    pub y: f64,
    pub m: f64,
    /// Total mass of `nu_{x,x'}`; one up to quadrature.
    pub nu_mass: f64,
    /// `min_k (delta_x M_tau(psi .)_k / M_tau psi(x) - c_tilde nu_k)`, and the same for `x'`.
    pub margin_x: f64,
    pub margin_x_prime: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinorizationReport {
    pub t_list: Vec<f64>,
    /// Harnack constant per `t`; `d` is their minimum.
    pub d_per_t: Vec<f64>,
    pub d: f64,
    pub c: f64,
    pub eps_overlap: f64,
    /// `sup_K M_tau psi / psi`.
    pub growth_on_k: f64,
    /// `c eps_overlap / growth_on_k`.
    pub c_tilde: f64,
    pub pairs: Vec<PairMinorization>,
    pub tolerance: f64,
    pub pass: bool,
    /// `nu_{x,x'}` on the cells of `K`, one per pair.
    #[serde(skip)]
    pub nus: Vec<Vec<f64>>,
}

/// `d` over `t_list` and the Doeblin constant `c_tilde` with the measures
/// `nu_{x,x'}`, checked against evolved Dirac rows on `n_pairs` seeded pairs.
pub fn estimate_d_and_ctilde(
    s: &PdeSemigroup,
    con: &LyapunovConstruction,
    cert: &H1H2PrimeReport,
    t_list: &[f64],
    n_pairs: usize,
    seed: u64,
) -> Result<MinorizationReport> {
    let g = *s.grid();
    let d_per_t = harnack_ratios(s, &con.psi, &con.k_cells, t_list)?;
    let d = d_per_t.iter().copied().fold(f64::INFINITY, f64::min);
    let c_tilde = cert.c * cert.eps_overlap / cert.growth_on_k;
    let steps = s.steps_for(con.tau);
    let tolerance = 1e-10;
    let p = cert.samples.len();
    let mut all: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |k| (i, k))).collect();
    if all.is_empty() {
        all.push((0, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = if all.len() <= n_pairs {
        all
    } else {
        rand::seq::index::sample(&mut rng, all.len(), n_pairs).into_iter().map(|k| all[k]).collect()
    };
    let nodes = cert.laws.laws.first().map(|l| l.nodes().to_vec()).unwrap_or_default();
    let mut in_k = vec![false; g.len()];
    for &i in &con.k_cells {
        in_k[i] = true;
    }
    let normalized_row = |cell: usize| -> Result<Vec<f64>> {
        let row = evolve(s, Action::Left, &DiscreteMeasure::dirac(g, g.center(cell))?.into_masses(), steps);
        let total: f64 = row.iter().zip(&con.psi).map(|(m, p)| m * p).sum();
        Ok(row.iter().zip(&con.psi).map(|(m, p)| m * p / total).collect())
    };
    let mut out = Vec::with_capacity(pairs.len());
    let mut nus = Vec::with_capacity(pairs.len());
    for (i, k) in pairs {
        let j = (0..p).max_by(|&a, &b| cert.m_values[i][k][a].total_cmp(&cert.m_values[i][k][b])).unwrap_or(0);
        let m = cert.m_values[i][k][j];
        let yc = cert.sample_cells[j];
        let overlap = cert.law(i, j).0.overlap_weights(cert.law(k, j).0)?;
        let rows = trajectory(s, Action::Left, &DiscreteMeasure::dirac(g, g.center(yc))?.into_masses(), steps);
        let mut nu = vec![0.0; g.len()];
        for (sl, ov) in nodes.iter().zip(&overlap) {
            if *ov == 0.0 {
                continue;
            }
            let u = ((con.tau - sl) / s.dt()).clamp(0.0, steps as f64);
            let a = (u.floor() as usize).min(steps.saturating_sub(1));
            let th = if steps == 0 { 0.0 } else { u - a as f64 };
            for q in 0..g.len() {
                if in_k[q] {
                    let row = if steps == 0 { rows[0][q] } else { (1.0 - th) * rows[a][q] + th * rows[a + 1][q] };
                    nu[q] += ov * row * con.psi[q];
                }
            }
        }
        let scale = m * con.psi[yc];
        nu.iter_mut().for_each(|v| *v /= scale);
        let nu_mass: f64 = nu.iter().sum();
        let margin = |lhs: &[f64]| lhs.iter().zip(&nu).map(|(l, n)| l - c_tilde * n).fold(f64::INFINITY, f64::min);
        let margin_x = margin(&normalized_row(cert.sample_cells[i])?);
        let margin_x_prime = margin(&normalized_row(cert.sample_cells[k])?);
        out.push(PairMinorization {
            x: cert.samples[i],
            x_prime: cert.samples[k],
            y: cert.samples[j],
            m,
            nu_mass,
            margin_x,
            margin_x_prime,
            pass: margin_x >= -tolerance && margin_x_prime >= -tolerance,
        });
        nus.push(con.k_cells.iter().map(|&q| nu[q]).collect());
    }
    let pass = d > 0.0 && c_tilde > 0.0 && out.iter().all(|p| p.pass);
    Ok(MinorizationReport {
        t_list: t_list.to_vec(),
        d_per_t,
        d,
        c: cert.c,
        eps_overlap: cert.eps_overlap,
        growth_on_k: cert.growth_on_k,
        c_tilde,
        pairs: out,
        tolerance,
        pass,
        nus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::FiniteGenerator;

    #[test]
    fn two_state_eigenvalue() {
        let g = FiniteGenerator::new(&[vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, -1.0]).unwrap();
        let m = crate::finite::matrix_exponential(&g, 0.5).unwrap();
        let t = power_triplet(&m, 0.5, &PowerOptions::default()).unwrap();
        assert!((t.lambda - (-3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
        assert!((t.project(&t.gamma) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 2.0).abs() < 1e-12 && (b + 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodogram_finds_sine_period() {
        let dt = 0.05;
        let series: Vec<f64> = (0..600).map(|k| (2.0 * std::f64::consts::PI * k as f64 * dt / 1.7).sin()).collect();
        let p = periodogram_peak(&series, dt).unwrap();
        assert!((p.period - 1.7).abs() < 1e-3, "{p:?}");
        assert!(p.ratio > 5.0);
    }

    #[test]
    fn rotation_is_periodic() {
        let r = scenario_rotation(100, 20.0, 0.05, 0.3).unwrap();
        assert_eq!(r.mass_defect, Some(0.0));
        assert_eq!(r.h2_margin, Some(0.0));
        assert_eq!(r.report.verdict, Verdict::Periodic);
        let p = r.report.peak.as_ref().unwrap();
        assert!((p.period - 1.0).abs() <= 0.01, "{p:?}");
    }
}
