//! Model data of the nonlocal transport equation
//! `d_t u + d_x u = int u(t, y) Q(y, dx) dy + a(x) u`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spaces::Grid1D;

/// The multiplicative potential `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Potential {
    /// `a(x) = a_bar`.
    Constant { a_bar: f64 },
    /// `a(x) = a_bar - s x^2`.
    Quadratic { a_bar: f64, s: f64 },
    /// Piecewise-linear interpolation of `(x, value)` nodes, constant beyond
    /// the first and last node.
    Table { xs: Vec<f64>, values: Vec<f64> },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Constant { a_bar } => {
                if !a_bar.is_finite() {
                    return invalid("constant potential must be finite");
                }
            }
            Potential::Quadratic { a_bar, s } => {
                if !(a_bar.is_finite() && s.is_finite() && *s >= 0.0) {
                    return invalid("quadratic potential needs finite a_bar and s >= 0");
                }
            }
            Potential::Table { xs, values } => validate_table(xs, values, "potential table")?,
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Constant { a_bar } => *a_bar,
            Potential::Quadratic { a_bar, s } => a_bar - s * x * x,
            Potential::Table { xs, values } => interpolate(xs, values, x),
        }
    }

    /// An antiderivative `A` with `A(0) = 0`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        match self {
            Potential::Constant { a_bar } => a_bar * x,
            Potential::Quadratic { a_bar, s } => a_bar * x - s * x * x * x / 3.0,
            Potential::Table { xs, values } => table_primitive(xs, values, x) - table_primitive(xs, values, 0.0),
        }
    }

    /// `int_x1^x2 a`.
    pub fn integral(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Potential::Table { xs, values } => table_primitive(xs, values, x2) - table_primitive(xs, values, x1),
            _ => self.antiderivative(x2) - self.antiderivative(x1),
        }
    }

    /// `sup a` over the real line.
    pub fn sup(&self) -> f64 {
        match self {
            Potential::Constant { a_bar } | Potential::Quadratic { a_bar, .. } => *a_bar,
            Potential::Table { values, .. } => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `inf a` over `(lo, hi)`; exact for every variant since tables are
    /// piecewise linear.
    pub fn inf_on(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Potential::Constant { a_bar } => *a_bar,
            Potential::Quadratic { .. } => self.value(lo).min(self.value(hi)).min(if lo < 0.0 && hi > 0.0 {
                self.value(0.0)
            } else {
                f64::INFINITY
            }),
            Potential::Table { xs, values } => {
                let mut m = self.value(lo).min(self.value(hi));
                for (x, v) in xs.iter().zip(values) {
                    if *x > lo && *x < hi {
                        m = m.min(*v);
                    }
                }
                m
            }
        }
    }
}

fn validate_table(xs: &[f64], values: &[f64], what: &str) -> Result<()> {
    if xs.len() < 2 || xs.len() != values.len() {
        return invalid(format!("{what} needs at least two (x, value) rows of equal length"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid(format!("{what} abscissae must be strictly increasing"));
    }
    if xs.iter().chain(values).any(|v| !v.is_finite()) {
        return invalid(format!("{what} entries must be finite"));
    }
    Ok(())
}

fn interpolate(xs: &[f64], values: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return values[0];
    }
    if x >= xs[n - 1] {
        return values[n - 1];
    }
    let k = xs.partition_point(|v| *v <= x) - 1;
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    values[k] + t * (values[k + 1] - values[k])
}

/// `int_{xs[0]}^x` of the interpolant (with constant extension).
fn table_primitive(xs: &[f64], values: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return values[0] * (x - xs[0]);
    }
    let mut acc = 0.0;
    for k in 0..n - 1 {
        let (x0, x1) = (xs[k], xs[k + 1]);
        if x <= x1 {
            let v = interpolate(xs, values, x);
            return acc + 0.5 * (values[k] + v) * (x - x0);
        }
        acc += 0.5 * (values[k] + values[k + 1]) * (x1 - x0);
    }
    acc + values[n - 1] * (x - xs[n - 1])
}

/// The jump kernel `Q(x, dy)`, translation invariant in every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `Q(x, dy) = kappa0 1_{(x - eps, x + eps)}(y) dy`.
    UniformBand { kappa0: f64, eps: f64 },
    /// Density `amplitude exp(-(y - x)^2 / (2 width^2))` on `|y - x| < cutoff`.
    TruncatedGaussian { amplitude: f64, width: f64, cutoff: f64 },
    /// `Q(x, .) = weight (delta_{x-1} + delta_{x+1})`.
    DiracPair {
        #[serde(default = "unit_weight")]
        weight: f64,
    },
    /// Density profile `J(y - x)`, piecewise linear, zero outside the table.
    Table { zs: Vec<f64>, values: Vec<f64> },
}

fn unit_weight() -> f64 {
    1.0
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::UniformBand { kappa0, eps } => {
                if !(kappa0.is_finite() && *kappa0 > 0.0 && eps.is_finite() && *eps > 0.0) {
                    return invalid("uniform band needs kappa0 > 0 and eps > 0");
                }
            }
            Kernel::TruncatedGaussian { amplitude, width, cutoff } => {
                if !(*amplitude > 0.0 && *width > 0.0 && *cutoff > 0.0)
                    || ![amplitude, width, cutoff].iter().all(|v| v.is_finite())
                {
                    return invalid("truncated gaussian needs positive finite amplitude, width and cutoff");
                }
            }
            Kernel::DiracPair { weight } => {
                if !(weight.is_finite() && *weight > 0.0) {
                    return invalid("dirac pair weight must be positive");
                }
            }
            Kernel::Table { zs, values } => {
                validate_table(zs, values, "kernel table")?;
                if values.iter().any(|v| *v < 0.0) {
                    return invalid("kernel table values must be nonnegative");
                }
            }
        }
        Ok(())
    }

    /// Density of `Q(x, x + dz)` in `z`; zero for the atomic kernel.
    pub fn density(&self, z: f64) -> f64 {
        match self {
            Kernel::UniformBand { kappa0, eps } => {
                if z.abs() < *eps {
                    *kappa0
                } else {
                    0.0
                }
            }
            Kernel::TruncatedGaussian { amplitude, width, cutoff } => {
                if z.abs() < *cutoff {
                    amplitude * (-(z * z) / (2.0 * width * width)).exp()
                } else {
                    0.0
                }
            }
            Kernel::DiracPair { .. } => 0.0,
            Kernel::Table { zs, values } => {
                if z < zs[0] || z > zs[zs.len() - 1] {
                    0.0
                } else {
                    interpolate(zs, values, z)
                }
            }
        }
    }

    /// Support of the profile in `z = y - x`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Kernel::UniformBand { eps, .. } => (-eps, *eps),
            Kernel::TruncatedGaussian { cutoff, .. } => (-cutoff, *cutoff),
            Kernel::DiracPair { .. } => (-1.0, 1.0),
            Kernel::Table { zs, .. } => (zs[0], zs[zs.len() - 1]),
        }
    }

    /// Total mass `Q(x, R)`.
    pub fn total_mass(&self) -> f64 {
        match self {
            Kernel::UniformBand { kappa0, eps } => 2.0 * kappa0 * eps,
            Kernel::TruncatedGaussian { amplitude, width, cutoff } => {
                amplitude * width * (2.0 * std::f64::consts::PI).sqrt() * erf(cutoff / (width * std::f64::consts::SQRT_2))
            }
            Kernel::DiracPair { weight } => 2.0 * weight,
            Kernel::Table { zs, values } => table_primitive(zs, values, zs[zs.len() - 1]),
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Kernel::DiracPair { .. })
    }

    /// Largest `kappa0` with `Q(x, dy) >= kappa0 1_{(x-eps, x+eps)}(y) dy`.
    pub fn lower_bound_on(&self, eps: f64) -> f64 {
        match self {
            Kernel::UniformBand { kappa0, eps: e } => {
                if eps <= *e {
                    *kappa0
                } else {
                    0.0
                }
            }
            Kernel::TruncatedGaussian { amplitude, width, cutoff } => {
                if eps <= *cutoff {
                    amplitude * (-(eps * eps) / (2.0 * width * width)).exp()
                } else {
                    0.0
                }
            }
            Kernel::DiracPair { .. } => 0.0,
            Kernel::Table { zs, values } => {
                if -eps < zs[0] || eps > zs[zs.len() - 1] {
                    return 0.0;
                }
                let mut m = interpolate(zs, values, -eps).min(interpolate(zs, values, eps));
                for (z, v) in zs.iter().zip(values) {
                    if z.abs() < eps {
                        m = m.min(*v);
                    }
                }
                m
            }
        }
    }
}

/// Error function: Maclaurin series below 3, continued fraction for `erfc`
/// above.
fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        // Maclaurin series
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x2 / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        // erfc continued fraction (Lentz)
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for n in 1..200 {
            let an = n as f64 / 2.0;
            d = x + an * d;
            d = 1.0 / d;
            c = x + an / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
    }
}

/// Model data `(a, Q)` together with the band lower bound `(kappa0, eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub potential: Potential,
    pub kernel: Kernel,
    /// Half-width of the band used for the lower bound; defaults to the band
    /// half-width for [`Kernel::UniformBand`].
    #[serde(default)]
    pub eps: Option<f64>,
}

impl ModelSpec {
    pub fn new(potential: Potential, kernel: Kernel) -> Result<Self> {
        let m = Self { potential, kernel, eps: None };
        m.validate()?;
        Ok(m)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return invalid("eps must be positive");
        }
        self.eps = Some(eps);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        self.kernel.validate()
    }

    /// `a_bar = sup a`.
    pub fn a_bar(&self) -> f64 {
        self.potential.sup()
    }

    /// `Q_bar = sup_x Q(x, R)`.
    pub fn q_bar(&self) -> f64 {
        self.kernel.total_mass()
    }

    /// Band half-width `eps` of the lower bound.
    pub fn eps(&self) -> f64 {
        match (self.eps, &self.kernel) {
            (Some(e), _) => e,
            (None, Kernel::UniformBand { eps, .. }) => *eps,
            (None, Kernel::TruncatedGaussian { width, cutoff, .. }) => width.min(*cutoff),
            (None, Kernel::Table { zs, .. }) => zs[zs.len() - 1].min(-zs[0]) / 2.0,
            (None, Kernel::DiracPair { .. }) => 0.0,
        }
    }

    /// `kappa0` of the band lower bound; zero when there is none.
    pub fn kappa0(&self) -> f64 {
        let e = self.eps();
        if e > 0.0 {
            self.kernel.lower_bound_on(e)
        } else {
            0.0
        }
    }

    /// Whether the potential at both boundary cells of `grid` is below
    /// `threshold`, the grid-level form of confinement.
    pub fn is_confining_on(&self, grid: &Grid1D, threshold: f64) -> bool {
        let n = grid.len();
        self.potential.value(grid.center(0)) < threshold && self.potential.value(grid.center(n - 1)) < threshold
    }
}
