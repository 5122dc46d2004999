//! Experiment configuration: parsing with field paths and cross-field checks.

use std::fmt;
use std::path::{Path, PathBuf};

use perron_core::lyapunov::KRule;
use perron_core::model::{Kernel, ModelSpec, Potential};
use perron_core::spaces::Grid1D;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FiniteH1h2,
    PdeConverge,
    LyapunovAudit,
    SigmaAudit,
    ScenarioRotation,
    ScenarioSingular,
    FullTheorem2Pipeline,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::FiniteH1h2 => "finite_h1h2",
            Self::PdeConverge => "pde_converge",
            Self::LyapunovAudit => "lyapunov_audit",
            Self::SigmaAudit => "sigma_audit",
            Self::ScenarioRotation => "scenario_rotation",
            Self::ScenarioSingular => "scenario_singular",
            Self::FullTheorem2Pipeline => "full_theorem2_pipeline",
        }
    }

    fn uses_pde(self) -> bool {
        !matches!(self, Self::FiniteH1h2 | Self::ScenarioRotation)
    }

    fn uses_sigma(self) -> bool {
        matches!(self, Self::SigmaAudit | Self::FullTheorem2Pipeline)
    }

    /// Experiments that draw seeded random trials.
    fn randomized(self) -> bool {
        self.uses_sigma()
    }
}

/// Potential and kernel, inline or from two-column CSV side-cars
/// (`x,value` and `z,density`) resolved against the config directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub potential: Option<Potential>,
    pub potential_csv: Option<PathBuf>,
    pub kernel: Option<Kernel>,
    pub kernel_csv: Option<PathBuf>,
    /// Band half-width of the kernel lower bound, when not implied by the kernel.
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// The grid is `[-half_width, half_width]`.
    pub half_width: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub tau: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
}

fn default_horizon() -> f64 {
    30.0
}

fn default_sample_dt() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub seed: Option<u64>,
    /// Time nodes of the crossing-time laws.
    pub n_time: usize,
    /// Random trials of the family inequality.
    pub trials: usize,
    pub power_tol: f64,
    pub power_max_iter: usize,
    /// Largest accepted eigentriplet residual.
    pub residual_tol: f64,
    /// Largest accepted TV distance between limits from different initial data.
    pub limit_tol: f64,
    /// Largest accepted relative spread of the fitted rates.
    pub rate_tol: f64,
    /// Half-width of `supp psi0`; the fixed-point rule is used when absent.
    pub x0: Option<f64>,
    pub r_factor: f64,
    pub k_rule: KRule,
    pub iterated_k: usize,
    pub level_cap: usize,
    pub max_samples: usize,
    pub pairs: usize,
    /// Harnack times as multiples of `tau`.
    pub t_multiples: Vec<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            seed: None,
            n_time: 26,
            trials: 100,
            power_tol: 1e-12,
            power_max_iter: 20_000,
            residual_tol: 1e-6,
            limit_tol: 1e-3,
            rate_tol: 0.1,
            x0: None,
            r_factor: 2.0,
            k_rule: KRule::Realized,
            iterated_k: 20,
            level_cap: 32,
            max_samples: 9,
            pairs: 10,
            t_multiples: vec![1.0, 2.0, 5.0, 10.0],
        }
    }
}

/// A finite chain: off-diagonal rates and the extra diagonal term, or the
/// `n`-state rotation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteBlock {
    pub rates: Option<Vec<Vec<f64>>>,
    pub diag_extra: Vec<f64>,
    pub rotation: Option<usize>,
    pub n_time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBlock {
    /// Starting point of the Dirac initial measure.
    pub x0: f64,
    /// Cells of the rotation.
    pub n_cells: usize,
    /// Kernel swapped in to confirm that convergence returns.
    pub contrast_kernel: Option<Kernel>,
}

impl Default for ScenarioBlock {
    fn default() -> Self {
        Self { x0: 0.0, n_cells: 200, contrast_kernel: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialMeasure {
    Dirac { x: f64 },
    /// Lebesgue measure restricted to `[lo, hi]`, normalized.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, formats: vec![Format::Json, Format::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model: Option<ModelBlock>,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    pub time: TimeBlock,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub finite: Option<FiniteBlock>,
    #[serde(default)]
    pub scenario: ScenarioBlock,
    #[serde(default)]
    pub initial: Vec<InitialMeasure>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// One problem found in a config, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

/// Parse a config, reporting the path of the first offending field.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "(root)".to_string() } else { path };
        ConfigError::Invalid(vec![Diagnostic::new(path, e.into_inner().to_string())])
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse(&text)
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| e.to_string())?;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |k: usize| -> Result<f64, String> {
            rec.get(k)
                .ok_or_else(|| format!("row {}: expected two columns", i + 1))?
                .trim()
                .parse()
                .map_err(|e| format!("row {}: {e}", i + 1))
        };
        xs.push(field(0)?);
        vs.push(field(1)?);
    }
    Ok((xs, vs))
}

fn positive(d: &mut Vec<Diagnostic>, path: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        d.push(Diagnostic::new(path, format!("must be positive and finite, got {v}")));
    }
}

impl ExperimentConfig {
    /// Resolve the model block, reading side-car tables relative to `base`.
    pub fn model_spec(&self, base: &Path) -> Result<ModelSpec, Diagnostic> {
        let m = self.model.as_ref().ok_or_else(|| Diagnostic::new("model", "required for this experiment"))?;
        let potential = match (&m.potential, &m.potential_csv) {
            (Some(p), None) => p.clone(),
            (None, Some(path)) => {
                let (xs, values) = read_table(&base.join(path)).map_err(|e| Diagnostic::new("model.potential_csv", e))?;
                Potential::Table { xs, values }
            }
            _ => return Err(Diagnostic::new("model.potential", "give exactly one of potential and potential_csv")),
        };
        let kernel = match (&m.kernel, &m.kernel_csv) {
            (Some(k), None) => k.clone(),
            (None, Some(path)) => {
                let (zs, values) = read_table(&base.join(path)).map_err(|e| Diagnostic::new("model.kernel_csv", e))?;
                Kernel::Table { zs, values }
            }
            _ => return Err(Diagnostic::new("model.kernel", "give exactly one of kernel and kernel_csv")),
        };
        let spec = ModelSpec::new(potential, kernel).map_err(|e| Diagnostic::new("model", e.to_string()))?;
        match m.eps {
            Some(eps) => spec.with_eps(eps).map_err(|e| Diagnostic::new("model.eps", e.to_string())),
            None => Ok(spec),
        }
    }

    pub fn grid(&self) -> Result<Grid1D, Diagnostic> {
        let g = self.grid.ok_or_else(|| Diagnostic::new("grid", "required for this experiment"))?;
        Grid1D::symmetric(g.half_width, g.n_cells).map_err(|e| Diagnostic::new("grid", e.to_string()))
    }

    /// Time step of the crossing-time laws used by the sigma checks.
    pub fn family_tau(&self, eps: f64) -> f64 {
        if self.time.tau < eps / 2.0 {
            self.time.tau
        } else {
            eps / 4.0
        }
    }

    /// Schema and cross-field checks; empty when the config can run.
    pub fn validate(&self, base: &Path) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let kind = self.experiment;
        positive(&mut d, "time.tau", self.time.tau);
        positive(&mut d, "time.horizon", self.time.horizon);
        positive(&mut d, "time.sample_dt", self.time.sample_dt);
        if self.time.sample_dt > self.time.horizon {
            d.push(Diagnostic::new("time.sample_dt", "must not exceed time.horizon"));
        }
        let n = &self.numerics;
        for (path, v) in [
            ("numerics.power_tol", n.power_tol),
            ("numerics.residual_tol", n.residual_tol),
            ("numerics.limit_tol", n.limit_tol),
            ("numerics.rate_tol", n.rate_tol),
        ] {
            positive(&mut d, path, v);
        }
        if n.n_time < 2 {
            d.push(Diagnostic::new("numerics.n_time", "needs at least 2 nodes"));
        }
        if n.r_factor <= 1.0 {
            d.push(Diagnostic::new("numerics.r_factor", "must exceed 1"));
        }
        if let Some(x0) = n.x0 {
            positive(&mut d, "numerics.x0", x0);
        }
        if n.t_multiples.is_empty() || n.t_multiples.iter().any(|t| t.is_nan() || *t <= 0.0) {
            d.push(Diagnostic::new("numerics.t_multiples", "needs positive entries"));
        }
        if self.output.formats.is_empty() {
            d.push(Diagnostic::new("output.formats", "needs at least one format"));
        }
        if kind.randomized() && n.seed.is_none() {
            d.push(Diagnostic::new("numerics.seed", format!("{} draws random trials and needs a seed", kind.name())));
        }

        match kind {
            ExperimentKind::FiniteH1h2 => self.validate_finite(&mut d),
            ExperimentKind::ScenarioRotation if self.scenario.n_cells < 2 => {
                d.push(Diagnostic::new("scenario.n_cells", "needs at least 2 cells"));
            }
            _ => {}
        }
        if !kind.uses_pde() {
            return d;
        }

        let grid = self.grid().map_err(|e| d.push(e)).ok();
        let model = self.model_spec(base).map_err(|e| d.push(e)).ok();
        if let Some(g) = grid {
            // the scheme advances one cell per step, so dt = dx
            let steps = self.time.tau / g.dx();
            if self.time.tau > 0.0 && (steps.round() < 1.0 || (steps - steps.round()).abs() > 1e-9 * steps) {
                d.push(Diagnostic::new(
                    "time.tau",
                    format!("must be a positive multiple of the time step dt = dx = {}", g.dx()),
                ));
            }
        }
        let Some(model) = model else { return d };
        if kind.uses_sigma() {
            if model.kernel.is_atomic() || !(model.kappa0() > 0.0 && model.eps() > 0.0) {
                d.push(Diagnostic::new(
                    "model.kernel",
                    format!(
                        "{} needs a kernel lower bound Q(x, dy) >= kappa0 1_(x-eps, x+eps)(y) dy with kappa0, eps > 0",
                        kind.name()
                    ),
                ));
            } else if let Some(g) = grid {
                let h = self.family_tau(model.eps()) / (n.n_time.max(2) - 1) as f64;
                let r = h / g.dx();
                if r.round() < 1.0 || (r - r.round()).abs() > 1e-9 * r {
                    d.push(Diagnostic::new(
                        "numerics.n_time",
                        format!("the family time step {h} must be a multiple of dx = {}", g.dx()),
                    ));
                }
            }
        }
        if kind == ExperimentKind::ScenarioSingular && !model.kernel.is_atomic() {
            d.push(Diagnostic::new("model.kernel", "scenario_singular needs the dirac_pair kernel"));
        }
        if let Some(k) = &self.scenario.contrast_kernel {
            if let Err(e) = ModelSpec::new(model.potential.clone(), k.clone()) {
                d.push(Diagnostic::new("scenario.contrast_kernel", e.to_string()));
            }
        }
        for (i, m) in self.initial.iter().enumerate() {
            if let (InitialMeasure::Uniform { lo, hi }, Some(g)) = (m, grid) {
                if g.cells_in(*lo, *hi).is_empty() {
                    d.push(Diagnostic::new(format!("initial[{i}]"), "interval contains no cell center"));
                }
            }
        }
        d
    }

    fn validate_finite(&self, d: &mut Vec<Diagnostic>) {
        let Some(f) = &self.finite else {
            d.push(Diagnostic::new("finite", "required for finite_h1h2"));
            return;
        };
        match (&f.rates, f.rotation) {
            (Some(rates), None) => {
                let n = rates.len();
                for (i, row) in rates.iter().enumerate() {
                    if row.len() != n {
                        d.push(Diagnostic::new(format!("finite.rates[{i}]"), format!("expected {n} entries")));
                    }
                }
                if !f.diag_extra.is_empty() && f.diag_extra.len() != n {
                    d.push(Diagnostic::new("finite.diag_extra", format!("expected {n} entries")));
                }
            }
            (None, Some(n)) if n >= 2 => {}
            (None, Some(_)) => d.push(Diagnostic::new("finite.rotation", "needs at least 2 states")),
            _ => d.push(Diagnostic::new("finite", "give exactly one of rates and rotation")),
        }
        if f.n_time.is_some_and(|n| n < 2) {
            d.push(Diagnostic::new("finite.n_time", "needs at least 2 nodes"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"experiment": "finite_h1h2", "time": {"tau": 1.0},
        "finite": {"rates": [[0, 1], [1, 0]]}}"#;

    #[test]
    fn minimal_config_is_valid() {
        let c = parse(MINIMAL).unwrap();
        assert!(c.validate(Path::new(".")).is_empty());
        assert_eq!(c.numerics.n_time, 26);
    }

    #[test]
    fn type_errors_carry_the_field_path() {
        let err = parse(r#"{"experiment": "pde_converge", "time": {"tau": "x"}}"#).unwrap_err();
        let ConfigError::Invalid(d) = err else { panic!() };
        assert_eq!(d[0].path, "time.tau");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse(r#"{"experiment": "pde_converge", "time": {"tau": 1.0, "tua": 2}}"#).unwrap_err();
        let ConfigError::Invalid(d) = err else { panic!() };
        assert!(d[0].message.contains("tua"));
    }

    #[test]
    fn nonpositive_tau_is_named() {
        let c = parse(&MINIMAL.replace("1.0", "0.0")).unwrap();
        assert!(c.validate(Path::new(".")).iter().any(|d| d.path == "time.tau"));
    }

    #[test]
    fn atomic_kernel_cannot_feed_sigma() {
        let c = parse(
            r#"{"experiment": "sigma_audit", "time": {"tau": 0.4}, "numerics": {"seed": 1},
            "grid": {"half_width": 8, "n_cells": 2000},
            "model": {"potential": {"type": "quadratic", "a_bar": 1, "s": 1}, "kernel": {"type": "dirac_pair"}}}"#,
        )
        .unwrap();
        let d = c.validate(Path::new("."));
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].path, "model.kernel");
        assert!(d[0].message.contains("kappa0"));
    }

    #[test]
    fn randomized_runs_need_a_seed() {
        let c = parse(
            r#"{"experiment": "sigma_audit", "time": {"tau": 0.4},
            "grid": {"half_width": 8, "n_cells": 2000},
            "model": {"potential": {"type": "quadratic", "a_bar": 1, "s": 1},
                      "kernel": {"type": "uniform_band", "kappa0": 1, "eps": 1}}}"#,
        )
        .unwrap();
        let d = c.validate(Path::new("."));
        assert_eq!(d.iter().map(|d| d.path.as_str()).collect::<Vec<_>>(), ["numerics.seed"]);
    }

    #[test]
    fn tau_must_align_with_the_grid() {
        let c = parse(
            r#"{"experiment": "pde_converge", "time": {"tau": 0.41},
            "grid": {"half_width": 8, "n_cells": 2000},
            "model": {"potential": {"type": "quadratic", "a_bar": 1, "s": 1},
                      "kernel": {"type": "uniform_band", "kappa0": 1, "eps": 1}}}"#,
        )
        .unwrap();
        assert_eq!(c.validate(Path::new("."))[0].path, "time.tau");
    }
}
