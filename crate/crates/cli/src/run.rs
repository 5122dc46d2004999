//! Experiment dispatch, checks and the run manifest.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use perron_core::ergodicity::{
    convergence_profile, estimate_d_and_ctilde, power_triplet, scenario_rotation, scenario_singular_kernel,
    ConvergenceReport, Eigentriplet, PowerOptions, ProfileOptions, Verdict,
};
use perron_core::finite::{perron_triplet_finite, rotation_chain, verify_h1, verify_h2, FiniteGenerator, H2_TOLERANCE};
use perron_core::lyapunov::{
    build_construction, check_generator_drift, check_semigroup_drift, check_iterated_bound, ConstructionOptions,
    LyapunovConstruction, X0Choice,
};
use perron_core::model::ModelSpec;
use perron_core::pde::PdeSemigroup;
use perron_core::sigma::{verify_h1prime_h2prime, verify_domination, CertificationOptions, H1H2PrimeReport, SigmaFamily, SigmaOptions};
use perron_core::spaces::{DiscreteMeasure, Grid1D};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Diagnostic, ExperimentConfig, ExperimentKind, InitialMeasure};
use crate::output::{sha256_hex, Artifacts, FileEntry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;

/// Smallest accepted ratio in the family inequality.
const INEQUALITY_RATIO: f64 = 1.0 - 1e-3;
/// Smallest late residual that confirms non-convergence.
const STALL_RESIDUAL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Failing gating checks make the run exit 1; the others are reported only.
    pub gating: bool,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: &'static str,
    pub verdict: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub metrics: Map<String, Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckVerdict {
    pub name: String,
    pub pass: bool,
    pub gating: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub experiment: &'static str,
    /// SHA-256 of the effective config (after command-line overrides) as compact JSON.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub exit_code: i32,
    pub checks: Vec<CheckVerdict>,
    /// Every file written besides the manifest itself.
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: Summary,
    pub manifest: RunManifest,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Config(Vec<Diagnostic>),
    #[error("cannot write results: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_SCHEMA,
            Self::Io(_) => EXIT_CHECK_FAILED,
        }
    }
}

/// Why a stage stopped early.
enum Halt {
    Step { name: String, error: String },
    Io(std::io::Error),
}

impl From<std::io::Error> for Halt {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

fn step<T, E: std::fmt::Display>(name: &str, r: Result<T, E>) -> Result<T, Halt> {
    r.map_err(|e| Halt::Step { name: name.to_string(), error: e.to_string() })
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    art: Artifacts,
    checks: Vec<Check>,
    metrics: Map<String, Value>,
    quiet: bool,
}

impl Ctx<'_> {
    fn check(&mut self, name: &str, pass: bool, gating: bool, value: Option<f64>, detail: impl Into<String>) {
        let detail = detail.into();
        if !self.quiet {
            let tag = match (pass, gating) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "fail (reported only)",
            };
            eprintln!("[{tag}] {name}: {detail}");
        }
        self.checks.push(Check { name: name.to_string(), pass, gating, value, detail });
    }

    fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn seed(&self) -> u64 {
        self.cfg.numerics.seed.unwrap_or(0)
    }

    fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.gating && !c.pass).map(|c| c.name.as_str()).collect()
    }
}

/// Validate `cfg`, run it and write every result under `out`.
pub fn run(cfg: &ExperimentConfig, base: &Path, out: &Path, quiet: bool) -> Result<RunOutcome, RunError> {
    let diagnostics = cfg.validate(base);
    if !diagnostics.is_empty() {
        return Err(RunError::Config(diagnostics));
    }
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut ctx =
        Ctx { cfg, art: Artifacts::new(out, &cfg.output.formats)?, checks: Vec::new(), metrics: Map::new(), quiet };
    ctx.note(&format!("running {} into {}", cfg.experiment.name(), out.display()));

    let result = match cfg.experiment {
        ExperimentKind::FiniteH1h2 => finite_h1h2(&mut ctx),
        ExperimentKind::PdeConverge => pde_converge(&mut ctx, base),
        ExperimentKind::LyapunovAudit => semigroup(&mut ctx, base).and_then(|s| lyapunov_stage(&mut ctx, &s).map(drop)),
        ExperimentKind::SigmaAudit => semigroup(&mut ctx, base).and_then(|s| {
            let con = lyapunov_stage(&mut ctx, &s)?;
            sigma_stage(&mut ctx, &s, &con).map(drop)
        }),
        ExperimentKind::ScenarioRotation => rotation(&mut ctx),
        ExperimentKind::ScenarioSingular => singular(&mut ctx, base),
        ExperimentKind::FullTheorem2Pipeline => pipeline(&mut ctx, base),
    };
    match result {
        Ok(()) => {}
        Err(Halt::Step { name, error }) => ctx.check(&name, false, true, None, error),
        Err(Halt::Io(e)) => return Err(e.into()),
    }

    let failed = ctx.failed();
    let pass = failed.is_empty();
    let verdict = match (cfg.experiment, pass) {
        (ExperimentKind::FullTheorem2Pipeline, true) => "hypotheses certified at grid level: yes".to_string(),
        (ExperimentKind::FullTheorem2Pipeline, false) => {
            format!("hypotheses certified at grid level: no (failed: {})", failed.join(", "))
        }
        (_, true) => "all checks passed".to_string(),
        (_, false) => format!("failed: {}", failed.join(", ")),
    };
    ctx.note(&verdict);
    let exit_code = if pass { EXIT_OK } else { EXIT_CHECK_FAILED };
    let summary = Summary {
        experiment: cfg.experiment.name(),
        verdict,
        pass,
        checks: ctx.checks.clone(),
        metrics: std::mem::take(&mut ctx.metrics),
    };
    ctx.art.json("summary.json", &summary)?;
    let config_bytes = serde_json::to_vec(cfg).map_err(std::io::Error::other)?;
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.name(),
        config_hash: sha256_hex(&config_bytes),
        seed: cfg.numerics.seed,
        started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        exit_code,
        checks: ctx.checks.iter().map(|c| CheckVerdict { name: c.name.clone(), pass: c.pass, gating: c.gating }).collect(),
        files: ctx.art.files().to_vec(),
    };
    ctx.art.json("manifest.json", &manifest)?;
    Ok(RunOutcome { exit_code, summary, manifest })
}

fn finite_h1h2(ctx: &mut Ctx) -> Result<(), Halt> {
    let cfg = ctx.cfg;
    let f = cfg.finite.clone().unwrap_or_default();
    let tau = cfg.time.tau;
    let gen = match (&f.rates, f.rotation) {
        (Some(rates), _) => {
            let extra = if f.diag_extra.is_empty() { vec![0.0; rates.len()] } else { f.diag_extra.clone() };
            step("finite.generator", FiniteGenerator::new(rates, extra))?
        }
        (None, Some(n)) => step("finite.generator", rotation_chain(n))?,
        (None, None) => unreachable!("validated"),
    };
    let n_time = f.n_time.unwrap_or(cfg.numerics.n_time);
    let h1 = step("finite.h1", verify_h1(&gen, tau, n_time))?;
    let margin = step("finite.h2", verify_h2(&h1.laws))?;
    let triplet = step("finite.triplet", perron_triplet_finite(&gen, tau))?;

    ctx.check(
        "finite.h1",
        h1.pass,
        true,
        Some(h1.worst_margin),
        format!("c = {:.6e}, worst margin {:.3e}, tolerance {:.1e}", h1.constants.c, h1.worst_margin, h1.tolerance),
    );
    ctx.check("finite.h2", margin > H2_TOLERANCE, true, Some(margin), format!("margin {margin:.6e}"));
    let residual = triplet.residual_h.max(triplet.residual_gamma);
    ctx.check(
        "finite.triplet",
        residual <= cfg.numerics.residual_tol,
        true,
        Some(triplet.lambda),
        format!("lambda = {:.12e}, residual {residual:.2e}", triplet.lambda),
    );
    ctx.metric("c", h1.constants.c);
    ctx.metric("h2_margin", margin);
    ctx.metric("lambda", triplet.lambda);

    ctx.art.report("h1", &h1)?;
    ctx.art.report("h2", &json!({ "margin": margin, "tolerance": H2_TOLERANCE }))?;
    ctx.art.report("triplet", &triplet)?;
    let n = gen.n_states();
    ctx.art.series("eigen", &["state", "h", "gamma"], (0..n).map(|i| [i as f64, triplet.h[i], triplet.gamma[i]]))?;
    let rows = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).flat_map(|(x, y)| {
        let law = h1.law(x, y);
        law.nodes.iter().zip(&law.weights).map(move |(s, w)| [x as f64, y as f64, *s, *w]).collect::<Vec<_>>()
    });
    ctx.art.series("hitting_laws", &["x", "y", "s", "weight"], rows)?;
    Ok(())
}

fn model_and_grid(ctx: &Ctx, base: &Path) -> Result<(ModelSpec, Grid1D), Halt> {
    let model = step("config.model", ctx.cfg.model_spec(base))?;
    let grid = step("config.grid", ctx.cfg.grid())?;
    Ok((model, grid))
}

fn semigroup(ctx: &mut Ctx, base: &Path) -> Result<PdeSemigroup, Halt> {
    let (model, grid) = model_and_grid(ctx, base)?;
    step("pde.semigroup", PdeSemigroup::new(model, grid))
}

fn initial_masses(g: Grid1D, m: &InitialMeasure) -> perron_core::Result<Vec<f64>> {
    match *m {
        InitialMeasure::Dirac { x } => Ok(DiscreteMeasure::dirac(g, x)?.into_masses()),
        InitialMeasure::Uniform { lo, hi } => {
            let cells = g.cells_in(lo, hi);
            let w = 1.0 / cells.len() as f64;
            Ok((0..g.len()).map(|i| if cells.contains(&i) { w } else { 0.0 }).collect())
        }
    }
}

fn power_options(ctx: &Ctx) -> PowerOptions {
    let n = &ctx.cfg.numerics;
    PowerOptions { tol: n.power_tol, max_iter: n.power_max_iter, ..PowerOptions::default() }
}

fn triplet_stage(ctx: &mut Ctx, s: &PdeSemigroup) -> Result<Eigentriplet, Halt> {
    ctx.note("power iteration");
    let triplet = step("perron.triplet", power_triplet(s, ctx.cfg.time.tau, &power_options(ctx)))?;
    let residual = triplet.residual_h.max(triplet.residual_gamma);
    ctx.check(
        "perron.triplet",
        residual <= ctx.cfg.numerics.residual_tol,
        true,
        Some(triplet.lambda),
        format!("lambda = {:.12e}, residual {residual:.2e}", triplet.lambda),
    );
    ctx.metric("lambda", triplet.lambda);
    let g = s.grid();
    ctx.art.series("eigen", &["x", "h", "gamma"], (0..g.len()).map(|i| [g.center(i), triplet.h[i], triplet.gamma[i]]))?;
    ctx.art.report("triplet", &json!({
        "lambda": triplet.lambda,
        "lambda_right": triplet.lambda_right,
        "lambda_left": triplet.lambda_left,
        "tau": triplet.tau,
        "residual_h": triplet.residual_h,
        "residual_gamma": triplet.residual_gamma,
        "iterations_right": triplet.iterations_right,
        "iterations_left": triplet.iterations_left,
    }))?;
    Ok(triplet)
}

fn profiles_stage(ctx: &mut Ctx, s: &PdeSemigroup, triplet: &Eigentriplet) -> Result<Vec<ConvergenceReport>, Halt> {
    let cfg = ctx.cfg;
    let inits = if cfg.initial.is_empty() { vec![InitialMeasure::Dirac { x: 0.0 }] } else { cfg.initial.clone() };
    let mut reports = Vec::new();
    for (i, m) in inits.iter().enumerate() {
        ctx.note(&format!("convergence profile {i}"));
        let mu = step("ergodicity.initial", initial_masses(*s.grid(), m))?;
        let r = step(
            "ergodicity.profile",
            convergence_profile(s, triplet, &mu, cfg.time.horizon, cfg.time.sample_dt, &ProfileOptions::default()),
        )?;
        let omega = r.omega.unwrap_or(f64::NAN);
        ctx.check(
            &format!("ergodicity.exponential[{i}]"),
            r.verdict == Verdict::Exponential && omega > 0.0,
            true,
            r.omega,
            format!("verdict {:?}, omega {omega:.6}, fit quality {:?}", r.verdict, r.fit_quality),
        );
        ctx.art.report(&format!("profile_{i}"), &r)?;
        reports.push(r);
    }
    if reports.len() >= 2 {
        let limits: Vec<Vec<f64>> =
            reports.iter().map(|r| r.terminal.iter().map(|v| v / r.projection).collect()).collect();
        let mut tv = 0.0_f64;
        for a in 0..limits.len() {
            for b in a + 1..limits.len() {
                tv = tv.max(limits[a].iter().zip(&limits[b]).map(|(x, y)| (x - y).abs()).sum());
            }
        }
        ctx.check(
            "ergodicity.limits",
            tv <= cfg.numerics.limit_tol,
            true,
            Some(tv),
            format!("largest TV distance between normalized limits {tv:.3e}"),
        );
        let omegas: Vec<f64> = reports.iter().filter_map(|r| r.omega).collect();
        let hi = omegas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = omegas.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = (hi - lo) / hi;
        ctx.check(
            "ergodicity.rates",
            omegas.len() == reports.len() && spread <= cfg.numerics.rate_tol,
            true,
            Some(spread),
            format!("rates in [{lo:.6}, {hi:.6}]"),
        );
    }
    let mut header = vec!["t".to_string()];
    header.extend((0..reports.len()).map(|i| format!("residual_{i}")));
    header.extend((0..reports.len()).map(|i| format!("moment_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..reports[0].times.len()).map(|k| {
        let mut row = vec![reports[0].times[k]];
        row.extend(reports.iter().map(|r| r.residuals[k]));
        row.extend(reports.iter().map(|r| r.moment_residuals[k]));
        row
    });
    ctx.art.series("convergence", &header, rows)?;
    ctx.metric("omega", reports.iter().map(|r| r.omega).collect::<Vec<_>>());
    Ok(reports)
}

fn pde_converge(ctx: &mut Ctx, base: &Path) -> Result<(), Halt> {
    let s = semigroup(ctx, base)?;
    let triplet = triplet_stage(ctx, &s)?;
    profiles_stage(ctx, &s, &triplet).map(drop)
}

fn lyapunov_stage(ctx: &mut Ctx, s: &PdeSemigroup) -> Result<LyapunovConstruction, Halt> {
    let n = &ctx.cfg.numerics;
    let opts = ConstructionOptions {
        x0: n.x0.map_or(X0Choice::FixedPoint, |x0| X0Choice::Fixed { x0 }),
        r_factor: n.r_factor,
        k_rule: n.k_rule,
    };
    ctx.note("lyapunov construction");
    let con = step("lyapunov.construction", build_construction(s, ctx.cfg.time.tau, &opts))?;
    let gen = step("lyapunov.generator", check_generator_drift(s, &con))?;
    let exact = (gen.identity_at_one - 8.0 / 15.0).abs();
    let quad = (gen.identity_at_one_quadrature - 8.0 / 15.0).abs();
    ctx.check(
        "lyapunov.identity_at_one",
        exact == 0.0 && quad <= 1e-12,
        true,
        Some(quad),
        format!("closed form {:e}, quadrature error {quad:.1e}", gen.identity_at_one),
    );
    for (name, c, gating) in [("lyapunov.generator_lower", &gen.lower, true), ("lyapunov.generator_upper", &gen.upper, false)] {
        ctx.check(
            name,
            c.pass,
            gating,
            Some(c.margin),
            format!("{}: margin {:.4e} at x = {:?}, budget {:.2e}", c.condition, c.margin, c.worst_x, c.tolerance_budget),
        );
    }
    ctx.check(
        "lyapunov.alpha_below_beta",
        con.alpha < con.beta,
        true,
        Some(con.beta - con.alpha),
        format!("alpha = {:.6e}, beta = {:.6e}", con.alpha, con.beta),
    );
    let g = s.grid();
    let k_inside = con.k_range().is_some_and(|(a, b)| a > 0 && b + 1 < g.len());
    ctx.check(
        "lyapunov.k_inside_grid",
        k_inside,
        true,
        Some(con.k_cells.len() as f64),
        format!("K = {:?}", con.k_range().map(|(a, b)| (g.center(a), g.center(b)))),
    );

    ctx.note("semigroup drift");
    let sem = step("lyapunov.semigroup", check_semigroup_drift(s, &con))?;
    for (name, c) in [("lyapunov.semigroup_upper", &sem.upper), ("lyapunov.semigroup_lower", &sem.lower)] {
        ctx.check(
            name,
            c.pass,
            true,
            Some(c.margin),
            format!("{}: margin {:.4e} at x = {:?}, budget {:.2e}", c.condition, c.margin, c.worst_x, c.tolerance_budget),
        );
    }
    let cmp = &sem.comparability;
    ctx.check(
        "lyapunov.comparability",
        cmp.pass,
        true,
        None,
        format!("sup M V / V = {:.4}, inf M psi / psi = {:.4}, gronwall ratio {:.6}", cmp.v_upper, cmp.psi_lower, cmp.gronwall_ratio),
    );
    let iterated = step("lyapunov.iterated_bound", check_iterated_bound(s, &con, ctx.cfg.numerics.iterated_k))?;
    let worst = iterated.margins.iter().copied().fold(f64::INFINITY, f64::min);
    ctx.check(
        "lyapunov.iterated_bound",
        iterated.pass,
        true,
        Some(worst),
        format!("k = 1..{}, worst margin {worst:.4e}", iterated.k_max),
    );

    ctx.metric("alpha", con.alpha);
    ctx.metric("beta", con.beta);
    ctx.metric("theta", con.theta);
    ctx.metric("x0", con.x0);
    ctx.metric("k_interval", con.k_range().map(|(a, b)| [g.center(a), g.center(b)]));
    ctx.art.report("construction", &json!({
        "tau": con.tau, "x0": con.x0, "r0": con.r0, "r0_admissible": con.r0_admissible, "inf_a": con.inf_a,
        "beta0": con.beta0, "alpha0": con.alpha0, "theta0": con.theta0, "zeta": con.zeta,
        "zeta_reciprocal": con.zeta_reciprocal, "r_bound": con.r_bound, "big_r": con.big_r, "alpha": con.alpha,
        "beta": con.beta, "theta": con.theta, "k_rule": con.k_rule, "k_cells": con.k_range(),
        "k_contiguous": con.k_contiguous,
    }))?;
    ctx.art.report("generator_drift", &gen)?;
    ctx.art.report("semigroup_drift", &sem)?;
    ctx.art.report("iterated_bound", &iterated)?;
    let in_k: Vec<f64> = {
        let mut v = vec![0.0; g.len()];
        con.k_cells.iter().for_each(|&i| v[i] = 1.0);
        v
    };
    ctx.art.series(
        "lyapunov",
        &["x", "psi0", "psi", "v", "mv", "in_k"],
        (0..g.len()).map(|i| [g.center(i), con.psi0[i], con.psi[i], con.v[i], con.mv[i], in_k[i]]),
    )?;
    ctx.art.series("iterated_bound", &["k", "margin"], iterated.margins.iter().enumerate().map(|(k, m)| [(k + 1) as f64, *m]))?;
    Ok(con)
}

fn sigma_stage(ctx: &mut Ctx, s: &PdeSemigroup, con: &LyapunovConstruction) -> Result<H1H2PrimeReport, Halt> {
    let n = ctx.cfg.numerics.clone();
    let model = s.model();
    let g = s.grid();
    let sigma = SigmaOptions { n_time: n.n_time, dz: None };
    let fam_tau = ctx.cfg.family_tau(model.eps());
    let targets: Vec<f64> = perron_core::sigma::subsample(&con.k_cells, 3).iter().map(|&i| g.center(i)).collect();
    ctx.note("family inequality");
    let fam = step("sigma.level1", SigmaFamily::level1(model, fam_tau, &targets, &sigma))?;
    let ineq = step("sigma.domination", verify_domination(&fam, s, n.trials, ctx.seed()))?;
    ctx.check(
        "sigma.domination",
        ineq.pass && ineq.min_ratio >= INEQUALITY_RATIO,
        true,
        Some(ineq.min_ratio),
        format!("{} trials, min ratio {:.4}, {} with both sides zero", ineq.trials, ineq.min_ratio, ineq.zero_trials),
    );
    ctx.art.report("domination", &ineq)?;

    ctx.note("crossing-time certification on K");
    let opts = CertificationOptions { max_samples: n.max_samples, level_cap: n.level_cap, sigma };
    let cert = step("sigma.certification", verify_h1prime_h2prime(s, con, &opts))?;
    ctx.check(
        "sigma.h1prime",
        cert.c > 0.0,
        true,
        Some(cert.c),
        format!("level {}, c = {:.4e}, C = {:.4}", cert.level, cert.c, cert.growth_on_k),
    );
    ctx.check(
        "sigma.h2prime",
        cert.eps_overlap > 0.0,
        true,
        Some(cert.eps_overlap),
        format!("eps_overlap = {:.4e}, worst pair {:?}", cert.eps_overlap, cert.worst_pair),
    );
    ctx.metric("sigma_level", cert.level);
    ctx.metric("c", cert.c);
    ctx.metric("eps_overlap", cert.eps_overlap);
    ctx.art.report("h1h2prime", &cert)?;
    let mut laws = Vec::new();
    step("sigma.persist", cert.laws.write_to(&mut laws))?;
    ctx.art.write("sigma_laws.txt", &laws)?;
    ctx.art.series("sigma", &["x", "y", "t", "c"], cert.laws.entries.iter().map(|e| [e.x, e.y, e.t, e.c]))?;
    Ok(cert)
}

fn pipeline(ctx: &mut Ctx, base: &Path) -> Result<(), Halt> {
    let s = semigroup(ctx, base)?;
    let con = lyapunov_stage(ctx, &s)?;
    let cert = sigma_stage(ctx, &s, &con)?;
    let triplet = triplet_stage(ctx, &s)?;
    profiles_stage(ctx, &s, &triplet)?;

    ctx.note("minorization");
    let n = ctx.cfg.numerics.clone();
    let t_list: Vec<f64> = n.t_multiples.iter().map(|m| m * ctx.cfg.time.tau).collect();
    let mino = step("minorization", estimate_d_and_ctilde(&s, &con, &cert, &t_list, n.pairs, ctx.seed()))?;
    ctx.check("minorization.harnack", mino.d > 0.0, true, Some(mino.d), format!("d per t {:?}", mino.d_per_t));
    let worst = mino.pairs.iter().map(|p| p.margin_x.min(p.margin_x_prime)).fold(f64::INFINITY, f64::min);
    ctx.check(
        "minorization.doeblin",
        mino.pass,
        true,
        Some(worst),
        format!("c_tilde = {:.4e}, {} pairs, worst margin {worst:.3e}", mino.c_tilde, mino.pairs.len()),
    );
    ctx.metric("d", mino.d);
    ctx.metric("c_tilde", mino.c_tilde);
    ctx.art.report("minorization", &mino)?;
    ctx.art.series("harnack", &["t", "d"], t_list.iter().zip(&mino.d_per_t).map(|(t, d)| [*t, *d]))?;
    Ok(())
}

fn rotation(ctx: &mut Ctx) -> Result<(), Halt> {
    let cfg = ctx.cfg;
    let sc = &cfg.scenario;
    let r = step(
        "rotation.scenario",
        scenario_rotation(sc.n_cells, cfg.time.horizon, cfg.time.sample_dt, sc.x0),
    )?;
    let dx = 1.0 / sc.n_cells as f64;
    let defect = r.mass_defect.unwrap_or(f64::INFINITY);
    ctx.check("rotation.mass", defect <= 1e-14, true, Some(defect), format!("largest |M_t 1 - 1| = {defect:.1e}"));
    let period = r.report.peak.as_ref().map_or(f64::NAN, |p| p.period);
    ctx.check(
        "rotation.periodic",
        r.report.verdict == Verdict::Periodic && (period - 1.0).abs() <= dx,
        true,
        Some(period),
        format!("verdict {:?}, period {period:.6}", r.report.verdict),
    );
    let margin = r.h2_margin.unwrap_or(f64::NAN);
    ctx.check("rotation.h2_fails", margin <= H2_TOLERANCE, true, Some(margin), format!("H2 margin {margin:e}"));
    ctx.metric("period", period);
    ctx.art.report("rotation", &r)?;
    let rep = &r.report;
    ctx.art.series(
        "rotation",
        &["t", "residual", "moment"],
        (0..rep.times.len()).map(|k| [rep.times[k], rep.residuals[k], rep.moment_residuals[k]]),
    )?;
    Ok(())
}

fn singular(ctx: &mut Ctx, base: &Path) -> Result<(), Halt> {
    let cfg = ctx.cfg;
    let s = semigroup(ctx, base)?;
    let (tau, horizon, sample_dt, x0) = (cfg.time.tau, cfg.time.horizon, cfg.time.sample_dt, cfg.scenario.x0);
    ctx.note("singular kernel scenario");
    let r = step("singular.scenario", scenario_singular_kernel(&s, tau, horizon, sample_dt, x0))?;
    let rep = &r.report;
    ctx.check(
        "singular.non_convergent",
        rep.verdict != Verdict::Exponential,
        true,
        None,
        format!("verdict {:?}", rep.verdict),
    );
    ctx.check(
        "singular.late_residual",
        rep.late_max_residual >= STALL_RESIDUAL,
        true,
        Some(rep.late_max_residual),
        format!("late residual {:.4}", rep.late_max_residual),
    );
    let period = rep.peak.as_ref().map_or(f64::NAN, |p| p.period);
    ctx.check(
        "singular.period",
        (period - 1.0).abs() <= 2.0 * s.grid().dx(),
        true,
        Some(period),
        format!("dominant period {period:.6}"),
    );
    ctx.metric("period", period);
    ctx.metric("power_iteration", &r.power_iteration);
    ctx.art.report("singular", &r)?;
    let mut contrast = None;
    if let Some(kernel) = &cfg.scenario.contrast_kernel {
        ctx.note("contrast kernel");
        let model = step("contrast.model", ModelSpec::new(s.model().potential.clone(), kernel.clone()))?;
        let s2 = step("contrast.semigroup", PdeSemigroup::new(model, *s.grid()))?;
        let triplet = step("contrast.triplet", power_triplet(&s2, tau, &power_options(ctx)))?;
        let mu = step("contrast.initial", DiscreteMeasure::dirac(*s.grid(), x0))?.into_masses();
        let c = step(
            "contrast.profile",
            convergence_profile(&s2, &triplet, &mu, horizon, sample_dt, &ProfileOptions::default()),
        )?;
        ctx.check(
            "contrast.exponential",
            c.verdict == Verdict::Exponential,
            true,
            c.omega,
            format!("verdict {:?}, omega {:?}", c.verdict, c.omega),
        );
        ctx.art.report("contrast", &c)?;
        contrast = Some(c);
    }
    let rows = (0..rep.times.len()).map(|k| {
        let mut row = vec![rep.times[k], rep.residuals[k], rep.moment_residuals[k]];
        if let Some(c) = &contrast {
            row.push(c.residuals.get(k).copied().unwrap_or(f64::NAN));
        }
        row
    });
    let header: &[&str] =
        if contrast.is_some() { &["t", "residual", "moment", "contrast_residual"] } else { &["t", "residual", "moment"] };
    ctx.art.series("singular", header, rows)?;
    Ok(())
}
