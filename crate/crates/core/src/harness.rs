//! Experiment presets, configuration and file outputs.
//!
//! A preset fixes laptop-sized defaults; a TOML file overrides any subset
//! of keys. Sweep points run on the rayon pool and are gathered by rank, so
//! every output is a pure function of the resolved configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::{energy, energy_report, fit_decay_rate, momentum_functional, DiagnosticsConfig, CSV_HEADER};
use crate::error::{Error, Result};
use crate::gpc::{GpcBasis, Measure};
use crate::params::{Model, ModelParams, SpectralGrid};
use crate::sg::{expand_initial, reference_rule, run_collocation, sg_error, weighted_energy, SgSolver};
use crate::solver::{default_dt, steps_for, Solver};
use crate::state::{make_initial_state, InitialSpec, Profile, SimState, ZLaw};

/// Per-step slack allowed in the monotonicity checks.
pub const MONOTONE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Relaxation,
    Decay,
    EpsSweep,
    KSweep,
    HydroSweep,
    Conservation,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Relaxation,
        Preset::Decay,
        Preset::EpsSweep,
        Preset::KSweep,
        Preset::HydroSweep,
        Preset::Conservation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Relaxation => "relaxation",
            Preset::Decay => "decay",
            Preset::EpsSweep => "eps_sweep",
            Preset::KSweep => "k_sweep",
            Preset::HydroSweep => "hydro_sweep",
            Preset::Conservation => "conservation",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Uniform,
    Chebyshev,
}

impl MeasureKind {
    pub fn measure(self) -> Measure {
        match self {
            MeasureKind::Uniform => Measure::Uniform,
            MeasureKind::Chebyshev => Measure::Chebyshev,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub theta_bar: f64,
    pub sizes: Vec<u32>,
    pub dim: usize,
    pub domain_length: f64,
    pub n_x: usize,
    pub n_v: usize,
    pub amplitude: f64,
    pub profile: Profile,
    pub z_law: ZLaw,
    pub z_coupling: f64,
    pub seed: u64,
    /// Fixed step; chosen from the stability bound when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Steps between recorded samples.
    pub stride: usize,
    pub s_order: usize,
    pub lambda4: f64,
    pub measure: MeasureKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub k_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub output_dir: PathBuf,
    pub plots: bool,
}

impl HarnessConfig {
    /// Defaults of `preset`, each completing in well under a minute.
    pub fn preset_defaults(preset: Preset) -> Self {
        let base = Self {
            epsilon: 1.0,
            kappa: 1.0,
            theta_bar: 1.0,
            sizes: vec![1, 2],
            dim: 1,
            domain_length: 2.0 * std::f64::consts::PI,
            n_x: 32,
            n_v: 16,
            amplitude: 0.05,
            profile: Profile::Mixed,
            z_law: ZLaw::Constant,
            z_coupling: 0.0,
            seed: 0,
            dt: None,
            t_end: 10.0,
            stride: 10,
            s_order: 2,
            lambda4: 0.01,
            measure: MeasureKind::Uniform,
            k: 4,
            k_values: vec![2, 4, 6, 8],
            eps_values: vec![1.0, 0.1, 0.01],
            output_dir: PathBuf::from("runs"),
            plots: true,
        };
        match preset {
            Preset::Relaxation => Self {
                kappa: 0.0,
                profile: Profile::Homogeneous,
                n_x: 8,
                n_v: 8,
                t_end: 1.0,
                stride: 2,
                eps_values: vec![1.0, 0.01],
                ..base
            },
            Preset::Decay => Self {
                dim: 2,
                profile: Profile::Shear,
                n_x: 8,
                n_v: 8,
                amplitude: 0.01,
                stride: 2,
                ..base
            },
            Preset::EpsSweep => Self {
                n_x: 8,
                n_v: 6,
                z_law: ZLaw::Exponential,
                z_coupling: 0.5,
                t_end: 5.0,
                stride: 5,
                k_values: vec![4, 8],
                eps_values: vec![1.0, 0.01],
                ..base
            },
            Preset::KSweep => Self {
                n_x: 8,
                n_v: 6,
                z_law: ZLaw::Exponential,
                z_coupling: 0.5,
                t_end: 5.0,
                stride: 5,
                k_values: vec![2, 3, 4, 6, 8],
                ..base
            },
            Preset::HydroSweep => Self {
                n_x: 16,
                n_v: 8,
                t_end: 2.0,
                stride: 5,
                eps_values: vec![0.1, 0.05],
                ..base
            },
            Preset::Conservation => Self {
                epsilon: 0.1,
                n_x: 16,
                n_v: 8,
                eps_values: vec![0.1],
                ..base
            },
        }
    }

    /// Preset defaults overlaid with the keys of a TOML document; unknown keys are rejected.
    pub fn from_toml(preset: Preset, text: &str) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let mut table = toml::Table::try_from(Self::preset_defaults(preset)).map_err(|e| Error::Parse(e.to_string()))?;
        table.extend(overrides);
        table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
    }

    pub fn load(preset: Preset, path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::preset_defaults(preset)),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(preset, &text)
            }
        }
    }

    pub fn params(&self, epsilon: f64) -> ModelParams {
        ModelParams {
            epsilon,
            kappa: self.kappa,
            theta_bar: self.theta_bar,
            sizes: self.sizes.clone(),
            dim: self.dim,
            domain_length: self.domain_length,
        }
    }

    pub fn model(&self, epsilon: f64) -> Result<Model> {
        Model::new(self.params(epsilon), SpectralGrid::new(self.n_x, self.n_v))
    }

    pub fn initial_spec(&self) -> InitialSpec {
        InitialSpec {
            amplitude: self.amplitude,
            profile: self.profile,
            z_law: self.z_law,
            z_coupling: self.z_coupling,
            seed: self.seed,
        }
    }

    pub fn diagnostics(&self) -> DiagnosticsConfig {
        DiagnosticsConfig {
            s_order: self.s_order,
            lambda4: self.lambda4,
        }
    }

    /// Every violated invariant for `preset`, including those of each model in the sweep.
    pub fn validate(&self, preset: Preset) -> Result<()> {
        let mut errs = Vec::new();
        if self.eps_values.is_empty() {
            errs.push("eps_values must be nonempty".to_string());
        }
        if self.k_values.is_empty() {
            errs.push("k_values must be nonempty".to_string());
        }
        if self.k_values.contains(&0) || self.k == 0 {
            errs.push("gPC orders must be at least 1".to_string());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            errs.push(format!("t_end must be positive: {}", self.t_end));
        }
        if self.stride == 0 {
            errs.push("stride must be at least 1".to_string());
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                errs.push(format!("dt must be positive: {dt}"));
            }
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            errs.push(format!("amplitude must be nonnegative: {}", self.amplitude));
        }
        if preset == Preset::Relaxation && self.kappa != 0.0 {
            errs.push("relaxation needs kappa = 0".to_string());
        }
        if preset == Preset::Relaxation && self.profile != Profile::Homogeneous {
            errs.push("relaxation needs the homogeneous profile".to_string());
        }
        for eps in self.sweep_epsilons(preset) {
            if let Err(e) = self.model(eps) {
                match e {
                    Error::InvalidConfig(list) => errs.extend(list),
                    other => errs.push(other.to_string()),
                }
            }
        }
        errs.dedup();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    fn sweep_epsilons(&self, preset: Preset) -> Vec<f64> {
        match preset {
            Preset::KSweep | Preset::Conservation => vec![self.epsilon],
            _ => self.eps_values.clone(),
        }
    }
}

/// One pass/fail assertion of a preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value > threshold,
            value,
            threshold,
        }
    }
}

/// A CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

fn format_row(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(",")
}

/// Line plot description rendered to SVG.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<(String, Vec<(f64, f64)>)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub preset: Preset,
    pub config: HarnessConfig,
    pub series: Vec<Series>,
    pub runs: Vec<Value>,
    pub checks: Vec<Check>,
    pub plots: Vec<PlotSpec>,
    /// Solver failure that cut the sweep short; completed points are kept.
    pub failure: Option<String>,
}

impl ExperimentResult {
    fn new(preset: Preset, config: &HarnessConfig) -> Self {
        Self {
            preset,
            config: config.clone(),
            series: Vec::new(),
            runs: Vec::new(),
            checks: Vec::new(),
            plots: Vec::new(),
            failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> Value {
        json!({
            "preset": self.preset.name(),
            "config": self.config,
            "runs": self.runs,
            "checks": self.checks,
            "passed": self.passed(),
            "failure": self.failure,
        })
    }
}

/// Runs every point on the pool and keeps the successful prefix, in rank order.
fn sweep<T: Send, P: Sync>(points: &[P], f: impl Fn(&P) -> Result<T> + Sync) -> (Vec<T>, Option<Error>) {
    let results: Vec<Result<T>> = points.par_iter().map(&f).collect();
    let mut ok = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => return (ok, Some(e)),
        }
    }
    (ok, None)
}

fn step_plan(cfg: &HarnessConfig, model: &Model, s0: &[SimState]) -> (usize, f64) {
    let dt = cfg.dt.unwrap_or_else(|| default_dt(model, cfg.t_end, s0));
    steps_for(cfg.t_end, dt)
}

/// Largest per-step increase of `E_{s,0}` and the recorded reports of one deterministic run.
struct DeterministicRun {
    epsilon: f64,
    dt: f64,
    reports: Vec<crate::diagnostics::EnergyReport>,
    max_increase: f64,
    final_state: SimState,
}

fn deterministic_run(cfg: &HarnessConfig, epsilon: f64) -> Result<DeterministicRun> {
    let model = cfg.model(epsilon)?;
    let s0 = make_initial_state(&cfg.initial_spec(), &model, 0.0)?;
    let (steps, dt) = step_plan(cfg, &model, std::slice::from_ref(&s0));
    let solver = Solver::new(&model, dt)?;
    let diag = cfg.diagnostics();
    let reference = momentum_functional(&model, &s0);
    let mut reports = Vec::new();
    let mut prev = f64::INFINITY;
    let mut max_increase = f64::NEG_INFINITY;
    let final_state = solver.run(&s0, steps, 1, &mut |n, s| {
        let e = energy(&model, s, cfg.s_order).total;
        if n > 0 {
            max_increase = max_increase.max(e - prev);
        }
        prev = e;
        if n % cfg.stride == 0 || n == steps {
            reports.push(energy_report(&model, s, &diag, &reference));
        }
        Ok(())
    })?;
    Ok(DeterministicRun {
        epsilon,
        dt,
        reports,
        max_increase,
        final_state,
    })
}

fn report_series(name: String, reports: &[crate::diagnostics::EnergyReport]) -> Series {
    Series {
        name,
        header: CSV_HEADER.to_string(),
        rows: reports.iter().map(|r| r.csv_row()).collect(),
    }
}

fn eps_tag(eps: f64) -> String {
    format!("eps{eps}")
}

/// `|ĉ_i(0, n)|²` for every species and Hermite index.
pub fn band_energies(model: &Model, s: &SimState) -> Vec<Vec<f64>> {
    let zero = model.modes.zero_mode();
    s.f_hat.iter().map(|f| f.column(zero).iter().map(|c| c.norm_sqr()).collect()).collect()
}

fn relaxation(cfg: &HarnessConfig, out: &mut ExperimentResult) -> Result<()> {
    struct Point {
        epsilon: f64,
        rows: Vec<Vec<f64>>,
        max_rel: f64,
    }
    let (points, err) = sweep(&cfg.eps_values, |&eps| -> Result<Point> {
        let model = cfg.model(eps)?;
        let s0 = make_initial_state(&cfg.initial_spec(), &model, 0.0)?;
        let (steps, dt) = step_plan(cfg, &model, std::slice::from_ref(&s0));
        let solver = Solver::new(&model, dt)?;
        let b0 = band_energies(&model, &s0);
        let mut rows = Vec::new();
        let mut max_rel: f64 = 0.0;
        solver.run(&s0, steps, cfg.stride, &mut |_, s| {
            let b = band_energies(&model, s);
            let mut row_err: f64 = 0.0;
            for (i, (now, init)) in b.iter().zip(&b0).enumerate() {
                for (h, (e, e0)) in now.iter().zip(init).enumerate() {
                    if *e0 == 0.0 {
                        continue;
                    }
                    let exact = e0 * (-2.0 * model.fp_rate(i, h) * s.time).exp();
                    row_err = row_err.max((e - exact).abs() / exact);
                }
            }
            max_rel = max_rel.max(row_err);
            let total: f64 = b.iter().flatten().sum();
            rows.push(vec![s.time, total, row_err]);
            Ok(())
        })?;
        Ok(Point { epsilon: eps, rows, max_rel })
    });
    for p in &points {
        out.series.push(Series {
            name: eps_tag(p.epsilon),
            header: "t,band_energy_total,max_rel_err".to_string(),
            rows: p.rows.iter().map(|r| format_row(r)).collect(),
        });
        out.runs.push(json!({"epsilon": p.epsilon, "max_rel_err": p.max_rel}));
        out.checks.push(Check::at_most(format!("band energies at {}", eps_tag(p.epsilon)), p.max_rel, 1e-8));
    }
    out.plots.push(PlotSpec {
        name: "band_energy".to_string(),
        title: "total Hermite band energy".to_string(),
        x_label: "t".to_string(),
        y_label: "energy".to_string(),
        lines: points
            .iter()
            .map(|p| (eps_tag(p.epsilon), p.rows.iter().map(|r| (r[0], r[1])).collect()))
            .collect(),
    });
    err.map_or(Ok(()), Err)
}

fn decay(cfg: &HarnessConfig, out: &mut ExperimentResult) -> Result<()> {
    let (runs, err) = sweep(&cfg.eps_values, |&eps| deterministic_run(cfg, eps));
    let mut rates = Vec::new();
    for r in &runs {
        let series: Vec<(f64, f64)> = r.reports.iter().map(|x| (x.t, x.e_s0)).collect();
        out.series.push(report_series(eps_tag(r.epsilon), &r.reports));
        out.checks.push(Check::at_most(
            format!("energy monotone at {}", eps_tag(r.epsilon)),
            r.max_increase,
            MONOTONE_TOL,
        ));
        match fit_decay_rate(&series) {
            Ok(fit) => {
                rates.push(fit.lambda_hat);
                out.runs.push(json!({
                    "epsilon": r.epsilon,
                    "lambda_hat": fit.lambda_hat,
                    "r2": fit.r2,
                    "samples": fit.samples,
                    "dt": r.dt,
                }));
                out.checks.push(Check::above(format!("lambda_hat at {}", eps_tag(r.epsilon)), fit.lambda_hat, 0.0));
                out.checks.push(Check::above(format!("r2 at {}", eps_tag(r.epsilon)), fit.r2, 0.99));
            }
            Err(e) => {
                out.runs.push(json!({
                    "epsilon": r.epsilon,
                    "lambda_hat": Value::Null,
                    "r2": Value::Null,
                    "error": e.to_string(),
                }));
                out.checks.push(Check::above(format!("decay fit at {}", eps_tag(r.epsilon)), 0.0, 0.0));
            }
        }
    }
    if rates.len() > 1 {
        let hi = rates.iter().copied().fold(f64::MIN, f64::max);
        let lo = rates.iter().copied().fold(f64::MAX, f64::min);
        out.checks.push(Check::at_most("lambda_hat spread across epsilon", hi / lo, 3.0));
    }
    out.plots.push(energy_plot(&runs));
    err.map_or(Ok(()), Err)
}

fn energy_plot(runs: &[DeterministicRun]) -> PlotSpec {
    PlotSpec {
        name: "energy".to_string(),
        title: "E_s0 against time".to_string(),
        x_label: "t".to_string(),
        y_label: "E".to_string(),
        lines: runs
            .iter()
            .map(|r| (eps_tag(r.epsilon), r.reports.iter().map(|x| (x.t, x.e_s0)).collect()))
            .collect(),
    }
}

fn conservation(cfg: &HarnessConfig, out: &mut ExperimentResult) -> Result<()> {
    let run = deterministic_run(cfg, cfg.epsilon)?;
    let fold = |f: &dyn Fn(&crate::diagnostics::EnergyReport) -> f64| run.reports.iter().map(f).fold(0.0, f64::max);
    let mass = fold(&|r| r.mass_res.iter().copied().fold(0.0, f64::max));
    let mom = fold(&|r| r.mom_res);
    let ubar = fold(&|r| r.ubar_res);
    out.series.push(report_series(eps_tag(run.epsilon), &run.reports));
    out.runs.push(json!({
        "epsilon": run.epsilon,
        "mass_res": mass,
        "mom_res": mom,
        "ubar_res": ubar,
        "dt": run.dt,
    }));
    out.checks.push(Check::at_most("mass residual", mass, 1e-12));
    out.checks.push(Check::at_most("momentum drift", mom, 1e-10));
    out.checks.push(Check::at_most("mean velocity identity", ubar, 1e-8));
    out.plots.push(energy_plot(std::slice::from_ref(&run)));
    Ok(())
}

fn hydro_sweep(cfg: &HarnessConfig, out: &mut ExperimentResult) -> Result<()> {
    let mut eps = cfg.eps_values.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let (runs, err) = sweep(&eps, |&e| deterministic_run(cfg, e));
    let mut rows = Vec::new();
    for r in &runs {
        let res = r.reports.last().map(|x| x.hydro_res.iter().copied().fold(0.0, f64::max)).unwrap_or(f64::NAN);
        out.series.push(report_series(eps_tag(r.epsilon), &r.reports));
        out.runs.push(json!({"epsilon": r.epsilon, "hydro_res": res, "t": r.final_state.time}));
        rows.push((r.epsilon, res));
    }
    for w in rows.windows(2) {
        out.checks.push(Check::at_most(
            format!("hydro residual shrinks from {} to {}", eps_tag(w[0].0), eps_tag(w[1].0)),
            w[1].1 / w[0].1,
            1.0,
        ));
    }
    out.series.push(Series {
        name: "hydro".to_string(),
        header: "epsilon,hydro_res".to_string(),
        rows: rows.iter().map(|(e, r)| format_row(&[*e, *r])).collect(),
    });
    out.plots.push(PlotSpec {
        name: "hydro".to_string(),
        title: "hydrodynamic residual at t_end".to_string(),
        x_label: "epsilon".to_string(),
        y_label: "residual".to_string(),
        lines: vec![("residual".to_string(), rows.iter().rev().copied().collect())],
    });
    err.map_or(Ok(()), Err)
}

/// Outcome of one stochastic Galerkin run against the collocation reference.
#[derive(Debug, Clone)]
pub struct KRun {
    pub k: usize,
    pub times: Vec<f64>,
    pub error: Vec<f64>,
    pub weighted_max_increase: f64,
    pub expansion_residual: f64,
}

impl KRun {
    pub fn max_error(&self) -> f64 {
        self.error.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs stochastic Galerkin for every order in `ks` against one collocation
/// reference at `max(2 K_max, 24)` nodes, all with the same step.
pub fn k_sweep_at(cfg: &HarnessConfig, epsilon: f64, ks: &[usize]) -> Result<(Vec<KRun>, Option<Error>)> {
    let model = cfg.model(epsilon)?;
    let spec = cfg.initial_spec();
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let ref_basis = GpcBasis::new(cfg.measure.measure(), k_max)?;
    let (nodes, weights) = reference_rule(&ref_basis)?;
    let s0: Vec<SimState> = nodes
        .iter()
        .map(|z| make_initial_state(&spec, &model, *z))
        .collect::<Result<_>>()?;
    let (steps, dt) = step_plan(cfg, &model, &s0);
    let ens = run_collocation(&spec, &model, &nodes, &weights, dt, steps, cfg.stride)?;
    let (runs, err) = sweep(ks, |&k| -> Result<KRun> {
        let basis = GpcBasis::new(cfg.measure.measure(), k)?;
        let q = basis.p_hat() + 2.5;
        let e = expand_initial(&spec, &basis, &model)?;
        let solver = SgSolver::new(&model, &basis, dt)?;
        let mut times = Vec::new();
        let mut error = Vec::new();
        let mut obs = 0;
        let mut prev = f64::INFINITY;
        let mut inc = f64::NEG_INFINITY;
        solver.run(&e.state, steps, 1, &mut |n, s| {
            let w = weighted_energy(&model, s, cfg.s_order, q);
            if n > 0 {
                inc = inc.max(w - prev);
            }
            prev = w;
            if n % cfg.stride == 0 || n == steps {
                times.push(s.time);
                error.push(sg_error(&model, &basis, s, &nodes, &weights, &ens.snapshot(obs), cfg.s_order)?);
                obs += 1;
            }
            Ok(())
        })?;
        Ok(KRun {
            k,
            times,
            error,
            weighted_max_increase: inc,
            expansion_residual: e.residual,
        })
    });
    Ok((runs, err))
}

fn k_table(
    cfg: &HarnessConfig,
    epsilon: f64,
    tag: &str,
    runs: &[KRun],
    out: &mut ExperimentResult,
) {
    let mut header = vec!["t".to_string()];
    header.extend(runs.iter().map(|r| format!("E_e_K{}", r.k)));
    let rows = runs
        .first()
        .map(|first| {
            (0..first.times.len())
                .map(|n| {
                    let mut row = vec![first.times[n]];
                    row.extend(runs.iter().map(|r| r.error[n]));
                    format_row(&row)
                })
                .collect()
        })
        .unwrap_or_default();
    out.series.push(Series {
        name: format!("error_{tag}"),
        header: header.join(","),
        rows,
    });
    for r in runs {
        let fit = fit_decay_rate(&r.times.iter().copied().zip(r.error.iter().copied()).collect::<Vec<_>>()).ok();
        out.runs.push(json!({
            "epsilon": epsilon,
            "K": r.k,
            "max_error": r.max_error(),
            "initial_error": r.error.first(),
            "error_decay_rate": fit.map(|f| f.lambda_hat),
            "error_decay_r2": fit.map(|f| f.r2),
            "weighted_energy_max_increase": r.weighted_max_increase,
            "expansion_residual": r.expansion_residual,
        }));
        out.checks.push(Check::at_most(
            format!("weighted energy monotone K={} {tag}", r.k),
            r.weighted_max_increase,
            MONOTONE_TOL,
        ));
        if cfg.z_law.degree().is_some_and(|d| d < r.k) {
            out.checks.push(Check::at_most(
                format!("exact initial representation K={} {tag}", r.k),
                r.error[0],
                1e-16,
            ));
        }
    }
}

fn k_sweep(cfg: &HarnessConfig, out: &mut ExperimentResult) -> Result<()> {
    let mut ks = cfg.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    let tag = eps_tag(cfg.epsilon);
    let (runs, err) = k_sweep_at(cfg, cfg.epsilon, &ks)?;
    k_table(cfg, cfg.epsilon, &tag, &runs, out);
    let polynomial = cfg.z_law.degree().is_some();
    if !polynomial {
        for w in runs.windows(2) {
            out.checks.push(Check::at_most(
                format!("max error K={} below K={}", w[1].k, w[0].k),
                w[1].max_error(),
                w[0].max_error(),
            ));
        }
    }
    out.series.push(Series {
        name: "max_error".to_string(),
        header: "K,max_E_e".to_string(),
        rows: runs.iter().map(|r| format_row(&[r.k as f64, r.max_error()])).collect(),
    });
    out.plots.push(PlotSpec {
        name: "error_vs_K".to_string(),
        title: format!("max_t E_e against K at {tag}"),
        x_label: "K".to_string(),
        y_label: "E_e".to_string(),
        lines: vec![(tag, runs.iter().map(|r| (r.k as f64, r.max_error())).collect())],
    });
    err.map_or(Ok(()), Err)
}

fn eps_sweep(cfg: &HarnessConfig, out: &mut ExperimentResult) -> Result<()> {
    let mut ks = cfg.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut lines = Vec::new();
    let mut table = Vec::new();
    for &eps in &cfg.eps_values {
        let tag = eps_tag(eps);
        let (runs, err) = k_sweep_at(cfg, eps, &ks)?;
        k_table(cfg, eps, &tag, &runs, out);
        if let (Some(first), Some(last)) = (runs.first(), runs.last()) {
            if runs.len() > 1 && cfg.z_law.degree().is_none() {
                out.checks.push(Check::at_most(
                    format!("error ratio K={}/K={} {tag}", last.k, first.k),
                    last.max_error() / first.max_error(),
                    1e-2,
                ));
            }
        }
        for r in &runs {
            table.push(format_row(&[eps, r.k as f64, r.max_error()]));
        }
        lines.push((tag, runs.iter().map(|r| (r.k as f64, r.max_error())).collect()));
        if let Some(e) = err {
            return Err(e);
        }
    }
    out.series.push(Series {
        name: "max_error".to_string(),
        header: "epsilon,K,max_E_e".to_string(),
        rows: table,
    });
    out.plots.push(PlotSpec {
        name: "error_vs_K".to_string(),
        title: "max_t E_e against K".to_string(),
        x_label: "K".to_string(),
        y_label: "E_e".to_string(),
        lines,
    });
    Ok(())
}

/// Executes `preset`. Solver failures stop the sweep but keep completed points.
pub fn run_experiment(preset: Preset, cfg: &HarnessConfig) -> Result<ExperimentResult> {
    cfg.validate(preset)?;
    let mut out = ExperimentResult::new(preset, cfg);
    let status = match preset {
        Preset::Relaxation => relaxation(cfg, &mut out),
        Preset::Decay => decay(cfg, &mut out),
        Preset::EpsSweep => eps_sweep(cfg, &mut out),
        Preset::KSweep => k_sweep(cfg, &mut out),
        Preset::HydroSweep => hydro_sweep(cfg, &mut out),
        Preset::Conservation => conservation(cfg, &mut out),
    };
    if let Err(e) = status {
        out.failure = Some(e.to_string());
    }
    Ok(out)
}

/// `YYYYmmddTHHMMSS` in UTC.
pub fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S").to_string()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<output_dir>/<preset>_<stamp>/` and returns that directory.
pub fn emit_outputs(result: &ExperimentResult, stamp: &str) -> Result<PathBuf> {
    if result.series.is_empty() && result.runs.is_empty() {
        return Err(Error::NothingToEmit);
    }
    let dir = result.config.output_dir.join(format!("{}_{stamp}", result.preset.name()));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for s in &result.series {
        let mut text = String::with_capacity(64 * (s.rows.len() + 1));
        text.push_str(&s.header);
        text.push('\n');
        for r in &s.rows {
            text.push_str(r);
            text.push('\n');
        }
        write(&dir.join(format!("series_{}.csv", s.name)), &text)?;
    }
    let summary = serde_json::to_string_pretty(&result.summary()).map_err(|e| Error::Parse(e.to_string()))?;
    write(&dir.join("summary.json"), &summary)?;
    if result.config.plots && !result.plots.is_empty() {
        let pdir = dir.join("plots");
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        for p in &result.plots {
            render_plot(p, &pdir.join(format!("{}.svg", p.name)))?;
        }
    }
    Ok(dir)
}

/// Renders `plot` with a logarithmic y axis; non-positive values are dropped.
pub fn render_plot(plot: &PlotSpec, path: &Path) -> Result<()> {
    let perr = |e: &dyn fmt::Display| Error::Plot(format!("{}: {e}", path.display()));
    let pts: Vec<(f64, f64)> = plot
        .lines
        .iter()
        .flat_map(|(_, l)| l.iter().copied())
        .filter(|(x, y)| x.is_finite() && *y > 0.0 && y.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 1e-1, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 * 10.0;
    }
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| perr(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(&plot.title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
        .map_err(|e| perr(&e))?;
    chart
        .configure_mesh()
        .x_desc(plot.x_label.as_str())
        .y_desc(plot.y_label.as_str())
        .draw()
        .map_err(|e| perr(&e))?;
    for (idx, (label, line)) in plot.lines.iter().enumerate() {
        let color = Palette99::pick(idx).to_rgba();
        let data: Vec<(f64, f64)> = line.iter().copied().filter(|(_, y)| *y > 0.0 && y.is_finite()).collect();
        chart
            .draw_series(LineSeries::new(data, color.stroke_width(2)))
            .map_err(|e| perr(&e))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| perr(&e))?;
    root.present().map_err(|e| perr(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("nope".parse::<Preset>().is_err());
    }

    #[test]
    fn every_preset_default_validates() {
        for p in Preset::ALL {
            HarnessConfig::preset_defaults(p).validate(p).unwrap();
        }
    }

    #[test]
    fn toml_overrides_and_rejects_unknown_keys() {
        let cfg = HarnessConfig::from_toml(Preset::Decay, "epsilon = 0.5\nK = 3\neps_values = [1.0]\n").unwrap();
        assert_eq!(cfg.epsilon, 0.5);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.eps_values, vec![1.0]);
        assert_eq!(cfg.dim, 2);
        assert!(matches!(
            HarnessConfig::from_toml(Preset::Decay, "epsilonn = 0.5"),
            Err(Error::Parse(_))
        ));
        let cfg = HarnessConfig::from_toml(Preset::Decay, "dt = 0.01").unwrap();
        assert_eq!(cfg.dt, Some(0.01));
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut cfg = HarnessConfig::preset_defaults(Preset::Decay);
        cfg.eps_values.clear();
        cfg.k_values.clear();
        cfg.stride = 0;
        match cfg.validate(Preset::Decay) {
            Err(Error::InvalidConfig(list)) => assert_eq!(list.len(), 3),
            other => panic!("{other:?}"),
        }
        let mut cfg = HarnessConfig::preset_defaults(Preset::Conservation);
        cfg.epsilon = 2.0;
        assert!(cfg.validate(Preset::Conservation).is_err());
    }

    #[test]
    fn empty_result_has_nothing_to_emit() {
        let cfg = HarnessConfig::preset_defaults(Preset::Decay);
        let r = ExperimentResult::new(Preset::Decay, &cfg);
        assert!(matches!(emit_outputs(&r, "x"), Err(Error::NothingToEmit)));
    }
}
