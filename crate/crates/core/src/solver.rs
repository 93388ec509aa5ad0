//! Time integration of the perturbation system at a fixed random point.
//!
//! One step is a Strang splitting: half a step of the exact linear stiff
//! flow (Fokker-Planck relaxation, drag coupling, viscosity), a full SSP-RK3
//! step of transport and the quadratic terms, and another stiff half step.
//!
//! The stiff flow couples, per Fourier mode, the fluid velocity with the
//! `n = e_j` coefficients of every species through
//!
//! ```text
//! û_j'       = -|k|² û_j - a û_j + Σ_l P_jl(k) Σ_i b_i σ_i L^{-d} ĉ_i(e_l)
//! ĉ_i(e_j)'  = β_i σ_i û_j - γ_i ĉ_i(e_j)
//! ```
//!
//! with `a = (κ/ε) L^{-d} Σ_i i^{1/3}`, `b_i = κ i^{1/3}/ε`,
//! `β_i = i^{1/3}/(θ̄ε)` and `γ_i = 1/(i^{2/3}ε)`. All other coefficients
//! decay at their scalar rate `|n|_1/(i^{2/3}ε)`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::diagnostics::{energy_report, DiagnosticsConfig, EnergyReport};
use crate::error::{Error, Result};
use crate::ops::{leray_matrix, leray_project, LadderSuite};
use crate::params::Model;
use crate::state::SimState;

/// `β_i = i^{1/3}/(θ̄ε)`, the forcing rate of the fluid on species `i`.
pub fn forcing_rate(model: &Model, species: usize) -> f64 {
    model.species[species].cbrt / (model.theta_bar() * model.epsilon())
}

/// Dense generator of the stiff flow on `[û_0..û_{d-1}, ĉ_0(e_0).., ĉ_{N-1}(e_{d-1})]`.
pub fn assemble_mode_block(model: &Model, m: usize) -> DMatrix<f64> {
    let d = model.dim();
    let n = model.n_species();
    let eps = model.epsilon();
    let kappa = model.kappa();
    let inv_vol = 1.0 / model.volume();
    let p = leray_matrix(model, m);
    let k2 = model.modes.k2(m);
    let drag = kappa / eps * inv_vol * model.drag_sum();
    let mut block = DMatrix::zeros(d * (1 + n), d * (1 + n));
    for j in 0..d {
        block[(j, j)] = -k2 - drag;
    }
    for (i, sp) in model.species.iter().enumerate() {
        let recovery = kappa * sp.cbrt / eps * sp.sigma * inv_vol;
        let forcing = forcing_rate(model, i) * sp.sigma;
        let relax = 1.0 / (sp.cbrt2 * eps);
        for j in 0..d {
            let c = d + i * d + j;
            for l in 0..d {
                block[(l, d + i * d + j)] += p[l][j] * recovery;
            }
            block[(c, j)] = forcing;
            block[(c, c)] = -relax;
        }
    }
    block
}

/// Exact propagators `exp(τ M)` of the stiff flow for a fixed `τ`.
#[derive(Debug, Clone)]
pub struct StiffPropagator {
    tau: f64,
    blocks: Vec<Option<DMatrix<f64>>>,
    /// `exp(-|n|_1 τ/(i^{2/3}ε))` per species and Hermite index.
    decay: Vec<Vec<f64>>,
}

impl StiffPropagator {
    pub fn new(model: &Model, tau: f64) -> Self {
        let blocks = (0..model.modes.len())
            .map(|m| {
                model
                    .modes
                    .retained(m)
                    .then(|| (assemble_mode_block(model, m) * tau).exp())
            })
            .collect();
        let decay = (0..model.n_species())
            .map(|i| {
                (0..model.hermite.len())
                    .map(|h| (-model.fp_rate(i, h) * tau).exp())
                    .collect()
            })
            .collect();
        Self { tau, blocks, decay }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn block(&self, m: usize) -> Option<&DMatrix<f64>> {
        self.blocks[m].as_ref()
    }

    pub fn decay(&self, species: usize, h: usize) -> f64 {
        self.decay[species][h]
    }

    /// Applies the propagator in place.
    pub fn apply(&self, model: &Model, s: &mut SimState) {
        let d = model.dim();
        let units: Vec<usize> = (0..d).map(|j| model.hermite.unit(j)).collect();
        for (i, f) in s.f_hat.iter_mut().enumerate() {
            for h in 0..model.hermite.len() {
                if units.contains(&h) {
                    continue;
                }
                let g = self.decay[i][h];
                f.row_mut(h).mapv_inplace(|c| c * g);
            }
        }
        let size = d * (1 + model.n_species());
        let mut re = DVector::zeros(size);
        let mut im = DVector::zeros(size);
        for (m, block) in self.blocks.iter().enumerate() {
            let Some(block) = block else { continue };
            for j in 0..d {
                re[j] = s.u_hat[[j, m]].re;
                im[j] = s.u_hat[[j, m]].im;
                for (i, f) in s.f_hat.iter().enumerate() {
                    let c = f[[units[j], m]];
                    re[d + i * d + j] = c.re;
                    im[d + i * d + j] = c.im;
                }
            }
            let (re2, im2) = (block * &re, block * &im);
            for j in 0..d {
                s.u_hat[[j, m]] = Complex64::new(re2[j], im2[j]);
                for (i, f) in s.f_hat.iter_mut().enumerate() {
                    f[[units[j], m]] = Complex64::new(re2[d + i * d + j], im2[d + i * d + j]);
                }
            }
        }
    }
}

/// Propagators for a full step `dt`.
pub fn precompute_stiff_propagators(model: &Model, dt: f64) -> StiffPropagator {
    StiffPropagator::new(model, dt)
}

/// `max|k|_1 σ_max √n_v`, the transport part of the step-size bound.
pub fn transport_bound(model: &Model) -> f64 {
    model.modes.k_max_l1() * model.sigma_max() * (model.grid.n_v as f64).sqrt()
}

/// `max_i β_i σ_i √n_v Σ|û|`, the bound for the explicit `u·𝒦*f` term.
pub fn nonlinear_bound(model: &Model, u_l1: f64) -> f64 {
    let rate = (0..model.n_species())
        .map(|i| forcing_rate(model, i) * model.species[i].sigma)
        .fold(0.0, f64::max);
    rate * (model.grid.n_v as f64).sqrt() * u_l1
}

fn u_l1(states: &[SimState]) -> f64 {
    states
        .iter()
        .map(|s| s.u_hat.iter().map(|c| c.norm()).sum::<f64>())
        .sum()
}

/// `min(0.5/bound, t_end/200)` with the bound evaluated on `s0`.
pub fn default_dt(model: &Model, t_end: f64, s0: &[SimState]) -> f64 {
    let bound = transport_bound(model).max(nonlinear_bound(model, u_l1(s0)));
    let mut dt = 0.5 / bound;
    if t_end > 0.0 {
        dt = dt.min(t_end / 200.0);
    }
    dt
}

/// Number of steps and the adjusted step landing exactly on `t_end`.
pub fn steps_for(t_end: f64, dt: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, dt);
    }
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}

/// Which explicit terms the step includes; all on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    pub transport: bool,
    pub nonlinear: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            transport: true,
            nonlinear: true,
        }
    }
}

/// Explicit right-hand side shared by the deterministic and stochastic Galerkin solvers.
#[derive(Debug, Clone)]
pub(crate) struct Dynamics {
    pub model: Model,
    pub suite: LadderSuite,
    pub options: SolverOptions,
}

type Pair = (usize, usize, usize, f64);

impl Dynamics {
    pub fn new(model: &Model, options: SolverOptions) -> Self {
        Self {
            model: model.clone(),
            suite: LadderSuite::new(model),
            options,
        }
    }

    /// Explicit tendencies of every block. `pairs` lists `(a, c, k, S)`: the
    /// product of block `a` (velocity) with block `c` lands in block `k`
    /// with weight `S`.
    pub fn rhs(&self, blocks: &[SimState], pairs: &[Pair]) -> Vec<SimState> {
        let model = &self.model;
        let mut out: Vec<SimState> = blocks
            .iter()
            .map(|b| {
                let mut r = SimState::zeros(model);
                r.time = b.time;
                if self.options.transport {
                    for (i, f) in b.f_hat.iter().enumerate() {
                        r.f_hat[i] = -self.suite.transport(i, f);
                    }
                }
                r
            })
            .collect();
        if self.options.nonlinear {
            self.add_products(blocks, pairs, &mut out);
        }
        out
    }

    fn add_products(&self, blocks: &[SimState], pairs: &[Pair], out: &mut [SimState]) {
        let model = &self.model;
        let d = model.dim();
        let tr = &model.transform;
        let hermite = &model.hermite;
        let points = tr.points();
        // rows whose product survives the raising truncation, plus the density row
        let rows: Vec<Vec<usize>> = (0..d)
            .map(|j| (0..hermite.len()).filter(|&h| hermite.raise(h, j).is_some()).collect())
            .collect();
        let u_phys: Vec<Vec<Vec<f64>>> = blocks
            .iter()
            .map(|b| (0..d).map(|j| tr.to_physical(b.u_hat.row(j))).collect())
            .collect();
        let f_phys: Vec<Vec<Vec<Vec<f64>>>> = blocks
            .iter()
            .map(|b| {
                b.f_hat
                    .iter()
                    .map(|f| (0..hermite.len()).map(|h| tr.to_physical(f.row(h))).collect())
                    .collect()
            })
            .collect();
        for (k, target) in out.iter_mut().enumerate() {
            let mine: Vec<&Pair> = pairs.iter().filter(|p| p.2 == k).collect();
            if mine.is_empty() {
                continue;
            }
            // fluid: (u_l u_j) for the convective term
            let mut uu = vec![vec![vec![0.0; points]; d]; d];
            // kinetic: u_j f_{i,h}
            let mut uf = vec![vec![vec![vec![0.0; points]; hermite.len()]; d]; model.n_species()];
            for &&(a, c, _, w) in &mine {
                for j in 0..d {
                    let ua = &u_phys[a][j];
                    for l in 0..d {
                        for (acc, (x, y)) in uu[j][l].iter_mut().zip(ua.iter().zip(&u_phys[c][l])) {
                            *acc += w * x * y;
                        }
                    }
                    for (i, fc) in f_phys[c].iter().enumerate() {
                        for &h in &rows[j] {
                            for (acc, (x, y)) in uf[i][j][h].iter_mut().zip(ua.iter().zip(&fc[h])) {
                                *acc += w * x * y;
                            }
                        }
                    }
                }
            }
            self.finish_fluid(target, &uu, &uf);
            self.finish_kinetic(target, &uf, &rows);
        }
    }

    fn finish_fluid(&self, target: &mut SimState, uu: &[Vec<Vec<f64>>], uf: &[Vec<Vec<Vec<f64>>>]) {
        let model = &self.model;
        let d = model.dim();
        let modes = &model.modes;
        let tr = &model.transform;
        let drag = model.kappa() / (model.epsilon() * model.volume());
        let mut du: Array2<Complex64> = Array2::zeros((d, modes.len()));
        for l in 0..d {
            for j in 0..d {
                let prod = tr.from_physical(&uu[l][j]);
                for m in 0..modes.len() {
                    du[[j, m]] -= Complex64::new(0.0, modes.k(m)[l]) * prod[m];
                }
            }
        }
        if drag != 0.0 {
            for (i, sp) in model.species.iter().enumerate() {
                for j in 0..d {
                    let prod = tr.from_physical(&uf[i][j][0]);
                    du.row_mut(j).scaled_add(Complex64::new(-drag * sp.cbrt, 0.0), &prod);
                }
            }
        }
        leray_project(model, &mut du);
        target.u_hat += &du;
    }

    fn finish_kinetic(&self, target: &mut SimState, uf: &[Vec<Vec<Vec<f64>>>], rows: &[Vec<usize>]) {
        let model = &self.model;
        let tr = &model.transform;
        let hermite = &model.hermite;
        for (i, f) in target.f_hat.iter_mut().enumerate() {
            let beta = forcing_rate(model, i);
            let sigma = model.species[i].sigma;
            for (j, rows_j) in rows.iter().enumerate() {
                for &h in rows_j {
                    let up = hermite.raise(h, j).expect("filtered rows can be raised");
                    let nj = hermite.multi(up)[j] as f64;
                    let prod: Array1<Complex64> = tr.from_physical(&uf[i][j][h]);
                    f.row_mut(up)
                        .scaled_add(Complex64::new(beta * sigma * nj.sqrt(), 0.0), &prod);
                }
            }
        }
    }

    /// One SSP-RK3 step of the explicit part for every block.
    pub fn explicit_step(&self, blocks: &[SimState], pairs: &[Pair], dt: f64) -> Vec<SimState> {
        let axpy = |base: &[SimState], rhs: &[SimState], h: f64| -> Vec<SimState> {
            base.iter()
                .zip(rhs)
                .map(|(b, r)| {
                    let mut o = b.clone();
                    o.add_scaled(h, r);
                    o
                })
                .collect()
        };
        let k1 = self.rhs(blocks, pairs);
        let y1 = axpy(blocks, &k1, dt);
        let k2 = self.rhs(&y1, pairs);
        let y2: Vec<SimState> = blocks
            .iter()
            .zip(axpy(&y1, &k2, dt))
            .map(|(b, t)| b.combine(0.75, &t, 0.25))
            .collect();
        let k3 = self.rhs(&y2, pairs);
        blocks
            .iter()
            .zip(axpy(&y2, &k3, dt))
            .map(|(b, t)| b.combine(1.0 / 3.0, &t, 2.0 / 3.0))
            .collect()
    }
}

/// Deterministic solver for one random point.
#[derive(Debug, Clone)]
pub struct Solver {
    dynamics: Dynamics,
    dt: f64,
    half: StiffPropagator,
}

impl Solver {
    pub fn new(model: &Model, dt: f64) -> Result<Self> {
        Self::with_options(model, dt, SolverOptions::default())
    }

    pub fn with_options(model: &Model, dt: f64, options: SolverOptions) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(vec![format!("dt must be positive: {dt}")]));
        }
        let bound = transport_bound(model);
        if options.transport && dt * bound > 1.0 {
            return Err(Error::Cfl {
                dt,
                suggested: 0.5 / bound,
            });
        }
        Ok(Self {
            dynamics: Dynamics::new(model, options),
            dt,
            half: StiffPropagator::new(model, 0.5 * dt),
        })
    }

    /// Solver whose step divides `t_end` exactly; returns it with the step count.
    pub fn for_horizon(model: &Model, s0: &SimState, t_end: f64, dt: Option<f64>) -> Result<(Self, usize)> {
        let target = dt.unwrap_or_else(|| default_dt(model, t_end, std::slice::from_ref(s0)));
        let (n, dt) = steps_for(t_end, target);
        Ok((Self::new(model, dt)?, n))
    }

    pub fn model(&self) -> &Model {
        &self.dynamics.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn options(&self) -> SolverOptions {
        self.dynamics.options
    }

    pub fn half_propagator(&self) -> &StiffPropagator {
        &self.half
    }

    /// Explicit tendencies (transport and quadratic terms).
    pub fn explicit_rhs(&self, s: &SimState) -> SimState {
        self.dynamics
            .rhs(std::slice::from_ref(s), &[(0, 0, 0, 1.0)])
            .pop()
            .expect("one block")
    }

    pub fn step(&self, s: &SimState) -> Result<SimState> {
        let model = self.model();
        if self.dynamics.options.nonlinear {
            let bound = nonlinear_bound(model, u_l1(std::slice::from_ref(s)));
            if self.dt * bound > 1.0 {
                return Err(Error::Cfl {
                    dt: self.dt,
                    suggested: 0.5 / bound,
                });
            }
        }
        let mut mid = s.clone();
        self.half.apply(model, &mut mid);
        let mut next = self
            .dynamics
            .explicit_step(std::slice::from_ref(&mid), &[(0, 0, 0, 1.0)], self.dt)
            .pop()
            .expect("one block");
        self.half.apply(model, &mut next);
        next.time = s.time + self.dt;
        Ok(next)
    }

    /// Advances `steps` steps, calling `observer` on the initial state, every
    /// `stride` steps and on the final state.
    pub fn run(
        &self,
        s0: &SimState,
        steps: usize,
        stride: usize,
        observer: &mut dyn FnMut(usize, &SimState) -> Result<()>,
    ) -> Result<SimState> {
        let stride = stride.max(1);
        let mut s = s0.clone();
        observer(0, &s)?;
        for n in 1..=steps {
            s = self.step(&s)?;
            if !s.is_finite() {
                return Err(Error::NonFinite { step: n, time: s.time });
            }
            if n % stride == 0 || n == steps {
                observer(n, &s)?;
            }
        }
        Ok(s)
    }

    /// Runs and collects an [`EnergyReport`] at every observation.
    pub fn run_series(
        &self,
        s0: &SimState,
        steps: usize,
        stride: usize,
        config: &DiagnosticsConfig,
    ) -> Result<(Vec<EnergyReport>, SimState)> {
        let model = self.model().clone();
        let reference = crate::diagnostics::momentum_functional(&model, s0);
        let mut reports = Vec::new();
        let last = self.run(s0, steps, stride, &mut |_, s| {
            reports.push(energy_report(&model, s, config, &reference));
            Ok(())
        })?;
        Ok((reports, last))
    }
}
