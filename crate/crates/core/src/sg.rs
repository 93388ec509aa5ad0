//! Stochastic Galerkin system for the gPC coefficients, plus the collocation
//! reference used to measure its error.
//!
//! Block `k` of an [`SgState`] holds the coefficient of `φ_k(z)`. The linear
//! dynamics is `z`-independent and acts blockwise; every quadratic term is
//! replaced by `(ab)_k = Σ_{j,l} S_jlk a_j b_l`.

use rayon::prelude::*;

use crate::diagnostics::{energy, momentum_functional};
use crate::error::{Error, Result};
use crate::gpc::{triple_products, GpcBasis, TripleTensor};
use crate::params::Model;
use crate::solver::{nonlinear_bound, transport_bound, Dynamics, Solver, SolverOptions, StiffPropagator};
use crate::state::{make_initial_state, InitialSpec, SimState};

#[derive(Debug, Clone, PartialEq)]
pub struct SgState {
    pub blocks: Vec<SimState>,
    pub time: f64,
}

impl SgState {
    pub fn zeros(model: &Model, k: usize) -> Self {
        Self {
            blocks: (0..k).map(|_| SimState::zeros(model)).collect(),
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(SimState::is_finite)
    }

    /// Momentum functional of every block.
    pub fn block_momentum(&self, model: &Model) -> Vec<[f64; 3]> {
        self.blocks.iter().map(|b| momentum_functional(model, b)).collect()
    }
}

/// Output of [`expand_initial`].
#[derive(Debug, Clone)]
pub struct Expansion {
    pub state: SgState,
    /// Largest coefficient mismatch between the K-term reconstruction and the
    /// exact initial state over the basis rule.
    pub residual: f64,
}

/// Nodes used to project the initial data: enough to resolve analytic laws.
fn projection_rule(basis: &GpcBasis) -> Result<(Vec<f64>, Vec<f64>)> {
    basis.gauss_rule((2 * basis.len()).max(32))
}

pub fn expand_initial(spec: &InitialSpec, basis: &GpcBasis, model: &Model) -> Result<Expansion> {
    let (nodes, weights) = projection_rule(basis)?;
    let mut state = SgState::zeros(model, basis.len());
    for (z, w) in nodes.iter().zip(&weights) {
        let s = make_initial_state(spec, model, *z)?;
        for (block, phi) in state.blocks.iter_mut().zip(basis.evaluate(*z)?) {
            block.add_scaled(w * phi, &s);
        }
    }
    let mut residual: f64 = 0.0;
    for &z in basis.nodes() {
        let exact = make_initial_state(spec, model, z)?;
        let recon = reconstruct_at(&state, basis, z)?;
        residual = residual.max(recon.difference(&exact).max_abs());
    }
    Ok(Expansion { state, residual })
}

/// `Σ_k block_k φ_k(z)`.
pub fn reconstruct_at(sg: &SgState, basis: &GpcBasis, z: f64) -> Result<SimState> {
    if sg.len() != basis.len() {
        return Err(Error::GridMismatch(format!(
            "{} blocks for a basis of size {}",
            sg.len(),
            basis.len()
        )));
    }
    let phi = basis.evaluate(z)?;
    let mut out = sg.blocks[0].clone();
    out.scale(phi[0]);
    for (b, p) in sg.blocks.iter().zip(&phi).skip(1) {
        out.add_scaled(*p, b);
    }
    out.time = sg.time;
    Ok(out)
}

/// Projects states given at quadrature nodes back onto the basis.
pub fn project_nodes(basis: &GpcBasis, nodes: &[f64], weights: &[f64], states: &[SimState]) -> Result<SgState> {
    let model_blocks = states
        .first()
        .ok_or_else(|| Error::GridMismatch("no node states".to_string()))?;
    let mut blocks: Vec<SimState> = (0..basis.len()).map(|_| model_blocks.combine(0.0, model_blocks, 0.0)).collect();
    for ((z, w), s) in nodes.iter().zip(weights).zip(states) {
        for (block, phi) in blocks.iter_mut().zip(basis.evaluate(*z)?) {
            block.add_scaled(w * phi, s);
        }
    }
    Ok(SgState {
        blocks,
        time: model_blocks.time,
    })
}

/// `E^K_{s,q} = Σ_k k^{2q} E_{s,0}(block_k)` with one-based `k`.
pub fn weighted_energy(model: &Model, sg: &SgState, s_order: usize, q: f64) -> f64 {
    sg.blocks
        .iter()
        .enumerate()
        .map(|(k, b)| ((k + 1) as f64).powf(2.0 * q) * energy(model, b, s_order).total)
        .sum()
}

/// Stochastic Galerkin time stepper sharing one stiff propagator across blocks.
#[derive(Debug, Clone)]
pub struct SgSolver {
    dynamics: Dynamics,
    dt: f64,
    half: StiffPropagator,
    basis: GpcBasis,
    tensor: TripleTensor,
    pairs: Vec<(usize, usize, usize, f64)>,
    sup: Vec<f64>,
}

impl SgSolver {
    pub fn new(model: &Model, basis: &GpcBasis, dt: f64) -> Result<Self> {
        Self::with_options(model, basis, dt, SolverOptions::default())
    }

    pub fn with_options(model: &Model, basis: &GpcBasis, dt: f64, options: SolverOptions) -> Result<Self> {
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
        let tensor = triple_products(basis);
        let pairs = tensor.nonzero().to_vec();
        let (lo, hi) = basis.support();
        let mut sup = vec![0.0f64; basis.len()];
        for p in 0..=400 {
            let z = lo + (hi - lo) * p as f64 / 400.0;
            for (s, v) in sup.iter_mut().zip(basis.evaluate(z)?) {
                *s = s.max(v.abs());
            }
        }
        Ok(Self {
            dynamics: Dynamics::new(model, options),
            dt,
            half: StiffPropagator::new(model, 0.5 * dt),
            basis: basis.clone(),
            tensor,
            pairs,
            sup,
        })
    }

    pub fn model(&self) -> &Model {
        &self.dynamics.model
    }

    pub fn basis(&self) -> &GpcBasis {
        &self.basis
    }

    pub fn tensor(&self) -> &TripleTensor {
        &self.tensor
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, sg: &SgState) -> Result<SgState> {
        let model = self.model();
        if sg.len() != self.basis.len() {
            return Err(Error::GridMismatch(format!(
                "{} blocks for a basis of size {}",
                sg.len(),
                self.basis.len()
            )));
        }
        if self.dynamics.options.nonlinear {
            let u_sup: f64 = sg
                .blocks
                .iter()
                .zip(&self.sup)
                .map(|(b, s)| s * b.u_hat.iter().map(|c| c.norm()).sum::<f64>())
                .sum();
            let bound = nonlinear_bound(model, u_sup);
            if self.dt * bound > 1.0 {
                return Err(Error::Cfl {
                    dt: self.dt,
                    suggested: 0.5 / bound,
                });
            }
        }
        let mut mid = sg.blocks.clone();
        for b in &mut mid {
            self.half.apply(model, b);
        }
        let mut next = self.dynamics.explicit_step(&mid, &self.pairs, self.dt);
        let time = sg.time + self.dt;
        for b in &mut next {
            self.half.apply(model, b);
            b.time = time;
        }
        Ok(SgState { blocks: next, time })
    }

    /// Advances `steps` steps, observing the initial state, every `stride`
    /// steps and the final state.
    pub fn run(
        &self,
        s0: &SgState,
        steps: usize,
        stride: usize,
        observer: &mut dyn FnMut(usize, &SgState) -> Result<()>,
    ) -> Result<SgState> {
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
}

/// Free-function form of [`SgSolver::step`].
pub fn sg_step(solver: &SgSolver, sg: &SgState) -> Result<SgState> {
    solver.step(sg)
}

/// Deterministic trajectories at quadrature nodes.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `states[q][n]` is node `q` at observation `n`.
    pub states: Vec<Vec<SimState>>,
}

impl Ensemble {
    pub fn times(&self) -> Vec<f64> {
        self.states
            .first()
            .map(|traj| traj.iter().map(|s| s.time).collect())
            .unwrap_or_default()
    }

    /// Node states at observation `n`.
    pub fn snapshot(&self, n: usize) -> Vec<SimState> {
        self.states.iter().map(|traj| traj[n].clone()).collect()
    }
}

/// `Q_ref = max(2K, 24)` Gauss nodes of the basis measure.
pub fn reference_rule(basis: &GpcBasis) -> Result<(Vec<f64>, Vec<f64>)> {
    basis.gauss_rule((2 * basis.len()).max(24))
}

/// Runs the deterministic solver at every node in parallel, storing the
/// states seen at the same observation schedule as [`SgSolver::run`].
pub fn run_collocation(
    spec: &InitialSpec,
    model: &Model,
    nodes: &[f64],
    weights: &[f64],
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Ensemble> {
    let solver = Solver::new(model, dt)?;
    let states = nodes
        .par_iter()
        .enumerate()
        .map(|(q, &z)| -> Result<Vec<SimState>> {
            let wrap = |e: Error| Error::Node {
                node: q,
                source: Box::new(e),
            };
            let s0 = make_initial_state(spec, model, z).map_err(wrap)?;
            let mut traj = Vec::new();
            solver
                .run(&s0, steps, stride, &mut |_, s| {
                    traj.push(s.clone());
                    Ok(())
                })
                .map_err(wrap)?;
            Ok(traj)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        nodes: nodes.to_vec(),
        weights: weights.to_vec(),
        states,
    })
}

/// `E^e = Σ_q w_q E_{s,0}(u^K(z_q) - u(z_q), f^K(z_q) - f(z_q))`.
pub fn sg_error(
    model: &Model,
    basis: &GpcBasis,
    sg: &SgState,
    nodes: &[f64],
    weights: &[f64],
    reference: &[SimState],
    s_order: usize,
) -> Result<f64> {
    if nodes.len() != reference.len() || weights.len() != reference.len() {
        return Err(Error::GridMismatch(format!(
            "{} nodes, {} weights, {} reference states",
            nodes.len(),
            weights.len(),
            reference.len()
        )));
    }
    let mut total = 0.0;
    for ((z, w), r) in nodes.iter().zip(weights).zip(reference) {
        let recon = reconstruct_at(sg, basis, *z)?;
        if recon.u_hat.dim() != r.u_hat.dim() || recon.f_hat.len() != r.f_hat.len() {
            return Err(Error::GridMismatch("reference state shape differs".to_string()));
        }
        total += w * energy(model, &recon.difference(r), s_order).total;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpc::Measure;
    use crate::params::{ModelParams, SpectralGrid};
    use crate::state::{Profile, ZLaw};

    fn model() -> Model {
        Model::new(
            ModelParams {
                epsilon: 0.5,
                sizes: vec![1, 2],
                ..ModelParams::default()
            },
            SpectralGrid::new(8, 5),
        )
        .unwrap()
    }

    fn spec(law: ZLaw, rho: f64) -> InitialSpec {
        InitialSpec {
            amplitude: 0.05,
            profile: Profile::Mixed,
            z_law: law,
            z_coupling: rho,
            seed: 0,
        }
    }

    fn block_size(b: &SimState) -> f64 {
        b.max_abs()
    }

    #[test]
    fn degree_matching_in_expansion() {
        let m = model();
        let basis = GpcBasis::new(Measure::Uniform, 4).unwrap();
        let e = expand_initial(&spec(ZLaw::Constant, 0.7), &basis, &m).unwrap();
        assert!(block_size(&e.state.blocks[0]) > 1e-3);
        assert!(e.state.blocks[1..].iter().all(|b| block_size(b) < 1e-16));
        let e = expand_initial(&spec(ZLaw::Linear, 0.7), &basis, &m).unwrap();
        assert!(block_size(&e.state.blocks[1]) > 1e-3);
        assert!(e.state.blocks[2..].iter().all(|b| block_size(b) < 1e-16));
        assert!(e.residual < 1e-15);
    }

    #[test]
    fn quadratic_law_matches_symbolic_expansion() {
        // (1 + ρz)² = (1 + ρ²/3) φ_1 + (2ρ/√3) φ_2 + (2ρ²/(3√5)) φ_3 for Legendre
        let m = model();
        let rho = 0.6;
        let basis = GpcBasis::new(Measure::Uniform, 4).unwrap();
        let e = expand_initial(&spec(ZLaw::Quadratic, rho), &basis, &m).unwrap();
        let unit = make_initial_state(&spec(ZLaw::Constant, 0.0), &m, 0.0).unwrap();
        let coeffs = [
            1.0 + rho * rho / 3.0,
            2.0 * rho / 3f64.sqrt(),
            2.0 * rho * rho / (3.0 * 5f64.sqrt()),
            0.0,
        ];
        for (b, c) in e.state.blocks.iter().zip(coeffs) {
            let mut expect = unit.clone();
            expect.scale(c);
            assert!(b.difference(&expect).max_abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruct_and_reproject() {
        let m = model();
        let basis = GpcBasis::new(Measure::Uniform, 3).unwrap();
        let e = expand_initial(&spec(ZLaw::Linear, 0.5), &basis, &m).unwrap();
        let at0 = reconstruct_at(&e.state, &basis, 0.0).unwrap();
        assert!(at0.difference(&e.state.blocks[0]).max_abs() < 1e-15);
        let states: Vec<SimState> = basis
            .nodes()
            .iter()
            .map(|z| reconstruct_at(&e.state, &basis, *z).unwrap())
            .collect();
        let back = project_nodes(&basis, basis.nodes(), basis.weights(), &states).unwrap();
        for (a, b) in back.blocks.iter().zip(&e.state.blocks) {
            assert!(a.difference(b).max_abs() < 1e-10);
        }
    }

    #[test]
    fn k1_matches_deterministic_step() {
        let m = model();
        let basis = GpcBasis::new(Measure::Uniform, 1).unwrap();
        let sp = spec(ZLaw::Constant, 0.0);
        let e = expand_initial(&sp, &basis, &m).unwrap();
        let dt = 0.02;
        let sg = SgSolver::new(&m, &basis, dt).unwrap();
        let det = Solver::new(&m, dt).unwrap();
        let s0 = make_initial_state(&sp, &m, 0.0).unwrap();
        let a = sg.step(&e.state).unwrap();
        let b = det.step(&s0).unwrap();
        assert!(a.blocks[0].difference(&b).max_abs() < 1e-15);
    }

    #[test]
    fn self_error_is_zero_and_projection_is_exact() {
        let m = model();
        let basis = GpcBasis::new(Measure::Uniform, 4).unwrap();
        let sp = spec(ZLaw::Quadratic, 0.8);
        let e = expand_initial(&sp, &basis, &m).unwrap();
        let (nodes, weights) = reference_rule(&basis).unwrap();
        let recon: Vec<SimState> = nodes.iter().map(|z| reconstruct_at(&e.state, &basis, *z).unwrap()).collect();
        assert_eq!(sg_error(&m, &basis, &e.state, &nodes, &weights, &recon, 2).unwrap(), 0.0);
        let exact: Vec<SimState> = nodes.iter().map(|z| make_initial_state(&sp, &m, *z).unwrap()).collect();
        assert!(sg_error(&m, &basis, &e.state, &nodes, &weights, &exact, 2).unwrap() < 1e-16);
        assert!(sg_error(&m, &basis, &e.state, &nodes[1..], &weights, &exact, 2).is_err());
    }

    #[test]
    fn collocation_of_constant_law_is_uniform_across_nodes() {
        let m = model();
        let sp = spec(ZLaw::Constant, 0.0);
        let basis = GpcBasis::new(Measure::Uniform, 2).unwrap();
        let ens = run_collocation(&sp, &m, basis.nodes(), basis.weights(), 0.02, 5, 5).unwrap();
        assert_eq!(ens.times().len(), 2);
        let last = ens.snapshot(1);
        assert!(last[0].difference(&last[1]).max_abs() == 0.0);
    }

    #[test]
    fn blockwise_momentum_is_conserved() {
        let m = model();
        let basis = GpcBasis::new(Measure::Uniform, 3).unwrap();
        let e = expand_initial(&spec(ZLaw::Exponential, 1.0), &basis, &m).unwrap();
        let solver = SgSolver::new(&m, &basis, 0.02).unwrap();
        let p0 = e.state.block_momentum(&m);
        let mut s = e.state.clone();
        for _ in 0..10 {
            s = solver.step(&s).unwrap();
        }
        for (a, b) in s.block_momentum(&m).iter().zip(&p0) {
            for j in 0..3 {
                assert!((a[j] - b[j]).abs() < 1e-14);
            }
        }
    }
}
