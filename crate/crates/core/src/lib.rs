//! Spectral solver for the multi-size Navier–Stokes–Vlasov–Fokker–Planck
//! perturbation system on the periodic box, with generalized polynomial
//! chaos stochastic Galerkin propagation of random initial data.
//!
//! Fluid velocity is expanded in Fourier modes and every particle species in
//! a Hermite–Fourier basis attached to its own Maxwellian. Time stepping is
//! Strang splitting of an exactly integrated stiff linear block and an
//! explicit SSP-RK3 step for transport and the quadratic couplings.

pub mod diagnostics;
pub mod error;
pub mod fourier;
pub mod gpc;
pub mod harness;
pub mod hermite;
pub mod ops;
pub mod params;
pub mod sg;
pub mod solver;
pub mod state;

pub use diagnostics::{
    conservation_report, energy, energy_report, energy_sr, fit_decay_rate, g1, g2, hydro_residual, hypo_functionals,
    momentum_functional, DecayFit, DiagnosticsConfig, EnergyReport,
};
pub use error::{Error, Result};
pub use gpc::{build_basis, galerkin_product, triple_products, GpcBasis, Measure, TripleTensor};
pub use harness::{emit_outputs, run_experiment, ExperimentResult, HarnessConfig, Preset};
pub use ops::{apply_ladder, leray_project, transport_term, Ladder, LadderSuite};
pub use params::{validate_params, Model, ModelParams, SpectralGrid};
pub use sg::{expand_initial, reconstruct_at, run_collocation, sg_error, weighted_energy, SgSolver, SgState};
pub use solver::{Solver, SolverOptions, StiffPropagator};
pub use state::{make_initial_state, InitialSpec, Profile, SimState, ZLaw};
