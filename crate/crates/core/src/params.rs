//! Physical parameters, spectral resolution and the validated model they define.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{ModeSet, Transform};
use crate::hermite::HermiteIndex;

/// Physical and scaling constants of the perturbation system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Knudsen number, `0 < ε <= 1`.
    pub epsilon: f64,
    /// Particle/fluid coupling constant.
    pub kappa: f64,
    /// Temperature `θ̄`.
    pub theta_bar: f64,
    /// Particle sizes, strictly increasing positive integers.
    pub sizes: Vec<u32>,
    pub dim: usize,
    /// Side of the periodic box `[-L/2, L/2]^d`.
    pub domain_length: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            kappa: 1.0,
            theta_bar: 1.0,
            sizes: vec![1],
            dim: 1,
            domain_length: 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralGrid {
    /// Fourier modes per spatial dimension (even, at least 4).
    pub n_x: usize,
    /// Hermite modes per velocity dimension.
    pub n_v: usize,
    /// Largest retained `|ξ_j|`, `floor(n_x / 3)`.
    pub dealias_cut: usize,
}

impl SpectralGrid {
    pub fn new(n_x: usize, n_v: usize) -> Self {
        Self {
            n_x,
            n_v,
            dealias_cut: n_x / 3,
        }
    }
}

/// Per-species constants derived from the size `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Species {
    pub size: f64,
    /// `σ_i = sqrt(θ̄ / i)`.
    pub sigma: f64,
    /// `i^{1/3}`.
    pub cbrt: f64,
    /// `i^{2/3}`.
    pub cbrt2: f64,
}

/// A validated configuration with every derived table the operators need.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub grid: SpectralGrid,
    pub modes: ModeSet,
    pub hermite: HermiteIndex,
    pub species: Vec<Species>,
    pub transform: Transform,
}

/// Checks every invariant of the configuration and reports all violations at once.
pub fn validate_params(params: &ModelParams, grid: &SpectralGrid) -> Result<Model> {
    let mut errors = Vec::new();
    if !(params.epsilon > 0.0 && params.epsilon <= 1.0) {
        errors.push(format!("epsilon out of range: {}", params.epsilon));
    }
    if !(params.kappa >= 0.0 && params.kappa.is_finite()) {
        errors.push(format!("kappa must be non-negative: {}", params.kappa));
    }
    if !(params.theta_bar > 0.0 && params.theta_bar.is_finite()) {
        errors.push(format!("theta_bar must be positive: {}", params.theta_bar));
    }
    if params.sizes.is_empty() {
        errors.push("sizes is empty".to_string());
    } else if params.sizes[0] == 0 {
        errors.push("sizes must be positive".to_string());
    }
    if params.sizes.windows(2).any(|w| w[0] >= w[1]) {
        errors.push("sizes not increasing".to_string());
    }
    if !(1..=3).contains(&params.dim) {
        errors.push(format!("dim must be 1, 2 or 3: {}", params.dim));
    }
    if !(params.domain_length > 0.0 && params.domain_length.is_finite()) {
        errors.push(format!(
            "domain_length must be positive: {}",
            params.domain_length
        ));
    }
    if !grid.n_x.is_multiple_of(2) {
        errors.push(format!("n_x must be even: {}", grid.n_x));
    }
    if grid.n_x < 4 {
        errors.push(format!("n_x must be at least 4: {}", grid.n_x));
    }
    if grid.n_v < 2 {
        errors.push(format!("n_v must be at least 2: {}", grid.n_v));
    }
    if grid.dealias_cut != grid.n_x / 3 {
        errors.push(format!(
            "dealias_cut must equal floor(n_x/3) = {}: {}",
            grid.n_x / 3,
            grid.dealias_cut
        ));
    }
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    Ok(Model::build(params.clone(), *grid))
}

impl Model {
    pub fn new(params: ModelParams, grid: SpectralGrid) -> Result<Self> {
        validate_params(&params, &grid)
    }

    fn build(params: ModelParams, grid: SpectralGrid) -> Self {
        let modes = ModeSet::new(grid.n_x, params.dim, params.domain_length, grid.dealias_cut);
        let hermite = HermiteIndex::new(grid.n_v, params.dim);
        let species = params
            .sizes
            .iter()
            .map(|&i| {
                let size = i as f64;
                Species {
                    size,
                    sigma: (params.theta_bar / size).sqrt(),
                    cbrt: size.cbrt(),
                    cbrt2: size.cbrt().powi(2),
                }
            })
            .collect();
        let transform = Transform::new(&modes);
        Self {
            params,
            grid,
            modes,
            hermite,
            species,
            transform,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// `|T|^d = L^d`.
    pub fn volume(&self) -> f64 {
        self.params.domain_length.powi(self.params.dim as i32)
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    pub fn kappa(&self) -> f64 {
        self.params.kappa
    }

    pub fn theta_bar(&self) -> f64 {
        self.params.theta_bar
    }

    pub fn sigma_max(&self) -> f64 {
        self.species.iter().map(|s| s.sigma).fold(0.0, f64::max)
    }

    /// `Σ_i i^{1/3}`.
    pub fn drag_sum(&self) -> f64 {
        self.species.iter().map(|s| s.cbrt).sum()
    }

    /// Fokker-Planck decay rate `|n|_1 / (i^{2/3} ε)` of Hermite index `h`.
    pub fn fp_rate(&self, species: usize, h: usize) -> f64 {
        self.hermite.order(h) as f64 / (self.species[species].cbrt2 * self.params.epsilon)
    }

    /// Same configuration with a different Knudsen number.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.epsilon = epsilon;
        validate_params(&params, &self.grid)
    }

    /// True when `Σ_i i^{1/3} = 1`, where the mean-velocity dissipation term vanishes.
    pub fn degenerate_mean_dissipation(&self) -> bool {
        (self.drag_sum() - 1.0).abs() < 1e-14
    }
}
