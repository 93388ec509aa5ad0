//! Spectral state of the perturbation `(u, {f_i})` and its initial data.
//!
//! `u_hat[[j, m]]` holds the coefficient of `e^{i k_m·x}` in velocity component
//! `j`, so `u_hat[[j, 0]]` is the mean velocity `ū_j`. Species perturbations are
//! stored hermite-major, `f_hat[i][[h, m]]`, in the orthonormal tensor basis
//! `L^{-d/2} e^{i k_m·x} ψ_h^{(i)}(v)`.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::symmetrize;
use crate::hermite::basis_values;
use crate::ops::leray_project;
use crate::params::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u_hat: Array2<Complex64>,
    pub f_hat: Vec<Array2<Complex64>>,
    pub time: f64,
}

impl SimState {
    pub fn zeros(model: &Model) -> Self {
        let modes = model.modes.len();
        Self {
            u_hat: Array2::zeros((model.dim(), modes)),
            f_hat: (0..model.n_species())
                .map(|_| Array2::zeros((model.hermite.len(), modes)))
                .collect(),
            time: 0.0,
        }
    }

    /// Mean velocity `ū`, padded to three components.
    pub fn mean_velocity(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (j, slot) in out.iter_mut().enumerate().take(self.u_hat.nrows()) {
            *slot = self.u_hat[[j, 0]].re;
        }
        out
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &SimState) {
        self.u_hat.scaled_add(Complex64::new(a, 0.0), &other.u_hat);
        for (f, g) in self.f_hat.iter_mut().zip(&other.f_hat) {
            f.scaled_add(Complex64::new(a, 0.0), g);
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.u_hat.mapv_inplace(|c| c * a);
        for f in &mut self.f_hat {
            f.mapv_inplace(|c| c * a);
        }
    }

    /// `a * self + b * other`, keeping the time of `self`.
    pub fn combine(&self, a: f64, other: &SimState, b: f64) -> SimState {
        let mut out = self.clone();
        out.scale(a);
        out.add_scaled(b, other);
        out
    }

    pub fn difference(&self, other: &SimState) -> SimState {
        self.combine(1.0, other, -1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.u_hat.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && self
                .f_hat
                .iter()
                .all(|f| f.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        let u = self.u_hat.iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.f_hat
            .iter()
            .flat_map(|f| f.iter())
            .map(|c| c.norm())
            .fold(u, f64::max)
    }

    /// Largest violation of `â(-ξ) = conj(â(ξ))` over all stored coefficients.
    pub fn reality_defect(&self, model: &Model) -> f64 {
        let modes = &model.modes;
        let mut worst: f64 = 0.0;
        let mut check = |row: ndarray::ArrayView1<Complex64>| {
            for m in 0..modes.len() {
                worst = worst.max((row[m] - row[modes.neg(m)].conj()).norm());
            }
        };
        for row in self.u_hat.axis_iter(Axis(0)) {
            check(row);
        }
        for f in &self.f_hat {
            for row in f.axis_iter(Axis(0)) {
                check(row);
            }
        }
        worst
    }

    /// Largest `|k·û(k)|`.
    pub fn divergence_defect(&self, model: &Model) -> f64 {
        (0..model.modes.len())
            .map(|m| {
                let k = model.modes.k(m);
                (0..model.dim())
                    .map(|j| self.u_hat[[j, m]] * k[j])
                    .sum::<Complex64>()
                    .norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Spatial/velocity shape of the initial perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Density, momentum and stress content at `|ξ| <= 1` for every species,
    /// plus a shear velocity mode when `d >= 2`.
    Mixed,
    /// `u = (0, cos x_1, ..)` with particles in the `n_2 >= 1` Hermite family.
    /// Needs `d >= 2`; the set of such states is invariant under the dynamics.
    Shear,
    /// Spatially homogeneous particle perturbation in Hermite bands 1 to 3.
    Homogeneous,
    /// Seeded Gaussian coefficients on `|ξ|_∞ <= 2`, `|n|_∞ <= 3`.
    Random,
}

/// z-dependence of the initial amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZLaw {
    Constant,
    /// `1 + ρ z`
    Linear,
    /// `(1 + ρ z)^2`
    Quadratic,
    /// `e^{ρ z}`
    Exponential,
}

impl ZLaw {
    pub fn eval(self, rho: f64, z: f64) -> f64 {
        match self {
            ZLaw::Constant => 1.0,
            ZLaw::Linear => 1.0 + rho * z,
            ZLaw::Quadratic => (1.0 + rho * z).powi(2),
            ZLaw::Exponential => (rho * z).exp(),
        }
    }

    /// Polynomial degree in z, `None` for non-polynomial laws.
    pub fn degree(self) -> Option<usize> {
        match self {
            ZLaw::Constant => Some(0),
            ZLaw::Linear => Some(1),
            ZLaw::Quadratic => Some(2),
            ZLaw::Exponential => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub amplitude: f64,
    pub profile: Profile,
    pub z_law: ZLaw,
    pub z_coupling: f64,
    pub seed: u64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.05,
            profile: Profile::Mixed,
            z_law: ZLaw::Constant,
            z_coupling: 0.0,
            seed: 0,
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn set_pair(model: &Model, row: &mut ndarray::ArrayViewMut1<Complex64>, w: [i64; 3], value: Complex64) {
    let m = model.modes.index_of(w);
    let n = model.modes.neg(m);
    row[m] = value;
    row[n] = value.conj();
}

fn unit_vec(j: usize) -> [i64; 3] {
    let mut w = [0; 3];
    w[j] = 1;
    w
}

fn hermite_at(model: &Model, n: [usize; 3]) -> Option<usize> {
    model.hermite.index(n)
}

fn nvec(entries: &[(usize, usize)]) -> [usize; 3] {
    let mut n = [0; 3];
    for &(j, v) in entries {
        n[j] = v;
    }
    n
}

fn put_f(model: &Model, f: &mut Array2<Complex64>, w: [i64; 3], n: [usize; 3], value: Complex64) {
    if let Some(h) = hermite_at(model, n) {
        let mut row = f.row_mut(h);
        set_pair(model, &mut row, w, value);
    }
}

fn raw_profile(spec: &InitialSpec, model: &Model) -> Result<SimState> {
    let d = model.dim();
    let mut s = SimState::zeros(model);
    let e1 = unit_vec(0);
    match spec.profile {
        Profile::Mixed => {
            for (i, f) in s.f_hat.iter_mut().enumerate() {
                let w = 1.0 / (i as f64 + 1.0);
                put_f(model, f, e1, nvec(&[]), c(0.5, 0.0));
                put_f(model, f, e1, nvec(&[(0, 1)]), c(0.0, -0.3));
                put_f(model, f, e1, nvec(&[(0, 2)]), c(0.2 * w, 0.1));
                put_f(model, f, [0; 3], nvec(&[(0, 1)]), c(0.4 * w, 0.0));
                put_f(model, f, [0; 3], nvec(&[(0, 2)]), c(0.25, 0.0));
                if d >= 2 {
                    put_f(model, f, e1, nvec(&[(1, 1)]), c(0.3, 0.0));
                }
            }
            if d >= 2 {
                let mut row = s.u_hat.row_mut(1);
                set_pair(model, &mut row, e1, c(0.5, 0.0));
            }
        }
        Profile::Shear => {
            if d < 2 {
                return Err(Error::InvalidConfig(vec![
                    "shear profile needs dim >= 2".to_string(),
                ]));
            }
            let mut row = s.u_hat.row_mut(1);
            set_pair(model, &mut row, e1, c(0.5, 0.0));
            for (i, f) in s.f_hat.iter_mut().enumerate() {
                let sigma = model.species[i].sigma;
                put_f(model, f, e1, nvec(&[(1, 1)]), c(0.4 / sigma, 0.0));
                put_f(model, f, e1, nvec(&[(0, 1), (1, 1)]), c(0.0, 0.1));
                put_f(model, f, e1, nvec(&[(1, 2)]), c(0.05, 0.0));
            }
        }
        Profile::Homogeneous => {
            for (i, f) in s.f_hat.iter_mut().enumerate() {
                let w = 1.0 / (i as f64 + 1.0);
                for j in 0..d {
                    for (order, amp) in [(1, 0.5), (2, 0.35), (3, 0.25)] {
                        put_f(model, f, [0; 3], nvec(&[(j, order)]), c(amp * w, 0.0));
                    }
                }
                if d >= 2 {
                    put_f(model, f, [0; 3], nvec(&[(0, 1), (1, 1)]), c(0.2 * w, 0.0));
                }
            }
        }
        Profile::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let band = 2.min(model.modes.cut() as i64);
            let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
            let modes = &model.modes;
            for j in 0..d {
                for m in 0..modes.len() {
                    if modes.xi(m).iter().all(|w| w.abs() <= band) {
                        s.u_hat[[j, m]] = c(0.3 * draw(), 0.3 * draw());
                    }
                }
            }
            for f in s.f_hat.iter_mut() {
                for h in 0..model.hermite.len() {
                    let n = model.hermite.multi(h);
                    if n.iter().any(|&v| v > 3) {
                        continue;
                    }
                    let scale = 0.3 / (1.0 + model.hermite.order(h) as f64);
                    for m in 0..modes.len() {
                        if modes.xi(m).iter().all(|w| w.abs() <= band) {
                            f[[h, m]] = c(scale * draw(), scale * draw());
                        }
                    }
                }
            }
            for j in 0..d {
                let mut row = s.u_hat.row(j).to_owned();
                symmetrize(modes, &mut row);
                s.u_hat.row_mut(j).assign(&row);
            }
            for f in s.f_hat.iter_mut() {
                for h in 0..model.hermite.len() {
                    let mut row = f.row(h).to_owned();
                    symmetrize(modes, &mut row);
                    f.row_mut(h).assign(&row);
                }
            }
        }
    }
    Ok(s)
}

/// Drops content beyond the dealiasing cut, projects onto divergence-free
/// fields and enforces zero species mass and zero total momentum.
pub fn enforce_compatibility(model: &Model, s: &mut SimState) {
    for m in 0..model.modes.len() {
        if !model.modes.retained(m) {
            for j in 0..model.dim() {
                s.u_hat[[j, m]] = Complex64::new(0.0, 0.0);
            }
            for f in s.f_hat.iter_mut() {
                for h in 0..model.hermite.len() {
                    f[[h, m]] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
    leray_project(model, &mut s.u_hat);
    for f in s.f_hat.iter_mut() {
        f[[0, 0]] = Complex64::new(0.0, 0.0);
    }
    let ubar = compatible_mean_velocity(model, s);
    for j in 0..model.dim() {
        s.u_hat[[j, 0]] = Complex64::new(ubar[j], 0.0);
    }
}

/// Mean velocity that makes `L^d ū + κ Σ_i i σ_i ĉ_i(0, e_j)` vanish.
pub fn compatible_mean_velocity(model: &Model, s: &SimState) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, slot) in out.iter_mut().enumerate().take(model.dim()) {
        let e = model.hermite.unit(j);
        let particles: f64 = model
            .species
            .iter()
            .zip(&s.f_hat)
            .map(|(sp, f)| sp.size * sp.sigma * f[[e, 0]].re)
            .sum();
        *slot = -model.kappa() * particles / model.volume();
    }
    out
}

/// Builds the compatible initial state at the random point `z`.
pub fn make_initial_state(spec: &InitialSpec, model: &Model, z: f64) -> Result<SimState> {
    let mut s = raw_profile(spec, model)?;
    s.scale(spec.amplitude * spec.z_law.eval(spec.z_coupling, z));
    enforce_compatibility(model, &mut s);
    Ok(s)
}

/// Pointwise samples produced by [`reconstruct_physical`].
#[derive(Debug, Clone)]
pub struct PhysicalSample {
    /// `u(x_p)` per point, padded to three components.
    pub u: Vec<[f64; 3]>,
    /// `f_i(x_p, v_q)` indexed `[p][q]`.
    pub f: Vec<Vec<f64>>,
}

/// Evaluates `u` and `f_species` by direct summation of the basis.
pub fn reconstruct_physical(
    s: &SimState,
    model: &Model,
    x_points: &[[f64; 3]],
    v_points: &[[f64; 3]],
    species: usize,
) -> PhysicalSample {
    let d = model.dim();
    let modes = &model.modes;
    let norm = model.volume().sqrt().recip();
    let sigma = model.species[species].sigma;
    let psi: Vec<Vec<f64>> = v_points
        .iter()
        .map(|v| basis_values(&model.hermite, sigma, &v[..d]))
        .collect();
    let f = &s.f_hat[species];
    let mut u_out = Vec::with_capacity(x_points.len());
    let mut f_out = Vec::with_capacity(x_points.len());
    for x in x_points {
        let phase: Array1<Complex64> = (0..modes.len())
            .map(|m| {
                let k = modes.k(m);
                let arg: f64 = (0..d).map(|j| k[j] * x[j]).sum();
                Complex64::from_polar(1.0, arg)
            })
            .collect();
        let mut u = [0.0; 3];
        for (j, slot) in u.iter_mut().enumerate().take(d) {
            *slot = (0..modes.len())
                .map(|m| s.u_hat[[j, m]] * phase[m])
                .sum::<Complex64>()
                .re;
        }
        u_out.push(u);
        // spatial coefficient of each Hermite function at this x
        let slab: Vec<f64> = (0..model.hermite.len())
            .map(|h| {
                (0..modes.len())
                    .map(|m| f[[h, m]] * phase[m])
                    .sum::<Complex64>()
                    .re
                    * norm
            })
            .collect();
        f_out.push(
            psi.iter()
                .map(|p| slab.iter().zip(p).map(|(a, b)| a * b).sum())
                .collect(),
        );
    }
    PhysicalSample { u: u_out, f: f_out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ModelParams, SpectralGrid};

    fn model(dim: usize, sizes: Vec<u32>) -> Model {
        Model::new(
            ModelParams {
                dim,
                sizes,
                epsilon: 0.5,
                ..ModelParams::default()
            },
            SpectralGrid::new(12, 6),
        )
        .unwrap()
    }

    #[test]
    fn zero_amplitude_gives_zero_state() {
        let m = model(2, vec![1, 2]);
        let spec = InitialSpec {
            amplitude: 0.0,
            ..InitialSpec::default()
        };
        let s = make_initial_state(&spec, &m, 0.3).unwrap();
        assert_eq!(s.max_abs(), 0.0);
    }

    #[test]
    fn constructors_are_compatible() {
        for dim in 1..=2 {
            let m = model(dim, vec![1, 3]);
            for profile in [Profile::Mixed, Profile::Homogeneous, Profile::Random] {
                let spec = InitialSpec {
                    amplitude: 0.1,
                    profile,
                    seed: 11,
                    ..InitialSpec::default()
                };
                let s = make_initial_state(&spec, &m, 0.0).unwrap();
                for f in &s.f_hat {
                    assert_eq!(f[[0, 0]], Complex64::new(0.0, 0.0));
                }
                assert!(s.reality_defect(&m) < 1e-15, "{profile:?}");
                assert!(s.divergence_defect(&m) < 1e-14, "{profile:?}");
                let ubar = compatible_mean_velocity(&m, &s);
                for j in 0..dim {
                    assert!((s.u_hat[[j, 0]].re - ubar[j]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn shear_needs_two_dimensions() {
        let spec = InitialSpec {
            profile: Profile::Shear,
            ..InitialSpec::default()
        };
        assert!(make_initial_state(&spec, &model(1, vec![1]), 0.0).is_err());
        assert!(make_initial_state(&spec, &model(2, vec![1]), 0.0).is_ok());
    }

    #[test]
    fn single_ground_mode_reconstructs_to_maxwellian_root() {
        let m = model(1, vec![1]);
        let mut s = SimState::zeros(&m);
        s.f_hat[0][[0, 0]] = Complex64::new(1.0, 0.0);
        let xs = [[-1.0, 0.0, 0.0], [0.7, 0.0, 0.0]];
        let vs = [[0.0, 0.0, 0.0], [1.3, 0.0, 0.0]];
        let out = reconstruct_physical(&s, &m, &xs, &vs, 0);
        let l = m.params.domain_length;
        for row in &out.f {
            for (q, v) in vs.iter().enumerate() {
                let psi0 = (2.0 * std::f64::consts::PI).powf(-0.25) * (-0.25 * v[0] * v[0]).exp();
                assert!((row[q] - psi0 / l.sqrt()).abs() < 1e-15);
            }
        }
    }
}
