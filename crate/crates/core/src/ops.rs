//! Phase-space operators acting on Fourier-Hermite coefficients.
//!
//! With `σ_i² = θ̄/i` the velocity operators
//! `𝒦_i = σ_i² ∇_v + v/2` and `𝒦_i* = -σ_i² ∇_v + v/2` are exact lowering and
//! raising operators, `𝒦_{ij} ψ_n = σ_i √n_j ψ_{n-e_j}` and
//! `𝒦_{ij}* ψ_n = σ_i √(n_j+1) ψ_{n+e_j}`. Raising past `n_v - 1` drops the
//! coefficient. `v_j = 𝒦_{ij} + 𝒦_{ij}*`, and `𝒮_{ij} = (θ̄²/i²) ∂_{x_j}`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::params::Model;

/// Which operator [`LadderSuite::apply`] realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    /// `𝒦`: one lowered copy per velocity component.
    K,
    /// `𝒦*`: one raised copy per velocity component.
    KStar,
    /// `𝒦*·𝒦`, diagonal with eigenvalue `σ² |n|_1`.
    KStarK,
    /// `𝒮`: one spatial derivative per component, scaled by `θ̄²/i²`.
    S,
}

/// Precomputed ladder factors for every species.
#[derive(Debug, Clone)]
pub struct LadderSuite {
    model: Model,
    /// `sqrt_n[h][j] = √n_j` for the multi-index of `h`.
    sqrt_n: Vec<[f64; 3]>,
}

impl LadderSuite {
    pub fn new(model: &Model) -> Self {
        let sqrt_n = (0..model.hermite.len())
            .map(|h| {
                let n = model.hermite.multi(h);
                [
                    (n[0] as f64).sqrt(),
                    (n[1] as f64).sqrt(),
                    (n[2] as f64).sqrt(),
                ]
            })
            .collect();
        Self {
            model: model.clone(),
            sqrt_n,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn sigma(&self, species: usize) -> f64 {
        self.model.species[species].sigma
    }

    /// `𝒦_{ij} f`.
    pub fn lower(&self, species: usize, f: &Array2<Complex64>, j: usize) -> Array2<Complex64> {
        let sigma = self.sigma(species);
        let hermite = &self.model.hermite;
        let mut out = Array2::zeros(f.raw_dim());
        for h in 0..hermite.len() {
            if let Some(up) = hermite.raise(h, j) {
                let factor = sigma * self.sqrt_n[up][j];
                out.row_mut(h).scaled_add(Complex64::new(factor, 0.0), &f.row(up));
            }
        }
        out
    }

    /// `𝒦_{ij}* f`, truncated at the top Hermite band.
    pub fn raise(&self, species: usize, f: &Array2<Complex64>, j: usize) -> Array2<Complex64> {
        let sigma = self.sigma(species);
        let hermite = &self.model.hermite;
        let mut out = Array2::zeros(f.raw_dim());
        for h in 0..hermite.len() {
            if let Some(up) = hermite.raise(h, j) {
                let factor = sigma * self.sqrt_n[up][j];
                out.row_mut(up).scaled_add(Complex64::new(factor, 0.0), &f.row(h));
            }
        }
        out
    }

    /// `𝒦_i*·𝒦_i f`.
    pub fn number(&self, species: usize, f: &Array2<Complex64>) -> Array2<Complex64> {
        let s2 = self.sigma(species).powi(2);
        let mut out = f.clone();
        for h in 0..self.model.hermite.len() {
            let w = s2 * self.model.hermite.order(h) as f64;
            out.row_mut(h).mapv_inplace(|c| c * w);
        }
        out
    }

    /// `𝒮_{ij} f = (θ̄²/i²) ∂_{x_j} f`.
    pub fn s_op(&self, species: usize, f: &Array2<Complex64>, j: usize) -> Array2<Complex64> {
        let size = self.model.species[species].size;
        let scale = self.model.theta_bar().powi(2) / (size * size);
        let modes = &self.model.modes;
        let mut out = f.clone();
        for m in 0..modes.len() {
            let factor = Complex64::new(0.0, scale * modes.k(m)[j]);
            out.column_mut(m).mapv_inplace(|c| c * factor);
        }
        out
    }

    pub fn apply(&self, species: usize, f: &Array2<Complex64>, which: Ladder) -> Vec<Array2<Complex64>> {
        let d = self.model.dim();
        match which {
            Ladder::K => (0..d).map(|j| self.lower(species, f, j)).collect(),
            Ladder::KStar => (0..d).map(|j| self.raise(species, f, j)).collect(),
            Ladder::KStarK => vec![self.number(species, f)],
            Ladder::S => (0..d).map(|j| self.s_op(species, f, j)).collect(),
        }
    }

    /// `𝒦*·g = Σ_j 𝒦_j* g_j` for a vector-valued `g`.
    pub fn adjoint_contract(&self, species: usize, g: &[Array2<Complex64>]) -> Array2<Complex64> {
        let mut out = Array2::zeros(g[0].raw_dim());
        for (j, gj) in g.iter().enumerate() {
            out += &self.raise(species, gj, j);
        }
        out
    }

    /// Coefficients of `v·∇_x f`.
    pub fn transport(&self, species: usize, f: &Array2<Complex64>) -> Array2<Complex64> {
        let sigma = self.sigma(species);
        let hermite = &self.model.hermite;
        let modes = &self.model.modes;
        let mut out: Array2<Complex64> = Array2::zeros(f.raw_dim());
        for j in 0..self.model.dim() {
            let ik: Vec<Complex64> = (0..modes.len())
                .map(|m| Complex64::new(0.0, modes.k(m)[j]))
                .collect();
            for h in 0..hermite.len() {
                if let Some(up) = hermite.raise(h, j) {
                    let factor = sigma * self.sqrt_n[up][j];
                    let (lo_row, hi_row) = (f.row(h), f.row(up));
                    // up <- h (raising) and h <- up (lowering)
                    for m in 0..modes.len() {
                        let a = ik[m] * factor;
                        out[[up, m]] += a * lo_row[m];
                        out[[h, m]] += a * hi_row[m];
                    }
                }
            }
        }
        out
    }
}

/// Free-function form of [`LadderSuite::apply`].
pub fn apply_ladder(
    suite: &LadderSuite,
    species: usize,
    f: &Array2<Complex64>,
    which: Ladder,
) -> Vec<Array2<Complex64>> {
    suite.apply(species, f, which)
}

/// Free-function form of [`LadderSuite::transport`].
pub fn transport_term(suite: &LadderSuite, species: usize, f: &Array2<Complex64>) -> Array2<Complex64> {
    suite.transport(species, f)
}

/// `û(ξ) <- (I - ξξᵀ/|ξ|²) û(ξ)` for `ξ ≠ 0`; the mean mode is untouched.
pub fn leray_project(model: &Model, u_hat: &mut Array2<Complex64>) {
    let d = model.dim();
    let modes = &model.modes;
    for m in 1..modes.len() {
        let k = modes.k(m);
        let k2 = modes.k2(m);
        if k2 == 0.0 {
            continue;
        }
        let dot: Complex64 = (0..d).map(|j| u_hat[[j, m]] * k[j]).sum();
        for j in 0..d {
            u_hat[[j, m]] -= dot * (k[j] / k2);
        }
    }
}

/// Applies the Leray projector of mode `m` to a small vector.
pub fn leray_matrix(model: &Model, m: usize) -> [[f64; 3]; 3] {
    let d = model.dim();
    let k = model.modes.k(m);
    let k2 = model.modes.k2(m);
    let mut p = [[0.0; 3]; 3];
    for (a, row) in p.iter_mut().enumerate().take(d) {
        for (b, entry) in row.iter_mut().enumerate().take(d) {
            let id = if a == b { 1.0 } else { 0.0 };
            *entry = if k2 == 0.0 { id } else { id - k[a] * k[b] / k2 };
        }
    }
    p
}

/// Velocity moments of `√μ_i f_i`, expressed as spatial fields with the
/// `e^{i k·x}` convention of the fluid velocity.
#[derive(Debug, Clone)]
pub struct Moments {
    /// `∫ √μ_i f_i dv`.
    pub density: Array1<Complex64>,
    /// `∫ v_j √μ_i f_i dv`.
    pub momentum: Vec<Array1<Complex64>>,
    /// `∫ v_j v_l √μ_i f_i dv`.
    pub stress: Vec<Vec<Array1<Complex64>>>,
}

pub fn moments(model: &Model, species: usize, f: &Array2<Complex64>) -> Moments {
    let d = model.dim();
    let hermite = &model.hermite;
    let sigma = model.species[species].sigma;
    let scale = 1.0 / model.volume();
    let row = |n: [usize; 3]| -> Array1<Complex64> {
        match hermite.index(n) {
            Some(h) => f.row(h).mapv(|c| c * scale),
            None => Array1::zeros(f.ncols()),
        }
    };
    let density = row([0, 0, 0]);
    let momentum = (0..d)
        .map(|j| {
            let mut n = [0; 3];
            n[j] = 1;
            row(n).mapv(|c| c * sigma)
        })
        .collect();
    let stress = (0..d)
        .map(|j| {
            (0..d)
                .map(|l| {
                    let s2 = sigma * sigma;
                    if j == l {
                        // x² ψ_0 = √2 ψ_2 + ψ_0
                        let mut n = [0; 3];
                        n[j] = 2;
                        (row(n).mapv(|c| c * std::f64::consts::SQRT_2) + &density).mapv(|c| c * s2)
                    } else {
                        let mut n = [0; 3];
                        n[j] = 1;
                        n[l] = 1;
                        row(n).mapv(|c| c * s2)
                    }
                })
                .collect()
        })
        .collect();
    Moments {
        density,
        momentum,
        stress,
    }
}

/// `⟨f, g⟩_{x,v}` for two coefficient arrays in the orthonormal basis.
pub fn inner(f: &Array2<Complex64>, g: &Array2<Complex64>) -> f64 {
    f.iter().zip(g.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Sobolev-weighted `Σ_{|α|<=s} ⟨∂^α f, ∂^α g⟩`.
pub fn inner_s(model: &Model, f: &Array2<Complex64>, g: &Array2<Complex64>, s: usize) -> f64 {
    let modes = &model.modes;
    let weights: Vec<f64> = (0..modes.len()).map(|m| modes.sobolev_weight(m, s)).collect();
    let mut acc = 0.0;
    for h in 0..f.nrows() {
        for m in 0..f.ncols() {
            acc += weights[m] * (f[[h, m]].conj() * g[[h, m]]).re;
        }
    }
    acc
}
