//! Energies, dissipation terms, hypocoercive functionals and residuals.
//!
//! Every norm is evaluated on the spectral coefficients. With Sobolev weight
//! `w_s(ξ) = Σ_{|α|<=s} Π_j k_j^{2α_j}`:
//!
//! * `|u|_s² = L^d Σ_ξ w_s |û(ξ)|²`
//! * `|f_i|_s² = Σ_{ξ,n} w_s |ĉ_i(ξ,n)|²` (the basis is orthonormal)
//! * `E_{s,0} = |u|_s² + κθ̄ Σ_i |f_i|_s² + |ū|²`

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::{least_squares_slope, GpcBasis};
use crate::ops::{inner_s, LadderSuite};
use crate::params::Model;
use crate::state::SimState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub s_order: usize,
    /// Weight of the hypocoercive correction in `Ẽ`.
    pub lambda4: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            s_order: 2,
            lambda4: 0.01,
        }
    }
}

/// The three pieces of `E_{s,0}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyParts {
    pub fluid: f64,
    /// `|f_i|_s²` per species, without the `κθ̄` factor.
    pub species: Vec<f64>,
    pub mean: f64,
    pub total: f64,
}

fn weights(model: &Model, s: usize) -> Vec<f64> {
    (0..model.modes.len())
        .map(|m| model.modes.sobolev_weight(m, s))
        .collect()
}

fn weighted_sq(w: &[f64], a: &Array2<Complex64>) -> f64 {
    let mut acc = 0.0;
    for row in a.rows() {
        for (c, wm) in row.iter().zip(w) {
            acc += wm * c.norm_sqr();
        }
    }
    acc
}

pub fn energy(model: &Model, s: &SimState, s_order: usize) -> EnergyParts {
    let w = weights(model, s_order);
    let fluid = model.volume() * weighted_sq(&w, &s.u_hat);
    let species: Vec<f64> = s.f_hat.iter().map(|f| weighted_sq(&w, f)).collect();
    let mean: f64 = s.mean_velocity().iter().map(|x| x * x).sum();
    let total = fluid + model.kappa() * model.theta_bar() * species.iter().sum::<f64>() + mean;
    EnergyParts {
        fluid,
        species,
        mean,
        total,
    }
}

/// `L^d ū_j + κ Σ_i i σ_i Re ĉ_i(0, e_j)`, the conserved total momentum.
pub fn momentum_functional(model: &Model, s: &SimState) -> [f64; 3] {
    let mut out = [0.0; 3];
    let ubar = s.mean_velocity();
    for (j, slot) in out.iter_mut().enumerate().take(model.dim()) {
        let e = model.hermite.unit(j);
        let particles: f64 = model
            .species
            .iter()
            .zip(&s.f_hat)
            .map(|(sp, f)| sp.size * sp.sigma * f[[e, 0]].re)
            .sum();
        *slot = model.volume() * ubar[j] + model.kappa() * particles;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    /// `|ĉ_i(0,0)|` per species.
    pub mass: Vec<f64>,
    /// Largest component of the momentum change against the reference.
    pub momentum_drift: f64,
    /// Largest component of `ū + (κ/L^d) Σ_i i σ_i ĉ_i(0,e_j)`.
    pub ubar_residual: f64,
}

pub fn conservation_report(model: &Model, s: &SimState, reference: &[f64; 3]) -> ConservationReport {
    let mass = s.f_hat.iter().map(|f| f[[0, 0]].norm()).collect();
    let p = momentum_functional(model, s);
    let ubar = s.mean_velocity();
    let mut drift: f64 = 0.0;
    let mut ubar_res: f64 = 0.0;
    for j in 0..model.dim() {
        drift = drift.max((p[j] - reference[j]).abs());
        let identity = ubar[j] + (p[j] - model.volume() * ubar[j]) / model.volume();
        ubar_res = ubar_res.max(identity.abs());
    }
    ConservationReport {
        mass,
        momentum_drift: drift,
        ubar_residual: ubar_res,
    }
}

/// `(f_i, f_i)_s` and `[f_i, f_i]_s` per species.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypoTerms {
    pub pair: Vec<f64>,
    pub bracket: Vec<f64>,
}

struct LadderNorms {
    kk: f64,
    ks: f64,
    ss: f64,
    k2: f64,
    kss: f64,
    ff: f64,
}

fn ladder_norms(suite: &LadderSuite, i: usize, f: &Array2<Complex64>, s: usize) -> LadderNorms {
    let model = suite.model();
    let d = model.dim();
    let kf: Vec<_> = (0..d).map(|j| suite.lower(i, f, j)).collect();
    let sf: Vec<_> = (0..d).map(|j| suite.s_op(i, f, j)).collect();
    let mut n = LadderNorms {
        kk: 0.0,
        ks: 0.0,
        ss: 0.0,
        k2: 0.0,
        kss: 0.0,
        ff: inner_s(model, f, f, s),
    };
    for j in 0..d {
        n.kk += inner_s(model, &kf[j], &kf[j], s);
        n.ks += inner_s(model, &kf[j], &sf[j], s);
        n.ss += inner_s(model, &sf[j], &sf[j], s);
        for l in 0..d {
            let kk = suite.lower(i, &kf[l], j);
            n.k2 += inner_s(model, &kk, &kk, s);
            let ks = suite.lower(i, &sf[l], j);
            n.kss += inner_s(model, &ks, &ks, s);
        }
    }
    n
}

pub fn hypo_functionals(model: &Model, s: &SimState, s_order: usize) -> HypoTerms {
    let suite = LadderSuite::new(model);
    hypo_with(&suite, s, s_order)
}

fn hypo_with(suite: &LadderSuite, s: &SimState, s_order: usize) -> HypoTerms {
    let model = suite.model();
    let eps = model.epsilon();
    let mut pair = Vec::new();
    let mut bracket = Vec::new();
    for (i, f) in s.f_hat.iter().enumerate() {
        let n = ladder_norms(suite, i, f, s_order);
        let weight = 1.0 / model.species[i].cbrt;
        pair.push(weight * (2.0 * n.kk + 2.0 * eps * eps * n.ks + eps.powi(3) * n.ss));
        bracket.push(n.kk + eps.powi(4) * n.ss + eps * eps * n.k2 + eps.powi(4) * n.kss);
    }
    HypoTerms { pair, bracket }
}

/// `‖f‖_0² / (‖𝒦f‖_0² + ε²‖𝒮f‖_0²)` summed over species; `None` when the denominator vanishes.
pub fn poincare_ratio(model: &Model, s: &SimState) -> Option<f64> {
    let suite = LadderSuite::new(model);
    poincare_with(&suite, s)
}

fn poincare_with(suite: &LadderSuite, s: &SimState) -> Option<f64> {
    let eps = suite.model().epsilon();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, f) in s.f_hat.iter().enumerate() {
        let n = ladder_norms(suite, i, f, 0);
        num += n.ff;
        den += n.kk + eps * eps * n.ss;
    }
    (den > 0.0).then(|| num / den)
}

/// `|∇u|_s² + (κ/ε)(Σ_i i^{1/3} - 1)|ū|²`.
pub fn g1(model: &Model, s: &SimState, s_order: usize) -> f64 {
    let w = weights(model, s_order);
    let mut grad = 0.0;
    for row in s.u_hat.rows() {
        for (m, c) in row.iter().enumerate() {
            grad += w[m] * model.modes.k2(m) * c.norm_sqr();
        }
    }
    let mean: f64 = s.mean_velocity().iter().map(|x| x * x).sum();
    model.volume() * grad + model.kappa() / model.epsilon() * (model.drag_sum() - 1.0) * mean
}

/// `|u√μ_i - 𝒦_i f_i|_s²` per species, from the coefficients of the
/// vector field `g_j(ξ, n) = δ_{n0} û_j(ξ) - σ_i √(n_j+1) ĉ_i(ξ, n+e_j)`.
pub fn g2(model: &Model, s: &SimState, s_order: usize) -> Vec<f64> {
    let w = weights(model, s_order);
    let hermite = &model.hermite;
    let d = model.dim();
    s.f_hat
        .iter()
        .zip(&model.species)
        .map(|(f, sp)| {
            let mut acc = 0.0;
            for j in 0..d {
                for h in 0..hermite.len() {
                    let up = hermite.raise(h, j);
                    let factor = sp.sigma * ((hermite.multi(h)[j] + 1) as f64).sqrt();
                    for (m, wm) in w.iter().enumerate() {
                        let mut g = match up {
                            Some(up) => -f[[up, m]] * factor,
                            None => Complex64::new(0.0, 0.0),
                        };
                        if h == 0 {
                            g += s.u_hat[[j, m]];
                        }
                        acc += wm * g.norm_sqr();
                    }
                }
            }
            acc
        })
        .collect()
}

/// Expanded form `‖u√μ‖² - 2⟨u·v√μ, f⟩ + ⟨𝒦*𝒦 f, f⟩` of [`g2`].
pub fn g2_expanded(model: &Model, s: &SimState, s_order: usize) -> Vec<f64> {
    let w = weights(model, s_order);
    let u_sq = weighted_sq(&w, &s.u_hat);
    let suite = LadderSuite::new(model);
    s.f_hat
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let sigma = model.species[i].sigma;
            let mut cross = 0.0;
            for j in 0..model.dim() {
                let e = model.hermite.unit(j);
                for (m, wm) in w.iter().enumerate() {
                    cross += wm * ((s.u_hat[[j, m]] * sigma).conj() * f[[e, m]]).re;
                }
            }
            let number = inner_s(model, &suite.number(i, f), f, s_order);
            u_sq - 2.0 * cross + number
        })
        .collect()
}

/// `‖J_i - i n_i u‖_0` per species, with `n_i = L^{-d} + ∫√μ_i f_i dv` the full density.
pub fn hydro_residual(model: &Model, s: &SimState) -> Vec<f64> {
    let d = model.dim();
    let inv_vol = 1.0 / model.volume();
    let tr = &model.transform;
    s.f_hat
        .iter()
        .zip(&model.species)
        .map(|(f, sp)| {
            let rho = f.row(0).mapv(|c| c * inv_vol);
            let mut acc = 0.0;
            for j in 0..d {
                let e = model.hermite.unit(j);
                let nu = tr.product(rho.view(), s.u_hat.row(j));
                for m in 0..model.modes.len() {
                    let r = f[[e, m]] * (sp.sigma * inv_vol) - s.u_hat[[j, m]] * inv_vol - nu[m];
                    acc += (r * sp.size).norm_sqr();
                }
            }
            (model.volume() * acc).sqrt()
        })
        .collect()
}

/// One row of the diagnostic time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e_s0: f64,
    pub parts: EnergyParts,
    pub g1: f64,
    pub g2: Vec<f64>,
    /// `(κ/ε) Σ_i i^{1/3} G2_i`.
    pub sum_g2: f64,
    pub hypo_pair: Vec<f64>,
    pub hypo_bracket: Vec<f64>,
    /// `E + λ4 κθ̄ Σ_i (f_i, f_i)_s`.
    pub e_tilde: f64,
    pub mass_res: Vec<f64>,
    pub mom_res: f64,
    pub ubar_res: f64,
    pub hydro_res: Vec<f64>,
    pub poincare: Option<f64>,
}

pub const CSV_HEADER: &str =
    "t,E_s0,G1,sum_G2,mass_res_max,mom_res,ubar_res,hypo_pair_sum,hypo_bracket_sum,E_tilde,hydro_res_max";

fn fmax(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl EnergyReport {
    pub fn csv_row(&self) -> String {
        let vals = [
            self.t,
            self.e_s0,
            self.g1,
            self.sum_g2,
            fmax(&self.mass_res),
            self.mom_res,
            self.ubar_res,
            self.hypo_pair.iter().sum(),
            self.hypo_bracket.iter().sum(),
            self.e_tilde,
            fmax(&self.hydro_res),
        ];
        vals.iter()
            .map(|v| format!("{v:.17e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn energy_report(model: &Model, s: &SimState, config: &DiagnosticsConfig, reference: &[f64; 3]) -> EnergyReport {
    let suite = LadderSuite::new(model);
    let so = config.s_order;
    let parts = energy(model, s, so);
    let g2v = g2(model, s, so);
    let sum_g2 = model.kappa() / model.epsilon()
        * model
            .species
            .iter()
            .zip(&g2v)
            .map(|(sp, g)| sp.cbrt * g)
            .sum::<f64>();
    let hypo = hypo_with(&suite, s, so);
    let e_tilde = parts.total + config.lambda4 * model.kappa() * model.theta_bar() * hypo.pair.iter().sum::<f64>();
    let cons = conservation_report(model, s, reference);
    EnergyReport {
        t: s.time,
        e_s0: parts.total,
        parts,
        g1: g1(model, s, so),
        g2: g2v,
        sum_g2,
        hypo_pair: hypo.pair,
        hypo_bracket: hypo.bracket,
        e_tilde,
        mass_res: cons.mass,
        mom_res: cons.momentum_drift,
        ubar_res: cons.ubar_residual,
        hydro_res: hydro_residual(model, s),
        poincare: poincare_with(&suite, s),
    }
}

/// Fitted exponential rate of a positive series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lambda_hat: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Least-squares fit of `log E = c - λ t` on `[t_end/2, t_end]`.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit> {
    let Some(&(t_end, _)) = series.last() else {
        return Err(Error::Fit("empty series".to_string()));
    };
    let window: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= 0.5 * t_end - 1e-12 * t_end.abs())
        .copied()
        .collect();
    if window.len() < 10 {
        return Err(Error::Fit(format!(
            "{} samples in the fit window, need at least 10",
            window.len()
        )));
    }
    if let Some((t, e)) = window.iter().find(|(_, e)| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Fit(format!("non-positive energy {e} at t = {t}")));
    }
    let pts: Vec<(f64, f64)> = window.iter().map(|(t, e)| (*t, e.ln())).collect();
    let (slope, _, r2) = least_squares_slope(&pts);
    Ok(DecayFit {
        lambda_hat: -slope,
        r2,
        samples: pts.len(),
    })
}

/// `Σ_{γ<=r} ∫ E_{s,0}(∂_z^γ u^K, ∂_z^γ f^K) π dz` for a gPC representation.
pub fn energy_sr(model: &Model, basis: &GpcBasis, blocks: &[SimState], s_order: usize, r_order: usize) -> Result<f64> {
    if blocks.len() != basis.len() {
        return Err(Error::GridMismatch(format!(
            "{} blocks for a basis of size {}",
            blocks.len(),
            basis.len()
        )));
    }
    let mut total = 0.0;
    for (z, w) in basis.nodes().iter().zip(basis.weights()) {
        let ders = basis.derivatives(*z, r_order)?;
        for d in &ders {
            let mut state = SimState::zeros(model);
            for (b, coeff) in blocks.iter().zip(d) {
                state.add_scaled(*coeff, b);
            }
            total += w * energy(model, &state, s_order).total;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ModelParams, SpectralGrid};
    use crate::state::{make_initial_state, InitialSpec, Profile};

    fn model(dim: usize, eps: f64) -> Model {
        Model::new(
            ModelParams {
                dim,
                epsilon: eps,
                sizes: vec![1, 2],
                ..ModelParams::default()
            },
            SpectralGrid::new(8, 5),
        )
        .unwrap()
    }

    fn random_state(m: &Model, seed: u64) -> SimState {
        let spec = InitialSpec {
            amplitude: 0.3,
            profile: Profile::Random,
            seed,
            ..InitialSpec::default()
        };
        make_initial_state(&spec, m, 0.0).unwrap()
    }

    #[test]
    fn zero_state_has_zero_functionals() {
        let m = model(2, 0.5);
        let s = SimState::zeros(&m);
        let r = energy_report(&m, &s, &DiagnosticsConfig::default(), &[0.0; 3]);
        assert_eq!(r.e_s0, 0.0);
        assert!(r.hypo_pair.iter().chain(&r.hypo_bracket).all(|x| *x == 0.0));
        assert!(r.hydro_res.iter().all(|x| *x == 0.0));
        assert!(r.poincare.is_none());
    }

    #[test]
    fn single_mode_energy() {
        let m = model(2, 1.0);
        let mut s = SimState::zeros(&m);
        let mode = m.modes.index_of([0, 1, 0]);
        let a = Complex64::new(0.3, -0.2);
        s.u_hat[[0, mode]] = a;
        s.u_hat[[0, m.modes.neg(mode)]] = a.conj();
        let e0 = energy(&m, &s, 0).total;
        assert!((e0 - 2.0 * a.norm_sqr() * m.volume()).abs() < 1e-14);
        let e1 = energy(&m, &s, 1).total;
        assert!((e1 / e0 - (1.0 + m.modes.k2(mode))).abs() < 1e-13);
    }

    #[test]
    fn hypo_on_homogeneous_ground_states() {
        let m = model(1, 0.5);
        let mut s = SimState::zeros(&m);
        let c = 0.7;
        let n = 3;
        s.f_hat[1][[n, 0]] = Complex64::new(c, 0.0);
        let h = hypo_functionals(&m, &s, 0);
        let sp = m.species[1];
        let kk = sp.sigma.powi(2) * n as f64 * c * c;
        assert!((h.pair[1] - 2.0 / sp.cbrt * kk).abs() < 1e-14);
        // ‖𝒦²f‖² = σ⁴ n (n-1) c²
        let k2 = sp.sigma.powi(4) * (n * (n - 1)) as f64 * c * c;
        assert!((h.bracket[1] - (kk + 0.25 * k2)).abs() < 1e-14);
        assert_eq!(h.pair[0], 0.0);
    }

    #[test]
    fn pair_and_bracket_are_nonnegative() {
        for eps in [1.0, 0.3, 0.01] {
            let m = model(2, eps);
            for seed in 0..5 {
                let s = random_state(&m, seed);
                let h = hypo_functionals(&m, &s, 1);
                assert!(h.pair.iter().chain(&h.bracket).all(|x| *x >= 0.0));
            }
        }
    }

    #[test]
    fn g2_routes_agree() {
        let m = model(2, 0.4);
        for seed in 0..5 {
            let mut s = random_state(&m, seed);
            // content in the top band makes the truncation visible
            let h = m.hermite.index([4, 4, 0]).unwrap();
            s.f_hat[0][[h, 1]] = Complex64::new(0.2, 0.1);
            let a = g2(&m, &s, 2);
            let b = g2_expanded(&m, &s, 2);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()), "{x} {y}");
            }
        }
    }

    #[test]
    fn conservation_of_compatible_state() {
        let m = model(2, 0.4);
        let s = random_state(&m, 3);
        let c = conservation_report(&m, &s, &[0.0; 3]);
        assert!(c.mass.iter().all(|x| *x < 1e-12));
        assert!(c.momentum_drift < 1e-12 && c.ubar_residual < 1e-12);
        let mut bad = s.clone();
        bad.f_hat[1][[0, 0]] = Complex64::new(1e-3, 0.0);
        let c = conservation_report(&m, &bad, &[0.0; 3]);
        assert!((c.mass[1] - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn hydro_residual_needs_flux() {
        let m = model(1, 0.4);
        let mut s = SimState::zeros(&m);
        let mode = m.modes.index_of([1, 0, 0]);
        s.f_hat[0][[0, mode]] = Complex64::new(0.2, 0.0);
        s.f_hat[0][[0, m.modes.neg(mode)]] = Complex64::new(0.2, 0.0);
        assert!(hydro_residual(&m, &s).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn decay_fits() {
        let series: Vec<(f64, f64)> = (0..=100).map(|n| (0.1 * n as f64, (-0.2 * n as f64).exp())).collect();
        let fit = fit_decay_rate(&series).unwrap();
        assert!((fit.lambda_hat - 2.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
        let series: Vec<(f64, f64)> = (0..=100)
            .map(|n| {
                let t = 0.1 * n as f64;
                (t, (1.0 + t) * (-t).exp())
            })
            .collect();
        let fit = fit_decay_rate(&series).unwrap();
        assert!(fit.lambda_hat > 0.8 && fit.lambda_hat < 1.0, "{}", fit.lambda_hat);
        let flat: Vec<(f64, f64)> = (0..20).map(|n| (n as f64, 3.0)).collect();
        assert_eq!(fit_decay_rate(&flat).unwrap().lambda_hat, 0.0);
        let bad: Vec<(f64, f64)> = (0..20).map(|n| (n as f64, 0.0)).collect();
        assert!(fit_decay_rate(&bad).is_err());
        assert!(fit_decay_rate(&flat[..5]).is_err());
    }
}
