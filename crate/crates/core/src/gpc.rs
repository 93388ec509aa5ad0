//! Generalized polynomial chaos in one random variable.
//!
//! Basis polynomials are orthonormal for a probability measure on a bounded
//! interval and satisfy
//! `√b_{k+1} φ_{k+1} = (z - a_k) φ_k - √b_k φ_{k-1}` with `φ_0 ≡ 1`.
//! Indices are zero-based here: `phi[k]` has degree `k`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Probability measure of the random variable `z`.
#[derive(Clone)]
pub enum Measure {
    /// `dz / 2` on `[-1, 1]` (Legendre chaos).
    Uniform,
    /// `dz / (π √(1 - z²))` on `[-1, 1]`.
    Chebyshev,
    /// A density on `[lo, hi]`, normalized at construction of the basis.
    Custom { lo: f64, hi: f64, density: Density },
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Uniform => write!(f, "Uniform"),
            Measure::Chebyshev => write!(f, "Chebyshev"),
            Measure::Custom { lo, hi, .. } => write!(f, "Custom[{lo}, {hi}]"),
        }
    }
}

impl Measure {
    pub fn custom(lo: f64, hi: f64, density: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Measure::Custom {
            lo,
            hi,
            density: Arc::new(density),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Measure::Uniform | Measure::Chebyshev => (-1.0, 1.0),
            Measure::Custom { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Measure::Uniform => "uniform",
            Measure::Chebyshev => "chebyshev",
            Measure::Custom { .. } => "custom",
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let b: Vec<f64> = (0..n).map(legendre_b).collect();
    let (x, w) = golub_welsch(&vec![0.0; n], &b);
    (x, w.into_iter().map(|w| 2.0 * w).collect())
}

fn legendre_b(k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k2 = (k * k) as f64;
    k2 / (4.0 * k2 - 1.0)
}

/// Eigen-decomposition of the Jacobi matrix; `b[0]` is ignored, weights sum to 1.
fn golub_welsch(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = a[k];
        if k + 1 < n {
            let off = b[k + 1].sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|q| (eig.eigenvalues[q], eig.eigenvectors[(0, q)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

/// Discretized measure for the Stieltjes procedure: 256 panels of 16-point Gauss-Legendre.
fn discretize(lo: f64, hi: f64, density: &Density) -> Result<(Vec<f64>, Vec<f64>)> {
    const PANELS: usize = 256;
    let (gx, gw) = gauss_legendre(16);
    let h = (hi - lo) / PANELS as f64;
    let mut xs = Vec::with_capacity(PANELS * 16);
    let mut ws = Vec::with_capacity(PANELS * 16);
    for p in 0..PANELS {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            let z = mid + 0.5 * h * x;
            let rho = density(z);
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(Error::NonNormalizable { mass: rho });
            }
            xs.push(z);
            ws.push(0.5 * h * w * rho);
        }
    }
    let mass: f64 = ws.iter().sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::NonNormalizable { mass });
    }
    ws.iter_mut().for_each(|w| *w /= mass);
    Ok((xs, ws))
}

fn stieltjes(xs: &[f64], ws: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(n);
    let mut b: Vec<f64> = vec![1.0];
    let mut prev = vec![0.0; xs.len()];
    let mut cur = vec![1.0; xs.len()];
    for k in 0..n {
        let ak: f64 = xs
            .iter()
            .zip(ws)
            .zip(&cur)
            .map(|((x, w), p)| w * x * p * p)
            .sum();
        a.push(ak);
        if k + 1 == n {
            break;
        }
        let sb = b[k].sqrt();
        let next: Vec<f64> = (0..xs.len())
            .map(|p| (xs[p] - ak) * cur[p] - if k == 0 { 0.0 } else { sb * prev[p] })
            .collect();
        let bk: f64 = next.iter().zip(ws).map(|(q, w)| w * q * q).sum();
        let s = bk.sqrt();
        b.push(bk);
        prev = cur;
        cur = next.into_iter().map(|q| q / s).collect();
    }
    (a, b)
}

/// Recurrence coefficients `(a_0..a_{n-1}, b_0..b_{n-1})` with `b_0 = 1`.
pub fn recurrence(measure: &Measure, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match measure {
        Measure::Uniform => Ok((vec![0.0; n], (0..n).map(legendre_b).collect())),
        Measure::Chebyshev => Ok((
            vec![0.0; n],
            (0..n)
                .map(|k| match k {
                    0 => 1.0,
                    1 => 0.5,
                    _ => 0.25,
                })
                .collect(),
        )),
        Measure::Custom { lo, hi, density } => {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidConfig(vec![format!(
                    "custom measure support [{lo}, {hi}] is not a bounded interval"
                )]));
            }
            let (xs, ws) = discretize(*lo, *hi, density)?;
            Ok(stieltjes(&xs, &ws, n))
        }
    }
}

/// Result of [`estimate_growth_exponent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthExponent {
    pub p_hat: f64,
    /// Set when the fit rests on a single segment (`K = 2`) or less.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct GpcBasis {
    measure: Measure,
    k: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    growth: GrowthExponent,
}

/// Builds `K` orthonormal polynomials and a `Q`-point Gauss rule.
pub fn build_basis(measure: Measure, k: usize, q: usize) -> Result<GpcBasis> {
    if k == 0 {
        return Err(Error::InvalidConfig(vec!["K must be at least 1".to_string()]));
    }
    let required = (3 * k).saturating_sub(2).div_ceil(2).max(1);
    if q < required {
        return Err(Error::QuadratureTooSmall { q, required });
    }
    let (a, b) = recurrence(&measure, q.max(k + 1))?;
    let (nodes, weights) = golub_welsch(&a[..q], &b[..q]);
    let mut basis = GpcBasis {
        measure,
        k,
        a,
        b,
        nodes,
        weights,
        growth: GrowthExponent {
            p_hat: 0.0,
            degenerate: true,
        },
    };
    let (lo, hi) = basis.support();
    let grid: Vec<f64> = (0..2001).map(|p| lo + (hi - lo) * p as f64 / 2000.0).collect();
    basis.growth = estimate_growth_exponent(&basis, &grid);
    Ok(basis)
}

impl GpcBasis {
    /// Basis with the default rule `Q = 2K`.
    pub fn new(measure: Measure, k: usize) -> Result<Self> {
        build_basis(measure, k, 2 * k)
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn support(&self) -> (f64, f64) {
        self.measure.support()
    }

    pub fn recurrence_a(&self) -> &[f64] {
        &self.a[..self.k]
    }

    pub fn recurrence_b(&self) -> &[f64] {
        &self.b[..self.k]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn growth(&self) -> GrowthExponent {
        self.growth
    }

    pub fn p_hat(&self) -> f64 {
        self.growth.p_hat
    }

    fn check_support(&self, z: f64) -> Result<()> {
        let (lo, hi) = self.support();
        let slack = 1e-12 * (hi - lo);
        if z < lo - slack || z > hi + slack || z.is_nan() {
            return Err(Error::OutOfSupport { z, lo, hi });
        }
        Ok(())
    }

    /// Values without the support check, for internal use on known-good points.
    fn values(&self, z: f64, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        if count == 0 {
            return out;
        }
        out[0] = 1.0;
        for k in 0..count - 1 {
            let prev = if k == 0 { 0.0 } else { self.b[k].sqrt() * out[k - 1] };
            out[k + 1] = ((z - self.a[k]) * out[k] - prev) / self.b[k + 1].sqrt();
        }
        out
    }

    /// `φ_0(z), ..., φ_{K-1}(z)`.
    pub fn evaluate(&self, z: f64) -> Result<Vec<f64>> {
        self.check_support(z)?;
        Ok(self.values(z, self.k))
    }

    /// `d^γ φ_k / dz^γ` for `γ = 0..=r`, indexed `[γ][k]`.
    pub fn derivatives(&self, z: f64, r: usize) -> Result<Vec<Vec<f64>>> {
        if r >= self.k {
            return Err(Error::DerivativeOrder { r, k: self.k });
        }
        self.check_support(z)?;
        let mut out = vec![self.values(z, self.k)];
        for g in 1..=r {
            let lower = &out[g - 1];
            let mut cur = vec![0.0; self.k];
            for k in 0..self.k - 1 {
                let prev = if k == 0 { 0.0 } else { self.b[k].sqrt() * cur[k - 1] };
                cur[k + 1] = ((z - self.a[k]) * cur[k] + g as f64 * lower[k] - prev) / self.b[k + 1].sqrt();
            }
            out.push(cur);
        }
        Ok(out)
    }

    /// Gauss rule with `q` nodes of the same measure (weights sum to 1).
    pub fn gauss_rule(&self, q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if q <= self.a.len() {
            return Ok(golub_welsch(&self.a[..q], &self.b[..q]));
        }
        let (a, b) = recurrence(&self.measure, q)?;
        Ok(golub_welsch(&a, &b))
    }

    /// Largest `|∫ φ_j φ_k π dz - δ_jk|` under the basis rule.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut gram = vec![vec![0.0; self.k]; self.k];
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let phi = self.values(*z, self.k);
            for j in 0..self.k {
                for l in 0..self.k {
                    gram[j][l] += w * phi[j] * phi[l];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for (j, row) in gram.iter().enumerate() {
            for (l, g) in row.iter().enumerate() {
                let id = if j == l { 1.0 } else { 0.0 };
                worst = worst.max((g - id).abs());
            }
        }
        worst
    }

    /// Coefficients `∫ g φ_k π dz` of a scalar function by the basis rule.
    pub fn project(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let gz = g(*z);
            for (slot, p) in out.iter_mut().zip(self.values(*z, self.k)) {
                *slot += w * gz * p;
            }
        }
        out
    }

    pub fn reconstruct(&self, coeffs: &[f64], z: f64) -> Result<f64> {
        Ok(self.evaluate(z)?.iter().zip(coeffs).map(|(p, c)| p * c).sum())
    }
}

/// Free-function form of [`GpcBasis::evaluate`].
pub fn evaluate_basis(basis: &GpcBasis, z: f64) -> Result<Vec<f64>> {
    basis.evaluate(z)
}

/// Least-squares slope of `log max_z |φ_k|` against `log k` for `k = 2..K`
/// (one-based degrees plus one, as in the growth condition).
pub fn estimate_growth_exponent(basis: &GpcBasis, z_grid: &[f64]) -> GrowthExponent {
    let k = basis.len();
    if k < 2 {
        return GrowthExponent {
            p_hat: 0.0,
            degenerate: true,
        };
    }
    let mut max_abs = vec![0.0f64; k];
    for &z in z_grid {
        for (slot, p) in max_abs.iter_mut().zip(basis.values(z, k)) {
            *slot = slot.max(p.abs());
        }
    }
    let pts: Vec<(f64, f64)> = (1..k)
        .map(|idx| (((idx + 1) as f64).ln(), max_abs[idx].ln()))
        .collect();
    if pts.len() == 1 {
        // a single point carries no slope; compare against φ_1 ≡ 1 at k = 1
        return GrowthExponent {
            p_hat: pts[0].1 / pts[0].0,
            degenerate: true,
        };
    }
    GrowthExponent {
        p_hat: least_squares_slope(&pts).0,
        degenerate: false,
    }
}

/// Slope, intercept and R² of a least-squares line.
pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

/// `S_jlk = ∫ φ_j φ_l φ_k π dz`, computed once per sorted index triple.
#[derive(Debug, Clone)]
pub struct TripleTensor {
    k: usize,
    dense: Vec<f64>,
    nonzero: Vec<(usize, usize, usize, f64)>,
}

impl TripleTensor {
    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn get(&self, j: usize, l: usize, k: usize) -> f64 {
        self.dense[(j * self.k + l) * self.k + k]
    }

    /// Every ordered `(j, l, k)` with `S_jlk ≠ 0`, sorted by `k` then `j`, `l`.
    pub fn nonzero(&self) -> &[(usize, usize, usize, f64)] {
        &self.nonzero
    }

    /// Fraction of entries that vanish.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.nonzero.len() as f64 / (self.k.pow(3)) as f64
    }
}

pub fn triple_products(basis: &GpcBasis) -> TripleTensor {
    let k = basis.len();
    let phis: Vec<Vec<f64>> = basis.nodes().iter().map(|&z| basis.values(z, k)).collect();
    let mut dense = vec![0.0; k * k * k];
    for j in 0..k {
        for l in j..k {
            for m in l..k {
                // triangle rule: deg φ_m ≤ deg φ_j + deg φ_l
                let value = if m > j + l {
                    0.0
                } else {
                    let v: f64 = phis
                        .iter()
                        .zip(basis.weights())
                        .map(|(p, w)| w * p[j] * p[l] * p[m])
                        .sum();
                    if v.abs() < 1e-14 {
                        0.0
                    } else {
                        v
                    }
                };
                for (a, b, c) in [(j, l, m), (j, m, l), (l, j, m), (l, m, j), (m, j, l), (m, l, j)] {
                    dense[(a * k + b) * k + c] = value;
                }
            }
        }
    }
    let mut nonzero = Vec::new();
    for m in 0..k {
        for j in 0..k {
            for l in 0..k {
                let v = dense[(j * k + l) * k + m];
                if v != 0.0 {
                    nonzero.push((j, l, m, v));
                }
            }
        }
    }
    TripleTensor { k, dense, nonzero }
}

/// `c_k = Σ_{j,l} S_jlk a_j b_l`, accumulated symmetrically so that swapping
/// the arguments gives a bitwise identical result.
pub fn galerkin_product(a: &[f64], b: &[f64], t: &TripleTensor) -> Vec<f64> {
    let k = t.len();
    let mut out = vec![0.0; k];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..k {
            acc += t.get(j, j, m) * (a[j] * b[j]);
            for l in j + 1..k {
                let s = t.get(j, l, m);
                if s != 0.0 {
                    acc += s * (a[j] * b[l] + a[l] * b[j]);
                }
            }
        }
        *slot = acc;
    }
    out
}
