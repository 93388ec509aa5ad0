//! Fourier mode bookkeeping and dealiased pseudospectral transforms on the torus.
//!
//! Scalar fields use the convention `a(x) = Σ_ξ â(ξ) e^{i k(ξ)·x}` with
//! `k(ξ) = 2π ξ / L`. Mode storage is row-major over `ξ ∈ {-n_x/2+1, …, n_x/2}^d`
//! in FFT order (index `m -> ξ = m` for `m <= n_x/2`, else `m - n_x`).

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Debug, Clone)]
pub struct ModeSet {
    n_x: usize,
    dim: usize,
    length: f64,
    cut: usize,
    xi: Vec<[i64; 3]>,
    k: Vec<[f64; 3]>,
    neg: Vec<usize>,
    retained: Vec<bool>,
}

fn wavenumber(m: usize, n_x: usize) -> i64 {
    if m <= n_x / 2 {
        m as i64
    } else {
        m as i64 - n_x as i64
    }
}

fn slot(xi: i64, n: usize) -> usize {
    xi.rem_euclid(n as i64) as usize
}

impl ModeSet {
    pub fn new(n_x: usize, dim: usize, length: f64, cut: usize) -> Self {
        let count = n_x.pow(dim as u32);
        let mut xi = Vec::with_capacity(count);
        let mut k = Vec::with_capacity(count);
        let mut retained = Vec::with_capacity(count);
        for m in 0..count {
            let mut w = [0i64; 3];
            let mut rest = m;
            for j in (0..dim).rev() {
                w[j] = wavenumber(rest % n_x, n_x);
                rest /= n_x;
            }
            let mut kv = [0.0; 3];
            for j in 0..dim {
                kv[j] = 2.0 * PI * w[j] as f64 / length;
            }
            retained.push(w.iter().all(|&c| c.unsigned_abs() as usize <= cut));
            xi.push(w);
            k.push(kv);
        }
        let mut set = Self {
            n_x,
            dim,
            length,
            cut,
            xi,
            k,
            neg: Vec::new(),
            retained,
        };
        set.neg = (0..count)
            .map(|m| {
                let w = set.xi[m];
                set.index_of([-w[0], -w[1], -w[2]])
            })
            .collect();
        set
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cut(&self) -> usize {
        self.cut
    }

    /// Integer wavevector of mode `m`.
    pub fn xi(&self, m: usize) -> [i64; 3] {
        self.xi[m]
    }

    /// Physical wavevector `2π ξ / L` of mode `m`.
    pub fn k(&self, m: usize) -> [f64; 3] {
        self.k[m]
    }

    pub fn k2(&self, m: usize) -> f64 {
        self.k[m].iter().map(|c| c * c).sum()
    }

    /// Index of the mode `-ξ`.
    pub fn neg(&self, m: usize) -> usize {
        self.neg[m]
    }

    pub fn retained(&self, m: usize) -> bool {
        self.retained[m]
    }

    pub fn zero_mode(&self) -> usize {
        0
    }

    /// Index of the integer wavevector `w`; components are reduced modulo `n_x`.
    pub fn index_of(&self, w: [i64; 3]) -> usize {
        let mut m = 0;
        for &c in w.iter().take(self.dim) {
            m = m * self.n_x + slot(c, self.n_x);
        }
        m
    }

    /// Largest `|k|_1` over retained modes.
    pub fn k_max_l1(&self) -> f64 {
        (0..self.len())
            .filter(|&m| self.retained(m))
            .map(|m| self.k[m].iter().map(|c| c.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Sobolev weight `Σ_{|α| ≤ s} Π_j k_j^{2 α_j}` of mode `m`.
    pub fn sobolev_weight(&self, m: usize, s: usize) -> f64 {
        let k = self.k[m];
        let sq: Vec<f64> = (0..self.dim).map(|j| k[j] * k[j]).collect();
        // complete homogeneous symmetric polynomials h_0..h_s of the squares
        let mut h = vec![0.0; s + 1];
        h[0] = 1.0;
        for &x in &sq {
            for deg in 1..=s {
                h[deg] += x * h[deg - 1];
            }
        }
        h.iter().sum()
    }
}

/// FFT plans for the 3/2-padded physical grid used by nonlinear products.
#[derive(Clone)]
pub struct Transform {
    modes: ModeSet,
    padded: usize,
    pad_index: Vec<Option<usize>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("padded", &self.padded)
            .field("dim", &self.modes.dim())
            .finish()
    }
}

impl Transform {
    pub fn new(modes: &ModeSet) -> Self {
        let padded = 3 * modes.n_x() / 2;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        let inverse = planner.plan_fft_inverse(padded);
        let pad_index = (0..modes.len())
            .map(|m| {
                if !modes.retained(m) {
                    return None;
                }
                let w = modes.xi(m);
                let mut p = 0;
                for &c in w.iter().take(modes.dim()) {
                    p = p * padded + slot(c, padded);
                }
                Some(p)
            })
            .collect();
        Self {
            modes: modes.clone(),
            padded,
            pad_index,
            forward,
            inverse,
        }
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    /// Points per dimension of the padded grid.
    pub fn padded(&self) -> usize {
        self.padded
    }

    pub fn points(&self) -> usize {
        self.padded.pow(self.modes.dim() as u32)
    }

    fn transform_axes(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.padded;
        let d = self.modes.dim();
        let total = buf.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = stride * n;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (p, slot) in line.iter_mut().enumerate() {
                        *slot = buf[base + p * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (p, value) in line.iter().enumerate() {
                        buf[base + p * stride] = *value;
                    }
                }
            }
        }
    }

    fn embed(&self, coeffs: ArrayView1<Complex64>) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.points()];
        for (m, slot) in self.pad_index.iter().enumerate() {
            if let Some(p) = slot {
                buf[*p] = coeffs[m];
            }
        }
        self.transform_axes(&mut buf, &self.inverse);
        buf
    }

    fn extract(&self, mut buf: Vec<Complex64>) -> Array1<Complex64> {
        self.transform_axes(&mut buf, &self.forward);
        let scale = 1.0 / self.points() as f64;
        let mut out = Array1::zeros(self.modes.len());
        for (m, slot) in self.pad_index.iter().enumerate() {
            if let Some(p) = slot {
                out[m] = buf[*p] * scale;
            }
        }
        out
    }

    /// Samples a real field on the padded grid; modes beyond the cut are ignored.
    pub fn to_physical(&self, coeffs: ArrayView1<Complex64>) -> Vec<f64> {
        self.embed(coeffs).into_iter().map(|c| c.re).collect()
    }

    /// Projects real grid values back onto the retained modes, zeroing everything
    /// beyond the dealiasing cut and enforcing `â(-ξ) = conj(â(ξ))`.
    pub fn from_physical(&self, values: &[f64]) -> Array1<Complex64> {
        let buf = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut out = self.extract(buf);
        symmetrize(&self.modes, &mut out);
        out
    }

    /// Dealiased pseudospectral product of two (possibly complex) fields.
    pub fn product(&self, a: ArrayView1<Complex64>, b: ArrayView1<Complex64>) -> Array1<Complex64> {
        let pa = self.embed(a);
        let pb = self.embed(b);
        let prod = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        self.extract(prod)
    }
}

/// Averages each coefficient with the conjugate of its mirror mode.
pub fn symmetrize(modes: &ModeSet, coeffs: &mut Array1<Complex64>) {
    for m in 0..modes.len() {
        let n = modes.neg(m);
        if n < m {
            continue;
        }
        if n == m {
            coeffs[m] = Complex64::new(coeffs[m].re, 0.0);
        } else {
            let avg = 0.5 * (coeffs[m] + coeffs[n].conj());
            coeffs[m] = avg;
            coeffs[n] = avg.conj();
        }
    }
}

/// Free-function form of [`Transform::product`].
pub fn dealiased_product(
    transform: &Transform,
    a: ArrayView1<Complex64>,
    b: ArrayView1<Complex64>,
) -> Array1<Complex64> {
    transform.product(a, b)
}
