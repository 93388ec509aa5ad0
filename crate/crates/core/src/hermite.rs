//! Tensor Hermite function basis in velocity.
//!
//! For a species with velocity variance `sigma^2` per component the basis is
//! `psi_n(v) = prod_j h_{n_j}(v_j / sigma) / sigma^{1/2}` where `h_m` are the
//! L²-normalized probabilists' Hermite functions. `psi_0` is the square root of
//! the velocity Maxwellian, so `psi_n` is orthonormal in `L²(dv)` and the
//! ladder operators act by index shifts.

/// Multi-index table for `n ∈ [0, n_v)^d`, row-major with the last component fastest.
#[derive(Debug, Clone)]
pub struct HermiteIndex {
    n_v: usize,
    dim: usize,
    multi: Vec<[usize; 3]>,
    order: Vec<usize>,
}

impl HermiteIndex {
    pub fn new(n_v: usize, dim: usize) -> Self {
        let count = n_v.pow(dim as u32);
        let mut multi = Vec::with_capacity(count);
        let mut order = Vec::with_capacity(count);
        for h in 0..count {
            let mut n = [0usize; 3];
            let mut rest = h;
            for j in (0..dim).rev() {
                n[j] = rest % n_v;
                rest /= n_v;
            }
            order.push(n.iter().sum());
            multi.push(n);
        }
        Self {
            n_v,
            dim,
            multi,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn multi(&self, h: usize) -> [usize; 3] {
        self.multi[h]
    }

    /// `|n|_1`.
    pub fn order(&self, h: usize) -> usize {
        self.order[h]
    }

    pub fn index(&self, n: [usize; 3]) -> Option<usize> {
        let mut h = 0;
        for &nj in n.iter().take(self.dim) {
            if nj >= self.n_v {
                return None;
            }
            h = h * self.n_v + nj;
        }
        Some(h)
    }

    /// Index of `n + e_j`, or `None` at the truncation boundary.
    pub fn raise(&self, h: usize, j: usize) -> Option<usize> {
        let mut n = self.multi[h];
        n[j] += 1;
        self.index(n)
    }

    /// Index of `n - e_j`, or `None` when `n_j = 0`.
    pub fn lower(&self, h: usize, j: usize) -> Option<usize> {
        let mut n = self.multi[h];
        if n[j] == 0 {
            return None;
        }
        n[j] -= 1;
        self.index(n)
    }

    /// Index of the unit vector `e_j`.
    pub fn unit(&self, j: usize) -> usize {
        let mut n = [0; 3];
        n[j] = 1;
        self.index(n).expect("n_v >= 2")
    }
}

/// Values `h_0(x), ..., h_{m-1}(x)` of the normalized Hermite functions
/// `h_n(x) = (2π)^{-1/4} e^{-x²/4} He_n(x) / sqrt(n!)`, so that
/// `∫ h_n h_m dx = δ_nm`.
pub fn hermite_functions(x: f64, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    if m == 0 {
        return out;
    }
    out[0] = (2.0 * std::f64::consts::PI).powf(-0.25) * (-0.25 * x * x).exp();
    if m > 1 {
        out[1] = x * out[0];
    }
    for n in 1..m.saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (x * out[n] - nf.sqrt() * out[n - 1]) / (nf + 1.0).sqrt();
    }
    out
}

/// Evaluates every `psi_n(v)` of the tensor basis with velocity scale `sigma`.
pub fn basis_values(index: &HermiteIndex, sigma: f64, v: &[f64]) -> Vec<f64> {
    let per_dim: Vec<Vec<f64>> = (0..index.dim())
        .map(|j| {
            hermite_functions(v[j] / sigma, index.n_v())
                .into_iter()
                .map(|h| h / sigma.sqrt())
                .collect()
        })
        .collect();
    (0..index.len())
        .map(|h| {
            let n = index.multi(h);
            (0..index.dim()).map(|j| per_dim[j][n[j]]).product()
        })
        .collect()
}
