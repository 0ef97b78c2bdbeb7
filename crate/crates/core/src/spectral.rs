//! Normalized Laplacian, dense symmetric eigendecomposition, and the graph
//! Fourier transform built on it.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest tolerated asymmetry `|a_ij - a_ji|` of an input matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Slack allowed around `[0, 2]` before raw Laplacian eigenvalues are clamped.
pub const EIGENVALUE_SLACK: f64 = 1e-8;
/// Sweep budget of the Jacobi solver.
pub const MAX_SWEEPS: usize = 100;
/// Components at or below this magnitude are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-10;

/// `L = I - D^{-1/2} A D^{-1/2}`.
///
/// Isolated nodes use `D^{-1/2}[i,i] = 0`, so their row and column equal the
/// identity's and they contribute an eigenvalue of exactly 1.
pub fn normalized_laplacian(g: &Graph) -> Array2<f64> {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .into_iter()
        .map(|d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut l = Array2::eye(n);
    for &(i, j) in g.edges() {
        let w = inv_sqrt[i] * inv_sqrt[j];
        l[[i, j]] -= w;
        l[[j, i]] -= w;
    }
    l
}

/// Eigenpairs `L = U diag(λ) Uᵀ` with `λ` ascending and column `k` of `U`
/// belonging to `λ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
}

impl SpectralDecomposition {
    /// Wraps precomputed eigenpairs. Only shapes are checked.
    pub fn from_parts(eigenvalues: Array1<f64>, eigenvectors: Array2<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.dim() != (n, n) {
            return Err(Error::shape(
                "eigenvector matrix",
                (n, n),
                eigenvectors.dim(),
            ));
        }
        Ok(SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Negates eigenvector `k`. The result is still a valid decomposition.
    pub fn flip_sign(&mut self, k: usize) {
        self.eigenvectors.column_mut(k).mapv_inplace(|v| -v);
    }

    /// Adds `delta` to every eigenvector entry. Fault-injection helper for the
    /// invariant suite.
    pub fn perturb_eigenvectors(&mut self, delta: f64) {
        self.eigenvectors.mapv_inplace(|v| v + delta);
    }

    fn check_rows(&self, x: &Array2<f64>, context: &'static str) -> Result<()> {
        if x.nrows() != self.len() {
            return Err(Error::shape(context, self.len(), x.nrows()));
        }
        Ok(())
    }

    /// Graph Fourier transform `X̂ = UᵀX`, column by column.
    pub fn gft(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_rows(x, "gft input rows")?;
        Ok(self.eigenvectors.t().dot(x))
    }

    /// Inverse transform `X = UX̂`.
    pub fn igft(&self, x_hat: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_rows(x_hat, "igft input rows")?;
        Ok(self.eigenvectors.dot(x_hat))
    }

    /// Spectral convolution `U diag(kernel) Uᵀ X`.
    pub fn filter(&self, kernel: &Array1<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
        if kernel.len() != self.len() {
            return Err(Error::shape("kernel length", self.len(), kernel.len()));
        }
        let mut x_hat = self.gft(x)?;
        for (mut row, &k) in x_hat.axis_iter_mut(Axis(0)).zip(kernel) {
            row *= k;
        }
        self.igft(&x_hat)
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues.view().insert_axis(Axis(0));
        scaled.dot(&self.eigenvectors.t())
    }

    /// `max |UᵀU - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let gram = self.eigenvectors.t().dot(&self.eigenvectors);
        max_abs_diff(&gram, &Array2::eye(self.len()))
    }

    /// `max |U diag(λ) Uᵀ - L|`.
    pub fn reconstruction_error(&self, l: &Array2<f64>) -> f64 {
        max_abs_diff(&self.reconstruct(), l)
    }
}

pub(crate) fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a normalized Laplacian.
///
/// Raw eigenvalues must lie within [`EIGENVALUE_SLACK`] of `[0, 2]` and are
/// then clamped into it.
pub fn eig_sym(l: &Array2<f64>) -> Result<SpectralDecomposition> {
    let mut dec = eig_sym_unclamped(l)?;
    for v in dec.eigenvalues.iter_mut() {
        if *v < -EIGENVALUE_SLACK || *v > 2.0 + EIGENVALUE_SLACK {
            return Err(Error::EigenvalueOutOfRange(*v));
        }
        *v = v.clamp(0.0, 2.0);
    }
    Ok(dec)
}

/// Decomposes the normalized Laplacian of `g`.
pub fn decompose(g: &Graph) -> Result<SpectralDecomposition> {
    eig_sym(&normalized_laplacian(g))
}

/// Cyclic Jacobi eigendecomposition of any real symmetric matrix.
///
/// Output is deterministic: eigenvalues ascend; exactly equal eigenvalues are
/// ordered by their eigenvectors, compared lexicographically in descending
/// order; every eigenvector has its first component above `1e-10` in
/// magnitude made positive.
pub fn eig_sym_unclamped(a: &Array2<f64>) -> Result<SpectralDecomposition> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::shape("eig_sym input", (rows, rows), (rows, cols)));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eig_sym input"));
    }
    let asym = max_abs_diff(a, &a.t().to_owned());
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let n = rows;
    // symmetrize so rotations see an exactly symmetric matrix
    let mut m: Vec<f64> = (0..n * n)
        .map(|k| 0.5 * (a[[k / n, k % n]] + a[[k % n, k / n]]))
        .collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    jacobi_sweeps(&mut m, &mut v, n)?;

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut col: Vec<f64> = (0..n).map(|r| v[r * n + k]).collect();
            if let Some(first) = col.iter().copied().find(|c| c.abs() > SIGN_EPS) {
                if first < 0.0 {
                    col.iter_mut().for_each(|c| *c = -*c);
                }
            }
            (m[k * n + k], col)
        })
        .collect();
    pairs.sort_by(|(la, ua), (lb, ub)| {
        la.total_cmp(lb).then_with(|| {
            ub.iter()
                .zip(ua)
                .map(|(b, a)| b.total_cmp(a))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });

    let eigenvalues = Array1::from_iter(pairs.iter().map(|p| p.0));
    let mut eigenvectors = Array2::zeros((n, n));
    for (k, (_, col)) in pairs.iter().enumerate() {
        for (r, &c) in col.iter().enumerate() {
            eigenvectors[[r, k]] = c;
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn jacobi_sweeps(m: &mut [f64], v: &mut [f64], n: usize) -> Result<()> {
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = f64::EPSILON * frob;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= tol || off == 0.0 {
            return Ok(());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    let new_p = c * akp - s * akq;
                    let new_q = s * akp + c * akq;
                    m[k * n + p] = new_p;
                    m[p * n + k] = new_p;
                    m[k * n + q] = new_q;
                    m[q * n + k] = new_q;
                }
                m[p * n + p] -= t * apq;
                m[q * n + q] += t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence(MAX_SWEEPS))
}
