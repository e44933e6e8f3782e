//! Jacobian norm machinery.
//!
//! Step laws in ℝⁿ consume either the induced 2-norm `‖b′(x)‖` or the
//! Euclidean length of a Jacobian-vector product `|b′(x)v|`. Small symmetric
//! Jacobians get closed-form eigenvalues; everything else goes through a
//! seeded power iteration on `JᵀJ`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Dense square matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `out = self · v`
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `out = selfᵀ · v`
    pub fn mul_vec_transposed(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, vi) in v.iter().enumerate().take(self.n) {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |Jᵢⱼ − Jⱼᵢ| ≤ tol · max |Jᵢⱼ|`
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self[(i, j)] - self[(j, i)]).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.n.max(1)).collect();
        f.debug_list().entries(rows).finish()
    }
}

/// Fills the Jacobian at `x` into the output matrix.
pub type DenseJacobianFn = Arc<dyn Fn(&[f64], &mut Matrix) + Send + Sync>;
/// `(x, v, out)` with `out = b′(x) v`.
pub type JvpFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Closed-form `‖b′(x)‖₂`.
pub type NormHintFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// How a vector field exposes its Jacobian.
#[derive(Clone)]
pub enum JacobianAccess {
    Dense(DenseJacobianFn),
    MatrixFree {
        jvp: JvpFn,
        norm_hint: Option<NormHintFn>,
        /// A symmetric Jacobian is its own transpose, so power iteration can
        /// run on `J·J` with the jvp alone.
        symmetric: bool,
    },
}

impl fmt::Debug for JacobianAccess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JacobianAccess::Dense(_) => f.write_str("Dense"),
            JacobianAccess::MatrixFree {
                norm_hint,
                symmetric,
                ..
            } => f
                .debug_struct("MatrixFree")
                .field("norm_hint", &norm_hint.is_some())
                .field("symmetric", symmetric)
                .finish(),
        }
    }
}

impl JacobianAccess {
    /// Matrix-free view of a dense Jacobian: assembles the matrix and multiplies.
    pub fn jvp_from_dense(dense: &DenseJacobianFn, dim: usize) -> JvpFn {
        let dense = dense.clone();
        Arc::new(move |x: &[f64], v: &[f64], out: &mut [f64]| {
            let mut m = Matrix::zeros(dim);
            dense(x, &mut m);
            m.mul_vec(v, out);
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix-free Jacobian has neither a norm hint nor a transpose product; use the jvp-only step law")]
    TransposeUnavailable,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension must be at least 1")]
    EmptyDimension,
}

/// 64-bit linear congruential generator (Knuth's MMIX constants).
#[derive(Debug, Clone)]
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        self.0
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_signed_unit(&mut self) -> f64 {
        let bits = self.next_u64() >> 11;
        (bits as f64) * (2.0 / (1u64 << 53) as f64) - 1.0
    }
}

const POWER_REL_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 500;

/// Power iteration for the largest eigenvalue of a symmetric positive
/// semi-definite operator. Returns `λ_max`.
pub fn power_iteration<F>(dim: usize, seed: u64, mut apply: F) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut rng = Lcg::new(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.next_signed_unit()).collect();
    let mut norm = l2(&v);
    if norm == 0.0 {
        v[0] = 1.0;
        norm = 1.0;
    }
    v.iter_mut().for_each(|c| *c /= norm);

    let mut w = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        apply(&v, &mut w);
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let w_norm = l2(&w);
        if w_norm == 0.0 {
            return 0.0;
        }
        // ‖Av − λv‖ bounds the eigenvalue error quadratically.
        let residual = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (b - rayleigh * a).powi(2))
            .sum::<f64>()
            .sqrt();
        lambda = rayleigh;
        if residual <= POWER_REL_TOL * rayleigh.abs() {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / w_norm;
        }
    }
    lambda
}

/// Largest singular value of a dense matrix via power iteration on `JᵀJ`.
pub fn spectral_norm_power(m: &Matrix, seed: u64) -> f64 {
    let n = m.dim();
    let mut tmp = vec![0.0; n];
    power_iteration(n, seed, |v, out| {
        m.mul_vec(v, &mut tmp);
        m.mul_vec_transposed(&tmp, out);
    })
    .max(0.0)
    .sqrt()
}

/// Closed-form eigenvalues of a symmetric matrix of dimension ≤ 3.
pub fn symmetric_eigenvalues_small(m: &Matrix) -> Option<Vec<f64>> {
    match m.dim() {
        1 => Some(vec![m[(0, 0)]]),
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let mean = 0.5 * (a + d);
            let radius = (0.5 * (a - d)).hypot(b);
            Some(vec![mean - radius, mean + radius])
        }
        3 => Some(symmetric_eigenvalues_3x3(m)),
        _ => None,
    }
}

// Trigonometric solution of the characteristic cubic.
fn symmetric_eigenvalues_3x3(m: &Matrix) -> Vec<f64> {
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let q = (m[(0, 0)] + m[(1, 1)] + m[(2, 2)]) / 3.0;
    if p1 == 0.0 {
        let mut e = vec![m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        e.sort_by(f64::total_cmp);
        return e;
    }
    let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = m.clone();
    for i in 0..3 {
        for j in 0..3 {
            b[(i, j)] = (m[(i, j)] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[(0, 0)] * (b[(1, 1)] * b[(2, 2)] - b[(1, 2)] * b[(2, 1)])
        - b[(0, 1)] * (b[(1, 0)] * b[(2, 2)] - b[(1, 2)] * b[(2, 0)])
        + b[(0, 2)] * (b[(1, 0)] * b[(2, 1)] - b[(1, 1)] * b[(2, 0)]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut e = vec![e1, e2, e3];
    e.sort_by(f64::total_cmp);
    e
}

/// Largest singular value of a general 2×2 matrix, closed form.
pub fn singular_max_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s + disc)).sqrt()
}

/// `‖J‖₂` of an assembled dense matrix.
pub fn dense_spectral_norm(m: &Matrix, seed: u64) -> f64 {
    if m.dim() <= 3 && m.is_symmetric(1e-12) {
        if let Some(eigs) = symmetric_eigenvalues_small(m) {
            return eigs.iter().fold(0.0, |acc: f64, e| acc.max(e.abs()));
        }
    }
    spectral_norm_power(m, seed)
}

/// Induced 2-norm of `b′(x)`.
pub fn spectral_norm(
    access: &JacobianAccess,
    x: &[f64],
    dim: usize,
    seed: u64,
) -> Result<f64, LinalgError> {
    if dim == 0 {
        return Err(LinalgError::EmptyDimension);
    }
    if x.len() != dim {
        return Err(LinalgError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    match access {
        JacobianAccess::Dense(f) => {
            let mut m = Matrix::zeros(dim);
            f(x, &mut m);
            Ok(dense_spectral_norm(&m, seed))
        }
        JacobianAccess::MatrixFree {
            norm_hint: Some(hint),
            ..
        } => Ok(hint(x)),
        JacobianAccess::MatrixFree {
            jvp,
            symmetric: true,
            ..
        } => {
            let mut tmp = vec![0.0; dim];
            let lambda = power_iteration(dim, seed, |v, out| {
                jvp(x, v, &mut tmp);
                jvp(x, &tmp, out);
            });
            Ok(lambda.max(0.0).sqrt())
        }
        JacobianAccess::MatrixFree { .. } => Err(LinalgError::TransposeUnavailable),
    }
}

/// `|b′(x) v|₂`.
pub fn jvp_norm(access: &JacobianAccess, x: &[f64], v: &[f64]) -> Result<f64, LinalgError> {
    if x.len() != v.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: x.len(),
            got: v.len(),
        });
    }
    let mut out = vec![0.0; v.len()];
    apply_jvp(access, x, v, &mut out);
    Ok(l2(&out))
}

pub(crate) fn apply_jvp(access: &JacobianAccess, x: &[f64], v: &[f64], out: &mut [f64]) {
    match access {
        JacobianAccess::Dense(f) => {
            let mut m = Matrix::zeros(x.len());
            f(x, &mut m);
            m.mul_vec(v, out);
        }
        JacobianAccess::MatrixFree { jvp, .. } => jvp(x, v, out),
    }
}

/// Euclidean norm with scaling, so huge states do not overflow early.
pub fn l2(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0, |m: f64, c| m.max(c.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|c| (c / scale).powi(2)).sum();
    scale * s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn diagonal_norm() {
        let access = JacobianAccess::Dense(Arc::new(|_x: &[f64], m: &mut Matrix| {
            *m = Matrix::diag(&[3.0, 5.0]);
        }));
        assert_eq!(spectral_norm(&access, &[0.0, 0.0], 2, 1).unwrap(), 5.0);
    }

    #[test]
    fn coupled_jacobian_at_one_two() {
        // eigenvalues of [[7,4],[4,13]] are the roots of λ² − 20λ + 75
        let m = Matrix::from_rows(&[&[7.0, 4.0], &[4.0, 13.0]]);
        let eigs = symmetric_eigenvalues_small(&m).unwrap();
        assert!(rel(eigs[0], 5.0) < 1e-15);
        assert!(rel(eigs[1], 15.0) < 1e-15);
        assert!(rel(dense_spectral_norm(&m, 1), 15.0) < 1e-15);
        assert!(rel(spectral_norm_power(&m, 7), 15.0) < 1e-10);
    }

    #[test]
    fn uncoupled_jacobian_at_start() {
        let x1 = 2f64.sqrt();
        let m = Matrix::diag(&[3.0 * x1 * x1, 5.0]);
        assert!(rel(dense_spectral_norm(&m, 1), 6.0) < 1e-15);
    }

    #[test]
    fn three_by_three_closed_form() {
        // eigenvalues 1, 2, 4 of a rotated diagonal
        let m = Matrix::from_rows(&[&[2.0, 0.0, 0.0], &[0.0, 2.5, 1.5], &[0.0, 1.5, 2.5]]);
        let e = symmetric_eigenvalues_small(&m).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14);
        assert!((e[1] - 2.0).abs() < 1e-14);
        assert!((e[2] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn nonsymmetric_2x2_closed_form_matches_power() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.5, -3.0]]);
        let closed = singular_max_2x2(1.0, 2.0, 0.5, -3.0);
        assert!(rel(spectral_norm_power(&m, 3), closed) < 1e-10);
    }

    #[test]
    fn jvp_norm_of_diagonal() {
        let access = JacobianAccess::Dense(Arc::new(|_x: &[f64], m: &mut Matrix| {
            *m = Matrix::diag(&[3.0, 5.0]);
        }));
        let n = jvp_norm(&access, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(rel(n, 34f64.sqrt()) < 1e-15);
        assert_eq!(jvp_norm(&access, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn matrix_free_without_hint_needs_transpose() {
        let access = JacobianAccess::MatrixFree {
            jvp: Arc::new(|_x: &[f64], v: &[f64], out: &mut [f64]| out.copy_from_slice(v)),
            norm_hint: None,
            symmetric: false,
        };
        assert_eq!(
            spectral_norm(&access, &[1.0], 1, 1),
            Err(LinalgError::TransposeUnavailable)
        );
    }

    #[test]
    fn symmetric_matrix_free_uses_power_iteration() {
        let access = JacobianAccess::MatrixFree {
            jvp: Arc::new(|_x: &[f64], v: &[f64], out: &mut [f64]| {
                out[0] = 2.0 * v[0] + v[1];
                out[1] = v[0] + 2.0 * v[1];
            }),
            norm_hint: None,
            symmetric: true,
        };
        let n = spectral_norm(&access, &[0.0, 0.0], 2, 5).unwrap();
        assert!(rel(n, 3.0) < 1e-10);
    }

    #[test]
    fn lcg_is_deterministic() {
        let a: Vec<u64> = {
            let mut g = Lcg::new(42);
            (0..4).map(|_| g.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut g = Lcg::new(42);
            (0..4).map(|_| g.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn l2_survives_large_entries() {
        assert!(rel(l2(&[3e200, 4e200]), 5e200) < 1e-15);
        assert_eq!(l2(&[0.0, 0.0]), 0.0);
    }
}
