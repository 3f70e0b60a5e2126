//! Dense linear-algebra helpers shared by the problem builders and solvers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, VosError};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Seeded generator used everywhere randomness is needed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    // column-major fill keeps the stream order stable across nalgebra versions
    Matrix::from_iterator(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = normal_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn check_dim(v: &Vector, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(VosError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}

pub fn check_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(VosError::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub fn is_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Unit eigenvectors of the smallest and largest eigenvalues of a symmetric
/// matrix; samplers mix these in to probe the tight directions of the bounds.
pub fn extreme_eigenvectors(h: &Matrix) -> Vec<Vector> {
    if h.is_empty() {
        return Vec::new();
    }
    let eig = h.clone().symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.imin(), eig.eigenvalues.imax());
    let mut dirs = vec![eig.eigenvectors.column(lo).into_owned()];
    if hi != lo {
        dirs.push(eig.eigenvectors.column(hi).into_owned());
    }
    dirs
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power iteration.
pub fn power_iteration_psd(a: &Matrix, iters: usize, tol: f64) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic, not orthogonal to any coordinate axis
    let mut v = Vector::from_iterator(n, (0..n).map(|i| 1.0 + 0.1 * ((i * 7919 % 101) as f64)));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let w = a * &v;
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        let done = (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            break;
        }
    }
    // one more Rayleigh quotient with the converged vector
    lambda.max(v.dot(&(a * &v)))
}

/// Spectral norm estimate of an arbitrary matrix via power iteration on `MᵀM`.
pub fn spectral_norm_estimate(m: &Matrix, iters: usize, tol: f64) -> f64 {
    power_iteration_psd(&(m.transpose() * m), iters, tol).max(0.0).sqrt()
}

/// Exact spectral norm from the singular value decomposition.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Solve a symmetric positive definite system, falling back to LU.
pub fn solve_spd(a: &Matrix, b: &Vector) -> Result<Vector> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    solve_general(a, b)
}

pub fn solve_general(a: &Matrix, b: &Vector) -> Result<Vector> {
    a.clone().lu().solve(b).ok_or_else(|| VosError::Convergence {
        what: "dense LU solve (singular matrix)".into(),
        residual: f64::INFINITY,
    })
}

/// Newton's method on a square nonlinear system with residual-norm backtracking.
pub fn newton_solve<R, J>(residual: R, jacobian: J, x0: Vector, tol: f64, max_iter: usize) -> Result<Vector>
where
    R: Fn(&Vector) -> Vector,
    J: Fn(&Vector) -> Matrix,
{
    let mut x = x0;
    let mut r = residual(&x);
    for _ in 0..max_iter {
        let rn = r.norm();
        if rn <= tol * (1.0 + x.norm()) {
            return Ok(x);
        }
        let step = solve_general(&jacobian(&x), &r)?;
        let mut t = 1.0;
        loop {
            let cand = &x - t * &step;
            let rc = residual(&cand);
            if rc.norm() < rn || t < 1e-10 {
                x = cand;
                r = rc;
                break;
            }
            t *= 0.5;
        }
        if !is_finite(&x) {
            break;
        }
    }
    let rn = r.norm();
    if rn <= tol * (1.0 + x.norm()) {
        Ok(x)
    } else {
        Err(VosError::Convergence {
            what: "Newton solve".into(),
            residual: rn,
        })
    }
}

/// Tolerance-scaled comparison `lhs <= rhs` returning the normalized slack.
pub fn margin(lhs: f64, rhs: f64, scale: f64) -> f64 {
    (rhs - lhs) / (1.0 + scale.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_is_orthogonal() {
        let q = random_orthogonal(&mut rng(3), 6);
        let e = &q.transpose() * &q - Matrix::identity(6, 6);
        assert!(e.amax() < 1e-13);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let m = normal_matrix(&mut rng(5), 8, 5);
        let est = spectral_norm_estimate(&m, 200, 1e-12);
        let exact = spectral_norm(&m);
        assert!((est - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn newton_finds_root() {
        let x = newton_solve(
            |x| Vector::from_vec(vec![x[0] * x[0] * x[0] + x[0] - 2.0]),
            |x| Matrix::from_element(1, 1, 3.0 * x[0] * x[0] + 1.0),
            Vector::from_vec(vec![5.0]),
            1e-14,
            50,
        )
        .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
    }
}
