//! Skew-symmetric splittings and the linear solves used by the implicit and
//! explicit skew-monotone and saddle-point schemes.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::linalg::LU;
use nalgebra::Dyn;

use crate::error::{parameter, Result, VosError};
use crate::linalg::{check_dim, spectral_norm_estimate, Matrix, Vector};

const POWER_ITERS: usize = 100;
const POWER_TOL: f64 = 1e-8;

type Factor = Arc<LU<f64, Dyn, Dyn>>;

/// `S = B' - B` with `B` strictly lower triangular and `B' = upper(S)`.
pub struct SkewDecomposition {
    /// The skew-symmetric matrix, stored exactly as `B' - B`.
    pub skew: Matrix,
    pub b_lower: Matrix,
    pub b_sym: Matrix,
    /// Power-iteration estimate of the spectral norm of `b_sym`.
    pub l_bsym: f64,
    cache: Mutex<HashMap<u64, Factor>>,
}

impl Clone for SkewDecomposition {
    fn clone(&self) -> Self {
        Self {
            skew: self.skew.clone(),
            b_lower: self.b_lower.clone(),
            b_sym: self.b_sym.clone(),
            l_bsym: self.l_bsym,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl fmt::Debug for SkewDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SkewDecomposition")
            .field("n", &self.dim())
            .field("l_bsym", &self.l_bsym)
            .finish()
    }
}

impl SkewDecomposition {
    pub fn dim(&self) -> usize {
        self.skew.nrows()
    }

    pub fn cached_factorizations(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }
}

/// Splits a skew-symmetric matrix into its strictly lower triangular part.
pub fn skew_split(n_matrix: &Matrix) -> Result<SkewDecomposition> {
    if !n_matrix.is_square() {
        return Err(VosError::InvalidInput(format!(
            "skew matrix must be square, got {}x{}",
            n_matrix.nrows(),
            n_matrix.ncols()
        )));
    }
    let asym = (n_matrix + n_matrix.transpose()).amax();
    if asym > 1e-12 * (1.0 + n_matrix.amax()) {
        return Err(VosError::InvalidInput(format!(
            "matrix is not skew-symmetric (max |S + S'| = {asym:e})"
        )));
    }
    let n = n_matrix.nrows();
    let mut b = Matrix::zeros(n, n);
    for j in 0..n {
        for i in j + 1..n {
            b[(i, j)] = n_matrix[(j, i)];
        }
    }
    let bt = b.transpose();
    let b_sym = &b + &bt;
    let l_bsym = spectral_norm_estimate(&b_sym, POWER_ITERS, POWER_TOL);
    Ok(SkewDecomposition {
        skew: bt - &b,
        b_lower: b,
        b_sym,
        l_bsym,
        cache: Mutex::new(HashMap::new()),
    })
}

/// Solves `(beta I + B) y = b` by one forward sweep.
pub fn forward_substitution_solve(decomp: &SkewDecomposition, beta: f64, b: &Vector) -> Result<Vector> {
    forward_substitution_scaled(decomp, beta, 1.0, b)
}

/// Solves `(beta I + s B) y = b` by one forward sweep.
pub fn forward_substitution_scaled(
    decomp: &SkewDecomposition,
    beta: f64,
    s: f64,
    b: &Vector,
) -> Result<Vector> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(parameter("beta", beta, "must be positive"));
    }
    let n = decomp.dim();
    check_dim(b, n)?;
    let bl = &decomp.b_lower;
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let mut acc = b[i];
        for j in 0..i {
            acc -= s * bl[(i, j)] * y[j];
        }
        y[i] = acc / beta;
    }
    Ok(y)
}

fn factor(decomp: &SkewDecomposition, beta: f64) -> Factor {
    let n = decomp.dim();
    Arc::new((Matrix::identity(n, n) * beta + &decomp.skew).lu())
}

fn solve_with(f: &LU<f64, Dyn, Dyn>, decomp: &SkewDecomposition, beta: f64, b: &Vector) -> Result<Vector> {
    let y = f.solve(b).ok_or_else(|| VosError::Convergence {
        what: "shifted skew solve".into(),
        residual: f64::INFINITY,
    })?;
    let res = (&y * beta + &decomp.skew * &y - b).norm();
    if res > 1e-10 * b.norm().max(f64::MIN_POSITIVE) && res > 0.0 {
        return Err(VosError::Convergence {
            what: "shifted skew solve".into(),
            residual: res,
        });
    }
    Ok(y)
}

fn check_shift(decomp: &SkewDecomposition, beta: f64, b: &Vector) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(parameter("beta", beta, "must be positive"));
    }
    check_dim(b, decomp.dim())
}

/// Solves `(beta I + S) y = b`, reusing one LU factorization per `beta`.
pub fn shifted_skew_solve(decomp: &SkewDecomposition, beta: f64, b: &Vector) -> Result<Vector> {
    check_shift(decomp, beta, b)?;
    let key = beta.to_bits();
    let cached = decomp.cache.lock().ok().and_then(|c| c.get(&key).cloned());
    let f = match cached {
        Some(f) => f,
        None => {
            // concurrent first access may factor twice; both results are identical
            let f = factor(decomp, beta);
            if let Ok(mut c) = decomp.cache.lock() {
                c.entry(key).or_insert_with(|| f.clone());
            }
            f
        }
    };
    solve_with(&f, decomp, beta, b)
}

/// Same as [`shifted_skew_solve`] but always refactors.
pub fn shifted_skew_solve_uncached(decomp: &SkewDecomposition, beta: f64, b: &Vector) -> Result<Vector> {
    check_shift(decomp, beta, b)?;
    solve_with(&factor(decomp, beta), decomp, beta, b)
}

/// Bilinear coupling `(B u, p)` of a saddle problem, `B` of shape `dim(p) x dim(u)`.
#[derive(Debug, Clone)]
pub struct SaddleCoupling {
    pub b: Matrix,
    pub mu_f: f64,
    pub mu_g: f64,
    /// Power-iteration estimate of the spectral norm of `b`.
    pub b_norm: f64,
}

impl SaddleCoupling {
    pub fn new(b: Matrix, mu_f: f64, mu_g: f64) -> Result<Self> {
        if !(mu_f > 0.0) {
            return Err(parameter("mu_f", mu_f, "must be positive"));
        }
        if !(mu_g > 0.0) {
            return Err(VosError::Capability(
                "saddle schemes need mu_g > 0; the case mu_g = 0 with mu_f > 0 is not covered".into(),
            ));
        }
        let b_norm = spectral_norm_estimate(&b, POWER_ITERS, POWER_TOL);
        Ok(Self {
            b,
            mu_f,
            mu_g,
            b_norm,
        })
    }

    pub fn dim_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn dim_p(&self) -> usize {
        self.b.nrows()
    }
}

/// Solves
/// `[(1+a) I, (a/mu_f) B'; -(a/mu_g) B, (1+a) I] (v, q) = (rhs_v, rhs_q)`
/// through the smaller Schur complement.
pub fn saddle_block_solve(
    c: &SaddleCoupling,
    alpha: f64,
    rhs_v: &Vector,
    rhs_q: &Vector,
) -> Result<(Vector, Vector)> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(parameter("alpha", alpha, "must be positive"));
    }
    check_dim(rhs_v, c.dim_u())?;
    check_dim(rhs_q, c.dim_p())?;
    let a1 = 1.0 + alpha;
    let (af, ag) = (alpha / c.mu_f, alpha / c.mu_g);
    let cc = af * ag;
    let b = &c.b;
    let (v, q) = if c.dim_p() <= c.dim_u() {
        let m = Matrix::identity(c.dim_p(), c.dim_p()) * (a1 * a1) + b * b.transpose() * cc;
        let q = crate::linalg::solve_spd(&m, &(rhs_q * a1 + b * rhs_v * ag))?;
        let v = (rhs_v - b.tr_mul(&q) * af) / a1;
        (v, q)
    } else {
        let m = Matrix::identity(c.dim_u(), c.dim_u()) * (a1 * a1) + b.tr_mul(b) * cc;
        let v = crate::linalg::solve_spd(&m, &(rhs_v * a1 - b.tr_mul(rhs_q) * af))?;
        let q = (rhs_q + b * &v * ag) / a1;
        (v, q)
    };
    let r1 = &v * a1 + b.tr_mul(&q) * af - rhs_v;
    let r2 = &q * a1 - b * &v * ag - rhs_q;
    let res = (r1.norm_squared() + r2.norm_squared()).sqrt();
    let scale = (rhs_v.norm_squared() + rhs_q.norm_squared()).sqrt();
    if res > 1e-10 * scale && res > 0.0 {
        return Err(VosError::Convergence {
            what: "saddle block solve".into(),
            residual: res,
        });
    }
    Ok((v, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{normal_matrix, normal_vector, rng, solve_general};

    fn rot() -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }

    fn v(s: &[f64]) -> Vector {
        Vector::from_row_slice(s)
    }

    fn random_skew(n: usize, seed: u64) -> Matrix {
        let g = normal_matrix(&mut rng(seed), n, n);
        &g - g.transpose()
    }

    #[test]
    fn split_of_rotation() {
        let d = skew_split(&rot()).unwrap();
        assert_eq!(d.b_lower, Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
        assert_eq!(d.b_sym, Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!((d.l_bsym - 1.0).abs() < 1e-8);
    }

    #[test]
    fn split_of_zero() {
        let d = skew_split(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(d.b_lower, Matrix::zeros(3, 3));
        assert_eq!(d.l_bsym, 0.0);
    }

    #[test]
    fn split_reconstructs() {
        let s = random_skew(5, 11);
        let d = skew_split(&s).unwrap();
        assert!((d.b_lower.transpose() - &d.b_lower - &s).amax() <= 1e-14);
        let exact = crate::linalg::spectral_norm(&d.b_sym);
        assert!(d.l_bsym >= 0.99 * exact && d.l_bsym <= 1.01 * exact);
    }

    #[test]
    fn split_rejects_nonskew() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let err = skew_split(&m).unwrap_err();
        assert!(err.to_string().contains("2e0"), "{err}");
    }

    #[test]
    fn forward_substitution_examples() {
        let z = skew_split(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(forward_substitution_solve(&z, 2.0, &v(&[4.0, 6.0])).unwrap(), v(&[2.0, 3.0]));
        let d = skew_split(&rot()).unwrap();
        assert_eq!(forward_substitution_solve(&d, 1.0, &v(&[1.0, 1.0])).unwrap(), v(&[1.0, 0.0]));
        assert!(forward_substitution_solve(&d, 0.0, &v(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn forward_substitution_matches_dense() {
        let d = skew_split(&random_skew(5, 3)).unwrap();
        let b = normal_vector(&mut rng(4), 5);
        for s in [1.0, -2.0] {
            let y = forward_substitution_scaled(&d, 1.7, s, &b).unwrap();
            let m = Matrix::identity(5, 5) * 1.7 + &d.b_lower * s;
            let dense = solve_general(&m, &b).unwrap();
            assert!((&y - &dense).norm() <= 1e-12 * dense.norm());
            assert!((&m * &y - &b).norm() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn shifted_skew_examples() {
        let z = skew_split(&Matrix::zeros(2, 2)).unwrap();
        let y = shifted_skew_solve(&z, 3.0, &v(&[3.0, 6.0])).unwrap();
        assert!((y - v(&[1.0, 2.0])).amax() < 1e-15);
        let d = skew_split(&rot()).unwrap();
        let y = shifted_skew_solve(&d, 1.0, &v(&[1.0, 0.0])).unwrap();
        assert!((y - v(&[0.5, 0.5])).amax() < 1e-15);
        assert!(shifted_skew_solve(&d, -1.0, &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn shifted_skew_cache_is_transparent() {
        let d = skew_split(&random_skew(8, 5)).unwrap();
        let b = normal_vector(&mut rng(6), 8);
        let a = shifted_skew_solve(&d, 0.3, &b).unwrap();
        let c = shifted_skew_solve(&d, 0.3, &b).unwrap();
        let u = shifted_skew_solve_uncached(&d, 0.3, &b).unwrap();
        assert_eq!(d.cached_factorizations(), 1);
        assert_eq!(a, c);
        assert_eq!(a, u);
        let res = (&a * 0.3 + &d.skew * &a - &b).norm();
        assert!(res <= 1e-10 * b.norm());
    }

    #[test]
    fn saddle_block_examples() {
        let c = SaddleCoupling::new(Matrix::from_element(1, 1, 1.0), 1.0, 1.0).unwrap();
        let (v1, q1) = saddle_block_solve(&c, 1.0, &v(&[1.0]), &v(&[1.0])).unwrap();
        assert!((v1[0] - 0.2).abs() < 1e-15 && (q1[0] - 0.6).abs() < 1e-15);

        let c = SaddleCoupling::new(Matrix::zeros(2, 3), 2.0, 3.0).unwrap();
        let (v1, q1) = saddle_block_solve(&c, 0.5, &v(&[3.0, 1.5, 0.0]), &v(&[1.5, 3.0])).unwrap();
        assert_eq!(v1, v(&[2.0, 1.0, 0.0]));
        assert_eq!(q1, v(&[1.0, 2.0]));
    }

    #[test]
    fn saddle_block_matches_monolithic() {
        for (p, u) in [(3, 4), (4, 3)] {
            let b = normal_matrix(&mut rng(9), p, u);
            let c = SaddleCoupling::new(b.clone(), 1.5, 0.7).unwrap();
            let rv = normal_vector(&mut rng(10), u);
            let rq = normal_vector(&mut rng(11), p);
            let alpha = 0.4;
            let (sv, sq) = saddle_block_solve(&c, alpha, &rv, &rq).unwrap();
            let mut m = Matrix::zeros(u + p, u + p);
            m.view_mut((0, 0), (u, u)).copy_from(&(Matrix::identity(u, u) * (1.0 + alpha)));
            m.view_mut((0, u), (u, p)).copy_from(&(b.transpose() * (alpha / 1.5)));
            m.view_mut((u, 0), (p, u)).copy_from(&(&b * (-alpha / 0.7)));
            m.view_mut((u, u), (p, p)).copy_from(&(Matrix::identity(p, p) * (1.0 + alpha)));
            let mut rhs = Vector::zeros(u + p);
            rhs.rows_mut(0, u).copy_from(&rv);
            rhs.rows_mut(u, p).copy_from(&rq);
            let z = solve_general(&m, &rhs).unwrap();
            assert!((z.rows(0, u) - &sv).norm() <= 1e-10 * z.norm());
            assert!((z.rows(u, p) - &sq).norm() <= 1e-10 * z.norm());
        }
    }

    #[test]
    fn degenerate_mu_g_rejected() {
        let e = SaddleCoupling::new(Matrix::zeros(1, 1), 1.0, 0.0).unwrap_err();
        assert!(matches!(e, VosError::Capability(_)));
    }
}
