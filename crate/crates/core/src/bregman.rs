//! Bregman divergences and the identities built from them.

use crate::error::Result;
use crate::linalg::{check_dim, Vector};
use crate::oracle::Objective;

/// `D_f(y, x) = f(y) - f(x) - <grad f(x), y - x>`.
pub fn bregman_divergence(f: &dyn Objective, y: &Vector, x: &Vector) -> Result<f64> {
    Ok(bregman_with_scale(f, y, x)?.0)
}

/// Bregman divergence together with the magnitude of the terms it cancels.
pub fn bregman_with_scale(f: &dyn Objective, y: &Vector, x: &Vector) -> Result<(f64, f64)> {
    let n = f.dim();
    check_dim(x, n)?;
    check_dim(y, n)?;
    let (fy, fx) = (f.value(y), f.value(x));
    let lin = f.gradient(x).dot(&(y - x));
    Ok((fy - fx - lin, fy.abs() + fx.abs() + lin.abs()))
}

/// `(1/2) <grad f(x) - grad f(y), x - y>`, the mean of the two Bregman divergences.
pub fn symmetrized_bregman(f: &dyn Objective, x: &Vector, y: &Vector) -> Result<f64> {
    let n = f.dim();
    check_dim(x, n)?;
    check_dim(y, n)?;
    Ok(0.5 * (f.gradient(x) - f.gradient(y)).dot(&(x - y)))
}

/// Residual of the three-point identity and the size of the terms involved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub residual: f64,
    pub scale: f64,
}

impl IdentityResidual {
    pub fn relative(&self) -> f64 {
        self.residual / (1.0 + self.scale)
    }
}

/// `<grad f(y) - grad f(x), z - y> = D_f(z,x) - D_f(y,x) - D_f(z,y)`.
pub fn check_three_point_identity(
    f: &dyn Objective,
    x: &Vector,
    y: &Vector,
    z: &Vector,
) -> Result<IdentityResidual> {
    let n = f.dim();
    check_dim(z, n)?;
    let lhs = (f.gradient(y) - f.gradient(x)).dot(&(z - y));
    let (dzx, szx) = bregman_with_scale(f, z, x)?;
    let (dyx, syx) = bregman_with_scale(f, y, x)?;
    let (dzy, szy) = bregman_with_scale(f, z, y)?;
    Ok(IdentityResidual {
        residual: (lhs - (dzx - dyx - dzy)).abs(),
        scale: lhs.abs() + szx + syx + szy,
    })
}

/// Largest relative mismatch between central differences and the gradient
/// along the supplied directions.
pub fn gradient_fd_error(f: &dyn Objective, x: &Vector, directions: &[Vector]) -> f64 {
    let g = f.gradient(x);
    let h = 1e-6 * (1.0 + x.norm());
    directions
        .iter()
        .map(|d| {
            let d = d / d.norm();
            let fd = (f.value(&(x + &d * h)) - f.value(&(x - &d * h))) / (2.0 * h);
            (fd - g.dot(&d)).abs() / (1.0 + g.norm())
        })
        .fold(0.0, f64::max)
}
