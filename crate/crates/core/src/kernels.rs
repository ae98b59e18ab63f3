//! Pointwise kernels: the Yukawa Green's function and its derivatives, and the
//! 2D stokeslet and stresslet.
//!
//! The checked functions reject coincident points. The `*_raw` variants take the
//! separation vector `r = x - y` and skip the check; they are what the quadrature
//! loops call.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::specialfn::{k0, k0_k1, k1};
use crate::Vec2;

/// Screening length and viscosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub rho: f64,
    pub mu: f64,
}

impl KernelParams {
    pub fn new(rho: f64, mu: f64) -> Result<Self> {
        if !(rho > 0.0 && mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rho and mu must be positive (rho={rho}, mu={mu})"
            )));
        }
        Ok(Self { rho, mu })
    }
}

fn separation(x: &Vec2, y: &Vec2) -> Result<Vec2> {
    let r = x - y;
    if r.x == 0.0 && r.y == 0.0 {
        Err(Error::Singularity)
    } else {
        Ok(r)
    }
}

/// `G(x, y) = K_0(|x - y| / rho) / (2 pi)`.
pub fn yukawa_g(x: &Vec2, y: &Vec2, rho: f64) -> Result<f64> {
    let r = separation(x, y)?;
    Ok(k0(r.norm() / rho) / (2.0 * PI))
}

/// Normal derivative of `G` in the source variable,
/// `dG/dnu(y) = K_1(|r|/rho) (r . nu) / (2 pi rho |r|)` with `r = x - y`.
pub fn yukawa_dgdny(x: &Vec2, y: &Vec2, normal_y: &Vec2, rho: f64) -> Result<f64> {
    let r = separation(x, y)?;
    Ok(dgdny_raw(&r, normal_y, rho))
}

#[inline]
pub fn dgdny_raw(r: &Vec2, normal_y: &Vec2, rho: f64) -> f64 {
    let d = r.norm();
    k1(d / rho) * r.dot(normal_y) / (2.0 * PI * rho * d)
}

/// Value and target gradient of the double-layer kernel `dG/dnu(y)`.
#[inline]
pub fn dgdny_with_grad_raw(r: &Vec2, normal_y: &Vec2, rho: f64) -> (f64, Vec2) {
    let d = r.norm();
    let (k0, k1) = k0_k1(d / rho);
    let rn = r.dot(normal_y);
    let c = 1.0 / (2.0 * PI * rho);
    let value = c * k1 * rn / d;
    let radial = -(k0 / (rho * d) + 2.0 * k1 / (d * d)) * rn / d;
    let grad = c * (normal_y * (k1 / d) + r * radial);
    (value, grad)
}

/// Gradient of `G` in the target variable.
pub fn yukawa_grad_g(x: &Vec2, y: &Vec2, rho: f64) -> Result<Vec2> {
    let r = separation(x, y)?;
    let d = r.norm();
    let (_, k1) = k0_k1(d / rho);
    Ok(-r * (k1 / (2.0 * PI * rho * d)))
}

/// Stokeslet `(1/4 pi mu) (-log|r| I + r r^T / |r|^2)`.
pub fn stokeslet(x: &Vec2, y: &Vec2, mu: f64) -> Result<Matrix2<f64>> {
    let r = separation(x, y)?;
    Ok(stokeslet_raw(&r, mu))
}

#[inline]
pub fn stokeslet_raw(r: &Vec2, mu: f64) -> Matrix2<f64> {
    let d2 = r.norm_squared();
    let c = 1.0 / (4.0 * PI * mu);
    let lg = -0.5 * d2.ln();
    Matrix2::new(
        c * (lg + r.x * r.x / d2),
        c * r.x * r.y / d2,
        c * r.x * r.y / d2,
        c * (lg + r.y * r.y / d2),
    )
}

/// Stresslet `T_ijk = -(1/pi) r_i r_j r_k / |r|^4`, flattened as `t[i][j][k]`.
pub fn stresslet(x: &Vec2, y: &Vec2) -> Result<[[[f64; 2]; 2]; 2]> {
    let r = separation(x, y)?;
    let d4 = r.norm_squared().powi(2);
    let rv = [r.x, r.y];
    let mut t = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                t[i][j][k] = -rv[i] * rv[j] * rv[k] / (PI * d4);
            }
        }
    }
    Ok(t)
}

/// Double-layer velocity kernel contracted with the source normal:
/// `(1/pi) r r^T (r . nu) / |r|^4`, i.e. `-T_ijk nu_k` for the stresslet above.
#[inline]
pub fn stresslet_dl_raw(r: &Vec2, normal_y: &Vec2) -> Matrix2<f64> {
    let d2 = r.norm_squared();
    let c = r.dot(normal_y) / (PI * d2 * d2);
    Matrix2::new(c * r.x * r.x, c * r.x * r.y, c * r.x * r.y, c * r.y * r.y)
}
