//! Boundary-integral simulation of two-dimensional amphiphilic (Janus) particles.
//!
//! The hydrophobic attraction between particles is modelled by the exterior
//! screened-Laplace problem `-rho^2 Lap u + u = 0`, solved with a second-kind
//! double-layer integral equation discretized on Gauss–Legendre panels and
//! evaluated with quadrature by expansion (QBX). Forces and torques follow from
//! the hydrophobic stress tensor; particles are advanced either through a Stokes
//! mobility solve or a constant-drag law.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod gmres;
pub mod kernels;
pub mod layerpot;
pub mod physics;
pub mod quadrature;
pub mod solver;
pub mod specialfn;
pub mod stokes;
pub mod units;

pub use error::{Error, Result};

/// Two-component real vector used for positions, normals and forces.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Scalar 2D cross product `a x b`.
#[inline]
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Counter-clockwise rotation by 90 degrees.
#[inline]
pub fn perp(a: &Vec2) -> Vec2 {
    Vec2::new(-a.y, a.x)
}
