//! Rigid-body mobility in two-dimensional Stokes flow.
//!
//! The hydrophobic and repulsive loads enter as an incident single-layer
//! density `sigma_inc` whose net force and torque on each particle are exactly
//! the prescribed ones. The scattered field is a double layer, which carries no
//! net force or torque:
//!
//! `u = S[sigma_inc] + D[mu]`.
//!
//! On the boundary the exterior limit of `D` is `mu/2 + K mu`, whose null space
//! consists of the rigid motions of each particle. Adding the projector `P`
//! onto those motions gives the second-kind system
//! `(I/2 + K + P) mu = -S[sigma_inc]`, after which `u = -P mu` on every
//! particle is rigid. Velocities are recovered by averaging `u` over each
//! boundary.

use std::time::Instant;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::gmres::{gmres, GmresOptions};
use crate::kernels::{stokeslet_raw, stresslet_dl_raw};
use crate::layerpot::{PanelBounds, PanelRules, DENSE_LIMIT};
use crate::physics::ForceTorqueSet;
use crate::solver::{DensityField, SolveReport};
use crate::{cross, perp, Vec2};

/// Panels within this many panel lengths of a target on another particle are
/// integrated adaptively.
const NEAR_FACTOR: f64 = 4.0;

/// Relative force imbalance tolerated before projecting the input.
const BALANCE_TOL: f64 = 1e-8;

/// Rigid velocities and the scattered density. The report's wall time covers
/// the Krylov iterations only.
#[derive(Debug, Clone)]
pub struct MobilitySolution {
    pub velocity: Vec<Vec2>,
    pub omega: Vec<f64>,
    pub mu: DensityField,
    pub report: SolveReport,
}

/// Per-particle boundary length and `∮ |y - a|^2 ds`.
fn moments(disc: &Discretization) -> (Vec<f64>, Vec<f64>) {
    let n = disc.particles.len();
    let mut len = vec![0.0; n];
    let mut tau = vec![0.0; n];
    for i in 0..disc.len() {
        let p = disc.particle_of(i);
        len[p] += disc.weights[i];
        tau[p] += disc.weights[i] * (disc.points[i] - disc.particles[p].center).norm_squared();
    }
    (len, tau)
}

fn incident_at(y: &Vec2, center: &Vec2, force: &Vec2, torque: f64, len: f64, tau: f64) -> Vec2 {
    force / len + perp(&(y - center)) * (torque / tau)
}

/// Incident density `F_j/|∂P_j| + τ_j (y - a_j)^⊥ / ∮|y - a_j|²` on every node,
/// interleaved as `(x, y)` pairs.
pub fn incident_density(disc: &Discretization, forces: &[Vec2], torques: &[f64]) -> DensityField {
    let (len, tau) = moments(disc);
    let mut v = vec![0.0; 2 * disc.len()];
    for i in 0..disc.len() {
        let p = disc.particle_of(i);
        let s = incident_at(&disc.points[i], &disc.particles[p].center, &forces[p], torques[p], len[p], tau[p]);
        v[2 * i] = s.x;
        v[2 * i + 1] = s.y;
    }
    DensityField::vector(v)
}

/// Total loads from a force/torque set, with any net force removed.
///
/// A nonzero net force has no decaying Stokes solution in two dimensions, so
/// it is subtracted equally from every particle after a warning. Net torque is
/// admissible and left alone.
pub fn balanced_loads(ft: &ForceTorqueSet) -> (Vec<Vec2>, Vec<f64>) {
    let n = ft.len();
    let mut forces: Vec<Vec2> = (0..n).map(|i| ft.total_force(i)).collect();
    let torques: Vec<f64> = (0..n).map(|i| ft.total_torque(i)).collect();
    let net = forces.iter().fold(Vec2::zeros(), |a, f| a + f);
    let scale: f64 = forces.iter().map(|f| f.norm()).sum();
    if n > 0 && net.norm() > BALANCE_TOL * scale.max(f64::MIN_POSITIVE) {
        if net.norm() > 1e-4 * scale {
            log::warn!("net force {:?} projected out before the mobility solve", net);
        }
        let shift = net / n as f64;
        forces.iter_mut().for_each(|f| *f -= shift);
    }
    (forces, torques)
}

/// Discrete double-layer operator with the rigid-motion completion.
pub struct StokesOperator<'a> {
    pub disc: &'a Discretization,
    len: Vec<f64>,
    tau: Vec<f64>,
    /// Per node: other-particle panels skipped by the direct sum, and their
    /// adaptive-quadrature blocks.
    near: Vec<(Vec<usize>, Vec<(usize, Matrix2<f64>)>)>,
    bounds: PanelBounds,
    rules: PanelRules,
    /// Row-major `2n x 2n` matrix of `I/2 + K + P`.
    dense: Option<Vec<f64>>,
}

impl<'a> StokesOperator<'a> {
    pub fn new(disc: &'a Discretization) -> Self {
        let (len, tau) = moments(disc);
        let bounds = PanelBounds::new(disc);
        let rules = PanelRules::new(disc);
        let near = (0..disc.len())
            .into_par_iter()
            .map(|i| {
                let x = disc.points[i];
                let own = disc.particle_of(i);
                let panels: Vec<usize> = bounds
                    .near(disc, &x, NEAR_FACTOR)
                    .into_iter()
                    .filter(|&k| disc.panels[k].particle != own)
                    .collect();
                let mut blocks = Vec::new();
                let mut interp = vec![0.0; disc.n_gl];
                for &k in &panels {
                    let mut acc = vec![Matrix2::zeros(); disc.n_gl];
                    for sp in rules.adaptive(disc, k, &x) {
                        let kern = stresslet_dl_raw(&(x - sp.y), &sp.normal) * sp.w;
                        rules.interp_row(sp.s, &mut interp);
                        for m in 0..disc.n_gl {
                            acc[m] += kern * interp[m];
                        }
                    }
                    blocks.extend(disc.panel_nodes(k).zip(acc));
                }
                (panels, blocks)
            })
            .collect();
        let mut op = Self {
            disc,
            len,
            tau,
            near,
            bounds,
            rules,
            dense: None,
        };
        let n = 2 * disc.len();
        if n * n <= DENSE_LIMIT {
            op.dense = Some(op.assemble());
        }
        op
    }

    pub fn len(&self) -> usize {
        2 * self.disc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disc.is_empty()
    }

    /// Self-interaction limit of the double-layer kernel, `-(kappa / 2 pi) t t^T`.
    fn diagonal(&self, i: usize) -> Matrix2<f64> {
        let nu = self.disc.normals[i];
        let t = perp(&nu);
        t * t.transpose() * (-self.disc.curvatures[i] / (2.0 * std::f64::consts::PI))
    }

    /// Weighted kernel block `K(x_i, y_j)` for the direct sum.
    fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        let d = self.disc;
        if i == j {
            self.diagonal(i) * d.weights[i]
        } else {
            stresslet_dl_raw(&(d.points[i] - d.points[j]), &d.normals[j]) * d.weights[j]
        }
    }

    fn assemble(&self) -> Vec<f64> {
        let d = self.disc;
        let n = d.len();
        let cols = 2 * n;
        let mut m = vec![0.0; cols * cols];
        m.par_chunks_mut(2 * cols).enumerate().for_each(|(i, rows)| {
            let (r0, r1) = rows.split_at_mut(cols);
            let own = d.particle_of(i);
            let (skip, blocks) = &self.near[i];
            let xi = perp(&(d.points[i] - d.particles[own].center));
            let mut cursor = 0;
            for k in 0..d.panels.len() {
                if cursor < skip.len() && skip[cursor] == k {
                    cursor += 1;
                    continue;
                }
                for j in d.panel_nodes(k) {
                    let mut b = self.block(i, j);
                    if d.particle_of(j) == own {
                        let yj = perp(&(d.points[j] - d.particles[own].center));
                        b += Matrix2::identity() * (d.weights[j] / self.len[own])
                            + xi * yj.transpose() * (d.weights[j] / self.tau[own]);
                    }
                    r0[2 * j] += b[(0, 0)];
                    r0[2 * j + 1] += b[(0, 1)];
                    r1[2 * j] += b[(1, 0)];
                    r1[2 * j + 1] += b[(1, 1)];
                }
            }
            for (j, b) in blocks {
                r0[2 * j] += b[(0, 0)];
                r0[2 * j + 1] += b[(0, 1)];
                r1[2 * j] += b[(1, 0)];
                r1[2 * j + 1] += b[(1, 1)];
            }
            r0[2 * i] += 0.5;
            r1[2 * i + 1] += 0.5;
        });
        m
    }

    /// Exterior limit `(I/2 + K) mu` of the double layer at the nodes.
    pub fn exterior_limit(&self, mu: &[f64]) -> Vec<f64> {
        let d = self.disc;
        let mut out = vec![0.0; 2 * d.len()];
        out.par_chunks_mut(2).enumerate().for_each(|(i, o)| {
            let (skip, blocks) = &self.near[i];
            let mut acc = Vec2::new(0.5 * mu[2 * i], 0.5 * mu[2 * i + 1]);
            let mut cursor = 0;
            for k in 0..d.panels.len() {
                if cursor < skip.len() && skip[cursor] == k {
                    cursor += 1;
                    continue;
                }
                for j in d.panel_nodes(k) {
                    acc += self.block(i, j) * Vec2::new(mu[2 * j], mu[2 * j + 1]);
                }
            }
            for (j, b) in blocks {
                acc += b * Vec2::new(mu[2 * j], mu[2 * j + 1]);
            }
            o[0] = acc.x;
            o[1] = acc.y;
        });
        out
    }

    /// Rigid projection `P mu` at the nodes.
    pub fn rigid_projection(&self, mu: &[f64]) -> Vec<f64> {
        let (mean, spin) = self.rigid_parts(mu);
        let d = self.disc;
        let mut out = vec![0.0; 2 * d.len()];
        for i in 0..d.len() {
            let p = d.particle_of(i);
            let v = mean[p] + perp(&(d.points[i] - d.particles[p].center)) * spin[p];
            out[2 * i] = v.x;
            out[2 * i + 1] = v.y;
        }
        out
    }

    /// Per-particle `(1/|∂P|) ∮ v ds` and `(1/τ) ∮ (y - a) × v ds` of a nodal field.
    pub fn rigid_parts(&self, v: &[f64]) -> (Vec<Vec2>, Vec<f64>) {
        let d = self.disc;
        let n = d.particles.len();
        let mut mean = vec![Vec2::zeros(); n];
        let mut spin = vec![0.0; n];
        for i in 0..d.len() {
            let p = d.particle_of(i);
            let vi = Vec2::new(v[2 * i], v[2 * i + 1]);
            mean[p] += vi * d.weights[i];
            spin[p] += cross(&(d.points[i] - d.particles[p].center), &vi) * d.weights[i];
        }
        for p in 0..n {
            mean[p] /= self.len[p];
            spin[p] /= self.tau[p];
        }
        (mean, spin)
    }

    /// `out = (I/2 + K + P) mu`.
    pub fn apply(&self, mu: &[f64], out: &mut [f64]) {
        if let Some(m) = &self.dense {
            let n = self.len();
            out.par_iter_mut().enumerate().for_each(|(r, o)| {
                *o = m[r * n..(r + 1) * n].iter().zip(mu).map(|(a, b)| a * b).sum();
            });
            return;
        }
        let a = self.exterior_limit(mu);
        let p = self.rigid_projection(mu);
        for ((o, x), y) in out.iter_mut().zip(&a).zip(&p) {
            *o = x + y;
        }
    }

    /// Single-layer velocity `S[sigma_inc]` at the nodes for the analytic
    /// incident density of the given loads, with viscosity `visc`.
    pub fn incident_velocity(&self, forces: &[Vec2], torques: &[f64], visc: f64) -> Vec<f64> {
        let d = self.disc;
        let mut out = vec![0.0; 2 * d.len()];
        out.par_chunks_mut(2).enumerate().for_each(|(i, o)| {
            let x = d.points[i];
            let near = self.bounds.near(d, &x, NEAR_FACTOR);
            let mut acc = Vec2::zeros();
            let mut cursor = 0;
            for k in 0..d.panels.len() {
                let p = d.panels[k].particle;
                let (c, f, t) = (&d.particles[p].center, &forces[p], torques[p]);
                if cursor < near.len() && near[cursor] == k {
                    cursor += 1;
                    for sp in self.rules.adaptive(d, k, &x) {
                        let s = incident_at(&sp.y, c, f, t, self.len[p], self.tau[p]);
                        acc += stokeslet_raw(&(x - sp.y), visc) * s * sp.w;
                    }
                    continue;
                }
                for j in d.panel_nodes(k) {
                    let s = incident_at(&d.points[j], c, f, t, self.len[p], self.tau[p]);
                    acc += stokeslet_raw(&(x - d.points[j]), visc) * s * d.weights[j];
                }
            }
            o[0] = acc.x;
            o[1] = acc.y;
        });
        out
    }
}

/// Rigid velocities of all particles under the loads in `ft`.
pub fn solve_mobility(
    disc: &Discretization,
    ft: &ForceTorqueSet,
    visc: f64,
    gmres_tol: f64,
    warm: Option<&[f64]>,
) -> Result<MobilitySolution> {
    if !(visc > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {visc}")));
    }
    if ft.len() != disc.particles.len() {
        return Err(Error::InvalidParameter(format!(
            "{} loads for {} particles",
            ft.len(),
            disc.particles.len()
        )));
    }
    let n = disc.particles.len();
    let (forces, torques) = balanced_loads(ft);
    if forces.iter().all(|f| f.x == 0.0 && f.y == 0.0) && torques.iter().all(|&t| t == 0.0) {
        return Ok(MobilitySolution {
            velocity: vec![Vec2::zeros(); n],
            omega: vec![0.0; n],
            mu: DensityField::vector(vec![0.0; 2 * disc.len()]),
            report: SolveReport {
                iterations: 0,
                residual: 0.0,
                wall_time: 0.0,
                history: vec![0.0],
            },
        });
    }
    let op = StokesOperator::new(disc);
    let s_inc = op.incident_velocity(&forces, &torques, visc);
    let rhs: Vec<f64> = s_inc.iter().map(|v| -v).collect();
    let warm = warm.filter(|w| w.len() == rhs.len());
    let start = Instant::now();
    let out = gmres(
        |v, o| op.apply(v, o),
        &rhs,
        warm,
        &GmresOptions {
            tol: gmres_tol,
            max_iter: 300,
        },
    )?;
    let mu = out.x;
    let dl = op.exterior_limit(&mu);
    let u: Vec<f64> = s_inc.iter().zip(&dl).map(|(a, b)| a + b).collect();
    let (velocity, omega) = op.rigid_parts(&u);
    Ok(MobilitySolution {
        velocity,
        omega,
        mu: DensityField::vector(mu),
        report: SolveReport {
            iterations: out.iterations,
            residual: out.residual,
            wall_time: start.elapsed().as_secs_f64(),
            history: out.history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{discretize, Particle};
    use std::f64::consts::PI;

    fn circle(x: f64, y: f64) -> Particle {
        Particle::circle(Vec2::new(x, y), 0.0, 1.0, 2).unwrap()
    }

    fn loads(force: Vec<Vec2>, torque: Vec<f64>) -> ForceTorqueSet {
        let mut ft = ForceTorqueSet::zeros(force.len());
        ft.force = force;
        ft.torque = torque;
        ft
    }

    #[test]
    fn incident_density_examples() {
        let d = discretize(&[circle(0.0, 0.0)], 12, 6).unwrap();
        let s = incident_density(&d, &[Vec2::new(1.0, 0.0)], &[0.0]);
        for i in 0..d.len() {
            assert!((s.values[2 * i] - 1.0 / (2.0 * PI)).abs() < 1e-12);
            assert!(s.values[2 * i + 1].abs() < 1e-15);
        }
        let s = incident_density(&d, &[Vec2::zeros()], &[1.0]);
        for i in 0..d.len() {
            let e = perp(&d.points[i]) / (2.0 * PI);
            assert!((s.values[2 * i] - e.x).abs() < 1e-12 && (s.values[2 * i + 1] - e.y).abs() < 1e-12);
        }
    }

    #[test]
    fn incident_density_carries_the_loads() {
        let parts = [
            Particle::new(Vec2::new(0.2, 0.1), 0.4, 1.25, 0.8, 6).unwrap(),
            Particle::new(Vec2::new(3.5, -1.0), -1.2, 1.25, 0.5, 6).unwrap(),
        ];
        let d = discretize(&parts, 16, 6).unwrap();
        let f = [Vec2::new(0.3, -1.2), Vec2::new(-0.7, 0.4)];
        let t = [0.9, -0.25];
        let s = incident_density(&d, &f, &t);
        let mut net = [Vec2::zeros(); 2];
        let mut tq = [0.0; 2];
        for i in 0..d.len() {
            let p = d.particle_of(i);
            let v = Vec2::new(s.values[2 * i], s.values[2 * i + 1]);
            net[p] += v * d.weights[i];
            tq[p] += cross(&(d.points[i] - parts[p].center), &v) * d.weights[i];
        }
        for p in 0..2 {
            assert!((net[p] - f[p]).norm() < 1e-10);
            assert!((tq[p] - t[p]).abs() < 1e-10);
        }
    }

    #[test]
    fn rigid_motions_are_in_the_null_space() {
        let parts = [circle(0.0, 0.0), Particle::new(Vec2::new(2.6, 0.4), 0.3, 1.25, 0.8, 6).unwrap()];
        let d = discretize(&parts, 16, 6).unwrap();
        let op = StokesOperator::new(&d);
        for p in 0..2 {
            for mode in 0..3 {
                let mut mu = vec![0.0; 2 * d.len()];
                for i in d.particle_nodes[p].clone() {
                    let v = match mode {
                        0 => Vec2::new(1.0, 0.0),
                        1 => Vec2::new(0.0, 1.0),
                        _ => perp(&(d.points[i] - parts[p].center)),
                    };
                    mu[2 * i] = v.x;
                    mu[2 * i + 1] = v.y;
                }
                let dl = op.exterior_limit(&mu);
                let err = dl.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(err < 1e-6, "particle {p} mode {mode}: {err}");
                let mut full = vec![0.0; mu.len()];
                op.apply(&mu, &mut full);
                let err = full.iter().zip(&mu).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(err < 1e-6);
            }
        }
    }

    #[test]
    fn zero_loads_give_zero_motion() {
        let d = discretize(&[circle(0.0, 0.0), circle(3.0, 0.0)], 8, 6).unwrap();
        let s = solve_mobility(&d, &ForceTorqueSet::zeros(2), 1.0, 1e-12, None).unwrap();
        assert!(s.velocity.iter().all(|v| v.x == 0.0 && v.y == 0.0));
        assert!(s.omega.iter().all(|&w| w == 0.0));
        assert!(s.mu.values.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn rotating_cylinder_matches_closed_form() {
        // A torque T on a cylinder of radius a rotates it at T / (4 pi mu a^2).
        let a = 1.3;
        let visc = 0.8;
        let d = discretize(&[Particle::circle(Vec2::new(0.4, -0.2), 0.0, a, 2).unwrap()], 12, 6).unwrap();
        let s = solve_mobility(&d, &loads(vec![Vec2::zeros()], vec![2.0]), visc, 1e-12, None).unwrap();
        let exact = 2.0 / (4.0 * PI * visc * a * a);
        assert!((s.omega[0] - exact).abs() < 1e-8 * exact, "{} vs {exact}", s.omega[0]);
        assert!(s.velocity[0].norm() < 1e-10);
    }

    #[test]
    fn mirrored_dimer_is_symmetric() {
        let d = discretize(&[circle(-1.6, 0.0), circle(1.6, 0.0)], 16, 6).unwrap();
        let f = loads(vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)], vec![0.0, 0.0]);
        let s = solve_mobility(&d, &f, 1.0, 1e-13, None).unwrap();
        assert!(s.velocity[0].x > 0.0);
        assert!((s.velocity[0] + s.velocity[1]).norm() < 1e-8);
        assert!(s.velocity[0].y.abs() < 1e-8);
        assert!(s.omega[0].abs() < 1e-8 && s.omega[1].abs() < 1e-8);
    }

    #[test]
    fn unbalanced_force_is_projected() {
        let d = discretize(&[circle(0.0, 0.0)], 8, 6).unwrap();
        let s = solve_mobility(&d, &loads(vec![Vec2::new(1.0, 0.0)], vec![0.0]), 1.0, 1e-12, None).unwrap();
        assert!(s.velocity[0].norm() < 1e-14);
    }
}
