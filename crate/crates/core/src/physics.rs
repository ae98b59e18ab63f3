//! Hydrophobic stress, forces, torques and energies, plus the excluded-volume
//! repulsion between particles.
//!
//! Forces are `F_i = ∮ T ν_i ds` with the stress
//! `T = γ u²/ρ I + 2ργ (|∇u|²/2 I − ∇u ⊗ ∇u)` and `ν_i` the outward particle
//! normal. The energy `Φ = γ ∫ ρ|∇u|² + u²/ρ` is reduced to the boundary
//! integral `−γρ ∮ f ∂u/∂ν_i ds` by Green's identity.

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Discretization, LabelConvention, Particle};
use crate::solver::{boundary_values, solve_surface, Numerics, SurfaceField};
use crate::{cross, Vec2};

/// Material and interaction constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Interfacial tension, pN/nm.
    pub gamma: f64,
    /// Screening length, nm.
    pub rho: f64,
    /// Repulsion strength, pN·nm⁴ for `q = 3`.
    pub c0: f64,
    /// Repulsion order.
    pub q: u32,
    pub label: LabelConvention,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            gamma: 4.1,
            rho: 2.5,
            c0: 0.5,
            q: 3,
            label: LabelConvention::default(),
        }
    }
}

impl PhysParams {
    pub fn new(gamma: f64, rho: f64, c0: f64, q: u32) -> Result<Self> {
        let p = Self {
            gamma,
            rho,
            c0,
            q,
            label: LabelConvention::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.rho > 0.0 && self.c0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma, rho and c0 must be positive (gamma={}, rho={}, c0={})",
                self.gamma, self.rho, self.c0
            )));
        }
        if self.q < 2 {
            return Err(Error::InvalidParameter(format!("repulsion order must be >= 2, got {}", self.q)));
        }
        Ok(())
    }
}

/// Hydrophobic stress tensor at a point with value `u` and gradient `grad`.
pub fn hydrophobic_stress(u: f64, grad: &Vec2, params: &PhysParams) -> Matrix2<f64> {
    let (g, r) = (params.gamma, params.rho);
    let iso = g * u * u / r + r * g * grad.norm_squared();
    Matrix2::new(
        iso - 2.0 * r * g * grad.x * grad.x,
        -2.0 * r * g * grad.x * grad.y,
        -2.0 * r * g * grad.x * grad.y,
        iso - 2.0 * r * g * grad.y * grad.y,
    )
}

/// Per-particle hydrophobic and repulsive loads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForceTorqueSet {
    pub force: Vec<Vec2>,
    /// Hydrophobic torque about the particle center.
    pub torque: Vec<f64>,
    /// Hydrophobic torque about the origin.
    pub torque_origin: Vec<f64>,
    pub rep_force: Vec<Vec2>,
    pub rep_torque: Vec<f64>,
}

impl ForceTorqueSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            force: vec![Vec2::zeros(); n],
            torque: vec![0.0; n],
            torque_origin: vec![0.0; n],
            rep_force: vec![Vec2::zeros(); n],
            rep_torque: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.force.len()
    }

    pub fn is_empty(&self) -> bool {
        self.force.is_empty()
    }

    pub fn total_force(&self, i: usize) -> Vec2 {
        self.force[i] + self.rep_force[i]
    }

    pub fn total_torque(&self, i: usize) -> f64 {
        self.torque[i] + self.rep_torque[i]
    }

    /// `|Σ F_i| / Σ |F_i|` for the hydrophobic forces; zero when all forces vanish.
    pub fn force_imbalance(&self) -> f64 {
        let net = self.force.iter().fold(Vec2::zeros(), |a, f| a + f).norm();
        let scale: f64 = self.force.iter().map(|f| f.norm()).sum();
        if scale == 0.0 {
            0.0
        } else {
            net / scale
        }
    }

    /// `|Σ τ⁰_i|` relative to `Σ (|τ_i| + |a_i × F_i|)`, the size of the terms
    /// that make up the torques about the origin.
    pub fn torque_imbalance(&self) -> f64 {
        let net: f64 = self.torque_origin.iter().sum();
        let scale: f64 = self
            .torque
            .iter()
            .zip(&self.torque_origin)
            .map(|(t, t0)| t.abs() + (t0 - t).abs())
            .sum();
        if scale == 0.0 {
            0.0
        } else {
            net.abs() / scale
        }
    }
}

/// Hydrophobic forces and torques from a solved surface field. The repulsive
/// entries are left at zero.
pub fn force_torque(disc: &Discretization, field: &SurfaceField, params: &PhysParams) -> ForceTorqueSet {
    let n = disc.particles.len();
    let mut out = ForceTorqueSet::zeros(n);
    for i in 0..disc.len() {
        let p = disc.particle_of(i);
        let t = hydrophobic_stress(field.f[i], &field.grad[i], params) * disc.normals[i] * disc.weights[i];
        out.force[p] += t;
        out.torque_origin[p] += cross(&disc.points[i], &t);
    }
    for (p, part) in disc.particles.iter().enumerate() {
        out.torque[p] = out.torque_origin[p] - cross(&part.center, &out.force[p]);
    }
    out
}

/// `Φ = −γρ ∮ f ∂u/∂ν_i ds`, energy per unit length in pN.
pub fn total_energy(disc: &Discretization, f: &[f64], grad: &[Vec2], params: &PhysParams) -> f64 {
    let s: f64 = (0..disc.len())
        .map(|i| disc.weights[i] * f[i] * grad[i].dot(&disc.normals[i]))
        .sum();
    -params.gamma * params.rho * s
}

/// Excluded-volume forces, torques and potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Repulsion {
    pub force: Vec<Vec2>,
    pub torque: Vec<f64>,
    pub energy: f64,
}

/// Proxy-circle repulsion. Circles carry one proxy and ellipses three, placed
/// at `a + k (a - b) d`, `k ∈ {-1, 0, 1}`, each of radius `b`. Every proxy
/// pair interacts with strength `c0 / max(n_i, n_j)`, which gives `c0` for two
/// circles and `c0/3` for two ellipses.
pub fn repulsion(particles: &[Particle], params: &PhysParams) -> Result<Repulsion> {
    let n = particles.len();
    let proxies: Vec<Vec<Vec2>> = particles.iter().map(|p| p.proxy_centers()).collect();
    let q = params.q as i32;
    let mut force = vec![Vec2::zeros(); n];
    let mut torque = vec![0.0; n];
    let mut energy = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (pi, pj) = (&particles[i], &particles[j]);
            let strength = params.c0 / proxies[i].len().max(proxies[j].len()) as f64;
            for ci in &proxies[i] {
                for cj in &proxies[j] {
                    let d = ci - cj;
                    let dist = d.norm();
                    let gap = dist - (pi.b + pj.b);
                    if gap <= 0.0 {
                        return Err(Error::Collision(i, j, gap));
                    }
                    energy += strength / gap.powi(q);
                    let f = d * (strength * q as f64 / (gap.powi(q + 1) * dist));
                    force[i] += f;
                    force[j] -= f;
                    torque[i] += cross(&(ci - pi.center), &f);
                    torque[j] -= cross(&(cj - pj.center), &f);
                }
            }
        }
    }
    Ok(Repulsion { force, torque, energy })
}

/// Result of one static solve.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub disc: Discretization,
    pub field: SurfaceField,
    pub ft: ForceTorqueSet,
    /// Hydrophobic energy Φ.
    pub energy: f64,
    pub energy_rep: f64,
}

impl Evaluation {
    pub fn energy_total(&self) -> f64 {
        self.energy + self.energy_rep
    }
}

/// Solves the screened-Laplace problem for `particles` and collects forces,
/// torques and energies. `warm` is used only if its length matches the grid.
pub fn evaluate(
    particles: &[Particle],
    params: &PhysParams,
    numerics: &Numerics,
    warm: Option<&[f64]>,
) -> Result<Evaluation> {
    params.validate()?;
    let rep = repulsion(particles, params)?;
    let disc = numerics.discretize(particles)?;
    let f = boundary_values(&disc, params.label);
    let warm = warm.filter(|w| w.len() == disc.len());
    let field = solve_surface(&disc, f, params.rho, &numerics.solver, warm)?;
    let mut ft = force_torque(&disc, &field, params);
    ft.rep_force = rep.force;
    ft.rep_torque = rep.torque;
    let energy = total_energy(&disc, &field.f, &field.grad, params);
    Ok(Evaluation {
        disc,
        field,
        ft,
        energy,
        energy_rep: rep.energy,
    })
}

/// Hydrophobic energy alone.
pub fn hydrophobic_energy(particles: &[Particle], params: &PhysParams, numerics: &Numerics) -> Result<f64> {
    let disc = numerics.discretize(particles)?;
    let f = boundary_values(&disc, params.label);
    let field = solve_surface(&disc, f, params.rho, &numerics.solver, None)?;
    Ok(total_energy(&disc, &field.f, &field.grad, params))
}

/// Full-domain force against the sum of two-particle forces for one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseRow {
    pub index: usize,
    pub full: Vec2,
    pub pairwise: Vec2,
    pub rel_diff: f64,
}

/// Compares hydrophobic forces with their pairwise approximation
/// `f_i = f_i^1 + Σ_{j≠i} (f_ij - f_i^1)`, where `f_ij` is the force on `i`
/// when only `i` and `j` are present and `f_i^1` the force on `i` alone. The
/// isolated force vanishes analytically; keeping it makes its discretization
/// error enter once, as in the full solve.
pub fn pairwise_compare(particles: &[Particle], params: &PhysParams, numerics: &Numerics) -> Result<Vec<PairwiseRow>> {
    let n = particles.len();
    if n < 2 {
        return Err(Error::InvalidParameter("pairwise comparison needs at least two particles".into()));
    }
    let full = evaluate(particles, params, numerics, None)?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pair_forces = pairs
        .par_iter()
        .map(|&(i, j)| {
            let two = [particles[i].clone(), particles[j].clone()];
            evaluate(&two, params, numerics, None).map(|e| (e.ft.force[0], e.ft.force[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    let single = particles
        .par_iter()
        .map(|p| evaluate(std::slice::from_ref(p), params, numerics, None).map(|e| e.ft.force[0]))
        .collect::<Result<Vec<_>>>()?;
    let mut pairwise = single.clone();
    for (&(i, j), (fi, fj)) in pairs.iter().zip(&pair_forces) {
        pairwise[i] += fi - single[i];
        pairwise[j] += fj - single[j];
    }
    Ok((0..n)
        .map(|i| {
            let f = full.ft.force[i];
            let norm = f.norm();
            let rel_diff = if norm > 0.0 { (f - pairwise[i]).norm() / norm } else { 0.0 };
            PairwiseRow {
                index: i,
                full: f,
                pairwise: pairwise[i],
                rel_diff,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::{bessel_k_seq, k0, k1};
    use crate::quadrature::GaussLegendre;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit_params() -> PhysParams {
        PhysParams { gamma: 1.0, rho: 4.0, c0: 0.5, q: 3, label: LabelConvention::HalfAngle }
    }

    #[test]
    fn stress_examples() {
        let p = PhysParams::default();
        assert_eq!(hydrophobic_stress(0.0, &Vec2::zeros(), &p), Matrix2::zeros());
        let g = 0.7;
        let t = hydrophobic_stress(0.0, &Vec2::new(g, 0.0), &p);
        let rg = p.rho * p.gamma;
        assert!((t - Matrix2::new(-rg * g * g, 0.0, 0.0, rg * g * g)).norm() < 1e-14);
        let u = 0.4;
        let t = hydrophobic_stress(u, &Vec2::new(0.3, -1.1), &p);
        assert!((t.trace() - 2.0 * p.gamma * u * u / p.rho).abs() < 1e-13);
        assert_eq!(t, t.transpose());
    }

    #[test]
    fn params_validation() {
        assert!(PhysParams::new(4.1, 2.5, 0.5, 3).is_ok());
        assert!(PhysParams::new(0.0, 2.5, 0.5, 3).is_err());
        assert!(PhysParams::new(4.1, 2.5, 0.5, 1).is_err());
    }

    #[test]
    fn circle_repulsion_closed_form() {
        let p = PhysParams::default();
        let b = 1.0;
        let g = 0.3;
        let parts = [
            Particle::circle(Vec2::zeros(), 0.2, b, 2).unwrap(),
            Particle::circle(Vec2::new(2.0 * b + g, 0.0), -1.0, b, 2).unwrap(),
        ];
        let r = repulsion(&parts, &p).unwrap();
        let mag = p.c0 * 3.0 / g.powi(4);
        assert!((r.force[1] - Vec2::new(mag, 0.0)).norm() < 1e-12 * mag);
        assert!((r.force[0] + r.force[1]).norm() < 1e-12);
        assert_eq!(r.torque, vec![0.0, 0.0]);
        assert!((r.energy - p.c0 / g.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn overlapping_proxies_are_a_collision() {
        let parts = [
            Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap(),
            Particle::circle(Vec2::new(1.5, 0.0), 0.0, 1.0, 2).unwrap(),
        ];
        assert!(matches!(repulsion(&parts, &PhysParams::default()), Err(Error::Collision(0, 1, _))));
    }

    #[test]
    fn ellipse_repulsion_is_minus_gradient() {
        let params = PhysParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let pose = [
                (Vec2::zeros(), rng.gen_range(-PI..PI)),
                (Vec2::new(3.4, rng.gen_range(-0.5..0.5)), rng.gen_range(-PI..PI)),
            ];
            let build = |pose: &[(Vec2, f64); 2]| -> Vec<Particle> {
                pose.iter().map(|(c, t)| Particle::new(*c, *t, 1.25, 0.8, 6).unwrap()).collect()
            };
            let parts = build(&pose);
            if crate::geometry::proxy_gap(&parts[0], &parts[1]) < 0.3 {
                continue;
            }
            let r = repulsion(&parts, &params).unwrap();
            let energy = |pose: &[(Vec2, f64); 2]| repulsion(&build(pose), &params).unwrap().energy;
            for i in 0..2 {
                for dof in 0..3 {
                    let mut errs = Vec::new();
                    for &h in &[1e-3, 5e-4] {
                        let (mut pp, mut pm) = (pose, pose);
                        match dof {
                            0 => {
                                pp[i].0.x += h;
                                pm[i].0.x -= h;
                            }
                            1 => {
                                pp[i].0.y += h;
                                pm[i].0.y -= h;
                            }
                            _ => {
                                pp[i].1 += h;
                                pm[i].1 -= h;
                            }
                        }
                        let fd = -(energy(&pp) - energy(&pm)) / (2.0 * h);
                        let exact = match dof {
                            0 => r.force[i].x,
                            1 => r.force[i].y,
                            _ => r.torque[i],
                        };
                        errs.push((fd - exact).abs());
                    }
                    assert!(errs[1] < 1e-6 || errs[0] / errs[1] > 3.0, "{errs:?}");
                    assert!(errs[1] < 1e-4 * (1.0 + r.force[i].norm()));
                }
            }
        }
    }

    /// Analytic single-disk solution with data `(1 + cos t)/2`, and its polar derivatives.
    fn disk_solution(r: f64, t: f64, a: f64, rho: f64) -> (f64, f64, f64) {
        let (x, x0) = (r / rho, a / rho);
        let mut k = [0.0; 3];
        bessel_k_seq(x, &mut k);
        let (c0, c1) = (0.5 / k0(x0), 0.5 / k1(x0));
        let u = c0 * k[0] + c1 * k[1] * t.cos();
        let ur = (-c0 * k[1] - c1 * 0.5 * (k[0] + k[2]) * t.cos()) / rho;
        let ut = -c1 * k[1] * t.sin();
        (u, ur, ut)
    }

    #[test]
    fn energy_matches_volume_quadrature() {
        let params = unit_params();
        let (a, rho) = (1.0, params.rho);
        // Polar volume quadrature of ρ|∇u|² + u²/ρ on the analytic solution.
        let gl = GaussLegendre::new(24);
        let nt = 32;
        let mut vol = 0.0;
        let mut r0 = a;
        while r0 < 20.0 * rho {
            let r1 = (r0 * 1.5).min(20.0 * rho);
            for (r, wr) in gl.mapped(r0, r1) {
                for m in 0..nt {
                    let t = 2.0 * PI * m as f64 / nt as f64;
                    let (u, ur, ut) = disk_solution(r, t, a, rho);
                    let e = rho * (ur * ur + ut * ut / (r * r)) + u * u / rho;
                    vol += e * r * wr * 2.0 * PI / nt as f64;
                }
            }
            r0 = r1;
        }
        let vol = params.gamma * vol;

        let disk = Particle::circle(Vec2::zeros(), 0.0, a, 2).unwrap();
        let numerics = Numerics::default();
        let disc = numerics.discretize(&[disk]).unwrap();
        let f = boundary_values(&disc, params.label);
        let field = solve_surface(&disc, f, rho, &numerics.solver, None).unwrap();
        let phi = total_energy(&disc, &field.f, &field.grad, &params);
        assert!(phi > 0.0);
        assert!((phi - vol).abs() < 5e-3 * vol, "boundary {phi} volume {vol}");
        assert!((phi - vol).abs() < 1e-5 * vol, "boundary {phi} volume {vol}");
    }

    #[test]
    fn zero_label_gives_zero_energy() {
        let disk = Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap();
        let numerics = Numerics::default();
        let disc = numerics.discretize(&[disk]).unwrap();
        let field = solve_surface(&disc, vec![0.0; disc.len()], 2.0, &numerics.solver, None).unwrap();
        assert_eq!(total_energy(&disc, &field.f, &field.grad, &unit_params()), 0.0);
    }

    #[test]
    fn isolated_particle_is_force_free() {
        let params = PhysParams::default();
        let p = Particle::new(Vec2::new(0.3, -0.7), 0.9, 1.25, 0.8, 6).unwrap();
        let perim = p.perimeter();
        let e = evaluate(&[p], &params, &Numerics::default(), None).unwrap();
        let scale = params.gamma * perim;
        assert!(e.ft.force[0].norm() < 1e-6 * scale, "{:?}", e.ft.force[0]);
        assert!(e.ft.torque[0].abs() < 1e-6 * scale, "{}", e.ft.torque[0]);
    }
}
