//! Second-kind integral equation `sigma/2 + D[sigma] = f` for the exterior
//! screened-Laplace problem and evaluation of `u = D[sigma]`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{discretize, Discretization, LabelConvention, Particle};
use crate::gmres::{gmres, GmresOptions};
use crate::layerpot::{refine_for_qbx, DoubleLayer, FieldSample, QbxOptions};
use crate::quadrature::differentiation_matrix;
use crate::specialfn::{k0, k1};
use crate::Vec2;

/// Per-node layer density. Scalar densities have one component; Stokes
/// densities interleave `(x, y)` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub components: usize,
}

impl DensityField {
    pub fn scalar(values: Vec<f64>) -> Self {
        Self { values, components: 1 }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self { values, components: 2 }
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / self.components
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Max-norm residual relative to the max-norm of the right-hand side.
    pub residual: f64,
    pub wall_time: f64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub gmres_tol: f64,
    pub max_iter: usize,
    pub qbx: QbxOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gmres_tol: 1e-13,
            max_iter: 200,
            qbx: QbxOptions::default(),
        }
    }
}

/// Material label of `particle` at boundary point `x`.
pub fn janus_label(particle: &Particle, x: &Vec2, conv: LabelConvention) -> f64 {
    particle.janus_label(x, conv)
}

/// Janus labels at every node of the grid.
pub fn boundary_values(disc: &Discretization, conv: LabelConvention) -> Vec<f64> {
    (0..disc.len())
        .map(|i| disc.particles[disc.particle_of(i)].janus_label(&disc.points[i], conv))
        .collect()
}

/// Solves `(I/2 + D) sigma = f` with GMRES using a prebuilt operator.
pub fn solve_with(
    op: &DoubleLayer<'_>,
    f: &[f64],
    warm: Option<&[f64]>,
    gmres_tol: f64,
    max_iter: usize,
) -> Result<(DensityField, SolveReport)> {
    if f.len() != op.len() {
        return Err(Error::InvalidParameter(format!(
            "{} boundary values for {} nodes",
            f.len(),
            op.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite boundary values".into()));
    }
    let start = Instant::now();
    let out = gmres(
        |v, o| op.apply(v, o),
        f,
        warm,
        &GmresOptions {
            tol: gmres_tol,
            max_iter,
        },
    )?;
    Ok((
        DensityField::scalar(out.x),
        SolveReport {
            iterations: out.iterations,
            residual: out.residual,
            wall_time: start.elapsed().as_secs_f64(),
            history: out.history,
        },
    ))
}

/// Builds the operator and solves the second-kind equation.
pub fn solve_skie(
    disc: &Discretization,
    f: &[f64],
    rho: f64,
    opts: &SolverOptions,
) -> Result<(DensityField, SolveReport)> {
    let op = DoubleLayer::new(disc, rho, opts.qbx)?;
    solve_with(&op, f, None, opts.gmres_tol, opts.max_iter)
}

/// `u = D[sigma]` and its gradient at free points.
pub fn eval_field(
    disc: &Discretization,
    sigma: &DensityField,
    points: &[Vec2],
    rho: f64,
    qbx: &QbxOptions,
) -> Result<Vec<FieldSample>> {
    let op = DoubleLayer::new(disc, rho, *qbx)?;
    Ok(op.eval_points(&sigma.values, points))
}

/// Gradient of `u` at the boundary nodes: the tangential part is the spectral
/// arclength derivative of the boundary data `f`, the normal part comes from
/// the QBX gradient of `D[sigma]`.
pub fn surface_gradient(op: &DoubleLayer<'_>, sigma: &[f64], f: &[f64]) -> Vec<Vec2> {
    let disc = op.disc;
    let dudn = op.normal_derivative(sigma);
    let dmat = differentiation_matrix(&disc.gl.nodes);
    let n = disc.n_gl;
    let mut out = vec![Vec2::zeros(); disc.len()];
    for k in 0..disc.panels.len() {
        let nodes = disc.panel_nodes(k);
        let half = 0.5 * (disc.panels[k].t1 - disc.panels[k].t0);
        let fv = &f[nodes.clone()];
        for (a, i) in nodes.enumerate() {
            let dfds: f64 = (0..n).map(|b| dmat[a * n + b] * fv[b]).sum();
            let dfdarc = dfds / (half * disc.speeds[i]);
            let nu = disc.normals[i];
            let tau = Vec2::new(-nu.y, nu.x);
            out[i] = tau * dfdarc + nu * dudn[i];
        }
    }
    out
}

/// Discretization and solver settings shared by every static solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// Panels per particle before refinement.
    pub n_pan: usize,
    /// Gauss–Legendre nodes per panel.
    pub n_gl: usize,
    /// Panels longer than this multiple of their clearance to a neighbour are bisected.
    pub refine_factor: f64,
    pub solver: SolverOptions,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_pan: 20,
            n_gl: 6,
            refine_factor: 1.0,
            solver: SolverOptions::default(),
        }
    }
}

impl Numerics {
    /// Refined grid for `particles`.
    pub fn discretize(&self, particles: &[Particle]) -> Result<Discretization> {
        let disc = discretize(particles, self.n_pan, self.n_gl)?;
        Ok(refine_for_qbx(&disc, self.refine_factor))
    }
}

/// Boundary data, density and on-surface gradient of a solved problem.
#[derive(Debug, Clone)]
pub struct SurfaceField {
    pub f: Vec<f64>,
    pub sigma: DensityField,
    pub grad: Vec<Vec2>,
    pub report: SolveReport,
}

/// Solves for `sigma` and the on-surface gradient of `u`.
pub fn solve_surface(
    disc: &Discretization,
    f: Vec<f64>,
    rho: f64,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<SurfaceField> {
    let op = DoubleLayer::new(disc, rho, opts.qbx)?;
    let (sigma, report) = solve_with(&op, &f, warm, opts.gmres_tol, opts.max_iter)?;
    let grad = surface_gradient(&op, &sigma.values, &f);
    Ok(SurfaceField {
        f,
        sigma,
        grad,
        report,
    })
}

/// Exterior solution for a disk of radius `a` at the origin with boundary data
/// `(1 + cos theta) / 2`.
pub fn disk_solution(r: f64, theta: f64, a: f64, rho: f64) -> f64 {
    0.5 * (k0(r / rho) / k0(a / rho) + k1(r / rho) / k1(a / rho) * theta.cos())
}

/// One cell of the single-disk convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskCheck {
    pub n_pan: usize,
    pub order: usize,
    pub iterations: usize,
    /// Maximum error over the exterior points of the sample grid.
    pub linf_error: f64,
    pub wall_time: f64,
}

/// Solves the unit-disk problem with `rho = 4` and compares against
/// [`disk_solution`] on a `grid x grid` sample of the square `[-2.5, 2.5]^2`,
/// skipping points inside the disk.
pub fn disk_check(n_pan: usize, qbx: QbxOptions, n_gl: usize, gmres_tol: f64, grid: usize) -> Result<DiskCheck> {
    let start = Instant::now();
    let (a, rho) = (1.0, 4.0);
    let disk = Particle::circle(Vec2::zeros(), 0.0, a, 2)?;
    let disc = discretize(&[disk], n_pan, n_gl)?;
    let f: Vec<f64> = disc.params.iter().map(|t| 0.5 * (1.0 + t.cos())).collect();
    let opts = SolverOptions {
        gmres_tol,
        qbx,
        ..Default::default()
    };
    let op = DoubleLayer::new(&disc, rho, opts.qbx)?;
    let (sigma, report) = solve_with(&op, &f, None, opts.gmres_tol, opts.max_iter)?;
    let step = 5.0 / (grid.max(2) - 1) as f64;
    let pts: Vec<Vec2> = (0..grid * grid)
        .map(|k| Vec2::new(-2.5 + step * (k % grid) as f64, -2.5 + step * (k / grid) as f64))
        .filter(|x| x.norm() > a)
        .collect();
    let vals = op.eval_points(&sigma.values, &pts);
    let linf_error = pts
        .iter()
        .zip(&vals)
        .map(|(x, v)| (v.value - disk_solution(x.norm(), x.y.atan2(x.x), a, rho)).abs())
        .fold(0.0, f64::max);
    Ok(DiskCheck {
        n_pan,
        order: qbx.order,
        iterations: report.iterations,
        linf_error,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn analytic(r: f64, th: f64, a: f64, rho: f64) -> f64 {
        disk_solution(r, th, a, rho)
    }

    fn disk_problem(n_pan: usize, p: usize) -> (Discretization, DensityField, SolveReport, SolverOptions) {
        let disk = Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap();
        let d = discretize(&[disk], n_pan, 6).unwrap();
        let f: Vec<f64> = d.params.iter().map(|t| 0.5 * (1.0 + t.cos())).collect();
        let opts = SolverOptions {
            qbx: QbxOptions { order: p, ..Default::default() },
            ..Default::default()
        };
        let (s, r) = solve_skie(&d, &f, 4.0, &opts).unwrap();
        (d, s, r, opts)
    }

    #[test]
    fn janus_labels() {
        let p = Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap();
        let full = LabelConvention::FullAngle;
        assert!((janus_label(&p, &Vec2::new(1.0, 0.0), full) - 1.0).abs() < 1e-15);
        assert!(janus_label(&p, &Vec2::new(0.0, 1.0), full).abs() < 1e-15);
        let x = Vec2::new((PI / 4.0).cos(), (PI / 4.0).sin());
        assert!((janus_label(&p, &x, full) - 0.5).abs() < 1e-15);
        let d = discretize(&[p], 8, 6).unwrap();
        let f = boundary_values(&d, LabelConvention::HalfAngle);
        for (v, t) in f.iter().zip(&d.params) {
            assert!((v - 0.5 * (1.0 + t.cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn single_disk_matches_analytic_solution() {
        let (d, sigma, report, opts) = disk_problem(20, 6);
        assert!(report.iterations <= 12, "iterations {}", report.iterations);
        assert!(report.residual <= 1e-12);
        let pts: Vec<Vec2> = (0..400)
            .map(|k| {
                let r = 1.0 + 1.5 * ((k % 20) as f64 / 19.0).powi(2) + 1e-3;
                let th = 2.0 * PI * (k / 20) as f64 / 20.0;
                Vec2::new(r * th.cos(), r * th.sin())
            })
            .collect();
        let vals = eval_field(&d, &sigma, &pts, 4.0, &opts.qbx).unwrap();
        let err = pts
            .iter()
            .zip(&vals)
            .map(|(x, v)| (v.value - analytic(x.norm(), x.y.atan2(x.x), 1.0, 4.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-5, "field error {err}");
    }

    #[test]
    fn zero_data_gives_zero_density() {
        let disk = Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap();
        let d = discretize(&[disk], 10, 6).unwrap();
        let (s, r) = solve_skie(&d, &vec![0.0; d.len()], 2.0, &SolverOptions::default()).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(r.iterations <= 1);
    }

    #[test]
    fn constant_data_is_radially_symmetric() {
        let disk = Particle::circle(Vec2::zeros(), 0.3, 1.0, 2).unwrap();
        let d = discretize(&[disk], 16, 6).unwrap();
        let opts = SolverOptions::default();
        let (s, _) = solve_skie(&d, &vec![1.0; d.len()], 2.0, &opts).unwrap();
        let pts: Vec<Vec2> = (0..64)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / 64.0;
                1.7 * Vec2::new(th.cos(), th.sin())
            })
            .collect();
        let v = eval_field(&d, &s, &pts, 2.0, &opts.qbx).unwrap();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.value), b.max(s.value)));
        assert!(hi - lo < 1e-8, "variation {}", hi - lo);
        let exact = k0(1.7 / 2.0) / k0(0.5);
        assert!((v[0].value - exact).abs() < 1e-6, "{} vs {exact}", v[0].value);
    }

    #[test]
    fn surface_gradient_matches_analytic() {
        let (d, sigma, _, opts) = disk_problem(20, 8);
        let op = DoubleLayer::new(&d, 4.0, opts.qbx).unwrap();
        let f: Vec<f64> = d.params.iter().map(|t| 0.5 * (1.0 + t.cos())).collect();
        let g = surface_gradient(&op, &sigma.values, &f);
        for i in 0..d.len() {
            let t = d.params[i];
            let rho = 4.0;
            // du/dr from the closed form, using K0' = -K1 and K1' = -K0 - K1/x.
            let x = 1.0 / rho;
            let dudr = 0.5 * (-k1(x) / k0(x) + (-k0(x) - k1(x) / x) / k1(x) * t.cos()) / rho;
            let dudt = -0.5 * t.sin();
            let exact = Vec2::new(t.cos(), t.sin()) * dudr + Vec2::new(-t.sin(), t.cos()) * dudt;
            assert!((g[i] - exact).norm() < 1e-5, "node {i}: {:?} vs {:?}", g[i], exact);
        }
    }

    #[test]
    fn warm_start_uniqueness() {
        let disk = Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap();
        let d = discretize(&[disk], 12, 6).unwrap();
        let f: Vec<f64> = d.params.iter().map(|t| (0.5 * (1.0 + t.cos())).powi(2)).collect();
        let opts = SolverOptions { gmres_tol: 1e-12, ..Default::default() };
        let op = DoubleLayer::new(&d, 2.0, opts.qbx).unwrap();
        let (a, _) = solve_with(&op, &f, None, 1e-12, 200).unwrap();
        let guess: Vec<f64> = (0..d.len()).map(|i| (i as f64).sin()).collect();
        let (b, _) = solve_with(&op, &f, Some(&guess), 1e-12, 200).unwrap();
        let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }
}
