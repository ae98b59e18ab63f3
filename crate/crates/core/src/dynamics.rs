//! Overdamped time stepping and energy minimization.
//!
//! Each step solves the screened-Laplace problem, adds the excluded-volume
//! repulsion, converts loads into rigid velocities (Stokes mobility or a
//! constant drag law) and advances with forward Euler. A step that would
//! collide, or that raises the total energy beyond a small slack, is retried
//! with half the time step.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Particle;
use crate::physics::{evaluate, Evaluation, PhysParams};
use crate::solver::Numerics;
use crate::stokes::solve_mobility;
use crate::units::characteristic_time;
use crate::Vec2;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// How loads become velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    /// Coupled rigid-body mobility through the fluid.
    Mobility,
    /// Independent drag per particle. `None` selects `4 pi mu a` and
    /// `4 pi mu a^3` from each particle's semi-major axis.
    Drag { xi_x: Option<f64>, xi_theta: Option<f64> },
}

impl Integrator {
    pub fn drag() -> Self {
        Integrator::Drag { xi_x: None, xi_theta: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub phys: PhysParams,
    pub numerics: Numerics,
    /// Fluid viscosity in pN·ns/nm².
    pub viscosity: f64,
    /// Time step in ns.
    pub dt: f64,
    pub integrator: Integrator,
    pub max_halvings: u32,
    /// Allowed energy rise per step, relative to `|Φ_total|`.
    pub energy_slack: f64,
    pub mobility_tol: f64,
}

impl DynamicsParams {
    /// Defaults with `dt = 1 [T]` for particles of semi-major axis `a`.
    pub fn new(phys: PhysParams, numerics: Numerics, viscosity: f64, a: f64) -> Self {
        Self {
            phys,
            numerics,
            viscosity,
            dt: characteristic_time(viscosity, a, phys.gamma),
            integrator: Integrator::Mobility,
            max_halvings: 10,
            energy_slack: 1e-7,
            mobility_tol: 1e-10,
        }
    }

    fn validate(&self) -> Result<()> {
        self.phys.validate()?;
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.viscosity > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity must be positive, got {}", self.viscosity)));
        }
        if let Integrator::Drag { xi_x, xi_theta } = self.integrator {
            if xi_x.is_some_and(|x| !(x > 0.0)) || xi_theta.is_some_and(|x| !(x > 0.0)) {
                return Err(Error::InvalidParameter("drag coefficients must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Energies at one accepted state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub energy_rep: f64,
    pub total: f64,
}

/// Accepted simulation state together with its solved fields.
#[derive(Debug, Clone)]
pub struct SimState {
    pub particles: Vec<Particle>,
    /// Time in ns.
    pub time: f64,
    pub step: usize,
    pub trace: Vec<EnergyRecord>,
    /// Solve at the current configuration.
    pub eval: Evaluation,
    /// Stokes density of the last mobility solve, reused as a warm start.
    pub mu_warm: Option<Vec<f64>>,
    /// Krylov iterations of the last step (Yukawa, Stokes).
    pub iterations: (usize, usize),
    /// Time step actually taken in the last step.
    pub last_dt: f64,
    /// Seconds spent in the last Stokes Krylov solve.
    pub stokes_gmres_time: f64,
}

impl SimState {
    pub fn new(particles: Vec<Particle>, params: &DynamicsParams) -> Result<Self> {
        params.validate()?;
        let eval = evaluate(&particles, &params.phys, &params.numerics, None)?;
        let rec = EnergyRecord {
            step: 0,
            time: 0.0,
            energy: eval.energy,
            energy_rep: eval.energy_rep,
            total: eval.energy_total(),
        };
        let iterations = (eval.field.report.iterations, 0);
        Ok(Self {
            particles,
            time: 0.0,
            step: 0,
            trace: vec![rec],
            eval,
            mu_warm: None,
            iterations,
            last_dt: 0.0,
            stokes_gmres_time: 0.0,
        })
    }

    pub fn energy_total(&self) -> f64 {
        self.eval.energy_total()
    }
}

/// Rigid velocities from one load-to-motion solve.
#[derive(Debug, Clone)]
pub struct Velocities {
    pub linear: Vec<Vec2>,
    pub angular: Vec<f64>,
    /// Stokes density, when the mobility solver was used.
    pub mu: Option<Vec<f64>>,
    pub iterations: usize,
    pub gmres_time: f64,
}

/// Translational and angular velocities for the current loads.
pub fn velocities(state: &SimState, params: &DynamicsParams) -> Result<Velocities> {
    let ft = &state.eval.ft;
    match params.integrator {
        Integrator::Mobility => {
            let sol = solve_mobility(
                &state.eval.disc,
                ft,
                params.viscosity,
                params.mobility_tol,
                state.mu_warm.as_deref(),
            )?;
            Ok(Velocities {
                linear: sol.velocity,
                angular: sol.omega,
                mu: Some(sol.mu.values),
                iterations: sol.report.iterations,
                gmres_time: sol.report.wall_time,
            })
        }
        Integrator::Drag { xi_x, xi_theta } => {
            let mut v = Vec::with_capacity(ft.len());
            let mut w = Vec::with_capacity(ft.len());
            for (i, p) in state.particles.iter().enumerate() {
                let cx = xi_x.unwrap_or(4.0 * PI * params.viscosity * p.a);
                let ct = xi_theta.unwrap_or(4.0 * PI * params.viscosity * p.a.powi(3));
                v.push(ft.total_force(i) / cx);
                w.push(ft.total_torque(i) / ct);
            }
            Ok(Velocities {
                linear: v,
                angular: w,
                mu: None,
                iterations: 0,
                gmres_time: 0.0,
            })
        }
    }
}

fn advance(particles: &[Particle], v: &[Vec2], w: &[f64], dt: f64) -> Vec<Particle> {
    particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut q = p.clone();
            q.center += v[i] * dt;
            q.theta = wrap_angle(p.theta + w[i] * dt);
            q
        })
        .collect()
}

fn is_contact(e: &Error) -> bool {
    matches!(e, Error::Collision(..) | Error::Overlap(..))
}

/// One forward-Euler step with step halving.
pub fn step(state: &SimState, params: &DynamicsParams) -> Result<SimState> {
    let vel = velocities(state, params)?;
    let (v, w) = (&vel.linear, &vel.angular);
    let e0 = state.energy_total();
    let slack = params.energy_slack * e0.abs().max(1e-12);
    let warm = Some(state.eval.field.sigma.values.as_slice());
    let mut dt = params.dt;
    let mut fallback: Option<(Evaluation, Vec<Particle>, f64)> = None;
    for halving in 0..=params.max_halvings {
        let trial = advance(&state.particles, v, w, dt);
        match evaluate(&trial, &params.phys, &params.numerics, warm) {
            Ok(eval) => {
                if eval.energy_total() <= e0 + slack {
                    return Ok(accept(state, trial, eval, dt, &vel));
                }
                if fallback.is_none() {
                    fallback = Some((eval, trial, dt));
                }
            }
            Err(e) if is_contact(&e) => {
                if halving == params.max_halvings {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
        dt *= 0.5;
    }
    // The energy never dropped below the slack: the state is stationary to
    // within quadrature noise. Take the full step that did not collide.
    let (eval, trial, dt) = fallback.expect("loop ends with a non-colliding trial");
    log::debug!("step {}: energy did not decrease after {} halvings", state.step + 1, params.max_halvings);
    Ok(accept(state, trial, eval, dt, &vel))
}

fn accept(
    state: &SimState,
    particles: Vec<Particle>,
    eval: Evaluation,
    dt: f64,
    vel: &Velocities,
) -> SimState {
    let time = state.time + dt;
    let step = state.step + 1;
    let mut trace = state.trace.clone();
    trace.push(EnergyRecord {
        step,
        time,
        energy: eval.energy,
        energy_rep: eval.energy_rep,
        total: eval.energy_total(),
    });
    let iterations = (eval.field.report.iterations, vel.iterations);
    SimState {
        particles,
        time,
        step,
        trace,
        eval,
        mu_warm: vel.mu.clone().or_else(|| state.mu_warm.clone()),
        iterations,
        last_dt: dt,
        stokes_gmres_time: vel.gmres_time,
    }
}

/// Runs `n_steps` steps, calling `on_step` after each accepted one.
pub fn run<F>(mut state: SimState, params: &DynamicsParams, n_steps: usize, mut on_step: F) -> Result<SimState>
where
    F: FnMut(&SimState) -> Result<()>,
{
    for _ in 0..n_steps {
        state = step(&state, params)?;
        on_step(&state)?;
    }
    Ok(state)
}

/// Additional potential added to `Φ_total` during minimization.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ExtraPotential {
    #[default]
    None,
    /// `-Σ k_i y_i`: a vertical load of strength `k_i` on particle `i`.
    Load(Vec<f64>),
    /// `k/2 Σ_i (|a_i - c| - r_i)^2` over the listed particles, pulling each
    /// towards its own target radius `r_i` about `c`.
    RadialBond { center: Vec2, stiffness: f64, targets: Vec<(usize, f64)> },
}

impl ExtraPotential {
    fn energy(&self, particles: &[Particle]) -> f64 {
        match self {
            ExtraPotential::None => 0.0,
            ExtraPotential::Load(k) => -particles.iter().zip(k).map(|(p, k)| k * p.center.y).sum::<f64>(),
            ExtraPotential::RadialBond { center, stiffness, targets } => targets
                .iter()
                .map(|&(i, r)| 0.5 * stiffness * ((particles[i].center - center).norm() - r).powi(2))
                .sum(),
        }
    }

    fn add_force(&self, particles: &[Particle], force: &mut [Vec2]) {
        match self {
            ExtraPotential::None => {}
            ExtraPotential::Load(k) => {
                for (f, k) in force.iter_mut().zip(k) {
                    f.y += k;
                }
            }
            ExtraPotential::RadialBond { center, stiffness, targets } => {
                for &(i, r) in targets {
                    let d = particles[i].center - center;
                    let dist = d.norm();
                    if dist > 0.0 {
                        force[i] -= d * (stiffness * (dist - r) / dist);
                    }
                }
            }
        }
    }
}

/// Which coordinates `(x, y, theta)` of a particle may move.
pub type Freedom = [bool; 3];

pub const FREE: Freedom = [true, true, true];
pub const CLAMPED: Freedom = [false, false, false];

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when every free generalized force component is below this
    /// (pN for forces, pN for torque divided by the semi-major axis).
    pub tol: f64,
    pub max_iter: usize,
    /// Steepest-descent step in nm per pN, also the initial inverse-Hessian scale.
    pub step: f64,
    /// Largest displacement of any particle per iteration, in nm.
    pub max_move: f64,
    /// Per-particle freedom; missing entries are free.
    pub freedom: Vec<Freedom>,
    pub extra: ExtraPotential,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 500,
            step: 0.05,
            max_move: 0.1,
            freedom: Vec::new(),
            extra: ExtraPotential::None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub particles: Vec<Particle>,
    /// `Φ_total` plus the extra potential, per accepted iterate.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub max_force: f64,
    pub converged: bool,
    pub eval: Evaluation,
}

impl MinimizeResult {
    pub fn energy(&self) -> f64 {
        *self.energies.last().expect("at least the initial energy")
    }
}

/// Generalized forces `(F_x, F_y, tau / a)` with constraints applied.
fn generalized(eval: &Evaluation, particles: &[Particle], opts: &MinimizeOptions) -> Vec<[f64; 3]> {
    let n = particles.len();
    let mut force: Vec<Vec2> = (0..n).map(|i| eval.ft.total_force(i)).collect();
    opts.extra.add_force(particles, &mut force);
    (0..n)
        .map(|i| {
            let fr = opts.freedom.get(i).copied().unwrap_or(FREE);
            let g = [force[i].x, force[i].y, eval.ft.total_torque(i) / particles[i].a];
            [0, 1, 2].map(|k| if fr[k] { g[k] } else { 0.0 })
        })
        .collect()
}

fn max_component(g: &[[f64; 3]]) -> f64 {
    g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn dot(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[[f64; 3]], y: &mut [[f64; 3]]) {
    for (yi, xi) in y.iter_mut().flatten().zip(x.iter().flatten()) {
        *yi += alpha * xi;
    }
}

/// L-BFGS two-loop recursion: an approximation of `H g` from the stored
/// steps `s` and gradient changes `y`.
fn lbfgs_direction(g: &[[f64; 3]], memory: &VecDeque<(Vec<[f64; 3]>, Vec<[f64; 3]>)>, h0: f64) -> Vec<[f64; 3]> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let a = dot(s, &q) / dot(y, s);
        axpy(-a, y, &mut q);
        alphas.push(a);
    }
    for v in q.iter_mut().flatten() {
        *v *= h0;
    }
    for ((s, y), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = dot(y, &q) / dot(y, s);
        axpy(a - b, s, &mut q);
    }
    q
}

const LBFGS_MEMORY: usize = 8;

/// Minimizes `Φ_total + extra` by L-BFGS in the coordinates `(x, y, a θ)`,
/// for which the generalized force `(F, τ/a)` is minus the gradient. Each
/// step is capped at `max_move` and accepted by Armijo backtracking; when the
/// quasi-Newton direction fails the history is dropped and a steepest-descent
/// step of length `step · |F|` is tried instead.
pub fn minimize(
    particles: Vec<Particle>,
    phys: &PhysParams,
    numerics: &Numerics,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let mut particles = particles;
    let mut eval = evaluate(&particles, phys, numerics, None)?;
    let mut energy = eval.energy_total() + opts.extra.energy(&particles);
    let mut energies = vec![energy];
    let mut g = generalized(&eval, &particles, opts);
    let mut memory: VecDeque<(Vec<[f64; 3]>, Vec<[f64; 3]>)> = VecDeque::new();
    let mut h0 = opts.step;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let gmax = max_component(&g);
        if gmax < opts.tol {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for attempt in 0..2 {
            let steepest = attempt == 1 || memory.is_empty();
            let d = if steepest {
                g.iter().map(|v| v.map(|c| c * opts.step)).collect()
            } else {
                lbfgs_direction(&g, &memory, h0)
            };
            let slope = dot(&g, &d);
            if !(slope > 0.0) {
                memory.clear();
                continue;
            }
            let dmax = max_component(&d);
            let mut t = (opts.max_move / dmax).min(1.0);
            for _ in 0..30 {
                let trial: Vec<Particle> = particles
                    .iter()
                    .zip(&d)
                    .map(|(p, di)| {
                        let mut q = p.clone();
                        q.center += Vec2::new(di[0], di[1]) * t;
                        q.theta = wrap_angle(q.theta + di[2] * t / p.a);
                        q
                    })
                    .collect();
                match evaluate(&trial, phys, numerics, Some(&eval.field.sigma.values)) {
                    Ok(te) => {
                        let e = te.energy_total() + opts.extra.energy(&trial);
                        if e <= energy - 1e-4 * t * slope {
                            let g_new = generalized(&te, &trial, opts);
                            let step: Vec<[f64; 3]> = d.iter().map(|v| v.map(|c| c * t)).collect();
                            let mut dy = g.clone();
                            axpy(-1.0, &g_new, &mut dy);
                            let sy = dot(&step, &dy);
                            if sy > 1e-12 {
                                h0 = sy / dot(&dy, &dy);
                                memory.push_back((step, dy));
                                if memory.len() > LBFGS_MEMORY {
                                    memory.pop_front();
                                }
                            }
                            particles = trial;
                            eval = te;
                            energy = e;
                            energies.push(e);
                            g = g_new;
                            accepted = true;
                            break;
                        }
                    }
                    Err(e) if is_contact(&e) => {}
                    Err(e) => return Err(e),
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
            memory.clear();
            if steepest {
                break;
            }
        }
        if !accepted {
            log::warn!("minimization stalled after {iterations} iterations");
            break;
        }
        if iterations % 20 == 0 {
            log::debug!("minimize: iteration {iterations}, energy {energy:.6}, max force {:.3e}", max_component(&g));
        }
    }
    let max_force = max_component(&g);
    if max_force >= opts.tol {
        log::warn!("minimization stopped with max force {max_force:.3e} > {:.3e}", opts.tol);
    }
    Ok(MinimizeResult {
        particles,
        energies,
        iterations,
        max_force,
        converged: max_force < opts.tol,
        eval,
    })
}
