use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use csv::Writer;
use log::{info, warn};
use serde::Serialize;

use janus_core::dynamics::{self, MinimizeOptions, SimState};
use janus_core::experiments::{self, FitResult, Shape};
use janus_core::geometry::Particle;
use janus_core::layerpot::QbxOptions;
use janus_core::physics::{evaluate, Evaluation};
use janus_core::solver::{disk_check, Numerics};

use crate::config::{ParticleConfig, RunConfig};

/// Single-disk errors at `(n_pan, order)`, `n_gl = 6`.
pub const DISK_REFERENCE: [(usize, usize, f64); 12] = [
    (10, 4, 3.20e-4),
    (20, 4, 2.00e-5),
    (40, 4, 9.12e-7),
    (80, 4, 5.96e-8),
    (10, 6, 2.01e-5),
    (20, 6, 3.93e-7),
    (40, 6, 2.21e-7),
    (80, 6, 4.77e-8),
    (10, 8, 1.23e-6),
    (20, 8, 1.23e-8),
    (40, 8, 2.84e-7),
    (80, 8, 5.01e-8),
];

/// Flags shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub stride: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.output.directory = out.to_string_lossy().into_owned();
        }
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if let Some(tol) = self.tol {
            cfg.numerics.gmres_tol = tol;
        }
        if let Some(stride) = self.stride {
            cfg.output.stride = stride;
        }
    }
}

fn prepare(path: &Path, ov: &Overrides) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(path)?;
    ov.apply(&mut cfg);
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output.directory);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok((cfg, dir))
}

fn writer(dir: &Path, name: &str) -> Result<Writer<File>> {
    let path = dir.join(name);
    Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidateRow {
    pub n_pan: usize,
    pub n_bdy: usize,
    pub qbx_order: usize,
    pub iterations: usize,
    pub linf_error: f64,
    pub reference: f64,
    pub pass: bool,
    pub wall_time_s: f64,
}

/// Runs the single-disk convergence grid. Returns the rows and whether every
/// cell is within ten times the reference error.
pub fn validate(ov: &Overrides) -> Result<(Vec<ValidateRow>, bool)> {
    let tol = ov.tol.unwrap_or(1e-13);
    let mut rows = Vec::new();
    println!("{:>6} {:>6} {:>4} {:>6} {:>11} {:>11} {:>5}", "n_pan", "n_bdy", "p", "iters", "linf", "reference", "ok");
    for &(n_pan, order, reference) in &DISK_REFERENCE {
        let qbx = QbxOptions {
            order,
            ..Default::default()
        };
        let c = disk_check(n_pan, qbx, 6, tol, 200)?;
        let pass = c.linf_error <= 10.0 * reference;
        println!(
            "{:>6} {:>6} {:>4} {:>6} {:>11.3e} {:>11.3e} {:>5}",
            n_pan,
            6 * n_pan,
            order,
            c.iterations,
            c.linf_error,
            reference,
            if pass { "yes" } else { "NO" }
        );
        rows.push(ValidateRow {
            n_pan,
            n_bdy: 6 * n_pan,
            qbx_order: order,
            iterations: c.iterations,
            linf_error: c.linf_error,
            reference,
            pass,
            wall_time_s: c.wall_time,
        });
    }
    if let Some(dir) = &ov.out {
        fs::create_dir_all(dir)?;
        let mut w = writer(dir, "validate.csv")?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    let ok = rows.iter().all(|r| r.pass);
    Ok((rows, ok))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForceRow {
    pub particle: usize,
    pub x_nm: f64,
    pub y_nm: f64,
    pub theta_rad: f64,
    pub fx_pn: f64,
    pub fy_pn: f64,
    pub torque_pn_nm: f64,
    pub frep_x_pn: f64,
    pub frep_y_pn: f64,
    pub torque_rep_pn_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub step: usize,
    pub time_ns: f64,
    pub phi_pn_nm: f64,
    pub phi_rep_pn_nm: f64,
    pub phi_total_pn_nm: f64,
    pub gmres_iterations: usize,
    pub stokes_iterations: usize,
}

pub fn force_rows(particles: &[Particle], eval: &Evaluation) -> Vec<ForceRow> {
    particles
        .iter()
        .enumerate()
        .map(|(i, p)| ForceRow {
            particle: i,
            x_nm: p.center.x,
            y_nm: p.center.y,
            theta_rad: p.theta,
            fx_pn: eval.ft.force[i].x,
            fy_pn: eval.ft.force[i].y,
            torque_pn_nm: eval.ft.torque[i],
            frep_x_pn: eval.ft.rep_force[i].x,
            frep_y_pn: eval.ft.rep_force[i].y,
            torque_rep_pn_nm: eval.ft.rep_torque[i],
        })
        .collect()
}

/// One static solve; writes `forces.csv` and `energy.csv`.
pub fn forces(path: &Path, ov: &Overrides) -> Result<Vec<ForceRow>> {
    let (cfg, dir) = prepare(path, ov)?;
    let seed = cfg.seed.unwrap_or(0);
    let particles = cfg.build_particles(seed)?;
    let eval = evaluate(&particles, &cfg.phys_params()?, &cfg.numerics(), None).context("static solve")?;
    let rows = force_rows(&particles, &eval);
    let mut w = writer(&dir, "forces.csv")?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = writer(&dir, "energy.csv")?;
    w.serialize(EnergyRow {
        step: 0,
        time_ns: 0.0,
        phi_pn_nm: eval.energy,
        phi_rep_pn_nm: eval.energy_rep,
        phi_total_pn_nm: eval.energy_total(),
        gmres_iterations: eval.field.report.iterations,
        stokes_iterations: 0,
    })?;
    w.flush()?;
    info!("wrote {} force rows to {}", rows.len(), dir.display());
    Ok(rows)
}

/// Column order of `frames.csv`, one row per particle per recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameRow {
    pub step: usize,
    pub time_ns: f64,
    pub particle: usize,
    pub x_nm: f64,
    pub y_nm: f64,
    pub theta_rad: f64,
    pub force_pn: f64,
    pub torque_pn_nm: f64,
    pub phi_pn_nm: f64,
    pub phi_rep_pn_nm: f64,
    pub phi_total_pn_nm: f64,
    pub gmres_iterations: usize,
    pub stokes_iterations: usize,
}

fn frame_rows(state: &SimState) -> impl Iterator<Item = FrameRow> + '_ {
    let e = &state.eval;
    state.particles.iter().enumerate().map(move |(i, p)| FrameRow {
        step: state.step,
        time_ns: state.time,
        particle: i,
        x_nm: p.center.x,
        y_nm: p.center.y,
        theta_rad: p.theta,
        force_pn: e.ft.total_force(i).norm(),
        torque_pn_nm: e.ft.total_torque(i),
        phi_pn_nm: e.energy,
        phi_rep_pn_nm: e.energy_rep,
        phi_total_pn_nm: e.energy_total(),
        gmres_iterations: state.iterations.0,
        stokes_iterations: state.iterations.1,
    })
}

fn energy_row(state: &SimState) -> EnergyRow {
    EnergyRow {
        step: state.step,
        time_ns: state.time,
        phi_pn_nm: state.eval.energy,
        phi_rep_pn_nm: state.eval.energy_rep,
        phi_total_pn_nm: state.energy_total(),
        gmres_iterations: state.iterations.0,
        stokes_iterations: state.iterations.1,
    }
}

#[derive(Debug, Serialize)]
struct RunInfo {
    seed: u64,
    n_particles: usize,
    n_steps: usize,
    dt_ns: f64,
    stride: usize,
    completed_steps: usize,
    final_time_ns: f64,
    final_phi_total_pn_nm: f64,
}

/// Time integration. Frames are flushed as they are written so a failed run
/// leaves everything up to the last good step on disk.
pub fn simulate(path: &Path, ov: &Overrides) -> Result<SimState> {
    let (cfg, dir) = prepare(path, ov)?;
    let seed = cfg.seed.unwrap_or(0);
    let particles = cfg.build_particles(seed)?;
    let params = cfg.dynamics_params(&particles)?;
    let stride = cfg.output.stride;
    let n_steps = cfg.dynamics.n_steps;

    let mut frames = writer(&dir, "frames.csv")?;
    let mut energy = writer(&dir, "energy.csv")?;
    let mut state = SimState::new(particles, &params).context("initial solve")?;
    for r in frame_rows(&state) {
        frames.serialize(r)?;
    }
    frames.flush()?;
    energy.serialize(energy_row(&state))?;
    energy.flush()?;

    let mut failure = None;
    for _ in 0..n_steps {
        match dynamics::step(&state, &params) {
            Ok(next) => state = next,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        energy.serialize(energy_row(&state))?;
        if state.step % stride == 0 || state.step == n_steps {
            for r in frame_rows(&state) {
                frames.serialize(r)?;
            }
            frames.flush()?;
            energy.flush()?;
            info!("step {} t={:.4} ns Φ_total={:.6}", state.step, state.time, state.energy_total());
        }
    }
    frames.flush()?;
    energy.flush()?;

    let info = RunInfo {
        seed,
        n_particles: state.particles.len(),
        n_steps,
        dt_ns: params.dt,
        stride,
        completed_steps: state.step,
        final_time_ns: state.time,
        final_phi_total_pn_nm: state.energy_total(),
    };
    fs::write(dir.join("run_info.toml"), toml::to_string(&info)?)?;
    let mut snapshot = cfg.clone();
    snapshot.generator = None;
    snapshot.particles = state.particles.iter().map(ParticleConfig::from_particle).collect();
    fs::write(dir.join("final_state.toml"), snapshot.to_toml()?)?;

    if let Some(e) = failure {
        return Err(e).context(format!("simulation stopped after step {}", state.step));
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Bend,
    Tilt,
    Stretch,
    Pairwise,
}

#[derive(Debug, Serialize)]
struct FitParamRow<'a> {
    series: &'a str,
    model: &'a str,
    name: &'a str,
    value: f64,
    unit: &'a str,
    residual: f64,
}

#[derive(Debug, Serialize)]
struct SeriesRow<'a> {
    series: &'a str,
    x: f64,
    y: f64,
}

fn write_fits(dir: &Path, fits: &[(String, &FitResult)]) -> Result<()> {
    let mut w = writer(dir, "fit.csv")?;
    for (series, f) in fits {
        for (name, value, unit) in &f.params {
            w.serialize(FitParamRow {
                series,
                model: &f.model,
                name,
                value: *value,
                unit,
                residual: f.residual,
            })?;
        }
    }
    w.flush()?;
    let mut w = writer(dir, "series.csv")?;
    for (series, f) in fits {
        for (&x, &y) in f.x.iter().zip(&f.y) {
            w.serialize(SeriesRow { series, x, y })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn shape(cfg: &RunConfig, default: Shape) -> Shape {
    let e = cfg.experiment.clone().unwrap_or_default();
    Shape {
        a: e.a_nm.unwrap_or(default.a),
        b: e.b_nm.unwrap_or(default.b),
        p: e.p.unwrap_or(default.p),
    }
}

fn minimize_opts(cfg: &RunConfig, mut m: MinimizeOptions) -> MinimizeOptions {
    let e = cfg.experiment.clone().unwrap_or_default();
    m.max_iter = e.max_iter.unwrap_or(m.max_iter);
    m.tol = e.force_tol_pn.unwrap_or(m.tol);
    m
}

fn numerics_or(cfg: &RunConfig, explicit: bool, default: Numerics) -> Numerics {
    if explicit {
        cfg.numerics()
    } else {
        default
    }
}

/// Runs a named elasticity or pairwise harness, writing `fit.csv` and
/// `series.csv`. Numerics in the config are used only when `[numerics]` is
/// present; otherwise each harness keeps its own coarser defaults.
pub fn experiment(name: Experiment, path: &Path, ov: &Overrides) -> Result<Vec<FitResult>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let explicit_numerics = toml::from_str::<toml::Table>(&text)?.contains_key("numerics");
    let (cfg, dir) = prepare(path, ov)?;
    let phys = cfg.phys_params()?;
    let e = cfg.experiment.clone().unwrap_or_default();
    let fits: Vec<(String, FitResult)> = match name {
        Experiment::Bend => {
            let d = experiments::BendingOptions::default();
            let opts = experiments::BendingOptions {
                n_per_leaflet: e.n_per_leaflet.unwrap_or(d.n_per_leaflet),
                shape: shape(&cfg, d.shape),
                spacing: e.spacing_nm.unwrap_or(d.spacing),
                half_thickness: e.half_thickness_nm.unwrap_or(d.half_thickness),
                load: e.load_pn_per_nm2.unwrap_or(d.load),
                clamped_pairs: e.clamped_pairs.unwrap_or(d.clamped_pairs),
                phys,
                numerics: numerics_or(&cfg, explicit_numerics, d.numerics),
                minimize: minimize_opts(&cfg, d.minimize),
            };
            let r = experiments::bending_experiment(&opts)?;
            if !r.relaxed.converged {
                warn!("minimization stopped at max force {:.3e} pN", r.relaxed.max_force);
            }
            vec![("bend".into(), r.fit)]
        }
        Experiment::Tilt => {
            let d = experiments::TiltOptions::default();
            let opts = experiments::TiltOptions {
                n_per_leaflet: e.n_per_leaflet.unwrap_or(d.n_per_leaflet),
                shape: shape(&cfg, d.shape),
                spacing: e.spacing_nm.unwrap_or(d.spacing),
                half_thickness: e.half_thickness_nm.unwrap_or(d.half_thickness),
                alpha0: e.alpha0_deg.map_or(d.alpha0, f64::to_radians),
                alpha1: e.alpha1_deg.map_or(d.alpha1, f64::to_radians),
                phys,
                numerics: numerics_or(&cfg, explicit_numerics, d.numerics),
                minimize: minimize_opts(&cfg, d.minimize),
            };
            let r = experiments::tilt_experiment(&opts)?;
            if !r.monotone {
                warn!("tilt profile is not monotone");
            }
            vec![("tilt".into(), r.fit)]
        }
        Experiment::Stretch => {
            let d = experiments::StretchOptions::default();
            let opts = experiments::StretchOptions {
                sizes: e.sizes.clone().unwrap_or(d.sizes),
                shape: shape(&cfg, d.shape),
                spacing: e.spacing_nm.unwrap_or(d.spacing),
                half_thickness: e.half_thickness_nm.unwrap_or(d.half_thickness),
                offsets: e.offsets_nm.clone().unwrap_or(d.offsets),
                stiffness: e.bond_stiffness_pn_per_nm.unwrap_or(d.stiffness),
                phys,
                numerics: numerics_or(&cfg, explicit_numerics, d.numerics),
                minimize: minimize_opts(&cfg, d.minimize),
            };
            let r = experiments::stretching_experiment(&opts)?;
            println!(
                "k_A mean {:.3} kBT/nm^2, spread {:.1}%, collapse rms {:.1}%",
                r.k_a_mean,
                100.0 * r.spread,
                100.0 * r.collapse_rms
            );
            r.curves.into_iter().map(|c| (format!("N{}", c.n), c.fit)).collect()
        }
        Experiment::Pairwise => {
            let d = experiments::PairwiseOptions::default();
            let opts = experiments::PairwiseOptions {
                configs: e.configs.unwrap_or(d.configs),
                particles: e.particles_per_config.unwrap_or(d.particles),
                shape: shape(&cfg, d.shape),
                side: e.box_nm.unwrap_or(d.side),
                min_gap: e.min_gap_nm.unwrap_or(d.min_gap),
                seed: cfg.seed.unwrap_or(d.seed),
                phys,
                numerics: numerics_or(&cfg, explicit_numerics, d.numerics),
            };
            let results = experiments::pairwise_experiment(&opts)?;
            let rel: Vec<f64> = results.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.rel_diff)).collect();
            let med = experiments::median(&rel);
            let x: Vec<f64> = (0..rel.len()).map(|i| i as f64).collect();
            let fit = FitResult {
                model: "rel_diff = |F_full - F_pair| / |F_full|".into(),
                params: vec![
                    ("median_rel_diff".into(), med, "1".into()),
                    (
                        "fraction_above_0.2".into(),
                        rel.iter().filter(|&&r| r > 0.2).count() as f64 / rel.len().max(1) as f64,
                        "1".into(),
                    ),
                ],
                residual: 0.0,
                x,
                y: rel,
            };
            vec![("pairwise".into(), fit)]
        }
    };
    for (series, f) in &fits {
        for (n, v, u) in &f.params {
            println!("{series:>10} {n:>24} = {v:.6} {u}");
        }
    }
    let refs: Vec<(String, &FitResult)> = fits.iter().map(|(s, f)| (s.clone(), f)).collect();
    write_fits(&dir, &refs)?;
    Ok(fits.into_iter().map(|(_, f)| f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingCsvRow {
    pub n: usize,
    pub nodes: usize,
    pub gmres_iterations: usize,
    pub stokes_iterations: usize,
    pub total_s: f64,
    pub gmres_s: f64,
    pub gmres_fraction: f64,
}

/// Wall time of one mobility step for each `n`.
pub fn scaling(ns: &[usize], ov: &Overrides) -> Result<Vec<ScalingCsvRow>> {
    if ns.is_empty() {
        bail!("give at least one particle count");
    }
    let mut numerics = Numerics::default();
    if let Some(tol) = ov.tol {
        numerics.solver.gmres_tol = tol;
    }
    let seed = ov.seed.unwrap_or(1);
    println!("{:>6} {:>7} {:>6} {:>6} {:>10} {:>10} {:>6}", "N", "nodes", "it_y", "it_s", "total_s", "gmres_s", "frac");
    let mut rows = Vec::new();
    for &n in ns {
        let r = experiments::scaling_row(n, seed, &numerics)?;
        let row = ScalingCsvRow {
            n,
            nodes: r.nodes,
            gmres_iterations: r.iterations.0,
            stokes_iterations: r.iterations.1,
            total_s: r.total,
            gmres_s: r.gmres,
            gmres_fraction: r.gmres / r.total,
        };
        println!(
            "{:>6} {:>7} {:>6} {:>6} {:>10.3} {:>10.3} {:>6.2}",
            row.n, row.nodes, row.gmres_iterations, row.stokes_iterations, row.total_s, row.gmres_s, row.gmres_fraction
        );
        rows.push(row);
    }
    if rows.len() >= 2 {
        let n: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.total_s).collect();
        let (alpha, _) = experiments::fit_power_law(&n, &t)?;
        println!("fitted exponent: time ~ N^{alpha:.2}");
    }
    if let Some(dir) = &ov.out {
        fs::create_dir_all(dir)?;
        let mut w = writer(dir, "scaling.csv")?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(rows)
}
