//! Run configuration. All physical inputs carry their unit in the key name:
//! lengths in nm, times in ns (or the characteristic time `[T]` where the key
//! says `_t`), forces in pN, viscosity in cP, angles in radians unless the key
//! ends in `_deg`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use janus_core::dynamics::{wrap_angle, DynamicsParams, Integrator};
use janus_core::experiments::{random_configuration, Shape};
use janus_core::geometry::{min_gap, LabelConvention, Particle};
use janus_core::layerpot::QbxOptions;
use janus_core::physics::PhysParams;
use janus_core::solver::{Numerics, SolverOptions};
use janus_core::units::cp_to_internal;
use janus_core::Vec2;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub particles: Vec<ParticleConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    #[default]
    HalfAngle,
    FullAngle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub gamma_pn_per_nm: f64,
    pub rho_nm: f64,
    pub c0_pn_nm4: f64,
    pub q: u32,
    pub viscosity_cp: f64,
    #[serde(default)]
    pub label: Label,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        let p = PhysParams::default();
        Self {
            gamma_pn_per_nm: p.gamma,
            rho_nm: p.rho,
            c0_pn_nm4: p.c0,
            q: p.q,
            viscosity_cp: 1.0,
            label: Label::HalfAngle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub n_pan: usize,
    pub n_gl: usize,
    pub qbx_order: usize,
    pub gmres_tol: f64,
    /// Reserved for a fast-multipole backend; only `false` is accepted.
    #[serde(default)]
    pub fmm: bool,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let n = Numerics::default();
        Self {
            n_pan: n.n_pan,
            n_gl: n.n_gl,
            qbx_order: n.solver.qbx.order,
            gmres_tol: n.solver.gmres_tol,
            fmm: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    #[default]
    Mobility,
    Drag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub integrator: IntegratorKind,
    /// Time step in units of `[T] = mu a / gamma`, with `a` the first
    /// particle's semi-major axis.
    pub dt_t: f64,
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_x_pn_ns_per_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_theta_pn_ns_nm: Option<f64>,
    pub max_halvings: u32,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorKind::Mobility,
            dt_t: 1.0,
            n_steps: 100,
            xi_x_pn_ns_per_nm: None,
            xi_theta_pn_ns_nm: None,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub x_nm: f64,
    pub y_nm: f64,
    pub theta_rad: f64,
    pub a_nm: f64,
    pub b_nm: f64,
    pub p: u32,
}

impl ParticleConfig {
    pub fn from_particle(p: &Particle) -> Self {
        Self {
            x_nm: p.center.x,
            y_nm: p.center.y,
            theta_rad: p.theta,
            a_nm: p.a,
            b_nm: p.b,
            p: p.p,
        }
    }

    fn build(&self) -> janus_core::Result<Particle> {
        Particle::new(Vec2::new(self.x_nm, self.y_nm), self.theta_rad, self.a_nm, self.b_nm, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// `rows x cols` lattice with orientations drawn from a normal
    /// distribution about zero.
    Grid {
        rows: usize,
        cols: usize,
        spacing_nm: f64,
        theta_sigma_deg: f64,
        a_nm: f64,
        b_nm: f64,
        p: u32,
    },
    /// Uniform positions in a square box with uniform orientations.
    Random {
        n: usize,
        box_nm: f64,
        min_gap_nm: f64,
        a_nm: f64,
        b_nm: f64,
        p: u32,
    },
}

/// Optional overrides of experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_leaflet: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_thickness_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_pn_per_nm2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamped_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets_nm: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond_stiffness_pn_per_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles_per_config: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_tol_pn: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            physics: PhysicsConfig::default(),
            numerics: NumericsConfig::default(),
            dynamics: DynamicsConfig::default(),
            output: OutputConfig::default(),
            generator: None,
            experiment: None,
            particles: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if self.numerics.fmm {
            bail!("numerics.fmm is reserved; only direct summation is available");
        }
        if self.output.stride == 0 {
            bail!("output.stride must be at least 1");
        }
        if !(self.dynamics.dt_t > 0.0) {
            bail!("dynamics.dt_t must be positive");
        }
        if self.physics.viscosity_cp <= 0.0 {
            bail!("physics.viscosity_cp must be positive");
        }
        self.phys_params()?;
        Ok(())
    }

    pub fn phys_params(&self) -> Result<PhysParams> {
        let p = &self.physics;
        let mut params = PhysParams::new(p.gamma_pn_per_nm, p.rho_nm, p.c0_pn_nm4, p.q)?;
        params.label = match p.label {
            Label::HalfAngle => LabelConvention::HalfAngle,
            Label::FullAngle => LabelConvention::FullAngle,
        };
        Ok(params)
    }

    pub fn numerics(&self) -> Numerics {
        let n = &self.numerics;
        Numerics {
            n_pan: n.n_pan,
            n_gl: n.n_gl,
            solver: SolverOptions {
                gmres_tol: n.gmres_tol,
                qbx: QbxOptions {
                    order: n.qbx_order,
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn viscosity(&self) -> f64 {
        cp_to_internal(self.physics.viscosity_cp)
    }

    pub fn dynamics_params(&self, particles: &[Particle]) -> Result<DynamicsParams> {
        let a = particles.first().map(|p| p.a).unwrap_or(1.0);
        let mut d = DynamicsParams::new(self.phys_params()?, self.numerics(), self.viscosity(), a);
        d.dt *= self.dynamics.dt_t;
        d.max_halvings = self.dynamics.max_halvings;
        d.mobility_tol = self.numerics.gmres_tol;
        d.integrator = match self.dynamics.integrator {
            IntegratorKind::Mobility => Integrator::Mobility,
            IntegratorKind::Drag => Integrator::Drag {
                xi_x: self.dynamics.xi_x_pn_ns_per_nm,
                xi_theta: self.dynamics.xi_theta_pn_ns_nm,
            },
        };
        Ok(d)
    }

    /// Explicit particles, or the generator's output for `seed`.
    pub fn build_particles(&self, seed: u64) -> Result<Vec<Particle>> {
        let particles = match (&self.generator, self.particles.is_empty()) {
            (Some(_), false) => bail!("give either [[particles]] or [generator], not both"),
            (None, true) => bail!("configuration has no particles"),
            (None, false) => self
                .particles
                .iter()
                .map(|p| p.build())
                .collect::<janus_core::Result<Vec<_>>>()?,
            (Some(g), true) => generate(g, seed)?,
        };
        janus_core::geometry::check_overlaps(&particles)?;
        Ok(particles)
    }
}

fn generate(g: &GeneratorConfig, seed: u64) -> Result<Vec<Particle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *g {
        GeneratorConfig::Grid {
            rows,
            cols,
            spacing_nm,
            theta_sigma_deg,
            a_nm,
            b_nm,
            p,
        } => {
            let normal = Normal::new(0.0, theta_sigma_deg.to_radians()).context("theta_sigma_deg")?;
            let mut v = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    let center = Vec2::new(c as f64 * spacing_nm, r as f64 * spacing_nm);
                    let theta = wrap_angle(normal.sample(&mut rng));
                    v.push(Particle::new(center, theta, a_nm, b_nm, p)?);
                }
            }
            if let Some((i, j, gap)) = min_gap(&v).filter(|g| g.2 <= 0.0) {
                bail!("grid spacing too small: particles {i} and {j} have gap {gap:.3} nm");
            }
            Ok(v)
        }
        GeneratorConfig::Random {
            n,
            box_nm,
            min_gap_nm,
            a_nm,
            b_nm,
            p,
        } => {
            let shape = Shape { a: a_nm, b: b_nm, p };
            Ok(random_configuration(&mut rng, n, shape, box_nm, min_gap_nm)?)
        }
    }
}
