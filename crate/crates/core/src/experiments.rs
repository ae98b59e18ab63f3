//! Elasticity measurements on equilibrium particle assemblies, and the
//! pairwise-approximation study.
//!
//! Energies of the planar model are per unit depth, so a modulus that comes
//! out in pN·nm per nm of depth is reported in k_BT with depth taken as 1 nm.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::dynamics::{minimize, ExtraPotential, Freedom, MinimizeOptions, MinimizeResult, CLAMPED, FREE};
use crate::error::{Error, Result};
use crate::geometry::{min_gap, Particle};
use crate::physics::{pairwise_compare, PairwiseRow, PhysParams};
use crate::solver::Numerics;
use crate::units::KBT;
use crate::Vec2;

/// A fitted model with its data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: String,
    /// `(name, value, unit)`.
    pub params: Vec<(String, f64, String)>,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.0 == name).map(|p| p.1)
    }
}

fn param(name: &str, value: f64, unit: &str) -> (String, f64, String) {
    (name.to_string(), value, unit.to_string())
}

/// Least-squares polynomial coefficients, lowest degree first.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<(Vec<f64>, f64)> {
    if x.len() != y.len() || x.len() <= degree {
        return Err(Error::InvalidParameter(format!(
            "{} points cannot determine a degree-{degree} polynomial",
            x.len()
        )));
    }
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Experiment(e.to_string()))?;
    let r = &a * &coef - b;
    Ok((coef.iter().copied().collect(), (r.norm_squared() / x.len() as f64).sqrt()))
}

pub fn polyval(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Whether a sequence is monotone within `tol`.
pub fn is_monotone(y: &[f64], tol: f64) -> bool {
    let up = y.windows(2).all(|w| w[1] >= w[0] - tol);
    let down = y.windows(2).all(|w| w[1] <= w[0] + tol);
    up || down
}

fn sinh_profile(x: f64, alpha1: f64, len: f64, lambda: f64) -> f64 {
    // Ratio of sinh written to stay finite for small lambda.
    let e = ((x - len) / lambda).exp();
    alpha1 * e * (1.0 - (-2.0 * x / lambda).exp()) / (1.0 - (-2.0 * len / lambda).exp())
}

/// Fits `alpha(x) = alpha1 sinh(x/lambda) / sinh(L/lambda)` for lambda by
/// golden-section search on `log lambda`.
pub fn fit_tilt_decay(x: &[f64], alpha: &[f64], alpha1: f64, len: f64) -> (f64, f64) {
    let sse = |log_l: f64| -> f64 {
        let l = log_l.exp();
        x.iter().zip(alpha).map(|(&x, &a)| (sinh_profile(x, alpha1, len, l) - a).powi(2)).sum()
    };
    // Coarse scan, then refine around the best bracket.
    let (lo, hi, m) = ((len * 1e-3).ln(), (len * 1e2).ln(), 200);
    let grid: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
    let best = (0..=m).min_by(|&i, &j| sse(grid[i]).total_cmp(&sse(grid[j]))).unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(m)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let l = 0.5 * (a + b);
    (l.exp(), (sse(l) / x.len().max(1) as f64).sqrt())
}

/// Shape of one amphiphile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub a: f64,
    pub b: f64,
    pub p: u32,
}

impl Shape {
    pub fn ellipse(a: f64, b: f64, p: u32) -> Self {
        Self { a, b, p }
    }

    fn at(&self, center: Vec2, theta: f64) -> Result<Particle> {
        Particle::new(center, theta, self.a, self.b, self.p)
    }
}

/// Flat bilayer along `x`: indices `0..n` form the lower leaflet with tails
/// up, `n..2n` the upper leaflet with tails down, both ordered by `x`.
/// Leaflet centres sit at `y = ±half_thickness`.
pub fn flat_bilayer(n: usize, shape: Shape, spacing: f64, half_thickness: f64) -> Result<Vec<Particle>> {
    let mut v = Vec::with_capacity(2 * n);
    for i in 0..n {
        v.push(shape.at(Vec2::new(i as f64 * spacing, -half_thickness), PI / 2.0)?);
    }
    for i in 0..n {
        v.push(shape.at(Vec2::new(i as f64 * spacing, half_thickness), -PI / 2.0)?);
    }
    Ok(v)
}

/// Midplane points: each lower-leaflet particle is paired with the
/// upper-leaflet particle nearest in `x`, and the pair's midpoint is taken.
/// Points are sorted by `x`.
pub fn midplane(lower: &[Particle], upper: &[Particle]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = lower
        .iter()
        .filter_map(|p| {
            upper
                .iter()
                .min_by(|u, w| (u.center.x - p.center.x).abs().total_cmp(&(w.center.x - p.center.x).abs()))
                .map(|q| (p.center + q.center) / 2.0)
        })
        .collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    pts
}

/// Fails if any leaflet neighbour distance grew beyond twice the
/// initial spacing, or the leaflets separated.
fn check_intact(particles: &[Particle], n: usize, spacing: f64, half_thickness: f64) -> Result<()> {
    for leaflet in [&particles[..n], &particles[n..]] {
        for w in leaflet.windows(2) {
            let d = (w[1].center - w[0].center).norm();
            if d > 2.0 * spacing {
                return Err(Error::Experiment(format!(
                    "bilayer came apart: neighbour distance {d:.3} nm against spacing {spacing:.3} nm"
                )));
            }
        }
    }
    for (lo, up) in particles[..n].iter().zip(&particles[n..]) {
        let d = (up.center - lo.center).norm();
        if d > 4.0 * half_thickness {
            return Err(Error::Experiment(format!("leaflets separated to {d:.3} nm")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BendingOptions {
    /// Particles per leaflet.
    pub n_per_leaflet: usize,
    pub shape: Shape,
    pub spacing: f64,
    pub half_thickness: f64,
    /// Load strength `k` in pN/nm².
    pub load: f64,
    /// Number of particle pairs clamped at the left end.
    pub clamped_pairs: usize,
    pub phys: PhysParams,
    pub numerics: Numerics,
    pub minimize: MinimizeOptions,
}

impl Default for BendingOptions {
    fn default() -> Self {
        Self {
            n_per_leaflet: 15,
            shape: Shape::ellipse(1.25, 0.8, 6),
            spacing: 2.5,
            half_thickness: 1.58,
            load: 0.0116,
            clamped_pairs: 2,
            phys: PhysParams::default(),
            numerics: Numerics {
                n_pan: 12,
                ..Default::default()
            },
            minimize: MinimizeOptions {
                tol: 2e-3,
                max_iter: 400,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BendingResult {
    pub fit: FitResult,
    pub relaxed: MinimizeResult,
}

/// Loads a clamped bilayer, minimizes `Φ_total - Σ k̃ y_i` and fits the
/// midplane. For `y = (k L^4 / 2 k_B)[(x/L)^4/24 - ...]` the quartic
/// coefficient is `k / (48 k_B)`, so `k_B = k / (48 c_4)`.
pub fn bending_experiment(opts: &BendingOptions) -> Result<BendingResult> {
    let n = opts.n_per_leaflet;
    if opts.clamped_pairs == 0 || opts.clamped_pairs + 4 > n {
        return Err(Error::InvalidParameter("need at least one clamped pair and four free pairs".into()));
    }
    let particles = flat_bilayer(n, opts.shape, opts.spacing, opts.half_thickness)?;
    let len = (n - 1) as f64 * opts.spacing;
    let k_tilde = len * opts.load / (2 * n) as f64;
    let mut freedom: Vec<Freedom> = vec![FREE; 2 * n];
    for i in 0..opts.clamped_pairs {
        freedom[i] = CLAMPED;
        freedom[n + i] = CLAMPED;
    }
    let mut loads = vec![k_tilde; 2 * n];
    for (l, f) in loads.iter_mut().zip(&freedom) {
        if *f == CLAMPED {
            *l = 0.0;
        }
    }
    let mopts = MinimizeOptions {
        freedom,
        extra: ExtraPotential::Load(loads),
        ..opts.minimize.clone()
    };
    let relaxed = minimize(particles, &opts.phys, &opts.numerics, &mopts)?;
    check_intact(&relaxed.particles, n, opts.spacing, opts.half_thickness)?;
    let mid = midplane(&relaxed.particles[..n], &relaxed.particles[n..]);
    let origin = mid[0];
    let x: Vec<f64> = mid.iter().map(|p| p.x - origin.x).collect();
    let y: Vec<f64> = mid.iter().map(|p| p.y - origin.y).collect();
    let (coef, residual) = polyfit(&x, &y, 4)?;
    let c4 = coef[4];
    let span = x.last().copied().unwrap_or(0.0);
    let k_b = opts.load / (48.0 * c4);
    let fit = FitResult {
        model: "y = c0 + c1 x + c2 x^2 + c3 x^3 + c4 x^4".into(),
        params: vec![
            param("c0", coef[0], "nm"),
            param("c1", coef[1], "1"),
            param("c2", coef[2], "1/nm"),
            param("c3", coef[3], "1/nm^2"),
            param("c4", c4, "1/nm^3"),
            param("L", span, "nm"),
            param("k_tilde", k_tilde, "pN"),
            param("k_B", k_b, "pN nm"),
            param("k_B_kbt", k_b / KBT, "kBT"),
        ],
        residual,
        x,
        y,
    };
    Ok(BendingResult { fit, relaxed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltOptions {
    pub n_per_leaflet: usize,
    pub shape: Shape,
    pub spacing: f64,
    pub half_thickness: f64,
    /// Imposed tilt of the left and right end pairs, in radians.
    pub alpha0: f64,
    pub alpha1: f64,
    pub phys: PhysParams,
    pub numerics: Numerics,
    pub minimize: MinimizeOptions,
}

impl Default for TiltOptions {
    fn default() -> Self {
        Self {
            n_per_leaflet: 15,
            shape: Shape::ellipse(1.25, 0.3125, 6),
            spacing: 1.35,
            half_thickness: 1.75,
            alpha0: 0.0,
            alpha1: 30f64.to_radians(),
            phys: PhysParams::default(),
            numerics: Numerics {
                n_pan: 12,
                ..Default::default()
            },
            minimize: MinimizeOptions {
                tol: 2e-3,
                max_iter: 400,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TiltResult {
    pub fit: FitResult,
    pub monotone: bool,
    pub relaxed: MinimizeResult,
}

/// Signed angle between `-d` and the outward leaflet normal, for a particle
/// whose untilted orientation is `theta0`.
fn tilt_angle(p: &Particle, theta0: f64) -> f64 {
    crate::dynamics::wrap_angle(p.theta - theta0)
}

/// Pins the end pairs at tilts `alpha0` and `alpha1`, minimizes, and fits the
/// decay length of the tilt profile.
pub fn tilt_experiment(opts: &TiltOptions) -> Result<TiltResult> {
    let n = opts.n_per_leaflet;
    if n < 4 {
        return Err(Error::InvalidParameter("tilt experiment needs at least four pairs".into()));
    }
    let mut particles = flat_bilayer(n, opts.shape, opts.spacing, opts.half_thickness)?;
    for (i, alpha) in [(0, opts.alpha0), (n - 1, opts.alpha1)] {
        particles[i].theta += alpha;
        particles[n + i].theta += alpha;
    }
    if let Some((i, j, g)) = min_gap(&particles).filter(|g| g.2 <= 0.0) {
        return Err(Error::Collision(i, j, g));
    }
    let mut freedom = vec![FREE; 2 * n];
    for i in [0, n - 1, n, 2 * n - 1] {
        freedom[i] = CLAMPED;
    }
    let mopts = MinimizeOptions {
        freedom,
        ..opts.minimize.clone()
    };
    let relaxed = minimize(particles, &opts.phys, &opts.numerics, &mopts)?;
    check_intact(&relaxed.particles, n, opts.spacing, opts.half_thickness)?;
    let x0 = relaxed.particles[0].center.x;
    let len = relaxed.particles[n - 1].center.x - x0;
    let mut data: Vec<(f64, f64)> = relaxed
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let theta0 = if i < n { PI / 2.0 } else { -PI / 2.0 };
            (p.center.x - x0, tilt_angle(p, theta0))
        })
        .collect();
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (x, y): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
    let (lambda, residual) = fit_tilt_decay(&x, &y, opts.alpha1, len);
    // Average the two leaflets at each pair position before testing monotonicity.
    let pair_means: Vec<f64> = (0..n)
        .map(|i| 0.5 * (tilt_angle(&relaxed.particles[i], PI / 2.0) + tilt_angle(&relaxed.particles[n + i], -PI / 2.0)))
        .collect();
    let monotone = is_monotone(&pair_means, 1e-2 * opts.alpha1.abs().max(1e-3));
    let fit = FitResult {
        model: "alpha = alpha1 sinh(x/lambda) / sinh(L/lambda)".into(),
        params: vec![
            param("lambda", lambda, "nm"),
            param("alpha1", opts.alpha1, "rad"),
            param("L", len, "nm"),
        ],
        residual,
        x,
        y,
    };
    Ok(TiltResult { fit, monotone, relaxed })
}

/// Circular bilayer of `n` particles around the origin with midplane radius
/// `r`. The outer leaflet points its tails inward and the inner leaflet
/// outward; counts are split in proportion to the leaflet circumferences.
/// Returns the particles and the outer-leaflet count (outer particles first).
pub fn ring_bilayer(n: usize, shape: Shape, r: f64, half_thickness: f64) -> Result<(Vec<Particle>, usize)> {
    if r <= half_thickness {
        return Err(Error::InvalidParameter("ring radius must exceed the half thickness".into()));
    }
    let n_out = ((n as f64) * (r + half_thickness) / (2.0 * r)).round() as usize;
    let n_in = n - n_out;
    let mut v = Vec::with_capacity(n);
    for (count, radius, inward) in [(n_out, r + half_thickness, true), (n_in, r - half_thickness, false)] {
        for k in 0..count {
            let phi = 2.0 * PI * (k as f64 + 0.5) / count as f64;
            let c = Vec2::new(phi.cos(), phi.sin()) * radius;
            let theta = if inward { phi + PI } else { phi };
            v.push(shape.at(c, crate::dynamics::wrap_angle(theta))?);
        }
    }
    Ok((v, n_out))
}

/// Midplane radius: mean of the two leaflets' mean radii about the centroid.
pub fn ring_radius(particles: &[Particle], n_out: usize) -> f64 {
    let c = particles.iter().fold(Vec2::zeros(), |s, p| s + p.center) / particles.len() as f64;
    let mean = |ps: &[Particle]| ps.iter().map(|p| (p.center - c).norm()).sum::<f64>() / ps.len() as f64;
    0.5 * (mean(&particles[..n_out]) + mean(&particles[n_out..]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StretchOptions {
    pub sizes: Vec<usize>,
    pub shape: Shape,
    /// Spacing used to size the initial ring.
    pub spacing: f64,
    pub half_thickness: f64,
    /// Radius offsets imposed by the bond, in nm.
    pub offsets: Vec<f64>,
    /// Bond stiffness in pN/nm.
    pub stiffness: f64,
    pub phys: PhysParams,
    pub numerics: Numerics,
    pub minimize: MinimizeOptions,
}

impl Default for StretchOptions {
    fn default() -> Self {
        Self {
            sizes: vec![26, 60, 92],
            shape: Shape::ellipse(1.25, 0.8, 6),
            spacing: 2.5,
            half_thickness: 1.58,
            offsets: vec![-0.2, -0.1, 0.1, 0.2],
            stiffness: 20.0,
            phys: PhysParams::default(),
            numerics: Numerics {
                n_pan: 8,
                ..Default::default()
            },
            minimize: MinimizeOptions {
                tol: 5e-3,
                max_iter: 300,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct StretchCurve {
    pub n: usize,
    pub r0: f64,
    /// `(r - r0, ΔΦ_total)` pairs, including the origin.
    pub fit: FitResult,
    pub k_a: f64,
}

#[derive(Debug, Clone)]
pub struct StretchResult {
    pub curves: Vec<StretchCurve>,
    pub k_a_mean: f64,
    /// `(max - min) / mean` of the fitted moduli.
    pub spread: f64,
    /// Relative RMS deviation of the `r0`-scaled curves from their common fit.
    pub collapse_rms: f64,
}

/// Smallest ring, starting from the size implied by `spacing`, whose
/// particles are all at least 0.15 nm apart.
fn initial_ring(n: usize, opts: &StretchOptions) -> Result<(Vec<Particle>, usize)> {
    let mut r = (n as f64 * opts.spacing / (4.0 * PI)).max(opts.half_thickness + opts.shape.a);
    for _ in 0..200 {
        let (ring, n_out) = ring_bilayer(n, opts.shape, r, opts.half_thickness)?;
        if min_gap(&ring).is_some_and(|g| g.2 >= 0.15) {
            let n_in = n - n_out;
            if (n_out as f64 / n_in.max(1) as f64 - (r + opts.half_thickness) / (r - opts.half_thickness)).abs() > 0.2 {
                log::warn!("ring of {n}: leaflet counts {n_out}/{n_in} may not relax to a circle");
            }
            return Ok((ring, n_out));
        }
        r += 0.25;
    }
    Err(Error::Experiment(format!("no collision-free ring of {n} particles")))
}

/// For each ring size: relax to the equilibrium radius, push the radius off
/// equilibrium with a harmonic bond, and fit `ΔΦ r0 = c (r - r0)^2`. Since the
/// two-leaflet stretching energy per length is `2 pi k_A (r - r0)^2 / r0`,
/// `k_A = c / (2 pi)`.
pub fn stretching_experiment(opts: &StretchOptions) -> Result<StretchResult> {
    let mut curves = Vec::with_capacity(opts.sizes.len());
    for &n in &opts.sizes {
        let (ring, n_out) = initial_ring(n, opts)?;
        if n_out == n {
            return Err(Error::Experiment(format!("ring of {n} has an empty inner leaflet")));
        }
        let base = minimize(ring, &opts.phys, &opts.numerics, &opts.minimize)?;
        let r0 = ring_radius(&base.particles, n_out);
        let e0 = base.eval.energy_total();
        let centroid = base.particles.iter().fold(Vec2::zeros(), |s, p| s + p.center) / n as f64;
        let mut x = vec![0.0];
        let mut y = vec![0.0];
        for &dr in &opts.offsets {
            let targets = base
                .particles
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p.center - centroid).norm() + dr))
                .collect();
            let mopts = MinimizeOptions {
                extra: ExtraPotential::RadialBond {
                    center: centroid,
                    stiffness: opts.stiffness,
                    targets,
                },
                ..opts.minimize.clone()
            };
            let res = minimize(base.particles.clone(), &opts.phys, &opts.numerics, &mopts)?;
            x.push(ring_radius(&res.particles, n_out) - r0);
            y.push(res.eval.energy_total() - e0);
        }
        let sxx: f64 = x.iter().map(|d| d.powi(4)).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(d, e)| d * d * e * r0).sum();
        let c = sxy / sxx;
        let residual = (x.iter().zip(&y).map(|(d, e)| (e * r0 - c * d * d).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        let k_a = c / (2.0 * PI) / KBT;
        curves.push(StretchCurve {
            n,
            r0,
            fit: FitResult {
                model: "dPhi r0 = c (r - r0)^2".into(),
                params: vec![
                    param("c", c, "pN"),
                    param("r0", r0, "nm"),
                    param("k_A", k_a, "kBT/nm^2"),
                ],
                residual,
                x,
                y,
            },
            k_a,
        });
    }
    let ks: Vec<f64> = curves.iter().map(|c| c.k_a).collect();
    let k_a_mean = ks.iter().sum::<f64>() / ks.len().max(1) as f64;
    let spread = if ks.is_empty() {
        0.0
    } else {
        (ks.iter().cloned().fold(f64::MIN, f64::max) - ks.iter().cloned().fold(f64::MAX, f64::min)) / k_a_mean
    };
    let c_mean = k_a_mean * 2.0 * PI * KBT;
    let (mut num, mut den) = (0.0, 0.0);
    for cv in &curves {
        for (d, e) in cv.fit.x.iter().zip(&cv.fit.y) {
            num += (e * cv.r0 - c_mean * d * d).powi(2);
            den += (c_mean * d * d).powi(2);
        }
    }
    let collapse_rms = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok(StretchResult {
        curves,
        k_a_mean,
        spread,
        collapse_rms,
    })
}

/// `n` particles of `shape` with uniform random centres in a `side x side`
/// box and uniform orientations, with every pairwise gap at least `min_gap`.
pub fn random_configuration(rng: &mut ChaCha8Rng, n: usize, shape: Shape, side: f64, min_gap_nm: f64) -> Result<Vec<Particle>> {
    let mut v: Vec<Particle> = Vec::with_capacity(n);
    let mut attempts = 0;
    while v.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::InvalidParameter(format!("cannot place {n} particles in a box of side {side}")));
        }
        let c = Vec2::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side));
        let p = shape.at(c, rng.gen_range(-PI..PI))?;
        if v.iter().all(|q| crate::geometry::surface_gap(q, &p) >= min_gap_nm) {
            v.push(p);
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseOptions {
    pub configs: usize,
    pub particles: usize,
    pub shape: Shape,
    pub side: f64,
    pub min_gap: f64,
    pub seed: u64,
    pub phys: PhysParams,
    pub numerics: Numerics,
}

impl Default for PairwiseOptions {
    fn default() -> Self {
        Self {
            configs: 20,
            particles: 6,
            shape: Shape::ellipse(1.25, 0.8, 6),
            side: 9.0,
            min_gap: 0.4,
            seed: 7,
            phys: PhysParams::default(),
            numerics: Numerics {
                n_pan: 12,
                ..Default::default()
            },
        }
    }
}

/// Full-versus-pairwise force comparison over seeded random configurations.
pub fn pairwise_experiment(opts: &PairwiseOptions) -> Result<Vec<(Vec<Particle>, Vec<PairwiseRow>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    (0..opts.configs)
        .map(|_| {
            let parts = random_configuration(&mut rng, opts.particles, opts.shape, opts.side, opts.min_gap)?;
            let rows = pairwise_compare(&parts, &opts.phys, &opts.numerics)?;
            Ok((parts, rows))
        })
        .collect()
}

/// Cost of one mobility time step for `n` particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub nodes: usize,
    /// Krylov iterations (screened Laplace, Stokes).
    pub iterations: (usize, usize),
    /// Wall time of the step in seconds.
    pub total: f64,
    /// Part of `total` spent in Krylov iterations.
    pub gmres: f64,
}

/// Times one mobility step of `n` unit disks (`rho = 4`) scattered at random
/// over a square sized to keep the area fraction fixed.
pub fn scaling_row(n: usize, seed: u64, numerics: &Numerics) -> Result<ScalingRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64 * 16.0).sqrt();
    let particles = random_configuration(&mut rng, n, Shape::ellipse(1.0, 1.0, 2), side, 0.5)?;
    let phys = PhysParams {
        rho: 4.0,
        ..PhysParams::default()
    };
    let params = crate::dynamics::DynamicsParams::new(phys, *numerics, crate::units::WATER_VISCOSITY, 1.0);
    let state = crate::dynamics::SimState::new(particles, &params)?;
    let start = std::time::Instant::now();
    let next = crate::dynamics::step(&state, &params)?;
    let total = start.elapsed().as_secs_f64();
    Ok(ScalingRow {
        n,
        nodes: state.eval.disc.len(),
        iterations: next.iterations,
        total,
        gmres: next.eval.field.report.wall_time + next.stokes_gmres_time,
    })
}

/// Least-squares exponent `alpha` of `t = c n^alpha`.
pub fn fit_power_law(n: &[f64], t: &[f64]) -> Result<(f64, f64)> {
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let (c, _) = polyfit(&x, &y, 1)?;
    Ok((c[1], c[0].exp()))
}

/// Median of a sample.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => s[n / 2],
        _ => 0.5 * (s[n / 2 - 1] + s[n / 2]),
    }
}
