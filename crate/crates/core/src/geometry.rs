//! Particle shapes and the panel-based Nyström grid.
//!
//! Each particle is an ellipse `X(t) = a_i + A cos t d + B sin t n_d` with
//! director `d = (cos theta, sin theta)` and `n_d = d^perp`. Panels are intervals
//! in the parameter `t`; every panel carries `n_gl` Gauss–Legendre nodes. Nodes
//! of a panel are stored contiguously and panels of a particle are contiguous
//! and ordered by `t`.

use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::{perp, Vec2};

/// Maximum number of bisection levels applied by [`refine_near`].
pub const MAX_REFINE_LEVELS: u32 = 5;

/// Rigid elliptical particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub center: Vec2,
    /// Orientation of the director, radians.
    pub theta: f64,
    /// Semi-major axis (along the director).
    pub a: f64,
    /// Semi-minor axis.
    pub b: f64,
    /// Janus exponent, an even positive integer.
    pub p: u32,
}

impl Particle {
    pub fn new(center: Vec2, theta: f64, a: f64, b: f64, p: u32) -> Result<Self> {
        if !(b > 0.0 && a >= b && a.is_finite()) {
            return Err(Error::Geometry(format!(
                "semi-axes must satisfy a >= b > 0, got a={a}, b={b}"
            )));
        }
        if p < 2 || p % 2 != 0 {
            return Err(Error::Geometry(format!(
                "janus exponent must be even and >= 2, got {p}"
            )));
        }
        if !(center.x.is_finite() && center.y.is_finite() && theta.is_finite()) {
            return Err(Error::Geometry("non-finite particle pose".into()));
        }
        Ok(Self {
            center,
            theta,
            a,
            b,
            p,
        })
    }

    pub fn circle(center: Vec2, theta: f64, radius: f64, p: u32) -> Result<Self> {
        Self::new(center, theta, radius, radius, p)
    }

    pub fn is_circle(&self) -> bool {
        self.a == self.b
    }

    pub fn director(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn point(&self, t: f64) -> Vec2 {
        let d = self.director();
        self.center + self.a * t.cos() * d + self.b * t.sin() * perp(&d)
    }

    /// `dX/dt`.
    pub fn tangent(&self, t: f64) -> Vec2 {
        let d = self.director();
        -self.a * t.sin() * d + self.b * t.cos() * perp(&d)
    }

    /// Unit normal pointing out of the particle.
    pub fn normal(&self, t: f64) -> Vec2 {
        let tan = self.tangent(t);
        Vec2::new(tan.y, -tan.x) / tan.norm()
    }

    pub fn curvature(&self, t: f64) -> f64 {
        self.a * self.b / self.tangent(t).norm().powi(3)
    }

    /// Perimeter by dense composite Gauss–Legendre quadrature.
    pub fn perimeter(&self) -> f64 {
        if self.is_circle() {
            return 2.0 * PI * self.a;
        }
        let gl = GaussLegendre::new(20);
        let n = 64;
        (0..n)
            .map(|k| {
                let t0 = 2.0 * PI * k as f64 / n as f64;
                let t1 = 2.0 * PI * (k + 1) as f64 / n as f64;
                gl.mapped(t0, t1)
                    .map(|(t, w)| w * self.tangent(t).norm())
                    .sum::<f64>()
            })
            .sum()
    }

    /// Coordinates of `x` in the body frame `(d, n_d)`.
    pub fn to_body(&self, x: &Vec2) -> Vec2 {
        let d = self.director();
        let r = x - self.center;
        Vec2::new(r.dot(&d), r.dot(&perp(&d)))
    }

    pub fn contains(&self, x: &Vec2) -> bool {
        let q = self.to_body(x);
        (q.x / self.a).powi(2) + (q.y / self.b).powi(2) < 1.0
    }

    /// Closest boundary parameter to `x`.
    pub fn closest_param(&self, x: &Vec2) -> f64 {
        let q = self.to_body(x);
        if self.is_circle() {
            return q.y.atan2(q.x);
        }
        let (u, v) = (q.x.abs(), q.y.abs());
        let (ea, eb) = (self.a, self.b);
        // Stationarity of |X(t) - q|^2 restricted to the first quadrant.
        let g = |t: f64| (eb * eb - ea * ea) * t.sin() * t.cos() + u * ea * t.sin() - v * eb * t.cos();
        let mut lo = 0.0;
        let mut hi = 0.5 * PI;
        let dist2 = |t: f64| (ea * t.cos() - u).powi(2) + (eb * t.sin() - v).powi(2);
        let t = if self.contains(x) {
            // Interior points may have several stationary parameters; sample first.
            let n = 64;
            let best = (0..=n)
                .map(|k| 0.5 * PI * k as f64 / n as f64)
                .min_by(|&s, &t| dist2(s).partial_cmp(&dist2(t)).unwrap())
                .unwrap();
            let h = 0.5 * PI / n as f64;
            lo = (best - h).max(0.0);
            hi = (best + h).min(0.5 * PI);
            if g(lo) * g(hi) > 0.0 {
                best
            } else {
                bisect(&g, lo, hi)
            }
        } else {
            bisect(&g, lo, hi)
        };
        match (q.x >= 0.0, q.y >= 0.0) {
            (true, true) => t,
            (false, true) => PI - t,
            (false, false) => PI + t,
            (true, false) => -t,
        }
    }

    /// Signed distance from `x` to the boundary, negative inside.
    pub fn signed_distance(&self, x: &Vec2) -> f64 {
        if self.is_circle() {
            return (x - self.center).norm() - self.a;
        }
        let t = self.closest_param(x);
        let d = (self.point(t) - x).norm();
        if self.contains(x) {
            -d
        } else {
            d
        }
    }

    /// Centers of the repulsion proxy circles, each of radius `b`.
    pub fn proxy_centers(&self) -> Vec<Vec2> {
        if self.is_circle() {
            return vec![self.center];
        }
        let h = self.a - self.b;
        let d = self.director();
        (-1..=1).map(|k| self.center + (k as f64) * h * d).collect()
    }

    /// Material label at a boundary point; see [`LabelConvention`].
    pub fn janus_label(&self, x: &Vec2, conv: LabelConvention) -> f64 {
        let r = x - self.center;
        let norm = r.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let c = (r.dot(&self.director()) / norm).clamp(-1.0, 1.0);
        let sin2 = match conv {
            LabelConvention::HalfAngle => 0.5 * (1.0 - c),
            LabelConvention::FullAngle => (1.0 - c * c).max(0.0),
        };
        1.0 - sin2.powi(self.p as i32 / 2)
    }
}

/// How the polar angle `theta` between `x - a` and the director enters the
/// label `1 - sin^p`.
///
/// `HalfAngle` uses `sin^p(theta/2)`: the label is 1 on the tail side and 0 on
/// the head side, and for `p = 2` it reduces to `(1 + cos theta)/2`.
/// `FullAngle` uses `sin^p(theta)`, which is symmetric under `theta -> pi - theta`
/// and so marks both ends hydrophobic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelConvention {
    #[default]
    HalfAngle,
    FullAngle,
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let glo = g(lo);
    if glo == 0.0 {
        return lo;
    }
    let sign_lo = glo.signum();
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Surface-to-surface gap using the repulsion proxy circles.
pub fn proxy_gap(pi: &Particle, pj: &Particle) -> f64 {
    let mut best = f64::INFINITY;
    for ci in pi.proxy_centers() {
        for cj in pj.proxy_centers() {
            best = best.min((ci - cj).norm() - (pi.b + pj.b));
        }
    }
    best
}

/// Surface-to-surface gap between two ellipses, negative when they overlap.
pub fn surface_gap(pi: &Particle, pj: &Particle) -> f64 {
    if pi.is_circle() && pj.is_circle() {
        return (pi.center - pj.center).norm() - pi.a - pj.a;
    }
    let n = 96;
    let f = |t: f64| pj.signed_distance(&pi.point(t));
    let (mut tbest, mut fbest) = (0.0, f64::INFINITY);
    for k in 0..n {
        let t = 2.0 * PI * k as f64 / n as f64;
        let v = f(t);
        if v < fbest {
            tbest = t;
            fbest = v;
        }
    }
    // Golden-section polish on the bracketing interval.
    let h = 2.0 * PI / n as f64;
    let (mut lo, mut hi) = (tbest - h, tbest + h);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    fbest.min(f1).min(f2)
}

/// Closest pair `(i, j, gap)` by proxy-circle distance.
pub fn min_gap(particles: &[Particle]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..particles.len() {
        for j in i + 1..particles.len() {
            let g = proxy_gap(&particles[i], &particles[j]);
            if best.map_or(true, |(_, _, b)| g < b) {
                best = Some((i, j, g));
            }
        }
    }
    best
}

/// A parameter interval on one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub particle: usize,
    pub t0: f64,
    pub t1: f64,
    pub level: u32,
}

/// Nyström grid over all particle boundaries.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub particles: Vec<Particle>,
    pub panels: Vec<Panel>,
    pub n_gl: usize,
    pub gl: GaussLegendre,
    pub points: Vec<Vec2>,
    /// Unit normals pointing out of the particles, into the fluid.
    pub normals: Vec<Vec2>,
    /// Arclength quadrature weights.
    pub weights: Vec<f64>,
    /// `|dX/dt|` at each node.
    pub speeds: Vec<f64>,
    pub params: Vec<f64>,
    pub curvatures: Vec<f64>,
    /// Arclength of each panel.
    pub panel_lengths: Vec<f64>,
    /// Node range of each particle.
    pub particle_nodes: Vec<Range<usize>>,
    /// Panel range of each particle.
    pub particle_panels: Vec<Range<usize>>,
}

impl Discretization {
    fn from_panels(particles: Vec<Particle>, panels: Vec<Panel>, n_gl: usize) -> Self {
        let gl = GaussLegendre::new(n_gl);
        let n = panels.len() * n_gl;
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut speeds = Vec::with_capacity(n);
        let mut params = Vec::with_capacity(n);
        let mut curvatures = Vec::with_capacity(n);
        let mut panel_lengths = Vec::with_capacity(panels.len());
        let mut particle_nodes = vec![0..0; particles.len()];
        let mut particle_panels = vec![0..0; particles.len()];
        for (k, panel) in panels.iter().enumerate() {
            let part = &particles[panel.particle];
            let mut len = 0.0;
            for (t, w) in gl.mapped(panel.t0, panel.t1) {
                let speed = part.tangent(t).norm();
                points.push(part.point(t));
                normals.push(part.normal(t));
                weights.push(w * speed);
                speeds.push(speed);
                params.push(t);
                curvatures.push(part.curvature(t));
                len += w * speed;
            }
            panel_lengths.push(len);
            let pn = &mut particle_nodes[panel.particle];
            let pp = &mut particle_panels[panel.particle];
            if k == 0 || panels[k - 1].particle != panel.particle {
                *pp = k..k + 1;
                *pn = k * n_gl..(k + 1) * n_gl;
            } else {
                pp.end = k + 1;
                pn.end = (k + 1) * n_gl;
            }
        }
        Self {
            particles,
            panels,
            n_gl,
            gl,
            points,
            normals,
            weights,
            speeds,
            params,
            curvatures,
            panel_lengths,
            particle_nodes,
            particle_panels,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn panel_nodes(&self, panel: usize) -> Range<usize> {
        panel * self.n_gl..(panel + 1) * self.n_gl
    }

    pub fn panel_of(&self, node: usize) -> usize {
        node / self.n_gl
    }

    pub fn particle_of(&self, node: usize) -> usize {
        self.panels[node / self.n_gl].particle
    }

    /// Panel length at a node.
    pub fn local_length(&self, node: usize) -> f64 {
        self.panel_lengths[node / self.n_gl]
    }

    /// Sum of node weights on one particle.
    pub fn particle_perimeter(&self, particle: usize) -> f64 {
        self.weights[self.particle_nodes[particle].clone()].iter().sum()
    }

    /// Point on panel `k` at reference coordinate `s in [-1, 1]`.
    pub fn panel_point(&self, k: usize, s: f64) -> (Vec2, Vec2, f64) {
        let panel = &self.panels[k];
        let part = &self.particles[panel.particle];
        let t = 0.5 * (panel.t0 + panel.t1) + 0.5 * (panel.t1 - panel.t0) * s;
        let tan = part.tangent(t);
        let speed = tan.norm();
        (
            part.point(t),
            Vec2::new(tan.y, -tan.x) / speed,
            0.5 * (panel.t1 - panel.t0) * speed,
        )
    }

    /// Returns a copy with the listed panels bisected.
    pub fn bisect_panels(&self, which: &[bool]) -> Self {
        let mut panels = Vec::with_capacity(self.panels.len() * 2);
        for (k, p) in self.panels.iter().enumerate() {
            if which[k] {
                let mid = 0.5 * (p.t0 + p.t1);
                panels.push(Panel {
                    t1: mid,
                    level: p.level + 1,
                    ..*p
                });
                panels.push(Panel {
                    t0: mid,
                    level: p.level + 1,
                    ..*p
                });
            } else {
                panels.push(*p);
            }
        }
        Self::from_panels(self.particles.clone(), panels, self.n_gl)
    }

    /// Smallest distance from the nodes and endpoints of panel `k` to any other particle.
    pub fn panel_clearance(&self, k: usize) -> f64 {
        let panel = &self.panels[k];
        let part = &self.particles[panel.particle];
        let mut probes: Vec<Vec2> = self.points[self.panel_nodes(k)].to_vec();
        probes.push(part.point(panel.t0));
        probes.push(part.point(panel.t1));
        let mut best = f64::INFINITY;
        for (j, other) in self.particles.iter().enumerate() {
            if j == panel.particle {
                continue;
            }
            for x in &probes {
                // The circumscribed circle bounds the distance from below.
                if (x - other.center).norm() - other.a >= best {
                    continue;
                }
                best = best.min(other.signed_distance(x));
            }
        }
        best
    }
}

/// Equal-parameter panels with Gauss–Legendre nodes on every particle.
pub fn discretize(particles: &[Particle], n_pan: usize, n_gl: usize) -> Result<Discretization> {
    if n_pan < 4 {
        return Err(Error::InvalidParameter(format!("n_pan must be >= 4, got {n_pan}")));
    }
    if n_gl < 2 {
        return Err(Error::InvalidParameter(format!("n_gl must be >= 2, got {n_gl}")));
    }
    check_overlaps(particles)?;
    let mut panels = Vec::with_capacity(particles.len() * n_pan);
    for (i, _) in particles.iter().enumerate() {
        for k in 0..n_pan {
            panels.push(Panel {
                particle: i,
                t0: 2.0 * PI * k as f64 / n_pan as f64,
                t1: 2.0 * PI * (k + 1) as f64 / n_pan as f64,
                level: 0,
            });
        }
    }
    Ok(Discretization::from_panels(particles.to_vec(), panels, n_gl))
}

/// Fails with the first overlapping pair.
pub fn check_overlaps(particles: &[Particle]) -> Result<()> {
    for i in 0..particles.len() {
        for j in i + 1..particles.len() {
            let (pi, pj) = (&particles[i], &particles[j]);
            if (pi.center - pj.center).norm() > pi.a + pj.a {
                continue;
            }
            if surface_gap(pi, pj) <= 0.0 {
                return Err(Error::Overlap(i, j));
            }
        }
    }
    Ok(())
}

/// Bisects panels longer than `threshold_factor` times their clearance to
/// other particles, up to [`MAX_REFINE_LEVELS`] levels.
pub fn refine_near(disc: &Discretization, threshold_factor: f64) -> Discretization {
    let mut current = disc.clone();
    if current.particles.len() < 2 {
        return current;
    }
    loop {
        let flags: Vec<bool> = (0..current.panels.len())
            .map(|k| current.panel_lengths[k] > threshold_factor * current.panel_clearance(k))
            .collect();
        let refinable: Vec<bool> = flags
            .iter()
            .zip(&current.panels)
            .map(|(&f, p)| f && p.level < MAX_REFINE_LEVELS)
            .collect();
        if !refinable.iter().any(|&f| f) {
            if flags.iter().any(|&f| f) {
                log::warn!("refine_near: depth limit reached with under-resolved panels");
            }
            return current;
        }
        current = current.bisect_panels(&refinable);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(x: f64, y: f64) -> Particle {
        Particle::circle(Vec2::new(x, y), 0.0, 1.0, 2).unwrap()
    }

    #[test]
    fn unit_circle_grid() {
        let d = discretize(&[unit(0.0, 0.0)], 10, 7).unwrap();
        assert_eq!(d.len(), 70);
        let total: f64 = d.weights.iter().sum();
        assert!((total - 2.0 * PI).abs() < 1e-10);
        for i in 0..d.len() {
            let t = d.params[i];
            assert!((d.normals[i] - Vec2::new(t.cos(), t.sin())).norm() < 1e-14);
            assert!((d.normals[i].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ellipse_perimeter_matches_dense_quadrature() {
        let p = Particle::new(Vec2::new(0.3, -0.2), 0.7, 1.25, 0.8, 6).unwrap();
        // Independent oracle: trapezoid rule is spectrally accurate for periodic integrands.
        let n = 4000;
        let oracle: f64 = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                (1.25f64.powi(2) * t.sin().powi(2) + 0.8f64.powi(2) * t.cos().powi(2)).sqrt()
            })
            .sum::<f64>()
            * 2.0
            * PI
            / n as f64;
        let d = discretize(&[p.clone()], 16, 6).unwrap();
        assert!((d.particle_perimeter(0) - oracle).abs() / oracle < 1e-9);
        assert!((p.perimeter() - oracle).abs() / oracle < 1e-12);
    }

    #[test]
    fn normals_point_outward() {
        let p = Particle::new(Vec2::new(1.0, 2.0), 1.1, 1.25, 0.3125, 2).unwrap();
        let d = discretize(&[p.clone()], 12, 6).unwrap();
        for i in 0..d.len() {
            let out = d.points[i] + 1e-6 * d.normals[i];
            let inn = d.points[i] - 1e-6 * d.normals[i];
            assert!(!p.contains(&out) && p.contains(&inn));
        }
    }

    #[test]
    fn gaps() {
        let (i, j, g) = min_gap(&[unit(0.0, 0.0), unit(3.0, 0.0)]).unwrap();
        assert_eq!((i, j), (0, 1));
        assert!((g - 1.0).abs() < 1e-15);
        let (_, _, g) = min_gap(&[unit(0.0, 0.0), unit(2.1, 0.0)]).unwrap();
        assert!((g - 0.1).abs() < 1e-14);
        let (_, _, g) = min_gap(&[unit(0.0, 0.0), unit(0.0, 0.0)]).unwrap();
        assert!(g < 0.0);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = discretize(&[unit(0.0, 0.0), unit(5.0, 0.0), unit(1.5, 0.0)], 8, 6).unwrap_err();
        assert!(matches!(err, Error::Overlap(0, 2)));
    }

    #[test]
    fn ellipse_distance_matches_brute_force() {
        let p = Particle::new(Vec2::new(0.2, 0.1), 0.4, 1.25, 0.5, 2).unwrap();
        for x in [Vec2::new(2.0, 1.0), Vec2::new(-0.3, 0.9), Vec2::new(0.3, 0.05), Vec2::new(-1.7, -0.2)] {
            let brute = (0..200_000)
                .map(|k| (p.point(2.0 * PI * k as f64 / 200_000.0) - x).norm())
                .fold(f64::INFINITY, f64::min);
            let got = p.signed_distance(&x).abs();
            assert!((got - brute).abs() < 1e-8, "{got} vs {brute}");
        }
    }

    #[test]
    fn ellipse_surface_gap() {
        let p = Particle::new(Vec2::new(0.0, 0.0), 0.0, 1.25, 0.8, 2).unwrap();
        let q = Particle::new(Vec2::new(3.0, 0.0), 0.0, 1.25, 0.8, 2).unwrap();
        assert!((surface_gap(&p, &q) - 0.5).abs() < 1e-10);
        let q = Particle::new(Vec2::new(0.0, 2.0), 0.0, 1.25, 0.8, 2).unwrap();
        assert!((surface_gap(&p, &q) - 0.4).abs() < 1e-10);
    }

    #[test]
    fn refinement() {
        let single = discretize(&[unit(0.0, 0.0)], 10, 6).unwrap();
        assert_eq!(refine_near(&single, 1.0).panels.len(), 10);

        let far = discretize(&[unit(0.0, 0.0), unit(12.0, 0.0)], 10, 6).unwrap();
        assert_eq!(refine_near(&far, 1.0).panels.len(), 20);

        let close = discretize(&[unit(0.0, 0.0), unit(2.05, 0.0)], 10, 6).unwrap();
        assert!((close.panel_lengths[0] - 0.2 * PI).abs() < 1e-12);
        let r = refine_near(&close, 1.0);
        let facing = r
            .panels
            .iter()
            .filter(|p| p.particle == 0 && (p.t0.abs() < 0.05 || (p.t1 - 2.0 * PI).abs() < 0.05))
            .map(|p| p.level)
            .max()
            .unwrap();
        assert!(facing >= 3);
        for k in 0..r.panels.len() {
            if r.panels[k].level < MAX_REFINE_LEVELS {
                assert!(r.panel_lengths[k] <= r.panel_clearance(k));
            }
        }
        let again = refine_near(&r, 1.0);
        assert_eq!(again.panels.len(), r.panels.len());
    }

    #[test]
    fn janus_label_values() {
        let p = Particle::circle(Vec2::new(0.0, 0.0), 0.0, 1.0, 2).unwrap();
        let full = LabelConvention::FullAngle;
        assert!((p.janus_label(&Vec2::new(1.0, 0.0), full) - 1.0).abs() < 1e-15);
        assert!(p.janus_label(&Vec2::new(0.0, 1.0), full).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.janus_label(&Vec2::new(s, s), full) - 0.5).abs() < 1e-15);
        assert!((p.janus_label(&Vec2::new(-1.0, 0.0), full) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_angle_label_is_one_sided() {
        let half = LabelConvention::HalfAngle;
        let p = Particle::new(Vec2::new(0.5, -1.0), 0.4, 1.25, 0.8, 6).unwrap();
        let d = p.director();
        assert!((p.janus_label(&(p.center + d), half) - 1.0).abs() < 1e-15);
        assert!(p.janus_label(&(p.center - d), half).abs() < 1e-15);
        let q = Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap();
        for k in 0..16 {
            let t = 0.4 * k as f64;
            let x = Vec2::new(t.cos(), t.sin());
            assert!((q.janus_label(&x, half) - 0.5 * (1.0 + t.cos())).abs() < 1e-14);
        }
    }
}
