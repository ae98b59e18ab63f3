//! Yukawa double-layer potential `D[sigma](x) = int dG/dnu(y) sigma(y) ds_y`
//! evaluated on and off the boundary.
//!
//! On-surface targets use one exterior QBX expansion per node, centred at
//! `c_i = x_i + eta_i nu_i` with `eta_i` half the local panel length. The
//! expansion collects the panels of the target's own particle that lie within
//! `own_factor` panel lengths; their coefficients are integrated on an
//! upsampled Gauss–Legendre rule with the density interpolated from the panel
//! nodes. The expansion of a truncated piece of boundary only converges
//! geometrically in the distance to the cut, so `own_factor` bounds the
//! accuracy reachable at low order. Near panels of other particles, within
//! `near_factor` panel lengths, see the target as an ordinary
//! off-surface point and are integrated with adaptive bisection. Everything
//! else is summed directly with the native Nyström weights.
//!
//! Expansions use the real basis `I_l(r/rho) cos(l theta)`, `I_l(r/rho) sin(l theta)`,
//! stored as `[a_0, a_1, b_1, ..., a_p, b_p]`. From Graf's addition theorem,
//! `K_0(|x-y|/rho) = sum_l K_l(R/rho) I_l(r/rho) cos(l(theta_y - theta_x))`,
//! which gives `a_0 = (1/2pi) int sigma d_nu[K_0]`,
//! `a_l = (1/pi) int sigma d_nu[K_l cos(l theta_y)]` and the analogue for `b_l`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{refine_near, Discretization, MAX_REFINE_LEVELS};
use crate::kernels::{dgdny_raw, dgdny_with_grad_raw};
use crate::quadrature::{barycentric_weights, lagrange_row, GaussLegendre};
use crate::specialfn::{bessel_i_seq, bessel_k_seq, MAX_ORDER};
use crate::{perp, Vec2};

/// Maximum bisection depth of the adaptive near-field rule.
pub const MAX_ADAPTIVE_DEPTH: u32 = 40;
const ADAPTIVE_NODES: usize = 16;
/// Operators with at most this many matrix entries are assembled densely.
pub const DENSE_LIMIT: usize = 25_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QbxOptions {
    /// Expansion order `p`.
    pub order: usize,
    /// Panels of other particles closer than this many panel lengths are
    /// integrated adaptively.
    pub near_factor: f64,
    /// Panels of the target's own particle within this many panel lengths
    /// enter its QBX expansion.
    pub own_factor: f64,
    /// Source upsampling factor for QBX coefficients.
    pub upsample: usize,
}

impl Default for QbxOptions {
    fn default() -> Self {
        Self {
            order: 8,
            near_factor: 4.0,
            own_factor: 8.0,
            upsample: 5,
        }
    }
}

/// Truncated local expansion of a double-layer potential.
#[derive(Debug, Clone, PartialEq)]
pub struct QbxExpansion {
    pub center: Vec2,
    pub radius: f64,
    pub order: usize,
    pub coeffs: Vec<f64>,
}

/// Expansion center for one boundary node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QbxCenter {
    pub node: usize,
    pub center: Vec2,
    pub radius: f64,
}

/// Evaluation target for [`eval_double_layer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Exterior limit at a boundary node.
    Node(usize),
    /// Free point in the plane.
    Point(Vec2),
}

/// Value and gradient of a layer potential at one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub gradient: Vec2,
    /// Index of the particle containing the target, if any. Values there are
    /// the interior representation and carry no physical meaning.
    pub inside: Option<usize>,
}

/// One center per node, pushed into the fluid by half the local panel length.
pub fn qbx_centers(disc: &Discretization) -> Vec<QbxCenter> {
    (0..disc.len())
        .map(|i| {
            let eta = 0.5 * disc.local_length(i);
            QbxCenter {
                node: i,
                center: disc.points[i] + eta * disc.normals[i],
                radius: eta,
            }
        })
        .collect()
}

/// Panels owning a center whose disk reaches another particle.
fn panels_with_blocked_disks(disc: &Discretization) -> Vec<bool> {
    let mut flags = vec![false; disc.panels.len()];
    for c in qbx_centers(disc) {
        let own = disc.particle_of(c.node);
        for (j, other) in disc.particles.iter().enumerate() {
            if j == own || (c.center - other.center).norm() - other.a > c.radius {
                continue;
            }
            if other.signed_distance(&c.center) <= c.radius {
                flags[disc.panel_of(c.node)] = true;
            }
        }
    }
    flags
}

/// Applies [`refine_near`] and then bisects panels until every expansion disk
/// is clear of the other particles, up to [`MAX_REFINE_LEVELS`] levels.
pub fn refine_for_qbx(disc: &Discretization, threshold_factor: f64) -> Discretization {
    let mut current = refine_near(disc, threshold_factor);
    loop {
        let flags = panels_with_blocked_disks(&current);
        let refinable: Vec<bool> = flags
            .iter()
            .zip(&current.panels)
            .map(|(&f, p)| f && p.level < MAX_REFINE_LEVELS)
            .collect();
        if !refinable.iter().any(|&f| f) {
            if flags.iter().any(|&f| f) {
                log::warn!("QBX disks still intersect neighbouring particles at maximum refinement");
            }
            return current;
        }
        current = current.bisect_panels(&refinable);
    }
}

/// Source point produced by the adaptive or upsampled panel rules.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SourcePoint {
    /// Reference coordinate on the parent panel.
    pub s: f64,
    pub y: Vec2,
    pub normal: Vec2,
    /// Arclength weight.
    pub w: f64,
}

/// Panel quadrature helpers shared by the Yukawa and Stokes operators.
#[derive(Debug, Clone)]
pub(crate) struct PanelRules {
    pub bary: Vec<f64>,
    pub nodes: Vec<f64>,
    pub fine: GaussLegendre,
}

impl PanelRules {
    pub fn new(disc: &Discretization) -> Self {
        Self {
            bary: barycentric_weights(&disc.gl.nodes),
            nodes: disc.gl.nodes.clone(),
            fine: GaussLegendre::new(ADAPTIVE_NODES),
        }
    }

    pub fn interp_row(&self, s: f64, out: &mut [f64]) {
        lagrange_row(&self.nodes, &self.bary, s, out);
    }

    fn sub_rule(&self, disc: &Discretization, panel: usize, rule: &GaussLegendre, s0: f64, s1: f64) -> Vec<SourcePoint> {
        rule.mapped(s0, s1)
            .map(|(s, ws)| {
                let (y, normal, jac) = disc.panel_point(panel, s);
                SourcePoint { s, y, normal, w: ws * jac }
            })
            .collect()
    }

    /// Fixed upsampled rule on a whole panel.
    pub fn upsampled(&self, disc: &Discretization, panel: usize, rule: &GaussLegendre) -> Vec<SourcePoint> {
        self.sub_rule(disc, panel, rule, -1.0, 1.0)
    }

    /// Adaptive rule on `panel` for target `x`: subpanels are bisected until
    /// they are at least one subpanel length away from `x`.
    pub fn adaptive(&self, disc: &Discretization, panel: usize, x: &Vec2) -> Vec<SourcePoint> {
        let mut out = Vec::new();
        let mut stack = vec![(-1.0f64, 1.0f64, 0u32)];
        while let Some((s0, s1, depth)) = stack.pop() {
            let pts = self.sub_rule(disc, panel, &self.fine, s0, s1);
            let len: f64 = pts.iter().map(|p| p.w).sum();
            let (e0, _, _) = disc.panel_point(panel, s0);
            let (e1, _, _) = disc.panel_point(panel, s1);
            let dist = pts
                .iter()
                .map(|p| (p.y - x).norm())
                .chain([(e0 - x).norm(), (e1 - x).norm()])
                .fold(f64::INFINITY, f64::min);
            if dist >= len || depth >= MAX_ADAPTIVE_DEPTH {
                let floor = 1e-14 * len;
                out.extend(pts.into_iter().filter(|p| (p.y - x).norm() > floor));
            } else {
                let mid = 0.5 * (s0 + s1);
                stack.push((mid, s1, depth + 1));
                stack.push((s0, mid, depth + 1));
            }
        }
        out
    }
}

/// Bounding circle of each panel.
#[derive(Debug, Clone)]
pub(crate) struct PanelBounds {
    pub center: Vec<Vec2>,
    pub radius: Vec<f64>,
}

impl PanelBounds {
    pub fn new(disc: &Discretization) -> Self {
        let mut center = Vec::with_capacity(disc.panels.len());
        let mut radius = Vec::with_capacity(disc.panels.len());
        for k in 0..disc.panels.len() {
            let nodes = disc.panel_nodes(k);
            let (e0, _, _) = disc.panel_point(k, -1.0);
            let (e1, _, _) = disc.panel_point(k, 1.0);
            let c = disc.points[nodes.clone()].iter().fold(Vec2::zeros(), |a, p| a + p) / disc.n_gl as f64;
            let r = disc.points[nodes]
                .iter()
                .chain([&e0, &e1])
                .map(|p| (p - c).norm())
                .fold(0.0, f64::max);
            center.push(c);
            radius.push(r);
        }
        Self { center, radius }
    }

    /// Panels within `factor` panel lengths of `x`, ascending.
    pub fn near(&self, disc: &Discretization, x: &Vec2, factor: f64) -> Vec<usize> {
        (0..disc.panels.len())
            .filter(|&k| (x - self.center[k]).norm() - self.radius[k] < factor * disc.panel_lengths[k])
            .collect()
    }
}

/// Expansion basis at a target: values and gradients of
/// `[I_0, I_1 cos, I_1 sin, ..., I_p cos, I_p sin]`.
fn target_basis(t: &Vec2, rho: f64, p: usize, val: &mut [f64], grad: &mut [Vec2]) {
    let r = t.norm();
    let s = r / rho;
    let mut ib = [0.0; MAX_ORDER + 2];
    bessel_i_seq(s, &mut ib[..p + 2]);
    val[0] = ib[0];
    grad[0] = if r > 0.0 { t * (ib[1] / (rho * r)) } else { Vec2::zeros() };
    if p == 0 {
        return;
    }
    if r == 0.0 {
        for v in val.iter_mut().skip(1) {
            *v = 0.0;
        }
        for g in grad.iter_mut().skip(1) {
            *g = Vec2::zeros();
        }
        grad[1] = Vec2::new(0.5 / rho, 0.0);
        grad[2] = Vec2::new(0.0, 0.5 / rho);
        return;
    }
    let rhat = t / r;
    let that = perp(&rhat);
    let (c1, s1) = (rhat.x, rhat.y);
    let (mut cl, mut sl) = (1.0, 0.0);
    for l in 1..=p {
        let (cn, sn) = (cl * c1 - sl * s1, sl * c1 + cl * s1);
        cl = cn;
        sl = sn;
        let il = ib[l];
        let dil = 0.5 * (ib[l - 1] + ib[l + 1]) / rho;
        let lf = l as f64 * il / r;
        val[2 * l - 1] = il * cl;
        val[2 * l] = il * sl;
        grad[2 * l - 1] = rhat * (dil * cl) - that * (lf * sl);
        grad[2 * l] = rhat * (dil * sl) + that * (lf * cl);
    }
}

/// Coefficient contributions of a unit double-layer source at `y` with normal
/// `normal`, including the `1/2pi` and `1/pi` factors.
fn source_row(d: &Vec2, normal: &Vec2, rho: f64, p: usize, out: &mut [f64]) {
    let big_r = d.norm();
    let mut kb = [0.0; MAX_ORDER + 2];
    bessel_k_seq(big_r / rho, &mut kb[..p + 2]);
    let rhat = d / big_r;
    let that = perp(&rhat);
    let nr = normal.dot(&rhat);
    let nt = normal.dot(&that);
    out[0] = -kb[1] / rho * nr / (2.0 * PI);
    let (c1, s1) = (rhat.x, rhat.y);
    let (mut cl, mut sl) = (1.0, 0.0);
    for l in 1..=p {
        let (cn, sn) = (cl * c1 - sl * s1, sl * c1 + cl * s1);
        cl = cn;
        sl = sn;
        let kl = kb[l];
        let dkl = -0.5 * (kb[l - 1] + kb[l + 1]) / rho;
        let lf = l as f64 * kl / big_r;
        out[2 * l - 1] = (dkl * cl * nr - lf * sl * nt) / PI;
        out[2 * l] = (dkl * sl * nr + lf * cl * nt) / PI;
    }
}

fn check_order(p: usize) -> Result<()> {
    if p + 1 > MAX_ORDER {
        Err(Error::Unsupported(format!("QBX order {p} exceeds {}", MAX_ORDER - 1)))
    } else {
        Ok(())
    }
}

/// Expansion coefficients of `D[sigma]` about `center`, integrating every panel
/// on the upsampled rule.
pub fn double_layer_coeffs(
    disc: &Discretization,
    sigma: &[f64],
    center: &Vec2,
    radius: f64,
    rho: f64,
    opts: &QbxOptions,
) -> Result<QbxExpansion> {
    let p = opts.order;
    check_order(p)?;
    let rules = PanelRules::new(disc);
    let up = GaussLegendre::new(opts.upsample.max(1) * disc.n_gl);
    let mut coeffs = vec![0.0; 2 * p + 1];
    let mut row = vec![0.0; 2 * p + 1];
    let mut interp = vec![0.0; disc.n_gl];
    for k in 0..disc.panels.len() {
        let dens = &sigma[disc.panel_nodes(k)];
        for sp in rules.upsampled(disc, k, &up) {
            rules.interp_row(sp.s, &mut interp);
            let sig: f64 = interp.iter().zip(dens).map(|(a, b)| a * b).sum();
            source_row(&(sp.y - center), &sp.normal, rho, p, &mut row);
            for (c, r) in coeffs.iter_mut().zip(&row) {
                *c += sp.w * sig * r;
            }
        }
    }
    Ok(QbxExpansion {
        center: *center,
        radius,
        order: p,
        coeffs,
    })
}

/// Evaluates an expansion and its gradient at `x` inside the expansion disk.
pub fn eval_expansion(exp: &QbxExpansion, x: &Vec2, rho: f64) -> Result<(f64, Vec2)> {
    let t = x - exp.center;
    let dist = t.norm();
    if dist > exp.radius * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            dist,
            radius: exp.radius,
        });
    }
    let n = 2 * exp.order + 1;
    let mut val = vec![0.0; n];
    let mut grad = vec![Vec2::zeros(); n];
    target_basis(&t, rho, exp.order, &mut val, &mut grad);
    let value = exp.coeffs.iter().zip(&val).map(|(a, b)| a * b).sum();
    let gradient = exp.coeffs.iter().zip(&grad).fold(Vec2::zeros(), |acc, (a, g)| acc + g * *a);
    Ok((value, gradient))
}

/// Sparse near-field weights for one on-surface target.
#[derive(Debug, Clone, Default)]
struct NearRow {
    /// Near panels, ascending; these are skipped by the direct sum.
    panels: Vec<usize>,
    /// `(source node, value weight, gradient weight)`.
    entries: Vec<(usize, f64, Vec2)>,
}

/// Discretized double-layer operator with precomputed near-field corrections.
///
/// `apply` returns the exterior boundary limit `sigma/2 + D[sigma]` at every node,
/// which is the left-hand side of the second-kind equation.
#[derive(Debug, Clone)]
pub struct DoubleLayer<'a> {
    pub disc: &'a Discretization,
    pub rho: f64,
    pub opts: QbxOptions,
    rows: Vec<NearRow>,
    bounds: PanelBounds,
    rules: PanelRules,
    /// Row-major on-surface value and normal-derivative matrices, present
    /// when small enough.
    dense: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> DoubleLayer<'a> {
    pub fn new(disc: &'a Discretization, rho: f64, opts: QbxOptions) -> Result<Self> {
        check_order(opts.order)?;
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        let bounds = PanelBounds::new(disc);
        let rules = PanelRules::new(disc);
        let centers = qbx_centers(disc);
        let up = GaussLegendre::new(opts.upsample.max(1) * disc.n_gl);
        let rows = (0..disc.len())
            .into_par_iter()
            .map(|i| near_row(disc, rho, &opts, &bounds, &rules, &up, &centers[i]))
            .collect();
        let mut op = Self {
            disc,
            rho,
            opts,
            rows,
            bounds,
            rules,
            dense: None,
        };
        let n = disc.len();
        if n * n <= DENSE_LIMIT {
            op.dense = Some(op.assemble());
        }
        Ok(op)
    }

    /// Drops the assembled matrix so that every application re-evaluates kernels.
    pub fn matrix_free(mut self) -> Self {
        self.dense = None;
        self
    }

    pub fn is_assembled(&self) -> bool {
        self.dense.is_some()
    }

    fn assemble(&self) -> (Vec<f64>, Vec<f64>) {
        let disc = self.disc;
        let n = disc.len();
        let mut m = vec![0.0; n * n];
        let mut dn = vec![0.0; n * n];
        m.par_chunks_mut(n)
            .zip(dn.par_chunks_mut(n))
            .enumerate()
            .for_each(|(i, (row, drow))| {
                let x = disc.points[i];
                let nu = disc.normals[i];
                let near = &self.rows[i];
                let mut cursor = 0;
                for k in 0..disc.panels.len() {
                    if cursor < near.panels.len() && near.panels[cursor] == k {
                        cursor += 1;
                        continue;
                    }
                    for j in disc.panel_nodes(k) {
                        let (v, g) = dgdny_with_grad_raw(&(x - disc.points[j]), &disc.normals[j], self.rho);
                        row[j] = v * disc.weights[j];
                        drow[j] = g.dot(&nu) * disc.weights[j];
                    }
                }
                for &(j, w, wg) in &near.entries {
                    row[j] += w;
                    drow[j] += wg.dot(&nu);
                }
            });
        (m, dn)
    }

    pub fn len(&self) -> usize {
        self.disc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disc.is_empty()
    }

    fn weighted(&self, sigma: &[f64]) -> Vec<f64> {
        sigma.iter().zip(&self.disc.weights).map(|(s, w)| s * w).collect()
    }

    /// Direct sum over all panels except the sorted list `skip`.
    fn far_sum(&self, x: &Vec2, wsig: &[f64], skip: &[usize], with_grad: bool) -> (f64, Vec2) {
        let disc = self.disc;
        let mut val = 0.0;
        let mut grad = Vec2::zeros();
        let mut cursor = 0;
        for k in 0..disc.panels.len() {
            if cursor < skip.len() && skip[cursor] == k {
                cursor += 1;
                continue;
            }
            for j in disc.panel_nodes(k) {
                let r = x - disc.points[j];
                if with_grad {
                    let (v, g) = dgdny_with_grad_raw(&r, &disc.normals[j], self.rho);
                    val += v * wsig[j];
                    grad += g * wsig[j];
                } else {
                    val += dgdny_raw(&r, &disc.normals[j], self.rho) * wsig[j];
                }
            }
        }
        (val, grad)
    }

    /// `out = (I/2 + D) sigma` at the nodes.
    pub fn apply(&self, sigma: &[f64], out: &mut [f64]) {
        if let Some((m, _)) = &self.dense {
            let n = self.len();
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                *o = m[i * n..(i + 1) * n].iter().zip(sigma).map(|(a, b)| a * b).sum();
            });
            return;
        }
        let wsig = self.weighted(sigma);
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &self.rows[i];
            let near: f64 = row.entries.iter().map(|&(j, w, _)| w * sigma[j]).sum();
            let (far, _) = self.far_sum(&self.disc.points[i], &wsig, &row.panels, false);
            *o = near + far;
        });
    }

    /// Exterior limit of the normal derivative `nu_i . grad D[sigma]` at the nodes.
    pub fn normal_derivative(&self, sigma: &[f64]) -> Vec<f64> {
        if let Some((_, dn)) = &self.dense {
            let n = self.len();
            return (0..n)
                .into_par_iter()
                .map(|i| dn[i * n..(i + 1) * n].iter().zip(sigma).map(|(a, b)| a * b).sum())
                .collect();
        }
        let (_, g) = self.apply_with_gradient(sigma);
        g.iter().zip(&self.disc.normals).map(|(g, nu)| g.dot(nu)).collect()
    }

    /// Exterior boundary values and gradients at the nodes.
    pub fn apply_with_gradient(&self, sigma: &[f64]) -> (Vec<f64>, Vec<Vec2>) {
        let wsig = self.weighted(sigma);
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let row = &self.rows[i];
                let (mut v, mut g) = (0.0, Vec2::zeros());
                for &(j, wv, wg) in &row.entries {
                    v += wv * sigma[j];
                    g += wg * sigma[j];
                }
                let (fv, fg) = self.far_sum(&self.disc.points[i], &wsig, &row.panels, true);
                (v + fv, g + fg)
            })
            .unzip()
    }

    /// Values and gradients at free points.
    pub fn eval_points(&self, sigma: &[f64], points: &[Vec2]) -> Vec<FieldSample> {
        let wsig = self.weighted(sigma);
        points
            .par_iter()
            .map(|x| self.eval_point(sigma, &wsig, x))
            .collect()
    }

    fn eval_point(&self, sigma: &[f64], wsig: &[f64], x: &Vec2) -> FieldSample {
        let disc = self.disc;
        let inside = disc
            .particles
            .iter()
            .position(|p| (x - p.center).norm() < p.a && p.contains(x));
        let near = self.bounds.near(disc, x, self.opts.near_factor);
        let (mut value, mut gradient) = self.far_sum(x, wsig, &near, true);
        let mut interp = vec![0.0; disc.n_gl];
        for &k in &near {
            let dens = &sigma[disc.panel_nodes(k)];
            for sp in self.rules.adaptive(disc, k, x) {
                self.rules.interp_row(sp.s, &mut interp);
                let sig: f64 = interp.iter().zip(dens).map(|(a, b)| a * b).sum();
                let (v, g) = dgdny_with_grad_raw(&(x - sp.y), &sp.normal, self.rho);
                value += v * sp.w * sig;
                gradient += g * sp.w * sig;
            }
        }
        FieldSample {
            value,
            gradient,
            inside,
        }
    }
}

fn near_row(
    disc: &Discretization,
    rho: f64,
    opts: &QbxOptions,
    bounds: &PanelBounds,
    rules: &PanelRules,
    up: &GaussLegendre,
    center: &QbxCenter,
) -> NearRow {
    let i = center.node;
    let x = disc.points[i];
    let own = disc.particle_of(i);
    let p = opts.order;
    let mut panels: Vec<usize> = bounds
        .near(disc, &x, opts.near_factor)
        .into_iter()
        .filter(|&k| disc.panels[k].particle != own)
        .chain(
            bounds
                .near(disc, &x, opts.own_factor)
                .into_iter()
                .filter(|&k| disc.panels[k].particle == own),
        )
        .collect();
    panels.sort_unstable();
    let nb = 2 * p + 1;
    let mut bval = vec![0.0; nb];
    let mut bgrad = vec![Vec2::zeros(); nb];
    target_basis(&(x - center.center), rho, p, &mut bval, &mut bgrad);
    let mut row = vec![0.0; nb];
    let mut interp = vec![0.0; disc.n_gl];
    let mut entries = Vec::with_capacity(panels.len() * disc.n_gl);
    for &k in &panels {
        let nodes = disc.panel_nodes(k);
        let mut wv = vec![0.0; disc.n_gl];
        let mut wg = vec![Vec2::zeros(); disc.n_gl];
        if disc.panels[k].particle == own {
            for sp in rules.upsampled(disc, k, up) {
                source_row(&(sp.y - center.center), &sp.normal, rho, p, &mut row);
                let kv: f64 = row.iter().zip(&bval).map(|(a, b)| a * b).sum();
                let kg = row.iter().zip(&bgrad).fold(Vec2::zeros(), |acc, (a, g)| acc + g * *a);
                rules.interp_row(sp.s, &mut interp);
                for m in 0..disc.n_gl {
                    wv[m] += sp.w * kv * interp[m];
                    wg[m] += kg * (sp.w * interp[m]);
                }
            }
        } else {
            for sp in rules.adaptive(disc, k, &x) {
                let (kv, kg) = dgdny_with_grad_raw(&(x - sp.y), &sp.normal, rho);
                rules.interp_row(sp.s, &mut interp);
                for m in 0..disc.n_gl {
                    wv[m] += sp.w * kv * interp[m];
                    wg[m] += kg * (sp.w * interp[m]);
                }
            }
        }
        for (m, j) in nodes.enumerate() {
            entries.push((j, wv[m], wg[m]));
        }
    }
    NearRow { panels, entries }
}

/// Evaluates `D[sigma]` at a batch of targets. Node targets return the exterior
/// limit; point targets use direct or adaptive quadrature.
pub fn eval_double_layer(
    disc: &Discretization,
    sigma: &[f64],
    targets: &[Target],
    rho: f64,
    opts: &QbxOptions,
) -> Result<Vec<FieldSample>> {
    if sigma.len() != disc.len() {
        return Err(Error::InvalidParameter(format!(
            "density has {} entries for {} nodes",
            sigma.len(),
            disc.len()
        )));
    }
    let op = DoubleLayer::new(disc, rho, *opts)?;
    let needs_nodes = targets.iter().any(|t| matches!(t, Target::Node(_)));
    let node_vals = if needs_nodes {
        Some(op.apply_with_gradient(sigma))
    } else {
        None
    };
    let wsig = op.weighted(sigma);
    targets
        .par_iter()
        .map(|t| match *t {
            Target::Node(i) => {
                let (v, g) = node_vals.as_ref().expect("node values computed");
                if i >= disc.len() {
                    return Err(Error::InvalidParameter(format!("node {i} out of range")));
                }
                Ok(FieldSample {
                    value: v[i],
                    gradient: g[i],
                    inside: None,
                })
            }
            Target::Point(x) => Ok(op.eval_point(sigma, &wsig, &x)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{discretize, Particle};
    use crate::specialfn::{k0, k1};

    fn disk() -> Particle {
        Particle::circle(Vec2::zeros(), 0.0, 1.0, 2).unwrap()
    }

    #[test]
    fn centers_on_offset_circle() {
        let d = discretize(&[disk()], 12, 6).unwrap();
        let h = 2.0 * PI / 12.0;
        for c in qbx_centers(&d) {
            assert!(((c.center.norm()) - (1.0 + h / 2.0)).abs() < 1e-12);
            assert!((c.radius - h / 2.0).abs() < 1e-12);
        }
        assert!(panels_with_blocked_disks(&d).iter().all(|&f| !f));
    }

    #[test]
    fn refined_disks_clear_neighbours() {
        let a = disk();
        let b = Particle::circle(Vec2::new(2.05, 0.0), 0.0, 1.0, 2).unwrap();
        let d = refine_for_qbx(&discretize(&[a, b], 10, 6).unwrap(), 1.0);
        for c in qbx_centers(&d) {
            let other = &d.particles[1 - d.particle_of(c.node)];
            assert!(other.signed_distance(&c.center) > c.radius);
        }
    }

    #[test]
    fn zero_density_gives_zero_coefficients() {
        let d = discretize(&[disk()], 10, 6).unwrap();
        let e = double_layer_coeffs(&d, &vec![0.0; d.len()], &Vec2::new(1.3, 0.0), 0.3, 2.0, &QbxOptions::default()).unwrap();
        assert!(e.coeffs.iter().all(|&c| c == 0.0));
        let (v, _) = eval_expansion(&e, &e.center, 2.0).unwrap();
        assert_eq!(v, e.coeffs[0]);
    }

    #[test]
    fn expansion_matches_direct_sum_off_surface() {
        let d = discretize(&[disk()], 16, 8).unwrap();
        let rho = 1.5;
        let sigma: Vec<f64> = d.params.iter().map(|t| 1.0 + 0.3 * t.cos() - 0.2 * (2.0 * t).sin()).collect();
        let c = Vec2::new(1.8, 0.9);
        let opts = QbxOptions { order: 24, ..Default::default() };
        let e = double_layer_coeffs(&d, &sigma, &c, 0.5, rho, &opts).unwrap();
        let x = c + Vec2::new(0.2, -0.15);
        let direct: f64 = (0..d.len())
            .map(|j| dgdny_raw(&(x - d.points[j]), &d.normals[j], rho) * d.weights[j] * sigma[j])
            .sum();
        let (v, g) = eval_expansion(&e, &x, rho).unwrap();
        assert!((v - direct).abs() < 1e-10, "{v} vs {direct}");
        let h = 1e-5;
        let fd = |dx: Vec2| eval_expansion(&e, &(x + dx), rho).unwrap().0;
        let gx = (fd(Vec2::new(h, 0.0)) - fd(Vec2::new(-h, 0.0))) / (2.0 * h);
        let gy = (fd(Vec2::new(0.0, h)) - fd(Vec2::new(0.0, -h))) / (2.0 * h);
        assert!((g - Vec2::new(gx, gy)).norm() < 1e-8);
        assert!(matches!(eval_expansion(&e, &(c + Vec2::new(1.0, 0.0)), rho), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn real_basis_conjugate_symmetry() {
        // a_l = 2 Re(alpha_l), b_l = 2 Im(alpha_l) with alpha_l from the complex
        // form (1/2pi) int sigma d_nu[K_l e^{i l theta}]; recompute directly.
        let d = discretize(&[disk()], 10, 6).unwrap();
        let rho = 2.0;
        let sigma: Vec<f64> = d.params.iter().map(|t| (1.0 + t.cos()) * 0.5).collect();
        let c = Vec2::new(1.2, 0.4);
        let p = 5;
        let e = double_layer_coeffs(&d, &sigma, &c, 0.1, rho, &QbxOptions { order: p, upsample: 1, ..Default::default() }).unwrap();
        for l in 1..=p {
            let (mut re, mut im) = (0.0, 0.0);
            let h = 1e-6;
            for j in 0..d.len() {
                let f = |y: Vec2| {
                    let dd = y - c;
                    let th = dd.y.atan2(dd.x);
                    let kl = crate::specialfn::bessel_k(l, dd.norm() / rho).unwrap();
                    (kl * (l as f64 * th).cos(), kl * (l as f64 * th).sin())
                };
                let yp = f(d.points[j] + h * d.normals[j]);
                let ym = f(d.points[j] - h * d.normals[j]);
                re += (yp.0 - ym.0) / (2.0 * h) * d.weights[j] * sigma[j] / (2.0 * PI);
                im += (yp.1 - ym.1) / (2.0 * h) * d.weights[j] * sigma[j] / (2.0 * PI);
            }
            let scale = re.hypot(im);
            assert!((e.coeffs[2 * l - 1] - 2.0 * re).abs() < 1e-6 * scale, "l={l}");
            assert!((e.coeffs[2 * l] - 2.0 * im).abs() < 1e-6 * scale, "l={l}");
        }
    }

    /// Exact double-layer potential of `sigma = cos(m t)` on a disk of radius a.
    fn disk_dl_exact(m: usize, a: f64, rho: f64, r: f64, th: f64) -> f64 {
        // G expansion gives D[e^{imt}] = a K_m'(a/rho)/rho * I_m(r/rho) e^{im th} inside and
        // a I_m'(a/rho)/rho * K_m(r/rho) e^{im th} outside.
        use crate::specialfn::{bessel_i, bessel_k};
        let km = |x: f64| bessel_k(m, x).unwrap();
        let im = |x: f64| bessel_i(m, x).unwrap();
        let dkm = |x: f64| if m == 0 { -k1(x) } else { -0.5 * (bessel_k(m - 1, x).unwrap() + bessel_k(m + 1, x).unwrap()) };
        let dim = |x: f64| if m == 0 { bessel_i(1, x).unwrap() } else { 0.5 * (bessel_i(m - 1, x).unwrap() + bessel_i(m + 1, x).unwrap()) };
        let ang = (m as f64 * th).cos();
        if r > a {
            a * dim(a / rho) / rho * km(r / rho) * ang
        } else {
            a * dkm(a / rho) / rho * im(r / rho) * ang
        }
    }

    #[test]
    fn on_surface_exterior_limit_for_fourier_modes() {
        let a = 1.0;
        let rho = 4.0;
        let d = discretize(&[disk()], 20, 6).unwrap();
        let op = DoubleLayer::new(&d, rho, QbxOptions { order: 8, upsample: 5, ..Default::default() }).unwrap();
        for m in 0..4 {
            let sigma: Vec<f64> = d.params.iter().map(|t| (m as f64 * t).cos()).collect();
            let mut out = vec![0.0; d.len()];
            op.apply(&sigma, &mut out);
            let mut err: f64 = 0.0;
            for i in 0..d.len() {
                let exact = disk_dl_exact(m, a, rho, a * (1.0 + 1e-13), d.params[i]);
                err = err.max((out[i] - exact).abs());
            }
            assert!(err < 1e-6, "mode {m}: {err}");
        }
        // Sanity on the analytic reference: jump across the boundary is sigma.
        let jump = disk_dl_exact(2, a, rho, a + 1e-12, 0.3) - disk_dl_exact(2, a, rho, a - 1e-12, 0.3);
        assert!((jump - (0.6f64).cos()).abs() < 1e-9);
        let _ = k0(1.0);
    }

    #[test]
    fn free_point_evaluation_near_and_far() {
        let rho = 2.0;
        let d = discretize(&[disk()], 20, 6).unwrap();
        let op = DoubleLayer::new(&d, rho, QbxOptions::default()).unwrap();
        let sigma: Vec<f64> = d.params.iter().map(|t| t.cos()).collect();
        let pts: Vec<Vec2> = [1.0 + 1e-6, 1.001, 1.05, 1.6, 3.0]
            .iter()
            .map(|&r| Vec2::new(r * 0.7f64.cos(), r * 0.7f64.sin()))
            .collect();
        let samples = op.eval_points(&sigma, &pts);
        for (x, s) in pts.iter().zip(&samples) {
            let exact = disk_dl_exact(1, 1.0, rho, x.norm(), 0.7);
            assert!((s.value - exact).abs() < 1e-9, "r={} {} vs {}", x.norm(), s.value, exact);
            assert!(s.inside.is_none());
        }
        let inner = op.eval_points(&sigma, &[Vec2::new(0.5, 0.0)]);
        assert_eq!(inner[0].inside, Some(0));
        let exact = disk_dl_exact(1, 1.0, rho, 0.5, 0.0);
        assert!((inner[0].value - exact).abs() < 1e-10);
    }

    #[test]
    fn on_surface_gradient_matches_exact() {
        let rho = 4.0;
        let d = discretize(&[disk()], 20, 6).unwrap();
        let op = DoubleLayer::new(&d, rho, QbxOptions { order: 8, ..Default::default() }).unwrap();
        let sigma: Vec<f64> = d.params.iter().map(|t| t.cos()).collect();
        let (_, grads) = op.apply_with_gradient(&sigma);
        let h = 1e-6;
        for i in (0..d.len()).step_by(7) {
            let t = d.params[i];
            let dr = (disk_dl_exact(1, 1.0, rho, 1.0 + 2.0 * h, t) - disk_dl_exact(1, 1.0, rho, 1.0 + h, t)) / h;
            assert!((grads[i].dot(&d.normals[i]) - dr).abs() < 1e-5, "{} vs {}", grads[i].dot(&d.normals[i]), dr);
        }
    }

    #[test]
    fn assembled_and_matrix_free_agree() {
        let parts = [
            Particle::new(Vec2::zeros(), 0.3, 1.25, 0.8, 6).unwrap(),
            Particle::new(Vec2::new(2.0, 1.4), -1.0, 1.25, 0.8, 6).unwrap(),
        ];
        let d = refine_for_qbx(&discretize(&parts, 10, 6).unwrap(), 1.0);
        let op = DoubleLayer::new(&d, 2.5, QbxOptions::default()).unwrap();
        assert!(op.is_assembled());
        let sigma: Vec<f64> = (0..d.len()).map(|i| (0.37 * i as f64).sin()).collect();
        let mut a = vec![0.0; d.len()];
        op.apply(&sigma, &mut a);
        let free = op.matrix_free();
        let mut b = vec![0.0; d.len()];
        free.apply(&sigma, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
