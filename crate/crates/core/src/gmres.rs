//! Unrestarted GMRES for matrix-free real operators.
//!
//! Arnoldi with modified Gram–Schmidt, Givens rotations for the least-squares
//! update. The target is `||b - A x||_inf <= tol * ||b||_inf`. The Givens
//! estimate tracks the Euclidean residual, which can be up to `sqrt(n)` larger,
//! so once the estimate is within that factor the true max-norm residual is
//! computed and checked.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final max-norm residual relative to `||b||_inf`, recomputed from `x`.
    pub residual: f64,
    /// Relative residual estimate after each iteration.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `x0 + V y` where `y` solves the rotated `k x k` triangular system.
fn update(x0: &[f64], basis: &[Vec<f64>], h: &[Vec<f64>], g: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= h[j][i] * y[j];
        }
        y[i] = s / h[i][i];
    }
    let mut x = x0.to_vec();
    for (j, yj) in y.iter().enumerate() {
        x.iter_mut().zip(&basis[j]).for_each(|(xi, vi)| *xi += yj * vi);
    }
    x
}

/// Solves `A x = b` given `apply(v, out)` computing `out = A v`.
pub fn gmres<F>(mut apply: F, b: &[f64], x0: Option<&[f64]>, opts: &GmresOptions) -> Result<GmresOutcome>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_inf = norm_inf(b);
    let x = match x0 {
        Some(v) if v.len() == n => v.to_vec(),
        _ => vec![0.0; n],
    };
    if b_inf == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
        });
    }
    let target = opts.tol * b_inf;

    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let beta = dot(&r, &r).sqrt();
    let mut history = vec![beta / b_inf];
    if beta <= target {
        return Ok(GmresOutcome {
            residual: norm_inf(&r) / b_inf,
            x,
            iterations: 0,
            history,
        });
    }

    let m = opts.max_iter.min(n.max(1));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    basis.push(r.iter().map(|v| v / beta).collect());
    // Column-major upper Hessenberg after rotations.
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut cs: Vec<f64> = Vec::with_capacity(m);
    let mut sn: Vec<f64> = Vec::with_capacity(m);
    let mut g = vec![beta];
    let mut w = vec![0.0; n];
    let mut k = 0;
    let mut converged = false;
    while k < m {
        apply(&basis[k], &mut w);
        let mut col = vec![0.0; k + 2];
        for (j, v) in basis.iter().enumerate() {
            let hj = dot(&w, v);
            col[j] = hj;
            w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hj * vi);
        }
        let hnext = dot(&w, &w).sqrt();
        col[k + 1] = hnext;
        for j in 0..k {
            let (c, s) = (cs[j], sn[j]);
            let (a, bb) = (col[j], col[j + 1]);
            col[j] = c * a + s * bb;
            col[j + 1] = -s * a + c * bb;
        }
        let denom = col[k].hypot(col[k + 1]);
        let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
        col[k] = denom;
        col[k + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        h.push(col);
        k += 1;
        let est = g[k].abs();
        history.push(est / b_inf);
        if est <= target {
            converged = true;
            break;
        }
        if hnext <= f64::EPSILON * beta {
            // Lucky breakdown: the Krylov space is invariant.
            converged = true;
            break;
        }
        basis.push(w.iter().map(|v| v / hnext).collect());
        if est <= target * (n as f64).sqrt() {
            let trial = update(&x, &basis, &h, &g, k);
            apply(&trial, &mut r);
            let res = r.iter().zip(b).fold(0.0f64, |m, (ri, bi)| m.max((bi - ri).abs()));
            if res <= target {
                converged = true;
                break;
            }
        }
    }

    let x = update(&x, &basis, &h, &g, k);
    apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let residual = norm_inf(&r) / b_inf;
    if converged {
        Ok(GmresOutcome {
            x,
            iterations: k,
            residual,
            history,
        })
    } else {
        Err(Error::NoConvergence {
            iterations: k,
            residual,
            history,
        })
    }
}
