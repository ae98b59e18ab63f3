//! Modified Bessel functions `K_l` and `I_l` of integer order and real argument.
//!
//! `K_0` and `K_1` are evaluated by power series for `x <= 2` and by a
//! piecewise Chebyshev expansion of the exponentially scaled functions
//! `e^x sqrt(x) K(x)` for `x > 2`. The Chebyshev coefficients are generated once, on first use,
//! from Steed's continued fraction (Temme's CF2), which is accurate to machine
//! precision for `x >= 2` but too slow for inner loops. Higher orders follow
//! from the upward recurrence, which is stable for `K`.
//!
//! `I_l` is only needed for modest arguments (QBX expansions evaluate it at
//! `|x - c| / rho`), so a direct power series is used. All terms are positive
//! and the series is accurate for any argument short of overflow.

use once_cell::sync::Lazy;

use crate::error::{Error, Result};

/// Largest order accepted by [`bessel_k`] and [`bessel_i`].
pub const MAX_ORDER: usize = 64;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_TERMS: usize = 16;
const CHEB_NODES: usize = 24;
const CHEB_SEGMENTS: usize = 16;
const CHEB_TOL: f64 = 1e-18;

/// Power-series coefficients in `t = x^2 / 4` for the regular parts of
/// `I_0`, `I_1`, `K_0` and `K_1`.
struct SmallArgSeries {
    i0: [f64; SERIES_TERMS],
    i1: [f64; SERIES_TERMS],
    k0: [f64; SERIES_TERMS],
    k1: [f64; SERIES_TERMS],
}

static SMALL: Lazy<SmallArgSeries> = Lazy::new(|| {
    let mut i0 = [0.0; SERIES_TERMS];
    let mut i1 = [0.0; SERIES_TERMS];
    let mut k0 = [0.0; SERIES_TERMS];
    let mut k1 = [0.0; SERIES_TERMS];
    // 1/(k!)^2 and 1/(k!(k+1)!)
    let mut fact_sq = 1.0;
    let mut fact_fact1 = 1.0;
    let mut harmonic = 0.0;
    for k in 0..SERIES_TERMS {
        if k > 0 {
            let kf = k as f64;
            fact_sq /= kf * kf;
            fact_fact1 /= kf * (kf + 1.0);
            harmonic += 1.0 / kf;
        }
        i0[k] = fact_sq;
        i1[k] = fact_fact1;
        k0[k] = fact_sq * harmonic;
        // psi(k+1) + psi(k+2) = -2 gamma + H_k + H_{k+1}
        let psi_sum = -2.0 * EULER_GAMMA + 2.0 * harmonic + 1.0 / (k as f64 + 1.0);
        k1[k] = fact_fact1 * psi_sum;
    }
    SmallArgSeries { i0, i1, k0, k1 }
});

/// Piecewise Chebyshev coefficients of `e^x sqrt(x) K_0(x)` and
/// `e^x sqrt(x) K_1(x)` on `x >= 2`, in the variable `u = 4/x - 1 ∈ (-1, 1]`
/// split into [`CHEB_SEGMENTS`] equal pieces.
struct LargeArgCheb {
    k0: Vec<Vec<f64>>,
    k1: Vec<Vec<f64>>,
}

static LARGE: Lazy<LargeArgCheb> = Lazy::new(|| {
    let n = CHEB_NODES;
    let width = 2.0 / CHEB_SEGMENTS as f64;
    let mut k0 = Vec::with_capacity(CHEB_SEGMENTS);
    let mut k1 = Vec::with_capacity(CHEB_SEGMENTS);
    for seg in 0..CHEB_SEGMENTS {
        let lo = -1.0 + seg as f64 * width;
        let mut f0 = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        for j in 0..n {
            let v = (std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos();
            let u = lo + 0.5 * (v + 1.0) * width;
            // u = -1 is x = infinity; the scaled functions tend to sqrt(pi/2) there.
            let (a, b) = if u <= -1.0 {
                let c = std::f64::consts::FRAC_PI_2.sqrt();
                (c, c)
            } else {
                k0_k1_scaled_cf2(4.0 / (u + 1.0))
            };
            f0[j] = a;
            f1[j] = b;
        }
        k0.push(chebyshev_coefficients(&f0));
        k1.push(chebyshev_coefficients(&f1));
    }
    LargeArgCheb { k0, k1 }
});

fn chebyshev_coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut coeffs: Vec<f64> = (0..n)
        .map(|k| {
            let sum: f64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / n as f64).cos()
                })
                .sum();
            2.0 * sum / n as f64
        })
        .collect();
    coeffs[0] *= 0.5;
    while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.abs() < CHEB_TOL) {
        coeffs.pop();
    }
    coeffs
}

fn clenshaw(coeffs: &[f64], u: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * u * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    u * b1 - b2 + coeffs[0]
}

/// Steed's continued fraction for `e^x sqrt(x) K_0(x)` and `e^x sqrt(x) K_1(x)`,
/// valid for `x >= 2`.
fn k0_k1_scaled_cf2(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-17;
    const MAXIT: usize = 100_000;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAXIT {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k0 = (std::f64::consts::FRAC_PI_2).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Segment index and local Chebyshev variable for `x > 2`.
#[inline]
fn large_arg_segment(x: f64) -> (usize, f64) {
    let pos = 2.0 / x * CHEB_SEGMENTS as f64;
    let seg = (pos as usize).min(CHEB_SEGMENTS - 1);
    (seg, 2.0 * (pos - seg as f64) - 1.0)
}

/// `(K_0(x), K_1(x))` for `x > 0`, without argument checking.
///
/// Returns `(0, 0)` once `e^{-x}` underflows.
#[inline]
pub fn k0_k1(x: f64) -> (f64, f64) {
    if x <= 2.0 {
        let series = &*SMALL;
        let t = 0.25 * x * x;
        let i0 = horner(&series.i0, t);
        let i1 = 0.5 * x * horner(&series.i1, t);
        let log_half = (0.5 * x).ln();
        let k0 = -(log_half + EULER_GAMMA) * i0 + horner(&series.k0[1..], t) * t;
        let k1 = 1.0 / x + log_half * i1 - 0.25 * x * horner(&series.k1, t);
        (k0, k1)
    } else {
        let cheb = &*LARGE;
        let (seg, v) = large_arg_segment(x);
        let scale = (-x).exp() / x.sqrt();
        (clenshaw(&cheb.k0[seg], v) * scale, clenshaw(&cheb.k1[seg], v) * scale)
    }
}

/// `K_0(x)` for `x > 0`, without argument checking.
#[inline]
pub fn k0(x: f64) -> f64 {
    k0_k1(x).0
}

/// `K_1(x)` for `x > 0`, without argument checking.
#[inline]
pub fn k1(x: f64) -> f64 {
    if x <= 2.0 {
        let series = &*SMALL;
        let t = 0.25 * x * x;
        let i1 = 0.5 * x * horner(&series.i1, t);
        1.0 / x + (0.5 * x).ln() * i1 - 0.25 * x * horner(&series.k1, t)
    } else {
        let (seg, v) = large_arg_segment(x);
        clenshaw(&LARGE.k1[seg], v) * (-x).exp() / x.sqrt()
    }
}

/// Fills `out[l] = K_l(x)` for `l = 0..out.len()` by upward recurrence.
pub fn bessel_k_seq(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let (k0, k1) = k0_k1(x);
    out[0] = k0;
    if out.len() > 1 {
        out[1] = k1;
    }
    let two_over_x = 2.0 / x;
    for l in 2..out.len() {
        out[l] = out[l - 2] + (l - 1) as f64 * two_over_x * out[l - 1];
    }
}

/// `I_l(x)` by power series, for `x >= 0`.
fn bessel_i_series(order: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=order {
        lead *= half / k as f64;
        if lead == 0.0 {
            return 0.0;
        }
    }
    let t = half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    let l = order as f64;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= t / (k * (k + l));
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    lead * sum
}

/// Fills `out[l] = I_l(x)` for `l = 0..out.len()`.
pub fn bessel_i_seq(x: f64, out: &mut [f64]) {
    for (l, v) in out.iter_mut().enumerate() {
        *v = bessel_i_series(l, x);
    }
}

/// Modified Bessel function of the second kind, `K_order(x)`.
pub fn bessel_k(order: usize, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("bessel_k requires x > 0, got {x}")));
    }
    if order > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "bessel order {order} exceeds {MAX_ORDER}"
        )));
    }
    let mut seq = [0.0; MAX_ORDER + 1];
    bessel_k_seq(x, &mut seq[..=order.max(1)]);
    Ok(seq[order])
}

/// Modified Bessel function of the first kind, `I_order(x)`.
pub fn bessel_i(order: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("bessel_i requires x >= 0, got {x}")));
    }
    if order > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "bessel order {order} exceeds {MAX_ORDER}"
        )));
    }
    Ok(bessel_i_series(order, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 40-digit mpmath.
    const K_REF: &[(usize, f64, f64)] = &[
        (0, 1e-08, 18.536612259610778),
        (0, 0.001, 7.0236888005623813),
        (0, 0.1, 2.4270690247020166),
        (0, 0.5, 0.92441907122766586),
        (0, 1.0, 0.42102443824070833),
        (0, 1.9, 0.12884597927604749),
        (0, 2.0, 0.11389387274953344),
        (0, 2.1, 0.10078374088996693),
        (0, 3.7, 0.015630659921626658),
        (0, 5.0, 0.0036910983340425943),
        (0, 8.0, 0.00014647070522281539),
        (0, 12.5, 1.3084036967769774e-6),
        (0, 20.0, 5.7412378153365243e-10),
        (0, 50.0, 3.4101677497894955e-23),
        (0, 120.0, 8.7635680998255777e-54),
        (0, 400.0, 1.199780043200976e-175),
        (0, 700.0, 4.6697764316853769e-306),
        (1, 1e-08, 99999999.999999903),
        (1, 0.001, 999.99623815608555),
        (1, 0.1, 9.8538447808706056),
        (1, 0.5, 1.6564411200033009),
        (1, 1.0, 0.60190723019723457),
        (1, 1.9, 0.15966015303266763),
        (1, 2.0, 0.13986588181652243),
        (1, 2.1, 0.1227464115335079),
        (1, 3.7, 0.017628035102223263),
        (1, 5.0, 0.0040446134454521642),
        (1, 8.0, 0.00015536921180500113),
        (1, 12.5, 1.3597678438215176e-6),
        (1, 20.0, 5.8830579695570382e-10),
        (1, 50.0, 3.4441022267175556e-23),
        (1, 120.0, 8.8000075200927614e-54),
        (1, 400.0, 1.2012788332610326e-175),
        (1, 700.0, 4.6731107967079661e-306),
        (2, 0.001, 1999999.5000009716),
        (2, 0.1, 199.50396464211412),
        (2, 1.0, 1.6248388986351775),
        (2, 2.1, 0.2176850852075935),
        (2, 12.5, 1.5259665517884202e-6),
        (2, 700.0, 4.6831281768188282e-306),
        (5, 0.001, 3.8399997600000096e+17),
        (5, 0.5, 12097.979476096393),
        (5, 1.9, 12.468991254156079),
        (5, 3.7, 0.25639976139072566),
        (5, 50.0, 4.3671822541009863e-23),
        (9, 1e-08, 1.0321919999999998e+79),
        (9, 0.1, 10318694975920005.0),
        (9, 2.0, 17810.476299372002),
        (9, 8.0, 0.012810496876647417),
        (9, 120.0, 1.2262616537993064e-53),
    ];

    const I_REF: &[(usize, f64, f64)] = &[
        (0, 1e-06, 1.00000000000025),
        (0, 0.1, 1.0025015629340956),
        (0, 1.0, 1.2660658777520083),
        (0, 5.0, 27.239871823604447),
        (0, 20.0, 43558282.559553533),
        (0, 50.0, 2.9325537838493363e+20),
        (1, 1e-06, 5.0000000000006248e-7),
        (1, 0.5, 0.25789430539089632),
        (1, 12.5, 29345.749642071127),
        (2, 0.1, 0.0012510419922417593),
        (2, 2.0, 0.6889484476987382),
        (5, 1e-06, 2.6041666666667746e-34),
        (5, 5.0, 2.1579745473225465),
        (9, 0.5, 1.0578171775294129e-11),
        (9, 20.0, 5657391.5807925771),
        (9, 50.0, 1.2967932112618279e+20),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn k_matches_reference_table() {
        for &(l, x, want) in K_REF {
            let got = bessel_k(l, x).unwrap();
            assert!(rel(got, want) < 1e-13, "K_{l}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn i_matches_reference_table() {
        for &(l, x, want) in I_REF {
            let got = bessel_i(l, x).unwrap();
            assert!(rel(got, want) < 1e-13, "I_{l}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn stated_point_values() {
        assert!(rel(bessel_k(0, 1.0).unwrap(), 0.421024438240708) < 1e-14);
        assert!(rel(bessel_k(1, 1.0).unwrap(), 0.601907230197235) < 1e-14);
        assert!(rel(bessel_i(0, 1.0).unwrap(), 1.266065877752008) < 1e-14);
        assert_eq!(bessel_i(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn k0_small_argument_asymptote() {
        let x: f64 = 1e-6;
        let lead = -(0.5 * x).ln() - EULER_GAMMA;
        assert!(rel(bessel_k(0, x).unwrap(), lead) < 1e-9);
    }

    #[test]
    fn underflow_returns_zero() {
        assert_eq!(bessel_k(0, 800.0).unwrap(), 0.0);
        assert_eq!(bessel_k(3, 1e4).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bessel_k(0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(0, f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0, -1e-3), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(65, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn wronskian_identity() {
        for l in 0..=12 {
            for &x in &[0.1, 1.0, 5.0, 20.0] {
                let w = bessel_i(l, x).unwrap() * bessel_k(l + 1, x).unwrap()
                    + bessel_i(l + 1, x).unwrap() * bessel_k(l, x).unwrap();
                assert!((x * w - 1.0).abs() < 1e-11, "l={l} x={x}: {}", x * w - 1.0);
            }
        }
    }

    #[test]
    fn recurrence_consistency() {
        for l in 1..20 {
            for &x in &[1.0, 2.5, 7.0, 30.0, 150.0] {
                let lhs = bessel_k(l + 1, x).unwrap();
                let rhs = bessel_k(l - 1, x).unwrap()
                    + 2.0 * l as f64 / x * bessel_k(l, x).unwrap();
                assert!(rel(lhs, rhs) < 1e-10);
            }
        }
    }

    #[test]
    fn series_and_chebyshev_agree_at_switch() {
        let (a0, a1) = k0_k1(2.0);
        let (b0, b1) = k0_k1_scaled_cf2(2.0);
        let scale = (-2.0f64).exp() / 2.0f64.sqrt();
        assert!(rel(a0, b0 * scale) < 1e-14);
        assert!(rel(a1, b1 * scale) < 1e-14);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn k_strictly_decreasing(l in 0usize..12, x in 1e-4f64..600.0, dx in 1e-3f64..1.0) {
                let a = bessel_k(l, x).unwrap();
                let b = bessel_k(l, x + dx).unwrap();
                prop_assert!(b < a || (a == 0.0 && b == 0.0));
            }

            #[test]
            fn k_positive(l in 0usize..20, x in 1e-8f64..700.0) {
                prop_assert!(bessel_k(l, x).unwrap() > 0.0);
            }
        }
    }
}
