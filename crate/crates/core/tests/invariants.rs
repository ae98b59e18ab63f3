use std::f64::consts::PI;

use proptest::prelude::*;

use janus_core::dynamics::wrap_angle;
use janus_core::geometry::{discretize, surface_gap, LabelConvention, Particle};
use janus_core::physics::{evaluate, repulsion, ForceTorqueSet, PhysParams};
use janus_core::solver::Numerics;
use janus_core::stokes::solve_mobility;
use janus_core::{cross, Vec2};

fn coarse() -> Numerics {
    Numerics {
        n_pan: 12,
        ..Default::default()
    }
}

fn rotate(v: &Vec2, phi: f64) -> Vec2 {
    let (s, c) = phi.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Two ellipses with a surface gap of at least 0.3 nm.
fn pair() -> impl Strategy<Value = Vec<Particle>> {
    (-PI..PI, -PI..PI, 0.0..(2.0 * PI), 0.3f64..1.5, 1u32..4).prop_filter_map("overlap", |(t1, t2, dir, gap, half_p)| {
        let p = 2 * half_p;
        let a = Particle::new(Vec2::zeros(), t1, 1.25, 0.8, p).ok()?;
        let d = Vec2::new(dir.cos(), dir.sin());
        let b = Particle::new(d * (2.5 + gap), t2, 1.25, 0.8, p).ok()?;
        (surface_gap(&a, &b) > 0.3).then_some(vec![a, b])
    })
}

proptest! {
    #[test]
    fn wrapped_angles_lie_in_half_open_interval(t in -1e3f64..1e3) {
        let w = wrap_angle(t);
        prop_assert!(w > -PI && w <= PI);
        let k = ((t - w) / (2.0 * PI)).round();
        prop_assert!((t - w - 2.0 * PI * k).abs() < 1e-9);
    }

    #[test]
    fn labels_stay_in_unit_interval(theta in -PI..PI, t in 0.0..(2.0 * PI), half_p in 1u32..6) {
        let p = Particle::new(Vec2::new(0.3, -0.2), theta, 1.25, 0.8, 2 * half_p).unwrap();
        let x = p.point(t);
        for conv in [LabelConvention::HalfAngle, LabelConvention::FullAngle] {
            let f = p.janus_label(&x, conv);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn quadrature_weights_sum_to_perimeter(a in 0.5f64..2.0, ratio in 0.4f64..1.0, n_pan in 8usize..24) {
        let p = Particle::new(Vec2::zeros(), 0.0, a, a * ratio, 2).unwrap();
        let d = discretize(std::slice::from_ref(&p), n_pan, 8).unwrap();
        let total: f64 = d.weights.iter().sum();
        prop_assert!((total - p.perimeter()).abs() < 1e-6 * p.perimeter());
    }

    #[test]
    fn repulsion_obeys_action_reaction(parts in pair()) {
        let r = repulsion(&parts, &PhysParams::default()).unwrap();
        let scale = r.force[0].norm().max(1e-12);
        prop_assert!((r.force[0] + r.force[1]).norm() < 1e-10 * scale);
        let net: f64 = (0..2).map(|i| r.torque[i] + cross(&parts[i].center, &r.force[i])).sum();
        let tscale = (0..2).map(|i| r.torque[i].abs() + parts[i].center.norm() * r.force[i].norm()).sum::<f64>();
        prop_assert!(net.abs() <= 1e-10 * tscale.max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn forces_rotate_with_the_frame(parts in pair(), phi in -PI..PI, shift in (-5.0f64..5.0, -5.0f64..5.0)) {
        let phys = PhysParams::default();
        let e0 = evaluate(&parts, &phys, &coarse(), None).unwrap();
        let moved: Vec<Particle> = parts
            .iter()
            .map(|p| {
                let c = rotate(&p.center, phi) + Vec2::new(shift.0, shift.1);
                Particle::new(c, p.theta + phi, p.a, p.b, p.p).unwrap()
            })
            .collect();
        let e1 = evaluate(&moved, &phys, &coarse(), None).unwrap();
        let scale = e0.ft.force[0].norm().max(1.0);
        prop_assert!((e0.energy - e1.energy).abs() < 1e-6 * e0.energy.abs().max(1.0));
        for i in 0..2 {
            prop_assert!((rotate(&e0.ft.force[i], phi) - e1.ft.force[i]).norm() < 1e-5 * scale);
            prop_assert!((e0.ft.torque[i] - e1.ft.torque[i]).abs() < 1e-5 * scale);
        }
    }

    #[test]
    fn mobility_dissipates(parts in pair(), fx in -1.0f64..1.0, fy in -1.0f64..1.0, t0 in -1.0f64..1.0, t1 in -1.0f64..1.0) {
        let d = discretize(&parts, 12, 6).unwrap();
        let mut ft = ForceTorqueSet::zeros(2);
        ft.force = vec![Vec2::new(fx, fy), Vec2::new(-fx, -fy)];
        ft.torque = vec![t0, t1];
        let s = solve_mobility(&d, &ft, 1.0, 1e-12, None).unwrap();
        let power: f64 = (0..2).map(|i| ft.force[i].dot(&s.velocity[i]) + ft.torque[i] * s.omega[i]).sum();
        prop_assert!(power >= -1e-10, "power {power}");
    }

    #[test]
    fn full_angle_label_is_blind_to_flips(parts in pair(), which in 0usize..2) {
        let phys = PhysParams {
            label: LabelConvention::FullAngle,
            ..PhysParams::default()
        };
        let mut flipped = parts.clone();
        flipped[which].theta += PI;
        let a = evaluate(&parts, &phys, &coarse(), None).unwrap();
        let b = evaluate(&flipped, &phys, &coarse(), None).unwrap();
        let scale = a.ft.force[0].norm().max(1.0);
        prop_assert!((a.energy - b.energy).abs() < 1e-6 * a.energy.abs().max(1.0));
        prop_assert!((a.ft.force[0] - b.ft.force[0]).norm() < 1e-5 * scale);
    }
}
