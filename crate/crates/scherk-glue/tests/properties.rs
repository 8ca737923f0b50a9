use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use scherk_glue::analyzer::{classify, solve_zeta, zeta_residuals, zeta_sum, Class};
use scherk_glue::config::Configuration;
use scherk_glue::forms::{default_order, solve_forms, FormSpec};
use scherk_glue::noded::NodedSurface;
use scherk_glue::quad::circle_trapezoid;
use scherk_glue::scherk::{ScherkParams, Variant};
use scherk_glue::solver::{leading_order_guess, reduce_mod_lattice, MaskPreset, UnknownVector};

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Odd), Just(Variant::Even)]
}

fn params() -> impl Strategy<Value = ScherkParams> {
    (0.2..1.37f64, variant()).prop_map(|(t, v)| ScherkParams::new(t, v).unwrap())
}

fn away_from(p: &ScherkParams, z: C64) -> bool {
    p.punctures().iter().all(|q| (z - q).norm() > 0.05)
}

fn tpms() -> impl Strategy<Value = Configuration> {
    let phase = prop_oneof![Just(0.0), Just(PI / 2.0), Just(PI), Just(-PI / 2.0)];
    (
        prop::collection::vec(0.5..1.5f64, 2),
        prop::collection::vec(phase, 2),
        0.3..1.27f64,
        -4.0..4.0f64,
        -4.0..4.0f64,
    )
        .prop_map(|(raw, psi, theta, l1, l2)| {
            let s: f64 = raw.iter().sum();
            Configuration::tpms(raw.iter().map(|x| x / s).collect(), psi, theta, l1, l2).unwrap()
        })
}

fn any_config() -> impl Strategy<Value = Configuration> {
    let dpms = (1usize..5, 0.3..1.27f64, prop::collection::vec((0.1..1.0f64, -PI..PI), 4)).prop_map(|(n, theta, g)| {
        let g = &g[..n - 1];
        Configuration::dpms(n, g.iter().map(|x| x.0).collect(), g.iter().map(|x| x.1).collect(), theta).unwrap()
    });
    prop_oneof![tpms(), dpms]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weierstrass_data_is_conformal(p in params(), x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let z = C64::new(x, y);
        prop_assume!(away_from(&p, z));
        let f = p.weierstrass_at(z).unwrap();
        let q = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).norm();
        prop_assert!(q <= 1e-11 * (1.0 + f[2].norm_sqr()), "q = {q:e}");
    }

    #[test]
    fn residues_sum_to_zero(p in params(), r in 1.5..4.0f64) {
        // The integral over a circle enclosing every puncture is 2πi times
        // the residue sum.
        let total = circle_trapezoid(|z| p.weierstrass_at(z).unwrap(), C64::new(0.0, 0.0), r, 256);
        prop_assert!(total.iter().all(|c| c.norm() < 1e-10), "{total:?}");
        let c = p.coefficients();
        for row in c {
            prop_assert!(row.iter().sum::<C64>().norm() < 1e-14);
        }
    }

    #[test]
    fn unit_arc_lies_over_the_first_end(theta in 0.3..1.27f64, s in 0.05..0.95f64) {
        let p = ScherkParams::new(theta, Variant::Odd).unwrap();
        let v = p.vartheta();
        let z = C64::from_polar(1.0, v + s * (PI - 2.0 * v));
        let x = p.immerse(z, 8).unwrap();
        let mu = p.end_data(1).unwrap().mu;
        prop_assert!((x[0] - mu[0]).abs() < 1e-8 && (x[1] - mu[1]).abs() < 1e-8, "{x:?} vs {mu:?}");
    }

    #[test]
    fn reflection_in_the_unit_circle_is_a_half_turn(theta in 0.3..1.27f64, r in 0.2..0.9f64, s in 0.05..0.95f64) {
        // z ↦ 1/z̄ fixes the arc through i, which is a vertical line; the
        // surface is symmetric under the half turn about it.
        let p = ScherkParams::new(theta, Variant::Odd).unwrap();
        let v = p.vartheta();
        let z = C64::from_polar(r, v + s * (PI - 2.0 * v));
        let a = p.immerse(z, 8).unwrap();
        let b = p.immerse(1.0 / z.conj(), 8).unwrap();
        let mu = p.end_data(1).unwrap().mu;
        prop_assert!((a[0] + b[0] - 2.0 * mu[0]).abs() < 1e-8);
        prop_assert!((a[1] + b[1] - 2.0 * mu[1]).abs() < 1e-8);
        prop_assert!((a[2] - b[2]).abs() < 1e-8);
    }

    #[test]
    fn ends_form_a_rhombus_of_side_pi(p in params()) {
        let mu: Vec<[f64; 2]> = (1..=4).map(|j| p.end_data(j).unwrap().mu).collect();
        for j in 0..4 {
            let (a, b) = (mu[j], mu[(j + 1) % 4]);
            prop_assert!(((b[0] - a[0]).hypot(b[1] - a[1]) - PI).abs() < 1e-12);
        }
        prop_assert!((mu[0][0] + mu[2][0]).abs() < 1e-15 && (mu[1][1] + mu[3][1]).abs() < 1e-15);
    }

    #[test]
    fn node_parameter_has_the_prescribed_size_and_phase(
        a in 0.3..0.7f64, eps in 0.15..0.3f64, psi in prop::collection::vec(-PI..PI, 2)
    ) {
        let c = Configuration::tpms(vec![a, 1.0 - a], psi.clone(), FRAC_PI_4, 0.0, 0.0).unwrap();
        let sf = NodedSurface::build(&c, eps, None, None).unwrap();
        for k in 1..=2 {
            let t = sf.node_t(0, k);
            let l = c.ell[k - 1] / (eps * eps);
            prop_assert!((t.norm().ln() + l).abs() <= 1e-12 * l);
            let d = (t.arg() - PI - psi[k - 1]).rem_euclid(2.0 * PI);
            prop_assert!(d.min(2.0 * PI - d) < 1e-12);
            prop_assert_eq!(sf.node_t(1, k), t);
        }
    }

    #[test]
    fn unknown_vector_round_trips(eps in 0.2..0.5f64, seed in prop::collection::vec(-5.0..5.0f64, 24)) {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4, 0.0, 0.0).unwrap();
        let mut u = leading_order_guess(&c, eps, [0.0, 0.0], MaskPreset::Default);
        prop_assert_eq!(u.free.len(), seed.len());
        u.unpack(&seed);
        prop_assert_eq!(u.pack(), seed);
        let back: UnknownVector = serde_json::from_str(&serde_json::to_string(&u).unwrap()).unwrap();
        prop_assert_eq!(back, u);
    }

    #[test]
    fn configuration_json_round_trips(c in any_config()) {
        prop_assert_eq!(Configuration::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn zeta_roots_back_substitute(c in tpms()) {
        if let Some(roots) = solve_zeta(&c) {
            for z in roots {
                let r = zeta_residuals(&c, zeta_sum(c.theta), z);
                prop_assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12, "{r:?}");
            }
        }
    }

    #[test]
    fn classification_is_deterministic_and_justified(c in any_config()) {
        let v = classify(&c);
        prop_assert_eq!(&v, &classify(&c));
        prop_assert_eq!(v.class == Class::Obstructed, !v.reasons.is_empty());
        for r in &v.reasons {
            prop_assert!(r.reproduce(&c), "{r:?} does not reproduce");
        }
    }

    #[test]
    fn lattice_reduction_is_idempotent(c in tpms(), x in -50.0..50.0f64, y in -50.0..50.0f64) {
        let r = reduce_mod_lattice(&c, 0.0, [x, y]);
        let rr = reduce_mod_lattice(&c, 0.0, r);
        prop_assert!((r[0] - rr[0]).abs() < 1e-9 && (r[1] - rr[1]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn node_residues_are_opposite_and_balanced(r in 1e-5..1e-3f64, phase in -PI..PI) {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4, 0.0, 0.0).unwrap();
        let mut sf = NodedSurface::build(&c, 0.3, None, None).unwrap();
        let t = C64::from_polar(r, phase);
        for k in 1..=2 {
            sf.set_t(0, k, t);
            sf.set_t(1, k, t.conj());
        }
        let forms = solve_forms(&sf, &FormSpec::central(&c, 0.0), default_order(&sf), 1e-13).unwrap();
        for k in 1..=2 {
            let kn = sf.next(k);
            for s in 0..2 {
                for i in 0..3 {
                    prop_assert_eq!(forms.residues[k - 1][s][i], -forms.residues[kn - 1][2 + s][i]);
                }
            }
            prop_assert!(forms.residue_sum(k).iter().all(|x| x.norm() < 1e-15));
        }
    }
}
