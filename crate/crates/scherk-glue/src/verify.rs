//! Randomized invariant suite behind the `verify` command.
//!
//! Every check draws its samples from one seeded generator, records the
//! worst deviation it saw and compares it with a fixed bound. The suite is
//! deterministic for a given seed.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64 as C64;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::analyzer::{classify, solve_zeta, zeta_residuals, zeta_sum, Class};
use crate::config::Configuration;
use crate::forms::{default_order, solve_forms, FormSpec};
use crate::mesh::{default_cutoff, mesh_glued, mesh_scherk, unit_combinations};
use crate::noded::NodedSurface;
use crate::scherk::{ScherkParams, Variant};
use crate::solver::{leading_order_guess, newton_solve, period_lattice, MaskPreset, SolveOptions, UnknownVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub bound: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, samples: usize, worst: f64, bound: f64) -> Self {
        Self { name: name.into(), samples, worst, bound, passed: worst <= bound }
    }

    /// A check that could not be evaluated at all.
    fn failed(name: &str, why: impl std::fmt::Display) -> Self {
        eprintln!("{name}: {why}");
        Self { name: name.into(), samples: 0, worst: f64::INFINITY, bound: 0.0, passed: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Bound on mesh conformality witnesses and period closure.
    pub mesh_tol: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 0, mesh_tol: crate::mesh::MESH_TOL }
    }
}

fn random_params(rng: &mut StdRng) -> ScherkParams {
    let variant = if rng.random_range(0..2) == 0 { Variant::Odd } else { Variant::Even };
    ScherkParams::new(rng.random_range(0.2..1.37), variant).expect("angle in range")
}

fn random_point(rng: &mut StdRng, avoid: &[C64]) -> C64 {
    loop {
        let z = C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        if avoid.iter().all(|p| (z - p).norm() > 0.05) {
            return z;
        }
    }
}

fn meeks() -> Configuration {
    Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4, 0.0, 0.0).expect("valid")
}

fn conformality(rng: &mut StdRng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let count = 4000;
    for _ in 0..count {
        let p = random_params(rng);
        let z = random_point(rng, &p.punctures());
        let f = p.weierstrass_at(z).expect("off the punctures");
        let q = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).norm();
        worst = worst.max(q / (1.0 + f[2].norm_sqr()));
    }
    CheckOutcome::new("scherk conformality", count, worst, 1e-11)
}

fn gauss_map(rng: &mut StdRng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let count = 2000;
    for _ in 0..count {
        let p = random_params(rng);
        let z = random_point(rng, &p.punctures());
        let expect = match p.variant {
            Variant::Odd => z,
            Variant::Even => 1.0 / z,
        };
        let g = p.gauss_map(z).expect("off the punctures");
        worst = worst.max((g - expect).norm() / (1.0 + expect.norm()));
    }
    CheckOutcome::new("gauss map identity", count, worst, 1e-12)
}

fn undulation(rng: &mut StdRng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let count = 500;
    for _ in 0..count {
        let p = random_params(rng);
        for j in 1..=4 {
            let a = p.undulation_coefficients(j);
            worst = worst.max(a[0].re.abs()).max(a[1].re.abs());
        }
    }
    CheckOutcome::new("undulation residues imaginary", count, worst, 1e-12)
}

fn rhombus(rng: &mut StdRng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let count = 500;
    for _ in 0..count {
        let p = random_params(rng);
        let mu: Vec<[f64; 2]> = (1..=4).map(|j| p.end_data(j).expect("end index").mu).collect();
        let mut sum = [0.0; 2];
        for j in 0..4 {
            let (a, b) = (mu[j], mu[(j + 1) % 4]);
            worst = worst.max(((b[0] - a[0]).hypot(b[1] - a[1]) - PI).abs());
            sum = [sum[0] + a[0], sum[1] + a[1]];
        }
        worst = worst.max(sum[0].abs()).max(sum[1].abs());
    }
    CheckOutcome::new("ends on a centered rhombus of side pi", count, worst, 1e-12)
}

fn arc_symmetry(rng: &mut StdRng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let count = 40;
    for _ in 0..count {
        let p = ScherkParams::new(rng.random_range(0.3..1.27), Variant::Odd).expect("angle in range");
        let v = p.vartheta();
        let z = C64::from_polar(1.0, rng.random_range(v + 0.05..PI - v - 0.05));
        let x = p.immerse(z, 8).expect("off the punctures");
        let mu = p.end_data(1).expect("end index").mu;
        worst = worst.max((x[0] - mu[0]).abs()).max((x[1] - mu[1]).abs());
    }
    CheckOutcome::new("unit arc maps to a vertical line", count, worst, 1e-8)
}

fn node_parameters(rng: &mut StdRng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..500 {
        let a = rng.random_range(0.2..0.8);
        let psi = [rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
        let Ok(c) = Configuration::tpms(vec![a, 1.0 - a], psi.to_vec(), FRAC_PI_4, 0.0, 0.0) else {
            continue;
        };
        let eps = rng.random_range(0.15..0.35);
        // Too large a node parameter is rejected by construction.
        let Ok(sf) = NodedSurface::build(&c, eps, None, None) else { continue };
        count += 1;
        for k in 1..=2 {
            let t = sf.node_t(0, k);
            let l = c.ell[k - 1] / (eps * eps);
            worst = worst.max((t.norm().ln() + l).abs() / l);
            let d = (t.arg() - (PI + psi[k - 1])).rem_euclid(2.0 * PI);
            worst = worst.max(d.min(2.0 * PI - d));
        }
    }
    CheckOutcome::new("node parameter modulus and phase", count, worst, 1e-12)
}

/// Residue antisymmetry across nodes, residue sums and A-period prescription
/// on forms solved at random small t.
fn form_periods(rng: &mut StdRng) -> Vec<CheckOutcome> {
    let c = meeks();
    let spec = FormSpec::central(&c, 0.0);
    let (mut res_worst, mut a_worst): (f64, f64) = (0.0, 0.0);
    let count = 4;
    for _ in 0..count {
        let t = C64::from_polar(rng.random_range(1e-5..1e-3), rng.random_range(-PI..PI));
        let mut sf = match NodedSurface::build(&c, 0.3, None, None) {
            Ok(s) => s,
            Err(e) => return vec![CheckOutcome::failed("node residues opposite", e)],
        };
        for k in 1..=2 {
            sf.set_t(0, k, t);
            sf.set_t(1, k, t.conj());
        }
        let forms = match solve_forms(&sf, &spec, default_order(&sf), 1e-13) {
            Ok(f) => f,
            Err(e) => return vec![CheckOutcome::failed("node residues opposite", e)],
        };
        for k in 1..=2 {
            let kn = sf.next(k);
            for s in 0..2 {
                let two_pi_i = C64::new(0.0, 2.0 * PI);
                let expect = spec.residue(k, s);
                let got = forms.a_period_numeric(s, k);
                for i in 0..3 {
                    res_worst = res_worst.max((forms.residues[k - 1][s][i] + forms.residues[kn - 1][2 + s][i]).norm());
                    let e = expect[i] * two_pi_i;
                    a_worst = a_worst.max((got[i] - e).norm() / (1.0 + e.norm()));
                }
            }
            res_worst = res_worst.max(forms.residue_sum(k).iter().map(|x| x.norm()).fold(0.0, f64::max));
        }
    }
    vec![
        CheckOutcome::new("node residues opposite, sums vanish", count, res_worst, 1e-14),
        CheckOutcome::new("A-periods follow the prescribed forces", count, a_worst, 1e-10),
    ]
}

fn unknown_round_trip(rng: &mut StdRng) -> CheckOutcome {
    let c = meeks();
    let count = 100;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let mut u = leading_order_guess(&c, rng.random_range(0.2..0.5), [0.0, 0.0], MaskPreset::Default);
        let x: Vec<f64> = (0..u.free.len()).map(|_| rng.random_range(-5.0..5.0)).collect();
        u.unpack(&x);
        let packed = u.pack();
        worst = worst.max(packed.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let back: UnknownVector = serde_json::from_str(&serde_json::to_string(&u).expect("serializable")).expect("parses");
        if back != u {
            worst = f64::INFINITY;
        }
    }
    CheckOutcome::new("unknown vector pack and JSON round trip", count, worst, 0.0)
}

fn random_tpms(rng: &mut StdRng) -> Option<Configuration> {
    let n = 2 * rng.random_range(1..3);
    let ell: Vec<f64> = if rng.random_range(0..2) == 0 {
        vec![1.0 / n as f64; n]
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    };
    let choices = [0.0, PI / 2.0, PI, -PI / 2.0];
    let psi: Vec<f64> = (0..n).map(|_| choices[rng.random_range(0..4)]).collect();
    let lambda = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
    Configuration::tpms(ell, psi, rng.random_range(0.3..1.27), lambda[0], lambda[1]).ok()
}

fn random_config(rng: &mut StdRng) -> Option<Configuration> {
    if rng.random_range(0..3) == 0 {
        let n = rng.random_range(1..5);
        let ell: Vec<f64> = (1..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let psi: Vec<f64> = (1..n).map(|_| rng.random_range(-PI..PI)).collect();
        Configuration::dpms(n, ell, psi, rng.random_range(0.3..1.27)).ok()
    } else {
        random_tpms(rng)
    }
}

fn zeta_back_substitution(rng: &mut StdRng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..2000 {
        let Some(c) = random_tpms(rng) else { continue };
        if let Some(roots) = solve_zeta(&c) {
            for z in roots {
                count += 1;
                let r = zeta_residuals(&c, zeta_sum(c.theta), z);
                worst = worst.max(r[0].abs()).max(r[1].abs());
            }
        }
    }
    if count == 0 {
        return CheckOutcome::failed("zeta back-substitution", "no configuration had a root");
    }
    CheckOutcome::new("zeta roots back-substitute", count, worst, 1e-12)
}

fn classifier(rng: &mut StdRng) -> CheckOutcome {
    let mut bad = 0usize;
    let mut count = 0;
    for _ in 0..500 {
        let Some(c) = random_config(rng) else { continue };
        count += 1;
        let v = classify(&c);
        let consistent = v == classify(&c)
            && (v.class == Class::Obstructed) == !v.reasons.is_empty()
            && v.reasons.iter().all(|r| r.reproduce(&c));
        if !consistent {
            bad += 1;
        }
    }
    CheckOutcome::new("classifier deterministic, reasons reproduce", count, bad as f64, 0.0)
}

fn scherk_mesh(rng: &mut StdRng, tol: f64) -> CheckOutcome {
    let name = "scherk mesh manifold, conformal, deterministic";
    let p = random_params(rng);
    let build = || mesh_scherk(&p, 16, default_cutoff(&p));
    match (build(), build()) {
        (Ok(a), Ok(b)) => {
            let sound = a.is_manifold() && a.is_consistently_oriented() && a.components() == 1;
            let worst = if sound && a.to_obj() == b.to_obj() { a.max_conformality() } else { f64::INFINITY };
            CheckOutcome::new(name, a.vertex_count(), worst, tol)
        }
        (Err(e), _) | (_, Err(e)) => CheckOutcome::failed(name, e),
    }
}

fn glued_mesh(tol: f64) -> CheckOutcome {
    let name = "glued Meeks piece closes under its lattice";
    let c = meeks();
    let report = match newton_solve(&c, 0.4, &SolveOptions::default()) {
        Ok(r) => r,
        Err(e) => return CheckOutcome::failed(name, e),
    };
    match mesh_glued(&report, 16) {
        Ok(m) => {
            let lattice = period_lattice(&c, &report.solution);
            let defect = m.closure_defect(&unit_combinations(&lattice), |_| false);
            let worst = if m.is_manifold() && m.components() == 1 { defect.max(m.max_conformality()) } else { f64::INFINITY };
            CheckOutcome::new(name, m.vertex_count(), worst, tol)
        }
        Err(e) => CheckOutcome::failed(name, e),
    }
}

/// Runs every check in a fixed order.
pub fn run_suite(options: &SuiteOptions) -> Vec<CheckOutcome> {
    let mut rng = StdRng::seed_from_u64(options.seed);
    let mut out = vec![
        conformality(&mut rng),
        gauss_map(&mut rng),
        undulation(&mut rng),
        rhombus(&mut rng),
        arc_symmetry(&mut rng),
        node_parameters(&mut rng),
    ];
    out.extend(form_periods(&mut rng));
    out.push(unknown_round_trip(&mut rng));
    out.push(zeta_back_substitution(&mut rng));
    out.push(classifier(&mut rng));
    out.push(scherk_mesh(&mut rng, options.mesh_tol));
    out.push(glued_mesh(options.mesh_tol));
    out
}

/// Plain-text table of outcomes, one row per check.
pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut s = format!("{:<width$}  {:>7}  {:>10}  {:>10}  result\n", "check", "samples", "worst", "bound");
    for o in outcomes {
        s += &format!(
            "{:<width$}  {:>7}  {:>10.3e}  {:>10.3e}  {}\n",
            o.name,
            o.samples,
            o.worst,
            o.bound,
            if o.passed { "pass" } else { "FAIL" }
        );
    }
    s
}
