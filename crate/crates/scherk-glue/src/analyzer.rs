//! Leading-order classification of configurations without running the
//! nonlinear solver.

use serde::{Deserialize, Serialize};

use crate::config::{parity, Configuration, Mode};

/// Exact-data comparison tolerance for ℓ and ψ.
pub const DATA_TOL: f64 = 1e-12;
/// |K_k| below this counts as degenerate.
pub const K_TOL: f64 = 1e-9;
/// Vector identity tolerance for lattice directions.
pub const DIRECTION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum Condition {
    InvalidConfiguration { message: String },
    OddLayerCount { n: usize },
    /// ℓ_k or ψ_k differs from the value of its parity class.
    Parity { k: usize },
    /// ℓ_k differs from ℓ_1 while every K is nonzero.
    NonConstantGap { k: usize },
    /// K_k vanishes; the leading-order argument is inconclusive.
    DegenerateK { k: usize, value: f64 },
    /// The ζ system has no root with e^{−ζ} > 0.
    NoZetaSolution,
    /// A linear stack with more than two layers forces t_{s,2} = 0.
    FreeEndPropagation { n: usize },
    InconsistentDirections,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    #[serde(flatten)]
    pub condition: Condition,
    pub detail: String,
}

impl Finding {
    fn new(condition: Condition, detail: impl Into<String>) -> Self {
        Self { condition, detail: detail.into() }
    }

    /// Re-evaluates the cited condition on `config`; true iff it still fails.
    pub fn reproduce(&self, config: &Configuration) -> bool {
        match &self.condition {
            Condition::InvalidConfiguration { .. } => config.validate().is_err(),
            Condition::OddLayerCount { n } => config.n == *n && n % 2 == 1,
            Condition::Parity { k } => parity_violated(config, *k),
            Condition::NonConstantGap { k } => (config.ell[k - 1] - config.ell[0]).abs() > DATA_TOL,
            Condition::DegenerateK { k, .. } => {
                let z = solve_zeta(config).map(|r| r[0]).unwrap_or([0.0; 2]);
                compute_k(config, z)[k - 1].abs() < K_TOL
            }
            Condition::NoZetaSolution => solve_zeta(config).is_none(),
            Condition::FreeEndPropagation { n } => config.mode == Mode::Dpms && config.n == *n && *n > 2,
            Condition::InconsistentDirections => {
                triangle_check(&layer_directions(config)).kind == LatticeKind::Inconsistent
            }
        }
    }
}

fn parity_violated(config: &Configuration, k: usize) -> bool {
    let r = parity(k);
    if r > config.ell.len() {
        return false;
    }
    (config.ell[k - 1] - config.ell[r - 1]).abs() > DATA_TOL || (config.psi[k - 1] - config.psi[r - 1]).abs() > DATA_TOL
}

/// Every k whose (ℓ_k, ψ_k) differs from (ℓ_{ς(k)}, ψ_{ς(k)}).
pub fn parity_check(config: &Configuration) -> Vec<Finding> {
    (1..=config.ell.len().min(config.psi.len()))
        .filter(|&k| parity_violated(config, k))
        .map(|k| {
            let r = parity(k);
            Finding::new(
                Condition::Parity { k },
                format!(
                    "(ell, psi)_{k} = ({}, {}) but (ell, psi)_{r} = ({}, {})",
                    config.ell[k - 1],
                    config.psi[k - 1],
                    config.ell[r - 1],
                    config.psi[r - 1]
                ),
            )
        })
        .collect()
}

/// K_k = 4 cos ψ_k, plus Λ_{ς(k)} e^{ζ_{ς(k)}} on the maximal gaps.
pub fn compute_k(config: &Configuration, zeta: [f64; 2]) -> Vec<f64> {
    (1..=config.psi.len())
        .map(|k| {
            let base = 4.0 * config.psi[k - 1].cos();
            if config.is_max_gap(k) {
                let j = parity(k);
                base + config.lambda(j) * zeta[j - 1].exp()
            } else {
                base
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GapCheck {
    Pass,
    Obstructed(Vec<Finding>),
    Degenerate(Vec<Finding>),
}

/// Constant gaps are forced once every K_k is nonzero.
pub fn constant_ell_check(config: &Configuration, k_values: &[f64]) -> GapCheck {
    let degenerate: Vec<Finding> = k_values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() < K_TOL)
        .map(|(i, &v)| Finding::new(Condition::DegenerateK { k: i + 1, value: v }, format!("K_{} = {v:e}", i + 1)))
        .collect();
    if !degenerate.is_empty() {
        return GapCheck::Degenerate(degenerate);
    }
    let bad: Vec<Finding> = (1..=config.ell.len())
        .filter(|&k| (config.ell[k - 1] - config.ell[0]).abs() > DATA_TOL)
        .map(|k| {
            Finding::new(
                Condition::NonConstantGap { k },
                format!("ell_{k} = {} differs from ell_1 = {}", config.ell[k - 1], config.ell[0]),
            )
        })
        .collect();
    if bad.is_empty() {
        GapCheck::Pass
    } else {
        GapCheck::Obstructed(bad)
    }
}

/// ζ₁ + ζ₂ in the stated leading-order relation: 4 log(sin θ cos θ). The
/// vertical period itself closes at the opposite sign, see `period_zeta_sum`.
pub fn zeta_sum(theta: f64) -> f64 {
    4.0 * (theta.sin() * theta.cos()).ln()
}

/// ζ₁ + ζ₂ demanded by the vertical period 1/ε² when the stacked layers'
/// regularized vertical periods equal −2 log(sin θ cos θ) each.
pub fn period_zeta_sum(theta: f64) -> f64 {
    -zeta_sum(theta)
}

/// Roots of ζ₁ + ζ₂ = 4 log(sin θ cos θ) and
/// 4(cos ψ₁ e^{−ζ₁} − cos ψ₂ e^{−ζ₂}) + Λ₁ − Λ₂ = 0.
pub fn solve_zeta(config: &Configuration) -> Option<Vec<[f64; 2]>> {
    solve_zeta_with_sum(config, zeta_sum(config.theta))
}

/// As `solve_zeta` with an arbitrary prescribed ζ₁ + ζ₂.
pub fn solve_zeta_with_sum(config: &Configuration, sum: f64) -> Option<Vec<[f64; 2]>> {
    if config.psi.len() < 2 {
        return None;
    }
    let (c1, c2) = (config.psi[0].cos(), config.psi[1].cos());
    let d = config.lambda1 - config.lambda2;
    let e = (-sum).exp();
    // b = e^{−ζ₂}, a = e/b:  −4c₂ b² + d b + 4c₁ e = 0.
    let (qa, qb, qc) = (-4.0 * c2, d, 4.0 * c1 * e);
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    if scale == 0.0 {
        return None;
    }
    let mut roots = Vec::new();
    if qa.abs() <= 1e-14 * scale {
        if qb != 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (qb + qb.signum() * sq);
        if q != 0.0 {
            roots.push(q / qa);
            roots.push(qc / q);
        } else {
            roots.push(0.0);
        }
        if disc == 0.0 {
            roots.truncate(1);
        }
    }
    let mut out: Vec<[f64; 2]> = Vec::new();
    for b in roots.into_iter().filter(|b| *b > 0.0 && b.is_finite()) {
        // One Newton polish of the quadratic.
        let g = qa * b * b + qb * b + qc;
        let dg = 2.0 * qa * b + qb;
        let b = if dg != 0.0 { b - g / dg } else { b };
        if !(b > 0.0) {
            continue;
        }
        let z2 = -b.ln();
        let z = [sum - z2, z2];
        if !out.iter().any(|o| (o[1] - z[1]).abs() < 1e-12) {
            out.push(z);
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// Residuals of both ζ equations at a candidate pair.
pub fn zeta_residuals(config: &Configuration, sum: f64, z: [f64; 2]) -> [f64; 2] {
    let (c1, c2) = (config.psi[0].cos(), config.psi[1].cos());
    [
        z[0] + z[1] - sum,
        4.0 * (c1 * (-z[0]).exp() - c2 * (-z[1]).exp()) + config.lambda1 - config.lambda2,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeKind {
    TwoDirection,
    Triangular,
    Inconsistent,
}

/// `triangular_compatible` flags two-direction sequences whose directions
/// also fit a triangular lattice (ambiguous case).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeVerdict {
    pub kind: LatticeKind,
    pub triangular_compatible: bool,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn parallel(a: [f64; 2], b: [f64; 2]) -> bool {
    cross(a, b).abs() < DIRECTION_TOL
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() < DIRECTION_TOL
}

/// End directions per gap, from `config.directions` or the T₁/T₂ alternation.
pub fn layer_directions(config: &Configuration) -> Vec<[f64; 2]> {
    match &config.directions {
        Some(d) => d.iter().map(|a| [a.cos(), a.sin()]).collect(),
        None => (1..=config.node_count()).map(|k| config.t_vec(parity(k))).collect(),
    }
}

/// Lines at 60° to each other.
fn sixty_degrees(a: [f64; 2], b: [f64; 2]) -> bool {
    ((a[0] * b[0] + a[1] * b[1]).abs() - 0.5).abs() < DIRECTION_TOL
}

pub fn triangle_check(directions: &[[f64; 2]]) -> LatticeVerdict {
    let n = directions.len();
    let inconsistent = LatticeVerdict { kind: LatticeKind::Inconsistent, triangular_compatible: false };
    if n < 2 {
        return LatticeVerdict { kind: LatticeKind::TwoDirection, triangular_compatible: false };
    }
    if directions.windows(2).any(|w| parallel(w[0], w[1])) {
        return inconsistent;
    }
    let (a, b) = (directions[0], directions[1]);
    let two = directions.iter().enumerate().all(|(i, &d)| parallel(d, if i % 2 == 0 { a } else { b }));
    if two {
        return LatticeVerdict { kind: LatticeKind::TwoDirection, triangular_compatible: sixty_degrees(a, b) };
    }
    // T_{i+1} + T_{i−1} = T_i up to the orientation of each line.
    let triples = (1..n - 1).all(|i| {
        let (p, c, q) = (directions[i - 1], directions[i], directions[i + 1]);
        [1.0, -1.0].iter().any(|&sp| {
            [1.0, -1.0].iter().any(|&sq| {
                let v = [sp * p[0] + sq * q[0] - c[0], sp * p[1] + sq * q[1] - c[1]];
                v[0].hypot(v[1]) < DIRECTION_TOL
            })
        })
    });
    // Every direction an integer combination of the first two.
    let det = cross(a, b);
    let integer = directions.iter().all(|&d| {
        let x = cross(d, b) / det;
        let y = cross(a, d) / det;
        near_integer(x) && near_integer(y)
    });
    if triples && integer {
        LatticeVerdict { kind: LatticeKind::Triangular, triangular_compatible: true }
    } else {
        inconsistent
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    Scherk,
    #[serde(rename = "KMR")]
    Kmr,
    Meeks,
    TriangularSpecial,
    Obstructed,
}

/// One evaluated condition, for `--explain` style listings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub statement: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub class: Class,
    pub reasons: Vec<Finding>,
    pub zeta_solution: Option<[f64; 2]>,
    pub zeta_roots: Vec<[f64; 2]>,
    #[serde(rename = "K")]
    pub k_values: Vec<f64>,
    pub lattice: Option<LatticeVerdict>,
    pub checks: Vec<CheckRecord>,
}

impl Verdict {
    fn new(class: Class) -> Self {
        Self {
            class,
            reasons: Vec::new(),
            zeta_solution: None,
            zeta_roots: Vec::new(),
            k_values: Vec::new(),
            lattice: None,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, statement: &str, passed: bool) {
        self.checks.push(CheckRecord { name: name.into(), statement: statement.into(), passed });
    }

    fn obstruct(mut self, reasons: Vec<Finding>) -> Self {
        self.class = Class::Obstructed;
        self.reasons.extend(reasons);
        self
    }
}

pub fn classify(config: &Configuration) -> Verdict {
    let mut v = Verdict::new(Class::Obstructed);
    let valid = config.validate();
    if config.mode == Mode::Tpms && config.n % 2 == 1 {
        v.check("even_layers", "a cyclic stack has an even number of layers", false);
        return v.obstruct(vec![Finding::new(Condition::OddLayerCount { n: config.n }, format!("n = {}", config.n))]);
    }
    if let Err(e) = valid {
        v.check("valid", "configuration is well formed", false);
        return v.obstruct(vec![Finding::new(
            Condition::InvalidConfiguration { message: e.to_string() },
            e.to_string(),
        )]);
    }
    v.check("valid", "configuration is well formed", true);

    if config.mode == Mode::Dpms {
        let ok = config.n <= 2;
        v.check("free_ends", "a linear stack with free ends has at most two layers", ok);
        v.class = match config.n {
            1 => Class::Scherk,
            2 => Class::Kmr,
            n => {
                return v.obstruct(vec![Finding::new(
                    Condition::FreeEndPropagation { n },
                    "balance at the free ends forces t_{s,2} = 0, closing an interior node",
                )])
            }
        };
        return v;
    }

    let lattice = triangle_check(&layer_directions(config));
    v.lattice = Some(lattice);
    v.check("directions", "end directions alternate between two lines", lattice.kind == LatticeKind::TwoDirection);
    match lattice.kind {
        LatticeKind::Triangular => {
            v.class = Class::TriangularSpecial;
            return v;
        }
        LatticeKind::Inconsistent => {
            return v.obstruct(vec![Finding::new(
                Condition::InconsistentDirections,
                "directions neither alternate nor satisfy T_{i+1} + T_{i-1} = T_i",
            )]);
        }
        LatticeKind::TwoDirection => {}
    }

    let parity_findings = parity_check(config);
    v.check("parity", "ell_k and psi_k depend only on the parity of k", parity_findings.is_empty());
    if !parity_findings.is_empty() {
        return v.obstruct(parity_findings);
    }

    let roots = solve_zeta(config);
    v.check(
        "zeta",
        "zeta_1 + zeta_2 = 4 log(sin theta cos theta), 4(cos psi_1 e^-zeta_1 - cos psi_2 e^-zeta_2) + Lambda_1 - Lambda_2 = 0 has a real root",
        roots.is_some(),
    );
    let zeta = roots.as_ref().map(|r| r[0]).unwrap_or([0.0; 2]);
    v.k_values = compute_k(config, zeta);
    let mut reasons = Vec::new();
    match constant_ell_check(config, &v.k_values) {
        GapCheck::Pass => {
            v.check("K_nonzero", "K_k != 0 for every k", true);
            v.check("constant_ell", "ell is constant", true);
        }
        GapCheck::Degenerate(f) => {
            v.check("K_nonzero", "K_k != 0 for every k", false);
            reasons.extend(f);
        }
        GapCheck::Obstructed(f) => {
            v.check("K_nonzero", "K_k != 0 for every k", true);
            v.check("constant_ell", "ell is constant", false);
            reasons.extend(f);
        }
    }
    match roots {
        Some(r) => {
            v.zeta_solution = Some(r[0]);
            v.zeta_roots = r;
        }
        None => reasons.push(Finding::new(
            Condition::NoZetaSolution,
            format!(
                "no positive e^-zeta solves the zeta system for psi = ({}, {}), Lambda_1 - Lambda_2 = {}",
                config.psi[0],
                config.psi[1],
                config.lambda1 - config.lambda2
            ),
        )),
    }
    if !reasons.is_empty() {
        v.zeta_solution = None;
        return v.obstruct(reasons);
    }
    v.class = Class::Meeks;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn tpms(ell: Vec<f64>, psi: Vec<f64>) -> Configuration {
        Configuration::tpms(ell, psi, FRAC_PI_4, 0.0, 0.0).unwrap()
    }

    fn deg(a: f64) -> [f64; 2] {
        let r = a.to_radians();
        [r.cos(), r.sin()]
    }

    #[test]
    fn parity_examples() {
        assert!(parity_check(&tpms(vec![0.25; 4], vec![0.0, PI, 0.0, PI])).is_empty());
        let f = parity_check(&tpms(vec![0.25; 4], vec![0.0, PI, FRAC_PI_2, PI]));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].condition, Condition::Parity { k: 3 });
        assert!(parity_check(&tpms(vec![0.2, 0.3, 0.2, 0.3], vec![0.0; 4])).is_empty());
    }

    #[test]
    fn k_examples() {
        let c = tpms(vec![0.2, 0.3, 0.2, 0.3], vec![0.0, FRAC_PI_2, 0.0, FRAC_PI_2]);
        let k = compute_k(&c, [0.0; 2]);
        assert_eq!(k[0], 4.0);
        assert!(k[1].abs() < 1e-15);
        let mut c = tpms(vec![0.5, 0.5], vec![PI, PI]);
        c.lambda1 = 8.0;
        assert!((compute_k(&c, [0.0; 2])[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn gap_check_examples() {
        let c = tpms(vec![0.2, 0.3, 0.2, 0.3], vec![0.0; 4]);
        assert!(matches!(constant_ell_check(&c, &compute_k(&c, [0.0; 2])), GapCheck::Obstructed(_)));
        let c = tpms(vec![0.25; 4], vec![0.0; 4]);
        assert_eq!(constant_ell_check(&c, &compute_k(&c, [0.0; 2])), GapCheck::Pass);
        let c = tpms(vec![0.2, 0.3, 0.2, 0.3], vec![0.0, FRAC_PI_2, 0.0, FRAC_PI_2]);
        assert!(matches!(constant_ell_check(&c, &compute_k(&c, [0.0; 2])), GapCheck::Degenerate(_)));
    }

    #[test]
    fn zeta_symmetric_root() {
        let c = tpms(vec![0.5, 0.5], vec![0.0, 0.0]);
        let r = solve_zeta(&c).unwrap();
        assert_eq!(r.len(), 1);
        let expect = 2.0 * 0.5f64.ln();
        assert!((r[0][0] - expect).abs() < 1e-13 && (r[0][1] - expect).abs() < 1e-13);
    }

    #[test]
    fn zeta_opposite_phase() {
        let mut c = tpms(vec![0.5, 0.5], vec![0.0, PI]);
        assert!(solve_zeta(&c).is_none());
        let sc = FRAC_PI_4.sin() * FRAC_PI_4.cos();
        c.lambda1 = -8.0 * (-2.0 * sc.ln()).exp() * 2.0;
        let roots = solve_zeta(&c).unwrap();
        assert_eq!(roots.len(), 2);
        for z in roots {
            let r = zeta_residuals(&c, zeta_sum(c.theta), z);
            assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn triangle_examples() {
        let v = triangle_check(&[deg(0.0), deg(60.0), deg(120.0)]);
        assert_eq!(v.kind, LatticeKind::Triangular);
        let th = 50.0;
        let v = triangle_check(&[deg(th), deg(180.0 - th), deg(th), deg(180.0 - th)]);
        assert_eq!(v, LatticeVerdict { kind: LatticeKind::TwoDirection, triangular_compatible: false });
        let v = triangle_check(&[deg(0.0), deg(50.0), deg(120.0)]);
        assert_eq!(v.kind, LatticeKind::Inconsistent);
        let v = triangle_check(&[deg(0.0), deg(60.0), deg(0.0), deg(60.0)]);
        assert_eq!(v, LatticeVerdict { kind: LatticeKind::TwoDirection, triangular_compatible: true });
    }

    #[test]
    fn classify_examples() {
        let d = Configuration::dpms(3, vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4).unwrap();
        let v = classify(&d);
        assert_eq!(v.class, Class::Obstructed);
        assert!(v.reasons.iter().all(|r| r.reproduce(&d)));
        let m = tpms(vec![0.5, 0.5], vec![0.0, 0.0]);
        let v = classify(&m);
        assert_eq!(v.class, Class::Meeks);
        assert!(v.reasons.is_empty());
        let mut t = tpms(vec![1.0 / 6.0; 6], vec![0.0; 6]);
        t.directions = Some([0.0f64, 60.0, 120.0, 0.0, 60.0, 120.0].iter().map(|a| a.to_radians()).collect());
        assert_eq!(classify(&t).class, Class::TriangularSpecial);
        let op = tpms(vec![0.5, 0.5], vec![0.0, PI]);
        let v = classify(&op);
        assert_eq!(v.class, Class::Obstructed);
        assert!(v.reasons.iter().any(|r| r.condition == Condition::NoZetaSolution));
        assert!(v.reasons.iter().all(|r| r.reproduce(&op)));
    }
}
