//! The period problem: balance, B-period and conformality equations over
//! node parameters, forces and punctures, solved by damped Newton.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{period_zeta_sum, solve_zeta, solve_zeta_with_sum};
use crate::config::{parity, Configuration, Mode};
use crate::error::{Error, Result};
use crate::forms::{
    default_order, prescribed_x, solve_forms_unbalanced, FormSpec, RegularForms, DEFAULT_MATCHING_TOL, V3,
};
use crate::noded::{central_punctures, side_sign, NodedSurface};

pub const NEWTON_TOL: f64 = 1e-9;
pub const MAX_NEWTON_ITERS: usize = 60;
pub const FD_STEP: f64 = 1e-7;
pub const ARMIJO_FLOOR: f64 = 1.0 / (1u64 << 20) as f64;
const ARMIJO_C: f64 = 1e-4;
/// Inner puncture adjustment tolerance and iteration cap.
const PUNCTURE_TOL: f64 = 1e-13;
const PUNCTURE_ITERS: usize = 20;
/// Relative singular value below which the Jacobian counts as singular.
const RANK_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeUnknowns {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub psi: f64,
}

impl NodeUnknowns {
    pub fn rho(&self) -> f64 {
        self.beta.hypot(self.gamma)
    }
}

/// A scalar unknown. Node indices are 0-based (`node` = k − 1), `s` is 0
/// for the + side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    Alpha { s: usize, node: usize },
    Beta { s: usize, node: usize },
    Gamma { s: usize, node: usize },
    Zeta { s: usize, node: usize },
    Psi { s: usize, node: usize },
    PRe { sphere: usize },
    PIm { sphere: usize },
    Lambda1,
    Lambda2,
}

impl Var {
    /// 1-based layer index the variable belongs to, if any.
    pub fn layer(&self) -> Option<usize> {
        match *self {
            Var::Alpha { node, .. }
            | Var::Beta { node, .. }
            | Var::Gamma { node, .. }
            | Var::Zeta { node, .. }
            | Var::Psi { node, .. } => Some(node + 1),
            Var::PRe { sphere } | Var::PIm { sphere } => Some(sphere + 1),
            Var::Lambda1 | Var::Lambda2 => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskPreset {
    /// Lattice (Λ₁, Λ₂) fixed; every node parameter and puncture free.
    Default,
    /// Λ₂ free and ζ_{+,2} fixed, leaving the lattice shape to the solver.
    FreeLambda,
}

/// Full unknown set plus the fixed lattice data it was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownVector {
    pub nodes: Vec<[NodeUnknowns; 2]>,
    pub p_plus: Vec<C64>,
    #[serde(rename = "Lambda1")]
    pub lambda1: f64,
    #[serde(rename = "Lambda2")]
    pub lambda2: f64,
    pub epsilon: f64,
    pub theta: f64,
    #[serde(rename = "Psi1")]
    pub psi1: f64,
    #[serde(rename = "Psi2")]
    pub psi2: f64,
    pub free: Vec<Var>,
}

impl UnknownVector {
    pub fn get(&self, v: Var) -> f64 {
        match v {
            Var::Alpha { s, node } => self.nodes[node][s].alpha,
            Var::Beta { s, node } => self.nodes[node][s].beta,
            Var::Gamma { s, node } => self.nodes[node][s].gamma,
            Var::Zeta { s, node } => self.nodes[node][s].zeta,
            Var::Psi { s, node } => self.nodes[node][s].psi,
            Var::PRe { sphere } => self.p_plus[sphere].re,
            Var::PIm { sphere } => self.p_plus[sphere].im,
            Var::Lambda1 => self.lambda1,
            Var::Lambda2 => self.lambda2,
        }
    }

    pub fn set(&mut self, v: Var, x: f64) {
        match v {
            Var::Alpha { s, node } => self.nodes[node][s].alpha = x,
            Var::Beta { s, node } => self.nodes[node][s].beta = x,
            Var::Gamma { s, node } => self.nodes[node][s].gamma = x,
            Var::Zeta { s, node } => self.nodes[node][s].zeta = x,
            Var::Psi { s, node } => self.nodes[node][s].psi = x,
            Var::PRe { sphere } => self.p_plus[sphere].re = x,
            Var::PIm { sphere } => self.p_plus[sphere].im = x,
            Var::Lambda1 => self.lambda1 = x,
            Var::Lambda2 => self.lambda2 = x,
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        self.free.iter().map(|&v| self.get(v)).collect()
    }

    pub fn unpack(&mut self, x: &[f64]) {
        for (v, &xi) in self.free.clone().into_iter().zip(x) {
            self.set(v, xi);
        }
    }

    /// f_{s,k} = α T_{ς(k)} + β T⊥_{ς(k)} + γ e₃.
    pub fn force(&self, config: &Configuration, s: usize, node: usize) -> V3 {
        let j = parity(node + 1);
        let (t, tp) = (config.t_vec(j), config.t_perp(j));
        let u = &self.nodes[node][s];
        [u.alpha * t[0] + u.beta * tp[0], u.alpha * t[1] + u.beta * tp[1], u.gamma]
    }

    /// t_{s,k} = −exp(−ℓ_k/ε² − ζ_{s,k} + iψ_{s,k}).
    pub fn node_t(&self, config: &Configuration, s: usize, node: usize) -> C64 {
        let u = &self.nodes[node][s];
        let l = config.ell[node] / (self.epsilon * self.epsilon) + u.zeta;
        -C64::from_polar((-l).exp(), u.psi)
    }

    /// Total count of scalar entries (free or fixed).
    pub fn dimension(&self) -> usize {
        10 * self.nodes.len() + 2 * self.p_plus.len() + 2
    }
}

/// Free variables of a preset.
pub fn mask(config: &Configuration, preset: MaskPreset) -> Vec<Var> {
    let mut v = Vec::new();
    for node in 0..config.node_count() {
        for s in 0..2 {
            v.push(Var::Alpha { s, node });
            v.push(Var::Beta { s, node });
            v.push(Var::Gamma { s, node });
            v.push(Var::Zeta { s, node });
            v.push(Var::Psi { s, node });
        }
    }
    for sphere in 0..config.n {
        v.push(Var::PRe { sphere });
        v.push(Var::PIm { sphere });
    }
    if preset == MaskPreset::FreeLambda && config.mode == Mode::Tpms && config.node_count() >= 2 {
        v.retain(|x| *x != Var::Zeta { s: 0, node: 1 });
        v.push(Var::Lambda2);
    }
    v
}

/// Horizontal balance forces the β of the two parity classes:
/// β₁ = α₁/tan 2θ + α₂/sin 2θ, β₂ = −α₁/sin 2θ − α₂/tan 2θ (with T⊥ the
/// anticlockwise rotation of T).
pub fn leading_beta(theta: f64, alpha1: f64, alpha2: f64) -> [f64; 2] {
    let (t, s) = ((2.0 * theta).tan(), (2.0 * theta).sin());
    let cot = if t.is_finite() { (2.0 * theta).cos() / s } else { 0.0 };
    [alpha1 * cot + alpha2 / s, -alpha1 / s - alpha2 * cot]
}

/// Leading-order guess: ζ per parity class, ψ_± = ±ψ_k, α = 4s Im t,
/// ρ = 1 − 4 Re t + Λ τ_max, β from horizontal balance, central punctures.
pub fn leading_order_guess(config: &Configuration, epsilon: f64, zeta: [f64; 2], preset: MaskPreset) -> UnknownVector {
    let m = config.node_count();
    let (pc, _) = central_punctures(config.theta);
    let (psi1, psi2) = config.phase_sums();
    let mut u = UnknownVector {
        nodes: vec![[NodeUnknowns::default(); 2]; m],
        p_plus: vec![pc[0]; config.n],
        lambda1: config.lambda1,
        lambda2: config.lambda2,
        epsilon,
        theta: config.theta,
        psi1,
        psi2,
        free: mask(config, preset),
    };
    let tau_max = config.tau_max(epsilon);
    for node in 0..m {
        let j = parity(node + 1);
        for s in 0..2 {
            let sg = side_sign(s);
            u.nodes[node][s].zeta = zeta[j - 1];
            u.nodes[node][s].psi = sg * config.psi[node];
            let t = u.node_t(config, s, node);
            u.nodes[node][s].alpha = 4.0 * sg * t.im;
            u.nodes[node][s].gamma = 1.0 - 4.0 * t.re + config.lambda(j) * tau_max;
        }
    }
    if m >= 2 {
        let b = leading_beta(config.theta, u.nodes[0][0].alpha, u.nodes[1][0].alpha);
        for node in 0..m {
            let bj = b[parity(node + 1) - 1];
            for s in 0..2 {
                let rho = u.nodes[node][s].gamma;
                u.nodes[node][s].beta = bj;
                u.nodes[node][s].gamma = (rho * rho - bj * bj).max(0.0).sqrt();
            }
        }
    }
    u
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Balance,
    BNodes,
    BTotal,
    ConformA,
    ConformZero,
}

pub const ALL_BLOCKS: [Block; 5] = [Block::Balance, Block::BNodes, Block::BTotal, Block::ConformA, Block::ConformZero];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector {
    /// Per sphere, the three components of the residue sum.
    pub balance: Vec<f64>,
    /// Per node, Re ∫B₊ − Re ∫B₋ (horizontal part modulo the lattice).
    pub b_nodes: Vec<f64>,
    /// Σ_k Re ∫B_{+,k} minus the declared vertical lattice vector, modulo
    /// the horizontal lattice. Empty for linear stacks.
    pub b_total: Vec<f64>,
    /// Re, Im of (1/2πi)∮Q/Φ₃ on each A-cycle.
    pub conform_a: Vec<f64>,
    /// Re, Im of the residue of Q/Φ₃ at the zero near 0 on each sphere.
    pub conform_zero: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockNorms {
    pub balance: f64,
    pub b_nodes: f64,
    pub b_total: f64,
    pub conform_a: f64,
    pub conform_zero: f64,
}

impl BlockNorms {
    pub fn max(&self) -> f64 {
        self.balance.max(self.b_nodes).max(self.b_total).max(self.conform_a).max(self.conform_zero)
    }
}

impl ResidualVector {
    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::Balance => &self.balance,
            Block::BNodes => &self.b_nodes,
            Block::BTotal => &self.b_total,
            Block::ConformA => &self.conform_a,
            Block::ConformZero => &self.conform_zero,
        }
    }

    pub fn flatten(&self, blocks: &[Block]) -> Vec<f64> {
        blocks.iter().flat_map(|&b| self.block(b).iter().copied()).collect()
    }

    pub fn norms(&self) -> BlockNorms {
        BlockNorms {
            balance: inf_norm(&self.balance),
            b_nodes: inf_norm(&self.b_nodes),
            b_total: inf_norm(&self.b_total),
            conform_a: inf_norm(&self.conform_a),
            conform_zero: inf_norm(&self.conform_zero),
        }
    }

    /// Vertical components of the balance block.
    pub fn vertical_balance(&self) -> Vec<f64> {
        self.balance.chunks(3).map(|c| c[2]).collect()
    }
}

/// Configuration with the lattice data of `u`.
fn lattice_config(config: &Configuration, u: &UnknownVector) -> Configuration {
    let mut c = config.clone();
    c.lambda1 = u.lambda1;
    c.lambda2 = u.lambda2;
    c
}

/// Builds the noded surface and solves the regular forms for `u`.
pub fn build_forms(config: &Configuration, u: &UnknownVector) -> Result<RegularForms> {
    let cfg = lattice_config(config, u);
    let m = cfg.node_count();
    if u.nodes.len() != m || u.p_plus.len() != cfg.n {
        return Err(Error::Parameter(format!(
            "unknowns sized for {} nodes and {} spheres, configuration has {m} and {}",
            u.nodes.len(),
            u.p_plus.len(),
            cfg.n
        )));
    }
    let zeta: Vec<[f64; 2]> = u.nodes.iter().map(|n| [n[0].zeta, n[1].zeta]).collect();
    let psi: Vec<[f64; 2]> = u.nodes.iter().map(|n| [n[0].psi, n[1].psi]).collect();
    let mut surface = NodedSurface::build(&cfg, u.epsilon, Some(&zeta), Some(&psi))?;
    for (k, &p) in u.p_plus.iter().enumerate() {
        surface.set_p_plus(k + 1, p)?;
    }
    let tau = cfg.tau_max(u.epsilon);
    let mut spec = FormSpec::central(&cfg, tau);
    for node in 0..m {
        for s in 0..2 {
            spec.f[node + 1][s] = u.force(&cfg, s, node);
        }
    }
    match cfg.mode {
        Mode::Tpms => spec.f[0] = spec.f[cfg.n],
        Mode::Dpms => {
            // Free ends keep vertical forces of the length of their period.
            for slot in [0, cfg.n] {
                for s in 0..2 {
                    let x = prescribed_x(&cfg, s, slot, tau);
                    spec.x[slot][s] = x;
                    spec.f[slot][s] = [0.0, 0.0, x[0].hypot(x[1])];
                }
            }
        }
    }
    let order = default_order(&surface);
    solve_forms_unbalanced(&surface, &spec, order, DEFAULT_MATCHING_TOL)
}

/// Reduces a horizontal vector modulo 2πT₁(1+Λ₁τ), 2πT₂(1+Λ₂τ).
pub fn reduce_mod_lattice(cfg: &Configuration, tau: f64, d: [f64; 2]) -> [f64; 2] {
    let two_pi = 2.0 * std::f64::consts::PI;
    let l1 = cfg.t_vec(1).map(|x| two_pi * x * (1.0 + cfg.lambda1 * tau));
    let l2 = cfg.t_vec(2).map(|x| two_pi * x * (1.0 + cfg.lambda2 * tau));
    let det = l1[0] * l2[1] - l1[1] * l2[0];
    let a = (d[0] * l2[1] - d[1] * l2[0]) / det;
    let b = (l1[0] * d[1] - l1[1] * d[0]) / det;
    let (ra, rb) = (a.round(), b.round());
    [d[0] - ra * l1[0] - rb * l2[0], d[1] - ra * l1[1] - rb * l2[1]]
}

/// Translations under which the surface of `u` is periodic: the horizontal
/// lattice and, for cyclic stacks, the period of the stack.
pub fn period_lattice(config: &Configuration, u: &UnknownVector) -> Vec<[f64; 3]> {
    let cfg = lattice_config(config, u);
    let tau = cfg.tau_max(u.epsilon);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut out: Vec<[f64; 3]> = [(1, cfg.lambda1), (2, cfg.lambda2)]
        .iter()
        .map(|&(j, lam)| {
            let t = cfg.t_vec(j);
            [two_pi * t[0] * (1.0 + lam * tau), two_pi * t[1] * (1.0 + lam * tau), 0.0]
        })
        .collect();
    if cfg.mode == Mode::Tpms {
        let (t1, t2) = (cfg.t_vec(1), cfg.t_vec(2));
        let (a1, a2) = (u.psi1 * (1.0 + u.lambda1 * tau), u.psi2 * (1.0 + u.lambda2 * tau));
        out.push([a1 * t1[0] + a2 * t2[0], a1 * t1[1] + a2 * t2[1], -1.0 / (u.epsilon * u.epsilon)]);
    }
    out
}

/// Evaluates every block on already solved forms.
pub fn residual_from_forms(config: &Configuration, u: &UnknownVector, forms: &RegularForms) -> Result<ResidualVector> {
    let cfg = lattice_config(config, u);
    let n = cfg.n;
    let m = cfg.node_count();
    let tau = cfg.tau_max(u.epsilon);
    let spec = &forms.spec;
    let mut r = ResidualVector::default();

    let slot_sum = |k: usize| -> V3 { [0, 1, 2].map(|i| spec.f[k][0][i] + spec.f[k][1][i]) };
    let spheres: Vec<usize> = match cfg.mode {
        Mode::Tpms => (2..=n).collect(),
        Mode::Dpms => (1..n).collect(),
    };
    for k in spheres {
        let (a, b) = (slot_sum(k), slot_sum(k - 1));
        r.balance.extend((0..3).map(|i| a[i] - b[i]));
    }

    let mut total = [0.0; 3];
    for node in 0..m {
        let k = node + 1;
        let bp = forms.b_period(0, k)?;
        let bm = forms.b_period(1, k)?;
        let d = reduce_mod_lattice(&cfg, tau, [bp.raw[0].re - bm.raw[0].re, bp.raw[1].re - bm.raw[1].re]);
        r.b_nodes.extend([d[0], d[1], bp.raw[2].re - bm.raw[2].re]);
        for i in 0..3 {
            total[i] += bp.raw[i].re;
        }
    }
    if cfg.mode == Mode::Tpms {
        let (t1, t2) = (cfg.t_vec(1), cfg.t_vec(2));
        let (a1, a2) = (u.psi1 * (1.0 + u.lambda1 * tau), u.psi2 * (1.0 + u.lambda2 * tau));
        let target = [a1 * t1[0] + a2 * t2[0], a1 * t1[1] + a2 * t2[1]];
        let d = reduce_mod_lattice(&cfg, tau, [total[0] - target[0], total[1] - target[1]]);
        // The stack descends along B: the vertical period is −1/ε².
        let vertical = total[2] + 1.0 / (u.epsilon * u.epsilon);
        r.b_total.extend([d[0], d[1], vertical]);
    }

    for node in 0..m {
        for s in 0..2 {
            let e = forms.conform_residual_a(s, node + 1)?;
            r.conform_a.extend([e.re, e.im]);
        }
    }
    for k in 1..=n {
        let e = forms.conform_residual_zero(k)?;
        r.conform_zero.extend([e.re, e.im]);
    }
    Ok(r)
}

/// Solves the zero-residue equations for the free punctures p_{+,k} with
/// everything else fixed. Returns the adjusted unknowns and their forms.
pub fn adjust_punctures(config: &Configuration, u: &UnknownVector) -> Result<(UnknownVector, RegularForms)> {
    let n = config.n;
    let mut cur = u.clone();
    let zero_res = |v: &UnknownVector| -> Result<(Vec<f64>, RegularForms)> {
        let forms = build_forms(config, v)?;
        let mut out = Vec::with_capacity(2 * n);
        for k in 1..=n {
            let e = forms.conform_residual_zero(k)?;
            out.extend([e.re, e.im]);
        }
        Ok((out, forms))
    };
    let (mut f, mut forms) = zero_res(&cur)?;
    for _ in 0..PUNCTURE_ITERS {
        if inf_norm(&f) < PUNCTURE_TOL {
            return Ok((cur, forms));
        }
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for col in 0..2 * n {
            let mut v = cur.clone();
            let (sphere, im) = (col / 2, col % 2 == 1);
            let h = FD_STEP * cur.p_plus[sphere].norm().max(1.0);
            v.p_plus[sphere] += if im { C64::new(0.0, h) } else { C64::new(h, 0.0) };
            let (fh, _) = zero_res(&v)?;
            for row in 0..2 * n {
                jac[(row, col)] = (fh[row] - f[row]) / h;
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_iterator(2 * n, f.iter().map(|x| -x)))
            .ok_or_else(|| Error::SingularJacobian("puncture adjustment".into()))?;
        for sphere in 0..n {
            cur.p_plus[sphere] += C64::new(step[2 * sphere], step[2 * sphere + 1]);
        }
        let next = zero_res(&cur)?;
        f = next.0;
        forms = next.1;
    }
    if inf_norm(&f) < 1e3 * PUNCTURE_TOL {
        Ok((cur, forms))
    } else {
        Err(Error::Convergence(format!("puncture adjustment stalled at {:e}", inf_norm(&f))))
    }
}

/// All residual blocks, after moving the punctures so that the zero-residue
/// block vanishes.
pub fn assemble_residual(config: &Configuration, epsilon: f64, unknowns: &UnknownVector) -> Result<ResidualVector> {
    let mut u = unknowns.clone();
    u.epsilon = epsilon;
    let (u, forms) = adjust_punctures(config, &u)?;
    residual_from_forms(config, &u, &forms)
}

/// Blocks entering the Newton system for a mode.
pub fn default_blocks(config: &Configuration) -> Vec<Block> {
    match config.mode {
        Mode::Tpms => ALL_BLOCKS.to_vec(),
        Mode::Dpms => vec![Block::Balance, Block::BNodes, Block::ConformA, Block::ConformZero],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preset: MaskPreset,
    /// Explicit free variables, overriding `preset`.
    pub free: Option<Vec<Var>>,
    pub blocks: Option<Vec<Block>>,
    /// Warm start; otherwise the leading-order guess.
    pub initial: Option<UnknownVector>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: NEWTON_TOL, max_iter: MAX_NEWTON_ITERS, preset: MaskPreset::Default, free: None, blocks: None, initial: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub step: f64,
    pub damping: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub k: usize,
    pub tau: f64,
    pub alpha_over_tau: f64,
    pub rho_minus_one_over_tau: f64,
    pub psi: f64,
    pub zeta: f64,
    /// Leading-order predictions −4 sin ψ and 4 cos ψ + Λ τ_max/τ.
    pub alpha_prediction: f64,
    pub rho_prediction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub epsilon: f64,
    pub tau_max: f64,
    /// ζ_{+,1} + ζ_{+,2}, when there are at least two nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_sum: Option<f64>,
    pub nodes: Vec<NodeTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryDiagnostics {
    /// max_k |f_{−,k} − f_{+,k}|.
    pub force_defect: f64,
    /// max_k |t_{−,k} − conj t_{+,k}|.
    pub node_defect: f64,
    pub gap_defect: f64,
    pub phase_defect: f64,
    pub beta_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual_norms: BlockNorms,
    pub solution: UnknownVector,
    pub symmetry: Option<SymmetryDiagnostics>,
    pub continuation_trace: Vec<ContinuationRecord>,
    pub iteration_trace: Vec<IterationRecord>,
    pub config: Configuration,
    pub epsilon: f64,
}

struct System<'a> {
    config: &'a Configuration,
    blocks: Vec<Block>,
    base: UnknownVector,
}

impl System<'_> {
    fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, ResidualVector)> {
        let mut u = self.base.clone();
        u.unpack(x);
        let forms = build_forms(self.config, &u)?;
        let r = residual_from_forms(self.config, &u, &forms)?;
        Ok((r.flatten(&self.blocks), r))
    }

    fn jacobian(&self, x: &[f64], f0: &[f64]) -> Result<DMatrix<f64>> {
        let cols: Vec<Result<Vec<f64>>> = (0..x.len())
            .into_par_iter()
            .map(|j| {
                let h = FD_STEP * x[j].abs().max(1.0);
                let mut xh = x.to_vec();
                xh[j] += h;
                let (fh, _) = self.eval(&xh)?;
                Ok(fh.iter().zip(f0).map(|(a, b)| (a - b) / h).collect())
            })
            .collect();
        let mut jac = DMatrix::zeros(f0.len(), x.len());
        for (j, c) in cols.into_iter().enumerate() {
            let c = c?;
            for (i, v) in c.into_iter().enumerate() {
                jac[(i, j)] = v;
            }
        }
        Ok(jac)
    }
}

/// Names the layer most involved in a near-null direction of `jac`.
fn singular_layer(jac: &DMatrix<f64>, free: &[Var]) -> Option<(f64, Option<usize>)> {
    let svd = jac.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let (imin, smin) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &s)| if s < a.1 { (i, s) } else { a });
    if smax == 0.0 || smin / smax < RANK_TOL {
        let vt = svd.v_t?;
        let row = vt.row(imin);
        let (jmax, _) = row.iter().enumerate().fold((0, 0.0), |a, (j, &v)| if v.abs() > a.1 { (j, v.abs()) } else { a });
        Some((smin / smax.max(f64::MIN_POSITIVE), free[jmax].layer()))
    } else {
        None
    }
}

/// Damped Newton on the masked system starting from `u0`.
pub fn newton(
    config: &Configuration,
    u0: UnknownVector,
    blocks: Vec<Block>,
    tol: f64,
    max_iter: usize,
) -> Result<(UnknownVector, ResidualVector, Vec<IterationRecord>)> {
    let sys = System { config, blocks, base: u0.clone() };
    let mut x = u0.pack();
    let (mut f, mut r) = sys.eval(&x)?;
    if f.len() != x.len() {
        return Err(Error::Parameter(format!("mask leaves {} unknowns for {} equations", x.len(), f.len())));
    }
    let mut trace = vec![IterationRecord { iteration: 0, residual: inf_norm(&f), step: 0.0, damping: 0.0 }];
    let mut it = 0;
    while inf_norm(&f) >= tol {
        if it == max_iter {
            return Err(Error::MaxIter(format!("{max_iter} iterations, residual {:e}", inf_norm(&f))));
        }
        it += 1;
        let jac = sys.jacobian(&x, &f)?;
        if let Some((ratio, layer)) = singular_layer(&jac, &u0.free) {
            let at = layer.map(|k| format!(" at k = {k}")).unwrap_or_default();
            return Err(Error::SingularJacobian(format!("relative singular value {ratio:e}{at}")));
        }
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|v| -v));
        let dx = jac.lu().solve(&rhs).ok_or_else(|| Error::SingularJacobian("LU failed".into()))?;
        let phi0: f64 = f.iter().map(|v| v * v).sum();
        let mut lambda = 1.0;
        loop {
            let xt: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Ok((ft, rt)) = sys.eval(&xt) {
                let phi: f64 = ft.iter().map(|v| v * v).sum();
                if phi.is_finite() && phi <= (1.0 - 2.0 * ARMIJO_C * lambda) * phi0 {
                    x = xt;
                    f = ft;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < ARMIJO_FLOOR {
                return Err(Error::Convergence(format!(
                    "line search stalled at iteration {it}, residual {:e}",
                    inf_norm(&f)
                )));
            }
        }
        trace.push(IterationRecord { iteration: it, residual: inf_norm(&f), step: dx.amax() * lambda, damping: lambda });
    }
    let mut u = u0;
    u.unpack(&x);
    Ok((u, r, trace))
}

/// Newton solve of the full system at one ε. Cyclic stacks first require a
/// real root of the leading-order ζ system; each root seeds one attempt.
pub fn newton_solve(config: &Configuration, epsilon: f64, options: &SolveOptions) -> Result<SolveReport> {
    config.validate()?;
    let blocks = options.blocks.clone().unwrap_or_else(|| default_blocks(config));
    let seeds: Vec<UnknownVector> = match &options.initial {
        Some(u) => {
            let mut u = u.clone();
            u.epsilon = epsilon;
            vec![u]
        }
        None => {
            let roots = match config.mode {
                Mode::Tpms => {
                    if solve_zeta(config).is_none() {
                        return Err(Error::NoZetaSolution(format!(
                            "psi = ({}, {}), Lambda1 - Lambda2 = {}",
                            config.psi[0],
                            config.psi[1],
                            config.lambda1 - config.lambda2
                        )));
                    }
                    solve_zeta_with_sum(config, period_zeta_sum(config.theta)).ok_or_else(|| {
                        Error::NoZetaSolution("no root for the vertical-period zeta sum".into())
                    })?
                }
                Mode::Dpms => vec![[0.0; 2]],
            };
            roots.into_iter().map(|z| leading_order_guess(config, epsilon, z, options.preset)).collect()
        }
    };
    let mut last = Error::NotConverged;
    for mut u0 in seeds {
        if let Some(free) = &options.free {
            u0.free = free.clone();
        } else if options.initial.is_none() {
            u0.free = mask(config, options.preset);
        }
        match newton(config, u0, blocks.clone(), options.tol, options.max_iter) {
            Ok((u, r, trace)) => {
                let mut report = SolveReport {
                    converged: true,
                    iterations: trace.len() - 1,
                    residual_norms: r.norms(),
                    solution: u,
                    symmetry: None,
                    continuation_trace: Vec::new(),
                    iteration_trace: trace,
                    config: config.clone(),
                    epsilon,
                };
                report.continuation_trace.push(continuation_record(&report));
                if config.mode == Mode::Tpms {
                    report.symmetry = symmetry_check(&report).ok();
                }
                return Ok(report);
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn continuation_record(report: &SolveReport) -> ContinuationRecord {
    let cfg = &report.config;
    let u = &report.solution;
    let tau_max = cfg.tau_max(u.epsilon);
    let nodes = (0..u.nodes.len())
        .map(|node| {
            let t = u.node_t(cfg, 0, node);
            let nu = &u.nodes[node][0];
            let tau = t.norm();
            let lam = if parity(node + 1) == 1 { u.lambda1 } else { u.lambda2 };
            NodeTrace {
                k: node + 1,
                tau,
                alpha_over_tau: nu.alpha / tau,
                rho_minus_one_over_tau: (nu.rho() - 1.0) / tau,
                psi: nu.psi,
                zeta: nu.zeta,
                alpha_prediction: -4.0 * nu.psi.sin(),
                rho_prediction: 4.0 * nu.psi.cos() + lam * tau_max / tau,
            }
        })
        .collect();
    let zeta_sum = (u.nodes.len() >= 2).then(|| u.nodes[0][0].zeta + u.nodes[1][0].zeta);
    ContinuationRecord { epsilon: u.epsilon, tau_max, zeta_sum, nodes }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub reports: Vec<SolveReport>,
    pub failure: Option<String>,
}

/// Solves along a decreasing ε schedule, warm-starting each step.
pub fn continuation(config: &Configuration, schedule: &[f64], options: &SolveOptions) -> ContinuationResult {
    let mut reports: Vec<SolveReport> = Vec::new();
    let mut trace = Vec::new();
    for &eps in schedule {
        let mut opts = options.clone();
        if let Some(prev) = reports.last() {
            opts.initial = Some(rescale_guess(config, &prev.solution, eps));
        }
        match newton_solve(config, eps, &opts) {
            Ok(mut r) => {
                trace.extend(r.continuation_trace.drain(..));
                r.continuation_trace = trace.clone();
                reports.push(r);
            }
            Err(e) => {
                return ContinuationResult { reports, failure: Some(format!("epsilon = {eps}: {e}")) };
            }
        }
    }
    ContinuationResult { reports, failure: None }
}

/// Carries a solution to a new ε keeping ζ, ψ and the punctures, with the
/// forces rescaled to the new node size.
fn rescale_guess(config: &Configuration, prev: &UnknownVector, eps: f64) -> UnknownVector {
    let mut u = prev.clone();
    u.epsilon = eps;
    for node in 0..u.nodes.len() {
        for s in 0..2 {
            let old = prev.node_t(config, s, node).norm();
            let new = u.node_t(config, s, node).norm();
            let r = if old > 0.0 { new / old } else { 1.0 };
            let nu = &mut u.nodes[node][s];
            nu.alpha *= r;
            nu.beta *= r;
            nu.gamma = 1.0 + (nu.gamma - 1.0) * r;
        }
    }
    u
}

/// Defects of the orientation-reversing symmetry exchanging the two sides.
pub fn symmetry_check(report: &SolveReport) -> Result<SymmetryDiagnostics> {
    if !report.converged {
        return Err(Error::NotConverged);
    }
    let cfg = &report.config;
    let u = &report.solution;
    let e2 = u.epsilon * u.epsilon;
    let mut d = SymmetryDiagnostics { force_defect: 0.0, node_defect: 0.0, gap_defect: 0.0, phase_defect: 0.0, beta_defect: 0.0 };
    for node in 0..u.nodes.len() {
        let (fp, fm) = (u.force(cfg, 0, node), u.force(cfg, 1, node));
        let df = (0..3).map(|i| (fp[i] - fm[i]).powi(2)).sum::<f64>().sqrt();
        d.force_defect = d.force_defect.max(df);
        let (tp, tm) = (u.node_t(cfg, 0, node), u.node_t(cfg, 1, node));
        d.node_defect = d.node_defect.max((tm - tp.conj()).norm());
        let (a, b) = (&u.nodes[node][0], &u.nodes[node][1]);
        d.gap_defect = d.gap_defect.max(e2 * (a.zeta - b.zeta).abs());
        d.phase_defect = d.phase_defect.max((a.psi + b.psi).abs());
        d.beta_defect = d.beta_defect.max((a.beta - b.beta).abs());
    }
    Ok(d)
}

/// Solves conformality (A-cycles and zeros) for α, γ and the punctures with
/// β = 0 and ζ, ψ, Λ held at the given values, then reports the resulting
/// residual blocks. Used to exhibit balance obstructions.
pub fn conformal_probe(config: &Configuration, epsilon: f64, zeta: [f64; 2]) -> Result<(UnknownVector, ResidualVector)> {
    let mut u = leading_order_guess(config, epsilon, zeta, MaskPreset::Default);
    for node in 0..u.nodes.len() {
        for s in 0..2 {
            let nu = &mut u.nodes[node][s];
            nu.gamma = nu.rho();
            nu.beta = 0.0;
        }
    }
    u.free = u
        .free
        .iter()
        .copied()
        .filter(|v| matches!(v, Var::Alpha { .. } | Var::Gamma { .. } | Var::PRe { .. } | Var::PIm { .. }))
        .collect();
    let (u, _, _) = newton(config, u, vec![Block::ConformA, Block::ConformZero], NEWTON_TOL, MAX_NEWTON_ITERS)?;
    let forms = build_forms(config, &u)?;
    let r = residual_from_forms(config, &u, &forms)?;
    Ok((u, r))
}

/// Re-solves (α, ρ) at one node from the A-cycle conformality equation with
/// β = 0, every other datum of `spec` and `surface` fixed.
pub fn resolve_alpha_rho(
    surface: &NodedSurface,
    spec: &FormSpec,
    s: usize,
    k: usize,
    order: usize,
) -> Result<(f64, f64)> {
    let cfg = &surface.config;
    let j = parity(k);
    let t = cfg.t_vec(j);
    let eval = |a: f64, rho: f64| -> Result<C64> {
        let mut sp = spec.clone();
        sp.f[k][s] = [a * t[0], a * t[1], rho];
        if cfg.mode == Mode::Tpms && k == cfg.n {
            sp.f[0][s] = sp.f[k][s];
        }
        let forms = solve_forms_unbalanced(surface, &sp, order, DEFAULT_MATCHING_TOL)?;
        forms.conform_residual_a(s, k)
    };
    let (mut a, mut rho) = (0.0, 1.0);
    for _ in 0..MAX_NEWTON_ITERS {
        let e = eval(a, rho)?;
        if e.norm() < 1e-15 {
            return Ok((a, rho));
        }
        let h = 1e-7;
        let ea = (eval(a + h, rho)? - e) / h;
        let er = (eval(a, rho + h)? - e) / h;
        let m = DMatrix::from_row_slice(2, 2, &[ea.re, er.re, ea.im, er.im]);
        let d = m
            .lu()
            .solve(&DVector::from_vec(vec![-e.re, -e.im]))
            .ok_or_else(|| Error::SingularJacobian(format!("conformality at node ({s}, {k})")))?;
        a += d[0];
        rho += d[1];
        if d.amax() < 1e-15 {
            return Ok((a, rho));
        }
    }
    Err(Error::MaxIter(format!("(alpha, rho) at node ({s}, {k})")))
}

/// (α, ρ) at node (s, k) re-solved from conformality when that node alone
/// is opened with parameter `t` and the horizontal periods carry the
/// lattice correction `lattice_tau`.
pub fn node_forces_at(config: &Configuration, s: usize, k: usize, t: C64, lattice_tau: f64) -> Result<(f64, f64)> {
    // Any small ε: every node is closed right away.
    let mut surface = NodedSurface::build(config, 0.1, None, None)?;
    surface.close_all();
    surface.set_t(s, k, t);
    surface.check_range()?;
    let spec = FormSpec::central(config, lattice_tau);
    let order = default_order(&surface);
    resolve_alpha_rho(&surface, &spec, s, k, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn pack_roundtrip() {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4, 0.0, 0.0).unwrap();
        let mut u = leading_order_guess(&c, 0.4, [1.0, 1.0], MaskPreset::Default);
        assert_eq!(u.free.len(), 24);
        let x: Vec<f64> = (0..24).map(|i| i as f64 * 0.5).collect();
        u.unpack(&x);
        assert_eq!(u.pack(), x);
        let fl = mask(&c, MaskPreset::FreeLambda);
        assert_eq!(fl.len(), 24);
        assert!(fl.contains(&Var::Lambda2) && !fl.contains(&Var::Zeta { s: 0, node: 1 }));
    }

    #[test]
    fn lattice_reduction() {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], 0.6, 0.0, 0.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let (t1, t2) = (c.t_vec(1), c.t_vec(2));
        let d = [0.01 + two_pi * (3.0 * t1[0] - 2.0 * t2[0]), -0.02 + two_pi * (3.0 * t1[1] - 2.0 * t2[1])];
        let r = reduce_mod_lattice(&c, 0.0, d);
        assert!((r[0] - 0.01).abs() < 1e-12 && (r[1] + 0.02).abs() < 1e-12);
    }

    #[test]
    fn leading_beta_balances_horizontally() {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], 0.6, 0.0, 0.0).unwrap();
        let (a1, a2) = (0.3, -0.7);
        let b = leading_beta(c.theta, a1, a2);
        let (t1, p1, t2, p2) = (c.t_vec(1), c.t_perp(1), c.t_vec(2), c.t_perp(2));
        for i in 0..2 {
            let lhs = a1 * t1[i] + b[0] * p1[i];
            let rhs = a2 * t2[i] + b[1] * p2[i];
            assert!((lhs - rhs).abs() < 1e-14);
        }
        assert!(((b[0] * b[0] - b[1] * b[1]) - (a2 * a2 - a1 * a1)).abs() < 1e-14);
    }

    #[test]
    fn single_scherk_layer_is_a_solution() {
        let c = Configuration::dpms(1, vec![], vec![], FRAC_PI_4).unwrap();
        let u = leading_order_guess(&c, 0.3, [0.0; 2], MaskPreset::Default);
        let r = assemble_residual(&c, 0.3, &u).unwrap();
        assert!(r.norms().max() < 1e-11, "{:?}", r.norms());
        let rep = newton_solve(&c, 0.3, &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
    }
}
