//! Regular 1-forms on the opened surface.
//!
//! On sphere k each component is stored as simple poles at the four
//! punctures plus, at every opened node, a truncated principal part
//! Σ_{m=1}^{M} c_m u^{−m−1} du in the node coordinate. The principal parts
//! are fixed by matching across u·v = t: the partner's Taylor tail
//! Σ b_m v^m dv pulls back to −Σ b_m t^{m+1} u^{−m−2} du, so c_m = −t^m b_{m−1}.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::config::{parity, Configuration, Mode};
use crate::error::{Error, Result};
use crate::noded::{central_punctures, side_sign, NodedSurface};

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };
pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Trapezoid nodes for Taylor coefficients on |u| = δ.
pub const TAYLOR_NODES: usize = 128;
/// Taylor order used for the closed-form annulus leg of B-periods.
pub const LEG_ORDER: usize = 56;
pub const DEFAULT_MATCHING_TOL: f64 = 1e-12;
pub const MAX_MATCHING_ITERS: usize = 200;
pub const BALANCE_TOL: f64 = 1e-12;

pub type V3 = [f64; 3];
pub type C3 = [C64; 3];

/// Per-slot forces f_{s,k} and horizontal periods x_{s,k}, indexed
/// `[slot][s]`. Slot k feeds p_{s,k} and q_{s,k+1}; in the cyclic mode slot 0
/// aliases slot n, in the linear mode slots 0 and n are the free ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormSpec {
    pub f: Vec<[V3; 2]>,
    pub x: Vec<[V3; 2]>,
}

/// x_{s,k} = s T_{ς(k)} (1 + Λ_{ς(k)} τ).
pub fn prescribed_x(config: &Configuration, s: usize, k: usize, tau: f64) -> V3 {
    let j = if k == 0 { 2 } else { parity(k) };
    let t = config.t_vec(j);
    let sc = side_sign(s) * (1.0 + config.lambda(j) * tau);
    [sc * t[0], sc * t[1], 0.0]
}

impl FormSpec {
    /// f = (0, 0, 1) everywhere with prescribed x at lattice correction `tau`.
    pub fn central(config: &Configuration, tau: f64) -> Self {
        let n = config.n;
        let mut f = vec![[[0.0, 0.0, 1.0]; 2]; n + 1];
        let mut x = vec![[[0.0; 3]; 2]; n + 1];
        for k in 0..=n {
            let kk = if k == 0 && config.mode == Mode::Tpms { n } else { k };
            for s in 0..2 {
                x[k][s] = prescribed_x(config, s, kk, tau);
            }
        }
        if config.mode == Mode::Tpms {
            f[0] = f[n];
        }
        Self { f, x }
    }

    /// Complex residue vector f − i x for a slot.
    pub fn residue(&self, slot: usize, s: usize) -> C3 {
        let (f, x) = (self.f[slot][s], self.x[slot][s]);
        [0, 1, 2].map(|i| C64::new(f[i], -x[i]))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularForms {
    pub surface: NodedSurface,
    pub spec: FormSpec,
    pub order: usize,
    /// Residues per sphere at (p₊, p₋, q₊, q₋).
    pub residues: Vec<[C3; 4]>,
    /// Principal-part corrections per sphere and side: `[k-1][s][m-1]`.
    pub corr_p: Vec<[Vec<C3>; 2]>,
    pub corr_q: Vec<[Vec<C3>; 2]>,
    pub iterations: usize,
}

/// Closest central puncture distance measured in a node chart.
pub fn chart_separation(theta: f64) -> f64 {
    let v = std::f64::consts::FRAC_PI_2 - theta;
    v.tan().min(1.0 / v.tan())
}

/// Truncation order so that dropped principal-part terms stay below 1e−16
/// on the whole annulus.
pub fn default_order(surface: &NodedSurface) -> usize {
    let ratio = surface.delta / chart_separation(surface.config.theta);
    let m = (-37.0 / ratio.ln()).ceil() as usize;
    m.clamp(8, 64)
}

/// Slot feeding q_{·,k} on sphere k (1-based).
pub fn q_slot(surface: &NodedSurface, k: usize) -> usize {
    match surface.config.mode {
        Mode::Tpms if k == 1 => surface.n(),
        _ => k - 1,
    }
}

fn horner_tail(c: &[C3], w: C64) -> C3 {
    // Σ_{m=1}^{M} c_m w^m
    let mut acc = [ZERO; 3];
    for cm in c.iter().rev() {
        for i in 0..3 {
            acc[i] = (acc[i] + cm[i]) * w;
        }
    }
    acc
}

impl RegularForms {
    fn puncture(&self, k: usize, j: usize) -> C64 {
        let sf = &self.surface;
        match j {
            0 => sf.p[k - 1][0],
            1 => sf.p[k - 1][1],
            2 => sf.q[k - 1][0],
            _ => sf.q[k - 1][1],
        }
    }

    pub fn punctures(&self, k: usize) -> [C64; 4] {
        [0, 1, 2, 3].map(|j| self.puncture(k, j))
    }

    /// ω/dz on sphere k without region checks.
    pub fn eval_dz(&self, k: usize, z: C64) -> C3 {
        let mut out = [ZERO; 3];
        let res = &self.residues[k - 1];
        for j in 0..4 {
            let r = 1.0 / (z - self.puncture(k, j));
            for i in 0..3 {
                out[i] += res[j][i] * r;
            }
        }
        for s in 0..2 {
            for (corr, pt, sg) in [
                (&self.corr_p[k - 1][s], self.surface.p[k - 1][s], NodedSurface::u_sign(k)),
                (&self.corr_q[k - 1][s], self.surface.q[k - 1][s], NodedSurface::v_sign(k)),
            ] {
                if corr.is_empty() {
                    continue;
                }
                let den = z + pt;
                let u = sg * I * (z - pt) / den;
                let dudz = sg * I * 2.0 * pt / (den * den);
                let tail = horner_tail(corr, 1.0 / u);
                let scale = dudz / u;
                for i in 0..3 {
                    out[i] += tail[i] * scale;
                }
            }
        }
        out
    }

    /// ω/du_{s,k} at node coordinate u.
    pub fn eval_du(&self, s: usize, k: usize, u: C64) -> C3 {
        let sg = NodedSurface::u_sign(k);
        let p = self.surface.p[k - 1][s];
        self.eval_chart(k, p, sg, u)
    }

    /// ω/dv_{s,k} at node coordinate v.
    pub fn eval_dv(&self, s: usize, k: usize, v: C64) -> C3 {
        let sg = NodedSurface::v_sign(k);
        let q = self.surface.q[k - 1][s];
        self.eval_chart(k, q, sg, v)
    }

    fn eval_chart(&self, k: usize, p: C64, sg: f64, u: C64) -> C3 {
        let iw = u / sg;
        let z = p * (I + iw) / (I - iw);
        let d = I - iw;
        let dzdu = p * (2.0 * I / sg) / (d * d);
        let w = self.eval_dz(k, z);
        w.map(|x| x * dzdu)
    }

    /// Checked evaluation of ω/dz on sphere k.
    pub fn evaluate(&self, k: usize, z: C64) -> Result<C3> {
        for (j, pt) in self.punctures(k).iter().enumerate() {
            if (z - pt).norm() < 1e-12 {
                return Err(Error::Pole(format!("sphere {k}, puncture {j}")));
            }
        }
        let sf = &self.surface;
        for s in 0..2 {
            let t = sf.node_t(s, k);
            if t.norm() > 0.0 && sf.node_coord_u(s, k, z)?.norm() < t.norm() / sf.delta {
                return Err(Error::Region(format!("inside the removed disk at p({s},{k})")));
            }
            let kp = sf.prev(k);
            if sf.q_opened(k) {
                let t = sf.node_t(s, kp);
                if t.norm() > 0.0 && sf.node_coord_v(s, k, z)?.norm() < t.norm() / sf.delta {
                    return Err(Error::Region(format!("inside the removed disk at q({s},{k})")));
                }
            }
        }
        Ok(self.eval_dz(k, z))
    }

    /// Taylor coefficients of the regular part of ω/du in a node chart,
    /// orders 0..count, from the trapezoid rule on |u| = δ.
    pub fn taylor_in_chart(&self, k: usize, p: C64, sg: f64, count: usize) -> Vec<C3> {
        let n = TAYLOR_NODES;
        let rho = self.surface.delta;
        let vals: Vec<(C64, C3)> = (0..n)
            .map(|j| {
                let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
                (e, self.eval_chart(k, p, sg, e * rho))
            })
            .collect();
        let mut out = vec![[ZERO; 3]; count];
        for (m, o) in out.iter_mut().enumerate() {
            let scale = rho.powi(-(m as i32)) / n as f64;
            for (e, v) in &vals {
                let ph = e.conj().powu(m as u32);
                for i in 0..3 {
                    o[i] += v[i] * ph;
                }
            }
            for x in o.iter_mut() {
                *x *= scale;
            }
        }
        out
    }

    pub fn taylor_at_p(&self, s: usize, k: usize, count: usize) -> Vec<C3> {
        self.taylor_in_chart(k, self.surface.p[k - 1][s], NodedSurface::u_sign(k), count)
    }

    pub fn taylor_at_q(&self, s: usize, k: usize, count: usize) -> Vec<C3> {
        self.taylor_in_chart(k, self.surface.q[k - 1][s], NodedSurface::v_sign(k), count)
    }

    /// Sum of the four residues on sphere k; zero for balanced data.
    pub fn residue_sum(&self, k: usize) -> C3 {
        let r = &self.residues[k - 1];
        [0, 1, 2].map(|i| r[0][i] + r[1][i] + r[2][i] + r[3][i])
    }
}

fn residue_table(surface: &NodedSurface, spec: &FormSpec) -> Vec<[C3; 4]> {
    (1..=surface.n())
        .map(|k| {
            let qs = q_slot(surface, k);
            let rp = spec.residue(k, 0);
            let rm = spec.residue(k, 1);
            let qp = spec.residue(qs, 0).map(|x| -x);
            let qm = spec.residue(qs, 1).map(|x| -x);
            [rp, rm, qp, qm]
        })
        .collect()
}

fn check_spec(surface: &NodedSurface, spec: &FormSpec) -> Result<()> {
    let n = surface.n();
    if spec.f.len() != n + 1 || spec.x.len() != n + 1 {
        return Err(Error::Spec(format!("expected {} slots", n + 1)));
    }
    Ok(())
}

/// Solves the node-matching fixed point with balance enforced.
pub fn solve_forms(surface: &NodedSurface, spec: &FormSpec, order: usize, tol: f64) -> Result<RegularForms> {
    check_spec(surface, spec)?;
    let table = residue_table(surface, spec);
    for (k, r) in table.iter().enumerate() {
        for i in 0..3 {
            let s = r[0][i] + r[1][i] + r[2][i] + r[3][i];
            if s.norm() > BALANCE_TOL {
                return Err(Error::Spec(format!("sphere {}: residues sum to {s} in component {}", k + 1, i + 1)));
            }
        }
    }
    solve_forms_unbalanced(surface, spec, order, tol)
}

/// As `solve_forms`, but any imbalance is left as a residue at ∞ on each
/// sphere. Used while a Newton iterate is off the balance manifold.
pub fn solve_forms_unbalanced(
    surface: &NodedSurface,
    spec: &FormSpec,
    order: usize,
    tol: f64,
) -> Result<RegularForms> {
    check_spec(surface, spec)?;
    if order < 4 {
        return Err(Error::Parameter(format!("truncation order {order} < 4")));
    }
    surface.check_range()?;
    let n = surface.n();
    let mut forms = RegularForms {
        surface: surface.clone(),
        spec: spec.clone(),
        order,
        residues: residue_table(surface, spec),
        corr_p: vec![[Vec::new(), Vec::new()]; n],
        corr_q: vec![[Vec::new(), Vec::new()]; n],
        iterations: 0,
    };
    let nodes: Vec<(usize, usize)> = (1..=surface.config.node_count())
        .flat_map(|k| [(0, k), (1, k)])
        .filter(|&(s, k)| surface.node_t(s, k).norm() > 0.0)
        .collect();
    if nodes.is_empty() {
        return Ok(forms);
    }
    for &(s, k) in &nodes {
        forms.corr_p[k - 1][s] = vec![[ZERO; 3]; order];
        let kn = surface.next(k);
        forms.corr_q[kn - 1][s] = vec![[ZERO; 3]; order];
    }
    let mut last = f64::INFINITY;
    for it in 1..=MAX_MATCHING_ITERS {
        let mut updates = Vec::with_capacity(nodes.len());
        for &(s, k) in &nodes {
            let kn = surface.next(k);
            let t = surface.node_t(s, k);
            let a = forms.taylor_at_p(s, k, order);
            let b = forms.taylor_at_q(s, kn, order);
            let mut c = vec![[ZERO; 3]; order];
            let mut d = vec![[ZERO; 3]; order];
            let mut tm = C64::new(1.0, 0.0);
            for m in 1..=order {
                tm *= t;
                for i in 0..3 {
                    c[m - 1][i] = -tm * b[m - 1][i];
                    d[m - 1][i] = -tm * a[m - 1][i];
                }
            }
            updates.push((s, k, kn, c, d));
        }
        let mut change: f64 = 0.0;
        for (s, k, kn, c, d) in updates {
            for (old, new) in forms.corr_p[k - 1][s].iter().zip(&c).chain(forms.corr_q[kn - 1][s].iter().zip(&d)) {
                for i in 0..3 {
                    change = change.max((old[i] - new[i]).norm());
                }
            }
            forms.corr_p[k - 1][s] = c;
            forms.corr_q[kn - 1][s] = d;
        }
        forms.iterations = it;
        if change < tol {
            return Ok(forms);
        }
        if it > 20 && change > last {
            return Err(Error::Convergence(format!("matching diverges: change {change:.3e} at iteration {it}")));
        }
        last = change;
    }
    Err(Error::Convergence(format!("no fixed point after {MAX_MATCHING_ITERS} iterations")))
}

/// Explicit forms at t = 0 and central data on sphere k.
pub fn explicit_central(config: &Configuration, k: usize, z: C64) -> C3 {
    let (p, q) = central_punctures(config.theta);
    let th = |j: usize| if j == 1 { config.theta } else { std::f64::consts::PI - config.theta };
    let a = th(parity(k));
    let b = th(parity(k + 1));
    let (pp, pm, qp, qm) = (p[0], p[1], q[0], q[1]);
    let phi1 = -I * a.cos() / (z - pp) - I * b.cos() / (z - qm) + I * a.cos() / (z - pm) + I * b.cos() / (z - qp);
    let phi2 = -I * a.sin() / (z - pp) - I * b.sin() / (z - qm) + I * a.sin() / (z - pm) + I * b.sin() / (z - qp);
    let phi3 = 1.0 / (z - pp) - 1.0 / (z - qm) + 1.0 / (z - pm) - 1.0 / (z - qp);
    [phi1, phi2, phi3]
}

/// B-period of a node: the raw integral and the value with (f − ix) log t
/// removed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BPeriod {
    pub raw: C3,
    pub regularized: C3,
    pub log_t: C64,
}

/// log t on the branch arg t = π + ψ with ψ = arg(−t) ∈ (−π, π].
pub fn log_node(t: C64) -> C64 {
    let psi = (-t).arg();
    C64::new(t.norm().ln(), std::f64::consts::PI + psi)
}

pub const PATH_TOL: f64 = 1e-13;
pub const A_CONTOUR_NODES: usize = 256;
pub const ZERO_CONTOUR_RADIUS: f64 = 0.05;
pub const ZERO_CONTOUR_NODES: usize = 96;

fn add3(a: C3, b: C3) -> C3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale3(a: C3, s: C64) -> C3 {
    a.map(|x| x * s)
}

impl RegularForms {
    /// ∫ ω along a puncture-avoiding polyline on sphere k.
    pub fn integrate(&self, k: usize, a: C64, b: C64) -> Result<C3> {
        let path = crate::scherk::plan_path(&self.punctures(k), a, b, crate::scherk::DETOUR)?;
        Ok(crate::quad::integrate_polyline(|z| self.eval_dz(k, z), &path, PATH_TOL, 4))
    }

    /// 2πi times the stored residue at p_{s,k}.
    pub fn a_period(&self, s: usize, k: usize) -> C3 {
        let two_pi_i = C64::new(0.0, 2.0 * std::f64::consts::PI);
        scale3(self.residues[k - 1][s], two_pi_i)
    }

    /// The same period by quadrature on |u_{s,k}| = δ/1.5.
    pub fn a_period_numeric(&self, s: usize, k: usize) -> C3 {
        let r = self.surface.delta / 1.5;
        crate::quad::circle_trapezoid(|u| self.eval_du(s, k, u), ZERO, r, A_CONTOUR_NODES)
    }

    /// Annulus leg in the chart of one side, from radius δ to the midpoint
    /// `mid` (or back when `forward` is false). `taylor` are the regular
    /// coefficients, `corr` the principal part, `res` the residue.
    fn annulus_half(taylor: &[C3], corr: &[C3], res: C3, delta: f64, mid: C64, half_log: C64, forward: bool) -> C3 {
        let mut acc = [ZERO; 3];
        let d = C64::new(delta, 0.0);
        for (m, a) in taylor.iter().enumerate() {
            let e = (m + 1) as i32;
            let w = (mid.powi(e) - d.powi(e)) / (m + 1) as f64;
            for i in 0..3 {
                acc[i] += a[i] * w;
            }
        }
        for (m1, c) in corr.iter().enumerate() {
            let m = (m1 + 1) as i32;
            let w = (mid.powi(-m) - d.powi(-m)) / (-(m as f64));
            for i in 0..3 {
                acc[i] += c[i] * w;
            }
        }
        let lg = half_log - delta.ln();
        for i in 0..3 {
            acc[i] += res[i] * lg;
        }
        if forward {
            acc
        } else {
            acc.map(|x| -x)
        }
    }

    pub fn b_period(&self, s: usize, k: usize) -> Result<BPeriod> {
        let sf = &self.surface;
        let t = sf.node_t(s, k);
        if t.norm() == 0.0 {
            return Err(Error::Parameter(format!("node ({s}, {k}) is not opened")));
        }
        let kn = sf.next(k);
        let delta = sf.delta;
        let log_t = log_node(t);
        let half_log = log_t * 0.5;
        let mid = half_log.exp();
        let z1 = sf.node_coord_u_inv(s, k, C64::new(delta, 0.0));
        let leg1 = self.integrate(k, sf.base[k - 1], z1)?;
        let a = self.taylor_at_p(s, k, LEG_ORDER);
        let b = self.taylor_at_q(s, kn, LEG_ORDER);
        let leg2a = Self::annulus_half(&a, &self.corr_p[k - 1][s], self.residues[k - 1][s], delta, mid, half_log, true);
        let leg2b = Self::annulus_half(&b, &self.corr_q[kn - 1][s], self.residues[kn - 1][2 + s], delta, mid, half_log, false);
        let z3 = sf.node_coord_v_inv(s, kn, C64::new(delta, 0.0));
        let leg3 = self.integrate(kn, z3, sf.base[kn - 1])?;
        let raw = add3(add3(leg1, leg2a), add3(leg2b, leg3));
        let r = self.residues[k - 1][s];
        let regularized = [0, 1, 2].map(|i| raw[i] - r[i] * log_t);
        Ok(BPeriod { raw, regularized, log_t })
    }

    /// Value of the regularized B-period for a node that is still closed:
    /// lim [∫_{0_k}^z ω − r log u] − lim [∫_{0_{k+1}}^z ω − r_q log v].
    pub fn b_period_closed_limit(&self, s: usize, k: usize) -> Result<C3> {
        let sf = &self.surface;
        let kn = sf.next(k);
        let delta = sf.delta;
        let z1 = sf.node_coord_u_inv(s, k, C64::new(delta, 0.0));
        let z3 = sf.node_coord_v_inv(s, kn, C64::new(delta, 0.0));
        let i1 = self.integrate(k, sf.base[k - 1], z1)?;
        let j = self.integrate(kn, sf.base[kn - 1], z3)?;
        let a = self.taylor_at_p(s, k, LEG_ORDER);
        let b = self.taylor_at_q(s, kn, LEG_ORDER);
        let r = self.residues[k - 1][s];
        let rq = self.residues[kn - 1][2 + s];
        let tail = |c: &[C3], i: usize| -> C64 {
            c.iter().enumerate().map(|(m, x)| x[i] * delta.powi(m as i32 + 1) / (m + 1) as f64).sum()
        };
        Ok([0, 1, 2].map(|i| {
            let lp = i1[i] - tail(&a, i) - r[i] * delta.ln();
            let lq = j[i] - tail(&b, i) - rq[i] * delta.ln();
            lp - lq
        }))
    }

    /// Q/dz² = Σ (Φ_i/dz)².
    pub fn quadratic_differential(&self, k: usize, z: C64) -> Result<C64> {
        let w = self.evaluate(k, z)?;
        Ok(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    }

    fn phi3_dz(&self, k: usize, z: C64) -> C64 {
        self.eval_dz(k, z)[2]
    }

    /// Zeros of Φ₃ near 0_k and ∞_k. The second is returned in the 1/z chart.
    pub fn phi3_zeros(&self, k: usize) -> Result<(C64, C64)> {
        let z0 = newton_root(|z| self.phi3_dz(k, z), C64::new(0.0, 0.0), 0.5)
            .ok_or_else(|| Error::Root(format!("zero of Phi3 near 0 on sphere {k}")))?;
        let w0 = newton_root(|w| self.phi3_at_infinity_chart(k, w), C64::new(0.0, 0.0), 0.5)
            .ok_or_else(|| Error::Root(format!("zero of Phi3 near infinity on sphere {k}")))?;
        Ok((z0, w0))
    }

    pub fn phi3_zero_near_origin(&self, k: usize) -> Result<C64> {
        newton_root(|z| self.phi3_dz(k, z), C64::new(0.0, 0.0), 0.5)
            .ok_or_else(|| Error::Root(format!("zero of Phi3 near 0 on sphere {k}")))
    }

    /// Φ₃/dw in the chart w = 1/z.
    pub fn phi3_at_infinity_chart(&self, k: usize, w: C64) -> C64 {
        let res = &self.residues[k - 1];
        let pts = self.punctures(k);
        let total: C64 = (0..4).map(|j| res[j][2]).sum();
        let mut h = C64::new(0.0, 0.0);
        if total.norm() > 0.0 {
            h -= total / w;
        }
        for j in 0..4 {
            h -= res[j][2] * pts[j] / (1.0 - pts[j] * w);
        }
        for s in 0..2 {
            for (corr, pt, sg) in [
                (&self.corr_p[k - 1][s], self.surface.p[k - 1][s], NodedSurface::u_sign(k)),
                (&self.corr_q[k - 1][s], self.surface.q[k - 1][s], NodedSurface::v_sign(k)),
            ] {
                if corr.is_empty() {
                    continue;
                }
                let den = 1.0 + pt * w;
                let u = sg * I * (1.0 - pt * w) / den;
                let dudw = sg * I * (-2.0 * pt) / (den * den);
                let tail = horner_tail(corr, 1.0 / u);
                h += tail[2] * dudw / u;
            }
        }
        h
    }

    /// (1/2πi) ∮ Q/Φ₃ over A_{s,k}, on |u_{s,k}| = δ/1.5.
    pub fn conform_residual_a(&self, s: usize, k: usize) -> Result<C64> {
        let r = self.surface.delta / 1.5;
        let n = A_CONTOUR_NODES;
        let mut acc = C64::new(0.0, 0.0);
        let mut scale: f64 = 0.0;
        for j in 0..n {
            let u = C64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
            let w = self.eval_du(s, k, u);
            scale = scale.max(w[2].norm());
            if w[2].norm() < 1e-8 * scale.max(1.0) {
                return Err(Error::Contour(format!("Phi3 vanishes on A({s},{k})")));
            }
            acc += (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) / w[2] * u;
        }
        Ok(acc / n as f64)
    }

    /// Residue of Q/Φ₃ at the zero ζ_{k,0}, by quadrature on a small circle.
    pub fn conform_residual_zero(&self, k: usize) -> Result<C64> {
        let z0 = self.phi3_zero_near_origin(k)?;
        self.conform_residual_zero_at(k, z0)
    }

    pub fn conform_residual_zero_at(&self, k: usize, z0: C64) -> Result<C64> {
        let r = ZERO_CONTOUR_RADIUS;
        let n = ZERO_CONTOUR_NODES;
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
            let w = self.eval_dz(k, z0 + e * r);
            if w[2].norm() < 1e-10 {
                return Err(Error::Contour(format!("Phi3 vanishes near the zero contour on sphere {k}")));
            }
            acc += (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) / w[2] * e * r;
        }
        Ok(acc / n as f64)
    }
}

/// Newton iteration with a central-difference derivative; `None` when the
/// iterate leaves the disk of radius `basin` around the seed.
pub fn newton_root<F: Fn(C64) -> C64>(f: F, seed: C64, basin: f64) -> Option<C64> {
    let mut z = seed;
    for _ in 0..60 {
        let fz = f(z);
        let h = 1e-6;
        let d = (f(z + h) - f(z - h)) / (2.0 * h);
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let step = fz / d;
        z -= step;
        if (z - seed).norm() > basin || !z.is_finite() {
            return None;
        }
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    let fz = f(z);
    (fz.norm() < 1e-12).then_some(z)
}
