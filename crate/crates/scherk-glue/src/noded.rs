//! The noded Riemann surface: one sphere per layer, four punctures per
//! sphere, and node parameters t gluing p_{s,k} to q_{s,k+1} through
//! u_{s,k} · v_{s,k+1} = t_{s,k}.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::config::{Configuration, Mode};
use crate::error::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Extra sign of the v coordinates. With it the identification reads
/// u·v = t in coordinates whose product equals −t for the plain
/// (−1)^k i (z−P)/(z+P) pair, which puts ψ = 0 at the in-phase gluing.
pub const V_SIGN: f64 = -1.0;

/// Side index: 0 for s = +, 1 for s = −.
pub fn side_sign(s: usize) -> f64 {
    if s == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodedSurface {
    pub config: Configuration,
    pub epsilon: f64,
    pub delta: f64,
    /// p_{s,k}, indexed `[k-1][s]`.
    pub p: Vec<[C64; 2]>,
    /// q_{s,k}, indexed `[k-1][s]`.
    pub q: Vec<[C64; 2]>,
    /// t_{s,k}; zero at unopened nodes.
    pub t: Vec<[C64; 2]>,
    pub zeta: Vec<[f64; 2]>,
    pub psi: Vec<[f64; 2]>,
    /// Integration base points 0_k.
    pub base: Vec<C64>,
}

/// Central punctures (p₊, p₋, q₊, q₋) on every sphere.
pub fn central_punctures(theta: f64) -> ([C64; 2], [C64; 2]) {
    let e = C64::from_polar(1.0, FRAC_PI_2 - theta);
    ([-e.conj(), e.conj()], [-e, e])
}

/// Disk radius from the closest pair of central punctures.
pub fn choose_delta(theta: f64) -> f64 {
    let v = FRAC_PI_2 - theta;
    let d = v.tan().min(1.0 / v.tan());
    (0.4 * d).min(0.25)
}

/// Center and radius of the z-disk {|(z−P)/(z+P)| < r}.
fn apollonius(p: C64, r: f64) -> (C64, f64) {
    let r2 = r * r;
    (p * (1.0 + r2) / (1.0 - r2), 2.0 * r * p.norm() / (1.0 - r2))
}

fn mobius(sign: f64, p: C64, z: C64) -> Result<C64> {
    let den = z + p;
    if den.norm() < 1e-300 || !z.is_finite() {
        if !z.is_finite() {
            return Ok(sign * I);
        }
        return Err(Error::Pole(format!("z = {z} at the antipode of {p}")));
    }
    Ok(sign * I * (z - p) / den)
}

fn mobius_inv(sign: f64, p: C64, w: C64) -> C64 {
    let iw = w / sign;
    p * (I + iw) / (I - iw)
}

impl NodedSurface {
    /// Builds Σ_t with central punctures and t_{s,k} = −exp(−ℓ_k/ε² − ζ_{s,k} + iψ_{s,k}).
    pub fn build(
        config: &Configuration,
        epsilon: f64,
        zeta_overrides: Option<&[[f64; 2]]>,
        psi_overrides: Option<&[[f64; 2]]>,
    ) -> Result<Self> {
        config.validate()?;
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon = {epsilon}")));
        }
        let n = config.n;
        let m = config.node_count();
        let (pc, qc) = central_punctures(config.theta);
        let zeta: Vec<[f64; 2]> = match zeta_overrides {
            Some(z) if z.len() == m => z.to_vec(),
            Some(z) => return Err(Error::Parameter(format!("{} zeta values for {m} nodes", z.len()))),
            None => vec![[0.0; 2]; m],
        };
        let psi: Vec<[f64; 2]> = match psi_overrides {
            Some(p) if p.len() == m => p.to_vec(),
            Some(p) => return Err(Error::Parameter(format!("{} psi values for {m} nodes", p.len()))),
            None => config.psi.iter().map(|&p| [p, p]).collect(),
        };
        let mut s = Self {
            config: config.clone(),
            epsilon,
            delta: choose_delta(config.theta),
            p: vec![pc; n],
            q: vec![qc; n],
            t: vec![[C64::new(0.0, 0.0); 2]; n],
            zeta,
            psi,
            base: vec![C64::new(0.0, 0.0); n],
        };
        s.refresh_t();
        s.check_range()?;
        s.check_disks()?;
        Ok(s)
    }

    fn refresh_t(&mut self) {
        let e2 = self.epsilon * self.epsilon;
        for k in 0..self.config.node_count() {
            for s in 0..2 {
                let l = self.config.ell[k] / e2 + self.zeta[k][s];
                self.t[k][s] = -C64::from_polar((-l).exp(), self.psi[k][s]);
            }
        }
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    /// Whether the node between p_{·,k} and q_{·,k+1} is opened (1-based k).
    pub fn opened(&self, k: usize) -> bool {
        k >= 1 && k <= self.config.node_count()
    }

    /// Sphere glued above p_{s,k}.
    pub fn next(&self, k: usize) -> usize {
        if k == self.n() {
            1
        } else {
            k + 1
        }
    }

    /// Sphere glued below q_{s,k}.
    pub fn prev(&self, k: usize) -> usize {
        if k == 1 {
            self.n()
        } else {
            k - 1
        }
    }

    /// Whether q_{·,k} is glued (to p_{·,k−1}).
    pub fn q_opened(&self, k: usize) -> bool {
        match self.config.mode {
            Mode::Tpms => true,
            Mode::Dpms => k >= 2,
        }
    }

    pub fn parity_sign(k: usize) -> f64 {
        if k % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn node_t(&self, s: usize, k: usize) -> C64 {
        if self.opened(k) {
            self.t[k - 1][s]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn u_sign(k: usize) -> f64 {
        Self::parity_sign(k)
    }

    pub fn v_sign(k: usize) -> f64 {
        V_SIGN * Self::parity_sign(k)
    }

    pub fn node_coord_u(&self, s: usize, k: usize, z: C64) -> Result<C64> {
        mobius(Self::u_sign(k), self.p[k - 1][s], z)
    }

    pub fn node_coord_v(&self, s: usize, k: usize, z: C64) -> Result<C64> {
        mobius(Self::v_sign(k), self.q[k - 1][s], z)
    }

    pub fn node_coord_u_inv(&self, s: usize, k: usize, u: C64) -> C64 {
        mobius_inv(Self::u_sign(k), self.p[k - 1][s], u)
    }

    pub fn node_coord_v_inv(&self, s: usize, k: usize, v: C64) -> C64 {
        mobius_inv(Self::v_sign(k), self.q[k - 1][s], v)
    }

    /// Maps u_{s,k} in the annulus to v_{s,k+1} = t_{s,k}/u.
    pub fn identify(&self, s: usize, k: usize, u: C64) -> Result<C64> {
        let t = self.node_t(s, k);
        if t.norm() == 0.0 {
            return Err(Error::Annulus(format!("node ({s}, {k}) is not opened")));
        }
        let r = u.norm();
        let lo = t.norm() / self.delta;
        let slack = 1e-12 * self.delta;
        if r < lo - slack || r > self.delta + slack {
            return Err(Error::Annulus(format!("|u| = {r} outside [{lo}, {}]", self.delta)));
        }
        Ok(t / u)
    }

    /// Membership in the fixed domain U_{k,δ} (central-value coordinates,
    /// boundary excluded).
    pub fn in_fixed_domain(&self, k: usize, z: C64) -> bool {
        let (pc, qc) = central_punctures(self.config.theta);
        let h = 0.5 * self.delta;
        for s in 0..2 {
            let u = mobius(Self::u_sign(k), pc[s], z);
            let v = mobius(Self::v_sign(k), qc[s], z);
            match (u, v) {
                (Ok(u), Ok(v)) if u.norm() > h && v.norm() > h => {}
                _ => return false,
            }
        }
        true
    }

    pub fn tau_max(&self) -> f64 {
        self.config.tau_max(self.epsilon)
    }

    /// Sets a free puncture p_{+,k} and revalidates.
    pub fn set_p_plus(&mut self, k: usize, value: C64) -> Result<()> {
        self.p[k - 1][0] = value;
        self.check_disks()
    }

    pub fn check_range(&self) -> Result<()> {
        let d2 = self.delta * self.delta;
        for k in 1..=self.config.node_count() {
            for s in 0..2 {
                let a = self.t[k - 1][s].norm();
                if !(a < d2) {
                    return Err(Error::Range(format!("|t({s},{k})| = {a} >= delta^2 = {d2}")));
                }
            }
        }
        Ok(())
    }

    pub fn check_disks(&self) -> Result<()> {
        for k in 0..self.n() {
            let pts = [self.p[k][0], self.p[k][1], self.q[k][0], self.q[k][1]];
            let disks: Vec<(C64, f64)> = pts.iter().map(|&p| apollonius(p, self.delta)).collect();
            for a in 0..4 {
                for b in a + 1..4 {
                    let (c1, r1) = disks[a];
                    let (c2, r2) = disks[b];
                    if (c1 - c2).norm() <= r1 + r2 {
                        return Err(Error::Geometry(format!("sphere {}: disks {a} and {b}", k + 1)));
                    }
                }
            }
        }
        Ok(())
    }
}

impl NodedSurface {
    /// Sets every node parameter of side `s` at gap `k` directly.
    pub fn set_t(&mut self, s: usize, k: usize, t: C64) {
        self.t[k - 1][s] = t;
    }

    /// Closes every node (t = 0).
    pub fn close_all(&mut self) {
        for t in self.t.iter_mut() {
            *t = [C64::new(0.0, 0.0); 2];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn meeks(eps: f64) -> NodedSurface {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4, 0.0, 0.0).unwrap();
        NodedSurface::build(&c, eps, None, None).unwrap()
    }

    #[test]
    fn node_parameter_value() {
        let s = meeks(0.4);
        let t = s.t[0][0];
        assert!((t.re + (-3.125f64).exp()).abs() < 1e-16 && t.im.abs() < 1e-18);
        assert!((t.re + 0.04394).abs() < 1e-5);
    }

    #[test]
    fn opposite_phase_is_positive() {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![PI, 0.0], FRAC_PI_4, 0.0, 0.0).unwrap();
        let s = NodedSurface::build(&c, 0.4, None, None).unwrap();
        assert!(s.t[0][0].re > 0.0 && s.t[0][0].im.abs() < 1e-15);
    }

    #[test]
    fn free_ends_unopened() {
        let c = Configuration::dpms(2, vec![1.0], vec![0.0], FRAC_PI_4).unwrap();
        let s = NodedSurface::build(&c, 0.4, None, None).unwrap();
        assert!(s.opened(1) && !s.opened(2) && !s.opened(0));
        assert_eq!(s.node_t(0, 2), C64::new(0.0, 0.0));
        assert_eq!(s.node_t(1, 0), C64::new(0.0, 0.0));
        assert!(s.node_t(0, 1).norm() > 0.0);
    }

    #[test]
    fn central_relations() {
        let s = meeks(0.4);
        let e = C64::from_polar(1.0, PI / 4.0);
        for k in 0..2 {
            assert!((-1.0 / s.p[k][0] - e).norm() < 1e-15);
            assert!((s.q[k][1] - e).norm() < 1e-15);
            assert!((1.0 / s.p[k][1] - e).norm() < 1e-15);
            assert!((-s.q[k][0] - e).norm() < 1e-15);
        }
    }

    #[test]
    fn coordinates() {
        let s = meeks(0.4);
        assert_eq!(s.node_coord_u(0, 1, s.p[0][0]).unwrap(), C64::new(0.0, 0.0));
        let z = C64::new(0.3, 0.2);
        let a = s.node_coord_u(1, 1, z).unwrap();
        let b = s.node_coord_u(1, 2, z).unwrap();
        assert!((a + b).norm() < 1e-15);
        let u = s.node_coord_v(0, 2, z).unwrap();
        assert!((s.node_coord_v_inv(0, 2, u) - z).norm() < 1e-14);
        assert!(s.node_coord_u(0, 1, -s.p[0][0]).is_err());
    }

    #[test]
    fn identification() {
        let s = meeks(0.3);
        let t = s.t[0][0];
        let v = s.identify(0, 1, C64::new(s.delta, 0.0)).unwrap();
        assert!((v - t / s.delta).norm() < 1e-18);
        let r = t.sqrt();
        assert!((s.identify(0, 1, r).unwrap() - r).norm() < 1e-15);
        let u = C64::from_polar(0.5 * s.delta, 1.0);
        let back = s.identify(0, 1, s.identify(0, 1, u).unwrap()).unwrap();
        assert!((back - u).norm() < 1e-15);
        assert!(s.identify(0, 1, C64::new(2.0 * s.delta, 0.0)).is_err());
    }

    #[test]
    fn fixed_domain() {
        let s = meeks(0.4);
        assert!(s.in_fixed_domain(1, C64::new(0.0, 0.0)));
        assert!(!s.in_fixed_domain(1, s.p[0][0]));
        let edge = s.node_coord_u_inv(0, 1, C64::new(0.5 * s.delta, 0.0));
        assert!(!s.in_fixed_domain(1, edge));
    }

    #[test]
    fn range_and_geometry_errors() {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4, 0.0, 0.0).unwrap();
        assert!(matches!(NodedSurface::build(&c, 2.0, None, None), Err(Error::Range(_))));
        let mut s = meeks(0.3);
        assert!(matches!(s.set_p_plus(1, s.q[0][0]), Err(Error::Geometry(_))));
    }
}
