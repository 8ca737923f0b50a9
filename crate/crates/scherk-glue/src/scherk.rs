//! Closed-form Weierstrass data of a doubly periodic Scherk surface.
//!
//! The surface is parameterized on the Riemann sphere minus four punctures on
//! the unit circle. Each puncture is a vertical planar end that undulates
//! with amplitude 2 in the normal direction.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Which of the two mirror Scherk surfaces: `Odd` has Gauss map `z`,
/// `Even` has Gauss map `1/z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Odd,
    Even,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScherkParams {
    pub theta: f64,
    pub variant: Variant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndData {
    pub j: usize,
    pub direction: f64,
    pub sigma: f64,
    pub mu: [f64; 2],
    pub nu: f64,
    pub upsilon: f64,
    pub normal: [f64; 3],
}

/// Punctures closer than this (in the z chart) count as hits.
pub const POLE_TOL: f64 = 1e-12;
/// Minimal clearance of integration paths around punctures.
pub const DETOUR: f64 = 0.05;
/// Absolute quadrature tolerance for `immerse`.
pub const QUAD_TOL: f64 = 1e-10;

impl ScherkParams {
    pub fn new(theta: f64, variant: Variant) -> Result<Self> {
        if !(theta > 0.0 && theta < FRAC_PI_2) || !theta.is_finite() {
            return Err(Error::Parameter(format!("theta = {theta} not in (0, pi/2)")));
        }
        Ok(Self { theta, variant })
    }

    pub fn vartheta(&self) -> f64 {
        FRAC_PI_2 - self.theta
    }

    /// End directions θ_j, j = 1..4 (stored 0-based).
    pub fn directions(&self) -> [f64; 4] {
        let t = self.theta;
        let odd = [t, PI - t, -PI + t, -t];
        match self.variant {
            Variant::Odd => odd,
            Variant::Even => odd.map(|a| PI - a),
        }
    }

    pub fn sigma(&self) -> [f64; 4] {
        [1.0, -1.0, 1.0, -1.0]
    }

    pub fn punctures(&self) -> [C64; 4] {
        let e = C64::from_polar(1.0, self.vartheta());
        [-e.conj(), e, e.conj(), -e]
    }

    /// Partial-fraction coefficients: component i at puncture j.
    pub fn coefficients(&self) -> [[C64; 4]; 3] {
        let d = self.directions();
        let s = self.sigma();
        let mut c = [[C64::new(0.0, 0.0); 4]; 3];
        for j in 0..4 {
            c[0][j] = -I * d[j].cos();
            c[1][j] = -I * d[j].sin();
            c[2][j] = C64::new(s[j], 0.0);
        }
        c
    }

    fn nearest_puncture(&self, z: C64) -> (usize, f64) {
        let p = self.punctures();
        let mut best = (0, f64::INFINITY);
        for (j, pj) in p.iter().enumerate() {
            let d = (z - pj).norm();
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    fn eval_unchecked(&self, z: C64) -> [C64; 3] {
        let p = self.punctures();
        let c = self.coefficients();
        let mut out = [C64::new(0.0, 0.0); 3];
        for j in 0..4 {
            let r = 1.0 / (z - p[j]);
            for i in 0..3 {
                out[i] += c[i][j] * r;
            }
        }
        out
    }

    /// (Φ₁/dz, Φ₂/dz, Φ₃/dz) at `z`.
    pub fn weierstrass_at(&self, z: C64) -> Result<[C64; 3]> {
        let (j, d) = self.nearest_puncture(z);
        if d < POLE_TOL {
            return Err(Error::Pole(format!("z = {z} at p{}", j + 1)));
        }
        Ok(self.eval_unchecked(z))
    }

    /// Stereographic Gauss map −(Φ₁ + iΦ₂)/Φ₃, extended to punctures and ∞.
    pub fn gauss_map(&self, z: C64) -> Result<C64> {
        if !z.is_finite() {
            return match self.variant {
                Variant::Odd => Err(Error::Pole("gauss map of the odd variant at infinity".into())),
                Variant::Even => Ok(C64::new(0.0, 0.0)),
            };
        }
        let (_, d) = self.nearest_puncture(z);
        if d < 1e-6 {
            // Removable singularity: average over a small circle.
            let m = 16;
            let r = 1e-3;
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..m {
                let w = z + C64::from_polar(r, 2.0 * PI * k as f64 / m as f64);
                acc += self.gauss_map(w)?;
            }
            return Ok(acc / m as f64);
        }
        let f = self.eval_unchecked(z);
        if f[2].norm() < 1e-300 {
            let num = f[0] + I * f[1];
            if num.norm() < 1e-300 {
                return Err(Error::Indeterminate(format!("z = {z}")));
            }
            return Err(Error::Pole(format!("gauss map pole at {z}")));
        }
        Ok(-(f[0] + I * f[1]) / f[2])
    }

    /// Local coordinate at end `j` (1-based).
    pub fn local_coord(&self, j: usize, z: C64) -> C64 {
        let p = self.punctures()[j - 1];
        self.orientation() * I * (z - p) / (z + p)
    }

    /// Inverse of `local_coord`.
    pub fn local_coord_inv(&self, j: usize, w: C64) -> C64 {
        let p = self.punctures()[j - 1];
        let iw = w / self.orientation();
        p * (I + iw) / (I - iw)
    }

    fn orientation(&self) -> f64 {
        match self.variant {
            Variant::Odd => 1.0,
            Variant::Even => -1.0,
        }
    }

    /// Residue of Φ_i / w_j at p_j, for i = 1, 2, 3.
    pub fn undulation_coefficients(&self, j: usize) -> [C64; 3] {
        let p = self.punctures();
        let c = self.coefficients();
        let pj = p[j - 1];
        let o = self.orientation();
        let mut out = [C64::new(0.0, 0.0); 3];
        for i in 0..3 {
            let mut acc = -I * c[i][j - 1];
            for l in 0..4 {
                if l != j - 1 {
                    acc += -2.0 * I * pj * c[i][l] / (pj - p[l]);
                }
            }
            out[i] = acc / o;
        }
        out
    }

    pub fn end_data(&self, j: usize) -> Result<EndData> {
        if !(1..=4).contains(&j) {
            return Err(Error::Parameter(format!("end index {j}")));
        }
        let t = self.theta;
        let rhombus = [
            [PI * t.cos(), 0.0],
            [0.0, PI * t.sin()],
            [-PI * t.cos(), 0.0],
            [0.0, -PI * t.sin()],
        ];
        let mu = match self.variant {
            Variant::Odd => rhombus[j - 1],
            Variant::Even => rhombus[4 - j],
        };
        let direction = self.directions()[j - 1];
        let sigma = self.sigma()[j - 1];
        Ok(EndData {
            j,
            direction,
            sigma,
            mu,
            nu: -sigma * (t.sin() * t.cos()).ln(),
            upsilon: self.upsilon_from_gauss_map(j),
            normal: [-sigma * direction.sin(), sigma * direction.cos(), 0.0],
        })
    }

    /// Υ_j = (i/G)(dG/dw_j) at p_j, via the closed-form Gauss map.
    pub fn upsilon_from_gauss_map(&self, j: usize) -> f64 {
        let p = self.punctures()[j - 1];
        let o = self.orientation();
        // dz/dw at w = 0 for z = p(i + w/o)/(i - w/o) is 2p/(i o) ... derived below.
        let dzdw = -2.0 * I * p / o;
        let (g, dg) = match self.variant {
            Variant::Odd => (p, C64::new(1.0, 0.0)),
            Variant::Even => (1.0 / p, -1.0 / (p * p)),
        };
        (I / g * dg * dzdw).re
    }

    /// Re ∫₀ᶻ Φ along the planned path.
    pub fn immerse(&self, z: C64, path_resolution: usize) -> Result<[f64; 3]> {
        let (j, d) = self.nearest_puncture(z);
        if d < POLE_TOL {
            return Err(Error::Pole(format!("z = {z} at p{}", j + 1)));
        }
        let path = plan_path(&self.punctures(), C64::new(0.0, 0.0), z, DETOUR)?;
        let v = quad::integrate_polyline(
            |w| self.eval_unchecked(w),
            &path,
            QUAD_TOL * 0.1,
            path_resolution.max(1),
        );
        Ok([v[0].re, v[1].re, v[2].re])
    }

    /// First-order asymptotic position at local coordinate `w` of end `j`.
    pub fn end_expansion(&self, j: usize, w: C64) -> Result<[f64; 3]> {
        let r = w.norm();
        if !(r > 0.0 && r < 0.3) {
            return Err(Error::Domain(format!("|w| = {r}")));
        }
        let e = self.end_data(j)?;
        let c = self.coefficients();
        let a = self.undulation_coefficients(j);
        let lw = w.ln();
        let base = [e.mu[0], e.mu[1], e.nu];
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = base[i] + (c[i][j - 1] * lw).re + (a[i] * w).re;
        }
        Ok(out)
    }
}

/// Polyline from `a` to `b` keeping clearance `clear` from every puncture
/// except when `b` itself approaches one directly.
pub fn plan_path(punctures: &[C64], a: C64, b: C64, clear: f64) -> Result<Vec<C64>> {
    fn rec(p: &[C64], a: C64, b: C64, clear: f64, depth: usize) -> Option<Vec<C64>> {
        let ab = b - a;
        let len2 = ab.norm_sqr();
        for &pj in p {
            let s = if len2 > 0.0 { ((pj - a) * ab.conj()).re / len2 } else { 0.0 };
            let s = s.clamp(0.0, 1.0);
            let closest = a + ab * s;
            let dist = (closest - pj).norm();
            let need = clear.min(0.5 * (b - pj).norm()).min(0.5 * (a - pj).norm());
            if dist < need && s > 0.0 && s < 1.0 {
                if depth == 0 {
                    return None;
                }
                let mut dir = closest - pj;
                if dir.norm() < 1e-14 {
                    dir = I * ab;
                }
                let via = pj + dir / dir.norm() * (2.0 * clear);
                let mut first = rec(p, a, via, clear, depth - 1)?;
                let second = rec(p, via, b, clear, depth - 1)?;
                first.pop();
                first.extend(second);
                return Some(first);
            }
        }
        Some(vec![a, b])
    }
    rec(punctures, a, b, clear, 6).ok_or_else(|| Error::Path(format!("{a} -> {b}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn odd(t: f64) -> ScherkParams {
        ScherkParams::new(t, Variant::Odd).unwrap()
    }

    #[test]
    fn rejects_boundary_angles() {
        assert!(ScherkParams::new(0.0, Variant::Odd).is_err());
        assert!(ScherkParams::new(FRAC_PI_2, Variant::Even).is_err());
    }

    #[test]
    fn punctures_relations() {
        let s = odd(0.6);
        let p = s.punctures();
        let e = C64::from_polar(1.0, s.vartheta());
        assert!((-1.0 / p[0] - e).norm() < 1e-15);
        assert!((p[1] - e).norm() < 1e-15);
        assert!((1.0 / p[2] - e).norm() < 1e-15);
        assert!((-p[3] - e).norm() < 1e-15);
    }

    #[test]
    fn value_at_origin_and_conformality() {
        let s = odd(FRAC_PI_4);
        let f = s.weierstrass_at(C64::new(0.0, 0.0)).unwrap();
        let p = s.punctures();
        let sig = s.sigma();
        let expect: C64 = (0..4).map(|j| sig[j] * (-1.0 / p[j])).sum();
        assert!((f[2] - expect).norm() < 1e-15);
        assert!((f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).norm() < 1e-12);
    }

    #[test]
    fn phi3_residues() {
        let s = odd(FRAC_PI_4);
        let c = s.coefficients();
        assert_eq!(c[2][0], C64::new(1.0, 0.0));
        assert_eq!(c[2][1], C64::new(-1.0, 0.0));
    }

    #[test]
    fn matches_direct_rational_evaluation() {
        // Independent evaluation with exact puncture values at θ = π/3.
        let s = odd(PI / 3.0);
        let z = C64::new(0.0, 2.0);
        let h = 3f64.sqrt() / 2.0;
        let p = [C64::new(-h, 0.5), C64::new(h, 0.5), C64::new(h, -0.5), C64::new(-h, -0.5)];
        let (ct, st) = (0.5, h);
        let phi1 = -I * ct / (z - p[0]) + I * ct / (z - p[1]) + I * ct / (z - p[2]) - I * ct / (z - p[3]);
        let phi2 = -I * st / (z - p[0]) - I * st / (z - p[1]) + I * st / (z - p[2]) + I * st / (z - p[3]);
        let phi3 = 1.0 / (z - p[0]) - 1.0 / (z - p[1]) + 1.0 / (z - p[2]) - 1.0 / (z - p[3]);
        let f = s.weierstrass_at(z).unwrap();
        assert!((f[0] - phi1).norm() < 1e-13);
        assert!((f[1] - phi2).norm() < 1e-13);
        assert!((f[2] - phi3).norm() < 1e-13);
    }

    #[test]
    fn pole_error() {
        let s = odd(0.4);
        let p = s.punctures()[2];
        assert!(matches!(s.weierstrass_at(p), Err(Error::Pole(_))));
        assert!(matches!(s.immerse(p, 4), Err(Error::Pole(_))));
    }

    #[test]
    fn gauss_map_examples() {
        let s = odd(FRAC_PI_4);
        let z = C64::new(0.5, 0.1);
        assert!((s.gauss_map(z).unwrap() - z).norm() < 1e-12);
        let e = ScherkParams::new(FRAC_PI_4, Variant::Even).unwrap();
        assert!((e.gauss_map(C64::new(2.0, 0.0)).unwrap() - 0.5).norm() < 1e-12);
        let p1 = s.punctures()[0];
        assert!((s.gauss_map(p1).unwrap() - p1).norm() < 1e-9);
    }

    #[test]
    fn end_data_examples() {
        let s = odd(FRAC_PI_4);
        let e1 = s.end_data(1).unwrap();
        assert!((e1.mu[0] - PI / 2f64.sqrt()).abs() < 1e-15 && e1.mu[1] == 0.0);
        assert!((e1.nu - 2f64.ln()).abs() < 1e-15);
        assert!((e1.upsilon - 2.0).abs() < 1e-14);
        let e2 = s.end_data(2).unwrap();
        assert!((e2.nu + 2f64.ln()).abs() < 1e-15);
        let even = ScherkParams::new(PI / 3.0, Variant::Even).unwrap();
        let odd3 = odd(PI / 3.0);
        assert_eq!(even.end_data(1).unwrap().mu, odd3.end_data(4).unwrap().mu);
        for j in 1..=4 {
            assert!((even.end_data(j).unwrap().upsilon - 2.0).abs() < 1e-14);
            assert!((odd3.end_data(j).unwrap().upsilon - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn upsilon_from_undulation_residue() {
        // Normal component of Res(Φ/w_j) has modulus Υ_j = 2.
        for v in [Variant::Odd, Variant::Even] {
            let s = ScherkParams::new(0.7, v).unwrap();
            for j in 1..=4 {
                let a = s.undulation_coefficients(j);
                let n = s.end_data(j).unwrap().normal;
                let along: C64 = (0..3).map(|i| a[i] * n[i]).sum();
                assert!((along.norm() - 2.0).abs() < 1e-12, "{v:?} {j} {along}");
            }
        }
    }

    #[test]
    fn undulation_residues_are_imaginary() {
        for v in [Variant::Odd, Variant::Even] {
            let s = ScherkParams::new(1.1, v).unwrap();
            for j in 1..=4 {
                let a = s.undulation_coefficients(j);
                assert!(a[0].re.abs() < 1e-12 && a[1].re.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn immerse_origin_and_imaginary_axis() {
        let s = odd(FRAC_PI_4);
        assert_eq!(s.immerse(C64::new(0.0, 0.0), 4).unwrap(), [0.0, 0.0, 0.0]);
        for y in [0.3, -0.7, 2.5] {
            let x = s.immerse(C64::new(0.0, y), 4).unwrap();
            assert!(x[1].abs() < 1e-9 && x[2].abs() < 1e-9, "{x:?}");
        }
    }

    #[test]
    fn arc_maps_to_vertical_line() {
        let s = odd(FRAC_PI_4);
        let e1 = s.end_data(1).unwrap();
        // The arc from p1 through i to p2.
        for phi in [0.5 * PI - 0.3, 0.5 * PI + 0.2] {
            let x = s.immerse(C64::from_polar(1.0, phi), 8).unwrap();
            assert!((x[0] - e1.mu[0]).abs() < 1e-8 && (x[1] - e1.mu[1]).abs() < 1e-8, "{x:?}");
        }
    }

    #[test]
    fn expansion_vertical_height() {
        let s = odd(FRAC_PI_4);
        let x = s.end_expansion(1, C64::new(0.1, 0.0)).unwrap();
        let a = s.undulation_coefficients(1);
        let expect = 2f64.ln() + 0.1f64.ln() + (a[2] * 0.1).re;
        assert!((x[2] - expect).abs() < 1e-14);
        assert!((x[2] - (2f64.ln() + 0.1f64.ln())).abs() < 0.25);
        assert!(s.end_expansion(1, C64::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn expansion_matches_immersion() {
        for v in [Variant::Odd, Variant::Even] {
            let s = ScherkParams::new(FRAC_PI_4, v).unwrap();
            for j in 1..=4 {
                for w in [C64::new(0.05, 0.0), C64::new(0.03, 0.02), C64::new(0.1, -0.04), C64::new(-0.02, -0.05)] {
                    // Keep the straight path off the cut of the principal log.
                    let w = if v == Variant::Even { w.conj() } else { w };
                    let z = s.local_coord_inv(j, w);
                    let a = s.immerse(z, 8).unwrap();
                    let b = s.end_expansion(j, w).unwrap();
                    let d = (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
                    assert!(d <= 10.0 * w.norm_sqr(), "{v:?} j={j} w={w} d={d}");
                }
            }
        }
    }

    #[test]
    fn expansion_across_branch_cut_differs_by_a_period() {
        // The straight path to a point with Re w < 0 < Im w crosses the cut
        // of the principal logarithm, so the two values differ by one
        // horizontal period 2π(cos θ_j, sin θ_j).
        let s = odd(FRAC_PI_4);
        for j in 1..=4 {
            let w = C64::new(-0.02, 0.05);
            let a = s.immerse(s.local_coord_inv(j, w), 8).unwrap();
            let b = s.end_expansion(j, w).unwrap();
            let th = s.directions()[j - 1];
            let per = [2.0 * PI * th.cos(), 2.0 * PI * th.sin()];
            let m = |x: f64, p: f64| x.abs().min((x - p).abs()).min((x + p).abs());
            let d = m(a[0] - b[0], per[0]).max(m(a[1] - b[1], per[1])).max((a[2] - b[2]).abs());
            assert!(d <= 10.0 * w.norm_sqr(), "j={j} d={d}");
        }
    }

    #[test]
    fn normal_deviation_amplitude_is_two() {
        let s = odd(0.5);
        for j in 1..=4 {
            let e = s.end_data(j).unwrap();
            for phi in [0.3, 1.0, PI / 2.0, 2.5] {
                let w = C64::from_polar(1e-3, phi);
                let x = s.end_expansion(j, w).unwrap();
                let dev = (x[0] - e.mu[0]) * e.normal[0] + (x[1] - e.mu[1]) * e.normal[1];
                assert!((dev.abs() - 2e-3 * phi.sin()).abs() < 1e-12, "{j} {dev}");
            }
        }
    }

    #[test]
    fn local_coordinate_round_trip() {
        for v in [Variant::Odd, Variant::Even] {
            let s = ScherkParams::new(0.9, v).unwrap();
            let z = C64::new(0.3, -0.8);
            for j in 1..=4 {
                let w = s.local_coord(j, z);
                assert!((s.local_coord_inv(j, w) - z).norm() < 1e-14);
            }
        }
    }
}
