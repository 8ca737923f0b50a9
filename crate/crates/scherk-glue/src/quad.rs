//! Adaptive Gauss–Kronrod (7/15) integration of vector-valued holomorphic
//! integrands along straight segments in the complex plane.

use num_complex::Complex64 as C64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Hard cap on the number of panels per segment.
pub const MAX_PANELS: usize = 1 << 20;

fn gk15<const N: usize, F>(f: &mut F, a: C64, b: C64) -> ([C64; N], f64)
where
    F: FnMut(C64) -> [C64; N],
{
    let mid = (a + b) * 0.5;
    let half = (b - a) * 0.5;
    let mut k = [C64::new(0.0, 0.0); N];
    let mut g = [C64::new(0.0, 0.0); N];
    let fc = f(mid);
    for i in 0..N {
        k[i] = fc[i] * WGK[7];
        g[i] = fc[i] * WG[3];
    }
    for j in 0..7 {
        let d = half * XGK[j];
        let f1 = f(mid - d);
        let f2 = f(mid + d);
        for i in 0..N {
            let s = f1[i] + f2[i];
            k[i] += s * WGK[j];
            if j % 2 == 1 {
                g[i] += s * WG[j / 2];
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..N {
        k[i] *= half;
        g[i] *= half;
        err = err.max((k[i] - g[i]).norm());
    }
    (k, err)
}

/// Integrates `f(z) dz` along the segment `a -> b` to absolute tolerance
/// `tol`, starting from `initial` equal panels. Returns the value and the
/// accumulated error estimate.
pub fn integrate_segment<const N: usize, F>(
    mut f: F,
    a: C64,
    b: C64,
    tol: f64,
    initial: usize,
) -> ([C64; N], f64)
where
    F: FnMut(C64) -> [C64; N],
{
    let initial = initial.max(1);
    let mut stack: Vec<(C64, C64, f64)> = Vec::with_capacity(64);
    let len = (b - a).norm().max(f64::MIN_POSITIVE);
    for i in (0..initial).rev() {
        let s0 = a + (b - a) * (i as f64 / initial as f64);
        let s1 = a + (b - a) * ((i + 1) as f64 / initial as f64);
        stack.push((s0, s1, tol / initial as f64));
    }
    let mut total = [C64::new(0.0, 0.0); N];
    let mut err_total = 0.0;
    let mut panels = initial;
    while let Some((s0, s1, ptol)) = stack.pop() {
        let (val, err) = gk15(&mut f, s0, s1);
        let width = (s1 - s0).norm();
        if err <= ptol.max(1e-15 * width / len) || panels >= MAX_PANELS || width < 1e-14 * len {
            for i in 0..N {
                total[i] += val[i];
            }
            err_total += err;
        } else {
            let m = (s0 + s1) * 0.5;
            panels += 1;
            stack.push((m, s1, ptol * 0.5));
            stack.push((s0, m, ptol * 0.5));
        }
    }
    (total, err_total)
}

/// Integrates along a polyline.
pub fn integrate_polyline<const N: usize, F>(
    mut f: F,
    pts: &[C64],
    tol: f64,
    initial: usize,
) -> [C64; N]
where
    F: FnMut(C64) -> [C64; N],
{
    let mut total = [C64::new(0.0, 0.0); N];
    let segs = pts.len().saturating_sub(1).max(1) as f64;
    for w in pts.windows(2) {
        let (v, _) = integrate_segment(&mut f, w[0], w[1], tol / segs, initial);
        for i in 0..N {
            total[i] += v[i];
        }
    }
    total
}

/// Integrates `f(z) dz` over the circle `|z - c| = r`, counterclockwise,
/// with the periodic trapezoidal rule on `m` nodes.
pub fn circle_trapezoid<const N: usize, F>(mut f: F, c: C64, r: f64, m: usize) -> [C64; N]
where
    F: FnMut(C64) -> [C64; N],
{
    let mut total = [C64::new(0.0, 0.0); N];
    for j in 0..m {
        let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64);
        let z = c + e * r;
        let dz = C64::new(0.0, 1.0) * e * r * (2.0 * std::f64::consts::PI / m as f64);
        let v = f(z);
        for i in 0..N {
            total[i] += v[i] * dz;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate_segment(
            |z: C64| [z * z, C64::new(1.0, 0.0)],
            C64::new(0.0, 0.0),
            C64::new(1.0, 1.0),
            1e-13,
            1,
        );
        let b = C64::new(1.0, 1.0);
        assert!((v[0] - b * b * b / 3.0).norm() < 1e-14);
        assert!((v[1] - b).norm() < 1e-14);
    }

    #[test]
    fn log_near_pole() {
        let p = C64::new(1.0, 0.05);
        let (v, _) = integrate_segment(
            |z: C64| [1.0 / (z - p)],
            C64::new(0.0, 0.0),
            C64::new(2.0, 0.0),
            1e-12,
            4,
        );
        let exact = (C64::new(2.0, 0.0) - p).ln() - (-p).ln();
        assert!((v[0] - exact).norm() < 1e-11);
    }

    #[test]
    fn circle_residue() {
        let v = circle_trapezoid(|z: C64| [1.0 / z + z], C64::new(0.0, 0.0), 0.5, 64);
        assert!((v[0] - C64::new(0.0, 2.0 * std::f64::consts::PI)).norm() < 1e-13);
    }
}
