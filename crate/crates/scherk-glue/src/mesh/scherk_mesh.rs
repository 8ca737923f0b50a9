//! Structured mesh of a fundamental Scherk piece.
//!
//! On the closed unit disk the integrals ∫₀ᶻ Φᵢ are explicit sums of
//! principal logarithms `cᵢⱼ Log(1 − z/pⱼ)`. The height coordinate
//! F = ∫₀ᶻ Φ₃ has Re F = x₃ and maps each quadrant of the disk onto a half
//! strip of width π: the axes go to Re F = 0 and the two unit-circle arcs of
//! the quadrant, which are vertical lines on the surface, go to the sides
//! Im F = const. A uniform grid in F is therefore conformal, exact on the
//! vertical lines and exact on the height cutoff. The outer hemisphere is the
//! rotation of the inner one about the vertical line through z = i.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;

use super::{witness, Chart, ChartTag, MeshMetadata, SurfaceMesh, Welder};
use crate::error::{Error, Result};
use crate::scherk::ScherkParams;

const ROOT_TOL: f64 = 1e-14;
const WELD: f64 = 1e-9;

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

struct Closed {
    p: [C64; 4],
    c: [[C64; 4]; 3],
    sigma: [f64; 4],
}

impl Closed {
    fn new(params: &ScherkParams) -> Self {
        Self { p: params.punctures(), c: params.coefficients(), sigma: params.sigma() }
    }

    fn logs(&self, z: C64) -> [C64; 4] {
        [0, 1, 2, 3].map(|j| (one() - z / self.p[j]).ln())
    }

    fn height(&self, z: C64) -> C64 {
        let l = self.logs(z);
        (0..4).map(|j| self.sigma[j] * l[j]).sum()
    }

    fn dheight(&self, z: C64) -> C64 {
        (0..4).map(|j| self.sigma[j] / (z - self.p[j])).sum()
    }

    fn position(&self, z: C64) -> [f64; 3] {
        let l = self.logs(z);
        [0, 1, 2].map(|i| (0..4).map(|j| self.c[i][j] * l[j]).sum::<C64>().re)
    }

    fn forms(&self, z: C64) -> [C64; 3] {
        [0, 1, 2].map(|i| (0..4).map(|j| self.c[i][j] / (z - self.p[j])).sum())
    }
}

/// Bisection for a monotone real function between `a` and `b` (either
/// order) with f(a), f(b) of opposite signs.
fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

struct Quadrant {
    /// Sector [lo, lo + π/2].
    lo: f64,
    /// Puncture index inside the sector.
    j: usize,
    /// Sign of x₃ on the quadrant.
    sg: f64,
    real_end: C64,
    imag_end: C64,
    b_real: f64,
    b_imag: f64,
}

impl Quadrant {
    fn contains(&self, z: C64) -> bool {
        if z.norm() > 1.0 + 1e-15 {
            return false;
        }
        if z.norm() < 1e-300 {
            return true;
        }
        let mut a = z.arg() - self.lo;
        while a < -PI {
            a += 2.0 * PI;
        }
        while a > PI {
            a -= 2.0 * PI;
        }
        (-1e-12..=FRAC_PI_2 + 1e-12).contains(&a)
    }
}

fn quadrants(cl: &Closed) -> Result<Vec<Quadrant>> {
    let ends = [(one(), C64::i()), (-one(), C64::i()), (-one(), -C64::i()), (one(), -C64::i())];
    let mut out = Vec::new();
    for (q, (re, ie)) in ends.into_iter().enumerate() {
        let lo = q as f64 * FRAC_PI_2;
        let lo = if lo > PI { lo - 2.0 * PI } else { lo };
        let mut quad = Quadrant {
            lo,
            j: usize::MAX,
            sg: 0.0,
            real_end: re,
            imag_end: ie,
            b_real: cl.height(re).im,
            b_imag: cl.height(ie).im,
        };
        for j in 0..4 {
            if quad.contains(cl.p[j]) {
                quad.j = j;
                quad.sg = -cl.sigma[j];
            }
        }
        if quad.j == usize::MAX {
            return Err(Error::Parameter(format!("no puncture in quadrant {q}")));
        }
        out.push(quad);
    }
    Ok(out)
}

/// Solves F(z) = target inside the quadrant by damped Newton.
fn invert(cl: &Closed, quad: &Quadrant, target: C64, seed: C64) -> Result<C64> {
    let mut z = seed;
    let d2 = -(0..4).map(|j| cl.sigma[j] / (cl.p[j] * cl.p[j])).sum::<C64>();
    if cl.dheight(z).norm() < 1e-3 {
        // Near the saddle F ≈ F''(0) z²/2.
        let r = (2.0 * target / d2).sqrt();
        z = if quad.contains(r) { r } else { -r };
    }
    let scale = target.norm().max(1.0);
    let mut res = cl.height(z) - target;
    for _ in 0..100 {
        if res.norm() <= ROOT_TOL * scale {
            return Ok(z);
        }
        let step = -res / cl.dheight(z);
        let mut lam = 1.0;
        loop {
            let w = z + lam * step;
            if quad.contains(w) {
                let r = cl.height(w) - target;
                if r.norm() < res.norm() {
                    z = w;
                    res = r;
                    break;
                }
            }
            lam *= 0.5;
            if lam < 1e-12 {
                return if res.norm() <= 1e3 * ROOT_TOL * scale {
                    Ok(z)
                } else {
                    Err(Error::Root(format!("height coordinate {target} in quadrant at {}", quad.lo)))
                };
            }
        }
    }
    Err(Error::Root(format!("height coordinate {target}: no convergence")))
}

/// Grid spacing at the saddle z = 0 is this multiple of the squared
/// nominal spacing, so the poorly shaped cells around the branch point of the
/// height coordinate shrink in area like the square of the spacing.
const GRADE_START: f64 = 0.6;
/// Growth ratio of consecutive spacings away from the saddle.
const GRADE_RATIO: f64 = 1.2;

/// Grid positions from 0 to `len`: spacings grow geometrically from `first`
/// by `ratio` up to `step`, then stay at `step`, all rescaled to end at `len`.
fn graded(len: f64, step: f64, first: f64, ratio: f64) -> Vec<f64> {
    let mut d = Vec::new();
    let (mut total, mut s) = (0.0, first);
    while total < len {
        let s_k = s.min(step);
        d.push(s_k);
        total += s_k;
        s *= ratio;
    }
    // Drop the last step if that lands closer to `len`.
    if d.len() > 1 && total - len > 0.5 * d[d.len() - 1] {
        total -= d.pop().unwrap_or(0.0);
    }
    let scale = len / total;
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for s_k in d {
        acc += s_k * scale;
        out.push(acc);
    }
    *out.last_mut().unwrap() = len;
    out
}

/// Bookkeeping returned next to a Scherk mesh.
#[derive(Clone, Debug)]
pub struct ScherkMeshInfo {
    /// Vertex indices of the top row of each end: inner row, outer row.
    pub end_rows: [(Vec<usize>, Vec<usize>); 4],
    /// Horizontal position of the vertical line through z = i.
    pub axis: [f64; 2],
}

/// Default truncation height ν + 4, beyond which the ends undulate by less
/// than 2e⁻⁴·Υ.
pub fn default_cutoff(params: &ScherkParams) -> f64 {
    params.end_data(1).map(|e| e.nu.abs()).unwrap_or(0.0) + 4.0
}

/// Mesh of the Scherk piece over the whole sphere, truncated at
/// |x₃| ≤ `height_cutoff`.
pub fn mesh_scherk(params: &ScherkParams, resolution: usize, height_cutoff: f64) -> Result<SurfaceMesh> {
    mesh_scherk_with_info(params, resolution, height_cutoff).map(|(m, _)| m)
}

pub(crate) fn mesh_scherk_with_info(
    params: &ScherkParams,
    resolution: usize,
    height_cutoff: f64,
) -> Result<(SurfaceMesh, ScherkMeshInfo)> {
    if resolution < 8 {
        return Err(Error::Parameter(format!("resolution {resolution} < 8")));
    }
    if !(height_cutoff > 0.0 && height_cutoff.is_finite()) {
        return Err(Error::Parameter(format!("height cutoff {height_cutoff}")));
    }
    let cl = Closed::new(params);
    let quads = quadrants(&cl)?;
    let h = PI / resolution as f64;
    let heights = graded(height_cutoff, h, GRADE_START * h * h, GRADE_RATIO);
    let rows = heights.len() - 1;
    let axis_pt = cl.position(C64::i());
    let axis = [axis_pt[0], axis_pt[1]];
    let s_th = params.theta.sin();
    let on_axis_arc = |z: C64| (z.norm() - 1.0).abs() < 1e-12 && z.im > 0.0 && z.re.abs() < s_th;

    let mut mesh = SurfaceMesh {
        metadata: MeshMetadata {
            description: format!(
                "Scherk piece theta={} variant={:?} resolution={} cutoff={}",
                params.theta, params.variant, resolution, height_cutoff
            ),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut welder = Welder::new(WELD);
    let mut end_rows: [(Vec<usize>, Vec<usize>); 4] = Default::default();

    for quad in &quads {
        // Column values of the conjugate height: 0 is a grid line, refined
        // geometrically toward it on both sides.
        let mut bs: Vec<f64> = graded(quad.b_real.abs(), h, GRADE_START * h * h, GRADE_RATIO)
            .into_iter()
            .rev()
            .map(|x| x * quad.b_real.signum())
            .collect();
        let m = bs.len() - 1;
        bs.extend(
            graded(quad.b_imag.abs(), h, GRADE_START * h * h, GRADE_RATIO)
                .into_iter()
                .skip(1)
                .map(|x| x * quad.b_imag.signum()),
        );
        let cols = bs.len() - 1;
        let res = cols;

        // z on the grid, row-major over (row, column).
        let mut zs = vec![C64::new(0.0, 0.0); (rows + 1) * (res + 1)];
        let idx = |r: usize, c: usize| r * (res + 1) + c;
        for r in 0..=rows {
            let h = quad.sg * heights[r];
            for c in 0..=res {
                let b = bs[c];
                let target = C64::new(h, b);
                let z = if r == 0 {
                    if c == m {
                        C64::new(0.0, 0.0)
                    } else {
                        let end = if c < m { quad.real_end } else { quad.imag_end };
                        let s = bisect(|s| cl.height(end * s).im - b, 0.0, 1.0);
                        end * s
                    }
                } else if c == 0 || c == res {
                    let end = if c == 0 { quad.real_end } else { quad.imag_end };
                    let a0 = end.arg();
                    let mut da = cl.p[quad.j].arg() - a0;
                    while da > PI {
                        da -= 2.0 * PI;
                    }
                    while da <= -PI {
                        da += 2.0 * PI;
                    }
                    let a1 = a0 + da;
                    let phi = bisect(|a| cl.height(C64::from_polar(1.0, a)).re - h, a0, a1);
                    C64::from_polar(1.0, phi)
                } else {
                    invert(&cl, quad, target, zs[idx(r - 1, c)])?
                };
                zs[idx(r, c)] = z;
            }
        }

        for outer in [false, true] {
            let mut ids = vec![0usize; zs.len()];
            for (k, &z) in zs.iter().enumerate() {
                let x = cl.position(z);
                let phi = cl.forms(z);
                let shared = outer && on_axis_arc(z);
                let (pos, tag) = if !outer || shared {
                    (x, ChartTag { sphere: 0, chart: Chart::Z, coord: [z.re, z.im] })
                } else {
                    (
                        [2.0 * axis[0] - x[0], 2.0 * axis[1] - x[1], x[2]],
                        ChartTag { sphere: 0, chart: Chart::InvZ, coord: [z.re, -z.im] },
                    )
                };
                let class = if outer && !shared { 1 } else { 0 };
                let cand = mesh.vertex_count();
                let id = welder.find_or_insert(class, [z.re, z.im, 0.0], cand);
                if id == cand {
                    mesh.push_vertex(pos, tag, witness(&phi));
                }
                ids[k] = id;
            }
            for r in 0..rows {
                for c in 0..res {
                    let (a, b, cc, d) = (idx(r, c), idx(r, c + 1), idx(r + 1, c + 1), idx(r + 1, c));
                    for tri in [[a, b, cc], [a, cc, d]] {
                        let [u, v, w] = tri.map(|k| zs[k]);
                        let area = ((v - u).conj() * (w - u)).im;
                        let flip = (area < 0.0) != outer;
                        let t = tri.map(|k| ids[k]);
                        mesh.triangles.push(if flip { [t[0], t[2], t[1]] } else { t });
                    }
                }
            }
            let row: Vec<usize> = (0..=res).map(|c| ids[idx(rows, c)]).collect();
            if outer {
                end_rows[quad.j].1 = row;
            } else {
                end_rows[quad.j].0 = row;
            }
        }
    }
    Ok((mesh, ScherkMeshInfo { end_rows, axis }))
}

/// Horizontal centers of the four end boundary curves.
///
/// Each end's boundary curve is closed up from the inner top row and the
/// outer top row, continued across the vertical line on which the end's
/// local coordinate is positive. The center is the mean over the curve with
/// respect to the conjugate height, which is uniform on the grid.
pub fn end_centers(params: &ScherkParams, resolution: usize, height_cutoff: f64) -> Result<[[f64; 2]; 4]> {
    let (mesh, info) = mesh_scherk_with_info(params, resolution, height_cutoff)?;
    let cl = Closed::new(params);
    let mut out = [[0.0; 2]; 4];
    for j in 0..4 {
        let (inner, outer) = &info.end_rows[j];
        let z_of = |v: usize| {
            let t = mesh.chart_tags[v];
            match t.chart {
                Chart::InvZ => C64::new(t.coord[0], -t.coord[1]),
                _ => C64::new(t.coord[0], t.coord[1]),
            }
        };
        // Column order is by conjugate height; find which end column sits on
        // the line where the local coordinate is positive.
        let first = z_of(inner[0]);
        let w = params.local_coord(j + 1, first);
        let m_col = if w.re > 0.0 { 0 } else { inner.len() - 1 };
        let pin = mesh.vertices[inner[m_col]];
        let pout = mesh.vertices[outer[m_col]];
        let shift = [pin[0] - pout[0], pin[1] - pout[1]];
        // Trapezoid weights in the conjugate height, shared by both rows.
        let b: Vec<f64> = inner.iter().map(|&v| cl.height(z_of(v)).im).collect();
        let n = b.len() - 1;
        let wgt: Vec<f64> = (0..=n)
            .map(|c| {
                let lo = if c == 0 { b[0] } else { 0.5 * (b[c - 1] + b[c]) };
                let hi = if c == n { b[n] } else { 0.5 * (b[c] + b[c + 1]) };
                (hi - lo).abs()
            })
            .collect();
        let total: f64 = 2.0 * wgt.iter().sum::<f64>();
        let mut acc = [0.0; 2];
        for (row, sh) in [(inner, [0.0, 0.0]), (outer, shift)] {
            for (c, &v) in row.iter().enumerate() {
                for a in 0..2 {
                    acc[a] += wgt[c] * (mesh.vertices[v][a] + sh[a]);
                }
            }
        }
        out[j] = acc.map(|a| a / total);
    }
    Ok(out)
}
