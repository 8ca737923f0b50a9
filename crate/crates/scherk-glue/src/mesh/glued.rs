//! Mesh of a glued surface from a converged solve report.
//!
//! Sphere k is triangulated in the chart ξ = (z + p₊)/(z − p₊), where the
//! disk around p_{+,k} becomes the exterior of |ξ| = 1/δ and the other three
//! puncture disks are holes. Each puncture carries a log-polar collar in its
//! node coordinate. At an opened node the collars of both sides meet on the
//! ring |u| = √|t|, where u and v = t/u name the same points. Positions are
//! integrated edge by edge along a spanning tree. A triangle that straddles a
//! period jump gets a lattice-shifted copy of its odd vertex, which leaves one
//! connected fundamental piece.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::{unit_combinations, witness, Chart, ChartTag, MeshMetadata, SurfaceMesh};
use crate::error::{Error, Result};
use crate::forms::RegularForms;
use crate::quad::integrate_segment;
use crate::solver::{build_forms, period_lattice, SolveReport};

/// Largest admissible mismatch between stitched sheets.
pub const GLUE_TOL: f64 = 1e-6;

const EDGE_TOL: f64 = 1e-13;
/// Free ends are cut where ln|u| has dropped this far below ln δ.
const END_DEPTH: f64 = 4.0;
const MIN_RING: usize = 12;
const MAX_DEPTH: usize = 12;

/// Coordinate an edge or face is integrated in.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Frame {
    /// ξ on sphere k.
    Xi(usize),
    /// u_{s,k}.
    U(usize, usize),
    /// v_{s,k}.
    V(usize, usize),
}

struct Vertex {
    frame: Frame,
    w: C64,
    free: bool,
}

struct Face {
    v: [usize; 3],
    frame: Frame,
    w: [C64; 3],
}

struct Builder<'a> {
    forms: &'a RegularForms,
    h: f64,
    verts: Vec<Vertex>,
    tags: Vec<ChartTag>,
    faces: Vec<Face>,
    /// Outer ring of the collar at puncture j of sphere k.
    rings: HashMap<(usize, usize), Vec<usize>>,
}

fn z_tag(sphere: usize, z: C64) -> ChartTag {
    if z.norm() > 1.0 {
        let w = 1.0 / z;
        ChartTag { sphere, chart: Chart::InvZ, coord: [w.re, w.im] }
    } else {
        ChartTag { sphere, chart: Chart::Z, coord: [z.re, z.im] }
    }
}

fn signed_area(w: &[C64; 3]) -> f64 {
    let (a, b) = (w[1] - w[0], w[2] - w[0]);
    a.re * b.im - a.im * b.re
}

impl<'a> Builder<'a> {
    fn p_plus(&self, k: usize) -> C64 {
        self.forms.surface.p[k - 1][0]
    }

    fn sphere(frame: Frame) -> usize {
        match frame {
            Frame::Xi(k) | Frame::U(_, k) | Frame::V(_, k) => k,
        }
    }

    fn to_z(&self, frame: Frame, w: C64) -> C64 {
        let sf = &self.forms.surface;
        match frame {
            Frame::Xi(k) => self.p_plus(k) * (w + 1.0) / (w - 1.0),
            Frame::U(s, k) => sf.node_coord_u_inv(s, k, w),
            Frame::V(s, k) => sf.node_coord_v_inv(s, k, w),
        }
    }

    fn xi(&self, k: usize, z: C64) -> C64 {
        let p = self.p_plus(k);
        (z + p) / (z - p)
    }

    /// ω divided by the differential of the frame coordinate.
    fn phi(&self, frame: Frame, w: C64) -> [C64; 3] {
        match frame {
            Frame::Xi(k) => {
                let p = self.p_plus(k);
                let d = w - 1.0;
                let dz = -2.0 * p / (d * d);
                self.forms.eval_dz(k, p * (w + 1.0) / d).map(|x| x * dz)
            }
            Frame::U(s, k) => self.forms.eval_du(s, k, w),
            Frame::V(s, k) => self.forms.eval_dv(s, k, w),
        }
    }

    /// Length element of the induced metric per unit of |dw|.
    fn speed(&self, frame: Frame, w: C64) -> f64 {
        let f = self.phi(frame, w);
        (0.5 * f.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Vertices on the circle |w| = r for edges of length about h.
    fn ring_size(&self, frame: Frame, r: f64) -> usize {
        let m = 64;
        let len: f64 = (0..m)
            .map(|i| self.speed(frame, C64::from_polar(r, 2.0 * PI * i as f64 / m as f64)) * r * 2.0 * PI / m as f64)
            .sum();
        let n = ((len / self.h).ceil() as usize).max(MIN_RING);
        n.div_ceil(4) * 4
    }

    fn add_vertex(&mut self, frame: Frame, w: C64, tag: Option<ChartTag>, free: bool) -> usize {
        let sphere = Self::sphere(frame);
        let tag = tag.unwrap_or_else(|| z_tag(sphere, self.to_z(frame, w)));
        self.verts.push(Vertex { frame, w, free });
        self.tags.push(tag);
        self.verts.len() - 1
    }

    /// Adds a face oriented counterclockwise in its frame.
    fn add_face(&mut self, mut v: [usize; 3], frame: Frame, mut w: [C64; 3]) {
        let a = signed_area(&w);
        if a == 0.0 {
            return;
        }
        if a < 0.0 {
            v.swap(1, 2);
            w.swap(1, 2);
        }
        self.faces.push(Face { v, frame, w });
    }

    /// Log-polar collar with rings at `radii` (outermost first) and angles
    /// `angles`. The innermost ring reuses `inner` when given. Returns the
    /// outer and inner ring.
    fn collar(
        &mut self,
        frame: Frame,
        radii: &[f64],
        angles: &[f64],
        inner: Option<&[usize]>,
        tag: &dyn Fn(C64) -> Option<ChartTag>,
        free_inner: bool,
    ) -> (Vec<usize>, Vec<usize>) {
        let n = angles.len();
        let last = radii.len() - 1;
        let mut ids: Vec<Vec<usize>> = Vec::with_capacity(radii.len());
        for (i, &r) in radii.iter().enumerate() {
            let row = match (i == last, inner) {
                (true, Some(shared)) => shared.to_vec(),
                _ => angles
                    .iter()
                    .map(|&a| {
                        let w = C64::from_polar(r, a);
                        self.add_vertex(frame, w, tag(w), free_inner && i == last)
                    })
                    .collect(),
            };
            ids.push(row);
        }
        for i in 0..last {
            for j in 0..n {
                let jn = (j + 1) % n;
                let w = |r: f64, a: f64| C64::from_polar(r, a);
                let (r0, r1) = (radii[i], radii[i + 1]);
                let q = [
                    (ids[i][j], w(r0, angles[j])),
                    (ids[i][jn], w(r0, angles[jn])),
                    (ids[i + 1][jn], w(r1, angles[jn])),
                    (ids[i + 1][j], w(r1, angles[j])),
                ];
                self.add_face([q[0].0, q[1].0, q[2].0], frame, [q[0].1, q[1].1, q[2].1]);
                self.add_face([q[0].0, q[2].0, q[3].0], frame, [q[0].1, q[2].1, q[3].1]);
            }
        }
        (ids[0].clone(), ids[last].clone())
    }

    /// Geometric radii from `outer` down to `inner` with log step about `step`.
    fn radii(outer: f64, inner: f64, step: f64) -> Vec<f64> {
        let span = (outer / inner).ln();
        let m = ((span / step).ceil() as usize).max(1);
        (0..=m).map(|i| outer * (-span * i as f64 / m as f64).exp()).collect()
    }

    /// Collars on both sides of the node (s, k), joined on |u| = √|t|.
    fn node_collars(&mut self, s: usize, k: usize) {
        let sf = &self.forms.surface;
        let (t, kn, delta) = (sf.node_t(s, k), sf.next(k), sf.delta);
        let (fu, fv) = (Frame::U(s, k), Frame::V(s, kn));
        let n = self.ring_size(fu, delta).max(self.ring_size(fv, delta));
        let radii = Self::radii(delta, t.norm().sqrt(), 2.0 * PI / n as f64);
        let phis: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let psis: Vec<f64> = phis.iter().map(|p| t.arg() - p).collect();
        let tag_u = move |u: C64| Some(ChartTag { sphere: k, chart: Chart::Node { s, k }, coord: [u.re, u.im] });
        let (outer_p, mid) = self.collar(fu, &radii, &phis, None, &tag_u, false);
        let tag_v = move |v: C64| {
            let u = t / v;
            Some(ChartTag { sphere: kn, chart: Chart::Node { s, k }, coord: [u.re, u.im] })
        };
        let (outer_q, _) = self.collar(fv, &radii, &psis, Some(&mid), &tag_v, false);
        self.rings.insert((k, s), outer_p);
        self.rings.insert((kn, 2 + s), outer_q);
    }

    /// Collar of a free end, cut END_DEPTH below the disk boundary.
    fn end_collar(&mut self, k: usize, j: usize) {
        let delta = self.forms.surface.delta;
        let frame = if j < 2 { Frame::U(j, k) } else { Frame::V(j - 2, k) };
        let n = self.ring_size(frame, delta);
        let radii = Self::radii(delta, delta * (-END_DEPTH).exp(), 2.0 * PI / n as f64);
        let angles: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let (outer, _) = self.collar(frame, &radii, &angles, None, &|_| None, true);
        self.rings.insert((k, j), outer);
    }
}

/// Circle through three points: center and radius.
fn circle(a: C64, b: C64, c: C64) -> (C64, f64) {
    let d = 2.0 * (a.re * (b.im - c.im) + b.re * (c.im - a.im) + c.re * (a.im - b.im));
    let (na, nb, nc) = (a.norm_sqr(), b.norm_sqr(), c.norm_sqr());
    let x = (na * (b.im - c.im) + nb * (c.im - a.im) + nc * (a.im - b.im)) / d;
    let y = (na * (c.re - b.re) + nb * (a.re - c.re) + nc * (b.re - a.re)) / d;
    let center = C64::new(x, y);
    (center, (a - center).norm())
}

/// A ring in the ξ plane: fitted circle and largest gap between neighbors.
struct RingCircle {
    center: C64,
    radius: f64,
    gap: f64,
}

impl RingCircle {
    fn fit(pts: &[C64]) -> Self {
        let n = pts.len();
        let (center, radius) = circle(pts[0], pts[n / 3], pts[2 * n / 3]);
        let gap = (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).fold(0.0, f64::max);
        Self { center, radius, gap }
    }
}

impl<'a> Builder<'a> {
    /// Quadtree cell centers graded so that cells are about h across in the
    /// induced metric. `rings[0]` bounds the domain, the others are holes.
    fn interior_points(&self, k: usize, rings: &[RingCircle]) -> Vec<C64> {
        let (outer, holes) = (&rings[0], &rings[1..]);
        let mut out = Vec::new();
        let mut stack = vec![(outer.center, outer.radius, 0usize)];
        while let Some((c, half, depth)) = stack.pop() {
            let diag = half * std::f64::consts::SQRT_2;
            let d_out = (c - outer.center).norm();
            if d_out - diag > outer.radius || holes.iter().any(|r| (c - r.center).norm() + diag < r.radius) {
                continue;
            }
            // Metric sampled at the nearest point of the domain.
            let mut m = c;
            if d_out > outer.radius {
                m = outer.center + (c - outer.center) * (outer.radius / d_out);
            }
            for r in holes {
                let d = (m - r.center).norm();
                if d < r.radius {
                    m = r.center + (m - r.center) * (r.radius / d);
                }
            }
            if depth < MAX_DEPTH && 2.0 * half * self.speed(Frame::Xi(k), m) > self.h {
                let q = 0.5 * half;
                for (dx, dy) in [(-q, -q), (q, -q), (-q, q), (q, q)] {
                    stack.push((c + C64::new(dx, dy), q, depth + 1));
                }
                continue;
            }
            let inside = d_out < outer.radius - 0.5 * (2.0 * half).max(outer.gap)
                && holes.iter().all(|r| (c - r.center).norm() > r.radius + 0.5 * (2.0 * half).max(r.gap));
            if inside {
                out.push(c);
            }
        }
        out
    }

    /// Constrained Delaunay triangulation of sphere k between its collars.
    fn sphere_cdt(&mut self, k: usize) -> Result<()> {
        let rings: Vec<Vec<usize>> = (0..4)
            .map(|j| self.rings.get(&(k, j)).cloned().ok_or_else(|| Error::Stitch(format!("sphere {k} lacks collar {j}"))))
            .collect::<Result<_>>()?;
        let ring_xi: Vec<Vec<C64>> = rings
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&i| {
                        let v = &self.verts[i];
                        self.xi(k, self.to_z(v.frame, v.w))
                    })
                    .collect()
            })
            .collect();
        let circles: Vec<RingCircle> = ring_xi.iter().map(|p| RingCircle::fit(p)).collect();
        let interior = self.interior_points(k, &circles);

        let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
        let mut ids: Vec<usize> = Vec::new();
        let mut handles: Vec<Vec<spade::handles::FixedVertexHandle>> = Vec::new();
        let mut insert = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>, p: C64, id: usize| {
            let h = cdt
                .insert(Point2::new(p.re, p.im))
                .map_err(|e| Error::Stitch(format!("triangulation of sphere {k}: {e:?}")))?;
            if h.index() >= ids.len() {
                ids.resize(h.index() + 1, usize::MAX);
            }
            if ids[h.index()] != usize::MAX && ids[h.index()] != id {
                return Err(Error::Stitch(format!("coincident mesh points on sphere {k}")));
            }
            ids[h.index()] = id;
            Ok(h)
        };
        for (ring, xs) in rings.iter().zip(&ring_xi) {
            let hs = ring.iter().zip(xs).map(|(&id, &p)| insert(&mut cdt, p, id)).collect::<Result<Vec<_>>>()?;
            handles.push(hs);
        }
        for p in interior {
            let id = self.add_vertex(Frame::Xi(k), p, None, false);
            insert(&mut cdt, p, id)?;
        }
        for hs in &handles {
            for j in 0..hs.len() {
                if cdt.try_add_constraint(hs[j], hs[(j + 1) % hs.len()]).is_empty() {
                    return Err(Error::Stitch(format!("collar rings of sphere {k} intersect")));
                }
            }
        }
        let mut hole_of: HashMap<usize, usize> = HashMap::new();
        for (j, ring) in rings.iter().enumerate().skip(1) {
            for &i in ring {
                hole_of.insert(i, j);
            }
        }
        let faces: Vec<([usize; 3], [C64; 3])> = cdt
            .inner_faces()
            .map(|f| {
                let vs = f.vertices();
                let v = vs.map(|h| ids[h.fix().index()]);
                let w = vs.map(|h| C64::new(h.position().x, h.position().y));
                (v, w)
            })
            .collect();
        for (v, w) in faces {
            let hole = v.map(|i| hole_of.get(&i).copied());
            if hole[0].is_some() && hole[0] == hole[1] && hole[1] == hole[2] {
                continue;
            }
            self.add_face(v, Frame::Xi(k), w);
        }
        Ok(())
    }
}

type Coeffs = [i64; 3];

/// Integer coordinates of a period jump in the lattice basis, or a stitch
/// error when the jump is off the lattice.
fn decompose(lattice: &[[f64; 3]], j: [f64; 3]) -> Result<Coeffs> {
    let mut c = [0i64; 3];
    let mut r = j;
    if let Some(l3) = lattice.get(2) {
        let m = (r[2] / l3[2]).round();
        c[2] = m as i64;
        for i in 0..3 {
            r[i] -= m * l3[i];
        }
    }
    let (l1, l2) = (lattice[0], lattice[1]);
    let det = l1[0] * l2[1] - l1[1] * l2[0];
    let a = ((r[0] * l2[1] - r[1] * l2[0]) / det).round();
    let b = ((l1[0] * r[1] - l1[1] * r[0]) / det).round();
    c[0] = a as i64;
    c[1] = b as i64;
    for i in 0..3 {
        r[i] -= a * l1[i] + b * l2[i];
    }
    let miss = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if miss > GLUE_TOL {
        return Err(Error::Stitch(format!("period jump {j:?} misses the lattice by {miss:e}")));
    }
    Ok(c)
}

fn neg(c: Coeffs) -> Coeffs {
    c.map(|x| -x)
}

impl<'a> Builder<'a> {
    /// Positions and triangles of the unwrapped piece, with the source vertex
    /// of every output vertex.
    fn assemble(&self, lattice: &[[f64; 3]]) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>, Vec<usize>)> {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<(usize, usize, Frame, C64, C64)> = Vec::new();
        for f in &self.faces {
            for e in 0..3 {
                let (a, b) = (f.v[e], f.v[(e + 1) % 3]);
                let (wa, wb) = (f.w[e], f.w[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                index.entry(key).or_insert_with(|| {
                    edges.push(if a < b { (a, b, f.frame, wa, wb) } else { (b, a, f.frame, wb, wa) });
                    edges.len() - 1
                });
            }
        }
        let integrals: Vec<[f64; 3]> = edges
            .par_iter()
            .map(|&(_, _, frame, wa, wb)| integrate_segment(|w| self.phi(frame, w), wa, wb, EDGE_TOL, 1).0.map(|x| x.re))
            .collect();

        let nv = self.verts.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
        for (e, &(a, b, ..)) in edges.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        let root = (0..nv)
            .find(|&i| self.verts[i].frame == Frame::Xi(1))
            .ok_or_else(|| Error::Stitch("sphere 1 has no interior vertices".into()))?;
        let z_root = self.to_z(Frame::Xi(1), self.verts[root].w);
        let x_root = self.forms.integrate(1, self.forms.surface.base[0], z_root)?.map(|x| x.re);
        let mut pos: Vec<Option<[f64; 3]>> = vec![None; nv];
        pos[root] = Some(x_root);
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            let xa = pos[a].unwrap_or_default();
            for &(b, e) in &adj[a] {
                if pos[b].is_none() {
                    let sg = if edges[e].0 == a { 1.0 } else { -1.0 };
                    pos[b] = Some([0, 1, 2].map(|i| xa[i] + sg * integrals[e][i]));
                    queue.push_back(b);
                }
            }
        }
        let pos: Vec<[f64; 3]> = pos
            .into_iter()
            .map(|p| p.ok_or_else(|| Error::Stitch("mesh graph is disconnected".into())))
            .collect::<Result<_>>()?;
        let jumps: Vec<Coeffs> = edges
            .iter()
            .zip(&integrals)
            .map(|(&(a, b, ..), i)| decompose(lattice, [0, 1, 2].map(|c| pos[a][c] + i[c] - pos[b][c])))
            .collect::<Result<_>>()?;
        // Jump met when continuing from x to y.
        let jump = |x: usize, y: usize| -> Coeffs {
            let c = jumps[index[&(x.min(y), x.max(y))]];
            if x < y {
                c
            } else {
                neg(c)
            }
        };

        let mut out_index: HashMap<(usize, Coeffs), usize> = HashMap::new();
        let mut source = Vec::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let [a, b, c] = f.v;
            let (jab, jbc, jca) = (jump(a, b), jump(b, c), jump(c, a));
            let z = [0i64; 3];
            let off = if jab == z && jbc == z && jca == z {
                [z; 3]
            } else if jab == z {
                [z, z, neg(jca)]
            } else if jbc == z {
                [neg(jab), z, z]
            } else if jca == z {
                [z, neg(jbc), z]
            } else {
                [z, jab, neg(jca)]
            };
            // Shifted copies are continued across the triangle from an
            // unshifted corner, so closure measures the actual periods.
            let anchor = f.v[(0..3).find(|&i| off[i] == z).unwrap_or(0)];
            let mut tri = [0usize; 3];
            for i in 0..3 {
                let key = (f.v[i], off[i]);
                tri[i] = *out_index.entry(key).or_insert_with(|| {
                    let v = f.v[i];
                    let x = if off[i] == z {
                        pos[v]
                    } else {
                        let e = index[&(anchor.min(v), anchor.max(v))];
                        let sg = if anchor < v { 1.0 } else { -1.0 };
                        [0, 1, 2].map(|d| pos[anchor][d] + sg * integrals[e][d])
                    };
                    vertices.push(x);
                    source.push(f.v[i]);
                    vertices.len() - 1
                });
            }
            triangles.push(tri);
        }
        Ok((vertices, triangles, source))
    }
}

/// Meshes the surface of a converged solve: both sides of every node are
/// stitched and sheets are placed by the computed periods. Fails with a
/// stitch error when a period jump is not a lattice translation or when
/// translated boundaries miss each other by more than [`GLUE_TOL`].
pub fn mesh_glued(report: &SolveReport, resolution: usize) -> Result<SurfaceMesh> {
    if !report.converged {
        return Err(Error::NotConverged);
    }
    if resolution < 8 {
        return Err(Error::Parameter(format!("resolution must be at least 8, got {resolution}")));
    }
    let forms = build_forms(&report.config, &report.solution)?;
    let sf = &forms.surface;
    let mut b = Builder {
        forms: &forms,
        h: PI / resolution as f64,
        verts: Vec::new(),
        tags: Vec::new(),
        faces: Vec::new(),
        rings: HashMap::new(),
    };
    for k in 1..=sf.n() {
        for s in 0..2 {
            if sf.opened(k) {
                b.node_collars(s, k);
            } else {
                b.end_collar(k, s);
            }
            if !sf.q_opened(k) {
                b.end_collar(k, 2 + s);
            }
        }
    }
    for k in 1..=sf.n() {
        b.sphere_cdt(k)?;
    }
    let lattice = period_lattice(&report.config, &report.solution);
    let (vertices, triangles, source) = b.assemble(&lattice)?;
    let conformality = source
        .iter()
        .map(|&i| {
            let v = &b.verts[i];
            witness(&b.phi(v.frame, v.w))
        })
        .collect();
    let mesh = SurfaceMesh {
        vertices,
        triangles,
        chart_tags: source.iter().map(|&i| b.tags[i]).collect(),
        conformality,
        metadata: MeshMetadata {
            description: format!(
                "glued surface, {:?}, n = {}, epsilon = {}",
                report.config.mode, report.config.n, report.epsilon
            ),
            config: Some(report.config.clone()),
            epsilon: Some(report.epsilon),
            residual: Some(report.residual_norms.max()),
            lattice: lattice.clone(),
        },
    };
    let translations = unit_combinations(&lattice);
    let defect = mesh.closure_defect(&translations, |i| b.verts[source[i]].free);
    if defect > GLUE_TOL {
        return Err(Error::Stitch(format!("translated boundaries miss by {defect:e}")));
    }
    Ok(mesh)
}
