//! Triangle meshes of Scherk pieces and of glued surfaces.
//!
//! Meshes carry per-vertex chart tags so every vertex can be traced back to
//! the sphere and coordinate it was evaluated at, and a conformality witness
//! `|Σφᵢ²| / Σ|φᵢ|²`, which is chart independent.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::{Error, Result};

mod glued;
mod scherk_mesh;

pub use glued::{mesh_glued, GLUE_TOL};
pub use scherk_mesh::{default_cutoff, end_centers, mesh_scherk, ScherkMeshInfo};

/// Largest admissible conformality witness on a mesh vertex.
pub const MESH_TOL: f64 = 1e-6;

/// Coordinate chart a vertex was evaluated in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chart", rename_all = "snake_case")]
pub enum Chart {
    /// The z coordinate of the sphere.
    Z,
    /// 1/z, used on the reflected copy of a Scherk piece.
    InvZ,
    /// The coordinate u_{s,k} of an opened node (s = 0 for +, 1 for −).
    Node { s: usize, k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartTag {
    pub sphere: usize,
    #[serde(flatten)]
    pub chart: Chart,
    pub coord: [f64; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshMetadata {
    pub description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<Configuration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    /// Lattice translations under which the piece closes up.
    pub lattice: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub chart_tags: Vec<ChartTag>,
    /// Conformality witness per vertex.
    pub conformality: Vec<f64>,
    pub metadata: MeshMetadata,
}

/// Edge-use counts, keyed by sorted vertex pair.
fn edge_counts(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut m = HashMap::new();
    for t in triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    m
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl SurfaceMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Appends a vertex and returns its index.
    pub fn push_vertex(&mut self, x: [f64; 3], tag: ChartTag, witness: f64) -> usize {
        self.vertices.push(x);
        self.chart_tags.push(tag);
        self.conformality.push(witness);
        self.vertices.len() - 1
    }

    /// Every edge is used by one or two triangles, and no triangle repeats a
    /// vertex.
    pub fn is_manifold(&self) -> bool {
        let degenerate = self.triangles.iter().any(|t| t[0] == t[1] || t[1] == t[2] || t[0] == t[2]);
        !degenerate && edge_counts(&self.triangles).values().all(|&c| c == 1 || c == 2)
    }

    /// Every interior edge is traversed in opposite directions by its two
    /// triangles.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *directed.entry((t[e], t[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        directed.values().all(|&c| c == 1)
    }

    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = edge_counts(&self.triangles)
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut b = vec![false; self.vertices.len()];
        for (x, y) in self.boundary_edges() {
            b[x] = true;
            b[y] = true;
        }
        b
    }

    pub fn max_conformality(&self) -> f64 {
        self.conformality.iter().cloned().fold(0.0, f64::max)
    }

    /// Number of connected components of the vertex-triangle graph.
    pub fn components(&self) -> usize {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in &self.triangles {
            for e in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[e]));
                parent[a] = b;
            }
        }
        let mut used = vec![false; n];
        for t in &self.triangles {
            for &v in t {
                used[v] = true;
            }
        }
        (0..n).filter(|&v| used[v] && find(&mut parent, v) == v).count()
    }

    /// Cotangent-formula mean curvature |ΔX|/2 at interior vertices, with
    /// barycentric vertex areas. Boundary vertices get `None`.
    pub fn mean_curvature(&self) -> Vec<Option<f64>> {
        let n = self.vertices.len();
        let mut lap = vec![[0.0; 3]; n];
        let mut area = vec![0.0; n];
        for t in &self.triangles {
            let p = t.map(|i| self.vertices[i]);
            let a2 = norm(cross(sub(p[1], p[0]), sub(p[2], p[0])));
            if a2 == 0.0 {
                continue;
            }
            for c in 0..3 {
                let (i, j, k) = (t[c], t[(c + 1) % 3], t[(c + 2) % 3]);
                area[i] += a2 / 6.0;
                // Angle at vertex i is opposite edge jk.
                let (u, v) = (sub(p[(c + 1) % 3], p[c]), sub(p[(c + 2) % 3], p[c]));
                let cot = dot(u, v) / a2;
                let d = sub(self.vertices[k], self.vertices[j]);
                for m in 0..3 {
                    lap[j][m] += 0.5 * cot * d[m];
                    lap[k][m] -= 0.5 * cot * d[m];
                }
            }
        }
        let boundary = self.boundary_vertices();
        (0..n)
            .map(|i| {
                if boundary[i] || area[i] == 0.0 {
                    None
                } else {
                    Some(norm(lap[i]) / (2.0 * area[i]))
                }
            })
            .collect()
    }

    /// Area-weighted root mean square of the discrete mean curvature over
    /// interior vertices.
    pub fn rms_mean_curvature(&self) -> f64 {
        let h = self.mean_curvature();
        let mut area = vec![0.0; self.vertices.len()];
        for t in &self.triangles {
            let p = t.map(|i| self.vertices[i]);
            let a = 0.5 * norm(cross(sub(p[1], p[0]), sub(p[2], p[0])));
            for &i in t {
                area[i] += a / 3.0;
            }
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (hi, ai) in h.iter().zip(&area) {
            if let Some(hi) = hi {
                num += ai * hi * hi;
                den += ai;
            }
        }
        if den == 0.0 { 0.0 } else { (num / den).sqrt() }
    }

    /// Largest difference, in radians, between a triangle's angles in space
    /// and in the chart its corners are tagged with. Only triangles whose
    /// corners share a chart count. For a conformal parametrization this
    /// shrinks with the mesh spacing.
    pub fn angle_distortion(&self) -> f64 {
        let angle = |u: [f64; 3], v: [f64; 3]| norm(cross(u, v)).atan2(dot(u, v));
        let mut worst: f64 = 0.0;
        for t in &self.triangles {
            let tags = t.map(|i| self.chart_tags[i]);
            let shared = tags.iter().all(|g| g.chart == tags[0].chart)
                && (matches!(tags[0].chart, Chart::Node { .. }) || tags.iter().all(|g| g.sphere == tags[0].sphere));
            if !shared {
                continue;
            }
            let p = t.map(|i| self.vertices[i]);
            let q = tags.map(|g| [g.coord[0], g.coord[1], 0.0]);
            for c in 0..3 {
                let (a, b) = ((c + 1) % 3, (c + 2) % 3);
                let s = angle(sub(p[a], p[c]), sub(p[b], p[c]));
                let w = angle(sub(q[a], q[c]), sub(q[b], q[c]));
                worst = worst.max((s - w).abs());
            }
        }
        worst
    }

    /// Wavefront OBJ text, coordinates with 17 significant digits.
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(64 * (self.vertices.len() + self.triangles.len()));
        let _ = writeln!(s, "# {}", self.metadata.description);
        let _ = writeln!(s, "# vertices {} triangles {}", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        f.write_all(self.to_obj().as_bytes())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    /// Largest distance from a boundary vertex to the nearest boundary vertex
    /// of the translated piece, over the given translations. Each boundary
    /// vertex must be matched by at least one translation (either sign) or by
    /// a vertex of the free boundary predicate.
    pub fn closure_defect<F: Fn(usize) -> bool>(&self, translations: &[[f64; 3]], free: F) -> f64 {
        let boundary = self.boundary_vertices();
        let pts: Vec<usize> = (0..self.vertices.len()).filter(|&i| boundary[i]).collect();
        let cell = 1e-3;
        let key = |x: [f64; 3]| {
            [
                (x[0] / cell).floor() as i64,
                (x[1] / cell).floor() as i64,
                (x[2] / cell).floor() as i64,
            ]
        };
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for &i in &pts {
            grid.entry(key(self.vertices[i])).or_default().push(i);
        }
        let nearest = |x: [f64; 3]| -> f64 {
            let k = key(x);
            let mut best = f64::INFINITY;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(v) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in v {
                                best = best.min(norm(sub(self.vertices[j], x)));
                            }
                        }
                    }
                }
            }
            best
        };
        let mut worst: f64 = 0.0;
        for &i in &pts {
            if free(i) {
                continue;
            }
            let x = self.vertices[i];
            let mut best = f64::INFINITY;
            for l in translations {
                for sg in [1.0, -1.0] {
                    let y = [x[0] + sg * l[0], x[1] + sg * l[1], x[2] + sg * l[2]];
                    best = best.min(nearest(y));
                }
            }
            worst = worst.max(best);
        }
        worst
    }
}

/// All nonzero combinations of the lattice vectors with coefficients in
/// {−1, 0, 1}. Cuts through a fundamental piece separate copies by such
/// combinations.
pub fn unit_combinations(lattice: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let m = lattice.len() as u32;
    let zero: usize = (0..m).map(|i| 3usize.pow(i)).sum();
    (0..3usize.pow(m))
        .filter(|&code| code != zero)
        .map(|code| {
            let mut x = [0.0; 3];
            for (i, l) in lattice.iter().enumerate() {
                let c = (code / 3usize.pow(i as u32) % 3) as f64 - 1.0;
                for d in 0..3 {
                    x[d] += c * l[d];
                }
            }
            x
        })
        .collect()
}

/// Joins vertices whose keys agree, keeping the first occurrence.
pub(crate) struct Welder {
    cell: f64,
    map: HashMap<(u64, [i64; 3]), Vec<(usize, [f64; 3])>>,
}

impl Welder {
    pub(crate) fn new(cell: f64) -> Self {
        Self { cell, map: HashMap::new() }
    }

    /// Finds a vertex registered under `class` within `cell` of `key`, or
    /// registers `idx`.
    pub(crate) fn find_or_insert(&mut self, class: u64, key: [f64; 3], idx: usize) -> usize {
        let c = key.map(|x| (x / self.cell).round() as i64);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = self.map.get(&(class, [c[0] + dx, c[1] + dy, c[2] + dz])) {
                        for &(j, y) in v {
                            if norm(sub(y, key)) < self.cell {
                                return j;
                            }
                        }
                    }
                }
            }
        }
        self.map.entry((class, c)).or_default().push((idx, key));
        idx
    }
}

/// Conformality witness from the three components of a form.
pub(crate) fn witness(phi: &[num_complex::Complex64; 3]) -> f64 {
    let q: num_complex::Complex64 = phi.iter().map(|p| p * p).sum();
    let m: f64 = phi.iter().map(|p| p.norm_sqr()).sum();
    if m == 0.0 { 0.0 } else { q.norm() / m }
}
