use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64 as C64;
use scherk_glue::config::Configuration;
use scherk_glue::error::Error;
use scherk_glue::mesh::*;
use scherk_glue::scherk::{ScherkParams, Variant};
use scherk_glue::solver::{newton_solve, reduce_mod_lattice, SolveOptions, SolveReport};

fn params() -> ScherkParams {
    ScherkParams::new(FRAC_PI_4, Variant::Odd).unwrap()
}

fn cutoff(p: &ScherkParams) -> f64 {
    p.end_data(1).unwrap().nu.abs() + 4.0
}

fn meeks_report() -> SolveReport {
    let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 0.0], FRAC_PI_4, 0.0, 0.0).unwrap();
    newton_solve(&c, 0.3, &SolveOptions::default()).unwrap()
}

fn dpms_report() -> SolveReport {
    let c = Configuration::dpms(1, vec![], vec![], FRAC_PI_4).unwrap();
    newton_solve(&c, 0.3, &SolveOptions::default()).unwrap()
}

#[test]
fn scherk_mesh_is_an_oriented_manifold() {
    let p = params();
    let m = mesh_scherk(&p, 32, cutoff(&p)).unwrap();
    assert!(m.is_manifold());
    assert!(m.is_consistently_oriented());
    assert_eq!(m.components(), 1);
    assert!(m.max_conformality() < MESH_TOL);
    assert_eq!(m.conformality.len(), m.vertex_count());
    assert_eq!(m.chart_tags.len(), m.vertex_count());
}

#[test]
fn saddle_sits_at_the_origin() {
    let p = params();
    let m = mesh_scherk(&p, 32, cutoff(&p)).unwrap();
    let i = (0..m.vertex_count())
        .find(|&i| m.chart_tags[i].chart == Chart::Z && m.chart_tags[i].coord == [0.0, 0.0])
        .unwrap();
    assert!(m.vertices[i].iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn side_boundaries_are_vertical_lines_over_the_rhombus() {
    let p = params();
    let cut = cutoff(&p);
    let m = mesh_scherk(&p, 32, cut).unwrap();
    let mu: Vec<[f64; 2]> = (1..=4).map(|j| p.end_data(j).unwrap().mu).collect();
    // The reflected copy is the half turn about the vertical line over μ₁.
    let lines: Vec<[f64; 2]> = mu
        .iter()
        .flat_map(|m| [*m, [2.0 * mu[0][0] - m[0], 2.0 * mu[0][1] - m[1]]])
        .collect();
    let mut hit = vec![0usize; lines.len()];
    let b = m.boundary_vertices();
    for (i, x) in m.vertices.iter().enumerate() {
        if !b[i] || x[2].abs() > cut - 1e-9 {
            continue;
        }
        let (j, d) = lines
            .iter()
            .enumerate()
            .map(|(j, l)| (j, (x[0] - l[0]).hypot(x[1] - l[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(d < 1e-6, "boundary vertex {i} is {d:e} off the nearest line");
        hit[j] += 1;
    }
    // μ₁ reflects to itself; the other six lines carry the sides.
    assert_eq!(hit.iter().filter(|&&c| c > 0).count(), 6);
}

#[test]
fn end_centers_are_the_rhombus_vertices() {
    let p = params();
    let c = end_centers(&p, 64, cutoff(&p)).unwrap();
    for j in 0..4 {
        let mu = p.end_data(j + 1).unwrap().mu;
        let d = (c[j][0] - mu[0]).hypot(c[j][1] - mu[1]);
        assert!(d < 1e-5, "end {}: {d:e}", j + 1);
    }
}

#[test]
fn mean_curvature_converges_to_zero() {
    let p = params();
    let cut = cutoff(&p);
    let h64 = mesh_scherk(&p, 64, cut).unwrap().rms_mean_curvature();
    let h128 = mesh_scherk(&p, 128, cut).unwrap().rms_mean_curvature();
    assert!(h64 < 5e-3, "res 64: {h64:e}");
    assert!(h128 < 1.5e-3, "res 128: {h128:e}");
    assert!(h128 < 0.6 * h64, "no first-order decrease: {h64:e} -> {h128:e}");
}

#[test]
fn other_angles_mesh_cleanly() {
    for (theta, variant) in [(0.3, Variant::Even), (1.3, Variant::Odd)] {
        let p = ScherkParams::new(theta, variant).unwrap();
        let m = mesh_scherk(&p, 32, cutoff(&p)).unwrap();
        assert!(m.is_manifold() && m.is_consistently_oriented());
        assert!(m.max_conformality() < MESH_TOL);
        assert!(m.rms_mean_curvature() < 1e-2);
    }
}

#[test]
fn scherk_mesh_rejects_bad_arguments() {
    let p = params();
    assert!(matches!(mesh_scherk(&p, 4, 3.0), Err(Error::Parameter(_))));
    assert!(matches!(mesh_scherk(&p, 32, -1.0), Err(Error::Parameter(_))));
}

#[test]
fn obj_round_trips_every_coordinate() {
    let p = params();
    let m = mesh_scherk(&p, 16, cutoff(&p)).unwrap();
    let obj = m.to_obj();
    let vs: Vec<[f64; 3]> = obj
        .lines()
        .filter(|l| l.starts_with("v "))
        .map(|l| {
            let x: Vec<f64> = l[2..].split_whitespace().map(|s| s.parse().unwrap()).collect();
            [x[0], x[1], x[2]]
        })
        .collect();
    assert_eq!(vs, m.vertices);
    let faces: Vec<[usize; 3]> = obj
        .lines()
        .filter(|l| l.starts_with("f "))
        .map(|l| {
            let x: Vec<usize> = l[2..].split_whitespace().map(|s| s.parse::<usize>().unwrap() - 1).collect();
            [x[0], x[1], x[2]]
        })
        .collect();
    assert_eq!(faces, m.triangles);
    let sample = obj.lines().find(|l| l.starts_with("v ")).unwrap();
    let mantissa = sample[2..].split_whitespace().next().unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
}

#[test]
fn glued_meeks_piece_closes_under_the_lattice() {
    let rep = meeks_report();
    let m = mesh_glued(&rep, 32).unwrap();
    assert_eq!(m.components(), 1);
    assert!(m.is_manifold());
    assert!(m.is_consistently_oriented());
    assert!(m.max_conformality() < MESH_TOL);
    let lattice = &m.metadata.lattice;
    assert_eq!(lattice.len(), 3);
    let eps = rep.epsilon;
    assert!((lattice[2][2] + 1.0 / (eps * eps)).abs() < 1e-12);
    // Every boundary vertex must reappear on the translated piece.
    let defect = m.closure_defect(&unit_combinations(lattice), |_| false);
    assert!(defect < GLUE_TOL, "closure defect {defect:e}");
    // Both spheres and both necks take part.
    for k in 1..=2 {
        assert!(m.chart_tags.iter().any(|t| t.sphere == k && t.chart == Chart::Node { s: 0, k }));
    }
}

#[test]
fn glued_single_layer_is_the_scherk_surface() {
    let rep = dpms_report();
    let m = mesh_glued(&rep, 32).unwrap();
    assert!(m.is_manifold() && m.is_consistently_oriented());
    assert!(m.max_conformality() < MESH_TOL);
    let p = params();
    let tau = rep.config.tau_max(rep.epsilon);
    let mut shift: Option<[f64; 3]> = None;
    for i in (0..m.vertex_count()).step_by(11) {
        let tag = m.chart_tags[i];
        let w = C64::new(tag.coord[0], tag.coord[1]);
        let z = match tag.chart {
            Chart::Z => w,
            Chart::InvZ => 1.0 / w,
            Chart::Node { .. } => panic!("a single layer has no nodes"),
        };
        let x = p.immerse(z, 4).unwrap();
        let d = [m.vertices[i][0] - x[0], m.vertices[i][1] - x[1], m.vertices[i][2] - x[2]];
        let s = *shift.get_or_insert(d);
        let h = reduce_mod_lattice(&rep.config, tau, [d[0] - s[0], d[1] - s[1]]);
        let err = h[0].hypot(h[1]).max((d[2] - s[2]).abs());
        assert!(err < MESH_TOL, "vertex {i} at z = {z}: {err:e}");
    }
}

#[test]
fn unclosed_periods_fail_to_stitch() {
    let mut rep = meeks_report();
    rep.solution.nodes[0][0].zeta += 1e-3;
    assert!(matches!(mesh_glued(&rep, 16), Err(Error::Stitch(_))));
}

#[test]
fn unconverged_reports_are_refused() {
    let mut rep = meeks_report();
    rep.converged = false;
    assert!(matches!(mesh_glued(&rep, 16), Err(Error::NotConverged)));
}

/// Horizontal offset, modulo the lattice, between the vertices nearest to
/// z = 0 on spheres 1 and 2.
fn layer_offset(rep: &SolveReport, m: &SurfaceMesh) -> [f64; 2] {
    let near = |k: usize| {
        (0..m.vertex_count())
            .filter(|&i| m.chart_tags[i].sphere == k && m.chart_tags[i].chart == Chart::Z)
            .min_by(|&a, &b| {
                let r = |i: usize| m.chart_tags[i].coord[0].hypot(m.chart_tags[i].coord[1]);
                r(a).total_cmp(&r(b))
            })
            .unwrap()
    };
    let (a, b) = (m.vertices[near(1)], m.vertices[near(2)]);
    let tau = rep.config.tau_max(rep.epsilon);
    reduce_mod_lattice(&rep.config, tau, [b[0] - a[0], b[1] - a[1]])
}

#[test]
fn consecutive_layers_sit_in_opposite_phase() {
    let c = Configuration::tpms(vec![0.5, 0.5], vec![std::f64::consts::PI; 2], FRAC_PI_4, 0.0, 0.0).unwrap();
    let rep = newton_solve(&c, 0.3, &SolveOptions::default()).unwrap();
    let m = mesh_glued(&rep, 32).unwrap();
    let defect = m.closure_defect(&unit_combinations(&m.metadata.lattice), |_| false);
    assert!(defect < GLUE_TOL, "closure defect {defect:e}");
    // Half of a lattice vector, up to the mesh spacing.
    let l = m.metadata.lattice.clone();
    let halves: Vec<[f64; 2]> = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        .iter()
        .map(|c| [0.5 * (c[0] * l[0][0] + c[1] * l[1][0]), 0.5 * (c[0] * l[0][1] + c[1] * l[1][1])])
        .collect();
    let tau = rep.config.tau_max(rep.epsilon);
    let d = layer_offset(&rep, &m);
    let miss = halves
        .iter()
        .map(|h| {
            let r = reduce_mod_lattice(&rep.config, tau, [d[0] - h[0], d[1] - h[1]]);
            r[0].hypot(r[1])
        })
        .fold(f64::INFINITY, f64::min);
    assert!(miss < 0.3, "offset {d:?} is not a half period");

    let in_phase = meeks_report();
    let d = layer_offset(&in_phase, &mesh_glued(&in_phase, 32).unwrap());
    assert!(d[0].hypot(d[1]) < 0.3, "in-phase layers offset by {d:?}");
}

#[test]
fn angle_distortion_shrinks_under_refinement() {
    let p = params();
    let cut = cutoff(&p);
    let a = mesh_scherk(&p, 32, cut).unwrap().angle_distortion();
    let b = mesh_scherk(&p, 64, cut).unwrap().angle_distortion();
    eprintln!("distortion {a:e} -> {b:e}");
    assert!(b < 0.75 * a, "{a:e} -> {b:e}");
    let rep = meeks_report();
    let g16 = mesh_glued(&rep, 16).unwrap().angle_distortion();
    let g32 = mesh_glued(&rep, 32).unwrap().angle_distortion();
    eprintln!("glued distortion {g16:e} -> {g32:e}");
    assert!(g32 < 0.75 * g16, "{g16:e} -> {g32:e}");
}
