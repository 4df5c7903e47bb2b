//! Plain-text exports: OBJ meshes, CSV tables and `key=value` metadata.
//! Output is a pure function of the input, so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ambient::{Epsilon, Vec3};
use crate::correspondence::{CmcFrenetData, PmcFrenetData};
use crate::diffgeo::{CmcInvariants, Grid, SampledSurface, SurfaceInvariants};
use crate::error::{Error, Result};
use crate::families::Target;

/// How a factor in `M²(ε)` is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorView {
    /// Raw quadric coordinates in ℝ³.
    Model,
    /// `(x₁, x₂)/(1 + x₃)`, the Poincaré disk, for H²; stereographic
    /// projection from the antipode of the mean direction for S².
    Disk,
}

fn disk(p: &Vec3) -> Result<[f64; 2]> {
    let d = 1.0 + p[2];
    if !(d.abs() > 1e-12) {
        return Err(Error::Domain("point at the projection pole".into()));
    }
    Ok([p[0] / d, p[1] / d])
}

/// Projection of factor points to the plane: the Poincaré disk for H²,
/// and for S² stereographic projection from the antipode of the mean
/// direction of the points, which keeps the pole away from the surface.
fn project(eps: Epsilon, pts: &[Vec3]) -> Result<Vec<[f64; 2]>> {
    if eps == Epsilon::Hyperbolic {
        return pts.iter().map(disk).collect();
    }
    let mut m = [0.0; 3];
    for p in pts {
        for k in 0..3 {
            m[k] += p[k];
        }
    }
    let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    let up = if n > 1e-9 { m.map(|v| v / n) } else { [0.0, 0.0, 1.0] };
    // Orthonormal (e1, e2, up); the pole is −up.
    let seed = if up[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = seed[0] * up[0] + seed[1] * up[1] + seed[2] * up[2];
    let e1 = {
        let v = [seed[0] - d * up[0], seed[1] - d * up[1], seed[2] - d * up[2]];
        let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|x| x / l)
    };
    let e2 = crate::ambient::cross3(&up, &e1);
    let dot = |a: &Vec3, b: &Vec3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    pts.iter().map(|p| disk(&[dot(p, &e1), dot(p, &e2), dot(p, &up)])).collect()
}

/// Vertices of factor `which` (0 or 1) of a surface in `M²(ε)×M²(ε)`.
pub fn factor_vertices(s: &SampledSurface, which: usize, view: FactorView) -> Result<Vec<[f64; 3]>> {
    if s.target != Target::Product || which > 1 {
        return Err(Error::Usage("factor views need a product target and factor 0 or 1".into()));
    }
    let q: Vec<Vec3> = s.points.iter().map(|p| [p[3 * which], p[3 * which + 1], p[3 * which + 2]]).collect();
    match view {
        FactorView::Model => Ok(q),
        FactorView::Disk => Ok(project(s.eps, &q)?.into_iter().map(|d| [d[0], d[1], 0.0]).collect()),
    }
}

/// Vertices of a surface in `M²(ε)×ℝ`: the projected factor in the plane
/// and the height as third axis. For `M²(ε)×S¹(r)` the circle is drawn as
/// the rotation angle `t/r` about the z-axis of a solid torus whose core
/// radius clears the projected factor, so periodic surfaces close up.
pub fn line_vertices(s: &SampledSurface) -> Result<Vec<[f64; 3]>> {
    let q: Vec<Vec3> = s.points.iter().map(|p| [p[0], p[1], p[2]]).collect();
    let flat: Vec<([f64; 2], f64)> = project(s.eps, &q)?.into_iter().zip(s.points.iter().map(|p| p[3])).collect();
    match s.target {
        Target::Product => Err(Error::Usage("line view needs a target M²(ε)×ℝ".into())),
        Target::FactorTimesLine => Ok(flat.iter().map(|(d, t)| [d[0], d[1], *t]).collect()),
        Target::FactorTimesCircle(r) => {
            let reach = flat.iter().map(|(d, _)| d[0].abs()).fold(0.0, f64::max);
            let core = 1.0 + 2.0 * reach;
            Ok(flat
                .iter()
                .map(|(d, t)| {
                    let (sn, cs) = (t / r).sin_cos();
                    [(core + d[0]) * cs, (core + d[0]) * sn, d[1]]
                })
                .collect())
        }
    }
}

/// ASCII OBJ of a grid of vertices, two triangles per cell.
pub fn obj_string(grid: &Grid, vertices: &[[f64; 3]], comment: &str) -> Result<String> {
    if vertices.len() != grid.len() {
        return Err(Error::Internal("vertex count does not match grid".into()));
    }
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
    for v in vertices {
        let _ = writeln!(out, "v {:.12e} {:.12e} {:.12e}", v[0], v[1], v[2]);
    }
    let id = |i: usize, j: usize| grid.idx(i, j) + 1;
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let _ = writeln!(out, "f {a} {b} {c}");
            let _ = writeln!(out, "f {a} {c} {d}");
        }
    }
    Ok(out)
}

/// Vertex positions read back from OBJ text.
pub fn parse_obj_vertices(text: &str) -> Result<Vec<[f64; 3]>> {
    text.lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Usage(format!("bad OBJ vertex '{l}': {e}")))?;
            match v[..] {
                [x, y, z] => Ok([x, y, z]),
                _ => Err(Error::Usage(format!("bad OBJ vertex '{l}'"))),
            }
        })
        .collect()
}

/// Ordered `key=value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Usage(format!("metadata line without '=': {line}")))?;
            m.push(k.trim(), v.trim());
        }
        Ok(m)
    }
}

impl std::fmt::Display for Metadata {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn grid_xy(g: &Grid, k: usize) -> (f64, f64) {
    let (i, j) = g.ij(k);
    (g.x(i), g.y(j))
}

/// One row per grid node.
pub fn pmc_invariants_csv(inv: &SurfaceInvariants) -> String {
    let mut out = String::from("x,y,u,h_norm,c1,c2,theta1_re,theta1_im,theta2_re,theta2_im,k_gauss\n");
    for (k, p) in inv.points.iter().enumerate() {
        let (x, y) = grid_xy(&inv.grid, k);
        let _ = writeln!(
            out,
            "{x:.12e},{y:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            p.u, p.h_norm, p.c[0], p.c[1], p.theta[0].re, p.theta[0].im, p.theta[1].re, p.theta[1].im, p.k_gauss
        );
    }
    out
}

pub fn cmc_invariants_csv(inv: &CmcInvariants) -> String {
    let mut out = String::from("x,y,u,h,nu,theta_ar_re,theta_ar_im,k_gauss\n");
    for (k, p) in inv.points.iter().enumerate() {
        let (x, y) = grid_xy(&inv.grid, k);
        let _ = writeln!(
            out,
            "{x:.12e},{y:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            p.u, p.h, p.nu, p.theta_ar.re, p.theta_ar.im, p.k_gauss
        );
    }
    out
}

pub fn pmc_data_csv(d: &PmcFrenetData) -> String {
    let mut out = String::from("x,y,u,c1,c2,gamma1_re,gamma1_im,gamma2_re,gamma2_im,f1_re,f1_im,f2_re,f2_im\n");
    for k in 0..d.grid.len() {
        let (x, y) = grid_xy(&d.grid, k);
        let _ = write!(out, "{x:.12e},{y:.12e},{:.12e},{:.12e},{:.12e}", d.u[k], d.c[0][k], d.c[1][k]);
        for v in [d.gamma[0][k], d.gamma[1][k], d.f[0][k], d.f[1][k]] {
            let _ = write!(out, ",{:.12e},{:.12e}", v.re, v.im);
        }
        out.push('\n');
    }
    out
}

pub fn cmc_data_csv(d: &CmcFrenetData) -> String {
    let mut out = String::from("x,y,u,nu,p_re,p_im,eta,eta_z_re,eta_z_im\n");
    for k in 0..d.grid.len() {
        let (x, y) = grid_xy(&d.grid, k);
        let _ = writeln!(
            out,
            "{x:.12e},{y:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            d.u[k], d.nu[k], d.p[k].re, d.p[k].im, d.eta[k], d.eta_z[k].re, d.eta_z[k].im
        );
    }
    out
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Name of the projection used for factor `eps` under `view`.
pub fn view_name(eps: Epsilon, view: FactorView) -> &'static str {
    match (view, eps) {
        (FactorView::Model, _) => "model",
        (FactorView::Disk, Epsilon::Hyperbolic) => "poincare",
        (FactorView::Disk, Epsilon::Sphere) => "stereographic",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{cmc_torus, product_of_curves};
    use crate::par::Execution;

    #[test]
    fn obj_round_trips_and_is_deterministic() {
        let chart = product_of_curves(Epsilon::Hyperbolic, 1.0, 2.0).unwrap();
        let g = Grid::new(chart.domain, 7, 5).unwrap();
        let s = SampledSurface::from_chart(&chart, &g, Execution::Parallel).unwrap();
        let v = factor_vertices(&s, 1, FactorView::Disk).unwrap();
        let a = obj_string(&g, &v, "test").unwrap();
        let b = obj_string(&g, &factor_vertices(&s, 1, FactorView::Disk).unwrap(), "test").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().filter(|l| l.starts_with("f ")).count(), 2 * 6 * 4);
        let back = parse_obj_vertices(&a).unwrap();
        for (p, q) in back.iter().zip(&v) {
            assert!((0..3).all(|k| (p[k] - q[k]).abs() < 1e-11 * (1.0 + q[k].abs())));
            assert!(p[0] * p[0] + p[1] * p[1] < 1.0);
        }
    }

    #[test]
    fn torus_seams_coincide() {
        let (torus, _) = cmc_torus(2.0, 1.0).unwrap();
        let g = Grid::new(torus.domain, 33, 33).unwrap();
        let s = SampledSurface::from_chart(&torus, &g, Execution::Parallel).unwrap();
        let v = line_vertices(&s).unwrap();
        let mut worst = 0.0f64;
        for j in 0..g.ny {
            let (a, b) = (v[g.idx(0, j)], v[g.idx(g.nx - 1, j)]);
            worst = worst.max((0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max));
        }
        for i in 0..g.nx {
            let (a, b) = (v[g.idx(i, 0)], v[g.idx(i, g.ny - 1)]);
            worst = worst.max((0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max));
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn metadata_round_trips() {
        let mut m = Metadata::default();
        m.push("family", "invariant_pmc");
        m.push("a", -2.0);
        let back = Metadata::parse(&m.to_string()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("a"), Some("-2"));
    }
}
