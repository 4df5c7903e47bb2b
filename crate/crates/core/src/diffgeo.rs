//! Numerical differential geometry of immersed surfaces in isothermal
//! coordinates: jets, per-point invariants (Kähler functions, normal frame,
//! Hopf coefficients, curvatures), grid-level derivatives, and the residuals
//! of the identities these quantities satisfy on PMC and CMC surfaces.
//!
//! Tangent computations happen in coordinates with respect to an orthonormal
//! basis of the ambient tangent space, where the metric is Euclidean.

use std::f64::consts::{PI, SQRT_2};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C64;

use crate::ambient::{cross3, cross4, dot3, dot6, oriented_factor_basis, oriented_product_basis, Epsilon, Vec6};
use crate::error::{domain, Error, Result};
use crate::families::{ImmersionChart, Rect, Target};
use crate::par::{map_range, try_map_range, Execution};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// How chart partials are obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JetMode {
    /// Partials from the chart's jet map.
    Analytic,
    /// Second-order centered differences of chart points with this step.
    FiniteDifference(f64),
}

/// Point and partials of a chart at one parameter value. Charts into
/// `M²(ε)×ℝ` use the first four slots.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JetSample {
    pub p: Vec6,
    pub px: Vec6,
    pub py: Vec6,
    pub pxx: Vec6,
    pub pxy: Vec6,
    pub pyy: Vec6,
    pub fd_step: Option<f64>,
}

pub fn sample_jet(chart: &ImmersionChart, x: f64, y: f64, mode: JetMode) -> Result<JetSample> {
    match mode {
        JetMode::Analytic => {
            let j = chart.jet(x, y)?;
            Ok(JetSample {
                p: j.map(|c| c.v),
                px: j.map(|c| c.dx),
                py: j.map(|c| c.dy),
                pxx: j.map(|c| c.dxx),
                pxy: j.map(|c| c.dxy),
                pyy: j.map(|c| c.dyy),
                fd_step: None,
            })
        }
        JetMode::FiniteDifference(h) => {
            if !(h > 0.0) {
                return Err(Error::Usage(format!("fd_step must be positive, got {h}")));
            }
            if !chart.domain.contains(x - h, y - h) || !chart.domain.contains(x + h, y + h) {
                return domain(format!("({x}, {y}) is closer than fd_step = {h} to the chart boundary"));
            }
            let f = |a: f64, b: f64| chart.jet_unchecked(a, b).map(|c| c.v);
            let c = f(x, y);
            let (e, w, n, s) = (f(x + h, y), f(x - h, y), f(x, y + h), f(x, y - h));
            let (ne, nw, se, sw) = (f(x + h, y + h), f(x - h, y + h), f(x + h, y - h), f(x - h, y - h));
            let h2 = h * h;
            Ok(JetSample {
                p: c,
                px: std::array::from_fn(|k| (e[k] - w[k]) / (2.0 * h)),
                py: std::array::from_fn(|k| (n[k] - s[k]) / (2.0 * h)),
                pxx: std::array::from_fn(|k| (e[k] - 2.0 * c[k] + w[k]) / h2),
                pxy: std::array::from_fn(|k| (ne[k] - nw[k] - se[k] + sw[k]) / (4.0 * h2)),
                pyy: std::array::from_fn(|k| (n[k] - 2.0 * c[k] + s[k]) / h2),
                fd_step: Some(h),
            })
        }
    }
}

/// Uniform grid of parameter values, nodes indexed `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub x0: f64,
    pub y0: f64,
    pub hx: f64,
    pub hy: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    /// Nodes on the corners and edges of `rect`.
    pub fn new(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx < 5 || ny < 5 {
            return domain(format!("grid must be at least 5×5, got {nx}×{ny}"));
        }
        Ok(Self {
            x0: rect.x0,
            y0: rect.y0,
            hx: (rect.x1 - rect.x0) / (nx - 1) as f64,
            hy: (rect.y1 - rect.y0) / (ny - 1) as f64,
            nx,
            ny,
        })
    }

    /// Grid on `rect` shrunk by `margin` on every side.
    pub fn inset(rect: Rect, margin: f64, nx: usize, ny: usize) -> Result<Self> {
        Grid::new(Rect::new(rect.x0 + margin, rect.x1 - margin, rect.y0 + margin, rect.y1 - margin)?, nx, ny)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + self.hx * i as f64
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + self.hy * j as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn rect(&self) -> Rect {
        Rect { x0: self.x0, x1: self.x(self.nx - 1), y0: self.y0, y1: self.y(self.ny - 1) }
    }

    /// True when `(i, j)` has two neighbours on every side.
    #[inline]
    pub fn is_inner(&self, i: usize, j: usize) -> bool {
        i >= 2 && j >= 2 && i + 2 < self.nx && j + 2 < self.ny
    }

    /// The subgrid of nodes `margin..n-margin` in both directions.
    pub fn shrink(&self, margin: usize) -> Result<Grid> {
        if self.nx < 2 * margin + 5 || self.ny < 2 * margin + 5 {
            return domain("grid too small to shrink");
        }
        Ok(Grid {
            x0: self.x(margin),
            y0: self.y(margin),
            hx: self.hx,
            hy: self.hy,
            nx: self.nx - 2 * margin,
            ny: self.ny - 2 * margin,
        })
    }
}

/// Values that finite-difference formulas can combine.
pub trait Lin: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>> Lin for T {}

/// Fourth-order first derivative of a sampled function at index `i` of
/// `n ≥ 5` samples, one-sided near the ends.
pub fn d1<T: Lin>(f: impl Fn(usize) -> T, n: usize, i: usize, h: f64) -> T {
    let c = 1.0 / (12.0 * h);
    if i >= 2 && i + 2 < n {
        (f(i - 2) - f(i + 2) + (f(i + 1) - f(i - 1)) * 8.0) * c
    } else if i < 2 {
        let s = |k: usize| f(k);
        if i == 0 {
            (s(1) * 48.0 - s(0) * 25.0 - s(2) * 36.0 + s(3) * 16.0 - s(4) * 3.0) * c
        } else {
            (s(2) * 18.0 - s(0) * 3.0 - s(1) * 10.0 - s(3) * 6.0 + s(4)) * c
        }
    } else {
        // Mirror of the left-end formulas.
        let s = |k: usize| f(n - 1 - k);
        if i == n - 1 {
            (s(1) * 48.0 - s(0) * 25.0 - s(2) * 36.0 + s(3) * 16.0 - s(4) * 3.0) * (-c)
        } else {
            (s(2) * 18.0 - s(0) * 3.0 - s(1) * 10.0 - s(3) * 6.0 + s(4)) * (-c)
        }
    }
}

/// Fourth-order centered second derivative; needs two samples on each side.
pub fn d2<T: Lin>(f: impl Fn(usize) -> T, i: usize, h: f64) -> T {
    ((f(i + 1) + f(i - 1)) * 16.0 - (f(i + 2) + f(i - 2)) - f(i) * 30.0) * (1.0 / (12.0 * h * h))
}

#[inline]
pub(crate) fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub(crate) fn lin4(a: f64, u: &[f64; 4], b: f64, v: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|k| a * u[k] + b * v[k])
}

#[inline]
pub(crate) fn norm4(a: &[f64; 4]) -> f64 {
    dot4(a, a).sqrt()
}

/// `J₁ = (J, J)` and `J₂ = (J, −J)` in oriented product coordinates.
#[inline]
pub(crate) fn jj(which: u8, v: &[f64; 4]) -> [f64; 4] {
    if which == 1 {
        [-v[1], v[0], -v[3], v[2]]
    } else {
        [-v[1], v[0], v[3], -v[2]]
    }
}

/// `Φ̂`-type product structure `diag(1, −1)` in product coordinates.
#[inline]
pub(crate) fn pp(v: &[f64; 4]) -> [f64; 4] {
    [v[0], v[1], -v[2], -v[3]]
}

pub(crate) type CV4 = [C64; 4];

pub(crate) fn cplx(re: &[f64; 4], im: &[f64; 4]) -> CV4 {
    std::array::from_fn(|k| C64::new(re[k], im[k]))
}

pub(crate) fn conj4(v: &CV4) -> CV4 {
    v.map(|c| c.conj())
}

pub(crate) fn bil(a: &CV4, b: &CV4) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn cj(which: u8, v: &CV4) -> CV4 {
    let re = jj(which, &v.map(|c| c.re));
    let im = jj(which, &v.map(|c| c.im));
    cplx(&re, &im)
}

/// Curvature tensor of `M²(ε)×M²(ε)` on coordinate vectors,
/// `R(X,Y,Z,W) = ε Σ_blocks (⟨X,W⟩⟨Y,Z⟩ − ⟨X,Z⟩⟨Y,W⟩)`.
fn curvature_tensor(eps: f64, x: &[f64; 4], y: &[f64; 4], z: &[f64; 4], w: &[f64; 4]) -> f64 {
    let b = |u: &[f64; 4], v: &[f64; 4], k: usize| u[2 * k] * v[2 * k] + u[2 * k + 1] * v[2 * k + 1];
    (0..2).map(|k| eps * (b(x, w, k) * b(y, z, k) - b(x, z, k) * b(y, w, k))).sum()
}

/// Tangent-plane data shared by the PMC and CMC computations.
struct Tangent<const N: usize> {
    a: [f64; N],
    b: [f64; N],
    s: [[f64; N]; 3],
    e: f64,
    f: f64,
    g: f64,
    det: f64,
}

impl<const N: usize> Tangent<N> {
    fn new(a: [f64; N], b: [f64; N], s: [[f64; N]; 3]) -> Result<Self> {
        let d = |u: &[f64; N], v: &[f64; N]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        let (e, f, g) = (d(&a, &a), d(&a, &b), d(&b, &b));
        let det = e * g - f * f;
        if !(e > 0.0) || !(det > 1e-14 * e * g) {
            return Err(Error::Precondition("degenerate tangent plane".into()));
        }
        Ok(Self { a, b, s, e, f, g, det })
    }

    fn dot(u: &[f64; N], v: &[f64; N]) -> f64 {
        u.iter().zip(v).map(|(x, y)| x * y).sum()
    }

    /// Coefficients `(α, β)` of the tangential part `α Φx + β Φy` of `v`.
    fn tangential_coeffs(&self, v: &[f64; N]) -> [f64; 2] {
        let (p, q) = (Self::dot(v, &self.a), Self::dot(v, &self.b));
        [(self.g * p - self.f * q) / self.det, (self.e * q - self.f * p) / self.det]
    }

    fn normal_part(&self, v: &[f64; N]) -> [f64; N] {
        let [al, be] = self.tangential_coeffs(v);
        std::array::from_fn(|k| v[k] - al * self.a[k] - be * self.b[k])
    }

    fn u(&self) -> f64 {
        0.5 * self.e.ln()
    }

    fn conformal_defect(&self) -> f64 {
        (self.e - self.g).abs().max(self.f.abs()) / self.e
    }

    /// Mean curvature vector from the normal parts of the second partials.
    fn mean_curvature(&self, n: &[[f64; N]; 3]) -> [f64; N] {
        std::array::from_fn(|k| (self.g * n[0][k] - 2.0 * self.f * n[1][k] + self.e * n[2][k]) / (2.0 * self.det))
    }
}

/// Invariants of a surface in `M²(ε)×M²(ε)` at one point.
#[derive(Clone, Copy, Debug, Default)]
pub struct PmcPoint {
    pub u: f64,
    pub conformal_defect: f64,
    pub c: [f64; 2],
    pub h: Vec6,
    pub h_norm: f64,
    pub htilde: Vec6,
    pub gamma: [C64; 2],
    pub f: [C64; 2],
    /// Hopf coefficients `2√2|H| f_j + (ε/2) γ_j²`.
    pub theta: [C64; 2],
    /// Hopf coefficients from `2⟨σ(∂z,∂z), H ± iH̃⟩ + (ε/4|H|²)⟨J_jΦz, H ± iH̃⟩²`.
    pub theta_def: [C64; 2],
    pub kbar: f64,
    pub kbar_perp: f64,
    pub kbar_tensor: f64,
    pub kbar_perp_tensor: f64,
    /// Gauss curvature from the Gauss equation.
    pub k_gauss: f64,
    /// `X_j = x_field[j][0] ∂x + x_field[j][1] ∂y`, tangential part of `J_j H̃`.
    pub x_field: [[f64; 2]; 2],
    /// Largest of `|J₁H̃ − X₁ − C₁H|`, `|J₂H̃ − X₂ + C₂H|` over `|H|`.
    pub x_defect: f64,
    /// Largest of the normal-frame defects (`H, H̃` against the tangent plane
    /// and each other) over `|H|²`.
    pub frame_defect: f64,
    /// `⟨Φz, Φ̂z⟩` and `⟨Φz, Φ̂z̄⟩`.
    pub hat_zz: C64,
    pub hat_zzbar: f64,
    /// `⟨ξ, Φ̂z⟩` and `⟨ξ̄, Φ̂z⟩`.
    pub xi_hat_z: [C64; 2],
}

impl PmcPoint {
    pub fn jac_phi(&self) -> f64 {
        0.5 * (self.c[0] + self.c[1])
    }

    pub fn jac_psi(&self) -> f64 {
        0.5 * (self.c[0] - self.c[1])
    }
}

/// Minimum `|H|` for which the normal frame is defined.
pub const MIN_H: f64 = 1e-10;

pub fn pmc_point(eps: Epsilon, jet: &JetSample) -> Result<PmcPoint> {
    let e = eps.value();
    let basis = oriented_product_basis(eps, &jet.p);
    let to4 = |v: &Vec6| -> [f64; 4] { std::array::from_fn(|k| dot6(eps, v, &basis[k])) };
    let from4 = |c: &[f64; 4]| -> Vec6 { std::array::from_fn(|m| (0..4).map(|k| c[k] * basis[k][m]).sum()) };

    let t = Tangent::new(to4(&jet.px), to4(&jet.py), [to4(&jet.pxx), to4(&jet.pxy), to4(&jet.pyy)])?;
    let (a, b) = (t.a, t.b);
    let n = t.s.map(|s| t.normal_part(&s));
    let h = t.mean_curvature(&n);
    let hn = norm4(&h);
    if hn < MIN_H {
        return Err(Error::Domain("minimal surface, H̃ undefined".into()));
    }
    let w = cross4(&a, &b, &h);
    let ht = w.map(|c| -hn * c / norm4(&w));

    let u = t.u();
    let e2u = t.e;
    // ⟨J_jΦx, Φy⟩ over the area element; equals e^{−2u}⟨J_jΦx, Φy⟩ in
    // isothermal coordinates.
    let area = t.det.sqrt();
    let c = [dot4(&jj(1, &a), &b) / area, dot4(&jj(2, &a), &b) / area];

    let phi_z = cplx(&a.map(|v| 0.5 * v), &b.map(|v| -0.5 * v));
    let phi_zz = cplx(&lin4(0.25, &t.s[0], -0.25, &t.s[2]), &t.s[1].map(|v| -0.5 * v));
    let xi = cplx(&h.map(|v| v / (SQRT_2 * hn)), &ht.map(|v| -v / (SQRT_2 * hn)));
    let xib = conj4(&xi);
    let gamma = [bil(&cj(1, &phi_z), &xib), bil(&cj(2, &phi_z), &xi)];
    let f = [bil(&phi_zz, &xib), bil(&phi_zz, &xi)];
    let theta: [C64; 2] = std::array::from_fn(|j| 2.0 * SQRT_2 * hn * f[j] + 0.5 * e * gamma[j] * gamma[j]);

    let sigma_zz = cplx(&lin4(0.25, &n[0], -0.25, &n[2]), &n[1].map(|v| -0.5 * v));
    let hp = cplx(&h, &ht);
    let hm = conj4(&hp);
    let theta_def = [
        2.0 * bil(&sigma_zz, &hp) + e / (4.0 * hn * hn) * bil(&cj(1, &phi_z), &hp).powi(2),
        2.0 * bil(&sigma_zz, &hm) + e / (4.0 * hn * hn) * bil(&cj(2, &phi_z), &hm).powi(2),
    ];

    let kbar_tensor = curvature_tensor(e, &a, &b, &b, &a) / t.det;
    let e1 = a.map(|v| v / e2u.sqrt());
    let b_perp = lin4(1.0, &b, -dot4(&b, &e1), &e1);
    let e2 = b_perp.map(|v| v / norm4(&b_perp));
    let (e3, e4) = (ht.map(|v| v / hn), h.map(|v| v / hn));
    let kbar_perp_tensor = curvature_tensor(e, &e1, &e2, &e4, &e3);
    let k_gauss = kbar_tensor + (dot4(&n[0], &n[2]) - dot4(&n[1], &n[1])) / t.det;

    let jh = [jj(1, &ht), jj(2, &ht)];
    let x_field = jh.map(|v| t.tangential_coeffs(&v));
    let x_defect = (0..2)
        .map(|j| {
            let [al, be] = x_field[j];
            let sgn = if j == 0 { -c[0] } else { c[1] };
            let r: [f64; 4] = std::array::from_fn(|k| jh[j][k] - al * a[k] - be * b[k] + sgn * h[k]);
            norm4(&r) / hn
        })
        .fold(0.0, f64::max);
    let frame_defect = [dot4(&h, &a) / e2u.sqrt(), dot4(&h, &b) / e2u.sqrt(), dot4(&h, &ht) / hn, norm4(&ht) - hn]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        / hn;

    let hat_z = cplx(&pp(&a).map(|v| 0.5 * v), &pp(&b).map(|v| -0.5 * v));
    Ok(PmcPoint {
        u,
        conformal_defect: t.conformal_defect(),
        c,
        h: from4(&h),
        h_norm: hn,
        htilde: from4(&ht),
        gamma,
        f,
        theta,
        theta_def,
        kbar: 0.5 * e * (c[0] * c[0] + c[1] * c[1]),
        kbar_perp: 0.5 * e * (c[0] * c[0] - c[1] * c[1]),
        kbar_tensor,
        kbar_perp_tensor,
        k_gauss,
        x_field,
        x_defect,
        frame_defect,
        hat_zz: bil(&phi_z, &hat_z),
        hat_zzbar: bil(&phi_z, &conj4(&hat_z)).re,
        xi_hat_z: [bil(&xi, &hat_z), bil(&xib, &hat_z)],
    })
}

/// Invariants of a surface in `M²(ε)×ℝ` at one point. The unit normal is
/// oriented so that the mean curvature `h` is non-negative.
#[derive(Clone, Copy, Debug, Default)]
pub struct CmcPoint {
    pub u: f64,
    pub conformal_defect: f64,
    pub h: f64,
    /// Unit normal in ambient coordinates `(n₁, n₂, n₃, n_t)`.
    pub normal: [f64; 4],
    /// `ν = ⟨N, ∂t⟩`.
    pub nu: f64,
    /// `p = ⟨Ψzz, N⟩`.
    pub p: C64,
    pub eta_z: C64,
    /// Abresch–Rosenberg coefficient `H p − (ε/2) η_z²`.
    pub theta_ar: C64,
    pub k_gauss: f64,
}

pub fn cmc_point(eps: Epsilon, jet: &JetSample) -> Result<CmcPoint> {
    let e = eps.value();
    let psi = [jet.p[0], jet.p[1], jet.p[2]];
    let (b1, b2) = oriented_factor_basis(eps, &psi);
    let to3 = |v: &Vec6| -> [f64; 3] {
        let w = [v[0], v[1], v[2]];
        [dot3(eps, &w, &b1), dot3(eps, &w, &b2), v[3]]
    };
    let t = Tangent::new(to3(&jet.px), to3(&jet.py), [to3(&jet.pxx), to3(&jet.pxy), to3(&jet.pyy)])?;
    let mut nrm = cross3(&t.a, &t.b);
    let nn = Tangent::<3>::dot(&nrm, &nrm).sqrt();
    nrm = nrm.map(|v| v / nn);
    let sn = t.s.map(|s| Tangent::<3>::dot(&s, &nrm));
    let mut h = (t.g * sn[0] - 2.0 * t.f * sn[1] + t.e * sn[2]) / (2.0 * t.det);
    let mut sgn = 1.0;
    if h < 0.0 {
        h = -h;
        sgn = -1.0;
        nrm = nrm.map(|v| -v);
    }
    let p = sgn * C64::new(0.25 * (sn[0] - sn[2]), -0.5 * sn[1]);
    let eta_z = C64::new(0.5 * t.a[2], -0.5 * t.b[2]);
    let nu = nrm[2];
    let kbar = e * nu * nu;
    let k_gauss = kbar + (sn[0] * sn[2] - sn[1] * sn[1]) / t.det;
    let normal =
        [nrm[0] * b1[0] + nrm[1] * b2[0], nrm[0] * b1[1] + nrm[1] * b2[1], nrm[0] * b1[2] + nrm[1] * b2[2], nrm[2]];
    Ok(CmcPoint {
        u: t.u(),
        conformal_defect: t.conformal_defect(),
        h,
        normal,
        nu,
        p,
        eta_z,
        theta_ar: h * p - 0.5 * e * eta_z * eta_z,
        k_gauss,
    })
}

/// Jets of a chart at every node of `grid`.
pub fn chart_jets(chart: &ImmersionChart, grid: &Grid, mode: JetMode, exec: Execution) -> Result<Vec<JetSample>> {
    try_map_range(exec, grid.len(), |k| {
        let (i, j) = grid.ij(k);
        sample_jet(chart, grid.x(i), grid.y(j), mode)
    })
}

/// A surface known only through its values on a grid, as produced by the
/// Frenet reconstructions.
#[derive(Clone, Debug)]
pub struct SampledSurface {
    pub grid: Grid,
    pub eps: Epsilon,
    pub target: Target,
    pub points: Vec<Vec6>,
}

impl SampledSurface {
    /// Chart values at the nodes of `grid`.
    pub fn from_chart(chart: &ImmersionChart, grid: &Grid, exec: Execution) -> Result<Self> {
        let points = try_map_range(exec, grid.len(), |k| {
            let (i, j) = grid.ij(k);
            chart.point(grid.x(i), grid.y(j))
        })?;
        Ok(Self { grid: *grid, eps: chart.eps, target: chart.target, points })
    }

    pub fn point(&self, i: usize, j: usize) -> Vec6 {
        self.points[self.grid.idx(i, j)]
    }

    /// Jets by fourth-order differences on the nodes two away from the edge,
    /// returned with the corresponding subgrid.
    pub fn jets(&self) -> Result<(Grid, Vec<JetSample>)> {
        let g = self.grid;
        let inner = g.shrink(2)?;
        let comp = |k: usize, i: usize, j: usize| self.points[g.idx(i, j)][k];
        let py_at = |i: usize, j: usize| -> Vec6 { std::array::from_fn(|k| d1(|jj| comp(k, i, jj), g.ny, j, g.hy)) };
        let jets = (0..inner.len())
            .map(|m| {
                let (ii, jj) = inner.ij(m);
                let (i, j) = (ii + 2, jj + 2);
                JetSample {
                    p: self.point(i, j),
                    px: std::array::from_fn(|k| d1(|q| comp(k, q, j), g.nx, i, g.hx)),
                    py: py_at(i, j),
                    pxx: std::array::from_fn(|k| d2(|q| comp(k, q, j), i, g.hx)),
                    pxy: std::array::from_fn(|k| d1(|q| py_at(q, j)[k], g.nx, i, g.hx)),
                    pyy: std::array::from_fn(|k| d2(|q| comp(k, i, q), j, g.hy)),
                    fd_step: Some(g.hx.max(g.hy)),
                }
            })
            .collect();
        Ok((inner, jets))
    }
}

/// Grid derivatives of the PMC invariants at a node with two neighbours on
/// each side.
#[derive(Clone, Copy, Debug, Default)]
pub struct PmcDerived {
    /// Gauss curvature `−e^{−2u}(u_xx + u_yy)`.
    pub k: f64,
    /// Coordinate partials `(∂x C_j, ∂y C_j)`.
    pub grad_c: [[f64; 2]; 2],
    /// `Δ C_j` for the induced metric.
    pub lap_c: [f64; 2],
    pub div_x: [f64; 2],
    pub dz_c: [C64; 2],
    pub dzbar_f: [C64; 2],
    pub dzbar_gamma: [C64; 2],
    pub dzbar_theta: [C64; 2],
    /// `max |∇⊥H|, |∇⊥H̃|` per unit length, over `|H|`.
    pub parallelism: f64,
}

#[derive(Clone, Debug)]
pub struct SurfaceInvariants {
    pub grid: Grid,
    pub eps: Epsilon,
    pub points: Vec<PmcPoint>,
    /// Present on nodes with two neighbours on each side.
    pub derived: Vec<Option<PmcDerived>>,
}

pub fn analyze_pmc(eps: Epsilon, grid: &Grid, jets: &[JetSample], exec: Execution) -> Result<SurfaceInvariants> {
    if jets.len() != grid.len() {
        return Err(Error::Internal("jet count does not match grid".into()));
    }
    let points = try_map_range(exec, grid.len(), |k| pmc_point(eps, &jets[k]))?;
    let g = *grid;
    let pts = &points;
    let derived = map_range(exec, grid.len(), |k| {
        let (i, j) = g.ij(k);
        if !g.is_inner(i, j) {
            return None;
        }
        let at = |q: usize, r: usize| &pts[g.idx(q, r)];
        let dx = |f: &dyn Fn(&PmcPoint) -> f64| d1(|q| f(at(q, j)), g.nx, i, g.hx);
        let dy = |f: &dyn Fn(&PmcPoint) -> f64| d1(|r| f(at(i, r)), g.ny, j, g.hy);
        let dxc = |f: &dyn Fn(&PmcPoint) -> C64| d1(|q| f(at(q, j)), g.nx, i, g.hx);
        let dyc = |f: &dyn Fn(&PmcPoint) -> C64| d1(|r| f(at(i, r)), g.ny, j, g.hy);
        let dzbar = |f: &dyn Fn(&PmcPoint) -> C64| 0.5 * (dxc(f) + I * dyc(f));
        let p = at(i, j);
        let em2u = (-2.0 * p.u).exp();
        let uxx = d2(|q| at(q, j).u, i, g.hx);
        let uyy = d2(|r| at(i, r).u, j, g.hy);
        let mut out = PmcDerived { k: -em2u * (uxx + uyy), ..Default::default() };
        for m in 0..2 {
            let (cx, cy) = (dx(&|q| q.c[m]), dy(&|q| q.c[m]));
            out.grad_c[m] = [cx, cy];
            out.lap_c[m] = em2u * (d2(|q| at(q, j).c[m], i, g.hx) + d2(|r| at(i, r).c[m], j, g.hy));
            out.div_x[m] =
                em2u * (dx(&|q| (2.0 * q.u).exp() * q.x_field[m][0]) + dy(&|q| (2.0 * q.u).exp() * q.x_field[m][1]));
            out.dz_c[m] = 0.5 * C64::new(cx, -cy);
            out.dzbar_f[m] = dzbar(&|q| q.f[m]);
            out.dzbar_gamma[m] = dzbar(&|q| q.gamma[m]);
            out.dzbar_theta[m] = dzbar(&|q| q.theta[m]);
        }
        let jet = &jets[k];
        let basis = oriented_product_basis(eps, &jet.p);
        let to4 = |v: &Vec6| -> [f64; 4] { std::array::from_fn(|q| dot6(eps, v, &basis[q])) };
        let t = Tangent::new(to4(&jet.px), to4(&jet.py), [[0.0; 4]; 3]).ok()?;
        let mut worst = 0.0f64;
        for field in [|q: &PmcPoint| q.h, |q: &PmcPoint| q.htilde] {
            let vx: Vec6 = std::array::from_fn(|c| d1(|q| field(at(q, j))[c], g.nx, i, g.hx));
            let vy: Vec6 = std::array::from_fn(|c| d1(|r| field(at(i, r))[c], g.ny, j, g.hy));
            for (v, len) in [(vx, t.e.sqrt()), (vy, t.g.sqrt())] {
                worst = worst.max(norm4(&t.normal_part(&to4(&v))) / len);
            }
        }
        out.parallelism = worst / p.h_norm;
        Some(out)
    });
    Ok(SurfaceInvariants { grid: *grid, eps, points, derived })
}

/// Jets of `chart` on `grid` followed by [`analyze_pmc`].
pub fn analyze_chart(chart: &ImmersionChart, grid: &Grid, mode: JetMode, exec: Execution) -> Result<SurfaceInvariants> {
    if chart.target != Target::Product {
        return Err(Error::Usage(format!("{} is not a chart into M²(ε)×M²(ε)", chart.family)));
    }
    let jets = chart_jets(chart, grid, mode, exec)?;
    analyze_pmc(chart.eps, grid, &jets, exec)
}

/// Grid on the chart domain, inset far enough for the jet mode.
pub fn default_grid(chart: &ImmersionChart, nx: usize, ny: usize, mode: JetMode) -> Result<Grid> {
    let margin = match mode {
        JetMode::Analytic => 0.0,
        JetMode::FiniteDifference(h) => 1.000001 * h,
    };
    Grid::inset(chart.domain, margin, nx, ny)
}

/// Residual of one identity: largest mismatch over the nodes where it is
/// evaluated, scaled by `max(1, largest side)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub name: &'static str,
    pub description: &'static str,
    pub value: f64,
    pub scale: f64,
}

#[derive(Default)]
pub(crate) struct Acc {
    diff: f64,
    side: f64,
}

impl Acc {
    pub(crate) fn push(&mut self, l: f64, r: f64) {
        self.diff = self.diff.max((l - r).abs());
        self.side = self.side.max(l.abs()).max(r.abs());
    }

    pub(crate) fn push_c(&mut self, l: C64, r: C64) {
        self.diff = self.diff.max((l - r).norm());
        self.side = self.side.max(l.norm()).max(r.norm());
    }

    pub(crate) fn finish(self, name: &'static str, description: &'static str) -> Residual {
        Residual { name, description, value: self.diff / self.side.max(1.0), scale: self.side }
    }
}

impl SurfaceInvariants {
    fn inner(&self) -> impl Iterator<Item = (&PmcPoint, &PmcDerived)> {
        self.points.iter().zip(&self.derived).filter_map(|(p, d)| d.as_ref().map(|d| (p, d)))
    }

    pub fn max_over<F: Fn(&PmcPoint) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_over<F: Fn(&PmcPoint) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(f).fold(f64::INFINITY, f64::min)
    }

    pub fn max_inner<F: Fn(&PmcPoint, &PmcDerived) -> f64>(&self, f: F) -> f64 {
        self.inner().map(|(p, d)| f(p, d)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn conformal_defect(&self) -> f64 {
        self.max_over(|p| p.conformal_defect)
    }

    pub fn parallelism(&self) -> f64 {
        self.max_inner(|_, d| d.parallelism)
    }

    /// Spread `max − min` of a scalar over all nodes.
    pub fn spread<F: Fn(&PmcPoint) -> f64 + Copy>(&self, f: F) -> f64 {
        self.max_over(f) - self.min_over(f)
    }

    /// Largest deviation of `θ_j` from its value at the grid center.
    pub fn theta_spread(&self, j: usize) -> f64 {
        let c = self.points[self.grid.idx(self.grid.nx / 2, self.grid.ny / 2)].theta[j];
        self.max_over(|p| (p.theta[j] - c).norm())
    }

    pub fn center(&self) -> &PmcPoint {
        &self.points[self.grid.idx(self.grid.nx / 2, self.grid.ny / 2)]
    }

    /// Residuals of the identities among `u, C_j, K, |H|, f_j, γ_j, θ_j, X_j`.
    pub fn identity_residuals(&self) -> Vec<Residual> {
        let e = self.eps.value();
        let mut hopf_norm = Acc::default();
        let mut kgrad = Acc::default();
        let mut klap = Acc::default();
        let mut div = Acc::default();
        let mut split = Acc::default();
        let mut cz = Acc::default();
        let mut fzb = Acc::default();
        let mut gzb = Acc::default();
        let mut gnorm = Acc::default();
        let mut theta_paths = Acc::default();
        let mut kbar = Acc::default();
        let mut kperp = Acc::default();
        let mut gauss = Acc::default();
        for (p, d) in self.inner() {
            let (h2, k, e2u) = (p.h_norm * p.h_norm, d.k, (2.0 * p.u).exp());
            for j in 0..2 {
                let c = p.c[j];
                let sj = if j == 0 { 1.0 } else { -1.0 };
                let grad2 = (d.grad_c[j][0].powi(2) + d.grad_c[j][1].powi(2)) / e2u;
                hopf_norm.push(p.f[j].norm_sqr(), e2u * e2u / 8.0 * (h2 - k + e * c * c));
                kgrad.push(
                    grad2 + 4.0 * e * p.theta[j].norm_sqr() / (e2u * e2u),
                    (1.0 - c * c + 4.0 * e * h2) * (e * (1.0 - c * c) / 4.0 + h2 + e * c * c - k),
                );
                klap.push(d.lap_c[j], -c * (4.0 * h2 - 2.0 * k + e * (1.0 + c * c)));
                div.push(d.div_x[j], sj * 2.0 * c * h2);
                let gx = p.x_field[j][0] * d.grad_c[j][0] + p.x_field[j][1] * d.grad_c[j][1];
                split.push(grad2, (1.0 - c * c) * (e * c * c - k) - sj * 2.0 * gx);
                cz.push_c(d.dz_c[j], 2.0 * I * p.f[j] * p.gamma[j].conj() / e2u - I * (p.h_norm / SQRT_2) * p.gamma[j]);
                fzb.push_c(d.dzbar_f[j], I * e * e2u * c * p.gamma[j] / 4.0);
                gzb.push_c(d.dzbar_gamma[j], -I * p.h_norm * c * e2u / SQRT_2);
                gnorm.push(p.gamma[j].norm_sqr(), e2u * (1.0 - c * c) / 2.0);
                theta_paths.push_c(p.theta[j], p.theta_def[j]);
            }
            kbar.push(p.kbar, p.kbar_tensor);
            kperp.push(p.kbar_perp, p.kbar_perp_tensor);
            gauss.push(k, p.k_gauss);
        }
        vec![
            hopf_norm.finish("hopf_norm", "|f_j|² = (e^{4u}/8)(|H|² − K + εC_j²)"),
            kgrad.finish(
                "kaehler_gradient",
                "|∇C_j|² + 4εe^{−4u}|θ_j|² = (1 − C_j² + 4ε|H|²)(ε(1 − C_j²)/4 + |H|² + εC_j² − K)",
            ),
            klap.finish("kaehler_laplacian", "ΔC_j = −C_j(4|H|² − 2K + ε(1 + C_j²))"),
            div.finish("divergence", "div X_j = (−1)^{j+1} 2C_j|H|²"),
            split.finish("gradient_split", "|∇C_j|² = (1 − C_j²)(εC_j² − K) + (−1)^j 2⟨∇C_j, X_j⟩"),
            cz.finish("compat_dc", "(C_j)_z = 2ie^{−2u} f_j γ̄_j − i(|H|/√2) γ_j"),
            fzb.finish("compat_df", "(f_j)_z̄ = iεe^{2u} C_j γ_j / 4"),
            gzb.finish("compat_dgamma", "(γ_j)_z̄ = −i|H| C_j e^{2u} / √2"),
            gnorm.finish("gamma_norm", "|γ_j|² = e^{2u}(1 − C_j²)/2"),
            theta_paths.finish("hopf_two_paths", "θ_j from f_j, γ_j = θ_j from σ, H ± iH̃"),
            kbar.finish("kbar_two_paths", "ε(C₁² + C₂²)/2 = sectional curvature of the tangent plane"),
            kperp.finish("kbar_perp_two_paths", "ε(C₁² − C₂²)/2 = R(e₁, e₂, H/|H|, H̃/|H|)"),
            gauss.finish("gauss_two_paths", "−e^{−2u}Δ₀u = K̄ + det σ / det g"),
        ]
    }
}

/// Holomorphy defect of a complex field on a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Holomorphy {
    /// `max |∂z̄ θ|` by second-order centered differences.
    pub max_dzbar: f64,
    /// `max_dzbar / (max |θ| + 1e−12)`.
    pub normalized: f64,
}

pub fn holomorphy_residual(grid: &Grid, field: &[C64]) -> Result<Holomorphy> {
    if grid.nx < 5 || grid.ny < 5 {
        return domain("holomorphy residual needs at least a 5×5 grid");
    }
    if field.len() != grid.len() {
        return Err(Error::Internal("field size does not match grid".into()));
    }
    let mut m = 0.0f64;
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            let fx = (field[grid.idx(i + 1, j)] - field[grid.idx(i - 1, j)]) / (2.0 * grid.hx);
            let fy = (field[grid.idx(i, j + 1)] - field[grid.idx(i, j - 1)]) / (2.0 * grid.hy);
            m = m.max((0.5 * (fx + I * fy)).norm());
        }
    }
    let big = field.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(Holomorphy { max_dzbar: m, normalized: m / (big + 1e-12) })
}

/// Invariants of a surface in `M²(ε)×ℝ` on a grid.
#[derive(Clone, Debug)]
pub struct CmcInvariants {
    pub grid: Grid,
    pub eps: Epsilon,
    pub points: Vec<CmcPoint>,
    /// Gauss curvature from `u` on nodes with two neighbours on each side.
    pub k: Vec<Option<f64>>,
}

pub fn analyze_cmc(eps: Epsilon, grid: &Grid, jets: &[JetSample], exec: Execution) -> Result<CmcInvariants> {
    if jets.len() != grid.len() {
        return Err(Error::Internal("jet count does not match grid".into()));
    }
    let points = try_map_range(exec, grid.len(), |k| cmc_point(eps, &jets[k]))?;
    let g = *grid;
    let k = (0..g.len())
        .map(|m| {
            let (i, j) = g.ij(m);
            g.is_inner(i, j).then(|| {
                let uxx = d2(|q| points[g.idx(q, j)].u, i, g.hx);
                let uyy = d2(|r| points[g.idx(i, r)].u, j, g.hy);
                -(-2.0 * points[m].u).exp() * (uxx + uyy)
            })
        })
        .collect();
    Ok(CmcInvariants { grid: g, eps, points, k })
}

impl CmcInvariants {
    pub fn max_over<F: Fn(&CmcPoint) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_over<F: Fn(&CmcPoint) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(f).fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> &CmcPoint {
        &self.points[self.grid.idx(self.grid.nx / 2, self.grid.ny / 2)]
    }

    pub fn theta_field(&self) -> Vec<C64> {
        self.points.iter().map(|p| p.theta_ar).collect()
    }

    pub fn theta_spread(&self) -> f64 {
        let c = self.center().theta_ar;
        self.max_over(|p| (p.theta_ar - c).norm())
    }

    pub fn h_spread(&self) -> f64 {
        self.max_over(|p| p.h) - self.min_over(|p| p.h)
    }
}

/// Abresch–Rosenberg field of a chart into `M²(ε)×ℝ` (or the universal
/// cover of `M²(ε)×S¹`), with its holomorphy defect.
pub fn abresch_rosenberg(
    chart: &ImmersionChart,
    grid: &Grid,
    mode: JetMode,
    exec: Execution,
) -> Result<(CmcInvariants, Holomorphy)> {
    if chart.target == Target::Product {
        return Err(Error::Usage("Abresch–Rosenberg differential needs a chart into M²(ε)×ℝ".into()));
    }
    let jets = chart_jets(chart, grid, mode, exec)?;
    let inv = analyze_cmc(chart.eps, grid, &jets, exec)?;
    let spread = inv.h_spread();
    if spread > 1e-6 * (1.0 + inv.center().h) {
        return Err(Error::Verification(format!("mean curvature varies by {spread:.3e}: not a CMC chart")));
    }
    let hol = holomorphy_residual(grid, &inv.theta_field())?;
    Ok((inv, hol))
}

/// Integrals over one fundamental domain of a doubly periodic chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusIntegrals {
    pub area: f64,
    pub int_c: [f64; 2],
    pub deg_phi: f64,
    pub deg_psi: f64,
}

/// Midpoint-rule integrals of `C_j dA` and of the factor Jacobians, which
/// converge spectrally for smooth periodic integrands.
pub fn torus_integrals(chart: &ImmersionChart, nx: usize, ny: usize, exec: Execution) -> Result<TorusIntegrals> {
    let Some((px, py)) = chart.periods else {
        return domain(format!("{} is not doubly periodic", chart.family));
    };
    if chart.target != Target::Product {
        return Err(Error::Usage("torus integrals need a chart into M²(ε)×M²(ε)".into()));
    }
    let (x0, y0) = (chart.domain.x0, chart.domain.y0);
    let (hx, hy) = (px / nx as f64, py / ny as f64);
    let vals = try_map_range(exec, nx * ny, |k| {
        let (i, j) = (k % nx, k / nx);
        let jet = sample_jet(chart, x0 + (i as f64 + 0.5) * hx, y0 + (j as f64 + 0.5) * hy, JetMode::Analytic)?;
        let p = pmc_point(chart.eps, &jet)?;
        let w = (2.0 * p.u).exp() * hx * hy;
        Ok::<_, Error>([w, p.c[0] * w, p.c[1] * w, p.jac_phi() * w, p.jac_psi() * w])
    })?;
    let s = vals.iter().fold([0.0; 5], |mut acc, v| {
        for k in 0..5 {
            acc[k] += v[k];
        }
        acc
    });
    Ok(TorusIntegrals { area: s[0], int_c: [s[1], s[2]], deg_phi: s[3] / (4.0 * PI), deg_psi: s[4] / (4.0 * PI) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::*;
    use crate::jet::Jet2;
    use crate::profile::{ClosedFormKind, ClosedFormProfile, ProfileParams};
    use std::sync::Arc;

    const EX: Execution = Execution::Parallel;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// A generic immersion into S²×S² with unequal Kähler functions, used
    /// for pointwise algebraic identities.
    fn generic_chart() -> ImmersionChart {
        let map = |x: f64, y: f64| {
            let (xj, yj) = (Jet2::var_x(x), Jet2::var_y(y));
            let t1 = xj + yj * 0.3 + (xj * yj) * 0.2;
            let t2 = yj * 1.1 - xj * 0.4 + xj * xj * 0.1;
            let s1 = xj * 0.7 + yj * yj * 0.15 + 0.4;
            let s2 = yj * 0.6 + xj * 0.5 - 0.3;
            [s1.sin() * t1.cos(), s1.sin() * t1.sin(), s1.cos(), s2.cos() * t2.cos(), s2.cos() * t2.sin(), s2.sin()]
        };
        ImmersionChart::new(
            "generic",
            Target::Product,
            Epsilon::Sphere,
            Rect::new(-0.3, 0.3, -0.3, 0.3).unwrap(),
            Arc::new(map),
        )
    }

    fn generic_hyperbolic_chart() -> ImmersionChart {
        let map = |x: f64, y: f64| {
            let (xj, yj) = (Jet2::var_x(x), Jet2::var_y(y));
            let r1 = xj * 0.8 + yj * 0.2 + 0.5;
            let t1 = yj + xj * yj * 0.3;
            let r2 = yj * 0.5 - xj * 0.3 + 0.7;
            let t2 = xj * 0.9 + yj * yj * 0.2;
            [
                r1.sinh() * t1.cos(),
                r1.sinh() * t1.sin(),
                r1.cosh(),
                r2.sinh() * t2.cos(),
                r2.sinh() * t2.sin(),
                r2.cosh(),
            ]
        };
        ImmersionChart::new(
            "generic_h",
            Target::Product,
            Epsilon::Hyperbolic,
            Rect::new(-0.3, 0.3, -0.3, 0.3).unwrap(),
            Arc::new(map),
        )
    }

    #[test]
    fn fourth_order_stencils() {
        let f = |x: f64| (1.3 * x).sin() + x * x * x;
        let h = 0.01;
        let n = 9;
        let xs: Vec<f64> = (0..n).map(|i| 0.2 + h * i as f64).collect();
        for i in 0..n {
            let d = d1(|k| f(xs[k]), n, i, h);
            let exact = 1.3 * (1.3 * xs[i]).cos() + 3.0 * xs[i] * xs[i];
            assert!((d - exact).abs() < 1e-8, "i={i}: {d} vs {exact}");
        }
        let d = d2(|k| f(xs[k]), 4, h);
        assert!((d - (-1.69 * (1.3 * xs[4]).sin() + 6.0 * xs[4])).abs() < 1e-8);
    }

    /// Conformal immersion `(S(w₁(z)), S(w₂(z̄)))` built from inverse
    /// stereographic (or Poincaré disk) projections of polynomials, so one
    /// Kähler function is ±1 and the other varies.
    /// Two surfaces of revolution, `φ = (S(s₁) cos y, S(s₁) sin y, C(s₁))`
    /// and `ψ = (S(s₂) cos λy, S(s₂) sin λy, C(s₂))` with `S, C` the sine and
    /// cosine of the space form, whose profiles are tied so that the product
    /// is conformal: `s₁′² + s₂′² = S(s₁)² + λ²S(s₂)²`.
    fn conformal_pair(eps: Epsilon) -> ImmersionChart {
        const LAMBDA: f64 = 0.7;
        const SLOPE: f64 = 0.3;
        let sc = move |s: f64| match eps {
            Epsilon::Sphere => (s.sin(), s.cos()),
            Epsilon::Hyperbolic => (s.sinh(), s.cosh()),
        };
        let s1 = |x: f64| 1.0 + SLOPE * x;
        let rhs = move |x: f64, s2: f64| {
            let (a, b) = (sc(s1(x)).0, sc(s2).0);
            (a * a + LAMBDA * LAMBDA * b * b - SLOPE * SLOPE).sqrt()
        };
        let profile = move |x: f64| {
            let n = 400;
            let h = x / n as f64;
            let mut s2 = 0.8;
            for k in 0..n {
                let t = k as f64 * h;
                let k1 = rhs(t, s2);
                let k2 = rhs(t + h / 2.0, s2 + h * k1 / 2.0);
                let k3 = rhs(t + h / 2.0, s2 + h * k2 / 2.0);
                let k4 = rhs(t + h, s2 + h * k3);
                s2 += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            }
            let d1 = rhs(x, s2);
            let ((a, ca), (b, cb)) = (sc(s1(x)), sc(s2));
            let d2 = a * ca * SLOPE / d1 + LAMBDA * LAMBDA * b * cb;
            (s2, d1, d2)
        };
        let rev = move |s: Jet2, turn: Jet2| match eps {
            Epsilon::Sphere => [s.sin() * turn.cos(), s.sin() * turn.sin(), s.cos()],
            Epsilon::Hyperbolic => [s.sinh() * turn.cos(), s.sinh() * turn.sin(), s.cosh()],
        };
        let map = move |x: f64, y: f64| {
            let (xj, yj) = (Jet2::var_x(x), Jet2::var_y(y));
            let (s2, d1, d2) = profile(x);
            let a = rev(xj * SLOPE + 1.0, yj);
            let b = rev(xj.compose(s2, d1, d2), yj * LAMBDA);
            [a[0], a[1], a[2], b[0], b[1], b[2]]
        };
        ImmersionChart::new("pair", Target::Product, eps, Rect::new(-0.5, 0.5, -0.5, 0.5).unwrap(), Arc::new(map))
    }

    #[test]
    fn frame_identities_on_generic_surfaces() {
        for chart in [generic_chart(), generic_hyperbolic_chart()] {
            for (x, y) in [(0.0, 0.0), (0.1, -0.2), (-0.25, 0.15)] {
                let jet = sample_jet(&chart, x, y, JetMode::Analytic).unwrap();
                let p = pmc_point(chart.eps, &jet).unwrap();
                assert!(p.conformal_defect > 1e-2);
                assert!(p.frame_defect < 1e-12);
                assert!(p.x_defect < 1e-10, "x_defect {}", p.x_defect);
                assert!(close(p.kbar, p.kbar_tensor, 1e-12), "{} vs {}", p.kbar, p.kbar_tensor);
                assert!(close(p.kbar_perp, p.kbar_perp_tensor, 1e-12), "{} vs {}", p.kbar_perp, p.kbar_perp_tensor);
                assert!(p.c[0].abs() > 1e-3 && (p.c[0].abs() - p.c[1].abs()).abs() > 1e-3);
                for j in 0..2 {
                    assert!(p.c[j].abs() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn frenet_coupling_terms_on_conformal_surfaces() {
        let p4 = ProfileParams::new(Epsilon::Hyperbolic, -2.0, 1.0, 0.3).unwrap();
        let h = Arc::new(crate::profile::solve_profile(p4, 0.0, 1.0, (-0.5, 0.5), 0.001).unwrap());
        let charts = [
            conformal_pair(Epsilon::Sphere),
            conformal_pair(Epsilon::Hyperbolic),
            pmc_profile_family(h, (-1.0, 1.0)).unwrap(),
        ];
        for chart in charts {
            for (x, y) in [(0.0, 0.0), (0.1, -0.2), (-0.25, 0.15)] {
                let jet = sample_jet(&chart, x, y, JetMode::Analytic).unwrap();
                let p = pmc_point(chart.eps, &jet).unwrap();
                let e2u = (2.0 * p.u).exp();
                assert!(p.conformal_defect < 1e-12, "{}", p.conformal_defect);
                assert!(p.x_defect < 1e-10);
                for j in 0..2 {
                    assert!((p.theta[j] - p.theta_def[j]).norm() < 1e-12);
                    assert!(close(p.gamma[j].norm_sqr(), e2u * (1.0 - p.c[j] * p.c[j]) / 2.0, 1e-12));
                }
                assert!(
                    (p.hat_zz - p.gamma[0] * p.gamma[1]).norm() < 1e-12,
                    "{} vs {}",
                    p.hat_zz,
                    p.gamma[0] * p.gamma[1]
                );
                assert!(
                    close(p.hat_zzbar, e2u * p.c[0] * p.c[1] / 2.0, 1e-12),
                    "{} vs {}",
                    p.hat_zzbar,
                    e2u * p.c[0] * p.c[1] / 2.0
                );
                assert!(
                    (p.xi_hat_z[0] - (-I * p.c[0] * p.gamma[1])).norm() < 1e-12,
                    "{} vs {}",
                    p.xi_hat_z[0],
                    -I * p.c[0] * p.gamma[1]
                );
                assert!(
                    (p.xi_hat_z[1] - (-I * p.c[1] * p.gamma[0])).norm() < 1e-12,
                    "{} vs {}",
                    p.xi_hat_z[1],
                    -I * p.c[1] * p.gamma[0]
                );
            }
        }
    }

    #[test]
    fn numeric_jets_converge_to_analytic() {
        let (torus, _) = cmc_torus(2.0, 1.0).unwrap();
        let chart = geodesic_inclusion(&torus).unwrap();
        let (x, y) = (1.1, 2.3);
        let a = sample_jet(&chart, x, y, JetMode::Analytic).unwrap();
        let err = |h: f64| {
            let n = sample_jet(&chart, x, y, JetMode::FiniteDifference(h)).unwrap();
            let mut m = 0.0f64;
            for (u, v) in [(a.px, n.px), (a.py, n.py), (a.pxx, n.pxx), (a.pxy, n.pxy), (a.pyy, n.pyy)] {
                for k in 0..6 {
                    m = m.max((u[k] - v[k]).abs());
                }
            }
            m
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 < 5e-4 && e2 < e1 / 3.5, "{e1} {e2}");
    }

    #[test]
    fn sample_jet_rejects_boundary() {
        let chart = product_of_curves(Epsilon::Sphere, 1.0, 1.0).unwrap();
        assert!(sample_jet(&chart, 1.0, 0.0, JetMode::FiniteDifference(1e-3)).is_err());
    }

    #[test]
    fn products_of_circles() {
        let chart = product_of_curves(Epsilon::Sphere, 1.0, 1.0).unwrap();
        let grid = Grid::new(chart.domain, 21, 21).unwrap();
        let inv = analyze_chart(&chart, &grid, JetMode::Analytic, EX).unwrap();
        let p = inv.center();
        assert!(p.u.abs() < 1e-14 && p.c[0].abs() < 1e-14 && p.c[1].abs() < 1e-14);
        assert!(close(p.h_norm * p.h_norm, 0.5, 1e-14));
        for j in 0..2 {
            assert!(close(p.theta[j].norm(), 0.75, 1e-12), "{}", p.theta[j]);
        }
        assert!(inv.parallelism() < 1e-10);
        for r in inv.identity_residuals() {
            assert!(r.value < 1e-8, "{r:?}");
        }
        // H = (k_α/2)(Jα', 0) + (k_β/2)(0, Jβ').
        let jet = sample_jet(&chart, 0.2, -0.1, JetMode::Analytic).unwrap();
        let q = pmc_point(chart.eps, &jet).unwrap();
        let ja = crate::ambient::j6(chart.eps, 1, &jet.p, &[jet.px[0], jet.px[1], jet.px[2], 0.0, 0.0, 0.0]);
        let jb = crate::ambient::j6(chart.eps, 1, &jet.p, &[0.0, 0.0, 0.0, jet.py[3], jet.py[4], jet.py[5]]);
        for k in 0..6 {
            assert!(close(q.h[k], 0.5 * ja[k] + 0.5 * jb[k], 1e-12), "{:?}", q.h);
        }
        assert!(jet.pxy.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invariant_pmc_hyperbolic_member() {
        let p = ProfileParams::new(Epsilon::Hyperbolic, -2.0, 1.0, 0.0).unwrap();
        let h = Arc::new(ClosedFormProfile::new(ClosedFormKind::Sinh, p, (-1.0, 1.0)).unwrap());
        let chart = pmc_profile_family(h, (-1.0, 1.0)).unwrap();
        let grid = Grid::new(chart.domain, 41, 41).unwrap();
        let inv = analyze_chart(&chart, &grid, JetMode::Analytic, EX).unwrap();
        assert!(inv.conformal_defect() < 1e-9);
        assert!(inv.parallelism() < 1e-5, "{}", inv.parallelism());
        for q in &inv.points {
            assert!(close(q.h_norm * q.h_norm, 0.25, 1e-9));
            assert!(close(q.c[0], q.c[1], 1e-9));
            for j in 0..2 {
                assert!((q.theta[j] - C64::new(0.25, 0.0)).norm() < 1e-7, "{}", q.theta[j]);
            }
        }
        // The metric 2cosh²x (dx² + dy²) has K(0) = −1/2.
        let k0 = inv.derived[grid.idx(20, 20)].unwrap().k;
        assert!(close(k0, -0.5, 1e-4), "{k0}");
        for r in inv.identity_residuals() {
            assert!(r.value < 1e-5, "{r:?}");
        }
    }

    #[test]
    fn holomorphy_witnesses() {
        let grid = Grid::new(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 11, 11).unwrap();
        let konst = vec![C64::new(0.3, -0.2); grid.len()];
        assert_eq!(holomorphy_residual(&grid, &konst).unwrap().max_dzbar, 0.0);
        let zbar: Vec<C64> = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                C64::new(grid.x(i), -grid.y(j))
            })
            .collect();
        assert!(close(holomorphy_residual(&grid, &zbar).unwrap().max_dzbar, 1.0, 1e-12));
        let small = Grid::new(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 5, 5).unwrap();
        assert!(holomorphy_residual(&small, &[C64::default(); 16]).is_err());
    }

    #[test]
    fn abresch_rosenberg_on_closed_forms() {
        let (torus, _) = cmc_torus(2.0, 1.0).unwrap();
        let grid = Grid::new(torus.domain, 21, 21).unwrap();
        let (inv, _) = abresch_rosenberg(&torus, &grid, JetMode::Analytic, EX).unwrap();
        for q in &inv.points {
            assert!((q.theta_ar - C64::new(3.0 / 32.0, 0.0)).norm() < 1e-10, "{}", q.theta_ar);
            assert!(close(q.h, 0.5, 1e-10));
        }
        let chart = psi_lambda(1.0).unwrap();
        let grid = Grid::new(chart.domain, 21, 21).unwrap();
        let (inv, _) = abresch_rosenberg(&chart, &grid, JetMode::Analytic, EX).unwrap();
        assert!((inv.center().theta_ar - C64::new(0.125, 0.0)).norm() < 1e-10, "{}", inv.center().theta_ar);
        let chart = leite(0.25).unwrap();
        let grid = Grid::new(chart.domain, 21, 21).unwrap();
        let (inv, _) = abresch_rosenberg(&chart, &grid, JetMode::Analytic, EX).unwrap();
        assert!(inv.max_over(|q| q.theta_ar.norm()) < 1e-10);
        assert!(inv.points.iter().all(|q| close(q.k_gauss, -0.75, 1e-9)));
    }

    #[test]
    fn sampled_surface_jets() {
        let chart = pmc_phi0(0.25).unwrap();
        let grid = Grid::new(chart.domain, 81, 81).unwrap();
        let points = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                chart.point(grid.x(i), grid.y(j)).unwrap()
            })
            .collect();
        let s = SampledSurface { grid, eps: chart.eps, target: Target::Product, points };
        let (inner, jets) = s.jets().unwrap();
        let inv = analyze_pmc(chart.eps, &inner, &jets, EX).unwrap();
        let err = inv.max_over(|q| (q.c[0] * q.c[0] - 0.75).abs());
        assert!(err < 2e-5, "{err}");
    }
}
