//! Curves in `M²(ε)`: closed-form curves of constant geodesic curvature and
//! numerical reconstruction of a curve from prescribed speed and curvature.
//!
//! Curvature is signed by `k = ⟨ψ'', Jψ'⟩ / |ψ'|³`.

use std::sync::Arc;

use crate::ambient::{dot3, j3, tangent_part3, Epsilon, FactorPoint, Vec3};
use crate::error::{domain, Error, Result};
use crate::jet::Jet2;

/// Point, first and second derivative of a curve at one parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveJet {
    pub p: Vec3,
    pub d1: Vec3,
    pub d2: Vec3,
}

impl CurveJet {
    pub fn curvature(&self, eps: Epsilon) -> f64 {
        let n = dot3(eps, &self.d1, &self.d1).sqrt();
        dot3(eps, &self.d2, &j3(eps, &self.p, &self.d1)) / (n * n * n)
    }
}

/// `S₁(t) = ∫ C`, `S₂(t) = ∫ S₁` and `C(t)` for `C'' = −w C`, `C(0) = 1`.
fn trig_like(w: f64, t: f64) -> (f64, f64, f64) {
    if (w * t * t).abs() < 1e-9 {
        let t2 = t * t;
        return (t - w * t * t2 / 6.0, t2 / 2.0 - w * t2 * t2 / 24.0, 1.0 - w * t2 / 2.0);
    }
    if w > 0.0 {
        let om = w.sqrt();
        let half = (0.5 * om * t).sin();
        ((om * t).sin() / om, 2.0 * half * half / w, (om * t).cos())
    } else {
        let om = (-w).sqrt();
        let half = (0.5 * om * t).sinh();
        ((om * t).sinh() / om, -2.0 * half * half / w, (om * t).cosh())
    }
}

/// Unit-speed curve of constant curvature `k` through `p0` with unit tangent `t0`:
/// `ψ(t) = p0 + t0 S₁(t) + (k N0 − ε p0) S₂(t)` with `N0 = J t0` and `ω² = k² + ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantCurvatureCurve {
    pub eps: Epsilon,
    pub k: f64,
    pub p0: Vec3,
    pub t0: Vec3,
    accel: Vec3,
}

impl ConstantCurvatureCurve {
    pub fn new(eps: Epsilon, k: f64, p0: Vec3, t0: Vec3) -> Result<Self> {
        let fp = FactorPoint::new(eps, p0)?;
        if dot3(eps, &p0, &t0).abs() > 1e-10 || (dot3(eps, &t0, &t0) - 1.0).abs() > 1e-10 {
            return domain("initial tangent must be a unit vector tangent at p0");
        }
        let n0 = j3(eps, &fp.coords, &t0);
        let e = eps.value();
        let accel = std::array::from_fn(|i| k * n0[i] - e * p0[i]);
        Ok(Self { eps, k, p0, t0, accel })
    }

    /// Starts at the model center `(0,0,1)` heading along `(1,0,0)`.
    pub fn canonical(eps: Epsilon, k: f64) -> Self {
        Self::new(eps, k, eps.center(), [1.0, 0.0, 0.0]).expect("canonical frame is valid")
    }

    pub fn point(&self, t: f64) -> Vec3 {
        let (s1, s2, _) = trig_like(self.w(), t);
        std::array::from_fn(|i| self.p0[i] + self.t0[i] * s1 + self.accel[i] * s2)
    }

    fn w(&self) -> f64 {
        self.k * self.k + self.eps.value()
    }

    /// Components of the curve evaluated along a jet-valued parameter.
    pub fn along(&self, t: Jet2) -> [Jet2; 3] {
        let w = self.w();
        let (s1, s2, c) = trig_like(w, t.v);
        let j1 = t.compose(s1, c, -w * s1);
        let j2 = t.compose(s2, s1, c);
        std::array::from_fn(|i| j1 * self.t0[i] + j2 * self.accel[i] + self.p0[i])
    }

    pub fn jet(&self, t: f64) -> CurveJet {
        let c = self.along(Jet2::var_x(t));
        CurveJet { p: c.map(|j| j.v), d1: c.map(|j| j.dx), d2: c.map(|j| j.dxx) }
    }
}

/// Arclength-parametrized curve of constant curvature `k` from the canonical frame.
pub fn constant_curvature_curve(eps: Epsilon, k: f64, x: f64) -> FactorPoint {
    let p = ConstantCurvatureCurve::canonical(eps, k).point(x);
    FactorPoint { coords: p, eps }
}

/// The constant-curvature curves used to build products of curves, each
/// realized on the level set that names it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CatalogCurve {
    /// Circle `x₃ = a` of S², `0 ≤ a < 1`.
    SphereCircle(f64),
    /// Geodesic circle `x₃ = a` of H², `a > 1`.
    HyperbolicCircle(f64),
    /// Hypercycle `x₁ = b` of H².
    Hypercycle(f64),
    /// Horocycle `x₁ − x₃ = −1` of H².
    Horocycle,
    /// Great circle or hyperbolic geodesic through the center.
    Geodesic(Epsilon),
}

impl CatalogCurve {
    pub fn eps(&self) -> Epsilon {
        match self {
            CatalogCurve::SphereCircle(_) => Epsilon::Sphere,
            CatalogCurve::Geodesic(e) => *e,
            _ => Epsilon::Hyperbolic,
        }
    }

    pub fn curvature(&self) -> Result<f64> {
        match *self {
            CatalogCurve::SphereCircle(a) if (0.0..1.0).contains(&a) => Ok(a / (1.0 - a * a).sqrt()),
            CatalogCurve::HyperbolicCircle(a) if a > 1.0 => Ok(a / (a * a - 1.0).sqrt()),
            CatalogCurve::Hypercycle(b) => Ok(b / (1.0 + b * b).sqrt()),
            CatalogCurve::Horocycle => Ok(1.0),
            CatalogCurve::Geodesic(_) => Ok(0.0),
            other => domain(format!("{other:?} is outside its parameter range")),
        }
    }

    pub fn curve(&self) -> Result<ConstantCurvatureCurve> {
        let k = self.curvature()?;
        let eps = self.eps();
        let e2 = [0.0, 1.0, 0.0];
        match *self {
            CatalogCurve::SphereCircle(a) => ConstantCurvatureCurve::new(eps, k, [(1.0 - a * a).sqrt(), 0.0, a], e2),
            CatalogCurve::HyperbolicCircle(a) => {
                ConstantCurvatureCurve::new(eps, k, [(a * a - 1.0).sqrt(), 0.0, a], e2)
            }
            CatalogCurve::Hypercycle(b) => ConstantCurvatureCurve::new(eps, k, [b, 0.0, (1.0 + b * b).sqrt()], e2),
            CatalogCurve::Horocycle => ConstantCurvatureCurve::new(eps, k, eps.center(), [0.0, -1.0, 0.0]),
            CatalogCurve::Geodesic(_) => Ok(ConstantCurvatureCurve::canonical(eps, 0.0)),
        }
    }
}

pub type SpeedFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;
pub type CurvatureFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A curve prescribed by speed `s(x)` (with `s'(x)`) and curvature `k(x)`,
/// anchored at `x_start` with point `p0` and unit tangent `t0`.
#[derive(Clone)]
pub struct CurveSpec {
    pub eps: Epsilon,
    pub speed: SpeedFn,
    pub curvature: CurvatureFn,
    pub p0: FactorPoint,
    pub t0: Vec3,
    pub x_start: f64,
}

impl CurveSpec {
    pub fn validate(&self) -> Result<()> {
        let e = self.eps;
        if self.p0.eps != e {
            return Err(Error::Usage("curve point and spec have different ε".into()));
        }
        if dot3(e, &self.p0.coords, &self.t0).abs() > 1e-10 || (dot3(e, &self.t0, &self.t0) - 1.0).abs() > 1e-10 {
            return domain("initial tangent must be a unit vector tangent at p0");
        }
        Ok(())
    }

    fn rhs(&self, x: f64, s: &[f64; 9]) -> [f64; 9] {
        let (v, _) = (self.speed)(x);
        let k = (self.curvature)(x);
        let e = self.eps.value();
        let mut out = [0.0; 9];
        for i in 0..3 {
            out[i] = v * s[3 + i];
            out[3 + i] = v * (k * s[6 + i] - e * s[i]);
            out[6 + i] = -v * k * s[3 + i];
        }
        out
    }

    fn rk4(&self, x: f64, s: &[f64; 9], h: f64) -> [f64; 9] {
        let add = |a: &[f64; 9], b: &[f64; 9], t: f64| -> [f64; 9] { std::array::from_fn(|i| a[i] + t * b[i]) };
        let k1 = self.rhs(x, s);
        let k2 = self.rhs(x + 0.5 * h, &add(s, &k1, 0.5 * h));
        let k3 = self.rhs(x + 0.5 * h, &add(s, &k2, 0.5 * h));
        let k4 = self.rhs(x + h, &add(s, &k3, h));
        std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }

    /// Projects the state back onto the quadric and re-orthonormalizes the frame.
    fn renormalize(&self, s: &[f64; 9]) -> [f64; 9] {
        let e = self.eps;
        let mut p = [s[0], s[1], s[2]];
        let n = (e.value() * dot3(e, &p, &p)).sqrt();
        p = p.map(|c| c / n);
        let mut t = tangent_part3(e, &p, &[s[3], s[4], s[5]]);
        let tn = dot3(e, &t, &t).sqrt();
        t = t.map(|c| c / tn);
        let nn = j3(e, &p, &t);
        [p[0], p[1], p[2], t[0], t[1], t[2], nn[0], nn[1], nn[2]]
    }

    fn jet_from_state(&self, x: f64, s: &[f64; 9]) -> CurveJet {
        let (v, dv) = (self.speed)(x);
        let k = (self.curvature)(x);
        let e = self.eps.value();
        CurveJet {
            p: [s[0], s[1], s[2]],
            d1: std::array::from_fn(|i| v * s[3 + i]),
            d2: std::array::from_fn(|i| dv * s[3 + i] + v * v * (k * s[6 + i] - e * s[i])),
        }
    }
}

/// A curve integrated on a uniform grid, with dense evaluation by one
/// Runge–Kutta step from the nearest node.
#[derive(Clone)]
pub struct SampledCurve {
    pub spec: CurveSpec,
    pub x0: f64,
    pub step: f64,
    /// `(ψ, T, N)` at each node.
    pub states: Vec<[f64; 9]>,
}

impl SampledCurve {
    pub fn span(&self) -> (f64, f64) {
        (self.x0, self.x0 + self.step * (self.states.len() - 1) as f64)
    }

    pub fn jet(&self, x: f64) -> CurveJet {
        let n = self.states.len();
        let i = ((x - self.x0) / self.step).round().clamp(0.0, (n - 1) as f64) as usize;
        let xi = self.x0 + self.step * i as f64;
        let s = if x == xi { self.states[i] } else { self.spec.rk4(xi, &self.states[i], x - xi) };
        self.spec.jet_from_state(x, &s)
    }

    pub fn point(&self, x: f64) -> Vec3 {
        self.jet(x).p
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,x1,x2,x3\n");
        for (i, s) in self.states.iter().enumerate() {
            let x = self.x0 + self.step * i as f64;
            out.push_str(&format!("{x:.12e},{:.12e},{:.12e},{:.12e}\n", s[0], s[1], s[2]));
        }
        out
    }
}

/// Integrates `ψ' = sT, T' = s(kN − εψ), N' = −skT` with `N = JT` over
/// `x_span`, starting from the spec's anchor.
pub fn integrate_curve(spec: CurveSpec, x_span: (f64, f64), step: f64) -> Result<SampledCurve> {
    spec.validate()?;
    let (a, b) = x_span;
    if !(a <= spec.x_start && spec.x_start <= b) || !(step > 0.0) {
        return Err(Error::Usage(format!(
            "curve anchor {} must lie in {x_span:?} and step must be positive",
            spec.x_start
        )));
    }
    let n_fwd = ((b - spec.x_start) / step).ceil() as usize;
    let n_bwd = ((spec.x_start - a) / step).ceil() as usize;
    let p0 = spec.p0.coords;
    let n0 = j3(spec.eps, &p0, &spec.t0);
    let s0 = [p0[0], p0[1], p0[2], spec.t0[0], spec.t0[1], spec.t0[2], n0[0], n0[1], n0[2]];
    let check_speed = |x: f64| -> Result<()> {
        let v = (spec.speed)(x).0;
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            domain(format!("curve speed must be positive, got {v} at x = {x}"))
        }
    };
    let run = |dir: f64, n: usize| -> Result<Vec<[f64; 9]>> {
        let mut out = Vec::with_capacity(n);
        let mut s = s0;
        for i in 0..n {
            let x = spec.x_start + dir * step * i as f64;
            check_speed(x)?;
            s = spec.renormalize(&spec.rk4(x, &s, dir * step));
            out.push(s);
        }
        Ok(out)
    };
    check_speed(spec.x_start)?;
    let fwd = run(1.0, n_fwd)?;
    let bwd = run(-1.0, n_bwd)?;
    let mut states = Vec::with_capacity(n_fwd + n_bwd + 1);
    states.extend(bwd.iter().rev());
    states.push(s0);
    states.extend(fwd);
    Ok(SampledCurve { x0: spec.x_start - step * n_bwd as f64, step, states, spec })
}
