//! Constructors for the explicit surfaces: products of curves, the invariant
//! profile families in `M²(ε)×M²(ε)` and `M²(ε)×ℝ`, the tori in `S²×S¹`,
//! the closed-form hyperbolic examples, and the totally geodesic inclusion of
//! `M²(ε)×ℝ` into `M²(ε)×M²(ε)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use crate::ambient::{dot3, Epsilon, FactorPoint, Vec3, Vec6};
use crate::curves::{integrate_curve, CatalogCurve, ConstantCurvatureCurve, CurveSpec, SampledCurve};
use crate::elliptic;
use crate::error::{domain, Error, Result};
use crate::jet::Jet2;
use crate::profile::{
    check_restrictions, solve_profile, ClosedFormKind, ClosedFormProfile, Primitive, ProfileParams, ProfileSource,
};

/// Jet-valued chart map. Product charts fill all six slots; charts into
/// `M²(ε)×ℝ` use `(ψ₁, ψ₂, ψ₃, η)` and leave the last two zero.
pub type JetMap = dyn Fn(f64, f64) -> [Jet2; 6] + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Product,
    FactorTimesLine,
    /// `M²(ε)×S¹(r)`, evaluated on the universal cover `M²(ε)×ℝ`.
    FactorTimesCircle(f64),
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Product => 6,
            _ => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Usage(format!("degenerate domain [{x0},{x1}]×[{y0},{y1}]")));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-12 * (1.0 + self.x1.abs().max(self.x0.abs()) + self.y1.abs().max(self.y0.abs()));
        x >= self.x0 - tol && x <= self.x1 + tol && y >= self.y0 - tol && y <= self.y1 + tol
    }

    pub fn intersect(&self, o: &Rect) -> Result<Rect> {
        Rect::new(self.x0.max(o.x0), self.x1.min(o.x1), self.y0.max(o.y0), self.y1.min(o.y1))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.x1, self.y0, self.y1)
    }
}

#[derive(Clone)]
pub struct ImmersionChart {
    pub family: String,
    pub params: Vec<(String, f64)>,
    pub notes: Vec<String>,
    pub target: Target,
    pub eps: Epsilon,
    pub domain: Rect,
    /// Periods in x and y when the chart is doubly periodic.
    pub periods: Option<(f64, f64)>,
    /// True when jets come from closed formulas rather than integrated data.
    pub closed_form: bool,
    map: Arc<JetMap>,
}

impl fmt::Debug for ImmersionChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImmersionChart")
            .field("family", &self.family)
            .field("params", &self.params)
            .field("target", &self.target)
            .field("eps", &self.eps)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ImmersionChart {
    pub fn new(family: impl Into<String>, target: Target, eps: Epsilon, domain: Rect, map: Arc<JetMap>) -> Self {
        Self {
            family: family.into(),
            params: Vec::new(),
            notes: Vec::new(),
            target,
            eps,
            domain,
            periods: None,
            closed_form: true,
            map,
        }
    }

    pub fn with_param(mut self, k: &str, v: f64) -> Self {
        self.params.push((k.to_string(), v));
        self
    }

    pub fn with_note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    pub fn with_domain(mut self, d: Rect) -> Self {
        self.domain = d;
        self
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// Jet at `(x, y)` without the domain check.
    #[inline]
    pub fn jet_unchecked(&self, x: f64, y: f64) -> [Jet2; 6] {
        (self.map)(x, y)
    }

    pub fn jet(&self, x: f64, y: f64) -> Result<[Jet2; 6]> {
        if !self.domain.contains(x, y) {
            return domain(format!("({x}, {y}) lies outside the chart domain {}", self.domain));
        }
        Ok((self.map)(x, y))
    }

    pub fn point(&self, x: f64, y: f64) -> Result<Vec6> {
        Ok(self.jet(x, y)?.map(|j| j.v))
    }

    /// Point on `M²(ε)×S¹(r)` in ℝ⁵ for circle targets, `(ψ, r cos(η/r), r sin(η/r))`.
    pub fn circle_point(&self, x: f64, y: f64) -> Result<[f64; 5]> {
        let Target::FactorTimesCircle(r) = self.target else {
            return Err(Error::Usage("circle_point needs a circle target".into()));
        };
        let p = self.point(x, y)?;
        Ok([p[0], p[1], p[2], r * (p[3] / r).cos(), r * (p[3] / r).sin()])
    }

    /// Largest deviation from the model quadric(s) at `(x, y)`.
    pub fn manifold_defect(&self, x: f64, y: f64) -> Result<f64> {
        let p = self.point(x, y)?;
        let e = self.eps;
        let a = [p[0], p[1], p[2]];
        let mut d = (dot3(e, &a, &a) - e.value()).abs();
        if e == Epsilon::Hyperbolic && a[2] <= 0.0 {
            d = f64::INFINITY;
        }
        if self.target == Target::Product {
            let b = [p[3], p[4], p[5]];
            d = d.max((dot3(e, &b, &b) - e.value()).abs());
            if e == Epsilon::Hyperbolic && b[2] <= 0.0 {
                d = f64::INFINITY;
            }
        }
        Ok(d)
    }

    /// The chart precomposed with `(x, y) ↦ (ox + sx·x, oy + sy·y)`, on the
    /// preimage of the current domain.
    pub fn affine_reparametrized(&self, sx: f64, sy: f64, ox: f64, oy: f64) -> Result<Self> {
        if sx == 0.0 || sy == 0.0 {
            return Err(Error::Usage("reparametrization scale must be nonzero".into()));
        }
        let d = self.domain;
        let (xa, xb) = ((d.x0 - ox) / sx, (d.x1 - ox) / sx);
        let (ya, yb) = ((d.y0 - oy) / sy, (d.y1 - oy) / sy);
        let inner = self.map.clone();
        let map = move |x: f64, y: f64| {
            inner(ox + sx * x, oy + sy * y).map(|j| Jet2 {
                v: j.v,
                dx: sx * j.dx,
                dy: sy * j.dy,
                dxx: sx * sx * j.dxx,
                dxy: sx * sy * j.dxy,
                dyy: sy * sy * j.dyy,
            })
        };
        let mut out = self.clone();
        out.map = Arc::new(map);
        out.domain = Rect::new(xa.min(xb), xa.max(xb), ya.min(yb), ya.max(yb))?;
        out.periods = self.periods.map(|(px, py)| (px / sx.abs(), py / sy.abs()));
        Ok(out)
    }

    /// Replaces the map by `f` applied to the current jets; used for
    /// perturbations and ambient isometries.
    pub fn post_composed(&self, name: &str, f: impl Fn([Jet2; 6]) -> [Jet2; 6] + Send + Sync + 'static) -> Self {
        let inner = self.map.clone();
        let mut out = self.clone();
        out.map = Arc::new(move |x, y| f(inner(x, y)));
        out.family = format!("{}+{}", self.family, name);
        out
    }
}

fn jx(v: [f64; 3]) -> Jet2 {
    Jet2 { v: v[0], dx: v[1], dxx: v[2], ..Jet2::default() }
}

fn curve_jets(c: &SampledCurve, x: f64) -> [Jet2; 3] {
    let j = c.jet(x);
    std::array::from_fn(|i| jx([j.p[i], j.d1[i], j.d2[i]]))
}

fn join(a: [Jet2; 3], b: [Jet2; 3]) -> [Jet2; 6] {
    [a[0], a[1], a[2], b[0], b[1], b[2]]
}

fn join_line(a: [Jet2; 3], t: Jet2) -> [Jet2; 6] {
    [a[0], a[1], a[2], t, Jet2::default(), Jet2::default()]
}

/// Default y-extent for charts that are invariant or unbounded in y.
pub const DEFAULT_Y_SPAN: (f64, f64) = (-1.0, 1.0);

/// `Φ(x, y) = (α(x), β(y))` for unit-speed curves of constant curvature.
pub fn product_of_curves(eps: Epsilon, k_alpha: f64, k_beta: f64) -> Result<ImmersionChart> {
    if k_alpha == 0.0 && k_beta == 0.0 {
        return Err(Error::Domain("both curves are geodesics: the product is minimal, H null".into()));
    }
    let a = ConstantCurvatureCurve::canonical(eps, k_alpha);
    let b = ConstantCurvatureCurve::canonical(eps, k_beta);
    Ok(product_chart(eps, a, b).with_param("k_alpha", k_alpha).with_param("k_beta", k_beta))
}

/// Product of two catalog curves, each realized on its named level set.
pub fn product_of_catalog(alpha: CatalogCurve, beta: CatalogCurve) -> Result<ImmersionChart> {
    if alpha.eps() != beta.eps() {
        return Err(Error::Usage("catalog curves live in different models".into()));
    }
    let (a, b) = (alpha.curve()?, beta.curve()?);
    if a.k == 0.0 && b.k == 0.0 {
        return Err(Error::Domain("both curves are geodesics: the product is minimal, H null".into()));
    }
    Ok(product_chart(alpha.eps(), a, b)
        .with_param("k_alpha", a.k)
        .with_param("k_beta", b.k)
        .with_note(format!("alpha = {alpha:?}, beta = {beta:?}")))
}

fn product_chart(eps: Epsilon, a: ConstantCurvatureCurve, b: ConstantCurvatureCurve) -> ImmersionChart {
    let map = move |x: f64, y: f64| join(a.along(Jet2::var_x(x)), b.along(Jet2::var_y(y)));
    let d = Rect { x0: -1.0, x1: 1.0, y0: -1.0, y1: 1.0 };
    ImmersionChart::new("product", Target::Product, eps, d, Arc::new(map))
}

/// Product tori `x₃ = a, y₃ = â` in S²×S².
pub fn example_sphere_torus(a: f64, a_hat: f64) -> Result<ImmersionChart> {
    product_of_catalog(CatalogCurve::SphereCircle(a), CatalogCurve::SphereCircle(a_hat))
}

/// Cylinder `x₃ = a` times horocycle in H²×H².
pub fn example_circle_horocycle(a: f64) -> Result<ImmersionChart> {
    product_of_catalog(CatalogCurve::HyperbolicCircle(a), CatalogCurve::Horocycle)
}

/// Product of two horocycles in H²×H².
pub fn example_two_horocycles() -> Result<ImmersionChart> {
    product_of_catalog(CatalogCurve::Horocycle, CatalogCurve::Horocycle)
}

/// Which of the three φ formulas applies to `a`.
fn phi_branch(params: &ProfileParams) -> Result<i8> {
    match params.a {
        a if a > 0.0 => Ok(1),
        a if a < 0.0 && params.eps == Epsilon::Hyperbolic => Ok(-1),
        a if a == 0.0 && params.eps == Epsilon::Hyperbolic => Ok(0),
        a => domain(format!("a = {a} requires ε = −1")),
    }
}

/// `φ(x, y)` of the invariant PMC family for the given `h` jet.
fn profile_phi(params: &ProfileParams, branch: i8, h: Jet2, y: Jet2) -> [Jet2; 3] {
    let (e, a) = (params.eps.value(), params.a);
    match branch {
        1 => {
            let r = a.sqrt();
            let w = ((h * h - a) * (-e)).sqrt();
            let t = y * r;
            [w * t.cos() / r, w * t.sin() / r, h / r]
        }
        -1 => {
            let r = (-a).sqrt();
            let w = (h * h - a).sqrt();
            let t = y * r;
            [h / r, w * t.sinh() / r, w * t.cosh() / r]
        }
        _ => {
            let h2 = h * h;
            let inv = 1.0 / (h * 2.0);
            let y2 = y * y;
            [((y2 - 1.0) * h2 + 1.0) * inv, y * h2 * 2.0 * inv, ((y2 + 1.0) * h2 + 1.0) * inv]
        }
    }
}

fn profile_x_anchor(span: (f64, f64)) -> f64 {
    0.0f64.clamp(span.0, span.1)
}

/// Step used when integrating profile curves and primitives.
fn profile_resolution(span: (f64, f64)) -> (f64, usize) {
    let n = 4000usize;
    ((span.1 - span.0) / n as f64, n)
}

/// The curve ψ with `|ψ'|² = b(1 + (h − c)²)` and curvature
/// `−εb(a − h²)/|ψ'|³`, anchored at the canonical frame.
pub fn profile_curve(source: Arc<dyn ProfileSource>) -> Result<SampledCurve> {
    let p = source.params();
    let span = source.span();
    let src = source.clone();
    let speed = move |x: f64| {
        let [h, hp, _] = src.jet(x);
        let s = (p.b * (1.0 + (h - p.c) * (h - p.c))).sqrt();
        (s, p.b * (h - p.c) * hp / s)
    };
    let src = source.clone();
    let curvature = move |x: f64| {
        let [h, _, _] = src.jet(x);
        let s2 = p.b * (1.0 + (h - p.c) * (h - p.c));
        -p.eps.value() * p.b * (p.a - h * h) / (s2 * s2.sqrt())
    };
    let spec = CurveSpec {
        eps: p.eps,
        speed: Arc::new(speed),
        curvature: Arc::new(curvature),
        p0: FactorPoint::center(p.eps),
        t0: [1.0, 0.0, 0.0],
        x_start: profile_x_anchor(span),
    };
    let (step, _) = profile_resolution(span);
    integrate_curve(spec, span, step)
}

/// The invariant PMC surface `Φ = (φ, ψ)` built from a profile `h`.
pub fn pmc_profile_family(source: Arc<dyn ProfileSource>, y_span: (f64, f64)) -> Result<ImmersionChart> {
    let p = source.params();
    let branch = phi_branch(&p)?;
    let span = source.span();
    check_band(&*source, |h| p.metric_factor(h) > 0.0, "ε(a − h²) > 0")?;
    if branch == 1 && p.eps == Epsilon::Hyperbolic && source.jet(span.0)[0] <= 0.0 {
        return domain("for ε = −1 and a > 0 the profile must be positive (upper sheet)");
    }
    if branch == 0 && source.jet(span.0)[0] <= 0.0 {
        return domain("for a = 0 the profile must be positive");
    }
    let curve = profile_curve(source.clone())?;
    let src = source.clone();
    let map = move |x: f64, y: f64| {
        let h = jx(src.jet(x));
        join(profile_phi(&p, branch, h, Jet2::var_y(y)), curve_jets(&curve, x))
    };
    let d = Rect::new(span.0, span.1, y_span.0, y_span.1)?;
    let mut chart = ImmersionChart::new("invariant_pmc", Target::Product, p.eps, d, Arc::new(map))
        .with_param("eps", p.eps.value())
        .with_param("a", p.a)
        .with_param("b", p.b)
        .with_param("c", p.c)
        .with_note("psi anchored at the model center with tangent (1,0,0) at x = 0 (or the nearest domain edge)");
    chart.closed_form = false;
    Ok(chart)
}

fn check_band(source: &dyn ProfileSource, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
    let (a, b) = source.span();
    for i in 0..=400 {
        let x = a + (b - a) * i as f64 / 400.0;
        if !ok(source.jet(x)[0]) {
            return domain(format!("profile violates {what} at x = {x}"));
        }
    }
    Ok(())
}

/// Margin kept from the singular edges `x = ±π/2` of the Φ₀ and Leite charts.
pub const EDGE_MARGIN: f64 = 0.5;

/// The surface `Φ₀` with vanishing Hopf differentials: the invariant family
/// with `ε = −1, a = −1, c = 0, b = 4|H|²` and `h = tan(√(1−4|H|²) x)`,
/// rescaled by `√(1 − 4|H|²)` in both variables.
pub fn pmc_phi0(h_abs: f64) -> Result<ImmersionChart> {
    if !(h_abs > 0.0 && 4.0 * h_abs * h_abs < 1.0) {
        return domain(format!("Φ₀ needs 0 < |H| < 1/2, got {h_abs}"));
    }
    let b = 4.0 * h_abs * h_abs;
    let s = (1.0 - b).sqrt();
    let params = ProfileParams::new(Epsilon::Hyperbolic, -1.0, b, 0.0)?;
    let half = (FRAC_PI_2 - EDGE_MARGIN) / s;
    let src = Arc::new(ClosedFormProfile::new(ClosedFormKind::Tan, params, (-half, half))?);
    let base = pmc_profile_family(src, (-1.0 / s, 1.0 / s))?;
    let mut chart = base.affine_reparametrized(1.0 / s, 1.0 / s, 0.0, 0.0)?;
    chart.family = "phi0".into();
    chart.params = vec![("hnorm".into(), h_abs)];
    Ok(chart)
}

/// The CMC surface `Ψ = (ψ, η)` in `M²(ε)×ℝ` built from a profile `h`,
/// with the integrals anchored at the left edge of the x-domain.
pub fn cmc_profile_family(source: Arc<dyn ProfileSource>, y_span: (f64, f64)) -> Result<ImmersionChart> {
    let p = source.params();
    let (e, a, b, c) = (p.eps.value(), p.a, p.b, p.c);
    let big_e = a - e * b;
    if big_e <= 0.0 && p.eps == Epsilon::Sphere {
        return domain("E = a − εb ≤ 0 requires ε = −1");
    }
    check_band(&*source, |h| p.metric_factor(h) > b, "ε(a − h²) > b")?;
    let span = source.span();
    let (_, n) = profile_resolution(span);
    let eta_int = Primitive::new(source.clone(), move |h| (h - c, 1.0), n);
    let f_int = Primitive::new(
        source.clone(),
        move |h| {
            let d = e * (big_e - h * h);
            (b * (c - h) / d, (-b * d - b * (c - h) * (-2.0 * e * h)) / (d * d))
        },
        n,
    );
    let src = source.clone();
    let sb = b.sqrt();
    let map = move |x: f64, y: f64| {
        let h = jx(src.jet(x));
        let yj = Jet2::var_y(y);
        let eta = (yj + jx(eta_int.jet(x))) * sb;
        let f = yj + jx(f_int.jet(x));
        let psi = if big_e > 0.0 {
            let r = big_e.sqrt();
            let w = ((h * h - big_e) * (-e)).sqrt();
            let t = f * r;
            [w * t.cos() / r, w * t.sin() / r, h / r]
        } else if big_e < 0.0 {
            let r = (-big_e).sqrt();
            let w = (h * h - big_e).sqrt();
            let t = f * r;
            [h / r, w * t.sinh() / r, w * t.cosh() / r]
        } else {
            let ih2 = 1.0 / (h * h);
            let f2 = f * f;
            [h * (f2 - 0.25 + ih2), h * f, h * (f2 + 0.25 + ih2)]
        };
        join_line(psi, eta)
    };
    let d = Rect::new(span.0, span.1, y_span.0, y_span.1)?;
    let mut chart = ImmersionChart::new("invariant_cmc", Target::FactorTimesLine, p.eps, d, Arc::new(map))
        .with_param("eps", e)
        .with_param("a", a)
        .with_param("b", b)
        .with_param("c", c)
        .with_note(format!("integrals anchored at x0 = {} (left domain edge)", span.0));
    chart.closed_form = false;
    Ok(chart)
}

/// Period data of the torus family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusPeriods {
    pub kappa: f64,
    pub x_period: f64,
    pub y_period: f64,
    pub radius: f64,
}

pub fn torus_periods(a: f64, b: f64) -> Result<TorusPeriods> {
    if !(0.0 < b && b < a) {
        return domain(format!("the torus family needs 0 < b < a (a = {a}, b = {b})"));
    }
    let kappa = ((a - b) / (a * (1.0 + b))).sqrt();
    Ok(TorusPeriods {
        kappa,
        x_period: elliptic::real_period(kappa)?,
        y_period: elliptic::angular_period(kappa)?,
        radius: b.sqrt() / (a - b).sqrt(),
    })
}

fn jacobi_jets(x: Jet2, kappa: f64) -> (Jet2, Jet2, Jet2) {
    let k2 = kappa * kappa;
    let j = elliptic::jacobi(x.v, kappa).expect("modulus validated by torus_periods");
    let (s, c, d) = (j.sn, j.cn, j.dn);
    (
        x.compose(s, c * d, -s * (d * d + k2 * c * c)),
        x.compose(c, -s * d, c * (k2 * s * s - d * d)),
        x.compose(d, -k2 * s * c, -k2 * d * (c * c - s * s)),
    )
}

/// The CMC torus `(φ_{a,b}, η_{a,b})` in `S²×S¹(√b/√(a−b))` on one
/// fundamental domain `[0, 4K(κ)] × [0, 2π/κ]`.
pub fn cmc_torus(a: f64, b: f64) -> Result<(ImmersionChart, TorusPeriods)> {
    let per = torus_periods(a, b)?;
    let kappa = per.kappa;
    let (sa, s1a, s1b) = (a.sqrt(), (1.0 + a).sqrt(), (1.0 + b).sqrt());
    let c_log = b.sqrt() / s1b;
    let c_y = b.sqrt() / (a * (1.0 + b)).sqrt();
    let map = move |x: f64, y: f64| {
        let (sn, cn, dn) = jacobi_jets(Jet2::var_x(x), kappa);
        let t = Jet2::var_y(y) * kappa;
        let (ct, st) = (t.cos(), t.sin());
        let phi = [(dn * ct * sa - cn * st) / s1a, (dn * st * sa + cn * ct) / s1a, sn / s1b];
        let eta = (dn - cn * kappa).ln() * c_log + Jet2::var_y(y) * c_y;
        join_line(phi, eta)
    };
    let d = Rect::new(0.0, per.x_period, 0.0, per.y_period)?;
    let mut chart =
        ImmersionChart::new("torus", Target::FactorTimesCircle(per.radius), Epsilon::Sphere, d, Arc::new(map))
            .with_param("a", a)
            .with_param("b", b)
            .with_param("kappa", kappa);
    chart.periods = Some((per.x_period, per.y_period));
    Ok((chart, per))
}

/// `Ψ_λ` in H²×ℝ with `H = 1/2` and metric `((1+λ²)/λ²) cosh²x (dx² + dy²)`.
pub fn psi_lambda(lambda: f64) -> Result<ImmersionChart> {
    if !(lambda > 0.0) {
        return domain(format!("Ψ_λ needs λ > 0, got {lambda}"));
    }
    let s = (1.0 + lambda * lambda).sqrt();
    let map = move |x: f64, y: f64| {
        let (xj, yj) = (Jet2::var_x(x), Jet2::var_y(y));
        let k = s / lambda;
        let psi =
            [xj.sinh() * k, (xj.cosh() * yj.sinh() + yj.cosh() / s) * k, (xj.cosh() * yj.cosh() + yj.sinh() / s) * k];
        let eta = (yj + xj.cosh() * s) / lambda;
        join_line(psi, eta)
    };
    let d = Rect::new(-1.0, 1.0, -1.0, 1.0)?;
    Ok(ImmersionChart::new("psi_lambda", Target::FactorTimesLine, Epsilon::Hyperbolic, d, Arc::new(map))
        .with_param("lambda", lambda))
}

/// Conformal reparametrization of Leite's CMC plane in H²×ℝ, `0 < H < 1/2`.
pub fn leite(h: f64) -> Result<ImmersionChart> {
    if !(h > 0.0 && h < 0.5) {
        return domain(format!("the Leite plane needs 0 < H < 1/2, got {h}"));
    }
    let s = (1.0 - 4.0 * h * h).sqrt();
    let h2 = h * h;
    let map = move |x: f64, y: f64| {
        let (xj, yj) = (Jet2::var_x(x), Jet2::var_y(y));
        let (cx, em) = (xj.cos(), (-yj).exp());
        let psi =
            [xj.tan() / s, (yj.sinh() / cx + em * cx * (2.0 * h2)) / s, (yj.cosh() / cx - em * cx * (2.0 * h2)) / s];
        let eta = (yj - cx.ln()) * (2.0 * h / s);
        join_line(psi, eta)
    };
    let half = FRAC_PI_2 - EDGE_MARGIN;
    let d = Rect::new(-half, half, -1.0, 1.0)?;
    Ok(ImmersionChart::new("leite", Target::FactorTimesLine, Epsilon::Hyperbolic, d, Arc::new(map))
        .with_param("hnorm", h))
}

/// Totally geodesic inclusion `M²(ε)×ℝ → M²(ε)×M²(ε)`,
/// `(p, t) ↦ (p, (cos t, sin t, 0))` for ε = +1 and `(p, (0, sinh t, cosh t))` for ε = −1.
pub fn geodesic_inclusion(chart: &ImmersionChart) -> Result<ImmersionChart> {
    if chart.target == Target::Product {
        return Err(Error::Usage("geodesic inclusion needs a chart into M²(ε)×ℝ".into()));
    }
    let eps = chart.eps;
    let mut out = chart.post_composed("inclusion", move |j| {
        let t = j[3];
        let g = match eps {
            Epsilon::Sphere => [t.cos(), t.sin(), Jet2::default()],
            Epsilon::Hyperbolic => [Jet2::default(), t.sinh(), t.cosh()],
        };
        join([j[0], j[1], j[2]], g)
    });
    out.target = Target::Product;
    out.family = format!("inclusion({})", chart.family);
    // The inclusion of a circle target is periodic only when the circle
    // length is a multiple of 2π; keep the periods only in that case.
    if let Target::FactorTimesCircle(r) = chart.target {
        let ratio = r;
        if eps != Epsilon::Sphere || (ratio - ratio.round()).abs() > 1e-12 || ratio.round() == 0.0 {
            out.periods = None;
        }
    }
    Ok(out)
}

/// Point-level version of the inclusion, for tests and exports.
pub fn include_point(eps: Epsilon, p: &Vec3, t: f64) -> Vec6 {
    match eps {
        Epsilon::Sphere => [p[0], p[1], p[2], t.cos(), t.sin(), 0.0],
        Epsilon::Hyperbolic => [p[0], p[1], p[2], 0.0, t.sinh(), t.cosh()],
    }
}

/// Negative control: the second factor of a product chart reparametrized by
/// `(x, y) ↦ c + s((x, y) − c)` around the domain center, on a domain shrunk
/// so both factors stay defined.
pub fn perturb_second_factor(chart: &ImmersionChart, s: f64) -> Result<ImmersionChart> {
    if chart.target != Target::Product {
        return Err(Error::Usage("second-factor perturbation needs a product chart".into()));
    }
    let d = chart.domain;
    let (cx, cy) = (0.5 * (d.x0 + d.x1), 0.5 * (d.y0 + d.y1));
    let shrink = 1.0 / s.abs().max(1.0);
    let nd = Rect::new(
        cx + (d.x0 - cx) * shrink,
        cx + (d.x1 - cx) * shrink,
        cy + (d.y0 - cy) * shrink,
        cy + (d.y1 - cy) * shrink,
    )?;
    let inner = chart.clone();
    let map = move |x: f64, y: f64| {
        let a = inner.jet_unchecked(x, y);
        let b = inner.jet_unchecked(cx + s * (x - cx), cy + s * (y - cy));
        let sc = |j: Jet2| Jet2 {
            v: j.v,
            dx: s * j.dx,
            dy: s * j.dy,
            dxx: s * s * j.dxx,
            dxy: s * s * j.dxy,
            dyy: s * s * j.dyy,
        };
        [a[0], a[1], a[2], sc(b[3]), sc(b[4]), sc(b[5])]
    };
    let mut out =
        ImmersionChart::new(format!("{}+perturbed", chart.family), Target::Product, chart.eps, nd, Arc::new(map));
    out.params = chart.params.clone();
    out.params.push(("second_factor_scale".into(), s));
    out.closed_form = chart.closed_form;
    Ok(out)
}

/// Negative control for `M²(ε)×ℝ` charts: height multiplied by `s`.
pub fn scale_height(chart: &ImmersionChart, s: f64) -> Result<ImmersionChart> {
    if chart.target == Target::Product {
        return Err(Error::Usage("height scaling needs a chart into M²(ε)×ℝ".into()));
    }
    let mut out = chart.post_composed("height-scaled", move |mut j| {
        j[3] = j[3] * s;
        j
    });
    out.params.push(("height_scale".into(), s));
    Ok(out)
}

/// The isometry `I(θ)` of `M²(ε)` that leaves the invariant PMC family with
/// parameter `a` invariant (acting on the first factor).
pub fn invariance_isometry(a: f64, theta: f64) -> [[f64; 3]; 3] {
    if a > 0.0 {
        let (s, c) = theta.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    } else if a < 0.0 {
        let (s, c) = (theta.sinh(), theta.cosh());
        [[1.0, 0.0, 0.0], [0.0, c, s], [0.0, s, c]]
    } else {
        let t2 = 0.5 * theta * theta;
        [[1.0 - t2, theta, t2], [-theta, 1.0, theta], [-t2, theta, 1.0 + t2]]
    }
}

/// Full angle `2π` helper used by circle targets.
pub fn circle_length(r: f64) -> f64 {
    2.0 * PI * r
}

/// A profile `h` for `(ε, a, b, c)` on `x_span`: the closed form when one
/// exists, otherwise a numerical solution through the first admissible
/// initial value. Infeasible parameters are rejected with the clause that
/// fails.
pub fn profile_source(params: ProfileParams, x_span: (f64, f64)) -> Result<Arc<dyn ProfileSource>> {
    let feas = check_restrictions(&params)?;
    if !feas.feasible {
        return Err(Error::Infeasible(format!(
            "(eps, a, b, c) = ({}, {}, {}, {}) violates {}",
            params.eps.value(),
            params.a,
            params.b,
            params.c,
            feas.clause
        )));
    }
    let ProfileParams { eps, a, b, c } = params;
    let closed = match eps {
        Epsilon::Hyperbolic if b == 1.0 && c == 0.0 && a <= -1.0 => Some(ClosedFormKind::Sinh),
        Epsilon::Sphere if c == 0.0 && 0.0 < b && b < a => Some(ClosedFormKind::Sn),
        Epsilon::Hyperbolic if a == -1.0 && c == 0.0 && b < 1.0 => Some(ClosedFormKind::Tan),
        _ => None,
    };
    if let Some(kind) = closed {
        let mut span = x_span;
        if kind == ClosedFormKind::Tan {
            let edge = (FRAC_PI_2 - EDGE_MARGIN) / (1.0 - b).sqrt();
            span = (span.0.max(-edge), span.1.min(edge));
        }
        return Ok(Arc::new(ClosedFormProfile::new(kind, params, span)?));
    }
    let root = a.abs().sqrt();
    let candidates = [0.0, 0.5, 1.0, root + 0.5, root + 1.0, 2.0, 3.0, -0.5, -1.0];
    let h0 = candidates
        .into_iter()
        .find(|&h| params.metric_factor(h) > 0.0 && params.pq(h) > 1e-8)
        .ok_or_else(|| Error::Domain(format!("no admissible initial value found for {params:?}")))?;
    let lo = x_span.0.min(0.0);
    let hi = x_span.1.max(0.0);
    let sol = solve_profile(params, h0, 1.0, (lo, hi), 0.005)?;
    Ok(Arc::new(sol))
}

/// The invariant PMC family for `(ε, a, b, c)` over `x_span × y_span`.
pub fn invariant_pmc_chart(params: ProfileParams, x_span: (f64, f64), y_span: (f64, f64)) -> Result<ImmersionChart> {
    pmc_profile_family(profile_source(params, x_span)?, y_span)
}

/// The CMC family in `M²(ε)×ℝ` for `(ε, a, b, c)` over `x_span × y_span`.
pub fn invariant_cmc_chart(params: ProfileParams, x_span: (f64, f64), y_span: (f64, f64)) -> Result<ImmersionChart> {
    cmc_profile_family(profile_source(params, x_span)?, y_span)
}

/// The member `ε = −1, a = −1 − λ², b = 1, c = 0` of the invariant family,
/// with `h = √(1+λ²) sinh(λx)`.
pub fn sinh_profile_member(lambda: f64, x_span: (f64, f64), y_span: (f64, f64)) -> Result<ImmersionChart> {
    if !(lambda > 0.0) {
        return domain(format!("λ must be positive, got {lambda}"));
    }
    let params = ProfileParams::new(Epsilon::Hyperbolic, -1.0 - lambda * lambda, 1.0, 0.0)?;
    let mut chart = invariant_pmc_chart(params, x_span, y_span)?;
    chart.family = "sinh_profile".into();
    chart.params.push(("lambda".into(), lambda));
    Ok(chart)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid(d: &Rect, n: usize) -> Vec<(f64, f64)> {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = d.x0 + (d.x1 - d.x0) * (i as f64 + 0.5) / n as f64;
                let y = d.y0 + (d.y1 - d.y0) * (j as f64 + 0.5) / n as f64;
                v.push((x, y));
            }
        }
        v
    }

    fn fd_check(chart: &ImmersionChart, tol: f64) {
        let h = 1e-4;
        for (x, y) in sample_grid(&chart.domain.intersect(&shrunk(&chart.domain, 2e-4)).unwrap(), 5) {
            let j = chart.jet(x, y).unwrap();
            for k in 0..chart.dim() {
                let f = |a: f64, b: f64| chart.jet_unchecked(a, b)[k].v;
                let dx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
                let dy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
                let dxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
                let dxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
                let s = 1.0 + j[k].v.abs() + j[k].dx.abs() + j[k].dxx.abs();
                assert!((j[k].dx - dx).abs() < tol * s, "{} dx comp {k}: {} vs {dx}", chart.family, j[k].dx);
                assert!((j[k].dy - dy).abs() < tol * s, "{} dy comp {k}", chart.family);
                assert!(
                    (j[k].dxx - dxx).abs() < 100.0 * tol * s,
                    "{} dxx comp {k}: {} vs {dxx}",
                    chart.family,
                    j[k].dxx
                );
                assert!((j[k].dxy - dxy).abs() < 100.0 * tol * s, "{} dxy comp {k}", chart.family);
            }
        }
    }

    fn shrunk(d: &Rect, m: f64) -> Rect {
        Rect { x0: d.x0 + m, x1: d.x1 - m, y0: d.y0 + m, y1: d.y1 - m }
    }

    fn invariant_pmc(e: i32, a: f64, b: f64, c: f64, h0: f64, span: (f64, f64)) -> ImmersionChart {
        let p = ProfileParams::new(Epsilon::from_sign(e).unwrap(), a, b, c).unwrap();
        let sol = solve_profile(p, h0, 1.0, span, 0.01).unwrap();
        pmc_profile_family(Arc::new(sol), (-1.0, 1.0)).unwrap()
    }

    fn all_charts() -> Vec<ImmersionChart> {
        let (torus, _) = cmc_torus(2.0, 1.0).unwrap();
        vec![
            example_sphere_torus(0.6, 0.8).unwrap(),
            example_circle_horocycle(2f64.sqrt()).unwrap(),
            example_two_horocycles().unwrap(),
            invariant_pmc(-1, -2.0, 1.0, 0.0, 0.0, (-1.0, 1.0)),
            invariant_pmc(1, 2.0, 1.0, 0.0, 0.0, (-1.0, 1.0)),
            invariant_pmc(-1, 0.0, 0.5, 0.3, 1.0, (-0.3, 0.3)),
            invariant_pmc(-1, 1.0, 0.5, 0.0, 2.0, (-0.1, 0.1)),
            pmc_phi0(0.25).unwrap(),
            geodesic_inclusion(&torus).unwrap(),
            torus,
            psi_lambda(1.0).unwrap(),
            leite(0.25).unwrap(),
        ]
    }

    #[test]
    fn charts_land_on_their_targets() {
        for chart in all_charts() {
            for (x, y) in sample_grid(&chart.domain, 9) {
                let d = chart.manifold_defect(x, y).unwrap();
                let p = chart.point(x, y).unwrap();
                let s = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
                assert!(d < 1e-9 * s, "{}: defect {d} at ({x},{y})", chart.family);
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        for chart in all_charts() {
            fd_check(&chart, 1e-6);
        }
    }

    #[test]
    fn minimal_products_are_rejected() {
        assert!(matches!(product_of_curves(Epsilon::Sphere, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn torus_closes_on_its_fundamental_domain() {
        let (chart, per) = cmc_torus(2.0, 1.0).unwrap();
        assert!((per.kappa * per.kappa - 0.25).abs() < 1e-15);
        for (x, y) in sample_grid(&chart.domain, 6) {
            let p = chart.circle_point(x, y).unwrap();
            let q = chart.circle_point(x + per.x_period, y).unwrap_or_else(|_| {
                let shifted =
                    chart.clone().with_domain(Rect::new(0.0, 2.0 * per.x_period, 0.0, 2.0 * per.y_period).unwrap());
                shifted.circle_point(x + per.x_period, y).unwrap()
            });
            let big = chart.clone().with_domain(Rect::new(0.0, 2.0 * per.x_period, 0.0, 2.0 * per.y_period).unwrap());
            let r = big.circle_point(x, y + per.y_period).unwrap();
            for k in 0..5 {
                assert!((p[k] - q[k]).abs() < 1e-8);
                assert!((p[k] - r[k]).abs() < 1e-8);
            }
        }
        assert!(cmc_torus(1.0, 2.0).is_err());
    }

    #[test]
    fn inclusion_maps_zero_height_to_base_points() {
        assert_eq!(include_point(Epsilon::Sphere, &[0.0, 0.0, 1.0], 0.0)[3..], [1.0, 0.0, 0.0]);
        assert_eq!(include_point(Epsilon::Hyperbolic, &[0.0, 0.0, 1.0], 0.0)[3..], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn invariant_family_is_invariant_under_its_isometries() {
        let theta = 0.3;
        let cases = [
            (invariant_pmc(1, 2.0, 1.0, 0.0, 0.0, (-0.5, 0.5)), 2.0),
            (invariant_pmc(-1, -2.0, 1.0, 0.0, 0.0, (-0.5, 0.5)), -2.0),
            (invariant_pmc(-1, 0.0, 0.5, 0.3, 1.0, (-0.2, 0.2)), 0.0),
        ];
        for (chart, a) in cases {
            let m = invariance_isometry(a, theta);
            let dy = if a == 0.0 { theta } else { theta / a.abs().sqrt() };
            for i in 0..5 {
                let x = chart.domain.x0 + (chart.domain.x1 - chart.domain.x0) * (i as f64 + 0.5) / 5.0;
                let y = -0.3;
                let p = chart.point(x, y).unwrap();
                let q = chart.point(x, y + dy).unwrap();
                for r in 0..3 {
                    let v: f64 = (0..3).map(|k| m[r][k] * p[k]).sum();
                    assert!((v - q[r]).abs() < 1e-9, "a={a}: {v} vs {}", q[r]);
                }
                for r in 3..6 {
                    assert!((p[r] - q[r]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pmc_and_cmc_families_share_the_conformal_factor() {
        let p = ProfileParams::new(Epsilon::Sphere, 2.0, 1.0, 0.0).unwrap();
        let sol = Arc::new(solve_profile(p, 0.0, 1.0, (-0.5, 0.5), 0.01).unwrap());
        let a = pmc_profile_family(sol.clone(), (-1.0, 1.0)).unwrap();
        let b = cmc_profile_family(sol.clone(), (-1.0, 1.0)).unwrap();
        for (x, y) in sample_grid(&a.domain, 5) {
            let (ja, jb) = (a.jet(x, y).unwrap(), b.jet(x, y).unwrap());
            let ea: f64 = (0..6).map(|k| if k % 3 == 2 { p.eps.value() } else { 1.0 } * ja[k].dx * ja[k].dx).sum();
            let eb: f64 = (0..4).map(|k| if k == 2 { p.eps.value() } else { 1.0 } * jb[k].dx * jb[k].dx).sum();
            let h = sol.jet(x)[0];
            assert!((ea - p.metric_factor(h)).abs() < 1e-7);
            assert!((eb - p.metric_factor(h)).abs() < 1e-7);
        }
    }

    #[test]
    fn infeasible_parameters_cite_the_restriction() {
        let p = ProfileParams::new(Epsilon::Sphere, 1.0, 2.0, 0.0).unwrap();
        match invariant_pmc_chart(p, (-1.0, 1.0), (-1.0, 1.0)) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("(1+b)(a-b) >= b c^2"), "{msg}"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn profile_sources_pick_closed_forms_when_available() {
        let e2 = sinh_profile_member(1.0, (-1.0, 1.0), (-1.0, 1.0)).unwrap();
        assert_eq!(e2.family, "sinh_profile");
        let p = ProfileParams::new(Epsilon::Hyperbolic, 0.0, 0.5, 0.3).unwrap();
        let src = profile_source(p, (-0.3, 0.3)).unwrap();
        let [h, hp, _] = src.jet(0.1);
        assert!((hp * hp - p.pq(h)).abs() < 1e-8);
    }
}
