//! The profile equation `(h')² = p(h) q(h)` with
//! `p(t) = a − t²` and `q(t) = −(1+εb)t² + 2εbct − εb(1+c²) + a`,
//! its parameter restrictions, a numerical solver and the closed-form
//! solutions available in special regimes.

use std::sync::Arc;

use crate::ambient::Epsilon;
use crate::elliptic;
use crate::error::{domain, Error, Result};

/// Maximum first-integral drift accepted by [`solve_profile`].
pub const DRIFT_TOL: f64 = 1e-8;
const MAX_HALVINGS: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileParams {
    pub eps: Epsilon,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ProfileParams {
    pub fn new(eps: Epsilon, a: f64, b: f64, c: f64) -> Result<Self> {
        if !(b > 0.0) || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return domain(format!("profile parameters need finite a, c and b > 0 (b = {b})"));
        }
        Ok(Self { eps, a, b, c })
    }

    pub fn p(&self, t: f64) -> f64 {
        self.a - t * t
    }

    pub fn q(&self, t: f64) -> f64 {
        let (e, a, b, c) = (self.eps.value(), self.a, self.b, self.c);
        -(1.0 + e * b) * t * t + 2.0 * e * b * c * t - e * b * (1.0 + c * c) + a
    }

    pub fn pq(&self, t: f64) -> f64 {
        self.p(t) * self.q(t)
    }

    /// `d/dt [p(t) q(t)]`.
    pub fn dpq(&self, t: f64) -> f64 {
        let (e, b, c) = (self.eps.value(), self.b, self.c);
        let dq = -2.0 * (1.0 + e * b) * t + 2.0 * e * b * c;
        -2.0 * t * self.q(t) + self.p(t) * dq
    }

    /// `ε(a − t²)`, the conformal factor of the associated surfaces.
    pub fn metric_factor(&self, t: f64) -> f64 {
        self.eps.value() * self.p(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// The restriction that decided the verdict, as a formula.
    pub clause: &'static str,
    /// True when no restriction applies (ε = −1, b < 1).
    pub unconstrained: bool,
}

pub const CLAUSE_SPHERE: &str = "(1+b)(a-b) >= b c^2  (eps = +1)";
pub const CLAUSE_HYP_B_GT_1: &str = "b c^2 >= (b-1)(a+b)  (eps = -1, b > 1)";
pub const CLAUSE_HYP_B_EQ_1: &str = "c != 0 or a <= -1  (eps = -1, b = 1)";
pub const CLAUSE_HYP_B_LT_1: &str = "unconstrained  (eps = -1, b < 1)";

/// Evaluates the restrictions on `(a, b, c)` under which the profile
/// equation admits solutions with `ε(a − h²) > 0`.
pub fn check_restrictions(params: &ProfileParams) -> Result<Feasibility> {
    let ProfileParams { eps, a, b, c } = *params;
    if !(b > 0.0) {
        return domain(format!("b must be positive, got {b}"));
    }
    let v = match eps {
        Epsilon::Sphere => {
            Feasibility { feasible: (1.0 + b) * (a - b) >= b * c * c, clause: CLAUSE_SPHERE, unconstrained: false }
        }
        Epsilon::Hyperbolic if b > 1.0 => {
            Feasibility { feasible: b * c * c >= (b - 1.0) * (a + b), clause: CLAUSE_HYP_B_GT_1, unconstrained: false }
        }
        Epsilon::Hyperbolic if b == 1.0 => {
            Feasibility { feasible: c != 0.0 || a <= -1.0, clause: CLAUSE_HYP_B_EQ_1, unconstrained: false }
        }
        Epsilon::Hyperbolic => Feasibility { feasible: true, clause: CLAUSE_HYP_B_LT_1, unconstrained: true },
    };
    Ok(v)
}

/// Anything that supplies `h` and its first two derivatives on an interval.
pub trait ProfileSource: Send + Sync {
    fn params(&self) -> ProfileParams;
    /// Closed interval on which the source is valid.
    fn span(&self) -> (f64, f64);
    /// `(h, h', h'')` at `x`.
    fn jet(&self, x: f64) -> [f64; 3];
}

#[derive(Clone, Debug)]
pub struct ProfileSolution {
    pub params: ProfileParams,
    /// Abscissa of the first sample.
    pub x_start: f64,
    /// Uniform sample spacing.
    pub step: f64,
    pub h: Vec<f64>,
    pub hprime: Vec<f64>,
    pub nonconstant: bool,
    /// Set when the requested span was cut where `ε(a − h²)` stops being positive.
    pub truncated: bool,
    /// Largest observed `|(h')² − p(h)q(h)| / (1 + |p(h)q(h)|)`.
    pub max_drift: f64,
}

impl ProfileSolution {
    pub fn x_end(&self) -> f64 {
        self.x_start + self.step * (self.h.len() - 1) as f64
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.h.len()).map(move |i| self.x_start + self.step * i as f64)
    }

    fn rhs(&self, s: [f64; 2]) -> [f64; 2] {
        [s[1], 0.5 * self.params.dpq(s[0])]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,h,hprime\n");
        for (i, x) in self.xs().enumerate() {
            out.push_str(&format!("{x:.12e},{:.12e},{:.12e}\n", self.h[i], self.hprime[i]));
        }
        out
    }
}

impl ProfileSource for ProfileSolution {
    fn params(&self) -> ProfileParams {
        self.params
    }

    fn span(&self) -> (f64, f64) {
        (self.x_start, self.x_end())
    }

    fn jet(&self, x: f64) -> [f64; 3] {
        if !self.nonconstant {
            return [self.h[0], 0.0, 0.0];
        }
        let n = self.h.len();
        let t = ((x - self.x_start) / self.step).round();
        let i = t.clamp(0.0, (n - 1) as f64) as usize;
        let dx = x - (self.x_start + self.step * i as f64);
        let s = rk4_step(|s| self.rhs(s), [self.h[i], self.hprime[i]], dx);
        [s[0], s[1], 0.5 * self.params.dpq(s[0])]
    }
}

fn rk4_step(f: impl Fn([f64; 2]) -> [f64; 2], s: [f64; 2], h: f64) -> [f64; 2] {
    if h == 0.0 {
        return s;
    }
    let k1 = f(s);
    let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
    let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
    let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1]]);
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates `h'' = ½ (pq)'(h)` from `h(0) = h0`, `h'(0) = sign0·√(pq(h0))`
/// across `x_span` (which must contain 0). The sample spacing is `step`
/// halved until the first-integral drift is at most [`DRIFT_TOL`].
pub fn solve_profile(
    params: ProfileParams,
    h0: f64,
    sign0: f64,
    x_span: (f64, f64),
    step: f64,
) -> Result<ProfileSolution> {
    let (x0, x1) = x_span;
    if !(x0 <= 0.0 && 0.0 <= x1) || !(step > 0.0) {
        return Err(Error::Usage(format!(
            "x_span must contain 0 and step must be positive (span {x_span:?}, step {step})"
        )));
    }
    if !(params.metric_factor(h0) > 0.0) {
        return domain(format!("initial value h0 = {h0} violates ε(a − h0²) > 0"));
    }
    let pq0 = params.pq(h0);
    let scale = 1.0 + params.a.abs() + h0 * h0;
    if pq0 < -1e-14 * scale * scale {
        return domain(format!("initial value h0 = {h0} gives p(h0)q(h0) = {pq0} < 0"));
    }
    let pq0 = pq0.max(0.0);
    let dpq0 = params.dpq(h0);
    if pq0 <= 1e-14 * scale * scale && dpq0.abs() <= 1e-12 * scale * scale {
        let n = ((x1 - x0) / step).round().max(1.0) as usize;
        let st = (x1 - x0) / n as f64;
        return Ok(ProfileSolution {
            params,
            x_start: x0,
            step: if st > 0.0 { st } else { step },
            h: vec![h0; n + 1],
            hprime: vec![0.0; n + 1],
            nonconstant: false,
            truncated: false,
            max_drift: 0.0,
        });
    }
    let hp0 = sign0.signum() * pq0.sqrt();

    let mut st = step;
    let mut last = None;
    for _ in 0..=MAX_HALVINGS {
        let sol = integrate_with_step(params, [h0, hp0], (x0, x1), st);
        if sol.max_drift <= DRIFT_TOL {
            return Ok(sol);
        }
        last = Some(sol);
        st *= 0.5;
    }
    let sol = last.unwrap();
    Err(Error::Verification(format!(
        "first-integral drift {:.3e} exceeds {DRIFT_TOL:e} even at step {st:.3e}",
        sol.max_drift
    )))
}

fn integrate_with_step(params: ProfileParams, s0: [f64; 2], (x0, x1): (f64, f64), step: f64) -> ProfileSolution {
    let rhs = |s: [f64; 2]| [s[1], 0.5 * params.dpq(s[0])];
    let n_fwd = (x1 / step).round() as usize;
    let n_bwd = (-x0 / step).round() as usize;
    let mut truncated = false;
    // Solutions of the ε = −1 equation can blow up in finite x; the span is
    // cut once |h| leaves a generous ball around the initial data.
    let escape = 1e3 * (1.0 + s0[0].abs() + params.a.abs().sqrt());
    let run = |n: usize, h: f64, truncated: &mut bool| {
        let mut out = Vec::with_capacity(n);
        let mut s = s0;
        for _ in 0..n {
            s = rk4_step(rhs, s, h);
            if !(params.metric_factor(s[0]) > 0.0) || !(s[0].abs() < escape) {
                *truncated = true;
                break;
            }
            out.push(s);
        }
        out
    };
    let fwd = run(n_fwd, step, &mut truncated);
    let bwd = run(n_bwd, -step, &mut truncated);
    let mut h = Vec::with_capacity(fwd.len() + bwd.len() + 1);
    let mut hp = Vec::with_capacity(h.capacity());
    for s in bwd.iter().rev().chain(std::iter::once(&s0)).chain(fwd.iter()) {
        h.push(s[0]);
        hp.push(s[1]);
    }
    let max_drift =
        h.iter().zip(&hp).map(|(&a, &b)| (b * b - params.pq(a)).abs() / (1.0 + params.pq(a).abs())).fold(0.0, f64::max);
    ProfileSolution {
        params,
        x_start: -(bwd.len() as f64) * step,
        step,
        h,
        hprime: hp,
        nonconstant: true,
        truncated,
        max_drift,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosedFormKind {
    /// `h = √(−a) sinh(√(−(1+a)) x)` for ε = −1, b = 1, c = 0, a ≤ −1.
    Sinh,
    /// `h = √((a−b)/(1+b)) sn(√(a(1+b)) x)` for ε = +1, c = 0, 0 < b < a.
    Sn,
    /// `h = tan(√(1−b) x)` for ε = −1, a = −1, c = 0, b < 1.
    Tan,
}

#[derive(Clone, Debug)]
pub struct ClosedFormProfile {
    pub kind: ClosedFormKind,
    pub params: ProfileParams,
    amp: f64,
    freq: f64,
    kappa: f64,
    span: (f64, f64),
}

impl ClosedFormProfile {
    /// Builds the closed form valid for `params`, restricted to `span`.
    pub fn new(kind: ClosedFormKind, params: ProfileParams, span: (f64, f64)) -> Result<Self> {
        let ProfileParams { eps, a, b, c } = params;
        let mismatch =
            || -> Result<Self> { domain(format!("parameters {params:?} are outside the {kind:?} closed-form regime")) };
        let (amp, freq, kappa) = match kind {
            ClosedFormKind::Sinh => {
                if eps != Epsilon::Hyperbolic || b != 1.0 || c != 0.0 || a > -1.0 {
                    return mismatch();
                }
                ((-a).sqrt(), (-(1.0 + a)).sqrt(), 0.0)
            }
            ClosedFormKind::Sn => {
                if eps != Epsilon::Sphere || c != 0.0 || !(0.0 < b && b < a) {
                    return mismatch();
                }
                let k2 = (a - b) / (a * (1.0 + b));
                (((a - b) / (1.0 + b)).sqrt(), (a * (1.0 + b)).sqrt(), k2.sqrt())
            }
            ClosedFormKind::Tan => {
                if eps != Epsilon::Hyperbolic || a != -1.0 || c != 0.0 || !(b < 1.0) {
                    return mismatch();
                }
                let s = (1.0 - b).sqrt();
                let lim = std::f64::consts::FRAC_PI_2 / s;
                if span.0 <= -lim || span.1 >= lim {
                    return domain(format!("tan profile needs |x| < π/(2√(1−b)) = {lim}"));
                }
                (1.0, s, 0.0)
            }
        };
        if span.0 > span.1 {
            return Err(Error::Usage("empty span".into()));
        }
        Ok(Self { kind, params, amp, freq, kappa, span })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Real period of the sn family, `4K(κ)/√(a(1+b))`.
    pub fn period(&self) -> Option<f64> {
        match self.kind {
            ClosedFormKind::Sn => Some(4.0 * elliptic::complete_k(self.kappa).ok()? / self.freq),
            _ => None,
        }
    }
}

impl ProfileSource for ClosedFormProfile {
    fn params(&self) -> ProfileParams {
        self.params
    }

    fn span(&self) -> (f64, f64) {
        self.span
    }

    fn jet(&self, x: f64) -> [f64; 3] {
        let (a, w) = (self.amp, self.freq);
        match self.kind {
            ClosedFormKind::Sinh => {
                let (s, c) = ((w * x).sinh(), (w * x).cosh());
                [a * s, a * w * c, a * w * w * s]
            }
            ClosedFormKind::Sn => {
                let k2 = self.kappa * self.kappa;
                let j = elliptic::jacobi(w * x, self.kappa).expect("modulus validated at construction");
                [a * j.sn, a * w * j.cn * j.dn, -a * w * w * j.sn * (j.dn * j.dn + k2 * j.cn * j.cn)]
            }
            ClosedFormKind::Tan => {
                let t = (w * x).tan();
                let sec2 = 1.0 + t * t;
                [t, w * sec2, 2.0 * w * w * t * sec2]
            }
        }
    }
}

/// Cumulative integral `F(x) = ∫_{x_start}^x g(h(t), h'(t)) dt` of a function
/// of the profile, tabulated by composite Simpson with midpoint samples.
pub struct Primitive {
    source: Arc<dyn ProfileSource>,
    g: Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
    x_start: f64,
    step: f64,
    values: Vec<f64>,
}

impl Primitive {
    /// `g(h)` returns the integrand and its derivative with respect to `h`.
    pub fn new(
        source: Arc<dyn ProfileSource>,
        g: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static,
        n: usize,
    ) -> Self {
        let (x0, x1) = source.span();
        let n = n.max(1);
        let step = (x1 - x0) / n as f64;
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        let f = |x: f64| g(source.jet(x)[0]).0;
        let x_start = x0;
        let mut acc = 0.0;
        let mut fl = f(x0);
        for i in 0..n {
            let xl = x0 + step * i as f64;
            let fm = f(xl + 0.5 * step);
            let fr = f(xl + step);
            acc += step / 6.0 * (fl + 4.0 * fm + fr);
            values.push(acc);
            fl = fr;
        }
        Self { source, g: Box::new(g), x_start, step, values }
    }

    /// `(F, F', F'')` at `x`.
    pub fn jet(&self, x: f64) -> [f64; 3] {
        let n = self.values.len() - 1;
        let t = ((x - self.x_start) / self.step).floor();
        let i = t.clamp(0.0, (n.max(1) - 1) as f64) as usize;
        let xl = self.x_start + self.step * i as f64;
        let val = if self.step == 0.0 {
            0.0
        } else {
            let fa = (self.g)(self.source.jet(xl)[0]).0;
            let fm = (self.g)(self.source.jet(0.5 * (xl + x))[0]).0;
            let fb = (self.g)(self.source.jet(x)[0]).0;
            self.values[i] + (x - xl) / 6.0 * (fa + 4.0 * fm + fb)
        };
        let hj = self.source.jet(x);
        let (gv, dg) = (self.g)(hj[0]);
        [val, gv, dg * hj[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(e: i32, a: f64, b: f64, c: f64) -> ProfileParams {
        ProfileParams::new(Epsilon::from_sign(e).unwrap(), a, b, c).unwrap()
    }

    #[test]
    fn restriction_examples() {
        let v = check_restrictions(&params(1, 3.0, 1.0, 1.0)).unwrap();
        assert!(v.feasible && v.clause == CLAUSE_SPHERE);
        assert!(check_restrictions(&params(1, 1.5, 1.5, 0.0)).unwrap().feasible);
        let v = check_restrictions(&params(-1, -2.0, 1.0, 0.0)).unwrap();
        assert!(v.feasible && v.clause == CLAUSE_HYP_B_EQ_1);
        let v = check_restrictions(&params(1, 1.0, 2.0, 0.0)).unwrap();
        assert!(!v.feasible);
        let v = check_restrictions(&params(-1, 5.0, 0.5, 0.0)).unwrap();
        assert!(v.feasible && v.unconstrained);
        assert!(ProfileParams::new(Epsilon::Sphere, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sinh_member_matches_closed_form() {
        let p = params(-1, -2.0, 1.0, 0.0);
        let sol = solve_profile(p, 0.0, 1.0, (-1.5, 1.5), 0.01).unwrap();
        assert!(sol.nonconstant && !sol.truncated && sol.max_drift <= DRIFT_TOL);
        let h1 = sol.jet(1.0)[0];
        assert!((h1 - 2f64.sqrt() * 1f64.sinh()).abs() < 1e-7, "{h1}");
        let cf = ClosedFormProfile::new(ClosedFormKind::Sinh, p, (-1.5, 1.5)).unwrap();
        for i in 0..31 {
            let x = -1.5 + 0.1 * i as f64;
            let (a, b) = (sol.jet(x), cf.jet(x));
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-7 * (1.0 + b[k].abs()));
            }
        }
    }

    #[test]
    fn sn_member_oscillates_inside_band() {
        let p = params(1, 2.0, 1.0, 0.0);
        let cf = ClosedFormProfile::new(ClosedFormKind::Sn, p, (0.0, 6.0)).unwrap();
        let sol = solve_profile(p, 0.0, 1.0, (0.0, 6.0), 0.01).unwrap();
        assert!(!sol.truncated);
        for (i, x) in sol.xs().enumerate() {
            assert!((sol.h[i] - cf.jet(x)[0]).abs() < 1e-7);
            assert!(p.metric_factor(sol.h[i]) > 0.0);
        }
        let k = elliptic::complete_k(0.5).unwrap();
        // √(a(1+b)) = 2 for (a, b) = (2, 1).
        assert!((cf.period().unwrap() - 2.0 * k).abs() < 1e-13);
        // h' changes sign across the turning points.
        assert!(sol.hprime.iter().any(|&v| v < -0.1) && sol.hprime.iter().any(|&v| v > 0.1));
    }

    #[test]
    fn closed_forms_satisfy_the_equation() {
        let cases = [
            (ClosedFormKind::Sinh, params(-1, -2.0, 1.0, 0.0), (-2.0, 2.0)),
            (ClosedFormKind::Sinh, params(-1, -1.0, 1.0, 0.0), (-2.0, 2.0)),
            (ClosedFormKind::Sn, params(1, 2.0, 1.0, 0.0), (-5.0, 5.0)),
            (ClosedFormKind::Tan, params(-1, -1.0, 0.25, 0.0), (-1.8, 1.8)),
        ];
        for (kind, p, span) in cases {
            let cf = ClosedFormProfile::new(kind, p, span).unwrap();
            for i in 0..=40 {
                let x = span.0 + (span.1 - span.0) * i as f64 / 40.0;
                let [h, hp, hpp] = cf.jet(x);
                let s = 1.0 + p.pq(h).abs();
                assert!((hp * hp - p.pq(h)).abs() <= 1e-10 * s, "{kind:?} at {x}");
                assert!((hpp - 0.5 * p.dpq(h)).abs() <= 1e-10 * s);
            }
        }
        let tan = ClosedFormProfile::new(ClosedFormKind::Tan, params(-1, -1.0, 0.25, 0.0), (-1.0, 1.0)).unwrap();
        assert!((tan.jet(1.0)[0] - (3f64.sqrt() / 2.0).tan()).abs() < 1e-15);
        assert!(ClosedFormProfile::new(ClosedFormKind::Tan, params(1, 2.0, 1.0, 0.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn degenerate_sinh_member_is_zero() {
        let p = params(-1, -1.0, 1.0, 0.0);
        let cf = ClosedFormProfile::new(ClosedFormKind::Sinh, p, (-1.0, 1.0)).unwrap();
        assert_eq!(cf.jet(0.7), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_solutions_are_reported() {
        // q vanishes identically.
        let sol = solve_profile(params(-1, -1.0, 1.0, 0.0), 0.0, 1.0, (-1.0, 1.0), 0.1).unwrap();
        assert!(!sol.nonconstant);
        assert!(sol.h.iter().all(|&h| h == 0.0));
        // Double root of p q at h0 = 0.
        let sol = solve_profile(params(1, 1.0, 1.0, 0.0), 0.0, 1.0, (-1.0, 1.0), 0.1).unwrap();
        assert!(!sol.nonconstant);
    }

    #[test]
    fn infeasible_initial_data_is_rejected() {
        assert!(solve_profile(params(1, 1.0, 1.0, 0.0), 2.0, 1.0, (0.0, 1.0), 0.1).is_err());
        // p q < 0: ε = +1, a = 1, b = 2 gives q(0) = 1 − 2 < 0.
        assert!(solve_profile(params(1, 1.0, 2.0, 0.0), 0.0, 1.0, (0.0, 1.0), 0.1).is_err());
    }

    #[test]
    fn truncation_at_band_edge() {
        // This solution blows up near x ≈ 0.7, so the span is cut.
        let p = params(-1, 0.5, 0.5, 0.0);
        let sol = solve_profile(p, 2.0, 1.0, (0.0, 3.0), 0.01).unwrap();
        assert!(sol.truncated && sol.x_end() < 1.0);
        for &h in &sol.h {
            assert!(p.metric_factor(h) > 0.0);
        }
        assert!(sol.h.len() >= 2);
    }

    #[test]
    fn primitive_of_linear_integrand() {
        let p = params(-1, -2.0, 1.0, 0.0);
        let cf = Arc::new(ClosedFormProfile::new(ClosedFormKind::Sinh, p, (-1.0, 1.0)).unwrap());
        // ∫_{-1}^x √2 sinh t dt = √2 (cosh x − cosh 1).
        let prim = Primitive::new(cf, |h| (h, 1.0), 200);
        for &x in &[-0.5, 0.0, 0.33, 1.0] {
            let [f, df, ddf] = prim.jet(x);
            let exact = 2f64.sqrt() * (x.cosh() - 1f64.cosh());
            assert!((f - exact).abs() < 1e-10, "{f} vs {exact}");
            assert!((df - 2f64.sqrt() * x.sinh()).abs() < 1e-14);
            assert!((ddf - 2f64.sqrt() * x.cosh()).abs() < 1e-14);
        }
    }
}
