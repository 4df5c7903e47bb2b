//! Second-order forward-mode differentiation in two variables.
//!
//! A [`Jet2`] carries a value together with its first and second partial
//! derivatives with respect to the chart parameters `(x, y)`. Charts written
//! once in terms of `Jet2` arithmetic produce exact first and second partials
//! without finite differences.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Jet2 {
    pub const fn constant(v: f64) -> Self {
        Self { v, dx: 0.0, dy: 0.0, dxx: 0.0, dxy: 0.0, dyy: 0.0 }
    }

    pub const fn var_x(v: f64) -> Self {
        Self { v, dx: 1.0, dy: 0.0, dxx: 0.0, dxy: 0.0, dyy: 0.0 }
    }

    pub const fn var_y(v: f64) -> Self {
        Self { v, dx: 0.0, dy: 1.0, dxx: 0.0, dxy: 0.0, dyy: 0.0 }
    }

    /// Applies a univariate function given its value and first two
    /// derivatives at `self.v` (chain rule to second order).
    pub fn compose(self, f0: f64, f1: f64, f2: f64) -> Self {
        Self {
            v: f0,
            dx: f1 * self.dx,
            dy: f1 * self.dy,
            dxx: f2 * self.dx * self.dx + f1 * self.dxx,
            dxy: f2 * self.dx * self.dy + f1 * self.dxy,
            dyy: f2 * self.dy * self.dy + f1 * self.dyy,
        }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.compose(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn tan(self) -> Self {
        let t = self.v.tan();
        let sec2 = 1.0 + t * t;
        self.compose(t, sec2, 2.0 * t * sec2)
    }

    pub fn sinh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.compose(s, c, s)
    }

    pub fn cosh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.compose(c, s, c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    pub fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.compose(self.v.ln(), r, -r * r)
    }

    pub fn atan(self) -> Self {
        let d = 1.0 / (1.0 + self.v * self.v);
        self.compose(self.v.atan(), d, -2.0 * self.v * d * d)
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        self.compose(self.v.powi(n), nf * self.v.powi(n - 1), nf * (nf - 1.0) * self.v.powi(n - 2))
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            v: self.v * k,
            dx: self.dx * k,
            dy: self.dy * k,
            dxx: self.dxx * k,
            dxy: self.dxy * k,
            dyy: self.dyy * k,
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            dx: self.dx + o.dx,
            dy: self.dy + o.dy,
            dxx: self.dxx + o.dxx,
            dxy: self.dxy + o.dxy,
            dyy: self.dyy + o.dyy,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            dx: self.dx * o.v + self.v * o.dx,
            dy: self.dy * o.v + self.v * o.dy,
            dxx: self.dxx * o.v + 2.0 * self.dx * o.dx + self.v * o.dxx,
            dxy: self.dxy * o.v + self.dx * o.dy + self.dy * o.dx + self.v * o.dxy,
            dyy: self.dyy * o.v + 2.0 * self.dy * o.dy + self.v * o.dyy,
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        let r = 1.0 / o.v;
        self * o.compose(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, k: f64) -> Jet2 {
        self.v += k;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, k: f64) -> Jet2 {
        self.v -= k;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, k: f64) -> Jet2 {
        self.scale(k)
    }
}

impl Div<f64> for Jet2 {
    type Output = Jet2;
    fn div(self, k: f64) -> Jet2 {
        self.scale(1.0 / k)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, j: Jet2) -> Jet2 {
        j.scale(self)
    }
}

impl Add<Jet2> for f64 {
    type Output = Jet2;
    fn add(self, j: Jet2) -> Jet2 {
        j + self
    }
}

impl Sub<Jet2> for f64 {
    type Output = Jet2;
    fn sub(self, j: Jet2) -> Jet2 {
        (-j) + self
    }
}

impl Div<Jet2> for f64 {
    type Output = Jet2;
    fn div(self, j: Jet2) -> Jet2 {
        let inv = 1.0 / j.v;
        j.compose(self * inv, -self * inv * inv, 2.0 * self * inv * inv * inv)
    }
}
