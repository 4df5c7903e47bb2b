//! Signature-aware linear algebra on the quadric models of S² and H² and
//! on their product, including the two product complex structures.
//!
//! S² is the unit sphere of Euclidean ℝ³. H² is the upper sheet
//! `x₁² + x₂² − x₃² = −1, x₃ > 0` of Lorentz space with signature (+,+,−).
//! The complex structure of a factor is `J v = G (p × v)` with
//! `G = diag(1, 1, ε)`; at `p = (0,0,1)` this sends `(1,0,0)` to `(0,1,0)`
//! in both models.

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Vec6 = [f64; 6];

/// Default tolerance for tangency preconditions.
pub const TANGENCY_TOL: f64 = 1e-8;
/// Default tolerance for quadric membership.
pub const QUADRIC_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Epsilon {
    /// ε = +1, the unit sphere.
    Sphere,
    /// ε = −1, the hyperbolic plane.
    Hyperbolic,
}

impl Epsilon {
    pub fn from_sign(s: i32) -> Result<Self> {
        match s {
            1 => Ok(Epsilon::Sphere),
            -1 => Ok(Epsilon::Hyperbolic),
            _ => Err(Error::Usage(format!("epsilon must be +1 or -1, got {s}"))),
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Epsilon::Sphere => 1.0,
            Epsilon::Hyperbolic => -1.0,
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Epsilon::Sphere => 1,
            Epsilon::Hyperbolic => -1,
        }
    }

    /// The model's base point (0,0,1), north pole or hyperboloid vertex.
    pub fn center(self) -> Vec3 {
        [0.0, 0.0, 1.0]
    }
}

#[inline]
pub fn dot3(eps: Epsilon, a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + eps.value() * a[2] * b[2]
}

#[inline]
pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Factor complex structure without the tangency check.
#[inline]
pub fn j3(eps: Epsilon, p: &Vec3, v: &Vec3) -> Vec3 {
    let c = cross3(p, v);
    [c[0], c[1], eps.value() * c[2]]
}

/// Projection of an ℝ³ vector onto `T_p M²(ε)`.
#[inline]
pub fn tangent_part3(eps: Epsilon, p: &Vec3, v: &Vec3) -> Vec3 {
    // ⟨p,p⟩ = ε, so the coefficient along p is ε⟨v,p⟩.
    let k = eps.value() * dot3(eps, v, p);
    [v[0] - k * p[0], v[1] - k * p[1], v[2] - k * p[2]]
}

#[inline]
pub fn dot6(eps: Epsilon, a: &Vec6, b: &Vec6) -> f64 {
    let e = eps.value();
    a[0] * b[0] + a[1] * b[1] + e * a[2] * b[2] + a[3] * b[3] + a[4] * b[4] + e * a[5] * b[5]
}

#[inline]
pub fn split6(v: &Vec6) -> (Vec3, Vec3) {
    ([v[0], v[1], v[2]], [v[3], v[4], v[5]])
}

#[inline]
pub fn join6(a: &Vec3, b: &Vec3) -> Vec6 {
    [a[0], a[1], a[2], b[0], b[1], b[2]]
}

/// `Φ̂ = (φ, −ψ)`.
#[inline]
pub fn hat6(p: &Vec6) -> Vec6 {
    [p[0], p[1], p[2], -p[3], -p[4], -p[5]]
}

/// Product complex structure `J₁ = (J, J)` or `J₂ = (J, −J)` without checks.
#[inline]
pub fn j6(eps: Epsilon, which: u8, p: &Vec6, v: &Vec6) -> Vec6 {
    let (p1, p2) = split6(p);
    let (v1, v2) = split6(v);
    let a = j3(eps, &p1, &v1);
    let mut b = j3(eps, &p2, &v2);
    if which == 2 {
        b = [-b[0], -b[1], -b[2]];
    }
    join6(&a, &b)
}

/// Projection of an ℝ⁶ vector onto `T(M²(ε)×M²(ε))` at `p`.
#[inline]
pub fn tangent_part6(eps: Epsilon, p: &Vec6, v: &Vec6) -> Vec6 {
    let (p1, p2) = split6(p);
    let (v1, v2) = split6(v);
    join6(&tangent_part3(eps, &p1, &v1), &tangent_part3(eps, &p2, &v2))
}

/// Unit tangent `e` at `p` together with `J e`, a positively oriented
/// orthonormal basis of `T_p M²(ε)`.
pub fn oriented_factor_basis(eps: Epsilon, p: &Vec3) -> (Vec3, Vec3) {
    let mut best = [0.0; 3];
    let mut best_n = -1.0;
    for k in 0..3 {
        let mut c = [0.0; 3];
        c[k] = 1.0;
        let t = tangent_part3(eps, p, &c);
        let n = dot3(eps, &t, &t);
        if n > best_n {
            best_n = n;
            best = t;
        }
    }
    let s = best_n.sqrt();
    let e = [best[0] / s, best[1] / s, best[2] / s];
    (e, j3(eps, p, &e))
}

/// Positively oriented orthonormal basis of `T(M²×M²)` at `p`, ordered
/// `(e, Je, 0), (0, f, Jf)` so that it is positive for `π₁*ω ∧ π₂*ω`.
pub fn oriented_product_basis(eps: Epsilon, p: &Vec6) -> [Vec6; 4] {
    let (p1, p2) = split6(p);
    let (e, je) = oriented_factor_basis(eps, &p1);
    let (f, jf) = oriented_factor_basis(eps, &p2);
    let z = [0.0; 3];
    [join6(&e, &z), join6(&je, &z), join6(&z, &f), join6(&z, &jf)]
}

/// Determinant of the 4×4 matrix `m`.
pub fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for c in 0..4 {
        let piv = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        det *= a[c][c];
        for r in (c + 1)..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

/// The vector `w` with `w_i = det(v₁, v₂, v₃, e_i)` in ℝ⁴; it is orthogonal
/// to the `v_k` and `det(v₁, v₂, v₃, w) = |w|² ≥ 0`.
pub fn cross4(v1: &[f64; 4], v2: &[f64; 4], v3: &[f64; 4]) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (i, wi) in w.iter_mut().enumerate() {
        let mut e = [0.0; 4];
        e[i] = 1.0;
        *wi = det4(&[*v1, *v2, *v3, e]);
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorPoint {
    pub coords: Vec3,
    pub eps: Epsilon,
}

impl FactorPoint {
    pub fn new(eps: Epsilon, coords: Vec3) -> Result<Self> {
        let n = dot3(eps, &coords, &coords);
        if (n - eps.value()).abs() > QUADRIC_TOL * (1.0 + coords[2].abs().powi(2)) {
            return Err(Error::Domain(format!("point {coords:?} is off the model quadric (⟨p,p⟩ = {n})")));
        }
        if eps == Epsilon::Hyperbolic && coords[2] <= 0.0 {
            return Err(Error::Domain("hyperboloid point must have x₃ > 0".into()));
        }
        Ok(Self { coords, eps })
    }

    pub fn center(eps: Epsilon) -> Self {
        Self { coords: eps.center(), eps }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductPoint {
    pub first: FactorPoint,
    pub second: FactorPoint,
}

impl ProductPoint {
    pub fn new(first: FactorPoint, second: FactorPoint) -> Result<Self> {
        if first.eps != second.eps {
            return Err(Error::Usage("product factors must share the same ε".into()));
        }
        Ok(Self { first, second })
    }

    pub fn from_coords(eps: Epsilon, c: &Vec6) -> Result<Self> {
        let (a, b) = split6(c);
        Self::new(FactorPoint::new(eps, a)?, FactorPoint::new(eps, b)?)
    }

    pub fn eps(&self) -> Epsilon {
        self.first.eps
    }

    pub fn coords(&self) -> Vec6 {
        join6(&self.first.coords, &self.second.coords)
    }

    /// `Φ̂ = (φ, −ψ)` as a free ambient vector.
    pub fn hat(&self) -> AmbientVector {
        AmbientVector { coords: hat6(&self.coords()), eps: self.eps() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbientVector {
    pub coords: Vec6,
    pub eps: Epsilon,
}

impl AmbientVector {
    pub fn new(eps: Epsilon, coords: Vec6) -> Self {
        Self { coords, eps }
    }

    pub fn from_point(p: &ProductPoint) -> Self {
        Self { coords: p.coords(), eps: p.eps() }
    }
}

/// The product metric of ℝ⁶ (ε = +1) or ℝ⁶₂ (ε = −1).
pub fn inner(v: &AmbientVector, w: &AmbientVector) -> Result<f64> {
    if v.eps != w.eps {
        return Err(Error::Usage("inner product of vectors with different ε".into()));
    }
    Ok(dot6(v.eps, &v.coords, &w.coords))
}

/// Factor complex structure, rotation by +90° in `T_p M²(ε)`.
pub fn factor_j(p: &FactorPoint, v: &Vec3) -> Result<Vec3> {
    factor_j_with_tol(p, v, TANGENCY_TOL)
}

pub fn factor_j_with_tol(p: &FactorPoint, v: &Vec3, tol: f64) -> Result<Vec3> {
    let t = dot3(p.eps, &p.coords, v);
    let scale = 1.0 + v.iter().map(|c| c.abs()).fold(0.0, f64::max);
    if t.abs() > tol * scale {
        return Err(Error::Precondition(format!("vector not tangent at p (⟨p,v⟩ = {t:e})")));
    }
    Ok(j3(p.eps, &p.coords, v))
}

/// `J₁ = (J, J)` for `which = 1`, `J₂ = (J, −J)` for `which = 2`.
pub fn product_j(which: u8, p: &ProductPoint, v: &AmbientVector) -> Result<AmbientVector> {
    product_j_with_tol(which, p, v, TANGENCY_TOL)
}

pub fn product_j_with_tol(which: u8, p: &ProductPoint, v: &AmbientVector, tol: f64) -> Result<AmbientVector> {
    if which != 1 && which != 2 {
        return Err(Error::Usage(format!("complex structure index must be 1 or 2, got {which}")));
    }
    if v.eps != p.eps() {
        return Err(Error::Usage("vector and point have different ε".into()));
    }
    let (v1, v2) = split6(&v.coords);
    let a = factor_j_with_tol(&p.first, &v1, tol)?;
    let mut b = factor_j_with_tol(&p.second, &v2, tol)?;
    if which == 2 {
        b = [-b[0], -b[1], -b[2]];
    }
    Ok(AmbientVector { coords: join6(&a, &b), eps: v.eps })
}

/// Kähler form `ω_j(v, w) = ⟨J_j v, w⟩` on the product.
pub fn kaehler_form(which: u8, p: &ProductPoint, v: &AmbientVector, w: &AmbientVector) -> Result<f64> {
    inner(&product_j(which, p, v)?, w)
}

/// `(α ∧ β)(v₁,…,v₄)` for 2-forms given as callables.
pub fn wedge_2forms(alpha: impl Fn(usize, usize) -> f64, beta: impl Fn(usize, usize) -> f64) -> f64 {
    // Sum over (2,2)-shuffles of {0,1,2,3}.
    const SHUFFLES: [([usize; 2], [usize; 2], f64); 6] = [
        ([0, 1], [2, 3], 1.0),
        ([0, 2], [1, 3], -1.0),
        ([0, 3], [1, 2], 1.0),
        ([1, 2], [0, 3], 1.0),
        ([1, 3], [0, 2], -1.0),
        ([2, 3], [0, 1], 1.0),
    ];
    SHUFFLES.iter().map(|(a, b, s)| s * alpha(a[0], a[1]) * beta(b[0], b[1])).sum()
}
