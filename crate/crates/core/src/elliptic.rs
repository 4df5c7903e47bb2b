//! Complete elliptic integral of the first kind and Jacobi elliptic
//! functions, parameterized by the modulus κ (so the parameter is `m = κ²`).

use crate::error::{domain, Result};
use std::f64::consts::{FRAC_PI_2, PI};

const MAX_DEPTH: usize = 32;

/// Complete elliptic integral `K(κ) = ∫₀^{π/2} dθ / √(1 − κ² sin²θ)`.
pub fn complete_k(kappa: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&kappa) {
        return domain(format!("elliptic modulus must lie in [0, 1), got {kappa}"));
    }
    let mut a = 1.0_f64;
    let mut b = (1.0 - kappa * kappa).sqrt();
    for _ in 0..MAX_DEPTH {
        if (a - b).abs() < 1e-15 * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    Ok(FRAC_PI_2 / a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnCnDn {
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

/// Jacobi `sn, cn, dn` at `x` with modulus κ ∈ [0, 1].
pub fn jacobi(x: f64, kappa: f64) -> Result<SnCnDn> {
    if !(0.0..=1.0).contains(&kappa) || !x.is_finite() {
        return domain(format!("jacobi functions need κ ∈ [0,1] and finite x (κ = {kappa}, x = {x})"));
    }
    let m = kappa * kappa;
    if m == 0.0 {
        let (s, c) = x.sin_cos();
        return Ok(SnCnDn { sn: s, cn: c, dn: 1.0 });
    }
    if kappa == 1.0 {
        let sech = 1.0 / x.cosh();
        return Ok(SnCnDn { sn: x.tanh(), cn: sech, dn: sech });
    }
    // Reduce modulo the real period 4K for accuracy at large |x|.
    let k = complete_k(kappa)?;
    let period = 4.0 * k;
    let xr = x - period * (x / period).round();

    let mut a = [0.0_f64; MAX_DEPTH + 1];
    let mut c = [0.0_f64; MAX_DEPTH + 1];
    a[0] = 1.0;
    let mut b = (1.0 - m).sqrt();
    c[0] = kappa;
    let mut n = 0;
    while c[n].abs() > 1e-16 && n < MAX_DEPTH {
        let an = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
        a[n] = an;
    }
    let mut phi = (1u64 << n) as f64 * a[n] * xr;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    // dn > 0 for κ < 1; the quotient form cn / cos(φ₁ − φ₀) loses all
    // accuracy where cn vanishes.
    let dn = (1.0 - m * sn * sn).sqrt();
    Ok(SnCnDn { sn, cn, dn })
}

/// Period of `sn` and `cn` in the real direction.
pub fn real_period(kappa: f64) -> Result<f64> {
    Ok(4.0 * complete_k(kappa)?)
}

/// `2π / κ`, used for the second period of the torus parametrization.
pub fn angular_period(kappa: f64) -> Result<f64> {
    if kappa <= 0.0 {
        return domain("angular period needs κ > 0");
    }
    Ok(2.0 * PI / kappa)
}
