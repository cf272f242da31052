//! Elliptic integrals and functions, theta-function inversion and the
//! Carlson symmetric integral `R_F`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{Error, Result};

/// Arithmetic–geometric mean.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a.abs() {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    0.5 * (a + b)
}

/// Complete elliptic integral of the first kind `K(k)` for modulus `k`,
/// given with its complement `k' = √(1−k²)` so that values near `k = 1`
/// keep full precision.
pub fn ellip_k_pair(k: f64, kp: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&k) && kp >= 0.0);
    let _ = k;
    PI / (2.0 * agm(1.0, kp))
}

pub fn ellip_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::OutOfDomain {
            function: "K",
            value: k,
        });
    }
    Ok(ellip_k_pair(k, ((1.0 - k) * (1.0 + k)).sqrt()))
}

fn theta_sums(q: f64) -> (f64, f64, f64) {
    // θ₂/(2q^{1/4}), θ₃, θ₄
    let (mut t2, mut t3, mut t4) = (0.0, 1.0, 1.0);
    let mut n = 0u32;
    loop {
        let nf = n as f64;
        let a = q.powf(nf * (nf + 1.0));
        t2 += a;
        if n > 0 {
            let b = q.powf(nf * nf);
            t3 += 2.0 * b;
            t4 += if n.is_multiple_of(2) { 2.0 * b } else { -2.0 * b };
            if b < 1e-18 && a < 1e-18 {
                break;
            }
        }
        n += 1;
        if n > 200 {
            break;
        }
    }
    (t2, t3, t4)
}

/// Modulus and complement `(k, k')` with `K(k')/K(k) = tau`, computed from
/// theta functions of the nome `e^{−π τ}` (or of the conjugate nome when
/// `τ < 1`).
pub fn modulus_from_period_ratio(tau: f64) -> (f64, f64) {
    let pair = |tau: f64| {
        let q = (-PI * tau).exp();
        let (s2, t3, t4) = theta_sums(q);
        let t2 = 2.0 * q.powf(0.25) * s2;
        ((t2 / t3).powi(2), (t4 / t3).powi(2))
    };
    if tau >= 1.0 {
        pair(tau)
    } else {
        let (kp, k) = pair(1.0 / tau);
        (k, kp)
    }
}

/// Jacobi `(sn, cn, dn)` of a real argument by the AGM scale. Near `±K`
/// the values come from the reflection `u ↦ K − u`, which keeps `cn`
/// accurate in relative terms where it is tiny.
pub fn jacobi_real(u: f64, k: f64, kp: f64) -> (f64, f64, f64) {
    if k != 0.0 && kp != 0.0 {
        let big_k = ellip_k_pair(k, kp);
        let v = big_k - u.abs();
        if v.abs() < 0.5 * big_k {
            let (sv, cv, dv) = jacobi_agm(v, k, kp);
            return ((cv / dv).copysign(u), kp * sv / dv, kp / dv);
        }
    }
    jacobi_agm(u, k, kp)
}

fn jacobi_agm(u: f64, k: f64, kp: f64) -> (f64, f64, f64) {
    const SMALL: f64 = 1e-10;
    let m = k * k;
    if m < SMALL {
        let (s, c) = u.sin_cos();
        let e = 0.25 * m * (u - s * c);
        return (s - e * c, c + e * s, 1.0 - 0.5 * m * s * s);
    }
    let m1 = kp * kp;
    if m1 < SMALL {
        // accurate for |u| ≲ K/2, where m1·e^{2u} stays small
        let (t, sech) = (u.tanh(), 1.0 / u.cosh());
        let sc = u.sinh() * u.cosh();
        let e = 0.25 * m1 * (sc - u);
        let f = 0.25 * m1 * (sc + u);
        return (t + e * sech * sech, sech - e * t * sech, sech + f * t * sech);
    }
    let mut a = [0.0f64; 40];
    let mut c = [0.0f64; 40];
    a[0] = 1.0;
    let mut b = kp;
    c[0] = k;
    let mut n = 0;
    while c[n].abs() > 1e-17 && n < 38 {
        let an = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
        a[n] = an;
    }
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let (s, cn) = phi.sin_cos();
    // 1 − k² sn² written without cancellation
    let dn = (cn * cn + kp * kp * s * s).sqrt();
    (s, cn, dn)
}

/// Jacobi `(sn, cn, dn)` of a complex argument via the addition formulas.
pub fn jacobi_complex(z: Complex64, k: f64, kp: f64) -> (Complex64, Complex64, Complex64) {
    // far from the real axis, shift by iK′ so the imaginary part stays small
    if k != 0.0 && kp != 0.0 {
        let big_kp = ellip_k_pair(kp, k);
        if z.im.abs() > 0.5 * big_kp {
            let shift = big_kp.copysign(z.im);
            let (s, c, d) = jacobi_addition(z - Complex64::new(0.0, shift), k, kp);
            let i = Complex64::i();
            // sn(u + iK′) = 1/(k sn u), cn = −i dn/(k sn), dn = −i cn/sn;
            // the shift by −iK′ differs by a period 2iK′ that flips cn, dn
            if s.norm() == 0.0 {
                let inf = Complex64::new(f64::INFINITY, 0.0);
                return (inf, inf, inf);
            }
            let sign = if z.im > 0.0 { 1.0 } else { -1.0 };
            return (1.0 / (k * s), -i * d / (k * s) * sign, -i * c / s * sign);
        }
    }
    jacobi_addition(z, k, kp)
}

fn jacobi_addition(z: Complex64, k: f64, kp: f64) -> (Complex64, Complex64, Complex64) {
    let (s, c, d) = jacobi_real(z.re, k, kp);
    let (s1, c1, d1) = jacobi_real(z.im, kp, k);
    let den = c1 * c1 + k * k * s * s * s1 * s1;
    let sn = Complex64::new(s * d1, c * d * s1 * c1) / den;
    let cn = Complex64::new(c * c1, -s * d * s1 * d1) / den;
    let dn = Complex64::new(d * c1 * d1, -k * k * s * c * s1) / den;
    (sn, cn, dn)
}

/// Carlson's `R_F(x, y, z)` by duplication; valid for complex arguments in
/// a common half-plane avoiding the negative real axis.
pub fn carlson_rf(mut x: Complex64, mut y: Complex64, mut z: Complex64) -> Complex64 {
    for _ in 0..100 {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lam = sx * sy + sx * sz + sy * sz;
        x = (x + lam) * 0.25;
        y = (y + lam) * 0.25;
        z = (z + lam) * 0.25;
        let a = (x + y + z) / 3.0;
        let dx = (a - x) / a;
        let dy = (a - y) / a;
        let dz = (a - z) / a;
        let m = dx.norm().max(dy.norm()).max(dz.norm());
        if m < 1e-4 {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / a.sqrt();
        }
    }
    let a = (x + y + z) / 3.0;
    1.0 / a.sqrt()
}

/// Incomplete integral `F(arcsin w, k) = w·R_F(1−w², 1−k²w², 1)`, the
/// inverse of `sn`.
pub fn inverse_sn(w: Complex64, k: f64) -> Complex64 {
    let w2 = w * w;
    w * carlson_rf(1.0 - w2, 1.0 - k * k * w2, Complex64::new(1.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn k_reference_values() {
        // K(1/√2) = Γ(1/4)² / (4√π)
        let g14 = 3.625_609_908_221_908;
        let want = g14 * g14 / (4.0 * PI.sqrt());
        assert_relative_eq!(ellip_k(0.5f64.sqrt()).unwrap(), want, max_relative = 1e-14);
        assert_relative_eq!(ellip_k(0.0).unwrap(), PI / 2.0, max_relative = 1e-15);
        assert!(ellip_k(1.0).is_err());
    }

    #[test]
    fn theta_inversion_round_trip() {
        for tau in [0.01, 0.3, 1.0, 2.0, 7.5, 40.0] {
            let (k, kp) = modulus_from_period_ratio(tau);
            assert_relative_eq!(k * k + kp * kp, 1.0, max_relative = 1e-14);
            let ratio = ellip_k_pair(kp, k) / ellip_k_pair(k, kp);
            assert_relative_eq!(ratio, tau, max_relative = 1e-12);
        }
        // K'/K = 2 at k = (√2 − 1)²
        let (k, _) = modulus_from_period_ratio(2.0);
        assert_relative_eq!(k, (2f64.sqrt() - 1.0).powi(2), max_relative = 1e-14);
    }

    #[test]
    fn jacobi_identities() {
        for &(u, k) in &[(0.3, 0.5), (1.2, 0.9), (-2.0, 0.1), (0.7, 0.999)] {
            let kp = ((1.0f64 - k) * (1.0 + k)).sqrt();
            let (s, c, d) = jacobi_real(u, k, kp);
            assert_relative_eq!(s * s + c * c, 1.0, epsilon = 1e-14);
            assert_relative_eq!(d * d + k * k * s * s, 1.0, epsilon = 1e-14);
        }
        // sn(K) = 1
        let k = 0.6;
        let kp = 0.8;
        let (s, c, d) = jacobi_real(ellip_k_pair(k, kp), k, kp);
        assert_relative_eq!(s, 1.0, epsilon = 1e-14);
        assert!(c.abs() < 1e-7);
        assert_relative_eq!(d, kp, epsilon = 1e-12);
    }

    #[test]
    fn complex_jacobi_and_inverse() {
        let (k, kp) = (0.3, (1.0f64 - 0.09).sqrt());
        for z in [
            Complex64::new(0.2, 0.4),
            Complex64::new(-1.0, 1.3),
            Complex64::new(1.5, 0.01),
        ] {
            let (sn, cn, dn) = jacobi_complex(z, k, kp);
            assert!((sn * sn + cn * cn - 1.0).norm() < 1e-13);
            assert!((dn * dn + k * k * sn * sn - 1.0).norm() < 1e-13);
            assert!((inverse_sn(sn, k) - z).norm() < 1e-12, "{z}");
        }
        // sn(iK') has a pole; sn(K + iK') = 1/k
        let (kk, kkp) = (ellip_k_pair(k, kp), ellip_k_pair(kp, k));
        let (sn, _, _) = jacobi_complex(Complex64::new(kk, kkp), k, kp);
        assert!((sn - 1.0 / k).norm() < 1e-10);
    }

    #[test]
    fn carlson_reference() {
        // R_F(0, 1, 2) = 1.3110287771461
        let v = carlson_rf(
            Complex64::new(1e-300, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
        );
        assert_relative_eq!(v.re, 1.311_028_777_146_059_9, max_relative = 1e-13);
    }
}
