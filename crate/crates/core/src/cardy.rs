//! Cardy's crossing formula and Carleson's triangle form.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::crossing::Triplet;
use crate::special::{ellip_k_pair, modulus_from_period_ratio};
use crate::{Error, Result};

/// Γ on the positive axis.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::OutOfDomain {
            function: "gamma",
            value: x,
        });
    }
    Ok(gamma(x))
}

fn series_2f1(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..2000 {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * x;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `₂F₁(1/3, 2/3; 4/3; x)` for `x ∈ [0, 1]`.
pub fn hyp2f1_131343(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain {
            function: "2F1(1/3,2/3;4/3)",
            value: x,
        });
    }
    let (a, b, c) = (1.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0);
    if x <= 0.5 {
        return Ok(series_2f1(a, b, c, x));
    }
    // x ↦ 1 − x; the first branch collapses to x^{-1/3} because c − b = a
    let y = 1.0 - x;
    let first = gamma(c) * gamma(1.0 / 3.0) / gamma(2.0 / 3.0) * x.powf(-1.0 / 3.0);
    let second = y.powf(1.0 / 3.0) * gamma(c) * gamma(-1.0 / 3.0) / (gamma(a) * gamma(b))
        * series_2f1(1.0, 2.0 / 3.0, 4.0 / 3.0, y);
    Ok(first + second)
}

/// The angle `θ(r)` and cross-ratio `η = sin²θ` of an `r`-rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardyInput {
    pub theta: f64,
    pub eta: f64,
    /// `1 − η`, kept separately for precision on wide rectangles.
    pub eta_complement: f64,
    /// Elliptic modulus of the rectangle and its complement.
    pub k: f64,
    pub kp: f64,
}

/// Solves `K(k')/(2K(k)) = r` and returns `η = 4k/(1+k)²`.
pub fn theta_of_r(r: f64) -> Result<CardyInput> {
    if !(r > 1e-6 && r < 1e6) {
        return Err(Error::ExtremeAspect(r));
    }
    let (k, kp) = modulus_from_period_ratio(2.0 * r);
    let eta = 4.0 * k / ((1.0 + k) * (1.0 + k));
    let one_minus_k = kp * kp / (1.0 + k);
    let eta_complement = (one_minus_k / (1.0 + k)).powi(2);
    let theta = if eta <= 0.5 {
        eta.sqrt().asin()
    } else {
        eta_complement.sqrt().acos()
    };
    Ok(CardyInput {
        theta,
        eta,
        eta_complement,
        k,
        kp,
    })
}

/// `K(k')/(2K(k))`, the aspect ratio with modulus `k`.
pub fn aspect_of_modulus(k: f64, kp: f64) -> f64 {
    ellip_k_pair(kp, k) / (2.0 * ellip_k_pair(k, kp))
}

/// Crossing probability as a function of the cross-ratio.
pub fn cardy_value(eta: f64) -> Result<f64> {
    let pref = 3.0 * gamma(2.0 / 3.0) / gamma(1.0 / 3.0).powi(2);
    Ok(pref * eta.powf(1.0 / 3.0) * hyp2f1_131343(eta)?)
}

/// Probability of an open crossing between the horizontal sides of a
/// rectangle whose height is `r` times its width.
pub fn cardy(r: f64) -> Result<f64> {
    let inp = theta_of_r(r)?;
    if inp.eta > 0.5 {
        // evaluate the complementary crossing where η is small
        Ok(1.0 - cardy_value(inp.eta_complement)?)
    } else {
        cardy_value(inp.eta)
    }
}

/// Carleson's form: in the unit equilateral triangle the crossing from a
/// side to the length-`x` segment at the opposite vertex has probability
/// `x`. Returns the value and, for `x > 0`, the triplet.
pub fn carleson_triangle(x: f64) -> Result<(f64, Option<Triplet>)> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain {
            function: "carleson_triangle",
            value: x,
        });
    }
    let t = if x > 0.0 { Some(Triplet::carleson(x)?) } else { None };
    Ok((x, t))
}

/// `(r, η, cardy)` rows on a log grid of `n` points from `r_min` to `r_max`.
pub fn cardy_table(r_min: f64, r_max: f64, n: usize) -> Result<Vec<(f64, f64, f64)>> {
    if n < 2 || !(r_min > 0.0 && r_max > r_min) {
        return Err(Error::InvalidArgument("need n ≥ 2 and 0 < r_min < r_max".into()));
    }
    (0..n)
        .map(|i| {
            let r = r_min * (r_max / r_min).powf(i as f64 / (n - 1) as f64);
            Ok((r, theta_of_r(r)?.eta, cardy(r)?))
        })
        .collect()
}
