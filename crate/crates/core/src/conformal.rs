//! Conformal maps of the rectangle `[0,1] × [0,r]` onto the upper
//! half-plane, the unit disk and the unit-width strip.
//!
//! The half-plane map is `w = sn(2K(z − 1/2), k)` with `K(k')/(2K(k)) = r`.
//! Corners go to `−1, 1, 1/k, −1/k` (counter-clockwise from the origin),
//! the bottom midpoint to `0` and the top midpoint to `∞`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::cardy::theta_of_r;
use crate::crossing::{ArcPoint, BoundaryArc, Triplet};
use crate::special::{ellip_k_pair, inverse_sn, jacobi_complex};
use crate::{Error, Result};

pub trait ConformalMap {
    fn eval(&self, z: Complex64) -> Result<Complex64>;
    fn derivative(&self, z: Complex64) -> Result<Complex64>;
    fn inverse(&self, w: Complex64) -> Result<Complex64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectToHalfPlane {
    pub r: f64,
    pub k: f64,
    pub kp: f64,
    /// `K(k)`, half the image width of the rectangle.
    pub big_k: f64,
    /// `K(k')`, the image height.
    pub big_kp: f64,
}

const EDGE_TOL: f64 = 1e-12;

impl RectToHalfPlane {
    pub fn new(r: f64) -> Result<Self> {
        let inp = theta_of_r(r)?;
        Ok(RectToHalfPlane {
            r,
            k: inp.k,
            kp: inp.kp,
            big_k: ellip_k_pair(inp.k, inp.kp),
            big_kp: ellip_k_pair(inp.kp, inp.k),
        })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let t = EDGE_TOL * (1.0 + self.r);
        z.re >= -t && z.re <= 1.0 + t && z.im >= -t && z.im <= self.r + t
    }

    fn check(&self, z: Complex64) -> Result<()> {
        if self.contains(z) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(format!("{z} not in [0,1]x[0,{}]", self.r)))
        }
    }

    fn zeta(&self, z: Complex64) -> Complex64 {
        2.0 * self.big_k * (z - 0.5)
    }

    /// Images of the corners `(0,0), (1,0), (1,r), (0,r)`.
    pub fn corner_images(&self) -> [f64; 4] {
        [-1.0, 1.0, 1.0 / self.k, -1.0 / self.k]
    }
}

impl ConformalMap for RectToHalfPlane {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.check(z)?;
        Ok(jacobi_complex(self.zeta(z), self.k, self.kp).0)
    }

    fn derivative(&self, z: Complex64) -> Result<Complex64> {
        self.check(z)?;
        let (_, cn, dn) = jacobi_complex(self.zeta(z), self.k, self.kp);
        Ok(2.0 * self.big_k * cn * dn)
    }

    fn inverse(&self, w: Complex64) -> Result<Complex64> {
        if w.im < 0.0 || !w.is_finite() {
            return Err(Error::OutsideDomain(format!("{w} not in the closed upper half-plane")));
        }
        Ok(inverse_sn(w, self.k) / (2.0 * self.big_k) + 0.5)
    }
}

/// Half-plane map followed by `w ↦ (w − iλ)/(w + iλ)`, `λ = 1/√k`. Corners
/// land on `−e^{−iθ}, −e^{iθ}, e^{−iθ}, e^{iθ}` with `sin²θ = η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectToDisk {
    pub half: RectToHalfPlane,
    pub lambda: f64,
}

impl RectToDisk {
    pub fn new(r: f64) -> Result<Self> {
        let half = RectToHalfPlane::new(r)?;
        Ok(RectToDisk {
            lambda: 1.0 / half.k.sqrt(),
            half,
        })
    }

    fn mobius(&self, w: Complex64) -> Complex64 {
        if w.is_infinite() || w.norm() > 1e300 {
            return Complex64::new(1.0, 0.0);
        }
        let il = Complex64::new(0.0, self.lambda);
        (w - il) / (w + il)
    }
}

impl ConformalMap for RectToDisk {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.mobius(self.half.eval(z)?))
    }

    fn derivative(&self, z: Complex64) -> Result<Complex64> {
        let w = self.half.eval(z)?;
        let il = Complex64::new(0.0, self.lambda);
        Ok(2.0 * il / ((w + il) * (w + il)) * self.half.derivative(z)?)
    }

    fn inverse(&self, u: Complex64) -> Result<Complex64> {
        if u.norm() > 1.0 + 1e-12 {
            return Err(Error::OutsideDomain(format!("{u} not in the closed unit disk")));
        }
        let w = Complex64::new(0.0, self.lambda) * (1.0 + u) / (1.0 - u);
        self.half.inverse(Complex64::new(w.re, w.im.max(0.0)))
    }
}

/// `Φ = (1/π) log w`: the rectangle onto `{0 < Im Φ < 1}` with the bottom
/// midpoint sent to `−∞` and the top midpoint to `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectToStrip {
    pub half: RectToHalfPlane,
}

impl RectToStrip {
    pub fn new(r: f64) -> Result<Self> {
        Ok(RectToStrip {
            half: RectToHalfPlane::new(r)?,
        })
    }
}

impl ConformalMap for RectToStrip {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.half.eval(z)?.ln() / PI)
    }

    fn derivative(&self, z: Complex64) -> Result<Complex64> {
        let w = self.half.eval(z)?;
        Ok(self.half.derivative(z)? / (PI * w))
    }

    fn inverse(&self, phi: Complex64) -> Result<Complex64> {
        if phi.im < -1e-12 || phi.im > 1.0 + 1e-12 {
            return Err(Error::OutsideDomain(format!("{phi} not in the strip")));
        }
        let w = (PI * phi).exp();
        self.half.inverse(Complex64::new(w.re, w.im.max(0.0)))
    }
}

pub fn rect_to_halfplane(r: f64) -> Result<RectToHalfPlane> {
    RectToHalfPlane::new(r)
}

pub fn rect_to_disk(r: f64) -> Result<RectToDisk> {
    RectToDisk::new(r)
}

pub fn rect_to_strip(r: f64) -> Result<RectToStrip> {
    RectToStrip::new(r)
}

/// Image of the `r`-rectangle triplet under `map` as a polygon with
/// `per_side` points on each side. `I` and `J` stay the images of the
/// bottom and top sides.
pub fn conformal_image_triplet(r: f64, map: &dyn ConformalMap, per_side: usize) -> Result<Triplet> {
    if per_side == 0 {
        return Err(Error::InvalidArgument("need at least one point per side".into()));
    }
    let corners = [
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(1.0, r),
        Complex64::new(0.0, r),
    ];
    let mut polygon = Vec::with_capacity(4 * per_side);
    for s in 0..4 {
        let (a, b) = (corners[s], corners[(s + 1) % 4]);
        for j in 0..per_side {
            let w = map.eval(a + (b - a) * (j as f64 / per_side as f64))?;
            if !w.is_finite() {
                return Err(Error::OutsideDomain("image polygon is unbounded".into()));
            }
            polygon.push([w.re, w.im]);
        }
    }
    let n = per_side;
    Triplet::new(
        format!("image-rect-r{r}"),
        polygon,
        BoundaryArc {
            start: ArcPoint { edge: 0, t: 0.0 },
            end: ArcPoint { edge: n - 1, t: 1.0 },
        },
        BoundaryArc {
            start: ArcPoint { edge: 2 * n, t: 0.0 },
            end: ArcPoint {
                edge: 3 * n - 1,
                t: 1.0,
            },
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64) -> Complex64 {
        Complex64::new(x, y)
    }

    #[test]
    fn half_plane_corners_and_midpoints() {
        for r in [0.5, 1.0, 3.0] {
            let m = RectToHalfPlane::new(r).unwrap();
            let want = m.corner_images();
            for (z, w) in [c(0.0, 0.0), c(1.0, 0.0), c(1.0, r), c(0.0, r)].into_iter().zip(want) {
                let got = m.eval(z).unwrap();
                assert!((got - w).norm() < 1e-9 * w.abs().max(1.0), "r={r} {z}: {got} vs {w}");
            }
            assert!(m.eval(c(0.5, 0.0)).unwrap().norm() < 1e-14);
            assert!(m.eval(c(0.5, r)).unwrap().norm() > 1e12);
            assert!(m.eval(c(1.5, 0.2)).is_err());
        }
    }

    #[test]
    fn strip_map_on_long_rectangle_is_nearly_affine() {
        let r = 40.0 / 3.0;
        let m = rect_to_strip(r).unwrap();
        let base = m.eval(c(0.5, r / 2.0)).unwrap();
        for y in [4.0, 6.0, 6.67, 8.0, 9.5] {
            for x in [0.1, 0.5, 0.9] {
                let phi = m.eval(c(x, y)).unwrap() - base;
                assert!((phi - c(y - r / 2.0, 0.5 - x)).norm() < 1e-8, "({x},{y}) {phi}");
                assert!((m.derivative(c(x, y)).unwrap() - c(0.0, -1.0)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn disk_corners_on_cardy_angle() {
        let m = RectToDisk::new(1.0).unwrap();
        let theta = theta_of_r(1.0).unwrap().theta;
        let e = Complex64::from_polar(1.0, theta);
        let want = [-e.conj(), -e, e.conj(), e];
        for (z, w) in [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0)]
            .into_iter()
            .zip(want)
        {
            assert!((m.eval(z).unwrap() - w).norm() < 1e-6, "{z}");
        }
    }

    #[test]
    fn inverse_round_trip_on_grid() {
        let r = 1.7;
        let half = RectToHalfPlane::new(r).unwrap();
        let disk = RectToDisk::new(r).unwrap();
        let strip = RectToStrip::new(r).unwrap();
        let maps: [&dyn ConformalMap; 3] = [&half, &disk, &strip];
        for i in 0..20 {
            for j in 0..20 {
                let z = c((i as f64 + 0.5) / 20.0, r * (j as f64 + 0.5) / 20.0);
                for m in maps {
                    let back = m.inverse(m.eval(z).unwrap()).unwrap();
                    assert!((back - z).norm() < 1e-6, "{z} -> {back}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_differences_and_keep_angles() {
        let r = 0.8;
        let disk = RectToDisk::new(r).unwrap();
        let strip = RectToStrip::new(r).unwrap();
        let maps: [&dyn ConformalMap; 2] = [&disk, &strip];
        let h = 1e-6;
        for z in [c(0.3, 0.2), c(0.7, 0.5), c(0.5, 0.4)] {
            for m in maps {
                let dx = (m.eval(z + h).unwrap() - m.eval(z - h).unwrap()) / (2.0 * h);
                let dy = (m.eval(z + c(0.0, h)).unwrap() - m.eval(z - c(0.0, h)).unwrap()) / (2.0 * h);
                assert!((dx - m.derivative(z).unwrap()).norm() < 1e-6 * dx.norm().max(1.0));
                // images of orthogonal directions stay orthogonal
                let cos = (dx.re * dy.re + dx.im * dy.im) / (dx.norm() * dy.norm());
                assert!(cos.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn strip_image_has_unit_width() {
        let s = RectToStrip::new(2.0).unwrap();
        assert!((s.eval(c(0.0, 1.0)).unwrap().im - 1.0).abs() < 1e-12);
        assert!(s.eval(c(1.0, 1.0)).unwrap().im.abs() < 1e-12);
    }

    #[test]
    fn image_triplet_is_valid() {
        let d = RectToDisk::new(1.0).unwrap();
        let t = conformal_image_triplet(1.0, &d, 64).unwrap();
        assert_eq!(t.polygon.len(), 256);
        assert!(t.polygon.iter().all(|p| (p[0].hypot(p[1]) - 1.0).abs() < 1e-9));
    }
}
