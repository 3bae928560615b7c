use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DoubleDouble;

/// Words longer than this are multiplied out in double-double arithmetic.
pub const EXTENDED_PRECISION_WORD_LENGTH: usize = 30;

/// Determinants this close to one are taken as exact.
pub const UNIMODULAR_SLACK: f64 = 1e-8;

/// Orientation-preserving isometry of the upper half-plane, stored as a real
/// 2×2 matrix normalized to unit determinant.
///
/// Hyperbolic representatives carry positive trace, which fixes the sign
/// ambiguity of the PSL(2,R) lift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoebiusMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MoebiusMap {
    pub const IDENTITY: MoebiusMap = MoebiusMap {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    /// Builds a map from any matrix with positive determinant.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !det.is_finite() || det <= 0.0 {
            return Err(Error::InvalidMap(format!(
                "determinant {det} is not positive"
            )));
        }
        Ok(MoebiusMap { a, b, c, d }.normalized())
    }

    /// `z ↦ λ z`, translation length `|ln λ|` along the imaginary axis.
    pub fn dilation(lambda: f64) -> Self {
        let s = lambda.sqrt();
        MoebiusMap {
            a: s,
            b: 0.0,
            c: 0.0,
            d: 1.0 / s,
        }
    }

    /// Hyperbolic translation by `length` along the geodesic `(-1, 1)`.
    pub fn translation_along_unit_circle(length: f64) -> Self {
        let (sh, ch) = ((0.5 * length).sinh(), (0.5 * length).cosh());
        MoebiusMap {
            a: ch,
            b: sh,
            c: sh,
            d: ch,
        }
    }

    /// Elliptic rotation fixing `i` by angle `angle`.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        MoebiusMap { a: c, b: s, c: -s, d: c }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Rescales to determinant one and applies the positive-trace convention
    /// for hyperbolic elements.
    pub fn normalized(self) -> Self {
        let det = self.det();
        let scale = (self.a * self.d).abs() + (self.b * self.c).abs();
        // products of unimodular maps carry det - 1 as rounding noise that
        // rescaling would spread into the trace
        let s = if (det - 1.0).abs() <= UNIMODULAR_SLACK || (scale > 1e6 && det < 1e-6 * scale) {
            1.0
        } else {
            1.0 / det.sqrt()
        };
        let mut m = MoebiusMap {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        };
        if m.trace().abs() > 2.0 && m.trace() < 0.0 {
            m = MoebiusMap {
                a: -m.a,
                b: -m.b,
                c: -m.c,
                d: -m.d,
            };
        }
        m
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MoebiusMap) -> MoebiusMap {
        MoebiusMap {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
        .normalized()
    }

    pub fn inverse(&self) -> MoebiusMap {
        MoebiusMap {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
        .normalized()
    }

    pub fn power(&self, n: i32) -> MoebiusMap {
        let base = if n < 0 { self.inverse() } else { *self };
        let mut out = MoebiusMap::IDENTITY;
        for _ in 0..n.unsigned_abs() {
            out = out.compose(&base);
        }
        out
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (z * self.a + self.b) / (z * self.c + self.d)
    }

    /// Action on the boundary line; returns `None` at the pole.
    pub fn apply_real(&self, x: f64) -> Option<f64> {
        let den = self.c * x + self.d;
        if den == 0.0 {
            None
        } else {
            Some((self.a * x + self.b) / den)
        }
    }

    /// Image of the point at infinity, `None` if it is fixed.
    pub fn image_of_infinity(&self) -> Option<f64> {
        if self.c == 0.0 {
            None
        } else {
            Some(self.a / self.c)
        }
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let w = z * self.c + self.d;
        (w * w).inv()
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.trace().abs() > 2.0
    }

    /// Repelling and attracting fixed points on the boundary line
    /// (`f64::INFINITY` stands for the point at infinity).
    pub fn fixed_points(&self) -> Result<(f64, f64)> {
        if !self.is_hyperbolic() {
            return Err(Error::NotHyperbolic { trace: self.trace() });
        }
        let m = self.normalized();
        let disc = (m.trace() * m.trace() - 4.0).sqrt();
        if m.c == 0.0 {
            // fixes infinity and b/(d-a)
            let finite = m.b / (m.d - m.a);
            return Ok(if m.a > m.d {
                (finite, f64::INFINITY)
            } else {
                (f64::INFINITY, finite)
            });
        }
        let x1 = (m.a - m.d + disc) / (2.0 * m.c);
        let x2 = (m.a - m.d - disc) / (2.0 * m.c);
        // derivative 1/(cx + d)^2 is below one at the attracting point
        if (m.c * x1 + m.d).abs() > 1.0 {
            Ok((x2, x1))
        } else {
            Ok((x1, x2))
        }
    }
}

/// Matrix product `f ∘ g`, renormalized to unit determinant.
pub fn compose(f: &MoebiusMap, g: &MoebiusMap) -> MoebiusMap {
    f.compose(g)
}

/// Translation length `2 arccosh(|tr g| / 2)` of a hyperbolic map.
pub fn translation_length(g: &MoebiusMap) -> Result<f64> {
    let g = g.normalized();
    translation_length_from_trace(g.trace())
}

pub fn translation_length_from_trace(trace: f64) -> Result<f64> {
    let t = trace.abs();
    if !(t > 2.0) {
        return Err(Error::NotHyperbolic { trace });
    }
    // 2 arccosh(t/2) = 2 ln((t + sqrt(t^2 - 4)) / 2), stable for large t
    Ok(2.0 * ((t + ((t - 2.0) * (t + 2.0)).sqrt()) * 0.5).ln())
}

/// Hyperbolic distance in the upper half-plane.
pub fn hyperbolic_distance(z: Complex64, w: Complex64) -> f64 {
    let num = (z - w).norm();
    2.0 * (num / (2.0 * (z.im * w.im).sqrt())).asinh()
}

/// `d(i, g·i)` from the Frobenius norm: `cosh d = (a²+b²+c²+d²)/2`.
pub fn displacement_of_i(g: &MoebiusMap) -> f64 {
    let x = 0.5 * (g.a * g.a + g.b * g.b + g.c * g.c + g.d * g.d);
    (x + ((x - 1.0).max(0.0) * (x + 1.0)).sqrt()).ln()
}

/// Product of a sequence of maps, switching to double-double accumulation for
/// long words. Returns the product together with its trace computed at the
/// working precision.
pub fn product_with_trace<'a, I>(maps: I) -> (MoebiusMap, f64)
where
    I: IntoIterator<Item = &'a MoebiusMap>,
    I::IntoIter: ExactSizeIterator,
{
    let iter = maps.into_iter();
    if iter.len() <= EXTENDED_PRECISION_WORD_LENGTH {
        let mut acc = MoebiusMap::IDENTITY;
        for m in iter {
            acc = acc.compose(m);
        }
        return (acc, acc.trace());
    }
    let dd = DoubleDouble::from_f64;
    let mut acc = [dd(1.0), dd(0.0), dd(0.0), dd(1.0)];
    for m in iter {
        let (ma, mb, mc, md) = (dd(m.a), dd(m.b), dd(m.c), dd(m.d));
        acc = [
            acc[0].mul(ma).add(acc[1].mul(mc)),
            acc[0].mul(mb).add(acc[1].mul(md)),
            acc[2].mul(ma).add(acc[3].mul(mc)),
            acc[2].mul(mb).add(acc[3].mul(md)),
        ];
    }
    let trace = acc[0].add(acc[3]).to_f64();
    let det = acc[0].mul(acc[3]).sub(acc[1].mul(acc[2])).to_f64();
    let scale = (acc[0].to_f64() * acc[3].to_f64()).abs();
    let det = if det > 1e-20 * scale { det } else { 1.0 };
    let m = MoebiusMap {
        a: acc[0].to_f64(),
        b: acc[1].to_f64(),
        c: acc[2].to_f64(),
        d: acc[3].to_f64(),
    }
    .normalized();
    (m, trace.abs() / det.sqrt())
}

/// Point models of the hyperbolic plane. Internally everything lives in the
/// upper half-plane; the model tag controls how points are read and written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    UpperHalfPlane,
    Disk,
}

impl Model {
    /// Center of the model (`i` in the half-plane, `0` in the disk), in
    /// half-plane coordinates.
    pub fn center(&self) -> Complex64 {
        Complex64::new(0.0, 1.0)
    }

    /// Converts a half-plane point into this model's coordinates.
    pub fn to_model(&self, z: Complex64) -> Complex64 {
        match self {
            Model::UpperHalfPlane => z,
            Model::Disk => {
                let i = Complex64::new(0.0, 1.0);
                (z - i) / (z + i)
            }
        }
    }

    /// Converts a point given in this model into half-plane coordinates.
    pub fn from_model(&self, w: Complex64) -> Complex64 {
        match self {
            Model::UpperHalfPlane => w,
            Model::Disk => {
                let i = Complex64::new(0.0, 1.0);
                i * (w + 1.0) / (Complex64::new(1.0, 0.0) - w)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_composition_and_diagonal_powers() {
        let g = MoebiusMap::new(2.0, 1.0, 3.0, 2.0).unwrap();
        assert_eq!(compose(&MoebiusMap::IDENTITY, &g), g);
        let h = MoebiusMap::dilation(1f64.exp());
        let hh = compose(&h, &h);
        assert!((hh.a - 1f64.exp()).abs() < 1e-14);
        assert!((hh.d - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(hh.b, 0.0);
        assert_eq!(hh.c, 0.0);
    }

    #[test]
    fn translation_length_of_dilation_and_elliptic_error() {
        let h = MoebiusMap::dilation(1f64.exp());
        assert!((translation_length(&h).unwrap() - 1.0).abs() < 1e-14);
        let r = MoebiusMap::rotation(0.7);
        assert!(matches!(
            translation_length(&r),
            Err(Error::NotHyperbolic { .. })
        ));
    }

    #[test]
    fn negative_trace_is_flipped() {
        let g = MoebiusMap::new(-3.0, 0.0, 0.0, -1.0 / 3.0).unwrap();
        assert!(g.trace() > 0.0);
        assert!((g.det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_points_are_fixed_and_attracting() {
        let g = MoebiusMap::translation_along_unit_circle(2.0);
        let (rep, att) = g.fixed_points().unwrap();
        assert!((rep + 1.0).abs() < 1e-12 && (att - 1.0).abs() < 1e-12);
        let mut z = c(0.3, 0.2);
        for _ in 0..40 {
            z = g.apply(z);
        }
        assert!((z - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn cayley_round_trip() {
        let z = c(0.4, 2.5);
        let w = Model::Disk.to_model(z);
        assert!(w.norm() < 1.0);
        assert!((Model::Disk.from_model(w) - z).norm() < 1e-14);
        assert!(Model::Disk.to_model(Model::Disk.center()).norm() < 1e-15);
    }

    #[test]
    fn long_products_switch_precision() {
        let g = MoebiusMap::translation_along_unit_circle(0.9);
        let word: Vec<MoebiusMap> = std::iter::repeat(g).take(40).collect();
        let (_, tr) = product_with_trace(word.iter());
        let len = translation_length_from_trace(tr).unwrap();
        assert!((len - 36.0).abs() < 1e-10);
    }

    #[test]
    fn products_with_large_entries_stay_finite() {
        let g = MoebiusMap::new(33.378922668901254, 0.4426698511746002, -19.848680257339467, -0.233273326786643).unwrap();
        let h = MoebiusMap::new(16.572824671057553, -29.551685460422313, -9.260335351907974, 16.57282467105754).unwrap();
        let word: Vec<MoebiusMap> = (0..12).map(|i| if i % 2 == 0 { g } else { h }).collect();
        let (p, tr) = product_with_trace(word.iter());
        assert!(p.a.is_finite() && p.d.is_finite());
        let gh = g.compose(&h);
        let expect = 6.0 * translation_length(&gh).unwrap();
        assert!((translation_length_from_trace(tr).unwrap() - expect).abs() < 1e-9);
    }
}
