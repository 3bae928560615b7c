//! Small numerical building blocks shared by the modules: adaptive
//! Gauss–Kronrod quadrature, bracketed root finding, least squares,
//! pairwise summation and double-double arithmetic.

use num_complex::Complex64;

use crate::error::{Error, Result};

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive quadrature: value and estimated absolute error.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: f64,
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    ((kron * h), ((kron - gauss) * h).norm())
}

/// Adaptive G7/K15 quadrature of a complex-valued integrand.
pub fn integrate_complex<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Quadrature<Complex64> {
    if a == b {
        return Quadrature {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        };
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= abs_tol || intervals.len() >= max_intervals {
            break;
        }
        // split the interval with the largest error
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, iv)| if iv.3 > best.1 { (i, iv.3) } else { best });
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    // sum in position order for reproducibility
    intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let value = intervals.iter().fold(Complex64::new(0.0, 0.0), |acc, iv| acc + iv.2);
    let error = intervals.iter().map(|iv| iv.3).sum();
    Quadrature { value, error }
}

/// Adaptive G7/K15 quadrature of a real integrand.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Quadrature<f64> {
    let q = integrate_complex(|x| Complex64::new(f(x), 0.0), a, b, abs_tol, max_intervals);
    Quadrature {
        value: q.value.re,
        error: q.error,
    }
}

/// Bisection on a bracketing interval `[lo, hi]` (signs of `f` must differ).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracketing(format!(
            "f({lo}) = {flo:.3e} and f({hi}) = {fhi:.3e} have the same sign"
        )));
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Brent's method for a bracketed root.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracketing(format!(
            "f({a}) = {fa:.3e} and f({b}) = {fb:.3e} have the same sign"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Ok(b)
}

/// Ordinary least squares `y ≈ X β` via SVD; returns coefficients and
/// their standard errors. Fails when the design matrix is rank deficient.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let p = design.first().map(|r| r.len()).unwrap_or(0);
    if n <= p || p == 0 {
        return Err(Error::Estimation(format!(
            "least squares needs more observations ({n}) than parameters ({p})"
        )));
    }
    let x = nalgebra::DMatrix::from_fn(n, p, |i, j| design[i][j]);
    let yv = nalgebra::DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin / smax < 1e-13 {
        return Err(Error::Conditioning(format!(
            "design matrix condition number {:.3e}",
            smax / smin.max(f64::MIN_POSITIVE)
        )));
    }
    let beta = svd
        .solve(&yv, 1e-14 * smax)
        .map_err(|e| Error::Conditioning(e.to_string()))?;
    let resid = &yv - &x * &beta;
    let dof = (n - p) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("singular normal matrix".into()))?;
    let se = (0..p).map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt()).collect();
    Ok((beta.iter().copied().collect(), se))
}

/// Simple linear regression `y = intercept + slope x`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let design: Vec<Vec<f64>> = x.iter().map(|&xi| vec![1.0, xi]).collect();
    let (beta, se) = least_squares(&design, y)?;
    Ok(LinearFit {
        intercept: beta[0],
        slope: beta[1],
        slope_stderr: se[1],
    })
}

/// Weighted linear regression with weights `w_i` (inverse variances).
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 3 {
        return Err(Error::Estimation(format!("weighted fit needs >= 3 points, got {n}")));
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
    let sy: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum();
    let xm = sx / sw;
    let ym = sy / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm) * (a - xm)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - xm) * (c - ym))
        .sum();
    if sxx <= 0.0 {
        return Err(Error::Conditioning("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearFit {
        intercept: ym - slope * xm,
        slope,
        slope_stderr: (1.0 / sxx).sqrt(),
    })
}

/// Growth exponent of `|y|` in `x`: maxima of `|y|` over `blocks`
/// log-spaced blocks of `[lo, hi]`, regressed on a log-log scale.
/// Blocks whose maximum is not positive are skipped.
pub fn envelope_exponent(x: &[f64], y: &[f64], lo: f64, hi: f64, blocks: usize) -> Result<LinearFit> {
    if !(lo > 0.0 && hi > lo) || blocks < 3 {
        return Err(Error::Definition(format!(
            "envelope fit needs 0 < lo < hi and >= 3 blocks (lo {lo}, hi {hi}, blocks {blocks})"
        )));
    }
    let ratio = (hi / lo).ln() / blocks as f64;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for b in 0..blocks {
        let a = lo * (ratio * b as f64).exp();
        let c = lo * (ratio * (b + 1) as f64).exp();
        let mut best: Option<(f64, f64)> = None;
        for (&xi, &yi) in x.iter().zip(y) {
            if xi >= a && xi <= c && best.map_or(true, |(_, m)| yi.abs() > m) {
                best = Some((xi, yi.abs()));
            }
        }
        if let Some((xm, m)) = best {
            if m > 0.0 {
                lx.push(xm.ln());
                ly.push(m.ln());
            }
        }
    }
    if lx.len() < 3 {
        return Err(Error::Estimation(format!(
            "envelope fit has only {} usable blocks",
            lx.len()
        )));
    }
    linear_fit(&lx, &ly)
}

/// Pairwise (cascade) summation; deterministic for a fixed input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Unevaluated sum `hi + lo` carrying roughly 106 bits of mantissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        (s, err)
    }

    fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    pub fn add(self, other: Self) -> Self {
        let (s1, s2) = Self::two_sum(self.hi, other.hi);
        let (t1, t2) = Self::two_sum(self.lo, other.lo);
        let (s1, s2) = Self::quick_two_sum(s1, s2 + t1);
        let (hi, lo) = Self::quick_two_sum(s1, s2 + t2);
        DoubleDouble { hi, lo }
    }

    pub fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, other: Self) -> Self {
        self.add(other.neg())
    }

    #[inline]
    fn split(a: f64) -> (f64, f64) {
        let t = 134_217_729.0 * a;
        let hi = t - (t - a);
        (hi, a - hi)
    }

    // exact product without relying on a hardware fma
    #[inline]
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        let (ah, al) = Self::split(a);
        let (bh, bl) = Self::split(b);
        let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
        (p, e)
    }

    pub fn mul(self, other: Self) -> Self {
        let (p, e) = Self::two_prod(self.hi, other.hi);
        let e = e + (self.hi * other.lo + self.lo * other.hi);
        let (hi, lo) = Self::quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = Self::two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = Self::quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }

    pub fn div(self, other: Self) -> Self {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r = r.sub(other.mul_f64(q2));
        let q3 = r.hi / other.hi;
        let (hi, lo) = Self::quick_two_sum(q1, q2);
        DoubleDouble { hi, lo }.add(DoubleDouble::from_f64(q3))
    }
}

#[allow(clippy::excessive_precision)]
const DD_LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_56e-17,
};
#[allow(clippy::excessive_precision)]
const DD_TWO_PI: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::TAU,
    lo: 2.449_293_598_294_706_41e-16,
};
#[allow(clippy::excessive_precision)]
pub const DD_PI: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::PI,
    lo: 1.224_646_799_147_353_21e-16,
};

impl DoubleDouble {
    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return DoubleDouble::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return DoubleDouble::ZERO;
        }
        let k = (self.hi / DD_LN2.hi).round();
        let r = self.sub(DD_LN2.mul_f64(k)).mul_f64(1.0 / 1024.0);
        // Taylor series of exp(r) - 1 with |r| < 4e-4
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = term.mul(r).div(DoubleDouble::from_f64(n as f64));
            sum = sum.add(term);
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + e)² - 1 = e(2 + e), ten times
        for _ in 0..10 {
            sum = sum.mul(sum.add(DoubleDouble::from_f64(2.0)));
        }
        let v = sum.add(DoubleDouble::from_f64(1.0));
        let scale = 2f64.powi(k as i32);
        DoubleDouble {
            hi: v.hi * scale,
            lo: v.lo * scale,
        }
    }

    /// Natural logarithm of a positive value.
    pub fn ln(self) -> Self {
        let mut y = DoubleDouble::from_f64(self.hi.ln());
        for _ in 0..2 {
            // y ← y + x·e^{-y} - 1
            y = y.add(self.mul(y.neg().exp())).sub(DoubleDouble::from_f64(1.0));
        }
        y
    }

    pub fn sin_cos(self) -> (Self, Self) {
        let k = (self.hi / DD_TWO_PI.hi).round();
        let r = self.sub(DD_TWO_PI.mul_f64(k)).mul_f64(1.0 / 256.0);
        let r2 = r.mul(r);
        let mut term = r;
        let mut sin = r;
        let mut n = 1.0;
        loop {
            term = term.mul(r2).div(DoubleDouble::from_f64(-(n + 1.0) * (n + 2.0)));
            sin = sin.add(term);
            n += 2.0;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // series of cos(r) - 1
        let mut term = r2.mul_f64(-0.5);
        let mut cm1 = term;
        let mut n = 2.0;
        loop {
            term = term.mul(r2).div(DoubleDouble::from_f64(-(n + 1.0) * (n + 2.0)));
            cm1 = cm1.add(term);
            n += 2.0;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // sin 2r = 2 sin r cos r, cos 2r - 1 = -2 sin² r
        for _ in 0..8 {
            let c = cm1.add(DoubleDouble::from_f64(1.0));
            let s2 = sin.mul(c).mul_f64(2.0);
            cm1 = sin.mul(sin).mul_f64(-2.0);
            sin = s2;
        }
        (sin, cm1.add(DoubleDouble::from_f64(1.0)))
    }
}

/// Complex number with double-double parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexDD {
    pub re: DoubleDouble,
    pub im: DoubleDouble,
}

impl ComplexDD {
    pub const ZERO: ComplexDD = ComplexDD {
        re: DoubleDouble::ZERO,
        im: DoubleDouble::ZERO,
    };

    pub fn new(re: DoubleDouble, im: DoubleDouble) -> Self {
        ComplexDD { re, im }
    }

    pub fn from_c64(z: num_complex::Complex64) -> Self {
        ComplexDD {
            re: DoubleDouble::from_f64(z.re),
            im: DoubleDouble::from_f64(z.im),
        }
    }

    pub fn to_c64(self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn add(self, o: Self) -> Self {
        ComplexDD::new(self.re.add(o.re), self.im.add(o.im))
    }

    pub fn sub(self, o: Self) -> Self {
        ComplexDD::new(self.re.sub(o.re), self.im.sub(o.im))
    }

    pub fn mul(self, o: Self) -> Self {
        ComplexDD::new(
            self.re.mul(o.re).sub(self.im.mul(o.im)),
            self.re.mul(o.im).add(self.im.mul(o.re)),
        )
    }

    pub fn norm_sqr(self) -> DoubleDouble {
        self.re.mul(self.re).add(self.im.mul(self.im))
    }

    pub fn div(self, o: Self) -> Self {
        let d = o.norm_sqr();
        let n = self.mul(ComplexDD::new(o.re, o.im.neg()));
        ComplexDD::new(n.re.div(d), n.im.div(d))
    }

    pub fn abs_approx(self) -> f64 {
        self.re.hi.hypot(self.im.hi)
    }

    pub fn exp(self) -> Self {
        let m = self.re.exp();
        let (s, c) = self.im.sin_cos();
        ComplexDD::new(m.mul(c), m.mul(s))
    }
}

#[cfg(test)]
#[allow(clippy::approx_constant, clippy::excessive_precision)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomial_and_oscillatory() {
        let q = integrate(|x| x * x * x - 2.0 * x, 0.0, 3.0, 1e-13, 100);
        assert!((q.value - (81.0 / 4.0 - 9.0)).abs() < 1e-12);
        let q = integrate(|x| (20.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-12, 500);
        assert!(q.value.abs() < 1e-11);
    }

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn envelope_of_modulated_power() {
        let x: Vec<f64> = (1..=4000).map(|i| 5.0 + i as f64 * 0.0125).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powf(0.3) * (3.0 * v).sin()).collect();
        let f = envelope_exponent(&x, &y, 5.0, 50.0, 10).unwrap();
        assert!((f.slope - 0.3).abs() < 0.02, "{}", f.slope);
    }

    #[test]
    fn regression_recovers_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 3.0).abs() < 1e-12);
    }

    fn dd_close(a: DoubleDouble, hi: f64, lo: f64, tol: f64) -> bool {
        let d = a.sub(DoubleDouble { hi, lo });
        d.to_f64().abs() <= tol * hi.abs()
    }

    #[test]
    fn double_double_elementary_functions() {
        let one = DoubleDouble::from_f64(1.0);
        assert!(dd_close(one.exp(), 2.718_281_828_459_045_09, 1.445_646_891_729_250_16e-16, 1e-30));
        assert!(dd_close(
            DoubleDouble::from_f64(-30.25).exp(),
            7.287_724_095_819_692_19e-14,
            2.333_907_004_163_197_34e-30,
            1e-30
        ));
        assert!(dd_close(
            DoubleDouble::from_f64(10.0).ln(),
            2.302_585_092_994_045_90,
            -2.170_756_223_382_249_35e-16,
            1e-30
        ));
        let (s, c) = one.sin_cos();
        assert!(dd_close(s, 8.414_709_848_078_965_05e-1, 1.776_845_092_935_536_11e-18, 1e-30));
        assert!(dd_close(c, 5.403_023_058_681_397_65e-1, -4.760_954_612_604_417_22e-17, 1e-30));
        let (s, c) = DoubleDouble::from_f64(1000.3).sin_cos();
        assert!(dd_close(s, 9.561_425_780_290_661_04e-1, -5.420_782_831_073_069_35e-17, 1e-28));
        assert!(dd_close(c, 2.929_016_395_992_540_82e-1, 2.406_034_570_400_040_37e-17, 1e-28));
    }

    #[test]
    fn double_double_keeps_low_bits() {
        let a = DoubleDouble::from_f64(1.0).add(DoubleDouble::from_f64(1e-20));
        let b = a.sub(DoubleDouble::from_f64(1.0));
        assert!((b.to_f64() - 1e-20).abs() < 1e-35);
        let third = DoubleDouble::from_f64(1.0 / 3.0);
        let p = third.mul(DoubleDouble::from_f64(3.0));
        assert!((p.to_f64() - 1.0).abs() < 1e-16);
    }
}
