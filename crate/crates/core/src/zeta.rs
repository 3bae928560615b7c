//! Selberg zeta function: Euler product with a certified truncation bound,
//! the funnel zeta function, the logarithmic derivative and the argument
//! integral along the critical line.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{nodes_for_height, TransferDiscretization};
use crate::error::{Error, Result};
use crate::geometry::SchottkySurface;
use crate::numerics::{envelope_exponent, integrate};
use crate::spectrum::{counting_exponent, LengthSpectrum};

/// Default bound on the truncation error of `log Z`.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Safety factor applied to the measured counting constants.
pub const TAIL_INFLATION: f64 = 1.2;
/// Repetition terms `e^{-σ m ℓ}` below this are dropped (and bounded).
const REPETITION_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaValue {
    pub s: Complex64,
    pub value: Complex64,
    pub log_value: Complex64,
    pub tail_bound: f64,
    pub terms_used: usize,
}

/// A value together with a bound on its truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: Complex64,
    pub tail_bound: f64,
}

/// `N(R) ≤ C e^{κR}` beyond the spectrum cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub constant: f64,
    pub exponent: f64,
    pub cutoff: f64,
    /// True when the spectrum is known to be complete for every cutoff.
    pub exhaustive: bool,
}

impl TailModel {
    pub fn from_spectrum(spec: &LengthSpectrum, delta_hint: f64) -> Result<Self> {
        if spec.rank == 1 && !spec.entries.is_empty() {
            return Ok(TailModel {
                constant: 0.0,
                exponent: 0.0,
                cutoff: spec.cutoff,
                exhaustive: true,
            });
        }
        let fitted = counting_exponent(spec).map(|e| e.value).unwrap_or(0.0);
        let exponent = TAIL_INFLATION * fitted.max(delta_hint);
        let mut constant: f64 = 0.0;
        for (i, e) in spec.entries.iter().enumerate() {
            constant = constant.max((i + 1) as f64 * (-exponent * e.length).exp());
        }
        if constant == 0.0 {
            // empty spectrum: the first class lies beyond the cutoff
            constant = (-exponent * spec.cutoff).exp();
        }
        Ok(TailModel {
            constant: TAIL_INFLATION * constant,
            exponent,
            cutoff: spec.cutoff,
            exhaustive: false,
        })
    }

    // Σ_{ℓ > L} ℓ^p e^{-σℓ} for p = 0, 1
    fn sum_bound(&self, sigma: f64, power: i32) -> f64 {
        if self.exhaustive {
            return 0.0;
        }
        let a = sigma - self.exponent;
        if a <= 0.0 {
            return f64::INFINITY;
        }
        let l = self.cutoff;
        let base = sigma * self.constant * (-a * l).exp();
        match power {
            0 => base / a,
            _ => base * (l / a + 1.0 / (a * a)),
        }
    }

}

struct Class {
    length: f64,
}

/// Euler-product evaluator for a fixed spectrum.
pub struct ZetaEvaluator {
    classes: Vec<Class>,
    weight: f64,
    delta_hint: f64,
    tolerance: f64,
    pub tail: TailModel,
}

impl ZetaEvaluator {
    pub fn new(spec: &LengthSpectrum, delta_hint: f64) -> Result<Self> {
        Self::with_tolerance(spec, delta_hint, DEFAULT_TOLERANCE)
    }

    pub fn with_tolerance(spec: &LengthSpectrum, delta_hint: f64, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::Definition("zeta tolerance must be positive".into()));
        }
        Ok(ZetaEvaluator {
            classes: spec.entries.iter().map(|e| Class { length: e.length }).collect(),
            weight: spec.oriented_weight(),
            delta_hint,
            tolerance,
            tail: TailModel::from_spectrum(spec, delta_hint)?,
        })
    }

    /// Overrides the per-class multiplicity in the product.
    pub fn with_class_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn delta_hint(&self) -> f64 {
        self.delta_hint
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn check_region(&self, s: Complex64) -> Result<()> {
        if !(s.re > self.delta_hint) {
            return Err(Error::DivergenceRegion {
                re_s: s.re,
                delta: self.delta_hint,
            });
        }
        Ok(())
    }

    // bound on Σ_{ℓ>L} Σ_m ℓ^p e^{-σmℓ}/(m^{1-p} G(m))
    fn geodesic_tail(&self, sigma: f64, power: i32) -> f64 {
        let l = self.tail.cutoff.max(1e-3);
        let k = 1.0 / ((1.0 - (-sigma * l).exp()) * (1.0 - (-l).exp()));
        self.weight * k * self.tail.sum_bound(sigma, power)
    }

    /// Smallest integer cutoff whose geodesic tail is below half the tolerance.
    pub fn needed_cutoff(&self, sigma: f64, power: i32) -> f64 {
        let mut probe = ZetaEvaluator {
            classes: Vec::new(),
            weight: self.weight,
            delta_hint: self.delta_hint,
            tolerance: self.tolerance,
            tail: self.tail,
        };
        if sigma <= self.tail.exponent {
            return f64::INFINITY;
        }
        let mut l = self.tail.cutoff.ceil();
        while l < 1e4 {
            probe.tail.cutoff = l;
            if probe.geodesic_tail(sigma, power) <= 0.5 * self.tolerance {
                return l;
            }
            l += 1.0;
        }
        f64::INFINITY
    }

    fn certify(&self, sigma: f64, tail: f64, power: i32) -> Result<()> {
        if tail > self.tolerance || !tail.is_finite() {
            return Err(Error::TailTooLarge {
                tail,
                tolerance: self.tolerance,
                cutoff: self.tail.cutoff,
                needed: self.needed_cutoff(sigma, power),
            });
        }
        Ok(())
    }

    // Σ_γ Σ_m c(m, ℓ) e^{-smℓ}/G(m) with repetition truncation; returns
    // (sum, truncation bound, terms)
    fn series<C: Fn(f64, f64) -> f64>(&self, s: Complex64, coeff: C) -> (Complex64, f64, usize) {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut dropped = 0.0;
        let mut terms = 0;
        for c in &self.classes {
            let l = c.length;
            let mut m = 1u32;
            loop {
                let ml = m as f64 * l;
                let decay = -s.re * ml;
                if decay.exp() < REPETITION_FLOOR {
                    // geometric remainder of the repetitions m, m+1, ...
                    let q = (-s.re * l).exp();
                    dropped += coeff(m as f64, ml).abs() * decay.exp() / ((1.0 - q) * (1.0 - (-ml).exp()));
                    break;
                }
                // 1/G(m) in log space
                let log_mag = decay - (-(-ml).exp()).ln_1p();
                let phase = -s.im * ml;
                acc += coeff(m as f64, ml) * Complex64::from_polar(log_mag.exp(), phase);
                terms += 1;
                m += 1;
            }
        }
        (acc * self.weight, dropped * self.weight, terms)
    }

    /// `Z(s)` from the Euler product.
    pub fn value(&self, s: Complex64) -> Result<ZetaValue> {
        self.check_region(s)?;
        let (sum, dropped, terms) = self.series(s, |m, _| 1.0 / m);
        let tail = self.geodesic_tail(s.re, 0) + dropped;
        self.certify(s.re, tail, 0)?;
        let log_value = -sum;
        Ok(ZetaValue {
            s,
            value: log_value.exp(),
            log_value,
            tail_bound: tail,
            terms_used: terms,
        })
    }

    /// `Z'/Z(s)` by termwise differentiation.
    pub fn log_derivative(&self, s: Complex64) -> Result<Bounded> {
        let b = self.log_derivative_bounded(s)?;
        self.certify(s.re, b.tail_bound, 1)?;
        Ok(b)
    }

    /// `Z'/Z(s)` with its tail bound attached but not enforced.
    pub fn log_derivative_bounded(&self, s: Complex64) -> Result<Bounded> {
        self.check_region(s)?;
        let (sum, dropped, _) = self.series(s, |m, ml| ml / m);
        let tail = self.geodesic_tail(s.re, 1) + dropped;
        Ok(Bounded { value: sum, tail_bound: tail })
    }
}

/// `Z(s)` from the Euler product at the default tolerance.
pub fn zeta_euler(s: Complex64, spec: &LengthSpectrum, delta_hint: f64) -> Result<ZetaValue> {
    ZetaEvaluator::new(spec, delta_hint)?.value(s)
}

/// `Z'/Z(s)` by termwise differentiation of the Euler product.
pub fn zeta_logderiv(s: Complex64, spec: &LengthSpectrum, delta_hint: f64) -> Result<Bounded> {
    ZetaEvaluator::new(spec, delta_hint)?.log_derivative(s)
}

/// Funnel zeta `Z_F(s) = e^{-sℓ/4} Π_{k≥0} (1 - e^{-(s+2k+1)ℓ})²`.
pub fn zeta_funnel(s: Complex64, funnel_length: f64) -> ZetaValue {
    let l = funnel_length;
    let mut value = (-s * l / 4.0).exp();
    let mut log_value = -s * l / 4.0;
    let mut terms = 0;
    let mut k = 0u32;
    loop {
        let x = (-(s + (2 * k + 1) as f64) * l).exp();
        if x.norm() < 1e-18 {
            // |log(1 - x)| ≤ 2|x| for |x| ≤ 1/2, geometric in k
            let tail = 4.0 * x.norm() / (1.0 - (-2.0 * l).exp());
            return ZetaValue {
                s,
                value,
                log_value,
                tail_bound: tail,
                terms_used: terms,
            };
        }
        let f = Complex64::new(1.0, 0.0) - x;
        value *= f * f;
        log_value += 2.0 * f.ln();
        terms += 1;
        k += 1;
    }
}

/// `Z_F'/Z_F(s)`.
pub fn zeta_funnel_logderiv(s: Complex64, funnel_length: f64) -> Complex64 {
    let l = funnel_length;
    let mut acc = Complex64::new(-l / 4.0, 0.0);
    let mut k = 0u32;
    loop {
        let x = (-(s + (2 * k + 1) as f64) * l).exp();
        if x.norm() < 1e-18 {
            return acc;
        }
        acc += 2.0 * l * x / (Complex64::new(1.0, 0.0) - x);
        k += 1;
    }
}

/// The funnel zeta function as an analytic function for zero searches.
#[derive(Debug, Clone, Copy)]
pub struct FunnelZeta {
    pub length: f64,
}

impl crate::continuation::Analytic for FunnelZeta {
    fn value(&self, s: Complex64) -> Complex64 {
        zeta_funnel(s, self.length).value
    }
    fn log_derivative(&self, s: Complex64) -> Result<Complex64> {
        Ok(zeta_funnel_logderiv(s, self.length))
    }
}

/// Zeros of `Z_F`: `s = -(2k+1) + 2πim/ℓ`, each of order two.
pub fn funnel_zero(k: u32, m: i64, funnel_length: f64) -> Complex64 {
    Complex64::new(
        -((2 * k + 1) as f64),
        2.0 * std::f64::consts::PI * m as f64 / funnel_length,
    )
}

pub enum ArgRoute<'a> {
    Euler(&'a ZetaEvaluator),
    Determinant(&'a TransferDiscretization),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgValue {
    pub z: f64,
    pub value: f64,
    pub error: f64,
}

/// `Arg Z(1/2 + iz) = ∫_0^z Re(Z'/Z(1/2 + it)) dt`.
pub fn arg_zeta(z: f64, route: ArgRoute<'_>) -> Result<ArgValue> {
    if let ArgRoute::Euler(ev) = &route {
        if ev.delta_hint() >= 0.5 {
            return Err(Error::Route(format!(
                "Euler product diverges on Re(s) = 1/2 for delta = {}; use the determinant route",
                ev.delta_hint()
            )));
        }
    }
    if z == 0.0 {
        return Ok(ArgValue {
            z,
            value: 0.0,
            error: 0.0,
        });
    }
    let mut failure = None;
    let mut worst_tail: f64 = 0.0;
    let mut integrand = |t: f64| {
        let s = Complex64::new(0.5, t);
        let r = match &route {
            ArgRoute::Euler(ev) => ev.log_derivative_bounded(s).map(|b| {
                worst_tail = worst_tail.max(b.tail_bound);
                b.value
            }),
            ArgRoute::Determinant(d) => d.log_derivative(s),
        };
        match r {
            Ok(v) => v.re,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let q = integrate(&mut integrand, 0.0, z, 1e-10 * z.abs().max(1.0), 4000);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ArgValue {
        z,
        value: q.value,
        error: q.error + worst_tail * z.abs(),
    })
}

/// Determinant-route argument with a discretization sized for height `z`.
pub fn arg_zeta_determinant(z: f64, surface: &SchottkySurface) -> Result<ArgValue> {
    let disc = TransferDiscretization::new(surface, nodes_for_height(z))?;
    arg_zeta(z, ArgRoute::Determinant(&disc))
}

/// Smallest `N ≤ max_n` with `Re Z(N + iz) > 1/2` at every sampled `z`.
pub fn zn_bound_search(ev: &ZetaEvaluator, z_samples: &[f64], max_n: u32) -> Result<Option<u32>> {
    'outer: for n in 1..=max_n {
        if (n as f64) <= ev.delta_hint() {
            continue;
        }
        for &z in z_samples {
            let v = match ev.value(Complex64::new(n as f64, z)) {
                Ok(v) => v,
                Err(Error::TailTooLarge { .. }) => continue 'outer,
                Err(e) => return Err(e),
            };
            if !(v.value.re > 0.5) {
                continue 'outer;
            }
        }
        return Ok(Some(n));
    }
    Ok(None)
}

/// Growth exponent of a quantity `q(z)` fitted on the envelope of `|q|`,
/// with the smallest `C` such that `|q(z)| ≤ C z^bound` on the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub exponent: f64,
    pub stderr: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaGrowth {
    pub window: [f64; 2],
    pub delta: f64,
    pub exponent_bound: f64,
    /// `(σ, fit of log|Z(σ + iz)|)`.
    pub log_abs: Vec<(f64, GrowthFit)>,
    /// Fit of `Arg Z(1/2 + iz)`.
    pub argument: GrowthFit,
}

const GROWTH_BLOCKS: usize = 10;

fn growth_fit(zs: &[f64], q: &[f64], window: (f64, f64), bound: f64) -> Result<GrowthFit> {
    let fit = envelope_exponent(zs, q, window.0, window.1, GROWTH_BLOCKS)?;
    let constant = zs
        .iter()
        .zip(q)
        .map(|(z, v)| v.abs() / z.powf(bound))
        .fold(0.0, f64::max);
    Ok(GrowthFit {
        exponent: fit.slope,
        stderr: fit.slope_stderr,
        constant,
    })
}

/// Growth of `log|Z(σ + iz)|` for each `σ` and of `Arg Z(1/2 + iz)` on
/// `samples` evenly spaced heights in `window`, from the Euler product.
pub fn zeta_growth(
    ev: &ZetaEvaluator,
    sigmas: &[f64],
    window: (f64, f64),
    samples: usize,
) -> Result<ZetaGrowth> {
    if ev.delta_hint() >= 0.5 {
        return Err(Error::Route(format!(
            "argument growth needs the product on Re(s) = 1/2; delta = {}",
            ev.delta_hint()
        )));
    }
    let (lo, hi) = window;
    if !(hi > lo && lo > 0.0) || samples < 2 * GROWTH_BLOCKS {
        return Err(Error::Definition("growth window needs 0 < lo < hi and enough samples".into()));
    }
    let zs: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let eval = |sigma: f64| -> Result<Vec<Complex64>> {
        zs.par_iter()
            .map(|&z| ev.value(Complex64::new(sigma, z)).map(|v| v.log_value))
            .collect()
    };
    let bound = ev.delta_hint() + crate::phase::EXPONENT_SLACK;
    let mut log_abs = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let q: Vec<f64> = eval(sigma)?.iter().map(|l| l.re).collect();
        log_abs.push((sigma, growth_fit(&zs, &q, window, bound)?));
    }
    let q: Vec<f64> = eval(0.5)?.iter().map(|l| l.im).collect();
    Ok(ZetaGrowth {
        window: [lo, hi],
        delta: ev.delta_hint(),
        exponent_bound: bound,
        log_abs,
        argument: growth_fit(&zs, &q, window, bound)?,
    })
}

pub fn write_zeta_csv<W: Write>(values: &[ZetaValue], mut out: W) -> Result<()> {
    writeln!(out, "re_s,im_s,re_log_z,im_log_z,tail_bound")?;
    for v in values {
        writeln!(
            out,
            "{},{},{},{},{}",
            v.s.re, v.s.im, v.log_value.re, v.log_value.im, v.tail_bound
        )?;
    }
    Ok(())
}
