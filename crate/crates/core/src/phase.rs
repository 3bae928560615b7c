//! Scattering phase `s(z) = ξ(z) - Σ_j ξ_{F_j}(z)`, the Weyl fit of its
//! growth, the Breit–Wigner comparison against resonances and the probe sum
//! over closed geodesics.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{find_resonances, ResonanceSet, SearchBox, TransferDiscretization};
use crate::error::{Error, Result};
use crate::geometry::SchottkySurface;
use crate::numerics::{envelope_exponent, integrate, least_squares, linear_fit};
use crate::spectrum::LengthSpectrum;
use crate::zeta::{arg_zeta, zeta_funnel, zeta_funnel_logderiv, ArgRoute, ZetaEvaluator};

/// Step of the five-point difference used for `∂_z s`.
pub const FD_STEP: f64 = 1e-3;
/// Slack added to δ when judging fitted growth exponents.
pub const EXPONENT_SLACK: f64 = 0.1;

/// `Γ(n/2+it)Γ(n/2-it) / (Γ(it)Γ(-it))`; only `n = 1` is supported, where
/// the ratio equals `t tanh(πt)`.
pub fn gamma_ratio(t: f64, n: u32) -> Result<f64> {
    if n != 1 {
        return Err(Error::OutOfScope(format!(
            "gamma ratio implemented for surfaces (n = 1), got n = {n}"
        )));
    }
    // |Γ(1/2+it)|² = π/cosh(πt), |Γ(it)|² = π/(t sinh(πt))
    Ok(t * (PI * t).tanh())
}

/// `F(z) = -∫_0^z t tanh(πt) dt`, the factor of `χ` in the Krein function.
pub fn gamma_phase(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let q = integrate(|t| t * (PI * t).tanh(), 0.0, z, 1e-12, 200);
    -q.value
}

/// `F'(z)`.
pub fn gamma_phase_derivative(z: f64) -> f64 {
    -z * (PI * z).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiRoute {
    ExactSeries,
    ArgumentIntegral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiValue {
    pub z: f64,
    pub xi: f64,
    pub error: f64,
}

/// `ξ(z) = χF(z) + (1/π) Σ_γ Σ_m e^{-mℓ/2} sin(zmℓ) / (m G_γ(m))`.
/// The sine series is `Im log Z(1/2 + iz)` of the Euler product.
pub fn xi_exact_series(z: f64, ev: &ZetaEvaluator, chi: i64) -> Result<XiValue> {
    if ev.delta_hint() >= 0.5 {
        return Err(Error::Route(format!(
            "exact series needs delta < 1/2 (delta = {}); use the argument route",
            ev.delta_hint()
        )));
    }
    let v = ev.value(Complex64::new(0.5, z))?;
    Ok(XiValue {
        z,
        xi: chi as f64 * gamma_phase(z) + v.log_value.im / PI,
        error: v.tail_bound / PI,
    })
}

/// `ξ(z) = χF(z) + (1/π) Arg Z(1/2 + iz) + c/2` with the argument integral
/// taken on the determinant.
pub fn xi_argument_route(
    z: f64,
    disc: &TransferDiscretization,
    chi: i64,
    c: u32,
) -> Result<XiValue> {
    let a = arg_zeta(z, ArgRoute::Determinant(disc))?;
    Ok(XiValue {
        z,
        xi: chi as f64 * gamma_phase(z) + a.value / PI + 0.5 * c as f64,
        error: a.error / PI,
    })
}

/// Multiplicity of `λ = 1/2` as a zero of the determinant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalZero {
    pub c: u32,
    /// A zero lies within 1e-6 of 1/2 but not at it to working accuracy.
    pub ambiguous: bool,
    pub distance: Option<f64>,
}

pub fn critical_multiplicity(disc: &TransferDiscretization) -> Result<CriticalZero> {
    let bx = SearchBox::new(0.49, 0.51, -0.01, 0.01);
    let set = find_resonances(&bx, disc)?;
    let half = Complex64::new(0.5, 0.0);
    let nearest = set
        .resonances
        .iter()
        .map(|r| ((r.lambda - half).norm(), r.multiplicity))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    Ok(match nearest {
        Some((d, m)) if d < 1e-10 => CriticalZero {
            c: m,
            ambiguous: false,
            distance: Some(d),
        },
        Some((d, _)) if d < 1e-6 => CriticalZero {
            c: 0,
            ambiguous: true,
            distance: Some(d),
        },
        other => CriticalZero {
            c: 0,
            ambiguous: false,
            distance: other.map(|o| o.0),
        },
    })
}

/// `ξ_F(z) = (1/π) Arg Z_F(1/2 + iz)`, continuous with `ξ_F(0) = 0`.
pub fn funnel_xi(z: f64, funnel_length: f64) -> f64 {
    zeta_funnel(Complex64::new(0.5, z), funnel_length).log_value.im / PI
}

pub fn funnel_xi_derivative(z: f64, funnel_length: f64) -> f64 {
    zeta_funnel_logderiv(Complex64::new(0.5, z), funnel_length).re / PI
}

/// Sup norms of `ξ_F` and of its bounded part `ξ_F + zℓ/(4π)` on `[0, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelPhaseSup {
    pub funnel_length: f64,
    pub z_max: f64,
    pub sup_xi: f64,
    pub sup_bounded_part: f64,
}

pub fn funnel_phase_sup(funnel_length: f64, z_max: f64, samples: usize) -> FunnelPhaseSup {
    let mut sup_xi: f64 = 0.0;
    let mut sup_b: f64 = 0.0;
    for i in 0..=samples {
        let z = z_max * i as f64 / samples as f64;
        let x = funnel_xi(z, funnel_length);
        sup_xi = sup_xi.max(x.abs());
        sup_b = sup_b.max((x + z * funnel_length / (4.0 * PI)).abs());
    }
    FunnelPhaseSup {
        funnel_length,
        z_max,
        sup_xi,
        sup_bounded_part: sup_b,
    }
}

pub enum PhaseSource {
    Series(ZetaEvaluator),
    Determinant(TransferDiscretization),
}

/// Everything needed to evaluate `s(z)` on one surface.
pub struct PhaseModel {
    pub chi: i64,
    pub volume: f64,
    pub funnel_lengths: Vec<f64>,
    pub critical: CriticalZero,
    pub source: PhaseSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub z: f64,
    pub xi: f64,
    pub xi_funnels: f64,
    pub s: f64,
    pub ds_dz: f64,
    pub route: XiRoute,
}

impl PhaseModel {
    /// Exact-series model; requires `δ < 1/2`.
    pub fn series(surface: &SchottkySurface, ev: ZetaEvaluator) -> Result<Self> {
        if ev.delta_hint() >= 0.5 {
            return Err(Error::Route(format!(
                "exact series needs delta < 1/2 (delta = {})",
                ev.delta_hint()
            )));
        }
        Ok(PhaseModel {
            chi: surface.euler_characteristic,
            volume: surface.core_volume(),
            funnel_lengths: surface.funnel_lengths(),
            critical: CriticalZero {
                c: 0,
                ambiguous: false,
                distance: None,
            },
            source: PhaseSource::Series(ev),
        })
    }

    /// Argument-integral model on the determinant, valid for any δ.
    pub fn argument(surface: &SchottkySurface, disc: TransferDiscretization) -> Result<Self> {
        let critical = critical_multiplicity(&disc)?;
        Ok(PhaseModel {
            chi: surface.euler_characteristic,
            volume: surface.core_volume(),
            funnel_lengths: surface.funnel_lengths(),
            critical,
            source: PhaseSource::Determinant(disc),
        })
    }

    pub fn route(&self) -> XiRoute {
        match self.source {
            PhaseSource::Series(_) => XiRoute::ExactSeries,
            PhaseSource::Determinant(_) => XiRoute::ArgumentIntegral,
        }
    }

    /// `Z'/Z(1/2 + iz)`.
    pub fn log_derivative(&self, z: f64) -> Result<Complex64> {
        let s = Complex64::new(0.5, z);
        match &self.source {
            PhaseSource::Series(ev) => Ok(ev.log_derivative_bounded(s)?.value),
            PhaseSource::Determinant(d) => d.log_derivative(s),
        }
    }

    pub fn xi(&self, z: f64) -> Result<XiValue> {
        match &self.source {
            PhaseSource::Series(ev) => xi_exact_series(z, ev, self.chi),
            PhaseSource::Determinant(d) => xi_argument_route(z, d, self.chi, self.critical.c),
        }
    }

    /// `ξ'(z) = χF'(z) + (1/π) Re Z'/Z(1/2 + iz)`.
    pub fn xi_derivative(&self, z: f64) -> Result<f64> {
        Ok(self.chi as f64 * gamma_phase_derivative(z) + self.log_derivative(z)?.re / PI)
    }

    pub fn funnels_xi(&self, z: f64) -> f64 {
        self.funnel_lengths.iter().map(|&l| funnel_xi(z, l)).sum()
    }

    pub fn funnels_xi_derivative(&self, z: f64) -> f64 {
        self.funnel_lengths.iter().map(|&l| funnel_xi_derivative(z, l)).sum()
    }

    /// `s(z)` alone.
    pub fn phase(&self, z: f64) -> Result<f64> {
        Ok(self.xi(z)?.xi - self.funnels_xi(z) - 0.5 * self.critical.c as f64)
    }

    /// `∂_z s` by termwise differentiation.
    pub fn phase_derivative(&self, z: f64) -> Result<f64> {
        Ok(self.xi_derivative(z)? - self.funnels_xi_derivative(z))
    }

    /// `∂_z s` by five-point central differences of the computed phase.
    pub fn phase_derivative_fd(&self, z: f64) -> Result<f64> {
        let h = FD_STEP;
        let f = |t: f64| self.phase(t);
        Ok((f(z - 2.0 * h)? - 8.0 * f(z - h)? + 8.0 * f(z + h)? - f(z + 2.0 * h)?) / (12.0 * h))
    }
}

/// Full phase sample at `z`; `s(0) = 0` by construction.
pub fn scattering_phase(z: f64, model: &PhaseModel) -> Result<PhaseSample> {
    let xi = model.xi(z)?.xi;
    let xi_f = model.funnels_xi(z);
    Ok(PhaseSample {
        z,
        xi,
        xi_funnels: xi_f,
        s: xi - xi_f - 0.5 * model.critical.c as f64,
        ds_dz: model.phase_derivative(z)?,
        route: model.route(),
    })
}

/// Phase samples at increasing `zs`. The argument route integrates
/// incrementally between consecutive points.
pub fn phase_table(model: &PhaseModel, zs: &[f64]) -> Result<Vec<PhaseSample>> {
    if zs.windows(2).any(|w| !(w[1] > w[0])) || zs.first().map_or(false, |&z| z < 0.0) {
        return Err(Error::Definition("phase grid must be increasing and non-negative".into()));
    }
    match &model.source {
        PhaseSource::Series(_) => zs.par_iter().map(|&z| scattering_phase(z, model)).collect(),
        PhaseSource::Determinant(d) => {
            let mut out = Vec::with_capacity(zs.len());
            let mut arg = 0.0;
            let mut prev = 0.0;
            let c = model.critical.c as f64;
            for &z in zs {
                if z > prev {
                    let mut failure = None;
                    let q = integrate(
                        |t| match d.log_derivative(Complex64::new(0.5, t)) {
                            Ok(v) => v.re,
                            Err(e) => {
                                failure.get_or_insert(e);
                                0.0
                            }
                        },
                        prev,
                        z,
                        1e-10,
                        2000,
                    );
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    arg += q.value;
                    prev = z;
                }
                let xi = model.chi as f64 * gamma_phase(z) + arg / PI + 0.5 * c;
                let xi_f = model.funnels_xi(z);
                out.push(PhaseSample {
                    z,
                    xi,
                    xi_funnels: xi_f,
                    s: xi - xi_f - 0.5 * c,
                    ds_dz: model.phase_derivative(z)?,
                    route: XiRoute::ArgumentIntegral,
                });
            }
            Ok(out)
        }
    }
}

pub fn write_phase_csv<W: Write>(samples: &[PhaseSample], mut out: W) -> Result<()> {
    writeln!(out, "z,xi,xi_F,s,ds_dz")?;
    for p in samples {
        writeln!(out, "{},{},{},{},{}", p.z, p.xi, p.xi_funnels, p.s, p.ds_dz)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    /// Fitted coefficient of `z²`.
    pub leading_coefficient: f64,
    /// `[a, b, c]` of `a z² + b z + c`.
    pub coefficients: Vec<f64>,
    pub fit_window: [f64; 2],
    pub remainder: Vec<[f64; 2]>,
    /// `∫_0^z R`, trapezoidal from the first sample.
    pub integrated_remainder: Vec<[f64; 2]>,
    pub remainder_exponent: f64,
    pub integrated_remainder_exponent: f64,
    /// The remainder is at rounding level and carries no exponent.
    pub remainder_at_floor: bool,
    pub delta: f64,
    pub exponent_bound: f64,
}

const ENVELOPE_BLOCKS: usize = 10;

/// Least-squares fit of `s(z) ≈ a z² + b z + c` over `window`, and the
/// growth exponents of the remainder and its integral there.
pub fn weyl_fit(samples: &[PhaseSample], delta: f64, window: (f64, f64)) -> Result<WeylFit> {
    let (lo, hi) = window;
    let inside: Vec<&PhaseSample> = samples.iter().filter(|p| p.z >= lo && p.z <= hi).collect();
    if inside.len() < 100 || !(lo > 0.0 && hi >= 10.0 * lo) {
        return Err(Error::Definition(format!(
            "Weyl fit needs >= 100 samples over a decade; have {} on [{lo}, {hi}]",
            inside.len()
        )));
    }
    let design: Vec<Vec<f64>> = inside.iter().map(|p| vec![p.z * p.z, p.z, 1.0]).collect();
    let y: Vec<f64> = inside.iter().map(|p| p.s).collect();
    let (beta, _) = least_squares(&design, &y)?;
    let poly = |z: f64| beta[0] * z * z + beta[1] * z + beta[2];

    let mut sorted: Vec<&PhaseSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.z.total_cmp(&b.z));
    let remainder: Vec<[f64; 2]> = sorted.iter().map(|p| [p.z, p.s - poly(p.z)]).collect();
    let mut integrated = Vec::with_capacity(remainder.len());
    let mut acc = 0.0;
    for (i, r) in remainder.iter().enumerate() {
        if i > 0 {
            let q = remainder[i - 1];
            acc += 0.5 * (r[0] - q[0]) * (r[1] + q[1]);
        }
        integrated.push([r[0], acc]);
    }

    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let rmax = remainder
        .iter()
        .filter(|r| r[0] >= lo && r[0] <= hi)
        .fold(0.0f64, |m, r| m.max(r[1].abs()));
    let at_floor = rmax < 1e-9 * scale;
    let (e_r, e_i) = if at_floor {
        (0.0, 0.0)
    } else {
        let xs: Vec<f64> = remainder.iter().map(|r| r[0]).collect();
        let rs: Vec<f64> = remainder.iter().map(|r| r[1]).collect();
        let is: Vec<f64> = integrated.iter().map(|r| r[1]).collect();
        (
            envelope_exponent(&xs, &rs, lo, hi, ENVELOPE_BLOCKS)?.slope,
            envelope_exponent(&xs, &is, lo, hi, ENVELOPE_BLOCKS)?.slope,
        )
    };
    Ok(WeylFit {
        leading_coefficient: beta[0],
        coefficients: beta,
        fit_window: [lo, hi],
        remainder,
        integrated_remainder: integrated,
        remainder_exponent: e_r,
        integrated_remainder_exponent: e_i,
        remainder_at_floor: at_floor,
        delta,
        exponent_bound: delta + EXPONENT_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreitWignerSample {
    pub z: f64,
    /// Five-point difference of the phase.
    pub ds_dz: f64,
    /// Termwise derivative, for comparison.
    pub ds_dz_termwise: f64,
    /// `Vol z² / (4π)`.
    pub printed_leading: f64,
    /// `Vol z / (2π) + Σ_j ℓ_j/(4π)`, the derivative of the Weyl polynomial.
    pub parity_leading: f64,
    /// `(1/π) Σ Im ρ / |z - ρ|²` over the resonances in the disc.
    pub resonance_sum: f64,
    pub residual_printed: f64,
    pub residual_parity: f64,
    /// `|Z'/Z(1/2 + iz) - Σ 1/(λ - s)|` over the same resonances.
    pub logderiv_remainder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreitWignerReport {
    pub window: [f64; 2],
    pub center: f64,
    pub sigma: f64,
    /// λ-plane rectangle certified to be searched.
    pub coverage: SearchBox,
    /// Resonances in the disc of radius σ + 1, counted with multiplicity.
    pub resonances_in_disc: u32,
    /// `(1/π) Σ Im ρ / dist(ρ, window)²`, bounding the resonance sum.
    pub resonance_majorant: f64,
    pub samples: Vec<BreitWignerSample>,
    pub max_residual_printed: f64,
    pub max_residual_parity: f64,
    pub max_logderiv_remainder: f64,
    pub max_fd_termwise_gap: f64,
}

/// λ-plane rectangle containing the resonance disc `|ρ - T| ≤ σ + 1`, `Im ρ ≥ 0`.
pub fn breit_wigner_box(center: f64, sigma: f64) -> SearchBox {
    let r = sigma + 1.0;
    SearchBox::new(0.5 - r, 0.5, center - r, center + r)
}

pub fn breit_wigner_check(
    model: &PhaseModel,
    window: (f64, f64),
    res: &ResonanceSet,
    sigma: f64,
    samples: usize,
) -> Result<BreitWignerReport> {
    let (a, b) = window;
    if !(b > a) || samples < 2 {
        return Err(Error::Definition("Breit–Wigner window needs b > a and >= 2 samples".into()));
    }
    let t = 0.5 * (a + b);
    let coverage = breit_wigner_box(t, sigma);
    if !res.covers(&coverage) {
        return Err(Error::Coverage(format!(
            "resonances not enumerated on {coverage:?} around z = {t}"
        )));
    }
    let in_disc: Vec<_> = res
        .resonances
        .iter()
        .filter(|r| r.z.im >= 0.0 && (r.z - Complex64::new(t, 0.0)).norm() <= sigma + 1.0)
        .collect();
    let count: u32 = in_disc.iter().map(|r| r.multiplicity).sum();
    let majorant: f64 = in_disc
        .iter()
        .map(|r| {
            let dx = if r.z.re < a {
                a - r.z.re
            } else if r.z.re > b {
                r.z.re - b
            } else {
                0.0
            };
            r.multiplicity as f64 * r.z.im / (dx * dx + r.z.im * r.z.im)
        })
        .sum::<f64>()
        / PI;
    let funnel_slope: f64 = model.funnel_lengths.iter().sum::<f64>() / (4.0 * PI);

    let zs: Vec<f64> = (0..samples)
        .map(|i| a + (b - a) * i as f64 / (samples - 1) as f64)
        .collect();
    let rows: Vec<Result<BreitWignerSample>> = zs
        .par_iter()
        .map(|&z| {
            let ds = model.phase_derivative_fd(z)?;
            let ds_t = model.phase_derivative(z)?;
            let printed = model.volume * z * z / (4.0 * PI);
            let parity = model.volume * z / (2.0 * PI) + funnel_slope;
            let mut lorentz = 0.0;
            let mut poles = Complex64::new(0.0, 0.0);
            let lambda = Complex64::new(0.5, z);
            for r in &in_disc {
                let m = r.multiplicity as f64;
                lorentz += m * r.z.im / (z - r.z).norm_sqr();
                poles += m / (lambda - r.lambda);
            }
            let lorentz = lorentz / PI;
            let ld = model.log_derivative(z)?;
            Ok(BreitWignerSample {
                z,
                ds_dz: ds,
                ds_dz_termwise: ds_t,
                printed_leading: printed,
                parity_leading: parity,
                resonance_sum: lorentz,
                residual_printed: ds - printed - lorentz,
                residual_parity: ds - parity - lorentz,
                logderiv_remainder: (ld - poles).norm(),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let max = |f: &dyn Fn(&BreitWignerSample) -> f64| rows.iter().fold(0.0f64, |m, r| m.max(f(r).abs()));
    Ok(BreitWignerReport {
        window: [a, b],
        center: t,
        sigma,
        coverage,
        resonances_in_disc: count,
        resonance_majorant: majorant,
        max_residual_printed: max(&|r| r.residual_printed),
        max_residual_parity: max(&|r| r.residual_parity),
        max_logderiv_remainder: max(&|r| r.logderiv_remainder),
        max_fd_termwise_gap: max(&|r| r.ds_dz - r.ds_dz_termwise),
        samples: rows,
    })
}

/// Growth of the window residuals across several window centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreitWignerGrowth {
    pub exponent_printed: f64,
    pub exponent_parity: f64,
    pub logderiv_exponent: f64,
    /// Smallest `C` with `max |Z'/Z - Σ 1/(λ - s)| ≤ C T^{δ+0.1}` on every window.
    pub logderiv_constant: f64,
    pub exponent_bound: f64,
}

pub fn breit_wigner_growth(reports: &[BreitWignerReport], delta: f64) -> Result<BreitWignerGrowth> {
    if reports.len() < 3 {
        return Err(Error::Definition("growth fit needs at least three windows".into()));
    }
    let lt: Vec<f64> = reports.iter().map(|r| r.center.ln()).collect();
    let fit = |f: &dyn Fn(&BreitWignerReport) -> f64| -> Result<f64> {
        let y: Vec<f64> = reports.iter().map(|r| f(r).max(f64::MIN_POSITIVE).ln()).collect();
        Ok(linear_fit(&lt, &y)?.slope)
    };
    let bound = delta + EXPONENT_SLACK;
    let c = reports
        .iter()
        .map(|r| r.max_logderiv_remainder / r.center.powf(bound))
        .fold(0.0f64, f64::max);
    Ok(BreitWignerGrowth {
        exponent_printed: fit(&|r| r.max_residual_printed)?,
        exponent_parity: fit(&|r| r.max_residual_parity)?,
        logderiv_exponent: fit(&|r| r.max_logderiv_remainder)?,
        logderiv_constant: c,
        exponent_bound: bound,
    })
}

/// Smooth bump: 1 on `[-1/2, 1/2]`, supported in `(-1, 1)`.
pub fn smooth_bump(x: f64) -> f64 {
    fn f(u: f64) -> f64 {
        if u > 0.0 {
            (-1.0 / u).exp()
        } else {
            0.0
        }
    }
    let u = 2.0 * (1.0 - x.abs());
    let a = f(u);
    let b = f(1.0 - u);
    if a + b == 0.0 {
        return 0.0;
    }
    a / (a + b)
}

/// `S_{α,t} = Σ_k Σ_γ ℓ/(2 sinh(kℓ/2)) e^{-itkℓ} φ₀(kℓ - α)`.
pub fn probe_sum_s(alpha: f64, t: f64, spec: &LengthSpectrum) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    probe_terms(alpha, spec, |x, w| acc += w * Complex64::from_polar(1.0, -t * x))?;
    Ok(acc)
}

/// `Σ ℓ/(2 sinh(kℓ/2)) φ₀(kℓ - α)` over the supported terms.
pub fn probe_majorant(alpha: f64, spec: &LengthSpectrum) -> Result<f64> {
    let mut acc = 0.0;
    probe_terms(alpha, spec, |_, w| acc += w)?;
    Ok(acc)
}

fn probe_terms<F: FnMut(f64, f64)>(alpha: f64, spec: &LengthSpectrum, mut f: F) -> Result<()> {
    if spec.cutoff < alpha + 1.0 {
        return Err(Error::Coverage(format!(
            "probe sum at alpha = {alpha} needs spectrum cutoff >= {}, have {}",
            alpha + 1.0,
            spec.cutoff
        )));
    }
    let w = spec.oriented_weight();
    for e in &spec.entries {
        let l = e.length;
        let mut k = 1.0;
        while k * l < alpha + 1.0 {
            let x = k * l;
            let bump = smooth_bump(x - alpha);
            if bump > 0.0 {
                f(x, w * l / (2.0 * (0.5 * x).sinh()) * bump);
            }
            k += 1.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Model;
    use crate::spectrum::{enumerate_geodesics, Orientation};

    const DELTA_7: f64 = 0.197_179_570_55;

    fn three_funnel() -> SchottkySurface {
        SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap()
    }

    fn series_model(cutoff: f64, tolerance: f64) -> (PhaseModel, LengthSpectrum) {
        let s = three_funnel();
        let spec = enumerate_geodesics(&s, cutoff, Orientation::Unoriented).unwrap();
        let ev = ZetaEvaluator::with_tolerance(&spec, DELTA_7, tolerance)
            .unwrap()
            .with_class_weight(spec.oriented_weight());
        (PhaseModel::series(&s, ev).unwrap(), spec)
    }

    #[test]
    fn gamma_ratio_matches_high_precision_values() {
        // Γ(1/2+it)Γ(1/2-it)/(Γ(it)Γ(-it)) evaluated to 40 digits
        let oracle = [
            (0.5, 0.458_576_167_833_637_173_186_546_5),
            (1.0, 0.996_272_076_220_749_944_264_690_6),
            (5.0, 4.999_999_999_999_772_889_893_168),
            (20.0, 20.0),
        ];
        for (t, want) in oracle {
            let got = gamma_ratio(t, 1).unwrap();
            assert!((got - want).abs() < 1e-12, "t = {t}: {got} vs {want}");
            assert!((got - t * (PI * t).tanh()).abs() < 1e-12);
        }
        assert_eq!(gamma_ratio(0.0, 1).unwrap(), 0.0);
        let eps = 1.0 - gamma_ratio(20.0, 1).unwrap() / 20.0;
        assert!((0.0..1e-10).contains(&eps));
        assert!(matches!(gamma_ratio(1.0, 2), Err(Error::OutOfScope(_))));
    }

    #[test]
    fn gamma_phase_matches_high_precision_values() {
        let oracle = [
            (1.0, -0.459_021_766_101_859_018_661_864_9),
            (5.0, -12.458_333_333_333_370_629_582_7),
            (20.0, -199.958_333_333_333_333_333_333_3),
            (50.0, -1249.958_333_333_333_333_333_333),
        ];
        for (z, want) in oracle {
            let got = gamma_phase(z);
            assert!((got - want).abs() < 1e-12 * want.abs(), "z = {z}: {got} vs {want}");
        }
        assert_eq!(gamma_phase(0.0), 0.0);
        assert!((gamma_phase(-3.0) + gamma_phase(3.0)).abs() < 1e-13);
        for z in [0.3, 2.0, 7.5] {
            let h = 1e-4;
            let fd = (gamma_phase(z + h) - gamma_phase(z - h)) / (2.0 * h);
            assert!((fd - gamma_phase_derivative(z)).abs() < 1e-7);
        }
    }

    #[test]
    fn series_route_basics() {
        let (model, spec) = series_model(60.0, 1e-5);
        let PhaseSource::Series(ev) = &model.source else { unreachable!() };
        assert_eq!(xi_exact_series(0.0, ev, model.chi).unwrap().xi, 0.0);
        let p0 = scattering_phase(0.0, &model).unwrap();
        assert_eq!(p0.s, 0.0);
        assert_eq!(p0.route, XiRoute::ExactSeries);
        // every summand is odd in z
        for z in [0.7, 3.0, 12.5] {
            let a = xi_exact_series(z, ev, model.chi).unwrap().xi;
            let b = xi_exact_series(-z, ev, model.chi).unwrap().xi;
            assert!((a + b).abs() < 1e-12 * a.abs().max(1.0));
        }
        // |series part| against the termwise absolute bound
        let w = spec.oriented_weight();
        let mut majorant = 0.0;
        for e in &spec.entries {
            for m in 1..200 {
                let ml = m as f64 * e.length;
                majorant += w * (-0.5 * ml).exp() / (m as f64 * (1.0 - (-ml).exp()));
            }
        }
        majorant /= PI;
        for i in 0..=400 {
            let z = 0.25 * i as f64;
            let v = xi_exact_series(z, ev, model.chi).unwrap();
            let part = v.xi - model.chi as f64 * gamma_phase(z);
            assert!(part.abs() <= majorant + v.error, "z = {z}: {part} > {majorant}");
        }
    }

    #[test]
    fn series_route_rejects_large_delta() {
        let s = three_funnel();
        let spec = enumerate_geodesics(&s, 30.0, Orientation::Unoriented).unwrap();
        let ev = ZetaEvaluator::new(&spec, 0.6).unwrap();
        assert!(matches!(xi_exact_series(1.0, &ev, -1), Err(Error::Route(_))));
        assert!(matches!(PhaseModel::series(&s, ev), Err(Error::Route(_))));
    }

    #[test]
    fn functional_equation_on_euler_product() {
        let (model, spec) = series_model(70.0, 1e-7);
        let PhaseSource::Series(ev) = &model.source else { unreachable!() };
        for z in [2.0, 5.0, 10.0] {
            let xi = model.xi(z).unwrap().xi;
            let f = gamma_phase(z);
            let lhs = Complex64::from_polar(1.0, -2.0 * PI * xi + model.chi as f64 * 2.0 * PI * f);
            let plus = zeta_euler_oriented(ev, z);
            let minus = zeta_euler_oriented(ev, -z);
            let rhs = minus / plus;
            assert!((lhs - rhs).norm() < 1e-6, "z = {z}: {lhs} vs {rhs}");
        }
        assert!(spec.cutoff >= 70.0);
    }

    fn zeta_euler_oriented(ev: &ZetaEvaluator, z: f64) -> Complex64 {
        ev.value(Complex64::new(0.5, z)).unwrap().value
    }

    #[test]
    fn termwise_derivative_matches_differences() {
        let (model, _) = series_model(70.0, 1e-7);
        for z in [0.5, 3.0, 9.7, 24.0] {
            let fd = model.phase_derivative_fd(z).unwrap();
            let tw = model.phase_derivative(z).unwrap();
            assert!((fd - tw).abs() < 1e-6, "z = {z}: {fd} vs {tw}");
        }
    }

    #[test]
    fn funnel_phase_is_bounded_after_linear_part() {
        for l in [2.0, 7.0] {
            assert_eq!(funnel_xi(0.0, l), 0.0);
            let sup = funnel_phase_sup(l, 100.0, 2000);
            assert!(sup.sup_bounded_part.is_finite() && sup.sup_bounded_part < 1.0);
            assert!(sup.sup_xi >= 100.0 * l / (4.0 * PI) - sup.sup_bounded_part);
            for z in [0.4, 5.0, 33.0] {
                let h = 1e-4;
                let fd = (funnel_xi(z + h, l) - funnel_xi(z - h, l)) / (2.0 * h);
                assert!((fd - funnel_xi_derivative(z, l)).abs() < 1e-6);
            }
        }
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<PhaseSample> {
        (0..=500)
            .map(|i| {
                let z = 0.1 * i as f64;
                PhaseSample {
                    z,
                    xi: f(z),
                    xi_funnels: 0.0,
                    s: f(z),
                    ds_dz: 0.0,
                    route: XiRoute::ExactSeries,
                }
            })
            .collect()
    }

    #[test]
    fn weyl_fit_on_exact_quadratic() {
        let fit = weyl_fit(&synthetic(|z| z * z), 0.2, (5.0, 50.0)).unwrap();
        assert!(fit.remainder_at_floor);
        assert!((fit.leading_coefficient - 1.0).abs() < 1e-12);
        assert!(fit.remainder.iter().all(|r| r[1].abs() < 1e-9));
        assert!(fit.leading_coefficient > 0.0);
    }

    #[test]
    fn weyl_fit_reads_off_power_remainder() {
        let fit = weyl_fit(&synthetic(|z| 0.5 * z * z + 3.0 * z.powf(0.3) * (2.0 * z).cos()), 0.2, (5.0, 50.0)).unwrap();
        assert!(!fit.remainder_at_floor);
        assert!((fit.leading_coefficient - 0.5).abs() < 1e-3);
        assert!((fit.remainder_exponent - 0.3).abs() < 0.1, "{}", fit.remainder_exponent);
        assert!(fit.remainder_exponent >= fit.integrated_remainder_exponent - 0.2);
    }

    #[test]
    fn weyl_fit_needs_a_decade_of_samples() {
        let few = synthetic(|z| z * z);
        assert!(weyl_fit(&few[..50], 0.2, (0.1, 5.0)).is_err());
        assert!(weyl_fit(&few, 0.2, (20.0, 50.0)).is_err());
    }

    #[test]
    fn bump_shape() {
        assert_eq!(smooth_bump(0.0), 1.0);
        assert_eq!(smooth_bump(0.5), 1.0);
        assert_eq!(smooth_bump(-0.5), 1.0);
        assert_eq!(smooth_bump(1.0), 0.0);
        assert_eq!(smooth_bump(-1.3), 0.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let x = 0.5 + 0.5 * i as f64 / 100.0;
            let v = smooth_bump(x);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            assert_eq!(v, smooth_bump(-x));
            prev = v;
        }
    }

    #[test]
    fn probe_sum_properties() {
        let spec = enumerate_geodesics(&three_funnel(), 40.0, Orientation::Unoriented).unwrap();
        let l_min = spec.min_length().unwrap();
        assert_eq!(probe_sum_s(l_min - 1.5, 3.0, &spec).unwrap(), Complex64::new(0.0, 0.0));
        let n = spec.entries.len();
        for alpha in [l_min, spec.entries[n / 2].length, spec.entries[n - 1].length - 0.3] {
            let bound = probe_majorant(alpha, &spec).unwrap();
            for t in [0.0, 1.3, 17.0] {
                let a = probe_sum_s(alpha, t, &spec).unwrap();
                let b = probe_sum_s(alpha, -t, &spec).unwrap();
                assert!((a - b.conj()).norm() <= 1e-12 * bound.max(1e-300));
                assert!(a.norm() <= bound * (1.0 + 1e-12));
            }
            assert!(bound > 0.0, "alpha = {alpha}: {bound}");
        }
        assert!(matches!(probe_sum_s(39.5, 1.0, &spec), Err(Error::Coverage(_))));
    }

    #[test]
    fn phase_csv_layout() {
        let mut buf = Vec::new();
        write_phase_csv(&synthetic(|z| z)[..3], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "z,xi,xi_F,s,ds_dz\n0,0,0,0,0\n0.1,0.1,0,0.1,0\n0.2,0.2,0,0.2,0\n");
    }
}
