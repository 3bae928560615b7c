//! Run configuration and command pipeline behind the `scatphase` binary.
//!
//! Every command writes its artifacts, the resolved configuration
//! (`config.json`) and a `manifest.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::continuation::{
    find_resonances, leading_real_zero, nodes_for_height, ResonanceSet, SearchBox,
    TransferDiscretization,
};
use crate::dimension::{
    default_s_grid, delta_poincare, delta_refinement, DimensionEstimate,
    DEFAULT_POINCARE_CUTOFF, DEFAULT_REFINEMENT_DEPTH,
};
use crate::dynamics::{
    lambda_max_estimate, pressure_from_escape, time_grid, trapped_fraction, write_escape_csv,
    EscapeEstimate,
};
use crate::error::{Error, Result};
use crate::geometry::{validate_schottky, SchottkySurface, SurfaceFile, ValidationReport};
use crate::phase::{
    breit_wigner_box, breit_wigner_check, breit_wigner_growth, critical_multiplicity,
    phase_table, weyl_fit, write_phase_csv, BreitWignerGrowth, BreitWignerReport, CriticalZero,
    PhaseModel, PhaseSample, WeylFit, EXPONENT_SLACK,
};
use crate::spectrum::{
    counting_exponent, enumerate_geodesics_with_budget, ExponentEstimate, LengthSpectrum,
    Orientation, DEFAULT_WORD_BUDGET,
};
use crate::zeta::{write_zeta_csv, zeta_growth, ZetaEvaluator, ZetaGrowth, DEFAULT_TOLERANCE};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_ENV: &str = "SCATPHASE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Spectrum,
    Dimension,
    Zeta,
    Resonances,
    Phase,
    Weyl,
    BreitWigner,
    Escape,
    #[default]
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    /// Length cutoff `L`.
    pub cutoff: f64,
    pub orientation: Orientation,
    /// Largest predicted number of explored words before refusing to start.
    pub word_budget: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            cutoff: 80.0,
            orientation: Orientation::Unoriented,
            word_budget: DEFAULT_WORD_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionParams {
    pub poincare_word_cutoff: usize,
    pub refinement_depth: usize,
}

impl Default for DimensionParams {
    fn default() -> Self {
        DimensionParams {
            poincare_word_cutoff: DEFAULT_POINCARE_CUTOFF,
            refinement_depth: DEFAULT_REFINEMENT_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZetaParams {
    /// Bound on the truncation error of `log Z`.
    pub tolerance: f64,
    /// Abscissae of the `log|Z(σ + iz)|` growth fits.
    pub sigmas: Vec<f64>,
    pub z_min: f64,
    pub z_max: f64,
    pub samples: usize,
}

impl Default for ZetaParams {
    fn default() -> Self {
        ZetaParams {
            tolerance: DEFAULT_TOLERANCE,
            sigmas: vec![0.6, 1.0],
            z_min: 5.0,
            z_max: 50.0,
            samples: 451,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceParams {
    /// λ-plane search rectangle. The default dips below the real axis so
    /// real zeros are strictly inside.
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    /// Chebyshev nodes per interval; 0 picks the count for the box height.
    pub nodes: usize,
}

impl Default for ResonanceParams {
    fn default() -> Self {
        ResonanceParams {
            re_min: -1.5,
            re_max: 0.5,
            im_min: -0.1,
            im_max: 8.0,
            nodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseParams {
    pub z_max: f64,
    /// Points of the uniform grid on `[0, z_max]`.
    pub samples: usize,
}

impl Default for PhaseParams {
    fn default() -> Self {
        PhaseParams {
            z_max: 50.0,
            samples: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeylParams {
    pub window: [f64; 2],
}

impl Default for WeylParams {
    fn default() -> Self {
        WeylParams { window: [5.0, 50.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreitWignerParams {
    pub centers: Vec<f64>,
    pub sigma: f64,
    /// Half-width of each sampled window around its centre.
    pub half_width: f64,
    pub samples: usize,
}

impl Default for BreitWignerParams {
    fn default() -> Self {
        BreitWignerParams {
            centers: vec![10.0, 20.0, 30.0],
            sigma: 1.0,
            half_width: 1.0,
            samples: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeParams {
    pub t_max: f64,
    pub time_step: f64,
    pub samples: usize,
    pub lambda_t_max: f64,
    pub lambda_samples: usize,
}

impl Default for EscapeParams {
    fn default() -> Self {
        EscapeParams {
            t_max: 12.0,
            time_step: 0.25,
            samples: 100_000,
            lambda_t_max: 20.0,
            lambda_samples: 2_000,
        }
    }
}

/// Resolved run configuration; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub surface: PathBuf,
    pub command: Command,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 means the available parallelism.
    pub threads: usize,
    pub spectrum: SpectrumParams,
    pub dimension: DimensionParams,
    pub zeta: ZetaParams,
    pub resonances: ResonanceParams,
    pub phase: PhaseParams,
    pub weyl: WeylParams,
    pub breit_wigner: BreitWignerParams,
    pub escape: EscapeParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            surface: PathBuf::new(),
            command: Command::default(),
            output_dir: PathBuf::from("scatphase-out"),
            seed: 1,
            threads: 0,
            spectrum: SpectrumParams::default(),
            dimension: DimensionParams::default(),
            zeta: ZetaParams::default(),
            resonances: ResonanceParams::default(),
            phase: PhaseParams::default(),
            weyl: WeylParams::default(),
            breit_wigner: BreitWignerParams::default(),
            escape: EscapeParams::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML or JSON configuration; missing fields take defaults.
    pub fn parse(text: &str, path_hint: Option<&Path>) -> Result<Self> {
        let is_json = path_hint
            .and_then(|p| p.extension())
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or_else(|| text.trim_start().starts_with('{'));
        if is_json {
            serde_json::from_str(text).map_err(|e| Error::Definition(format!("config JSON: {e}")))
        } else {
            toml::from_str(text).map_err(|e| Error::Definition(format!("config TOML: {e}")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, Some(path))
    }

    /// Thread count with the default applied.
    pub fn resolved_threads(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Canonical JSON of the configuration, as echoed to the output directory.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_hash: String,
    pub wall_time_seconds: f64,
    pub artifacts: Vec<Artifact>,
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.retain(|a| a.file != name);
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Definition(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    fn write_with<F: FnOnce(&mut Vec<u8>) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }
}

/// Everything a run computed, keyed by pipeline stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Report {
    pub surface: SurfaceSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<DimensionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<ZetaGrowth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonances: Option<ResonanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weyl: Option<WeylSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breit_wigner: Option<BreitWignerGrowth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape: Option<EscapeSummary>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub rank: usize,
    pub euler_characteristic: i64,
    pub funnel_lengths: Vec<f64>,
    pub core_volume: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub delta: f64,
    pub poincare: DimensionEstimate,
    pub refinement: Option<DimensionEstimate>,
    /// `|δ_poincare - δ_refinement|` when both apply.
    pub method_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub cutoff: f64,
    pub orientation: Orientation,
    pub count: usize,
    pub shortest: Option<f64>,
    pub completeness_certificate: usize,
    pub counting_exponent: Option<ExponentEstimate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceSummary {
    pub search_box: SearchBox,
    pub nodes: usize,
    pub count: u32,
    pub leading_real_zero: Option<f64>,
    pub critical_zero: CriticalZero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeylSummary {
    pub leading_coefficient: f64,
    pub target: f64,
    pub relative_error: f64,
    pub coefficients: Vec<f64>,
    pub fit_window: [f64; 2],
    pub remainder_exponent: f64,
    pub integrated_remainder_exponent: f64,
    pub remainder_at_floor: bool,
    pub exponent_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeSummary {
    pub fitted_rate: f64,
    pub confidence_interval: (f64, f64),
    pub fit_window: (f64, f64),
    pub acceptance_rate: f64,
    pub sample_count: usize,
    pub pressure: Option<f64>,
    pub lambda_max: f64,
    /// `1 + rate/Λ_max`, to be compared with δ.
    pub chain_exponent: f64,
    /// `1 + rate/Λ_max - δ`.
    pub chain_residual: f64,
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub report: Report,
    pub manifest: Manifest,
}

/// Reads and builds the surface, returning the validation report alongside.
pub fn load_checked(path: &Path) -> Result<(SchottkySurface, ValidationReport)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Definition(format!("cannot read surface file {}: {e}", path.display())))?;
    let surface = SurfaceFile::parse(&text, Some(path))?.build()?;
    let report = validate_schottky(&surface);
    Ok((surface, report))
}

/// Runs the configured command, honouring the thread count.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.resolved_threads())
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut out = Output::new(&config.output_dir)?;
    let mut resolved = config.clone();
    resolved.threads = config.resolved_threads();
    out.write_bytes("config.json", resolved.to_canonical_json().as_bytes())?;

    let (surface, validation) = load_checked(&config.surface)?;
    out.write_json("validation.json", &validation)?;
    let validation = validation.into_result();

    let mut report = Report {
        surface: SurfaceSummary {
            rank: surface.rank(),
            euler_characteristic: surface.euler_characteristic,
            funnel_lengths: surface.funnel_lengths(),
            core_volume: surface.core_volume(),
        },
        ..Report::default()
    };
    let result = validation.and_then(|_| {
        let mut p = Pipeline {
            config,
            surface: &surface,
            out: &mut out,
            report: &mut report,
            delta: None,
            spectrum: None,
            samples: None,
        };
        p.run(config.command)
    });
    let manifest = Manifest {
        tool: "scatphase".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: config.command,
        config_hash: resolved.hash(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        artifacts: out.artifacts.clone(),
    };
    out.write_json("manifest.json", &manifest)?;
    result?;
    Ok(RunOutcome {
        output_dir: config.output_dir.clone(),
        report,
        manifest,
    })
}

struct Pipeline<'a> {
    config: &'a RunConfig,
    surface: &'a SchottkySurface,
    out: &'a mut Output,
    report: &'a mut Report,
    delta: Option<f64>,
    spectrum: Option<LengthSpectrum>,
    samples: Option<Vec<PhaseSample>>,
}

impl Pipeline<'_> {
    fn run(&mut self, command: Command) -> Result<()> {
        match command {
            Command::Validate => Ok(()),
            Command::Spectrum => self.spectrum().map(|_| ()),
            Command::Dimension => self.dimension().map(|_| ()),
            Command::Zeta => self.zeta(),
            Command::Resonances => self.resonances().map(|_| ()),
            Command::Phase => self.phase().map(|_| ()),
            Command::Weyl => self.weyl(),
            Command::BreitWigner => self.breit_wigner(),
            Command::Escape => self.escape(),
            Command::Report => {
                self.dimension()?;
                self.spectrum()?;
                self.zeta()?;
                self.resonances()?;
                self.weyl()?;
                self.escape()?;
                let report = self.report.clone();
                self.out.write_json("report.json", &report)
            }
        }
    }

    fn dimension(&mut self) -> Result<f64> {
        if let Some(d) = self.delta {
            return Ok(d);
        }
        let p = &self.config.dimension;
        let poincare = delta_poincare(self.surface, p.poincare_word_cutoff, &default_s_grid())?;
        let refinement = if self.surface.rank() >= 2 {
            Some(delta_refinement(self.surface, p.refinement_depth)?)
        } else {
            None
        };
        let delta = refinement.as_ref().map_or(poincare.delta, |r| r.delta);
        let summary = DimensionSummary {
            delta,
            method_gap: refinement.as_ref().map(|r| (r.delta - poincare.delta).abs()),
            poincare,
            refinement,
        };
        self.out.write_json("dimension.json", &summary)?;
        self.report.dimension = Some(summary);
        self.delta = Some(delta);
        Ok(delta)
    }

    fn spectrum(&mut self) -> Result<LengthSpectrum> {
        if let Some(s) = &self.spectrum {
            return Ok(s.clone());
        }
        let p = &self.config.spectrum;
        let spec = enumerate_geodesics_with_budget(self.surface, p.cutoff, p.orientation, p.word_budget)?;
        self.out.write_with("spectrum.csv", |buf| spec.write_csv(buf))?;
        let exponent = if spec.entries.len() >= 200 || spec.rank == 1 {
            Some(counting_exponent(&spec)?)
        } else {
            None
        };
        self.report.spectrum = Some(SpectrumSummary {
            cutoff: spec.cutoff,
            orientation: spec.orientation,
            count: spec.entries.len(),
            shortest: spec.min_length(),
            completeness_certificate: spec.completeness_certificate,
            counting_exponent: exponent,
        });
        self.spectrum = Some(spec.clone());
        Ok(spec)
    }

    fn evaluator(&mut self) -> Result<ZetaEvaluator> {
        let delta = self.dimension()?;
        let spec = self.spectrum()?;
        Ok(ZetaEvaluator::with_tolerance(&spec, delta, self.config.zeta.tolerance)?
            .with_class_weight(spec.oriented_weight()))
    }

    fn zeta(&mut self) -> Result<()> {
        let ev = self.evaluator()?;
        let p = &self.config.zeta;
        let growth = zeta_growth(&ev, &p.sigmas, (p.z_min, p.z_max), p.samples)?;
        let mut values = Vec::new();
        let mut sigmas = vec![0.5];
        sigmas.extend(p.sigmas.iter().copied());
        for sigma in sigmas {
            for i in 0..p.samples {
                let z = p.z_min + (p.z_max - p.z_min) * i as f64 / (p.samples - 1).max(1) as f64;
                values.push(ev.value(num_complex::Complex64::new(sigma, z))?);
            }
        }
        self.out.write_with("zeta.csv", |buf| write_zeta_csv(&values, buf))?;
        self.out.write_json("zeta_growth.json", &growth)?;
        self.report.zeta = Some(growth);
        Ok(())
    }

    fn resonances(&mut self) -> Result<ResonanceSet> {
        let p = &self.config.resonances;
        let bx = SearchBox::new(p.re_min, p.re_max, p.im_min, p.im_max);
        let nodes = if p.nodes > 0 {
            p.nodes
        } else {
            nodes_for_height(p.im_max.abs().max(p.im_min.abs()))
        };
        let disc = TransferDiscretization::new(self.surface, nodes)?;
        let set = find_resonances(&bx, &disc)?;
        let leading = if self.surface.rank() >= 2 {
            leading_real_zero(&disc, 0.0, 1.0).ok()
        } else {
            None
        };
        let critical = critical_multiplicity(&disc)?;
        self.out.write_with("resonances.csv", |buf| set.write_csv(buf))?;
        let summary = ResonanceSummary {
            search_box: bx,
            nodes,
            count: set.resonances.iter().map(|r| r.multiplicity).sum(),
            leading_real_zero: leading,
            critical_zero: critical,
        };
        self.out.write_json("resonances.json", &summary)?;
        self.report.resonances = Some(summary);
        Ok(set)
    }

    fn phase_model(&mut self) -> Result<PhaseModel> {
        let delta = self.dimension()?;
        if delta < 0.5 {
            let ev = self.evaluator()?;
            PhaseModel::series(self.surface, ev)
        } else {
            let disc = TransferDiscretization::new(self.surface, nodes_for_height(self.config.phase.z_max))?;
            PhaseModel::argument(self.surface, disc)
        }
    }

    fn phase(&mut self) -> Result<Vec<PhaseSample>> {
        if let Some(s) = &self.samples {
            return Ok(s.clone());
        }
        let model = self.phase_model()?;
        let p = &self.config.phase;
        if p.samples < 2 {
            return Err(Error::Definition("phase grid needs at least two samples".into()));
        }
        let zs: Vec<f64> = (0..p.samples)
            .map(|i| p.z_max * i as f64 / (p.samples - 1) as f64)
            .collect();
        let samples = phase_table(&model, &zs)?;
        self.out.write_with("phase.csv", |buf| write_phase_csv(&samples, buf))?;
        self.samples = Some(samples.clone());
        Ok(samples)
    }

    fn weyl(&mut self) -> Result<()> {
        let samples = self.phase()?;
        let delta = self.dimension()?;
        let w = self.config.weyl.window;
        let fit: WeylFit = weyl_fit(&samples, delta, (w[0], w[1]))?;
        self.out.write_json("weyl.json", &fit)?;
        let target = self.surface.core_volume() / (4.0 * std::f64::consts::PI);
        self.report.weyl = Some(WeylSummary {
            leading_coefficient: fit.leading_coefficient,
            target,
            relative_error: (fit.leading_coefficient - target).abs() / target,
            coefficients: fit.coefficients.clone(),
            fit_window: fit.fit_window,
            remainder_exponent: fit.remainder_exponent,
            integrated_remainder_exponent: fit.integrated_remainder_exponent,
            remainder_at_floor: fit.remainder_at_floor,
            exponent_bound: fit.exponent_bound,
        });
        Ok(())
    }

    fn breit_wigner(&mut self) -> Result<()> {
        let delta = self.dimension()?;
        let model = self.phase_model()?;
        let p = &self.config.breit_wigner;
        let mut reports: Vec<BreitWignerReport> = Vec::new();
        for &t in &p.centers {
            let bx = breit_wigner_box(t, p.sigma);
            let disc = TransferDiscretization::new(self.surface, nodes_for_height(bx.im_max))?;
            let res = find_resonances(&bx, &disc)?;
            reports.push(breit_wigner_check(
                &model,
                (t - p.half_width, t + p.half_width),
                &res,
                p.sigma,
                p.samples,
            )?);
        }
        let growth = breit_wigner_growth(&reports, delta)?;
        #[derive(Serialize)]
        struct Out<'r> {
            growth: &'r BreitWignerGrowth,
            windows: &'r [BreitWignerReport],
        }
        self.out.write_json(
            "breit_wigner.json",
            &Out {
                growth: &growth,
                windows: &reports,
            },
        )?;
        self.report.breit_wigner = Some(growth);
        Ok(())
    }

    fn escape(&mut self) -> Result<()> {
        let delta = self.dimension()?;
        let p = &self.config.escape;
        let times = time_grid(p.t_max, p.time_step);
        let est: EscapeEstimate = trapped_fraction(self.surface, &times, p.samples, self.config.seed)?;
        let lambda = lambda_max_estimate(self.surface, p.lambda_t_max, p.lambda_samples, self.config.seed)?;
        self.out.write_with("escape.csv", |buf| write_escape_csv(&est, buf))?;
        self.out.write_json("escape.json", &est)?;
        let chain = 1.0 + est.fitted_rate / lambda;
        self.report.escape = Some(EscapeSummary {
            fitted_rate: est.fitted_rate,
            confidence_interval: est.confidence_interval,
            fit_window: est.fit_window,
            acceptance_rate: est.acceptance_rate,
            sample_count: est.sample_count,
            pressure: pressure_from_escape(&est).ok(),
            lambda_max: lambda,
            chain_exponent: chain,
            chain_residual: chain - delta,
        });
        Ok(())
    }
}

/// Slack used when judging exponent-type agreements in reports.
pub const REPORT_EXPONENT_SLACK: f64 = EXPONENT_SLACK;
