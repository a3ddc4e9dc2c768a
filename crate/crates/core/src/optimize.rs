//! Pump-coefficient search against a target spectrum: swarm search on the
//! coarse grid, fine-grid reporting, step-wise refinement and parameter sweeps.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crystal::CrystalConfig;
use crate::error::{Error, Result};
use crate::metrics::{r_squared, r_squared_values, TargetSpectrum};
use crate::pso::{derive_seed, pso_minimize_fallible, SwarmConfig};
use crate::pump::{complex_to_pairs, normalize_coefficients, PumpConfig};
use crate::schmidt::{schmidt_spectrum, GridMeta, GridSpec, SchmidtSpectrum, SpectrumModel};

/// Everything fixed during one coefficient search.
#[derive(Debug, Clone)]
pub struct Setup {
    pub crystal: CrystalConfig,
    /// Wavelength and waist; its coefficients are ignored.
    pub pump: PumpConfig,
    pub n_modes: usize,
    pub window: usize,
    /// Grid used inside the swarm loop.
    pub search_grid: GridSpec,
    /// Grid used for the reported accuracy.
    pub report_grid: GridSpec,
}

impl Setup {
    pub fn with_crystal(&self, crystal: CrystalConfig) -> Self {
        Self { crystal, ..self.clone() }
    }

    pub fn with_modes(&self, n_modes: usize) -> Self {
        Self { n_modes, ..self.clone() }
    }

    fn check(&self, target: &TargetSpectrum) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::InvalidParameter("at least one pump mode is required".into()));
        }
        if target.window() != self.window {
            return Err(Error::WindowMismatch { target: target.window(), observed: self.window });
        }
        Ok(())
    }

    /// Spectrum of `coeffs` on the report grid.
    pub fn report_spectrum(&self, coeffs: &[Complex64]) -> Result<SchmidtSpectrum> {
        let pump = self.pump.with_coefficients(coeffs)?;
        schmidt_spectrum(&pump, &self.crystal, self.window, &self.report_grid)
    }

    pub fn search_model(&self) -> Result<SpectrumModel> {
        SpectrumModel::build(self.pump.waist(), &self.crystal, self.n_modes, self.window, &self.search_grid)
    }

    pub fn report_model(&self) -> Result<SpectrumModel> {
        SpectrumModel::build(self.pump.waist(), &self.crystal, self.n_modes, self.window, &self.report_grid)
    }
}

/// Step schedule of the coordinate refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSchedule {
    pub initial: f64,
    /// Refinement stops once the step falls below this value.
    pub minimum: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { initial: 0.1, minimum: 0.0125 }
    }
}

/// Search knobs beyond the swarm itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Independent swarm runs; the best fine-grid accuracy is kept.
    pub restarts: usize,
    pub refine: Option<StepSchedule>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { restarts: 1, refine: Some(StepSchedule::default()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Normalised coefficients as `[re, im]` pairs.
    pub coefficients: Vec<[f64; 2]>,
    /// Generation accuracy in percent on the report grid.
    pub g: f64,
    /// Accuracy of the swarm optimum on the report grid, before refinement.
    pub swarm_g: f64,
    /// Best R² on the search grid after each swarm iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub seed: u64,
    pub n_modes: usize,
    pub refined: bool,
    pub search_grid: GridMeta,
    pub report_grid: GridMeta,
}

impl OptimizationResult {
    pub fn complex_coefficients(&self) -> Vec<Complex64> {
        self.coefficients.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
    }
}

/// `n` seeds split from `master`; the first is `master` itself.
pub fn seed_stream(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| if i == 0 { master } else { derive_seed(master, i) }).collect()
}

fn unpack(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn pack(c: &[Complex64]) -> Vec<f64> {
    c.iter().flat_map(|a| [a.re, a.im]).collect()
}

/// R² of the model spectrum for raw (unnormalised) coefficients.
fn model_r2(model: &SpectrumModel, target: &TargetSpectrum, coeffs: &[Complex64]) -> Result<f64> {
    if coeffs.iter().all(|a| a.norm_sqr() == 0.0) {
        return Err(Error::DegeneratePump);
    }
    let raw = model.unnormalized(coeffs)?;
    let total: f64 = raw.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateSpectrum);
    }
    let values: Vec<f64> = raw.iter().map(|v| v / total).collect();
    r_squared_values(target.values(), &values)
}

/// Single swarm run on a prebuilt search model, reported on the fine grid.
pub fn generation_accuracy_with_model(
    target: &TargetSpectrum,
    setup: &Setup,
    model: &SpectrumModel,
    swarm: &SwarmConfig,
) -> Result<OptimizationResult> {
    setup.check(target)?;
    if model.mode_count() != setup.n_modes || model.window() != setup.window {
        return Err(Error::InvalidParameter("search model does not match the setup".into()));
    }
    let dims = 2 * setup.n_modes;
    let outcome = pso_minimize_fallible(|x| model_r2(model, target, &unpack(x)).map(|r| -r), dims, swarm)?;
    let coeffs = normalize_coefficients(&unpack(&outcome.best_point))?;
    let report = setup.report_spectrum(&coeffs)?;
    let g = r_squared(target, &report)?;
    Ok(OptimizationResult {
        coefficients: complex_to_pairs(&coeffs),
        g,
        swarm_g: g,
        history: outcome.history.iter().map(|v| -v).collect(),
        evaluations: outcome.evaluations,
        seed: swarm.seed,
        n_modes: setup.n_modes,
        refined: false,
        search_grid: model.grid(),
        report_grid: report.grid().expect("engine spectra carry grid metadata"),
    })
}

/// Swarm search of `2N` reals maximising R²; reports `G` on the fine grid.
pub fn generation_accuracy(target: &TargetSpectrum, setup: &Setup, swarm: &SwarmConfig) -> Result<OptimizationResult> {
    setup.check(target)?;
    let model = setup.search_model()?;
    generation_accuracy_with_model(target, setup, &model, swarm)
}

/// Cyclic coordinate ascent: each coordinate tries `+step` then `−step` and
/// keeps strict improvements; the step halves after a cycle without any.
pub fn coordinate_ascent<F>(start: &[f64], mut f: F, schedule: &StepSchedule) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(schedule.initial > 0.0 && schedule.minimum > 0.0) {
        return Err(Error::InvalidParameter("refinement steps must be positive".into()));
    }
    let mut x = start.to_vec();
    let mut best = f(&x)?;
    let mut step = schedule.initial;
    while step >= schedule.minimum {
        let mut improved = false;
        for d in 0..x.len() {
            for delta in [step, -step] {
                let old = x[d];
                x[d] = old + delta;
                let v = f(&x)?;
                if v > best {
                    best = v;
                    improved = true;
                    break;
                }
                x[d] = old;
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ok((x, best))
}

/// Step-wise refinement of normalised coefficients against `model`.
pub fn refine_coefficients(
    start: &[Complex64],
    target: &TargetSpectrum,
    model: &SpectrumModel,
    schedule: &StepSchedule,
) -> Result<Vec<Complex64>> {
    let (x, _) = coordinate_ascent(&pack(start), |x| model_r2(model, target, &unpack(x)), schedule)?;
    normalize_coefficients(&unpack(&x))
}

/// Swarm search over `options.restarts` seeds and optional refinement.
pub fn optimize(target: &TargetSpectrum, setup: &Setup, swarm: &SwarmConfig, options: &RunOptions) -> Result<OptimizationResult> {
    setup.check(target)?;
    let model = setup.search_model()?;
    optimize_with_model(target, setup, &model, swarm, options)
}

pub fn optimize_with_model(
    target: &TargetSpectrum,
    setup: &Setup,
    model: &SpectrumModel,
    swarm: &SwarmConfig,
    options: &RunOptions,
) -> Result<OptimizationResult> {
    let mut best = best_of_restarts(target, setup, model, swarm, options.restarts)?;
    if let Some(schedule) = &options.refine {
        refine_result(&mut best, target, setup, schedule)?;
    }
    Ok(best)
}

fn best_of_restarts(
    target: &TargetSpectrum,
    setup: &Setup,
    model: &SpectrumModel,
    swarm: &SwarmConfig,
    restarts: usize,
) -> Result<OptimizationResult> {
    let mut best: Option<OptimizationResult> = None;
    for seed in seed_stream(swarm.seed, restarts.max(1)) {
        let run = generation_accuracy_with_model(target, setup, model, &swarm.with_seed(seed))?;
        if best.as_ref().is_none_or(|b| run.g > b.g) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Refines on the report grid; the result is kept only if it does not
/// lower the reported accuracy.
fn refine_result(result: &mut OptimizationResult, target: &TargetSpectrum, setup: &Setup, schedule: &StepSchedule) -> Result<()> {
    let model = setup.report_model()?;
    let refined = refine_coefficients(&result.complex_coefficients(), target, &model, schedule)?;
    let g = r_squared(target, &setup.report_spectrum(&refined)?)?;
    if g >= result.g {
        result.coefficients = complex_to_pairs(&refined);
        result.g = g;
    }
    result.refined = true;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "theta_p")]
    ThetaP,
    #[serde(rename = "N")]
    Modes,
    #[serde(rename = "L")]
    Thickness,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::ThetaP => "theta_p",
            Self::Modes => "N",
            Self::Thickness => "L",
        }
    }

    /// Column header including the unit of the swept values.
    pub fn header(self) -> &'static str {
        match self {
            Self::ThetaP => "theta_p_deg",
            Self::Modes => "N",
            Self::Thickness => "L_mm",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta_p" => Ok(Self::ThetaP),
            "N" | "n" => Ok(Self::Modes),
            "L" | "l" => Ok(Self::Thickness),
            other => Err(Error::InvalidParameter(format!("unknown sweep parameter '{other}' (expected one of: theta_p, N, L)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub run: RunOptions,
    /// Pump angles (degrees) tried for every thickness of an `L` sweep;
    /// empty keeps the base angle.
    pub theta_candidates_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Swept value in the units of [`SweepParameter::header`].
    pub value: f64,
    pub g: f64,
    pub theta_p_deg: f64,
    pub result: OptimizationResult,
}

/// Accuracy curve over `values` (degrees for `theta_p`, millimetres for `L`).
pub fn sweep(
    parameter: SweepParameter,
    values: &[f64],
    target: &TargetSpectrum,
    base: &Setup,
    swarm: &SwarmConfig,
    options: &SweepOptions,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    let seeds = seed_stream(swarm.seed, values.len());
    values
        .iter()
        .zip(seeds)
        .map(|(&value, seed)| {
            let swarm = swarm.with_seed(seed);
            let (setup, thetas) = match parameter {
                SweepParameter::ThetaP => (base.with_crystal(base.crystal.with_theta_p(value.to_radians())?), vec![value]),
                SweepParameter::Modes => {
                    if value < 1.0 || value.fract() != 0.0 {
                        return Err(Error::InvalidParameter(format!("mode count must be a positive integer, got {value}")));
                    }
                    (base.with_modes(value as usize), vec![base.crystal.theta_p().to_degrees()])
                }
                SweepParameter::Thickness => {
                    let s = base.with_crystal(base.crystal.with_thickness(value * 1e-3)?);
                    let thetas = if options.theta_candidates_deg.is_empty() {
                        vec![base.crystal.theta_p().to_degrees()]
                    } else {
                        options.theta_candidates_deg.clone()
                    };
                    (s, thetas)
                }
            };
            let mut best: Option<(f64, OptimizationResult)> = None;
            for theta in thetas {
                let s = setup.with_crystal(setup.crystal.with_theta_p(theta.to_radians())?);
                let model = s.search_model()?;
                let run = best_of_restarts(target, &s, &model, &swarm, options.run.restarts)?;
                if best.as_ref().is_none_or(|(_, b)| run.g > b.g) {
                    best = Some((theta, run));
                }
            }
            let (theta, mut result) = best.expect("at least one angle");
            if let Some(schedule) = &options.run.refine {
                let s = setup.with_crystal(setup.crystal.with_theta_p(theta.to_radians())?);
                refine_result(&mut result, target, &s, schedule)?;
            }
            Ok(SweepPoint { value, g: result.g, theta_p_deg: theta, result })
        })
        .collect()
}

pub fn sweep_csv(parameter: SweepParameter, points: &[SweepPoint]) -> String {
    let mut out = format!("{},G_percent,chosen_theta_p_deg,seed\n", parameter.header());
    for p in points {
        out.push_str(&format!("{},{:.10},{},{}\n", p.value, p.g, p.theta_p_deg, p.result.seed));
    }
    out
}
