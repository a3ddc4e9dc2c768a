//! OAM Schmidt spectrum of the down-converted pair, LG mode coefficients
//! and the comparison with `p = 0` postselected detection.
//!
//! The integrand `V·Φ` depends on the azimuths only through
//! `Δφ = φ_s − φ_i` and is symmetric under `ρ_s ↔ ρ_i`. Every routine below
//! visits the upper triangle of the radial node pairs (off-diagonal pairs
//! weighted twice) and reduces the angular double integral with one FFT per
//! pair. Work is split by rows of the radial grid; row partials are summed
//! in row order, so results do not depend on the thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal::{delta_kz_cos, phase_matching_from_mismatch, CrystalConfig};
use crate::error::{Error, Result};
use crate::modemath::{lg_phase, lg_radial_magnitude, AngularGrid, AngularTransform, RadialGrid};
use crate::pump::{pump_mode_amplitudes, pump_momentum_sq, PumpConfig};

/// Default half-window of reported spectra.
pub const DEFAULT_WINDOW: usize = 150;
/// Highest radial cutoff accepted by [`radial_sum_convergence`].
pub const MAX_RADIAL_CUTOFF: usize = 40;

const PANEL_NODES: usize = 16;
const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

/// Resolution presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridTier {
    Coarse,
    Fine,
}

impl std::str::FromStr for GridTier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coarse" => Ok(Self::Coarse),
            "fine" => Ok(Self::Fine),
            other => Err(Error::InvalidParameter(format!("unknown grid tier '{other}' (expected coarse or fine)"))),
        }
    }
}

/// Requested quadrature resolution; turned into concrete grids by [`GridSpec::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radial_nodes: usize,
    pub angular_samples: usize,
    #[serde(default = "default_panel_nodes")]
    pub panel_nodes: usize,
    /// Explicit truncation radius in rad/m; derived from pump and crystal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
}

fn default_panel_nodes() -> usize {
    PANEL_NODES
}

fn default_safety() -> f64 {
    1.5
}

impl GridSpec {
    pub fn coarse() -> Self {
        Self::with_resolution(96, 256)
    }

    pub fn fine() -> Self {
        Self::with_resolution(192, 1024)
    }

    pub fn tier(tier: GridTier) -> Self {
        match tier {
            GridTier::Coarse => Self::coarse(),
            GridTier::Fine => Self::fine(),
        }
    }

    pub fn with_resolution(radial_nodes: usize, angular_samples: usize) -> Self {
        Self {
            radial_nodes,
            angular_samples,
            panel_nodes: PANEL_NODES,
            rho_max: None,
            safety_factor: default_safety(),
        }
    }

    /// Truncation radius covering the pump (`8/w_p`) and the phase-matching
    /// lobe, times the safety factor.
    pub fn default_rho_max(&self, pump_waist: f64, crystal: &CrystalConfig) -> f64 {
        self.safety_factor * (8.0 / pump_waist).max(crystal.phase_matching_extent())
    }

    /// Builds the grids; the angular count is raised to the next power of
    /// two satisfying `M >= 4·window` when needed.
    pub fn resolve(&self, pump_waist: f64, crystal: &CrystalConfig, window: usize) -> Result<Grids> {
        let rho_max = self.rho_max.unwrap_or_else(|| self.default_rho_max(pump_waist, crystal));
        let panel = self.panel_nodes.min(self.radial_nodes).max(1);
        let radial = RadialGrid::composite(rho_max, self.radial_nodes, panel)?;
        let m = self.angular_samples.max((4 * window).next_power_of_two()).max(4);
        let angular = AngularGrid::new(m)?;
        Ok(Grids { radial, angular })
    }
}

/// Concrete radial and angular grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub radial: RadialGrid,
    pub angular: AngularGrid,
}

impl Grids {
    pub fn meta(&self) -> GridMeta {
        GridMeta {
            radial_nodes: self.radial.len(),
            angular_samples: self.angular.len(),
            rho_max: self.radial.rho_max(),
        }
    }
}

/// Resolution actually used for a result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub radial_nodes: usize,
    pub angular_samples: usize,
    pub rho_max: f64,
}

/// Normalised OAM Schmidt spectrum over `l ∈ [−D, D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    window: usize,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridMeta>,
}

impl SchmidtSpectrum {
    /// Normalises non-negative weights listed for `l = −D..=D`.
    pub fn from_weights(weights: Vec<f64>, grid: Option<GridMeta>) -> Result<Self> {
        if weights.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("spectrum needs 2D+1 entries, got {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("spectrum weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateSpectrum);
        }
        let window = weights.len() / 2;
        let values = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { window, values, grid })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> Option<GridMeta> {
        self.grid
    }

    pub fn get(&self, l: i64) -> f64 {
        let idx = l + self.window as i64;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    pub fn orders(&self) -> impl Iterator<Item = i64> {
        let d = self.window as i64;
        -d..=d
    }

    /// `l,S_l` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,S_l\n");
        for (l, v) in self.orders().zip(&self.values) {
            out.push_str(&format!("{l},{v:e}\n"));
        }
        out
    }
}

/// Evaluates `V_p·Φ` on the angular grid for one radial pair.
struct PairEvaluator<'a> {
    crystal: &'a CrystalConfig,
    cosines: &'a [f64],
    waist: f64,
    modes: Vec<f64>,
}

impl<'a> PairEvaluator<'a> {
    fn new(crystal: &'a CrystalConfig, grid: &'a AngularGrid, waist: f64, n_modes: usize) -> Self {
        Self { crystal, cosines: grid.cosines(), waist, modes: vec![0.0; n_modes] }
    }

    /// One buffer per pump mode.
    fn fill_modes(&mut self, rho_s: f64, rho_i: f64, out: &mut [Vec<Complex64>]) {
        let m = self.cosines.len();
        let thickness = self.crystal.thickness();
        for k in 0..=m / 2 {
            let c = self.cosines[k];
            let phi = phase_matching_from_mismatch(delta_kz_cos(rho_s, rho_i, c, self.crystal), thickness);
            pump_mode_amplitudes(self.waist, pump_momentum_sq(rho_s, rho_i, c), &mut self.modes);
            for (buf, &v) in out.iter_mut().zip(&self.modes) {
                let val = phi * v;
                buf[k] = val;
                if k > 0 && k < m / 2 {
                    buf[m - k] = val;
                }
            }
        }
    }

    /// Superposition `Σ α_p V_p·Φ`.
    fn fill_total(&mut self, rho_s: f64, rho_i: f64, coeffs: &[Complex64], out: &mut [Complex64]) {
        let m = self.cosines.len();
        let thickness = self.crystal.thickness();
        for k in 0..=m / 2 {
            let c = self.cosines[k];
            let phi = phase_matching_from_mismatch(delta_kz_cos(rho_s, rho_i, c, self.crystal), thickness);
            pump_mode_amplitudes(self.waist, pump_momentum_sq(rho_s, rho_i, c), &mut self.modes);
            let v: Complex64 = self.modes.iter().zip(coeffs).map(|(&m, &a)| a * m).sum();
            let val = phi * v;
            out[k] = val;
            if k > 0 && k < m / 2 {
                out[m - k] = val;
            }
        }
    }
}

fn check_setup(pump: &PumpConfig, crystal: &CrystalConfig) -> Result<()> {
    let (a, b) = (pump.wavelength(), crystal.pump_wavelength());
    if ((a - b) / b).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "pump wavelength {} nm differs from crystal pump wavelength {} nm",
            a * 1e9,
            b * 1e9
        )));
    }
    Ok(())
}

/// Pair weight `(1/4π²) w_i w_j ρ_i ρ_j`, doubled off the diagonal.
#[inline]
fn pair_weight(grid: &RadialGrid, i: usize, j: usize) -> f64 {
    let x = grid.nodes();
    let w = grid.weights();
    let base = w[i] * w[j] * x[i] * x[j] / FOUR_PI_SQ;
    if i == j {
        base
    } else {
        2.0 * base
    }
}

/// Unnormalised spectrum values for the given orders.
pub(crate) fn accumulate_orders(
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    grids: &Grids,
    orders: &[i64],
) -> Vec<f64> {
    let nr = grids.radial.len();
    let m = grids.angular.len();
    let rows: Vec<Vec<f64>> = (0..nr)
        .into_par_iter()
        .map_init(
            || {
                (
                    PairEvaluator::new(crystal, &grids.angular, pump.waist(), pump.mode_count()),
                    AngularTransform::new(&grids.angular),
                    vec![Complex64::new(0.0, 0.0); m],
                )
            },
            |(eval, tf, buf), i| {
                let mut acc = vec![0.0; orders.len()];
                let rs = grids.radial.nodes()[i];
                for j in i..nr {
                    let ri = grids.radial.nodes()[j];
                    eval.fill_total(rs, ri, pump.coefficients(), buf);
                    tf.forward(buf);
                    let w = pair_weight(&grids.radial, i, j);
                    for (a, &l) in acc.iter_mut().zip(orders) {
                        *a += w * tf.coefficient(buf, l).norm_sqr();
                    }
                }
                acc
            },
        )
        .collect();
    sum_rows(rows, orders.len())
}

fn sum_rows(rows: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut total = vec![0.0; len];
    for row in rows {
        for (t, r) in total.iter_mut().zip(row) {
            *t += r;
        }
    }
    total
}

/// Unnormalised `S_l` for `|l| <= l_max` on explicit grids.
pub fn unnormalized_spectrum(pump: &PumpConfig, crystal: &CrystalConfig, l_max: usize, grids: &Grids) -> Result<Vec<f64>> {
    check_setup(pump, crystal)?;
    grids.angular.check_order(l_max)?;
    let orders: Vec<i64> = (-(l_max as i64)..=l_max as i64).collect();
    Ok(accumulate_orders(pump, crystal, grids, &orders))
}

/// Schmidt spectrum normalised over `l ∈ [−window, window]`.
pub fn schmidt_spectrum(
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    window: usize,
    grids: &GridSpec,
) -> Result<SchmidtSpectrum> {
    if window == 0 {
        return Err(Error::InvalidParameter("spectrum window must be at least 1".into()));
    }
    let g = grids.resolve(pump.waist(), crystal, window)?;
    schmidt_spectrum_on(pump, crystal, window, &g)
}

/// As [`schmidt_spectrum`] on already resolved grids.
pub fn schmidt_spectrum_on(pump: &PumpConfig, crystal: &CrystalConfig, window: usize, grids: &Grids) -> Result<SchmidtSpectrum> {
    let raw = unnormalized_spectrum(pump, crystal, window, grids)?;
    SchmidtSpectrum::from_weights(raw, Some(grids.meta()))
}

/// Spectrum as a quadratic form in the pump coefficients.
///
/// `S_l ∝ α† Q_l α` where `Q_l[p][q]` integrates the product of the angular
/// Fourier coefficients of modes `p` and `q`. Building the matrices costs
/// about one spectrum evaluation per mode; afterwards any coefficient set
/// is evaluated in `O(D·N²)`.
#[derive(Debug, Clone)]
pub struct SpectrumModel {
    window: usize,
    n_modes: usize,
    waist: f64,
    wavelength: f64,
    meta: GridMeta,
    /// Upper triangle `p <= q`, for `l = 0..=window`, row-major per order.
    grams: Vec<Complex64>,
}

impl SpectrumModel {
    pub fn build(
        pump_waist: f64,
        crystal: &CrystalConfig,
        n_modes: usize,
        window: usize,
        grids: &GridSpec,
    ) -> Result<Self> {
        let g = grids.resolve(pump_waist, crystal, window)?;
        Self::build_on(pump_waist, crystal, n_modes, window, &g)
    }

    pub fn build_on(pump_waist: f64, crystal: &CrystalConfig, n_modes: usize, window: usize, grids: &Grids) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("at least one pump mode is required".into()));
        }
        if window == 0 {
            return Err(Error::InvalidParameter("spectrum window must be at least 1".into()));
        }
        if !(pump_waist.is_finite() && pump_waist > 0.0) {
            return Err(Error::InvalidParameter(format!("pump waist must be positive, got {pump_waist}")));
        }
        grids.angular.check_order(window)?;
        let nr = grids.radial.len();
        let m = grids.angular.len();
        let tri = n_modes * (n_modes + 1) / 2;
        let stride = tri;
        let len = (window + 1) * stride;
        let rows: Vec<Vec<Complex64>> = (0..nr)
            .into_par_iter()
            .map_init(
                || {
                    (
                        PairEvaluator::new(crystal, &grids.angular, pump_waist, n_modes),
                        AngularTransform::new(&grids.angular),
                        vec![vec![Complex64::new(0.0, 0.0); m]; n_modes],
                        vec![Complex64::new(0.0, 0.0); n_modes],
                    )
                },
                |(eval, tf, bufs, coef), i| {
                    let mut acc = vec![Complex64::new(0.0, 0.0); len];
                    let rs = grids.radial.nodes()[i];
                    for j in i..nr {
                        let ri = grids.radial.nodes()[j];
                        eval.fill_modes(rs, ri, bufs);
                        for b in bufs.iter_mut() {
                            tf.forward(b);
                        }
                        let w = pair_weight(&grids.radial, i, j);
                        for l in 0..=window {
                            for (c, b) in coef.iter_mut().zip(bufs.iter()) {
                                *c = tf.coefficient(b, l as i64);
                            }
                            let block = &mut acc[l * stride..(l + 1) * stride];
                            let mut idx = 0;
                            for p in 0..n_modes {
                                let cp = coef[p].conj() * w;
                                for q in p..n_modes {
                                    block[idx] += cp * coef[q];
                                    idx += 1;
                                }
                            }
                        }
                    }
                    acc
                },
            )
            .collect();
        let mut grams = vec![Complex64::new(0.0, 0.0); len];
        for row in rows {
            for (g, r) in grams.iter_mut().zip(row) {
                *g += r;
            }
        }
        Ok(Self {
            window,
            n_modes,
            waist: pump_waist,
            wavelength: crystal.pump_wavelength(),
            meta: grids.meta(),
            grams,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn mode_count(&self) -> usize {
        self.n_modes
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn grid(&self) -> GridMeta {
        self.meta
    }

    /// Unnormalised `S_l` for `l = −D..=D`. Shorter coefficient lists are zero-padded.
    pub fn unnormalized(&self, coeffs: &[Complex64]) -> Result<Vec<f64>> {
        if coeffs.len() > self.n_modes {
            return Err(Error::TooManyCoefficients { got: coeffs.len(), max: self.n_modes });
        }
        let n = self.n_modes;
        let stride = n * (n + 1) / 2;
        let mut outer = Vec::with_capacity(stride);
        let a = |p: usize| coeffs.get(p).copied().unwrap_or_default();
        for p in 0..n {
            for q in p..n {
                let prod = a(p).conj() * a(q);
                // off-diagonal entries appear twice in the Hermitian form
                outer.push(if p == q { prod } else { prod * 2.0 });
            }
        }
        let half: Vec<f64> = self
            .grams
            .chunks_exact(stride)
            .map(|block| block.iter().zip(&outer).map(|(g, o)| g.re * o.re - g.im * o.im).sum::<f64>().max(0.0))
            .collect();
        let d = self.window;
        let mut out = Vec::with_capacity(2 * d + 1);
        out.extend(half[1..].iter().rev());
        out.extend_from_slice(&half);
        Ok(out)
    }

    pub fn spectrum(&self, coeffs: &[Complex64]) -> Result<SchmidtSpectrum> {
        SchmidtSpectrum::from_weights(self.unnormalized(coeffs)?, Some(self.meta))
    }
}

/// Angular Fourier coefficient `F_l(ρ_s, ρ_i)` of `V·Φ` over all radial pairs.
#[derive(Debug, Clone)]
pub struct FourierKernel {
    order: i64,
    radial: RadialGrid,
    values: Vec<Complex64>,
}

impl FourierKernel {
    pub fn compute(pump: &PumpConfig, crystal: &CrystalConfig, order: i64, grids: &Grids) -> Result<Self> {
        check_setup(pump, crystal)?;
        grids.angular.check_order(order.unsigned_abs() as usize)?;
        let nr = grids.radial.len();
        let m = grids.angular.len();
        let rows: Vec<Vec<Complex64>> = (0..nr)
            .into_par_iter()
            .map_init(
                || {
                    (
                        PairEvaluator::new(crystal, &grids.angular, pump.waist(), pump.mode_count()),
                        AngularTransform::new(&grids.angular),
                        vec![Complex64::new(0.0, 0.0); m],
                    )
                },
                |(eval, tf, buf), i| {
                    let rs = grids.radial.nodes()[i];
                    (i..nr)
                        .map(|j| {
                            eval.fill_total(rs, grids.radial.nodes()[j], pump.coefficients(), buf);
                            tf.forward(buf);
                            tf.coefficient(buf, order)
                        })
                        .collect()
                },
            )
            .collect();
        let mut values = vec![Complex64::new(0.0, 0.0); nr * nr];
        for (i, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                let j = i + k;
                values[i * nr + j] = v;
                values[j * nr + i] = v;
            }
        }
        Ok(Self { order, radial: grids.radial.clone(), values })
    }

    pub fn order(&self) -> i64 {
        self.order
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.radial.len() + j]
    }

    /// Unnormalised `S_l` of this order (sum over all radial modes).
    pub fn total(&self) -> f64 {
        let x = self.radial.nodes();
        let w = self.radial.weights();
        let nr = x.len();
        let mut s = 0.0;
        for i in 0..nr {
            for j in 0..nr {
                s += w[i] * w[j] * x[i] * x[j] * self.values[i * nr + j].norm_sqr();
            }
        }
        s / FOUR_PI_SQ
    }

    /// `w_k ρ_k conj(LG_p^{|l|}(ρ_k))` for `p = 0..=p_max`.
    fn projections(&self, p_max: usize, waist: f64) -> Vec<Vec<Complex64>> {
        let m = self.order.unsigned_abs() as usize;
        let x = self.radial.nodes();
        let w = self.radial.weights();
        (0..=p_max)
            .map(|p| {
                let phase = lg_phase(m, p).conj();
                x.iter()
                    .zip(w)
                    .map(|(&r, &wt)| phase * (wt * r * lg_radial_magnitude(m, p, waist, r)))
                    .collect()
            })
            .collect()
    }

    /// `C^{l,p_s}_{−l,p_i}` for all `p_s, p_i <= p_max`, row-major.
    pub fn coefficient_matrix(&self, p_max: usize, waist: f64) -> Vec<Complex64> {
        let proj = self.projections(p_max, waist);
        let nr = self.radial.len();
        // T[p_s][j] = Σ_i proj[p_s][i] F[i][j]
        let t: Vec<Vec<Complex64>> = proj
            .iter()
            .map(|ps| {
                let mut row = vec![Complex64::new(0.0, 0.0); nr];
                for (i, &a) in ps.iter().enumerate() {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r += a * self.values[i * nr + j];
                    }
                }
                row
            })
            .collect();
        let mut out = Vec::with_capacity((p_max + 1) * (p_max + 1));
        for row in &t {
            for pi in &proj {
                out.push(row.iter().zip(pi).map(|(a, b)| a * b).sum());
            }
        }
        out
    }
}

/// LG mode coefficient `C^{l_s,p_s}_{l_i,p_i}` for detection waist `w_s = w_i`.
#[allow(clippy::too_many_arguments)]
pub fn mode_coefficient(
    l_s: i64,
    p_s: usize,
    l_i: i64,
    p_i: usize,
    detection_waist: f64,
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    grids: &GridSpec,
) -> Result<Complex64> {
    if !(detection_waist.is_finite() && detection_waist > 0.0) {
        return Err(Error::Domain(format!("detection waist must be positive, got {detection_waist}")));
    }
    if l_i != -l_s {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let g = grids.resolve(pump.waist(), crystal, l_s.unsigned_abs() as usize)?;
    let kernel = FourierKernel::compute(pump, crystal, l_s, &g)?;
    let p_max = p_s.max(p_i);
    let matrix = kernel.coefficient_matrix(p_max, detection_waist);
    Ok(matrix[p_s * (p_max + 1) + p_i])
}

/// `|C^{0,p_s}_{0,p_i}|²` normalised over `p_s, p_i <= p_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointRadialDistribution {
    pub p_max: usize,
    pub waist_ratio: f64,
    pub matrix: Vec<f64>,
}

impl JointRadialDistribution {
    pub fn get(&self, p_s: usize, p_i: usize) -> f64 {
        self.matrix[p_s * (self.p_max + 1) + p_i]
    }

    pub fn to_csv(&self) -> String {
        let n = self.p_max + 1;
        let mut out = String::from("p_s\\p_i");
        for p in 0..n {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
        for ps in 0..n {
            out.push_str(&ps.to_string());
            for pi in 0..n {
                out.push_str(&format!(",{:e}", self.get(ps, pi)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn joint_radial_distribution(
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    waist_ratio: f64,
    p_max: usize,
    grids: &GridSpec,
) -> Result<JointRadialDistribution> {
    if p_max < 1 {
        return Err(Error::InvalidParameter("P_max must be at least 1".into()));
    }
    if !(waist_ratio.is_finite() && waist_ratio > 0.0) {
        return Err(Error::Domain(format!("waist ratio must be positive, got {waist_ratio}")));
    }
    let g = grids.resolve(pump.waist(), crystal, 1)?;
    let kernel = FourierKernel::compute(pump, crystal, 0, &g)?;
    joint_from_kernel(&kernel, waist_ratio * pump.waist(), waist_ratio, p_max)
}

pub(crate) fn joint_from_kernel(
    kernel: &FourierKernel,
    detection_waist: f64,
    waist_ratio: f64,
    p_max: usize,
) -> Result<JointRadialDistribution> {
    let c = kernel.coefficient_matrix(p_max, detection_waist);
    let probs: Vec<f64> = c.iter().map(|v| v.norm_sqr()).collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    Ok(JointRadialDistribution { p_max, waist_ratio, matrix: probs.into_iter().map(|p| p / total).collect() })
}

/// True spectrum next to the `p_s = p_i = 0` detected spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PostselectionComparison {
    pub true_spectrum: SchmidtSpectrum,
    pub postselected: SchmidtSpectrum,
    /// Unnormalised `Σ_l S_l` over the window.
    pub true_total: f64,
    /// Unnormalised `Σ_l |C^{l,0}_{−l,0}|²` over the window.
    pub postselected_total: f64,
    pub true_raw: Vec<f64>,
    pub postselected_raw: Vec<f64>,
}

impl PostselectionComparison {
    /// Share of the true spectrum seen by a `p = 0` detector.
    pub fn fraction(&self) -> f64 {
        self.postselected_total / self.true_total
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,S_l,S_l_p0\n");
        for l in self.true_spectrum.orders() {
            out.push_str(&format!("{l},{:e},{:e}\n", self.true_spectrum.get(l), self.postselected.get(l)));
        }
        out
    }
}

pub fn postselection_comparison(
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    detection_waist: f64,
    window: usize,
    grids: &GridSpec,
) -> Result<PostselectionComparison> {
    check_setup(pump, crystal)?;
    if !(detection_waist.is_finite() && detection_waist > 0.0) {
        return Err(Error::Domain(format!("detection waist must be positive, got {detection_waist}")));
    }
    if window == 0 {
        return Err(Error::InvalidParameter("spectrum window must be at least 1".into()));
    }
    let g = grids.resolve(pump.waist(), crystal, window)?;
    g.angular.check_order(window)?;
    let nr = g.radial.len();
    let m = g.angular.len();
    let d = window as i64;
    // conj(LG_0^{|l|}) radial factors; modulus only needs the real part
    let modes: Vec<Vec<f64>> = (0..=window)
        .map(|ml| g.radial.nodes().iter().map(|&r| lg_radial_magnitude(ml, 0, detection_waist, r)).collect())
        .collect();
    let width = 2 * window + 1;
    let rows: Vec<(Vec<f64>, Vec<Complex64>)> = (0..nr)
        .into_par_iter()
        .map_init(
            || {
                (
                    PairEvaluator::new(crystal, &g.angular, pump.waist(), pump.mode_count()),
                    AngularTransform::new(&g.angular),
                    vec![Complex64::new(0.0, 0.0); m],
                )
            },
            |(eval, tf, buf), i| {
                let mut s = vec![0.0; width];
                let mut c = vec![Complex64::new(0.0, 0.0); width];
                let x = g.radial.nodes();
                let w = g.radial.weights();
                for j in i..nr {
                    eval.fill_total(x[i], x[j], pump.coefficients(), buf);
                    tf.forward(buf);
                    let pw = pair_weight(&g.radial, i, j);
                    let cw = w[i] * w[j] * x[i] * x[j] * if i == j { 1.0 } else { 2.0 };
                    for (k, l) in (-d..=d).enumerate() {
                        let f = tf.coefficient(buf, l);
                        s[k] += pw * f.norm_sqr();
                        let ml = l.unsigned_abs() as usize;
                        c[k] += f * (cw * modes[ml][i] * modes[ml][j]);
                    }
                }
                (s, c)
            },
        )
        .collect();
    let mut s_raw = vec![0.0; width];
    let mut c_raw = vec![Complex64::new(0.0, 0.0); width];
    for (s, c) in rows {
        for k in 0..width {
            s_raw[k] += s[k];
            c_raw[k] += c[k];
        }
    }
    let p_raw: Vec<f64> = c_raw.iter().map(|c| c.norm_sqr()).collect();
    let true_total = s_raw.iter().sum();
    let postselected_total = p_raw.iter().sum();
    Ok(PostselectionComparison {
        true_spectrum: SchmidtSpectrum::from_weights(s_raw.clone(), Some(g.meta()))?,
        postselected: SchmidtSpectrum::from_weights(p_raw.clone(), Some(g.meta()))?,
        true_total,
        postselected_total,
        true_raw: s_raw,
        postselected_raw: p_raw,
    })
}

/// `|C^{l,0}_{−l,0}|²` normalised over the window.
pub fn postselected_spectrum(
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    detection_waist: f64,
    window: usize,
    grids: &GridSpec,
) -> Result<SchmidtSpectrum> {
    Ok(postselection_comparison(pump, crystal, detection_waist, window, grids)?.postselected)
}

/// Partial sums of `|C^{l,p_s}_{−l,p_i}|²` against the full radial sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialSumConvergence {
    pub order: i64,
    /// Entry `P` holds `Σ_{p_s, p_i <= P} |C|²`.
    pub partial_sums: Vec<f64>,
    /// Unnormalised `S_l` with all radial modes included.
    pub total: f64,
}

impl RadialSumConvergence {
    pub fn captured_fraction(&self) -> Vec<f64> {
        self.partial_sums.iter().map(|s| s / self.total).collect()
    }
}

pub fn radial_sum_convergence(
    l: i64,
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    detection_waist: f64,
    p_cutoff: usize,
    grids: &GridSpec,
) -> Result<RadialSumConvergence> {
    if p_cutoff > MAX_RADIAL_CUTOFF {
        return Err(Error::InvalidParameter(format!("radial cutoff {p_cutoff} exceeds {MAX_RADIAL_CUTOFF}")));
    }
    if !(detection_waist.is_finite() && detection_waist > 0.0) {
        return Err(Error::Domain(format!("detection waist must be positive, got {detection_waist}")));
    }
    let g = grids.resolve(pump.waist(), crystal, l.unsigned_abs() as usize)?;
    let kernel = FourierKernel::compute(pump, crystal, l, &g)?;
    let c = kernel.coefficient_matrix(p_cutoff, detection_waist);
    let n = p_cutoff + 1;
    let mut partial_sums = Vec::with_capacity(n);
    let mut acc = 0.0;
    for p in 0..n {
        // add the new border row and column of the (p+1)x(p+1) block
        for q in 0..p {
            acc += c[p * n + q].norm_sqr() + c[q * n + p].norm_sqr();
        }
        acc += c[p * n + p].norm_sqr();
        partial_sums.push(acc);
    }
    Ok(RadialSumConvergence { order: l, partial_sums, total: kernel.total() })
}
