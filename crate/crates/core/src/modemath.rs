//! Special functions, quadrature grids and the angular Fourier reduction.
//!
//! Every spectrum integral in this crate has the shape
//! `∫∫ ρ_s ρ_i dρ_s dρ_i |∫∫ f(φ_s − φ_i) e^{−il(φ_s−φ_i)} dφ_s dφ_i|²`.
//! The radial part is discretised with composite Gauss-Legendre panels and
//! the angular part, which only depends on `Δφ = φ_s − φ_i`, collapses to a
//! single periodic trapezoid sum evaluated for all `l` at once with an FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Highest Laguerre order accepted by [`laguerre`].
pub const MAX_LAGUERRE_ORDER: usize = 200;

/// Associated Laguerre polynomial `L_p^alpha(x)` by upward recurrence.
pub fn laguerre(p: usize, alpha: usize, x: f64) -> Result<f64> {
    if p > MAX_LAGUERRE_ORDER {
        return Err(Error::UnsupportedOrder { order: p, max: MAX_LAGUERRE_ORDER });
    }
    Ok(laguerre_unchecked(p, alpha as f64, x))
}

pub(crate) fn laguerre_unchecked(p: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[p] = L_p^0(x)` for `p = 0..out.len()`.
#[inline]
pub(crate) fn laguerre_series(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 1.0 - x;
    for p in 1..out.len() - 1 {
        let k = p as f64;
        out[p + 1] = ((2.0 * k + 1.0 - x) * out[p] - k * out[p - 1]) / (k + 1.0);
    }
}

/// Azimuth-stripped momentum-space LG amplitude `LG_p^l(ρ) e^{−ilφ}`.
///
/// Normalised so that `∫ |lg_radial|² 2πρ dρ = 1`; the Gouy-type phase
/// `exp(iπ(p − |l|/2))` is kept.
pub fn lg_radial(l: i32, p: usize, waist: f64, rho: f64) -> Result<Complex64> {
    if !waist.is_finite() || !rho.is_finite() {
        return Err(Error::Domain(format!("non-finite LG argument (w = {waist}, rho = {rho})")));
    }
    if waist <= 0.0 || rho < 0.0 {
        return Err(Error::Domain(format!("LG mode needs w > 0 and rho >= 0 (w = {waist}, rho = {rho})")));
    }
    if p > MAX_LAGUERRE_ORDER {
        return Err(Error::UnsupportedOrder { order: p, max: MAX_LAGUERRE_ORDER });
    }
    let m = l.unsigned_abs() as usize;
    let radial = lg_radial_magnitude(m, p, waist, rho);
    Ok(radial * lg_phase(m, p))
}

/// Real radial factor of [`lg_radial`] without the constant phase.
pub(crate) fn lg_radial_magnitude(m: usize, p: usize, waist: f64, rho: f64) -> f64 {
    let x = 0.5 * waist * waist * rho * rho;
    let lag = laguerre_unchecked(p, m as f64, x);
    // p!/(p+m)! and (wρ/√2)^m combined in log space
    let mut log_ratio = 0.0;
    for k in (p + 1)..=(p + m) {
        log_ratio -= (k as f64).ln();
    }
    let scale = if m == 0 {
        (-0.5 * x).exp()
    } else if rho == 0.0 {
        0.0
    } else {
        (0.5 * log_ratio + m as f64 * (waist * rho / 2f64.sqrt()).ln() - 0.5 * x).exp()
    };
    (waist * waist / (2.0 * PI)).sqrt() * scale * lag
}

/// `exp(iπ(p − m/2))`, exact on the axes.
pub(crate) fn lg_phase(m: usize, p: usize) -> Complex64 {
    // exponent in quarter turns: 2p - m
    let quarter = (2 * p as i64 - m as i64).rem_euclid(4);
    match quarter {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Radial quadrature rule on `[0, rho_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rho_max: f64,
}

impl RadialGrid {
    /// Composite Gauss-Legendre rule with `total_nodes / panel_nodes` equal panels.
    pub fn composite(rho_max: f64, total_nodes: usize, panel_nodes: usize) -> Result<Self> {
        if !(rho_max.is_finite() && rho_max > 0.0) {
            return Err(Error::InvalidParameter(format!("rho_max must be positive, got {rho_max}")));
        }
        if panel_nodes == 0 || total_nodes == 0 || !total_nodes.is_multiple_of(panel_nodes) {
            return Err(Error::InvalidParameter(format!(
                "{total_nodes} radial nodes cannot be split into panels of {panel_nodes}"
            )));
        }
        let panels = total_nodes / panel_nodes;
        let width = rho_max / panels as f64;
        let mut nodes = Vec::with_capacity(total_nodes);
        let mut weights = Vec::with_capacity(total_nodes);
        for k in 0..panels {
            let a = k as f64 * width;
            let b = if k + 1 == panels { rho_max } else { (k + 1) as f64 * width };
            let seg = gauss_legendre(panel_nodes, a, b)?;
            nodes.extend_from_slice(&seg.nodes);
            weights.extend_from_slice(&seg.weights);
        }
        Ok(Self { nodes, weights, rho_max })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature of `g(ρ) dρ`.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }
}

/// Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<RadialGrid> {
    if n == 0 {
        return Err(Error::InvalidParameter("Gauss-Legendre needs at least one node".into()));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid interval [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is descending in i; store ascending
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = mid;
    }
    Ok(RadialGrid { nodes, weights, rho_max: b })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Uniform samples of `Δφ` over `[−π, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    samples: Vec<f64>,
    cosines: Vec<f64>,
}

impl AngularGrid {
    pub fn new(sample_count: usize) -> Result<Self> {
        if sample_count < 4 || !sample_count.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "angular sample count must be a power of two >= 4, got {sample_count}"
            )));
        }
        let m = sample_count;
        let step = 2.0 * PI / m as f64;
        let samples: Vec<f64> = (0..m).map(|k| -PI + step * k as f64).collect();
        // cos(Δφ_k) == cos(Δφ_{M−k}) bit for bit, so even integrands stay even
        let mut cosines = vec![0.0; m];
        for k in 0..=m / 2 {
            let c = samples[k].cos();
            cosines[k] = c;
            if k > 0 {
                cosines[m - k] = c;
            }
        }
        Ok(Self { samples, cosines })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.samples.len() as f64
    }

    /// Largest `|l|` resolvable with the 4x anti-aliasing margin.
    pub fn max_order(&self) -> usize {
        self.samples.len() / 4
    }

    pub fn check_order(&self, l_max: usize) -> Result<()> {
        let required = 4 * l_max;
        if self.samples.len() < required {
            return Err(Error::Aliasing { samples: self.samples.len(), l_max, required });
        }
        Ok(())
    }
}

/// Double-angle integrals `F_l` for `|l| <= l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularCoefficients {
    l_max: usize,
    values: Vec<Complex64>,
}

impl AngularCoefficients {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn get(&self, l: i64) -> Complex64 {
        self.values[(l + self.l_max as i64) as usize]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Reusable FFT plan for the angular reduction over a fixed [`AngularGrid`].
#[derive(Clone)]
pub struct AngularTransform {
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    len: usize,
}

impl AngularTransform {
    pub fn new(grid: &AngularGrid) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(grid.len());
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Self { fft, scratch, len: grid.len() }
    }

    /// In-place DFT of samples taken on the grid; read results with [`Self::coefficient`].
    pub fn forward(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.fft.process_with_scratch(buf, &mut self.scratch);
    }

    /// `F_l = 2π · (2π/M) Σ_k f(Δφ_k) e^{−ilΔφ_k}` from a transformed buffer.
    #[inline]
    pub fn coefficient(&self, transformed: &[Complex64], l: i64) -> Complex64 {
        let m = self.len as i64;
        let idx = l.rem_euclid(m) as usize;
        // e^{−il(−π)} = (−1)^l for the grid origin at −π
        let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        transformed[idx] * (sign * 4.0 * PI * PI / m as f64)
    }
}

/// Full double-angle integral of a `Δφ`-only integrand for every `|l| <= l_max`.
pub fn angular_fourier(samples: &[Complex64], l_max: usize) -> Result<AngularCoefficients> {
    let grid = AngularGrid::new(samples.len())?;
    grid.check_order(l_max)?;
    let mut tf = AngularTransform::new(&grid);
    let mut buf = samples.to_vec();
    tf.forward(&mut buf);
    let values = (-(l_max as i64)..=l_max as i64).map(|l| tf.coefficient(&buf, l)).collect();
    Ok(AngularCoefficients { l_max, values })
}
