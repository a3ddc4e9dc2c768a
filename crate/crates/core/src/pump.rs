//! Shaped pump: coherent superposition of `l = 0` LG modes with different
//! radial indices, expressed in the signal/idler transverse momenta.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modemath::laguerre_series;

/// Pump beam with normalised superposition coefficients `α_p`, `p = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpConfig {
    wavelength: f64,
    waist: f64,
    coefficients: Vec<Complex64>,
}

impl PumpConfig {
    /// Normalises `raw` with [`normalize_coefficients`].
    pub fn new(wavelength: f64, waist: f64, raw: &[Complex64]) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidParameter(format!("pump wavelength must be positive, got {wavelength}")));
        }
        if !(waist.is_finite() && waist > 0.0) {
            return Err(Error::InvalidParameter(format!("pump waist must be positive, got {waist}")));
        }
        let coefficients = normalize_coefficients(raw)?;
        Ok(Self { wavelength, waist, coefficients })
    }

    /// Plain Gaussian (`N = 1`).
    pub fn gaussian(wavelength: f64, waist: f64) -> Result<Self> {
        Self::new(wavelength, waist, &[Complex64::new(1.0, 0.0)])
    }

    pub fn with_coefficients(&self, raw: &[Complex64]) -> Result<Self> {
        Self::new(self.wavelength, self.waist, raw)
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn mode_count(&self) -> usize {
        self.coefficients.len()
    }
}

/// `sqrt(Σ|α_p|²)` of an unnormalised list.
pub fn coefficient_norm(raw: &[Complex64]) -> f64 {
    raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Scales to unit norm and removes the global phase so that the first
/// nonzero entry is real and positive.
pub fn normalize_coefficients(raw: &[Complex64]) -> Result<Vec<Complex64>> {
    if raw.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::Domain("non-finite pump coefficient".into()));
    }
    let norm = coefficient_norm(raw);
    let first = raw.iter().find(|a| a.norm_sqr() > 0.0).copied();
    let first = match first {
        Some(a) if norm > 0.0 => a,
        _ => return Err(Error::DegeneratePump),
    };
    let rotate = first.conj() / (first.norm() * norm);
    let mut out: Vec<Complex64> = raw.iter().map(|&a| a * rotate).collect();
    // exact zero imaginary part on the reference entry
    if let Some(a) = out.iter_mut().find(|a| a.norm_sqr() > 0.0) {
        *a = Complex64::new(a.norm(), 0.0);
    }
    Ok(out)
}

/// Zero-pads to `n` modes; longer lists are rejected rather than truncated.
pub fn pad_coefficients(raw: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if raw.len() > n {
        return Err(Error::TooManyCoefficients { got: raw.len(), max: n });
    }
    let mut out = raw.to_vec();
    out.resize(n, Complex64::new(0.0, 0.0));
    Ok(out)
}

/// Squared pump transverse momentum `ρ_p² = |q_s + q_i|²`.
#[inline]
pub fn pump_momentum_sq(rho_s: f64, rho_i: f64, cos_dphi: f64) -> f64 {
    (rho_s * rho_s + rho_i * rho_i + 2.0 * rho_s * rho_i * cos_dphi).max(0.0)
}

/// Real amplitudes of the individual pump modes (including `(−1)^p`) at
/// a given `ρ_p²`, written into `out[p]`.
#[inline]
pub fn pump_mode_amplitudes(waist: f64, rho_p_sq: f64, out: &mut [f64]) {
    let x = 0.5 * waist * waist * rho_p_sq;
    laguerre_series(x, out);
    let envelope = (waist * waist / (2.0 * PI)).sqrt() * (-0.5 * x).exp();
    for (p, v) in out.iter_mut().enumerate() {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        *v *= sign * envelope;
    }
}

/// Pump amplitude `V(ρ_s, ρ_i, Δφ)`.
pub fn pump_amplitude(rho_s: f64, rho_i: f64, delta_phi: f64, pump: &PumpConfig) -> Complex64 {
    let mut modes = vec![0.0; pump.mode_count()];
    pump_mode_amplitudes(pump.waist, pump_momentum_sq(rho_s, rho_i, delta_phi.cos()), &mut modes);
    modes.iter().zip(&pump.coefficients).map(|(&m, &a)| a * m).sum()
}

/// One row of a published or saved coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub shape: String,
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_p_deg: Option<f64>,
    /// `[re, im]` pairs for `α_0, α_1, …`.
    pub coefficients: Vec<[f64; 2]>,
}

impl CoefficientSet {
    pub fn complex(&self) -> Vec<Complex64> {
        pairs_to_complex(&self.coefficients)
    }
}

/// A coefficient file: a list of `[[set]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    #[serde(default)]
    pub description: String,
    #[serde(rename = "set")]
    pub sets: Vec<CoefficientSet>,
}

impl CoefficientTable {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("coefficient table: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn find(&self, shape: &str, width: f64) -> Option<&CoefficientSet> {
        self.sets.iter().find(|s| s.shape.eq_ignore_ascii_case(shape) && (s.width - width).abs() < 1e-9)
    }
}

pub fn pairs_to_complex(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

pub fn complex_to_pairs(values: &[Complex64]) -> Vec<[f64; 2]> {
    values.iter().map(|c| [c.re, c.im]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const W: f64 = 320e-6;

    #[test]
    fn normalize_single_mode() {
        assert_eq!(normalize_coefficients(&[c(2.0, 0.0)]).unwrap(), vec![c(1.0, 0.0)]);
        assert_eq!(normalize_coefficients(&[c(0.0, -3.0)]).unwrap(), vec![c(1.0, 0.0)]);
    }

    #[test]
    fn normalize_fixes_phase_and_norm() {
        let out = normalize_coefficients(&[c(1.0, 1.0), c(0.0, 0.0)]).unwrap();
        assert!((out[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(out[0].im, 0.0);
        assert_eq!(out[1], c(0.0, 0.0));

        let out = normalize_coefficients(&[c(0.0, 0.0), c(1.0, 1.0), c(0.0, 2.0)]).unwrap();
        assert!((coefficient_norm(&out) - 1.0).abs() < 1e-15);
        assert_eq!(out[1].im, 0.0);
        assert!(out[1].re > 0.0);
        // relative phase preserved: α2/α1 = 2i/(1+i) = 1 + i
        let ratio = out[2] / out[1];
        assert!((ratio - c(1.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn normalize_rejects_zero() {
        assert_eq!(normalize_coefficients(&[]), Err(Error::DegeneratePump));
        assert_eq!(normalize_coefficients(&[c(0.0, 0.0); 3]), Err(Error::DegeneratePump));
        assert!(normalize_coefficients(&[c(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn published_row_renormalizes_with_small_drift() {
        let raw = [c(0.21, 0.94), c(-0.13, 0.19), c(-0.09, -0.01), c(-0.01, -0.03), c(0.03, -0.02)];
        assert!((coefficient_norm(&raw) - 1.0).abs() < 0.05);
        let out = normalize_coefficients(&raw).unwrap();
        assert!((coefficient_norm(&out) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn padding_policy() {
        let p = pad_coefficients(&[c(1.0, 0.0)], 3).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[2], c(0.0, 0.0));
        assert!(matches!(
            pad_coefficients(&[c(1.0, 0.0); 4], 3),
            Err(Error::TooManyCoefficients { got: 4, max: 3 })
        ));
    }

    #[test]
    fn gaussian_peak_on_anti_parallel_pair() {
        let pump = PumpConfig::gaussian(405e-9, W).unwrap();
        let v = pump_amplitude(1e5, 1e5, PI, &pump);
        assert!((v.re - (W * W / (2.0 * PI)).sqrt()).abs() < 1e-12 * v.re);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn amplitude_is_linear_in_coefficients() {
        let a = [c(0.3, 0.1), c(0.0, 0.0), c(-0.2, 0.5)];
        let b = [c(0.0, 0.0), c(0.7, -0.4), c(0.0, 0.0)];
        let sum: Vec<_> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        // compare unnormalised superpositions through the mode amplitudes
        let mut modes = [0.0; 3];
        for &(rs, ri, dphi) in &[(1e4, 2e4, 0.3), (5e3, 5e3, 3.0), (0.0, 8e3, 1.0)] {
            pump_mode_amplitudes(W, pump_momentum_sq(rs, ri, f64::cos(dphi)), &mut modes);
            let v = |coef: &[Complex64]| -> Complex64 { coef.iter().zip(&modes).map(|(a, m)| a * m).sum() };
            assert!((v(&sum) - v(&a) - v(&b)).norm() < 1e-15);
        }
    }

    #[test]
    fn p1_mode_changes_sign_at_laguerre_root() {
        let pump = PumpConfig::new(405e-9, W, &[c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        // w²ρ_p²/2 = 1 with ρ_i = 0, so ρ_s = √2/w
        let root = 2f64.sqrt() / W;
        let before = pump_amplitude(root * 0.99, 0.0, 0.0, &pump);
        let after = pump_amplitude(root * 1.01, 0.0, 0.0, &pump);
        assert!(before.re * after.re < 0.0);
        // locate numerically by bisection
        let (mut lo, mut hi) = (root * 0.5, root * 1.5);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if pump_amplitude(mid, 0.0, 0.0, &pump).re.signum() == pump_amplitude(lo, 0.0, 0.0, &pump).re.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * W * W * lo * lo - 1.0).abs() < 1e-9);
    }

    #[test]
    fn amplitude_even_in_delta_phi_and_real_for_real_coefficients() {
        let pump = PumpConfig::new(405e-9, W, &[c(0.4, 0.0), c(-0.7, 0.0), c(0.2, 0.0)]).unwrap();
        for k in 0..40 {
            let d = -PI + k as f64 * 0.157;
            let a = pump_amplitude(3e3, 4.5e3, d, &pump);
            let b = pump_amplitude(3e3, 4.5e3, -d, &pump);
            assert!((a - b).norm() < 1e-12 * a.norm().max(1e-300));
            assert_eq!(a.im, 0.0);
        }
    }

    #[test]
    fn modulus_invariant_under_global_phase() {
        let raw = [c(0.2, 0.5), c(-0.3, 0.1), c(0.6, -0.2)];
        let rot = Complex64::from_polar(1.0, 1.234);
        let rotated: Vec<_> = raw.iter().map(|a| a * rot).collect();
        let p1 = PumpConfig::new(405e-9, W, &raw).unwrap();
        let p2 = PumpConfig::new(405e-9, W, &rotated).unwrap();
        let a = pump_amplitude(2e3, 7e3, 2.2, &p1);
        let b = pump_amplitude(2e3, 7e3, 2.2, &p2);
        assert!((a.norm() - b.norm()).abs() < 1e-12 * a.norm());
    }

    #[test]
    fn coefficient_table_roundtrip() {
        let text = r#"
description = "demo"
[[set]]
shape = "gaussian"
width = 20
coefficients = [[0.21, 0.94], [-0.13, 0.19]]
"#;
        let table = CoefficientTable::from_toml_str(text).unwrap();
        let set = table.find("Gaussian", 20.0).unwrap();
        assert_eq!(set.complex(), vec![c(0.21, 0.94), c(-0.13, 0.19)]);
        let back = CoefficientTable::from_toml_str(&toml::to_string(&table).unwrap()).unwrap();
        assert_eq!(back, table);
        assert!(CoefficientTable::from_toml_str("[[set]]\nshape = 1").is_err());
    }
}
