//! Dispersion, anisotropy and the phase-matching function of a negative
//! uniaxial crystal pumped with an extraordinary beam (type-I, degenerate).

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BBO_EIMERL_1987: &str = include_str!("../data/bbo_eimerl1987.toml");

/// Sellmeier coefficients for `n² = a + b/(λ² − c) − d·λ²` with `λ` in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SellmeierCoefficients {
    pub fn index(&self, wavelength: f64) -> f64 {
        let um2 = (wavelength * 1e6).powi(2);
        (self.a + self.b / (um2 - self.c) - self.d * um2).sqrt()
    }
}

/// Tabulated dispersion of both polarisations with a validity window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub name: String,
    #[serde(default)]
    pub version: u32,
    pub valid_range_nm: [f64; 2],
    pub ordinary: SellmeierCoefficients,
    pub extraordinary: SellmeierCoefficients,
}

impl Dispersion {
    /// Bundled BBO data set.
    pub fn bbo() -> Self {
        Self::from_toml_str(BBO_EIMERL_1987).expect("bundled dispersion file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let d: Dispersion = toml::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("dispersion data: {e}")))?;
        let [lo, hi] = d.valid_range_nm;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidParameter(format!("dispersion range [{lo}, {hi}] nm is empty")));
        }
        Ok(d)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// `(n_o, n_e)` at a vacuum wavelength in metres.
    pub fn indices(&self, wavelength: f64) -> Result<(f64, f64)> {
        let nm = wavelength * 1e9;
        let [lo, hi] = self.valid_range_nm;
        if !(nm >= lo && nm <= hi) {
            return Err(Error::DispersionRange { wavelength_nm: nm, min_nm: lo, max_nm: hi });
        }
        Ok((self.ordinary.index(wavelength), self.extraordinary.index(wavelength)))
    }
}

/// Crystal geometry and derived phase-matching constants.
///
/// Immutable once built; use the `with_*` methods for variants.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalConfig {
    thickness: f64,
    theta_p: f64,
    pump_wavelength: f64,
    dispersion: Dispersion,
    derived: Derived,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Derived {
    k_p0: f64,
    n_po: f64,
    n_pe: f64,
    n_so: f64,
    aniso: AnisotropyParams,
}

impl CrystalConfig {
    /// `thickness` in m, `theta_p` in rad, `pump_wavelength` in m. Degenerate
    /// down-conversion (`λ_s = λ_i = 2λ_p`) is implied.
    pub fn new(thickness: f64, theta_p: f64, pump_wavelength: f64, dispersion: Dispersion) -> Result<Self> {
        if !(thickness.is_finite() && thickness > 0.0) {
            return Err(Error::InvalidParameter(format!("crystal thickness must be positive, got {thickness} m")));
        }
        if !(theta_p > 0.0 && theta_p < FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "phase-matching angle must lie in (0, 90) deg, got {} deg",
                theta_p.to_degrees()
            )));
        }
        if !(pump_wavelength.is_finite() && pump_wavelength > 0.0) {
            return Err(Error::InvalidParameter(format!("pump wavelength must be positive, got {pump_wavelength} m")));
        }
        let (n_po, n_pe) = dispersion.indices(pump_wavelength)?;
        let (n_so, _) = dispersion.indices(2.0 * pump_wavelength)?;
        check_negative_uniaxial(&dispersion)?;
        let derived = Derived {
            k_p0: 2.0 * PI / pump_wavelength,
            n_po,
            n_pe,
            n_so,
            aniso: anisotropy_from_indices(theta_p, n_po, n_pe),
        };
        Ok(Self { thickness, theta_p, pump_wavelength, dispersion, derived })
    }

    /// 405 nm pump on BBO.
    pub fn bbo(thickness: f64, theta_p: f64) -> Result<Self> {
        Self::new(thickness, theta_p, 405e-9, Dispersion::bbo())
    }

    pub fn with_theta_p(&self, theta_p: f64) -> Result<Self> {
        Self::new(self.thickness, theta_p, self.pump_wavelength, self.dispersion.clone())
    }

    pub fn with_thickness(&self, thickness: f64) -> Result<Self> {
        Self::new(thickness, self.theta_p, self.pump_wavelength, self.dispersion.clone())
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn theta_p(&self) -> f64 {
        self.theta_p
    }

    pub fn pump_wavelength(&self) -> f64 {
        self.pump_wavelength
    }

    pub fn dispersion(&self) -> &Dispersion {
        &self.dispersion
    }

    /// Pump vacuum wavenumber `K_p0`.
    pub fn pump_wavenumber(&self) -> f64 {
        self.derived.k_p0
    }

    /// Ordinary index at the degenerate signal wavelength.
    pub fn signal_index(&self) -> f64 {
        self.derived.n_so
    }

    pub fn pump_indices(&self) -> (f64, f64) {
        (self.derived.n_po, self.derived.n_pe)
    }

    pub fn anisotropy(&self) -> AnisotropyParams {
        self.derived.aniso
    }

    /// Longitudinal mismatch on axis, `K_p0 (n_so − η_p)`.
    pub fn axial_mismatch(&self) -> f64 {
        self.derived.k_p0 * (self.derived.n_so - self.derived.aniso.eta)
    }

    /// Radius of the perfectly phase-matched ring for anti-parallel pairs
    /// (`ρ_s = ρ_i`, `Δφ = π`); zero at or below the collinear angle.
    pub fn ring_radius(&self) -> f64 {
        let d = self.axial_mismatch();
        if d <= 0.0 {
            return 0.0;
        }
        (0.5 * self.derived.aniso.eta * self.derived.k_p0 * d).sqrt()
    }

    /// Radius of the first sinc zero outside the phase-matched region for
    /// anti-parallel pairs.
    pub fn phase_matching_extent(&self) -> f64 {
        let lobe = 2.0 * PI / self.thickness;
        let d = (self.axial_mismatch() + lobe).max(lobe);
        (0.5 * self.derived.aniso.eta * self.derived.k_p0 * d).sqrt()
    }
}

fn check_negative_uniaxial(dispersion: &Dispersion) -> Result<()> {
    let [lo, hi] = dispersion.valid_range_nm;
    for k in 0..=80 {
        let nm = lo + (hi - lo) * k as f64 / 80.0;
        let (no, ne) = (dispersion.ordinary.index(nm * 1e-9), dispersion.extraordinary.index(nm * 1e-9));
        if !(no > ne) {
            return Err(Error::InvalidParameter(format!(
                "dispersion '{}' is not negative uniaxial at {nm} nm (n_o = {no}, n_e = {ne})",
                dispersion.name
            )));
        }
    }
    Ok(())
}

/// `(n_o, n_e)` of the crystal at `wavelength` (m).
pub fn refractive_indices(wavelength: f64, config: &CrystalConfig) -> Result<(f64, f64)> {
    config.dispersion.indices(wavelength)
}

/// Walk-off and effective-index parameters of the extraordinary pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnisotropyParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
}

pub fn anisotropy(config: &CrystalConfig) -> AnisotropyParams {
    config.derived.aniso
}

pub(crate) fn anisotropy_from_indices(theta: f64, n_o: f64, n_e: f64) -> AnisotropyParams {
    let (s, c) = theta.sin_cos();
    let denom = n_o * n_o * s * s + n_e * n_e * c * c;
    AnisotropyParams {
        alpha: (n_o * n_o - n_e * n_e) * s * c / denom,
        beta: n_o * n_e / denom,
        gamma: n_o / denom.sqrt(),
        eta: n_o * n_e / denom.sqrt(),
    }
}

/// Phase mismatch in the paraxial, walk-off-free form used throughout the
/// spectrum engine. Depends on the azimuths only through `Δφ`.
#[inline]
pub fn delta_kz(rho_s: f64, rho_i: f64, delta_phi: f64, config: &CrystalConfig) -> f64 {
    delta_kz_cos(rho_s, rho_i, delta_phi.cos(), config)
}

#[inline]
pub(crate) fn delta_kz_cos(rho_s: f64, rho_i: f64, cos_dphi: f64, config: &CrystalConfig) -> f64 {
    let d = &config.derived;
    let transverse = rho_s * rho_s + rho_i * rho_i - 2.0 * rho_s * rho_i * cos_dphi;
    d.k_p0 * (d.n_so - d.aniso.eta) - transverse / (2.0 * d.aniso.eta * d.k_p0)
}

/// Phase mismatch with the full anisotropic pump wavevector (walk-off
/// `α_p`, elliptic `β_p`, `γ_p`), for transverse momenta given as Cartesian
/// vectors in the crystal frame. Used to quantify the error of
/// [`delta_kz`]; it does not reduce to a function of `Δφ` alone.
pub fn delta_kz_full(q_s: [f64; 2], q_i: [f64; 2], config: &CrystalConfig) -> f64 {
    let d = &config.derived;
    let a = d.aniso;
    let k_s0 = 0.5 * d.k_p0;
    let qpx = q_s[0] + q_i[0];
    let qpy = q_s[1] + q_i[1];
    let k_pz = -a.alpha * qpx + a.eta * d.k_p0
        - (a.beta * a.beta * qpx * qpx + a.gamma * a.gamma * qpy * qpy) / (2.0 * a.eta * d.k_p0);
    let k_sz = d.n_so * k_s0 - (q_s[0] * q_s[0] + q_s[1] * q_s[1]) / (2.0 * d.n_so * k_s0);
    let k_iz = d.n_so * k_s0 - (q_i[0] * q_i[0] + q_i[1] * q_i[1]) / (2.0 * d.n_so * k_s0);
    k_sz + k_iz - k_pz
}

/// `sinc(x) = sin(x)/x` with the removable singularity filled in.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `Φ = sinc(Δk_z L/2) exp(iΔk_z L/2)` for a given mismatch.
#[inline]
pub fn phase_matching_from_mismatch(delta_kz: f64, thickness: f64) -> Complex64 {
    let half = 0.5 * delta_kz * thickness;
    let (s, c) = half.sin_cos();
    if half.abs() < 1e-4 {
        let sc = sinc(half);
        Complex64::new(sc * c, sc * s)
    } else {
        Complex64::new(s * c / half, s * s / half)
    }
}

pub fn phase_matching(rho_s: f64, rho_i: f64, delta_phi: f64, config: &CrystalConfig) -> Complex64 {
    phase_matching_from_mismatch(delta_kz(rho_s, rho_i, delta_phi, config), config.thickness)
}

/// Angle at which `η_p(θ) = n_o(2λ_p)`, i.e. collinear degenerate emission.
pub fn collinear_angle(config: &CrystalConfig) -> Result<f64> {
    let (n_po, n_pe) = config.pump_indices();
    let target = config.signal_index();
    if !(n_pe < target && target < n_po) {
        return Err(Error::Unphasematchable(format!(
            "need n_e(λp) = {n_pe} < n_o(2λp) = {target} < n_o(λp) = {n_po}"
        )));
    }
    // η_p falls monotonically from n_po at 0 to n_pe at π/2
    let g = |t: f64| anisotropy_from_indices(t, n_po, n_pe).eta - target;
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbo(theta_deg: f64) -> CrystalConfig {
        CrystalConfig::bbo(10e-3, theta_deg.to_radians()).unwrap()
    }

    #[test]
    fn normal_dispersion_and_birefringence() {
        let c = bbo(28.71);
        let (no_405, ne_405) = refractive_indices(405e-9, &c).unwrap();
        let (no_810, ne_810) = refractive_indices(810e-9, &c).unwrap();
        assert!(no_405 > no_810);
        assert!(no_405 > ne_405);
        assert!(no_810 > ne_810);
    }

    #[test]
    fn bbo_indices_match_independent_evaluation() {
        // values from a separate double-precision evaluation of the same coefficients
        let c = bbo(28.71);
        let (no, ne) = refractive_indices(405e-9, &c).unwrap();
        assert!((no - 1.692_299_383_056_273).abs() < 1e-12);
        assert!((ne - 1.567_965_921_557_472).abs() < 1e-12);
        let (no, _) = refractive_indices(810e-9, &c).unwrap();
        assert!((no - 1.661_072_405_837_087).abs() < 1e-12);
    }

    #[test]
    fn wavelength_outside_window() {
        let c = bbo(28.71);
        assert!(matches!(refractive_indices(250e-9, &c), Err(Error::DispersionRange { .. })));
        assert!(matches!(refractive_indices(1200e-9, &c), Err(Error::DispersionRange { .. })));
        // 2 x 600 nm falls outside for the signal
        assert!(CrystalConfig::new(10e-3, 0.5, 600e-9, Dispersion::bbo()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CrystalConfig::bbo(0.0, 0.5).is_err());
        assert!(CrystalConfig::bbo(1e-3, 0.0).is_err());
        assert!(CrystalConfig::bbo(1e-3, FRAC_PI_2).is_err());
        let mut d = Dispersion::bbo();
        std::mem::swap(&mut d.ordinary, &mut d.extraordinary);
        assert!(CrystalConfig::new(1e-3, 0.5, 405e-9, d).is_err());
    }

    #[test]
    fn anisotropy_limits() {
        let n_o = 1.69;
        let n_e = 1.57;
        let a0 = anisotropy_from_indices(0.0, n_o, n_e);
        assert_eq!(a0.alpha, 0.0);
        assert!((a0.eta - n_o).abs() < 1e-15);
        let a90 = anisotropy_from_indices(FRAC_PI_2, n_o, n_e);
        assert!(a90.alpha.abs() < 1e-16);
        assert!((a90.eta - n_e).abs() < 1e-15);
        assert!((a90.gamma - 1.0).abs() < 1e-15);
    }

    #[test]
    fn anisotropy_at_working_point() {
        // hand evaluation at θ = 28.71°, n_po = 1.692299383056273, n_pe = 1.567965921557472
        let a = anisotropy(&bbo(28.71));
        assert!((a.alpha - 0.066_921_026_914).abs() < 1e-10, "{a:?}");
        assert!((a.beta - 1.039_736_181_669).abs() < 1e-10, "{a:?}");
        assert!((a.gamma - 1.059_331_452_218).abs() < 1e-10, "{a:?}");
        assert!((a.eta - 1.660_995_616_712).abs() < 1e-10, "{a:?}");
        let (n_po, n_pe) = bbo(28.71).pump_indices();
        assert!(a.eta <= n_po && a.eta >= n_pe);
    }

    #[test]
    fn delta_kz_properties() {
        let c = bbo(28.71);
        let d = delta_kz(1.2e5, 0.7e5, 1.3, &c);
        assert_eq!(d, delta_kz(0.7e5, 1.2e5, 1.3, &c));
        assert!((delta_kz(1e5, 1e5, 0.0, &c) - c.axial_mismatch()).abs() < 1e-9);
        assert!((delta_kz(1e5, 2e5, 0.4, &c) - delta_kz(1e5, 2e5, -0.4, &c)).abs() < 1e-9);
    }

    #[test]
    fn delta_kz_vanishes_on_axis_at_collinear_angle() {
        let c = bbo(28.71);
        let theta = collinear_angle(&c).unwrap();
        let col = c.with_theta_p(theta).unwrap();
        assert!(delta_kz(0.0, 0.0, 0.0, &col).abs() < 1e-2);
        assert!((col.anisotropy().eta - col.signal_index()).abs() < 1e-9);
    }

    #[test]
    fn collinear_angle_bbo_405() {
        let theta = collinear_angle(&bbo(28.71)).unwrap().to_degrees();
        assert!((theta - 28.65).abs() <= 0.10, "{theta}");
    }

    #[test]
    fn eta_decreases_with_angle() {
        let (n_o, n_e) = bbo(28.71).pump_indices();
        let etas: Vec<f64> =
            (1..200).map(|k| anisotropy_from_indices(k as f64 * FRAC_PI_2 / 200.0, n_o, n_e).eta).collect();
        assert!(etas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn phase_matching_basic() {
        assert_eq!(phase_matching_from_mismatch(0.0, 1e-2), Complex64::new(1.0, 0.0));
        let l = 1e-2;
        let at_zero = phase_matching_from_mismatch(2.0 * PI / l, l);
        assert!(at_zero.norm() < 1e-12);
        let c = bbo(28.71);
        for k in 0..50 {
            let r = k as f64 * 5e3;
            assert!(phase_matching(r, 0.5 * r, 0.1 * k as f64, &c).norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn phase_matching_continuous_through_zero() {
        let l = 1e-2;
        for &dk in &[1e-3, 1.99e-2, 2.01e-2, 0.1] {
            let a = phase_matching_from_mismatch(dk, l);
            let b = phase_matching_from_mismatch(-dk, l);
            let c = phase_matching_from_mismatch(dk * (1.0 + 1e-9), l);
            assert!((a - c).norm() < 1e-10);
            assert!((a.re - b.re).abs() < 1e-12);
        }
        let lo = phase_matching_from_mismatch(2e-2 * (1.0 - 1e-12), l);
        let hi = phase_matching_from_mismatch(2e-2 * (1.0 + 1e-12), l);
        assert!((lo - hi).norm() < 1e-12);
    }

    #[test]
    fn noncollinear_ring_above_collinear_angle() {
        let c = bbo(28.71);
        assert!(delta_kz(0.0, 0.0, 0.0, &c) > 0.0);
        let ring = c.ring_radius();
        assert!(ring > 0.0);
        let best = (0..4000)
            .map(|k| k as f64 * 100.0)
            .max_by(|&a, &b| {
                phase_matching(a, a, PI, &c).norm().total_cmp(&phase_matching(b, b, PI, &c).norm())
            })
            .unwrap();
        assert!(best > 0.0);
        assert!((best - ring).abs() < 200.0);
        assert_eq!(bbo(28.60).ring_radius(), 0.0);
    }

    #[test]
    fn full_mismatch_agrees_on_axis() {
        let c = bbo(28.71);
        let on_axis = delta_kz_full([0.0, 0.0], [0.0, 0.0], &c);
        assert!((on_axis - c.axial_mismatch()).abs() < 1e-6);
    }
}
