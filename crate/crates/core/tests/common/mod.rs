//! Slow reference evaluations shared by the integration tests.
//!
//! The two azimuths are summed independently on unequal periodic grids
//! (no reduction to `Δφ`, no FFT), with the mismatch and pump momentum built
//! from Cartesian transverse vectors.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use oam_spdc::modemath::{laguerre, lg_radial, RadialGrid};
use oam_spdc::{CrystalConfig, PumpConfig};
use rayon::prelude::*;

pub struct BruteForce {
    /// Unnormalised `S_l` for `l = −l_max..=l_max`.
    pub spectrum: Vec<f64>,
    /// `C^{0,0}_{0,0}` for the requested detection waist.
    pub c0000: Complex64,
}

fn integrand(q_s: [f64; 2], q_i: [f64; 2], pump: &PumpConfig, crystal: &CrystalConfig) -> Complex64 {
    let k = crystal.pump_wavenumber();
    let eta = crystal.anisotropy().eta;
    let n_s = crystal.signal_index();
    let dx = q_s[0] - q_i[0];
    let dy = q_s[1] - q_i[1];
    let dk = k * (n_s - eta) - (dx * dx + dy * dy) / (2.0 * eta * k);
    let h = 0.5 * dk * crystal.thickness();
    let phi = if h == 0.0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, h).exp() * (h.sin() / h) };

    let px = q_s[0] + q_i[0];
    let py = q_s[1] + q_i[1];
    let w = pump.waist();
    let x = 0.5 * w * w * (px * px + py * py);
    let envelope = (w * w / (2.0 * PI)).sqrt() * (-0.5 * x).exp();
    let v: Complex64 = pump
        .coefficients()
        .iter()
        .enumerate()
        .map(|(p, &a)| {
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            a * (sign * envelope * laguerre(p, 0, x).unwrap())
        })
        .sum();
    v * phi
}

pub fn brute_force(
    pump: &PumpConfig,
    crystal: &CrystalConfig,
    radial: &RadialGrid,
    l_max: i64,
    m_s: usize,
    m_i: usize,
    detection_waist: f64,
) -> BruteForce {
    let phis = |m: usize| -> Vec<f64> { (0..m).map(|k| 2.0 * PI * k as f64 / m as f64).collect() };
    let (ps, pi) = (phis(m_s), phis(m_i));
    let orders: Vec<i64> = (-l_max..=l_max).collect();
    let x = radial.nodes();
    let w = radial.weights();
    let nr = x.len();
    let da = (2.0 * PI / m_s as f64) * (2.0 * PI / m_i as f64);

    let table = |angles: &[f64], sign: f64| -> Vec<Vec<Complex64>> {
        angles.iter().map(|&t| orders.iter().map(|&l| Complex64::from_polar(1.0, sign * l as f64 * t)).collect()).collect()
    };
    let (es, ei) = (table(&ps, -1.0), table(&pi, 1.0));
    let pairs: Vec<(usize, usize)> = (0..nr).flat_map(|i| (0..nr).map(move |j| (i, j))).collect();
    let kernels: Vec<Vec<Complex64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut f = vec![Complex64::new(0.0, 0.0); orders.len()];
            for (&a, ea) in ps.iter().zip(&es) {
                let q_s = [x[i] * a.cos(), x[i] * a.sin()];
                let mut inner = vec![Complex64::new(0.0, 0.0); orders.len()];
                for (&b, eb) in pi.iter().zip(&ei) {
                    let q_i = [x[j] * b.cos(), x[j] * b.sin()];
                    let val = integrand(q_s, q_i, pump, crystal);
                    for (acc, e) in inner.iter_mut().zip(eb) {
                        *acc += val * e;
                    }
                }
                for ((acc, inn), e) in f.iter_mut().zip(&inner).zip(ea) {
                    *acc += inn * e;
                }
            }
            f.iter().map(|v| v * da).collect()
        })
        .collect();

    let mut spectrum = vec![0.0; orders.len()];
    let mut c0000 = Complex64::new(0.0, 0.0);
    let zero = orders.iter().position(|&l| l == 0).unwrap();
    for (&(i, j), f) in pairs.iter().zip(&kernels) {
        let weight = w[i] * w[j] * x[i] * x[j];
        for (s, v) in spectrum.iter_mut().zip(f) {
            *s += weight * v.norm_sqr() / (4.0 * PI * PI);
        }
        let rs = lg_radial(0, 0, detection_waist, x[i]).unwrap().conj();
        let ri = lg_radial(0, 0, detection_waist, x[j]).unwrap().conj();
        c0000 += f[zero] * rs * ri * weight;
    }
    BruteForce { spectrum, c0000 }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
