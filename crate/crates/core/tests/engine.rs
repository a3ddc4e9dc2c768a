use num_complex::Complex64;
use oam_spdc::metrics::schmidt_number;
use oam_spdc::schmidt::schmidt_spectrum;
use oam_spdc::{CrystalConfig, GridSpec, PumpConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crystal() -> CrystalConfig {
    CrystalConfig::bbo(10e-3, 28.71f64.to_radians()).unwrap()
}

#[test]
fn gaussian_pump_spectrum_peaks_at_zero_and_falls_off() {
    let pump = PumpConfig::gaussian(405e-9, 320e-6).unwrap();
    let s = schmidt_spectrum(&pump, &crystal(), 150, &GridSpec::fine()).unwrap();
    for l in 0..20 {
        assert!(s.get(l + 1) <= s.get(l), "l={l}: {} > {}", s.get(l + 1), s.get(l));
    }
    let k = schmidt_number(&s);
    assert!((60.0..80.0).contains(&k), "{k}");
}

#[test]
fn fine_grid_is_converged_under_radial_doubling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coeffs: Vec<Complex64> =
        (0..10).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let pump = PumpConfig::new(405e-9, 320e-6, &coeffs).unwrap();
    let c = crystal();
    let fine = GridSpec::fine();
    let doubled = GridSpec { radial_nodes: 2 * fine.radial_nodes, ..fine.clone() };
    let a = schmidt_spectrum(&pump, &c, 150, &fine).unwrap();
    let b = schmidt_spectrum(&pump, &c, 150, &doubled).unwrap();
    let worst = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");
}
