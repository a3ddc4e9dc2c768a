//! Target spectra and figures of merit: R², entanglement of formation and
//! Schmidt number.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schmidt::SchmidtSpectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetShape {
    Gaussian,
    Triangular,
    Rectangular,
}

impl TargetShape {
    pub const ALL: [TargetShape; 3] = [Self::Gaussian, Self::Triangular, Self::Rectangular];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Triangular => "triangular",
            Self::Rectangular => "rectangular",
        }
    }
}

impl fmt::Display for TargetShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            Error::InvalidParameter(format!("unknown target shape '{s}' (expected one of: gaussian, triangular, rectangular)"))
        })
    }
}

/// Normalised target spectrum `S_l^t` over `l ∈ [−D, D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpectrum {
    pub shape: TargetShape,
    /// Standard deviation for gaussian, full base width otherwise.
    pub width: f64,
    window: usize,
    values: Vec<f64>,
}

impl TargetSpectrum {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, l: i64) -> f64 {
        let idx = l + self.window as i64;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    pub fn to_csv(&self) -> String {
        let d = self.window as i64;
        let mut out = String::from("l,S_l\n");
        for (l, v) in (-d..=d).zip(&self.values) {
            out.push_str(&format!("{l},{v:e}\n"));
        }
        out
    }
}

/// Builds a normalised target.
///
/// An even-width rectangle cannot be centred on the integers; it occupies
/// `l ∈ [−w/2, w/2 − 1]`, keeping exactly `w` entries of `1/w`.
pub fn make_target(shape: TargetShape, width: f64, window: usize) -> Result<TargetSpectrum> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidParameter(format!("target width must be positive, got {width}")));
    }
    if window == 0 {
        return Err(Error::InvalidParameter("target window must be at least 1".into()));
    }
    if width > 2.0 * window as f64 {
        return Err(Error::WindowOverflow { width, window });
    }
    let d = window as i64;
    let raw: Vec<f64> = match shape {
        TargetShape::Gaussian => (-d..=d).map(|l| (-((l * l) as f64) / (2.0 * width * width)).exp()).collect(),
        TargetShape::Triangular => {
            let half = width / 2.0;
            (-d..=d).map(|l| (1.0 - l.abs() as f64 / half).max(0.0)).collect()
        }
        TargetShape::Rectangular => {
            if width.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("rectangular width must be an integer, got {width}")));
            }
            let w = width as i64;
            let lo = -(w / 2);
            let hi = lo + w - 1;
            (-d..=d).map(|l| if (lo..=hi).contains(&l) { 1.0 } else { 0.0 }).collect()
        }
    };
    let total: f64 = raw.iter().sum();
    let values = raw.into_iter().map(|v| v / total).collect();
    Ok(TargetSpectrum { shape, width, window, values })
}

/// Coefficient of determination in percent; negative for fits worse than the mean.
pub fn r_squared(target: &TargetSpectrum, observed: &SchmidtSpectrum) -> Result<f64> {
    if target.window() != observed.window() {
        return Err(Error::WindowMismatch { target: target.window(), observed: observed.window() });
    }
    r_squared_values(target.values(), observed.values())
}

/// [`r_squared`] on raw equally long vectors.
pub fn r_squared_values(target: &[f64], observed: &[f64]) -> Result<f64> {
    if target.len() != observed.len() {
        return Err(Error::WindowMismatch { target: target.len() / 2, observed: observed.len() / 2 });
    }
    if target.is_empty() {
        return Err(Error::UndefinedRSquared);
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let total: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    if total == 0.0 || target.iter().all(|&t| t == target[0]) {
        return Err(Error::UndefinedRSquared);
    }
    let residual: f64 = target.iter().zip(observed).map(|(t, o)| (t - o).powi(2)).sum();
    Ok((1.0 - residual / total) * 100.0)
}

/// `−Σ S_l log₂ S_l` in bits.
pub fn entanglement_of_formation(spectrum: &SchmidtSpectrum) -> f64 {
    entropy_bits(spectrum.values())
}

pub fn entropy_bits(weights: &[f64]) -> f64 {
    -weights.iter().filter(|&&s| s > 0.0).map(|&s| s * s.log2()).sum::<f64>()
}

/// `1/Σ S_l²`.
pub fn schmidt_number(spectrum: &SchmidtSpectrum) -> f64 {
    participation_ratio(spectrum.values())
}

pub fn participation_ratio(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|s| s * s).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spectrum(values: Vec<f64>) -> SchmidtSpectrum {
        SchmidtSpectrum::from_weights(values, None).unwrap()
    }

    #[test]
    fn rectangular_target() {
        let t = make_target(TargetShape::Rectangular, 100.0, 150).unwrap();
        let nonzero: Vec<i64> = (-150..=150).filter(|&l| t.get(l) > 0.0).collect();
        assert_eq!(nonzero.len(), 100);
        assert_eq!((nonzero[0], nonzero[99]), (-50, 49));
        assert!(nonzero.iter().all(|&l| (t.get(l) - 0.01).abs() < 1e-15));
        let odd = make_target(TargetShape::Rectangular, 5.0, 4).unwrap();
        assert_eq!(odd.values().iter().filter(|&&v| v > 0.0).count(), 5);
        assert_eq!(odd.get(-2), odd.get(2));
        assert!(make_target(TargetShape::Rectangular, 10.5, 20).is_err());
    }

    #[test]
    fn gaussian_and_triangular_targets() {
        let g = make_target(TargetShape::Gaussian, 20.0, 150).unwrap();
        assert!((g.get(0) / g.get(20) - 0.5f64.exp()).abs() < 1e-12);
        let t = make_target(TargetShape::Triangular, 100.0, 150).unwrap();
        assert_eq!(t.get(50), 0.0);
        assert_eq!(t.get(-50), 0.0);
        assert!((t.get(25) - 0.5 * t.get(0)).abs() < 1e-15);
        assert!((t.get(-25) - 0.5 * t.get(0)).abs() < 1e-15);
    }

    #[test]
    fn window_overflow() {
        assert!(matches!(
            make_target(TargetShape::Rectangular, 302.0, 150),
            Err(Error::WindowOverflow { .. })
        ));
        assert!(make_target(TargetShape::Rectangular, 300.0, 150).is_ok());
    }

    #[test]
    fn shape_parsing_lists_choices() {
        assert_eq!("Gaussian".parse::<TargetShape>().unwrap(), TargetShape::Gaussian);
        let err = "square".parse::<TargetShape>().unwrap_err().to_string();
        assert!(err.contains("gaussian, triangular, rectangular"));
    }

    #[test]
    fn r_squared_examples() {
        let t = make_target(TargetShape::Gaussian, 3.0, 10).unwrap();
        let same = spectrum(t.values().to_vec());
        assert!((r_squared(&t, &same).unwrap() - 100.0).abs() < 1e-12);
        let flat = spectrum(vec![1.0; 21]);
        assert!(r_squared(&t, &flat).unwrap().abs() < 1e-9);
        let r = r_squared_values(&[0.5, 0.3, 0.2], &[0.4, 0.4, 0.2]).unwrap();
        assert!((r - 400.0 / 7.0).abs() < 1e-9, "{r}");
        assert!(matches!(r_squared_values(&[0.2; 3], &[0.2; 3]), Err(Error::UndefinedRSquared)));
        let other = spectrum(vec![1.0; 5]);
        assert!(matches!(r_squared(&t, &other), Err(Error::WindowMismatch { .. })));
    }

    #[test]
    fn r_squared_can_be_negative() {
        let r = r_squared_values(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!(r < 0.0);
    }

    #[test]
    fn entanglement_measures() {
        let single = spectrum(vec![0.0, 1.0, 0.0]);
        assert_eq!(schmidt_number(&single), 1.0);
        assert_eq!(entanglement_of_formation(&single), 0.0);
        let t = make_target(TargetShape::Rectangular, 100.0, 150).unwrap();
        let rect = spectrum(t.values().to_vec());
        assert!((schmidt_number(&rect) - 100.0).abs() < 1e-9);
        assert!((entanglement_of_formation(&rect) - 100f64.log2()).abs() < 1e-12);
        let g = make_target(TargetShape::Gaussian, 20.0, 150).unwrap();
        let k = participation_ratio(g.values());
        assert!((k - 70.898154036).abs() < 1e-6, "{k}");
        assert!((k / (40.0 * std::f64::consts::PI.sqrt()) - 1.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn measure_bounds(raw in prop::collection::vec(0.0f64..1.0, 1..40usize).prop_filter("odd", |v| v.len() % 2 == 1 && v.iter().sum::<f64>() > 1e-6)) {
            let n = raw.len() as f64;
            let s = spectrum(raw);
            let k = schmidt_number(&s);
            let e = entanglement_of_formation(&s);
            prop_assert!(k >= 1.0 - 1e-12 && k <= n + 1e-9);
            prop_assert!(e >= -1e-12 && e <= n.log2() + 1e-9);
            prop_assert_eq!(e > 1e-12, k > 1.0 + 1e-12);
        }

        #[test]
        fn r_squared_permutation_invariant(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..30),
            seed in any::<u64>(),
        ) {
            let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let o: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(t.iter().any(|&x| (x - t[0]).abs() > 1e-6));
            let mut idx: Vec<usize> = (0..t.len()).collect();
            let mut state = seed;
            for i in (1..idx.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (state >> 33) as usize % (i + 1));
            }
            let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
            let op: Vec<f64> = idx.iter().map(|&i| o[i]).collect();
            let a = r_squared_values(&t, &o).unwrap();
            let b = r_squared_values(&tp, &op).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
