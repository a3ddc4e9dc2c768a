//! Run configuration files. Every physical quantity carries its unit in the
//! key name (`_nm`, `_um`, `_mm`, `_deg`); conversion to SI happens here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crystal::{CrystalConfig, Dispersion};
use crate::error::Error;
use crate::metrics::{make_target, TargetShape, TargetSpectrum};
use crate::optimize::{RunOptions, Setup, StepSchedule, SweepOptions, SweepParameter};
use crate::pso::SwarmConfig;
use crate::pump::{pad_coefficients, pairs_to_complex, CoefficientTable, PumpConfig};
use crate::schmidt::{GridSpec, GridTier, DEFAULT_WINDOW};

/// Name of the bundled BBO data set in `[crystal] dispersion`.
pub const BUILTIN_DISPERSION: &str = "bbo-eimerl1987";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{key}: {source}")]
    Invalid { key: String, source: Error },
}

fn invalid(key: &str) -> impl FnOnce(Error) -> ConfigError + '_ {
    move |source| ConfigError::Invalid { key: key.to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    pub thickness_mm: f64,
    pub theta_p_deg: f64,
    #[serde(default = "default_pump_nm")]
    pub pump_wavelength_nm: f64,
    /// `bbo-eimerl1987` or a path to a dispersion file.
    #[serde(default = "default_dispersion")]
    pub dispersion: String,
}

fn default_pump_nm() -> f64 {
    405.0
}

fn default_dispersion() -> String {
    BUILTIN_DISPERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub waist_um: f64,
    /// Number of LG pump modes `N`; defaults to the coefficient count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// `[re, im]` pairs; a Gaussian pump when neither this nor a file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients_file: Option<String>,
    /// Row of the coefficient file, selected by shape and width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub shape: String,
    pub width: f64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsSection {
    /// Tier of single evaluations (`spectrum`, `postselect`).
    pub tier: GridTier,
    /// Tier inside the swarm loop.
    pub search_tier: GridTier,
    /// Tier of the reported generation accuracy.
    pub report_tier: GridTier,
    pub window: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine: Option<GridSpec>,
}

impl Default for GridsSection {
    fn default() -> Self {
        Self { tier: GridTier::Fine, search_tier: GridTier::Coarse, report_tier: GridTier::Fine, window: DEFAULT_WINDOW, coarse: None, fine: None }
    }
}

impl GridsSection {
    pub fn spec(&self, tier: GridTier) -> GridSpec {
        let custom = match tier {
            GridTier::Coarse => &self.coarse,
            GridTier::Fine => &self.fine,
        };
        custom.clone().unwrap_or_else(|| GridSpec::tier(tier))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmSection {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
    /// Independent swarm runs per evaluation point; the best is kept.
    pub restarts: usize,
}

impl Default for SwarmSection {
    fn default() -> Self {
        let s = SwarmConfig::default();
        Self {
            particles: s.particles,
            iterations: s.iterations,
            inertia: s.inertia,
            cognitive: s.cognitive,
            social: s.social,
            lower: s.lower,
            upper: s.upper,
            seed: s.seed,
            restarts: 1,
        }
    }
}

impl SwarmSection {
    pub fn swarm(&self) -> SwarmConfig {
        SwarmConfig {
            particles: self.particles,
            iterations: self.iterations,
            inertia: self.inertia,
            cognitive: self.cognitive,
            social: self.social,
            lower: self.lower,
            upper: self.upper,
            dimension_bounds: None,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub enabled: bool,
    pub initial_step: f64,
    pub minimum_step: f64,
}

impl Default for RefineSection {
    fn default() -> Self {
        let s = StepSchedule::default();
        Self { enabled: true, initial_step: s.initial, minimum_step: s.minimum }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    /// Detection waist `w_s = w_i` in units of the pump waist.
    pub waist_ratio: f64,
    pub p_max: usize,
    /// Ratios analysed by `postselect`.
    pub ratios: Vec<f64>,
    /// Radial cutoff of the convergence table.
    pub p_cutoff: usize,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self { waist_ratio: 0.2, p_max: 10, ratios: vec![0.5, 1.0, 2.0], p_cutoff: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta_candidates_deg: Vec<f64>,
}

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub crystal: CrystalSection,
    pub pump: PumpSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSection>,
    #[serde(default)]
    pub swarm: SwarmSection,
    #[serde(default)]
    pub grids: GridsSection,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Parses a configuration file or a run manifest (its `[config]` table).
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let parse_err = |e: toml::de::Error| ConfigError::Parse { path: origin.to_string(), message: e.to_string() };
        let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        if table.contains_key("command") {
            if let Some(toml::Value::Table(inner)) = table.get("config") {
                return inner.clone().try_into().map_err(parse_err);
            }
        }
        toml::from_str(text).map_err(parse_err)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Snapshot with coefficient files inlined, so it is self-contained.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        if self.pump.coefficients_file.is_some() {
            out.pump.coefficients = Some(self.raw_coefficients()?);
            out.pump.coefficients_file = None;
            out.pump.set_shape = None;
            out.pump.set_width = None;
        }
        let d = &self.crystal.dispersion;
        if d != BUILTIN_DISPERSION {
            out.crystal.dispersion = self.resolve_path(d).display().to_string();
        }
        Ok(out)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is serialisable")
    }

    fn resolve_path(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn dispersion(&self) -> Result<Dispersion, ConfigError> {
        let d = &self.crystal.dispersion;
        if d == BUILTIN_DISPERSION {
            Ok(Dispersion::bbo())
        } else {
            Dispersion::from_file(&self.resolve_path(d)).map_err(invalid("crystal.dispersion"))
        }
    }

    pub fn crystal(&self) -> Result<CrystalConfig, ConfigError> {
        let c = &self.crystal;
        CrystalConfig::new(
            c.thickness_mm * 1e-3,
            c.theta_p_deg.to_radians(),
            c.pump_wavelength_nm * 1e-9,
            self.dispersion()?,
        )
        .map_err(invalid("crystal"))
    }

    fn raw_coefficients(&self) -> Result<Vec<[f64; 2]>, ConfigError> {
        let p = &self.pump;
        match (&p.coefficients, &p.coefficients_file) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid {
                key: "pump".into(),
                source: Error::InvalidParameter("give either coefficients or coefficients_file, not both".into()),
            }),
            (Some(c), None) => Ok(c.clone()),
            (None, Some(file)) => {
                let table = CoefficientTable::from_file(&self.resolve_path(file)).map_err(invalid("pump.coefficients_file"))?;
                let (shape, width) = match (&p.set_shape, p.set_width) {
                    (Some(s), Some(w)) => (s.as_str(), w),
                    _ if table.sets.len() == 1 => return Ok(table.sets[0].coefficients.clone()),
                    _ => {
                        return Err(ConfigError::Invalid {
                            key: "pump.set_shape".into(),
                            source: Error::InvalidParameter("set_shape and set_width select a row of the coefficient file".into()),
                        })
                    }
                };
                table.find(shape, width).map(|s| s.coefficients.clone()).ok_or_else(|| ConfigError::Invalid {
                    key: "pump.set_shape".into(),
                    source: Error::InvalidParameter(format!("no row '{shape}' width {width} in {file}")),
                })
            }
            (None, None) => Ok(vec![[1.0, 0.0]]),
        }
    }

    pub fn mode_count(&self) -> Result<usize, ConfigError> {
        let given = self.raw_coefficients()?.len();
        let n = self.pump.modes.unwrap_or(given.max(1));
        if n == 0 {
            return Err(ConfigError::Invalid {
                key: "pump.modes".into(),
                source: Error::InvalidParameter("at least one pump mode is required".into()),
            });
        }
        Ok(n)
    }

    pub fn pump(&self) -> Result<PumpConfig, ConfigError> {
        let raw = pairs_to_complex(&self.raw_coefficients()?);
        let n = self.mode_count()?;
        let padded = pad_coefficients(&raw, n).map_err(invalid("pump.coefficients"))?;
        PumpConfig::new(self.crystal.pump_wavelength_nm * 1e-9, self.pump.waist_um * 1e-6, &padded)
            .map_err(invalid("pump.coefficients"))
    }

    pub fn window(&self) -> usize {
        self.target.as_ref().map_or(self.grids.window, |t| t.window)
    }

    pub fn target(&self) -> Result<Option<TargetSpectrum>, ConfigError> {
        let Some(t) = &self.target else { return Ok(None) };
        let shape: TargetShape = t.shape.parse().map_err(invalid("target.shape"))?;
        make_target(shape, t.width, t.window).map(Some).map_err(invalid("target.width"))
    }

    pub fn require_target(&self) -> Result<TargetSpectrum, ConfigError> {
        self.target()?.ok_or_else(|| ConfigError::Invalid {
            key: "target".into(),
            source: Error::InvalidParameter("this command needs a [target] section".into()),
        })
    }

    pub fn setup(&self) -> Result<Setup, ConfigError> {
        Ok(Setup {
            crystal: self.crystal()?,
            pump: self.pump()?,
            n_modes: self.mode_count()?,
            window: self.window(),
            search_grid: self.grids.spec(self.grids.search_tier),
            report_grid: self.grids.spec(self.grids.report_tier),
        })
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            restarts: self.swarm.restarts.max(1),
            refine: self.refine.enabled.then_some(StepSchedule {
                initial: self.refine.initial_step,
                minimum: self.refine.minimum_step,
            }),
        }
    }

    pub fn sweep_parameter(&self) -> Result<(SweepParameter, Vec<f64>, SweepOptions), ConfigError> {
        let s = self.sweep.as_ref().ok_or_else(|| ConfigError::Invalid {
            key: "sweep".into(),
            source: Error::InvalidParameter("this command needs a [sweep] section or --parameter/--values".into()),
        })?;
        let parameter = s.parameter.parse().map_err(invalid("sweep.parameter"))?;
        let options = SweepOptions { run: self.run_options(), theta_candidates_deg: s.theta_candidates_deg.clone() };
        Ok((parameter, s.values.clone(), options))
    }

    pub fn detection_waist(&self) -> f64 {
        self.detection.waist_ratio * self.pump.waist_um * 1e-6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[crystal]
thickness_mm = 10.0
theta_p_deg = 28.71

[pump]
waist_um = 320.0
modes = 3
coefficients = [[1.0, 0.0], [0.0, 0.5]]

[target]
shape = "gaussian"
width = 20.0

[swarm]
particles = 12
seed = 9
restarts = 3
"#;

    #[test]
    fn parses_and_converts_units() {
        let cfg = RunConfig::from_toml_str(BASIC, "basic").unwrap();
        let crystal = cfg.crystal().unwrap();
        assert!((crystal.thickness() / 10e-3 - 1.0).abs() < 1e-12);
        assert!((crystal.theta_p().to_degrees() / 28.71 - 1.0).abs() < 1e-12);
        assert!((crystal.pump_wavelength() / 405e-9 - 1.0).abs() < 1e-12);
        let pump = cfg.pump().unwrap();
        assert_eq!(pump.mode_count(), 3);
        assert!((pump.waist() / 320e-6 - 1.0).abs() < 1e-12);
        assert_eq!(cfg.swarm.swarm().particles, 12);
        assert_eq!(cfg.swarm.swarm().iterations, 150);
        assert_eq!(cfg.run_options().restarts, 3);
        assert_eq!(cfg.target().unwrap().unwrap().window(), 150);
    }

    #[test]
    fn round_trip_is_lossless() {
        let cfg = RunConfig::from_toml_str(BASIC, "basic").unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string(), "again").unwrap();
        assert_eq!(cfg, again);
        let (a, b) = (cfg.crystal().unwrap(), again.crystal().unwrap());
        assert!(((a.thickness() * 1e3) / cfg.crystal.thickness_mm - 1.0).abs() < 1e-12);
        assert!((a.theta_p().to_degrees() / cfg.crystal.theta_p_deg - 1.0).abs() < 1e-12);
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_reported_with_location() {
        let bad = BASIC.replace("waist_um", "waist_mm");
        let err = RunConfig::from_toml_str(&bad, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("bad.toml") && err.contains("waist_mm"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn empty_coefficients_are_degenerate() {
        let cfg = RunConfig::from_toml_str(&BASIC.replace("coefficients = [[1.0, 0.0], [0.0, 0.5]]", "coefficients = []"), "x").unwrap();
        match cfg.pump() {
            Err(ConfigError::Invalid { source: Error::DegeneratePump, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_shape_lists_choices() {
        let cfg = RunConfig::from_toml_str(&BASIC.replace("\"gaussian\"", "\"square\""), "x").unwrap();
        let e = cfg.target().unwrap_err().to_string();
        assert!(e.contains("gaussian, triangular, rectangular"), "{e}");
    }

    #[test]
    fn too_many_coefficients_rejected() {
        let cfg = RunConfig::from_toml_str(&BASIC.replace("modes = 3", "modes = 1"), "x").unwrap();
        assert!(cfg.pump().is_err());
    }

    #[test]
    fn coefficient_file_rows_are_inlined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("table.toml"),
            "[[set]]\nshape = \"gaussian\"\nwidth = 20.0\ncoefficients = [[0.5, 0.0], [0.1, -0.2]]\n",
        )
        .unwrap();
        let text = BASIC.replace("coefficients = [[1.0, 0.0], [0.0, 0.5]]", "coefficients_file = \"table.toml\"\nset_shape = \"gaussian\"\nset_width = 20.0");
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        let resolved = cfg.resolved().unwrap();
        assert_eq!(resolved.pump.coefficients, Some(vec![[0.5, 0.0], [0.1, -0.2]]));
        assert!(resolved.pump.coefficients_file.is_none());
        assert_eq!(cfg.pump().unwrap(), resolved.pump().unwrap());
    }
}
