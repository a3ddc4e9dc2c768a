//! Spatial-mode engineering of SPDC photon pairs: OAM Schmidt spectra of
//! a shaped pump, target-spectrum fitting and pump coefficient optimisation.

pub mod config;
pub mod crystal;
pub mod error;
pub mod metrics;
pub mod modemath;
pub mod optimize;
pub mod pso;
pub mod pump;
pub mod schmidt;

pub use crystal::{AnisotropyParams, CrystalConfig, Dispersion};
pub use error::{Error, Result};
pub use metrics::{make_target, TargetShape, TargetSpectrum};
pub use optimize::{OptimizationResult, Setup};
pub use pso::SwarmConfig;
pub use pump::PumpConfig;
pub use schmidt::{GridSpec, GridTier, SchmidtSpectrum, SpectrumModel};
