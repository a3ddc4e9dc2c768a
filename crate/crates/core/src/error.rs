use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical and physical layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Laguerre order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("angular grid of {samples} samples cannot resolve |l| <= {l_max} (need at least {required})")]
    Aliasing { samples: usize, l_max: usize, required: usize },

    #[error("wavelength {wavelength_nm} nm is outside the dispersion validity range [{min_nm}, {max_nm}] nm")]
    DispersionRange { wavelength_nm: f64, min_nm: f64, max_nm: f64 },

    #[error("no phase-matching angle in (0, 90) deg: {0}")]
    Unphasematchable(String),

    #[error("pump coefficients are all zero")]
    DegeneratePump,

    #[error("coefficient list has {got} entries but only {max} modes were requested")]
    TooManyCoefficients { got: usize, max: usize },

    #[error("spectrum integrand vanished over the whole grid")]
    DegenerateSpectrum,

    #[error("spectrum window mismatch: target D = {target}, observed D = {observed}")]
    WindowMismatch { target: usize, observed: usize },

    #[error("R^2 is undefined for a constant target")]
    UndefinedRSquared,

    #[error("target width {width} does not fit in a window of half-width {window}")]
    WindowOverflow { width: f64, window: usize },

    #[error("objective returned non-finite value {value} at {point:?}")]
    ObjectiveDomain { point: Vec<f64>, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
