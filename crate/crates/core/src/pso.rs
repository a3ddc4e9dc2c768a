//! Global-best particle swarm minimiser.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Bounds shared by every dimension unless `dimension_bounds` is set.
    pub lower: f64,
    pub upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension_bounds: Option<Vec<[f64; 2]>>,
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 40,
            iterations: 150,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            lower: -1.0,
            upper: 1.0,
            dimension_bounds: None,
            seed: 0,
        }
    }
}

impl SwarmConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if dims == 0 {
            return Err(Error::InvalidParameter("swarm needs at least one dimension".into()));
        }
        if self.particles < 2 {
            return Err(Error::InvalidParameter(format!("swarm needs at least 2 particles, got {}", self.particles)));
        }
        for (name, v) in [("inertia", self.inertia), ("cognitive", self.cognitive), ("social", self.social)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("swarm {name} must be finite")));
            }
        }
        if let Some(b) = &self.dimension_bounds {
            if b.len() != dims {
                return Err(Error::InvalidParameter(format!("{} dimension bounds given for {dims} dimensions", b.len())));
            }
        }
        for [lo, hi] in self.bounds(dims) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!("invalid swarm bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn bounds(&self, dims: usize) -> Vec<[f64; 2]> {
        match &self.dimension_bounds {
            Some(b) => b.clone(),
            None => vec![[self.lower, self.upper]; dims],
        }
    }
}

/// Result of a swarm run.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmOutcome {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Global best after initialisation (entry 0) and after every iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Independent stream seed `index` derived from `master` (splitmix64
/// finaliser), kept to 63 bits so it fits a TOML integer.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) >> 1
}

pub fn pso_minimize<F>(objective: F, dims: usize, config: &SwarmConfig) -> Result<SwarmOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pso_minimize_fallible(|x| Ok(objective(x)), dims, config)
}

/// As [`pso_minimize`] for objectives that can fail; the first error in
/// particle order aborts the run.
pub fn pso_minimize_fallible<F>(objective: F, dims: usize, config: &SwarmConfig) -> Result<SwarmOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    config.validate(dims)?;
    let bounds = config.bounds(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.particles;

    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|_| bounds.iter().map(|&[lo, hi]| rng.random_range(lo..hi)).collect())
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            bounds
                .iter()
                .map(|&[lo, hi]| {
                    let span = hi - lo;
                    rng.random_range(-span..span) * 0.5
                })
                .collect()
        })
        .collect();

    let evaluate = |pts: &[Vec<f64>]| -> Result<Vec<f64>> {
        let values: Vec<Result<f64>> = pts.par_iter().map(|p| objective(p)).collect();
        let mut out = Vec::with_capacity(values.len());
        for (p, v) in pts.iter().zip(values) {
            let v = v?;
            if !v.is_finite() {
                return Err(Error::ObjectiveDomain { point: p.clone(), value: v });
            }
            out.push(v);
        }
        Ok(out)
    };

    let values = evaluate(&positions)?;
    let mut evaluations = n;
    let mut personal = positions.clone();
    let mut personal_values = values.clone();
    let (mut best_idx, mut best_value) = argmin(&personal_values);
    let mut best_point = personal[best_idx].clone();
    let mut history = Vec::with_capacity(config.iterations + 1);
    history.push(best_value);

    for _ in 0..config.iterations {
        for ((x, v), pb) in positions.iter_mut().zip(velocities.iter_mut()).zip(&personal) {
            for d in 0..dims {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let [lo, hi] = bounds[d];
                let span = hi - lo;
                let nv = config.inertia * v[d]
                    + config.cognitive * r1 * (pb[d] - x[d])
                    + config.social * r2 * (best_point[d] - x[d]);
                v[d] = nv.clamp(-span, span);
                x[d] = (x[d] + v[d]).clamp(lo, hi);
            }
        }
        let values = evaluate(&positions)?;
        evaluations += n;
        for (i, &val) in values.iter().enumerate() {
            if val < personal_values[i] {
                personal_values[i] = val;
                personal[i].clone_from(&positions[i]);
            }
        }
        let (idx, val) = argmin(&personal_values);
        if val < best_value {
            best_idx = idx;
            best_value = val;
            best_point.clone_from(&personal[best_idx]);
        }
        history.push(best_value);
    }

    Ok(SwarmOutcome { best_point, best_value, history, evaluations })
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
}
