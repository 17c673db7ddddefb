//! Additive measurement error `X* = X + e_X`, `Y* = Y + e_Y` and the boundary
//! policy that keeps `1 / (1 - X*)` finite.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LatentCohort;
use crate::rng::{self, streams};

pub const DEFAULT_CLAMP_EPSILON: f64 = 1e-6;
const MAX_RESAMPLE_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClampPolicy {
    /// `X*` clamped to `[0, 1 - epsilon]`, `Y*` clamped to `[0, 1]`.
    Clamp { epsilon: f64 },
    /// Errors are redrawn until `X*` lands in `[0, 1 - epsilon]` and `Y*` in `[0, 1]`.
    RejectResample { epsilon: f64 },
    /// Raw noisy scores; an observed pretest at or above 1 is an error.
    None,
}

impl Default for ClampPolicy {
    fn default() -> Self {
        ClampPolicy::Clamp {
            epsilon: DEFAULT_CLAMP_EPSILON,
        }
    }
}

impl ClampPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ClampPolicy::Clamp { epsilon } | ClampPolicy::RejectResample { epsilon } => {
                if epsilon > 0.0 && epsilon <= 0.01 {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "clamp epsilon {epsilon} outside (0, 0.01]"
                    )))
                }
            }
            ClampPolicy::None => Ok(()),
        }
    }

    /// Upper bound allowed for an observed pretest, if any.
    pub fn pretest_ceiling(&self) -> Option<f64> {
        match *self {
            ClampPolicy::Clamp { epsilon } | ClampPolicy::RejectResample { epsilon } => {
                Some(1.0 - epsilon)
            }
            ClampPolicy::None => None,
        }
    }
}

impl std::fmt::Display for ClampPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClampPolicy::Clamp { epsilon } => write!(f, "clamp:{epsilon:e}"),
            ClampPolicy::RejectResample { epsilon } => write!(f, "reject-resample:{epsilon:e}"),
            ClampPolicy::None => f.write_str("none"),
        }
    }
}

impl std::str::FromStr for ClampPolicy {
    type Err = Error;

    /// Accepts `clamp`, `clamp:<eps>`, `reject-resample`, `reject-resample:<eps>`, `none`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, eps) = match s.split_once(':') {
            Some((k, e)) => {
                let eps = e
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad clamp epsilon `{e}`")))?;
                (k.trim(), Some(eps))
            }
            None => (s.trim(), None),
        };
        let epsilon = eps.unwrap_or(DEFAULT_CLAMP_EPSILON);
        let policy = match kind {
            "clamp" => ClampPolicy::Clamp { epsilon },
            "reject-resample" | "reject" => ClampPolicy::RejectResample { epsilon },
            "none" if eps.is_none() => ClampPolicy::None,
            _ => {
                return Err(Error::Config(format!(
                "unknown clamp policy `{s}` (expected clamp[:eps] | reject-resample[:eps] | none)"
            )))
            }
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub reliability_x: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub clamp_policy: ClampPolicy,
}

impl NoiseSpec {
    /// Error SDs for pretest reliability `reliability` given the true pretest
    /// variance; the posttest error SD defaults to the pretest one.
    pub fn from_reliability(
        var_x: f64,
        reliability: f64,
        clamp_policy: ClampPolicy,
    ) -> Result<Self> {
        let sigma = sigma_from_reliability(var_x, reliability)?;
        clamp_policy.validate()?;
        Ok(NoiseSpec {
            reliability_x: reliability,
            sigma_x: sigma,
            sigma_y: sigma,
            clamp_policy,
        })
    }

    pub fn with_sigma_y(mut self, sigma_y: f64) -> Result<Self> {
        if !(sigma_y >= 0.0 && sigma_y.is_finite()) {
            return Err(Error::domain(format!(
                "sigma_y must be >= 0, got {sigma_y}"
            )));
        }
        self.sigma_y = sigma_y;
        Ok(self)
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_x == 0.0 && self.sigma_y == 0.0
    }
}

/// Error SD solving `reliability = var_x / (var_x + sigma^2)`.
pub fn sigma_from_reliability(var_x: f64, reliability: f64) -> Result<f64> {
    if !(var_x > 0.0 && var_x.is_finite()) {
        return Err(Error::domain(format!(
            "true-score variance must be > 0, got {var_x}"
        )));
    }
    if !(reliability > 0.0 && reliability <= 1.0) {
        return Err(Error::domain(format!(
            "reliability {reliability} outside (0, 1]"
        )));
    }
    Ok((var_x * (1.0 - reliability) / reliability).sqrt())
}

/// `(y* - x*) / (1 - x*)`; unlike the latent rate this may leave `[0, 1]`.
pub fn noisy_ngain(x_star: f64, y_star: f64) -> Result<f64> {
    if !(x_star < 1.0) {
        return Err(Error::Singular { indices: vec![0] });
    }
    Ok((y_star - x_star) / (1.0 - x_star))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRef {
    pub seed: u64,
    pub spec_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedCohort {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub f_star: Vec<f64>,
    pub noise: NoiseSpec,
    pub parent: ParentRef,
    /// Learners whose scores were clamped or whose errors were redrawn.
    pub adjusted: usize,
}

impl ObservedCohort {
    pub fn len(&self) -> usize {
        self.x_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_star.is_empty()
    }
}

fn resample(
    rng: &mut impl Rng,
    center: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    index: usize,
) -> Result<(f64, bool)> {
    for attempt in 0..MAX_RESAMPLE_ATTEMPTS {
        let z: f64 = rng.sample(StandardNormal);
        let v = center + sigma * z;
        if (lo..=hi).contains(&v) {
            return Ok((v, attempt > 0));
        }
    }
    Err(Error::Refused(format!(
        "learner {index}: no admissible error draw after {MAX_RESAMPLE_ATTEMPTS} attempts"
    )))
}

/// Adds independent Gaussian errors to a latent cohort and applies the clamp
/// policy. Pretest and posttest errors use their own streams of `seed`.
pub fn observe(latent: &LatentCohort, noise: &NoiseSpec, seed: u64) -> Result<ObservedCohort> {
    noise.clamp_policy.validate()?;
    if !(noise.sigma_x >= 0.0 && noise.sigma_y >= 0.0) {
        return Err(Error::domain("error SDs must be nonnegative"));
    }
    let n = latent.len();
    let mut ex_rng = rng::stream(seed, streams::PRETEST_ERROR);
    let mut ey_rng = rng::stream(seed, streams::POSTTEST_ERROR);
    let mut x_star = Vec::with_capacity(n);
    let mut y_star = Vec::with_capacity(n);
    let mut adjusted = 0;
    let mut singular = Vec::new();

    for i in 0..n {
        let (x, y) = (latent.x[i], latent.y[i]);
        let (xs, ys, touched) = match noise.clamp_policy {
            ClampPolicy::Clamp { epsilon } => {
                let zx: f64 = ex_rng.sample(StandardNormal);
                let zy: f64 = ey_rng.sample(StandardNormal);
                let raw_x = x + noise.sigma_x * zx;
                let raw_y = y + noise.sigma_y * zy;
                let xs = raw_x.clamp(0.0, 1.0 - epsilon);
                let ys = raw_y.clamp(0.0, 1.0);
                (xs, ys, xs != raw_x || ys != raw_y)
            }
            ClampPolicy::RejectResample { epsilon } => {
                let (xs, tx) = resample(&mut ex_rng, x, noise.sigma_x, 0.0, 1.0 - epsilon, i)?;
                let (ys, ty) = resample(&mut ey_rng, y, noise.sigma_y, 0.0, 1.0, i)?;
                (xs, ys, tx || ty)
            }
            ClampPolicy::None => {
                let zx: f64 = ex_rng.sample(StandardNormal);
                let zy: f64 = ey_rng.sample(StandardNormal);
                let xs = x + noise.sigma_x * zx;
                if xs >= 1.0 {
                    singular.push(i);
                }
                (xs, y + noise.sigma_y * zy, false)
            }
        };
        if touched {
            adjusted += 1;
        }
        x_star.push(xs);
        y_star.push(ys);
    }
    if !singular.is_empty() {
        return Err(Error::Singular { indices: singular });
    }

    let f_star = if noise.is_noiseless() && adjusted == 0 {
        latent.f.clone()
    } else {
        x_star
            .iter()
            .zip(&y_star)
            .map(|(&xs, &ys)| (ys - xs) / (1.0 - xs))
            .collect()
    };

    Ok(ObservedCohort {
        x_star,
        y_star,
        f_star,
        noise: *noise,
        parent: ParentRef {
            seed: latent.seed_used,
            spec_digest: latent.spec_digest.clone(),
        },
        adjusted,
    })
}
