//! Latent variables of the learning-rate model and the error-free generative
//! process `Y = X + (1 - X) F`, with `X` (pretest) independent of `F`
//! (learning rate).

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::ClampPolicy;
use crate::rng::{self, streams};

/// How measurement errors are drawn across the reliability grid of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDraws {
    /// One standard-normal vector per test and replication, rescaled to each
    /// reliability's error SD.
    #[default]
    Shared,
    /// Independent error vectors for every reliability level.
    Fresh,
}

impl std::str::FromStr for NoiseDraws {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(NoiseDraws::Shared),
            "fresh" => Ok(NoiseDraws::Fresh),
            other => Err(Error::Config(format!(
                "unknown noise draw mode `{other}` (expected shared|fresh)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub alpha_x: f64,
    pub beta_x: f64,
    pub alpha_f: f64,
    pub beta_f: f64,
    /// Cohort size.
    pub n: usize,
    /// Number of Monte Carlo replications.
    pub replications: usize,
    pub reliability_grid: Vec<f64>,
    pub base_seed: u64,
    pub clamp_policy: ClampPolicy,
    #[serde(default)]
    pub noise_draws: NoiseDraws,
}

pub const DEFAULT_GRID_LO: f64 = 0.7;
pub const DEFAULT_GRID_HI: f64 = 1.0;
pub const DEFAULT_GRID_STEP: f64 = 0.025;

/// Evenly spaced grid from `lo` to `hi` inclusive. `(hi - lo) / step` must be
/// (close to) an integer.
pub fn reliability_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(lo > 0.0) || !(hi <= 1.0) || lo > hi {
        return Err(Error::InvalidSpec(format!(
            "grid [{lo}, {hi}] with step {step} is not a valid reliability grid"
        )));
    }
    let span = (hi - lo) / step;
    let count = span.round();
    if (span - count).abs() > 1e-6 {
        return Err(Error::InvalidSpec(format!(
            "step {step} does not divide [{lo}, {hi}] evenly"
        )));
    }
    let count = count as usize;
    if count == 0 {
        return Ok(vec![lo]);
    }
    Ok((0..=count)
        .map(|i| {
            if i == count {
                hi
            } else {
                lo + (hi - lo) * i as f64 / count as f64
            }
        })
        .collect())
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let shapes = [
            ("alpha_x", self.alpha_x),
            ("beta_x", self.beta_x),
            ("alpha_f", self.alpha_f),
            ("beta_f", self.beta_f),
        ];
        for (label, v) in shapes {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{label} must be > 0, got {v}")));
            }
        }
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidSpec("replications must be >= 1".into()));
        }
        if self.reliability_grid.is_empty() {
            return Err(Error::InvalidSpec("reliability grid is empty".into()));
        }
        for &r in &self.reliability_grid {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "reliability {r} outside (0, 1]"
                )));
            }
        }
        if self.reliability_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(
                "reliability grid must be strictly ascending".into(),
            ));
        }
        self.clamp_policy.validate()
    }

    pub fn mean_x(&self) -> f64 {
        self.alpha_x / (self.alpha_x + self.beta_x)
    }

    pub fn mean_f(&self) -> f64 {
        self.alpha_f / (self.alpha_f + self.beta_f)
    }

    pub fn var_x(&self) -> f64 {
        beta_variance(self.alpha_x, self.beta_x)
    }

    /// Short content hash identifying the scenario in exported artifacts.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        let hash = Sha256::digest(&canonical);
        hex::encode(&hash[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCohort {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub y: Vec<f64>,
    pub seed_used: u64,
    pub spec_digest: String,
}

impl LatentCohort {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu_x: f64,
    pub var_x: f64,
    pub mu_f: f64,
    pub var_f: f64,
    pub mu_y: f64,
    pub var_y: f64,
    pub cov_xy: f64,
}

impl Moments {
    /// Completes the moment set from the pretest and learning-rate marginals,
    /// using independence of `X` and `F`.
    pub fn from_components(mu_x: f64, var_x: f64, mu_f: f64, var_f: f64) -> Self {
        let one_minus_f = 1.0 - mu_f;
        let one_minus_x = 1.0 - mu_x;
        Moments {
            mu_x,
            var_x,
            mu_f,
            var_f,
            mu_y: mu_x + one_minus_x * mu_f,
            var_y: var_x * one_minus_f * one_minus_f
                + var_f * one_minus_x * one_minus_x
                + var_x * var_f,
            cov_xy: one_minus_f * var_x,
        }
    }
}

pub(crate) fn beta_variance(a: f64, b: f64) -> f64 {
    let s = a + b;
    a * b / (s * s * (s + 1.0))
}

/// Normalized gain of one learner on a test with maximum score `max_score`.
pub fn ngain(pretest: f64, posttest: f64, max_score: f64) -> Result<f64> {
    if !(max_score > 0.0) {
        return Err(Error::domain(format!(
            "max score must be positive, got {max_score}"
        )));
    }
    for (label, v) in [("pretest", pretest), ("posttest", posttest)] {
        if !(0.0..=max_score).contains(&v) {
            return Err(Error::domain(format!(
                "{label} {v} outside [0, {max_score}]"
            )));
        }
    }
    if pretest == max_score {
        return Err(Error::Singular { indices: vec![0] });
    }
    Ok((posttest - pretest) / (max_score - pretest))
}

pub fn posttest_from(x: f64, f: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::domain(format!("pretest {x} outside [0, 1)")));
    }
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::domain(format!("learning rate {f} outside [0, 1]")));
    }
    Ok(posttest_unchecked(x, f))
}

#[inline]
pub(crate) fn posttest_unchecked(x: f64, f: f64) -> f64 {
    x + (1.0 - x) * f
}

fn draw_beta(rng: &mut impl Rng, dist: &Beta<f64>, upper_exclusive: bool) -> f64 {
    loop {
        let v = dist.sample(rng);
        if !upper_exclusive || v < 1.0 {
            return v;
        }
    }
}

/// Draws `spec.n` learners. `x` and `f` come from separate streams of `seed`.
pub fn sample_latent_cohort(spec: &ScenarioSpec, seed: u64) -> Result<LatentCohort> {
    spec.validate()?;
    sample_latent(spec, seed, spec.n)
}

pub(crate) fn sample_latent(spec: &ScenarioSpec, seed: u64, n: usize) -> Result<LatentCohort> {
    let x_dist = Beta::new(spec.alpha_x, spec.beta_x)
        .map_err(|e| Error::InvalidSpec(format!("pretest Beta: {e}")))?;
    let f_dist = Beta::new(spec.alpha_f, spec.beta_f)
        .map_err(|e| Error::InvalidSpec(format!("learning-rate Beta: {e}")))?;
    let mut x_rng = rng::stream(seed, streams::PRETEST);
    let mut f_rng = rng::stream(seed, streams::LEARNING_RATE);

    let x: Vec<f64> = (0..n)
        .map(|_| draw_beta(&mut x_rng, &x_dist, true))
        .collect();
    let f: Vec<f64> = (0..n)
        .map(|_| draw_beta(&mut f_rng, &f_dist, false))
        .collect();
    let y = x
        .iter()
        .zip(&f)
        .map(|(&x, &f)| posttest_unchecked(x, f))
        .collect();
    Ok(LatentCohort {
        x,
        f,
        y,
        seed_used: seed,
        spec_digest: spec.digest(),
    })
}

pub fn theoretical_moments(spec: &ScenarioSpec) -> Result<Moments> {
    spec.validate()?;
    Ok(Moments::from_components(
        spec.mean_x(),
        spec.var_x(),
        spec.mean_f(),
        beta_variance(spec.alpha_f, spec.beta_f),
    ))
}
