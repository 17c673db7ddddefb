//! Distributions entering the closed-form expectations: score laws for the
//! latent pretest and learning rate, error laws for the additive noise, and
//! the observation bounds implied by a clamp policy.

use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc;

use super::quadrature::integrate;
use crate::error::{Error, Result};
use crate::model::beta_variance;
use crate::noise::ClampPolicy;

/// Gaussian tails beyond this many SDs are treated as empty.
const TAIL_SDS: f64 = 14.0;
/// Beta support is truncated to mean +/- this many SDs (clipped to [0, 1]).
const BETA_SPAN_SDS: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreLaw {
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// Degenerate law: every learner has the same value.
    Point(f64),
    /// Finite support `(value, probability)`.
    Discrete(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErrorLaw {
    Gaussian { sd: f64 },
    Discrete(Vec<(f64, f64)>),
}

/// What happens to `center + error` once observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounds {
    Clamp { lo: f64, hi: f64 },
    Truncate { lo: f64, hi: f64 },
    Free,
}

impl Bounds {
    pub fn pretest(policy: ClampPolicy) -> Self {
        match policy {
            ClampPolicy::Clamp { epsilon } => Bounds::Clamp {
                lo: 0.0,
                hi: 1.0 - epsilon,
            },
            ClampPolicy::RejectResample { epsilon } => Bounds::Truncate {
                lo: 0.0,
                hi: 1.0 - epsilon,
            },
            ClampPolicy::None => Bounds::Free,
        }
    }

    pub fn posttest(policy: ClampPolicy) -> Self {
        match policy {
            ClampPolicy::Clamp { .. } => Bounds::Clamp { lo: 0.0, hi: 1.0 },
            ClampPolicy::RejectResample { .. } => Bounds::Truncate { lo: 0.0, hi: 1.0 },
            ClampPolicy::None => Bounds::Free,
        }
    }
}

fn check_discrete(points: &[(f64, f64)], what: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::domain(format!("{what}: empty support")));
    }
    if points
        .iter()
        .any(|&(v, p)| !v.is_finite() || p.is_nan() || p < 0.0)
    {
        return Err(Error::domain(format!("{what}: invalid support point")));
    }
    let total: f64 = points.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "{what}: probabilities sum to {total}"
        )));
    }
    Ok(())
}

impl ScoreLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScoreLaw::Beta { alpha, beta } => {
                if *alpha > 0.0 && *beta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain("Beta shapes must be positive"))
                }
            }
            ScoreLaw::Point(v) => {
                if (0.0..=1.0).contains(v) {
                    Ok(())
                } else {
                    Err(Error::domain(format!("point mass {v} outside [0, 1]")))
                }
            }
            ScoreLaw::Discrete(points) => {
                check_discrete(points, "score law")?;
                if points.iter().any(|p| !(0.0..=1.0).contains(&p.0)) {
                    return Err(Error::domain("score support outside [0, 1]"));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ScoreLaw::Beta { alpha, beta } => alpha / (alpha + beta),
            ScoreLaw::Point(v) => *v,
            ScoreLaw::Discrete(points) => points.iter().map(|(v, p)| v * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ScoreLaw::Beta { alpha, beta } => beta_variance(*alpha, *beta),
            ScoreLaw::Point(_) => 0.0,
            ScoreLaw::Discrete(points) => {
                let m = self.mean();
                points.iter().map(|(v, p)| p * (v - m).powi(2)).sum()
            }
        }
    }

    pub fn max_support(&self) -> f64 {
        match self {
            ScoreLaw::Beta { .. } => 1.0,
            ScoreLaw::Point(v) => *v,
            ScoreLaw::Discrete(points) => points.iter().map(|p| p.0).fold(f64::MIN, f64::max),
        }
    }

    /// `E[g(S)]`; Beta laws are integrated numerically to `abs_tol`.
    pub fn expect(&self, g: impl Fn(f64) -> f64, abs_tol: f64) -> f64 {
        match self {
            ScoreLaw::Point(v) => g(*v),
            ScoreLaw::Discrete(points) => points.iter().map(|&(v, p)| p * g(v)).sum(),
            ScoreLaw::Beta { alpha, beta } => {
                let (a, b) = (*alpha, *beta);
                let log_norm = ln_beta(a, b);
                let sd = beta_variance(a, b).sqrt();
                let mean = a / (a + b);
                let lo = (mean - BETA_SPAN_SDS * sd).max(0.0);
                let hi = (mean + BETA_SPAN_SDS * sd).min(1.0);
                let density =
                    move |x: f64| ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - log_norm).exp();
                integrate(|x| density(x) * g(x), lo, hi, 64, abs_tol)
            }
        }
    }
}

pub(crate) fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[min(max(T, 0), 1)]` for `T ~ N(m, sd^2)`.
fn clamped_unit_normal_mean(m: f64, sd: f64) -> f64 {
    let g = |u: f64| u * std_normal_cdf(u) + std_normal_pdf(u);
    sd * (g(m / sd) - g((m - 1.0) / sd))
}

impl ErrorLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ErrorLaw::Gaussian { sd } => {
                if *sd >= 0.0 && sd.is_finite() {
                    Ok(())
                } else {
                    Err(Error::domain(format!("error SD {sd} must be >= 0")))
                }
            }
            ErrorLaw::Discrete(points) => check_discrete(points, "error law"),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ErrorLaw::Gaussian { sd } => sd * sd,
            ErrorLaw::Discrete(points) => {
                let m: f64 = points.iter().map(|(v, p)| v * p).sum();
                points.iter().map(|(v, p)| p * (v - m).powi(2)).sum()
            }
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, ErrorLaw::Gaussian { sd } if *sd > 0.0)
    }

    pub fn max_support(&self) -> f64 {
        match self {
            ErrorLaw::Gaussian { sd } if *sd > 0.0 => f64::INFINITY,
            ErrorLaw::Gaussian { .. } => 0.0,
            ErrorLaw::Discrete(points) => points.iter().map(|p| p.0).fold(f64::MIN, f64::max),
        }
    }

    /// `E[h(obs(center + e))]` where `obs` applies `bounds`.
    pub fn expect_observed(
        &self,
        center: f64,
        bounds: Bounds,
        h: impl Fn(f64) -> f64,
        abs_tol: f64,
    ) -> f64 {
        match self {
            ErrorLaw::Discrete(points) => match bounds {
                Bounds::Clamp { lo, hi } => points
                    .iter()
                    .map(|&(e, p)| p * h((center + e).clamp(lo, hi)))
                    .sum(),
                Bounds::Free => points.iter().map(|&(e, p)| p * h(center + e)).sum(),
                Bounds::Truncate { lo, hi } => {
                    let (mut mass, mut acc) = (0.0, 0.0);
                    for &(e, p) in points {
                        let v = center + e;
                        if (lo..=hi).contains(&v) {
                            mass += p;
                            acc += p * h(v);
                        }
                    }
                    acc / mass
                }
            },
            ErrorLaw::Gaussian { sd } if *sd == 0.0 => match bounds {
                Bounds::Clamp { lo, hi } => h(center.clamp(lo, hi)),
                Bounds::Truncate { lo, hi } if !(lo..=hi).contains(&center) => f64::NAN,
                _ => h(center),
            },
            ErrorLaw::Gaussian { sd } => {
                let sd = *sd;
                let (lo, hi) = match bounds {
                    Bounds::Clamp { lo, hi } | Bounds::Truncate { lo, hi } => (lo, hi),
                    Bounds::Free => (f64::NEG_INFINITY, f64::INFINITY),
                };
                let a = lo.max(center - TAIL_SDS * sd);
                let b = hi.min(center + TAIL_SDS * sd);
                let interior = integrate(
                    |v| h(v) * std_normal_pdf((v - center) / sd) / sd,
                    a,
                    b,
                    4,
                    abs_tol,
                );
                let below = std_normal_cdf((lo - center) / sd);
                let above = std_normal_cdf((center - hi) / sd);
                match bounds {
                    Bounds::Clamp { .. } => {
                        let mut total = interior;
                        if below > 0.0 {
                            total += below * h(lo);
                        }
                        if above > 0.0 {
                            total += above * h(hi);
                        }
                        total
                    }
                    Bounds::Truncate { .. } => {
                        let inside =
                            std_normal_cdf((hi - center) / sd) - std_normal_cdf((lo - center) / sd);
                        interior / inside
                    }
                    Bounds::Free => interior,
                }
            }
        }
    }

    /// `E[obs(center + e)]`, with closed forms for the Gaussian cases.
    pub fn observed_mean(&self, center: f64, bounds: Bounds, abs_tol: f64) -> f64 {
        match (self, bounds) {
            (ErrorLaw::Gaussian { sd }, Bounds::Clamp { lo, hi })
                if *sd > 0.0 && lo == 0.0 && hi == 1.0 =>
            {
                if center - TAIL_SDS * sd > 0.0 && center + TAIL_SDS * sd < 1.0 {
                    center
                } else {
                    clamped_unit_normal_mean(center, *sd)
                }
            }
            (ErrorLaw::Gaussian { sd }, Bounds::Truncate { lo, hi }) if *sd > 0.0 => {
                let alpha = (lo - center) / sd;
                let beta = (hi - center) / sd;
                let mass = std_normal_cdf(beta) - std_normal_cdf(alpha);
                center + sd * (std_normal_pdf(alpha) - std_normal_pdf(beta)) / mass
            }
            (ErrorLaw::Gaussian { sd }, Bounds::Free) if *sd > 0.0 => center,
            _ => self.expect_observed(center, bounds, |v| v, abs_tol),
        }
    }
}
