//! Closed-form and numerically integrated quantities for the two estimators:
//! delta-method asymptotic variances, the expected noisy ngain and the bias
//! of the mean of ngains, the efficiency condition, and the Chebyshev bound.
//!
//! All noisy expectations are taken under the same clamp policy as the
//! simulator. With Gaussian errors and no clamping `E[1 / (1 - X*)]` diverges,
//! so those requests are refused.
//!
//! The expected noisy ngain uses the conditional factorization
//!
//! ```text
//! E[F*] = 1 - E_X[ E(1 - Y* | X) * E(1 / (1 - X*) | X) ]
//! ```
//!
//! which holds because, given the true pretest, the observed posttest depends
//! only on `(F, e_Y)` and the observed pretest only on `e_X`.

mod laws;
pub(crate) mod quadrature;

pub use laws::{Bounds, ErrorLaw, ScoreLaw};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Moments, ScenarioSpec};
use crate::noise::{ClampPolicy, NoiseSpec};

const OUTER_TOL: f64 = 1e-12;
const INNER_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    /// Error-free asymptotic variance of the ngain of means (times n).
    pub var_fhat: f64,
    /// Same under measurement error.
    pub var_fhat_star: f64,
    /// `E[mean of noisy ngains] - mu_F`; never positive.
    pub bias_fbar_star: f64,
    pub efficiency_fbar_better: bool,
    pub expected_f_star: f64,
}

fn check_mu_x(m: &Moments) -> Result<()> {
    if m.mu_x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "mean pretest {} must be < 1",
            m.mu_x
        )))
    }
}

/// `[var_y (1 - mu_x)^2 - var_x (1 - mu_y)^2] / (1 - mu_x)^4`.
pub fn asymptotic_var_fhat(m: &Moments) -> Result<f64> {
    check_mu_x(m)?;
    let q = 1.0 - m.mu_x;
    let r = 1.0 - m.mu_y;
    Ok((m.var_y * q * q - m.var_x * r * r) / q.powi(4))
}

/// Delta-method variance of the noisy ngain of means, with error variances
/// `delta2_x` and `delta2_y` added to the diagonal of the score covariance.
///
/// The cross term uses the covariance of the true scores, `cov_xy`, so at
/// zero noise this reduces to [`asymptotic_var_fhat`].
pub fn asymptotic_var_fhat_star(m: &Moments, delta2_x: f64, delta2_y: f64) -> Result<f64> {
    check_mu_x(m)?;
    if !(delta2_x >= 0.0 && delta2_y >= 0.0) {
        return Err(Error::domain("error variances must be nonnegative"));
    }
    let q = 1.0 - m.mu_x;
    let s = m.mu_y - 1.0;
    let numerator =
        s * s * (m.var_x + delta2_x) + 2.0 * s * q * m.cov_xy + (m.var_y + delta2_y) * q * q;
    Ok(numerator / q.powi(4))
}

/// True when the mean of ngains is asymptotically more efficient than the
/// ngain of means: `((1 - mu_y) / (1 - mu_x))^2 < (1 - mu_f)^2 + var_f`.
pub fn efficiency_fbar_better(m: &Moments) -> Result<bool> {
    check_mu_x(m)?;
    let lhs = ((1.0 - m.mu_y) / (1.0 - m.mu_x)).powi(2);
    let rhs = (1.0 - m.mu_f).powi(2) + m.var_f;
    Ok(lhs < rhs)
}

/// Chebyshev-type bound on `P(|F^* - mu_F| > epsilon)` for cohort size `n`.
pub fn chebyshev_bound(n: usize, epsilon: f64, var_fhat_star: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("cohort size must be positive"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(var_fhat_star >= 0.0) {
        return Err(Error::domain(format!(
            "variance must be nonnegative, got {var_fhat_star}"
        )));
    }
    Ok((2.0 * var_fhat_star / (n as f64 * epsilon * epsilon)).min(1.0))
}

/// Generative model for the observed scores of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyModel {
    pub pretest: ScoreLaw,
    pub rate: ScoreLaw,
    pub pretest_error: ErrorLaw,
    pub posttest_error: ErrorLaw,
    pub policy: ClampPolicy,
}

impl NoisyModel {
    pub fn from_scenario(spec: &ScenarioSpec, noise: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        Ok(NoisyModel {
            pretest: ScoreLaw::Beta {
                alpha: spec.alpha_x,
                beta: spec.beta_x,
            },
            rate: ScoreLaw::Beta {
                alpha: spec.alpha_f,
                beta: spec.beta_f,
            },
            pretest_error: ErrorLaw::Gaussian { sd: noise.sigma_x },
            posttest_error: ErrorLaw::Gaussian { sd: noise.sigma_y },
            policy: noise.clamp_policy,
        })
    }

    pub fn moments(&self) -> Moments {
        Moments::from_components(
            self.pretest.mean(),
            self.pretest.variance(),
            self.rate.mean(),
            self.rate.variance(),
        )
    }

    fn validate(&self) -> Result<()> {
        self.pretest.validate()?;
        self.rate.validate()?;
        self.pretest_error.validate()?;
        self.posttest_error.validate()?;
        self.policy.validate()?;
        if self.pretest.mean() >= 1.0 {
            return Err(Error::domain("mean pretest must be < 1"));
        }
        if self.policy == ClampPolicy::None {
            if self.pretest_error.is_unbounded() {
                return Err(Error::Refused(
                    "E[1 / (1 - X*)] diverges under unbounded errors without clamping".into(),
                ));
            }
            let worst = self.pretest.max_support() + self.pretest_error.max_support();
            if worst >= 1.0 {
                return Err(Error::Singular { indices: vec![] });
            }
        }
        Ok(())
    }

    /// `E[F*]` for one learner. Exact sums for discrete laws; adaptive
    /// quadrature otherwise.
    pub fn expected_noisy_ngain(&self) -> Result<f64> {
        self.validate()?;
        let x_bounds = Bounds::pretest(self.policy);
        let y_bounds = Bounds::posttest(self.policy);
        let mu_f = self.rate.mean();

        let headroom_ratio = |x: f64| -> f64 {
            let inv_gap =
                self.pretest_error
                    .expect_observed(x, x_bounds, |v| 1.0 / (1.0 - v), INNER_TOL);
            // E[1 - Y* | X = x] = (1 - x)(1 - mu_F) + E_F[y - E obs(y + e_Y)]
            let shortfall = self.rate.expect(
                |f| {
                    let y = x + (1.0 - x) * f;
                    y - self.posttest_error.observed_mean(y, y_bounds, INNER_TOL)
                },
                INNER_TOL,
            );
            ((1.0 - x) * (1.0 - mu_f) + shortfall) * inv_gap
        };
        let value = 1.0 - self.pretest.expect(headroom_ratio, OUTER_TOL);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Refused(
                "observed-pretest bounds leave no admissible error mass".into(),
            ))
        }
    }

    pub fn bias_fbar_star(&self) -> Result<f64> {
        Ok(self.expected_noisy_ngain()? - self.rate.mean())
    }
}

fn require_clamp(noise: &NoiseSpec) -> Result<()> {
    match noise.clamp_policy {
        ClampPolicy::Clamp { .. } | ClampPolicy::RejectResample { .. } => Ok(()),
        ClampPolicy::None => Err(Error::Refused(
            "expected noisy ngain needs a bounded observed pretest (clamp policy `none`)".into(),
        )),
    }
}

pub fn expected_noisy_ngain(spec: &ScenarioSpec, noise: &NoiseSpec) -> Result<f64> {
    require_clamp(noise)?;
    NoisyModel::from_scenario(spec, noise)?.expected_noisy_ngain()
}

pub fn bias_fbar_star(spec: &ScenarioSpec, noise: &NoiseSpec) -> Result<f64> {
    Ok(expected_noisy_ngain(spec, noise)? - spec.mean_f())
}

pub fn asymptotic_report(spec: &ScenarioSpec, noise: &NoiseSpec) -> Result<AsymptoticReport> {
    let model = NoisyModel::from_scenario(spec, noise)?;
    let m = model.moments();
    let expected_f_star = expected_noisy_ngain(spec, noise)?;
    Ok(AsymptoticReport {
        var_fhat: asymptotic_var_fhat(&m)?,
        var_fhat_star: asymptotic_var_fhat_star(
            &m,
            noise.sigma_x * noise.sigma_x,
            noise.sigma_y * noise.sigma_y,
        )?,
        bias_fbar_star: expected_f_star - m.mu_f,
        efficiency_fbar_better: efficiency_fbar_better(&m)?,
        expected_f_star,
    })
}
