//! The two learning-rate estimators: the mean of per-learner normalized gains
//! and the normalized gain of the cohort means. Scores are on the unit scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::ObservedCohort;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mean_of_ngains: f64,
    pub ngain_of_means: f64,
    /// `mean_of_ngains - ngain_of_means`.
    pub gap: f64,
    /// `None` when either the pretests or the ngains are constant.
    pub pearson_r_pre_ngain: Option<f64>,
    pub n: usize,
    pub singular_count: usize,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewLearners {
            needed: 2,
            got: a.len(),
        });
    }
    Ok(())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mean_of_ngains(pre: &[f64], post: &[f64]) -> Result<f64> {
    check_pair(pre, post)?;
    let singular: Vec<usize> = pre
        .iter()
        .enumerate()
        .filter(|(_, &p)| !(p < 1.0))
        .map(|(i, _)| i)
        .collect();
    if !singular.is_empty() {
        return Err(Error::Singular { indices: singular });
    }
    let total: f64 = pre
        .iter()
        .zip(post)
        .map(|(&x, &y)| (y - x) / (1.0 - x))
        .sum();
    Ok(total / pre.len() as f64)
}

pub fn ngain_of_means(pre: &[f64], post: &[f64]) -> Result<f64> {
    check_pair(pre, post)?;
    let mx = mean(pre);
    if !(mx < 1.0) {
        return Err(Error::Singular {
            indices: (0..pre.len()).collect(),
        });
    }
    Ok((mean(post) - mx) / (1.0 - mx))
}

/// Sample Pearson correlation (two-pass, centered).
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b) {
        let (du, dv) = (u - ma, v - mb);
        sab += du * dv;
        saa += du * du;
        sbb += dv * dv;
    }
    if saa == 0.0 {
        return Err(Error::UndefinedCorrelation("first vector is constant"));
    }
    if sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("second vector is constant"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Both estimators, their gap, and the pretest/ngain correlation on an
/// observed cohort. The per-learner ngains are the cohort's `f_star`.
pub fn estimator_gap_report(observed: &ObservedCohort) -> Result<EstimateReport> {
    check_pair(&observed.x_star, &observed.y_star)?;
    if observed.f_star.len() != observed.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: observed.f_star.len(),
        });
    }
    let singular: Vec<usize> = observed
        .x_star
        .iter()
        .enumerate()
        .filter(|(_, &x)| !(x < 1.0))
        .map(|(i, _)| i)
        .collect();
    if !singular.is_empty() {
        return Err(Error::Singular { indices: singular });
    }
    let mean_of_ngains = mean(&observed.f_star);
    let ngain_of_means = ngain_of_means(&observed.x_star, &observed.y_star)?;
    Ok(EstimateReport {
        mean_of_ngains,
        ngain_of_means,
        gap: mean_of_ngains - ngain_of_means,
        pearson_r_pre_ngain: pearson_correlation(&observed.x_star, &observed.f_star).ok(),
        n: observed.len(),
        singular_count: observed.adjusted,
    })
}
