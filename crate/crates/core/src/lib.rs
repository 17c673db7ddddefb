//! Simulation and estimation toolkit for learning rates measured by normalized
//! gain (ngain).
//!
//! Pretest `X` and learning rate `F` are independent; the posttest is
//! `Y = X + (1 - X) F`. Observed scores add classical-test-theory errors. The
//! crate computes the two competing estimators of `E[F]` (mean of ngains and
//! ngain of means), their closed-form asymptotics and bias, and runs the Monte
//! Carlo reliability sweeps that compare them.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod model;
pub mod noise;
pub mod rng;

pub use analytics::{
    asymptotic_report, asymptotic_var_fhat, asymptotic_var_fhat_star, bias_fbar_star,
    chebyshev_bound, efficiency_fbar_better, expected_noisy_ngain, AsymptoticReport, ErrorLaw,
    NoisyModel, ScoreLaw,
};
pub use error::{Error, Result};
pub use estimators::{
    estimator_gap_report, mean_of_ngains, ngain_of_means, pearson_correlation, EstimateReport,
};
pub use harness::{
    preset, run_replication, run_sweep, scenario_presets, summarize_figure_tables, CellAggregate,
    FigureTables, ReplicationRow, SweepResult,
};
pub use model::{
    ngain, posttest_from, reliability_grid, sample_latent_cohort, theoretical_moments,
    LatentCohort, Moments, NoiseDraws, ScenarioSpec,
};
pub use noise::{
    noisy_ngain, observe, sigma_from_reliability, ClampPolicy, NoiseSpec, ObservedCohort,
};
