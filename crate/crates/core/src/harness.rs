//! Monte Carlo sweeps over a reliability grid.
//!
//! Each replication draws one latent cohort and observes it at every
//! reliability in the grid, so differences between grid cells come from the
//! measurement error alone. Replications are independent and run in parallel;
//! results are merged in replication order and do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimator_gap_report, mean, pearson_correlation};
use crate::model::{
    reliability_grid, sample_latent, NoiseDraws, ScenarioSpec, DEFAULT_GRID_HI, DEFAULT_GRID_LO,
    DEFAULT_GRID_STEP,
};
use crate::noise::{observe, ClampPolicy, NoiseSpec};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication_index: usize,
    pub reliability: f64,
    pub fbar: f64,
    pub fhat: f64,
    pub gap: f64,
    pub pearson_r: f64,
    pub singular_count: usize,
    /// Mean of the latent learning rates of this replication's cohort.
    pub latent_fbar: f64,
}

/// Per-reliability summary over all replications. Standard errors are
/// sample SD / sqrt(N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub reliability: f64,
    pub mean_fbar: f64,
    pub se_fbar: f64,
    pub mean_fhat: f64,
    pub se_fhat: f64,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_r: f64,
    pub se_r: f64,
    /// `mean_fbar - mu_F`.
    pub bias_fbar: f64,
    /// `mean_fhat - mu_F`.
    pub bias_fhat: f64,
    /// Mean of `fbar - latent_fbar`: the bias estimated against each
    /// replication's own latent mean, which removes cohort sampling noise.
    pub noise_bias_fbar: f64,
    pub se_noise_bias_fbar: f64,
    /// Correlation of `fbar` and `fhat` across replications.
    pub corr_fbar_fhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario: ScenarioSpec,
    pub digest: String,
    pub mu_f: f64,
    pub rows: Vec<ReplicationRow>,
    pub aggregates: Vec<CellAggregate>,
}

fn preset_spec(name: &str, alpha_x: f64, beta_x: f64, alpha_f: f64, beta_f: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        alpha_x,
        beta_x,
        alpha_f,
        beta_f,
        n: 100,
        replications: 1000,
        reliability_grid: reliability_grid(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_STEP)
            .expect("default grid is valid"),
        base_seed: 42,
        clamp_policy: ClampPolicy::default(),
        noise_draws: NoiseDraws::Shared,
    }
}

/// The five reference scenarios: `main` plus four variants.
pub fn scenario_presets() -> Vec<ScenarioSpec> {
    vec![
        preset_spec("main", 60.0, 40.0, 40.0, 60.0),
        preset_spec("app1", 70.0, 30.0, 60.0, 40.0),
        preset_spec("app2", 30.0, 70.0, 70.0, 30.0),
        preset_spec("app3", 20.0, 80.0, 40.0, 60.0),
        preset_spec("app4", 600.0, 400.0, 400.0, 600.0),
    ]
}

pub fn preset(name: &str) -> Option<ScenarioSpec> {
    scenario_presets().into_iter().find(|s| s.name == name)
}

pub fn replication_seed(spec: &ScenarioSpec, replication_index: usize) -> u64 {
    derive_seed(spec.base_seed, replication_index as u64)
}

pub(crate) fn noise_seed(
    spec: &ScenarioSpec,
    replication_seed: u64,
    reliability_index: usize,
) -> u64 {
    match spec.noise_draws {
        NoiseDraws::Shared => derive_seed(replication_seed, 0),
        NoiseDraws::Fresh => derive_seed(replication_seed, 1 + reliability_index as u64),
    }
}

/// One observed cohort: the latent draw for `seed` and its noisy version at
/// `reliability`, with noise seeded the same way a sweep replication does.
pub fn simulate_cohort(
    spec: &ScenarioSpec,
    reliability: f64,
    seed: u64,
) -> Result<(crate::model::LatentCohort, crate::noise::ObservedCohort)> {
    spec.validate()?;
    let latent = sample_latent(spec, seed, spec.n)?;
    let noise = NoiseSpec::from_reliability(spec.var_x(), reliability, spec.clamp_policy)?;
    let observed = observe(&latent, &noise, noise_seed(spec, seed, 0))?;
    Ok((latent, observed))
}

fn replicate(spec: &ScenarioSpec, replication_index: usize) -> Result<Vec<ReplicationRow>> {
    let seed = replication_seed(spec, replication_index);
    let latent = sample_latent(spec, seed, spec.n)?;
    let latent_fbar = mean(&latent.f);
    spec.reliability_grid
        .iter()
        .enumerate()
        .map(|(j, &reliability)| {
            let noise = NoiseSpec::from_reliability(spec.var_x(), reliability, spec.clamp_policy)?;
            let observed = observe(&latent, &noise, noise_seed(spec, seed, j))?;
            let report = estimator_gap_report(&observed)?;
            Ok(ReplicationRow {
                replication_index,
                reliability,
                fbar: report.mean_of_ngains,
                fhat: report.ngain_of_means,
                gap: report.gap,
                pearson_r: report
                    .pearson_r_pre_ngain
                    .ok_or(Error::UndefinedCorrelation(
                        "constant observed pretests or ngains",
                    ))?,
                singular_count: report.singular_count,
                latent_fbar,
            })
        })
        .collect()
}

/// One replication: a single latent cohort observed at every grid reliability.
pub fn run_replication(
    spec: &ScenarioSpec,
    replication_index: usize,
) -> Result<Vec<ReplicationRow>> {
    spec.validate()?;
    replicate(spec, replication_index).map_err(|e| Error::Replication {
        index: replication_index,
        source: Box::new(e),
    })
}

/// Replications `1..=N`, in parallel, merged in index order.
pub fn run_sweep(spec: &ScenarioSpec) -> Result<SweepResult> {
    spec.validate()?;
    let per_replication: Vec<Vec<ReplicationRow>> = (1..=spec.replications)
        .into_par_iter()
        .map(|i| run_replication(spec, i))
        .collect::<Result<_>>()?;
    let rows: Vec<ReplicationRow> = per_replication.into_iter().flatten().collect();
    let mu_f = spec.mean_f();
    let aggregates = aggregate_rows(&rows, &spec.reliability_grid, mu_f);
    Ok(SweepResult {
        digest: spec.digest(),
        scenario: spec.clone(),
        mu_f,
        rows,
        aggregates,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    if values.len() < 2 {
        return (m, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (m, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Aggregates rows per reliability cell (in grid order).
pub fn aggregate_rows(rows: &[ReplicationRow], grid: &[f64], mu_f: f64) -> Vec<CellAggregate> {
    grid.iter()
        .map(|&reliability| {
            let cell: Vec<&ReplicationRow> = rows
                .iter()
                .filter(|r| r.reliability == reliability)
                .collect();
            let column =
                |f: fn(&ReplicationRow) -> f64| cell.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let fbar = column(|r| r.fbar);
            let fhat = column(|r| r.fhat);
            let (mean_fbar, se_fbar) = mean_and_se(&fbar);
            let (mean_fhat, se_fhat) = mean_and_se(&fhat);
            let (mean_gap, se_gap) = mean_and_se(&column(|r| r.gap));
            let (mean_r, se_r) = mean_and_se(&column(|r| r.pearson_r));
            let (noise_bias_fbar, se_noise_bias_fbar) =
                mean_and_se(&column(|r| r.fbar - r.latent_fbar));
            CellAggregate {
                reliability,
                mean_fbar,
                se_fbar,
                mean_fhat,
                se_fhat,
                mean_gap,
                se_gap,
                mean_r,
                se_r,
                bias_fbar: mean_fbar - mu_f,
                bias_fhat: mean_fhat - mu_f,
                noise_bias_fbar,
                se_noise_bias_fbar,
                corr_fbar_fhat: pearson_correlation(&fbar, &fhat).ok(),
            }
        })
        .collect()
}

impl SweepResult {
    pub fn cell(&self, reliability: f64) -> Option<&CellAggregate> {
        self.aggregates
            .iter()
            .find(|a| (a.reliability - reliability).abs() < 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelARow {
    pub reliability: f64,
    pub mean_r: f64,
    pub se_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelBRow {
    pub mean_r: f64,
    pub bias_fbar: f64,
    pub bias_fhat: f64,
    pub se_fbar: f64,
    pub se_fhat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelCRow {
    pub reliability: f64,
    pub mean_fbar: f64,
    pub mean_fhat: f64,
    pub se_fbar: f64,
    pub se_fhat: f64,
    pub mu_f: f64,
}

/// The three figure panels: correlation vs reliability (A), empirical bias
/// vs correlation (B), estimator means vs reliability (C).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureTables {
    pub panel_a: Vec<PanelARow>,
    pub panel_b: Vec<PanelBRow>,
    pub panel_c: Vec<PanelCRow>,
}

pub fn summarize_figure_tables(sweep: &SweepResult) -> FigureTables {
    let a = &sweep.aggregates;
    FigureTables {
        panel_a: a
            .iter()
            .map(|c| PanelARow {
                reliability: c.reliability,
                mean_r: c.mean_r,
                se_r: c.se_r,
            })
            .collect(),
        panel_b: a
            .iter()
            .map(|c| PanelBRow {
                mean_r: c.mean_r,
                bias_fbar: c.bias_fbar,
                bias_fhat: c.bias_fhat,
                se_fbar: c.se_fbar,
                se_fhat: c.se_fhat,
            })
            .collect(),
        panel_c: a
            .iter()
            .map(|c| PanelCRow {
                reliability: c.reliability,
                mean_fbar: c.mean_fbar,
                mean_fhat: c.mean_fhat,
                se_fbar: c.se_fbar,
                se_fhat: c.se_fhat,
                mu_f: sweep.mu_f,
            })
            .collect(),
    }
}
