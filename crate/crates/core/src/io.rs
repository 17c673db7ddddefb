//! File formats: scenario config, raw score ingestion, and CSV/JSON export.
//!
//! CSV headers are fixed; floating-point values are written with 17
//! significant digits.
//!
//! Scenario config is flat TOML. Every key is optional; absent keys fall back
//! to the `preset` named in the file (or `main`):
//!
//! ```toml
//! preset = "main"
//! name = "my-scenario"
//! alpha_x = 60.0
//! beta_x = 40.0
//! alpha_f = 40.0
//! beta_f = 60.0
//! n = 100
//! replications = 1000
//! reliability_min = 0.7
//! reliability_max = 1.0
//! reliability_step = 0.025
//! # reliability_grid = [0.7, 0.8, 0.9, 1.0]   (overrides min/max/step)
//! base_seed = 42
//! clamp_policy = "clamp:1e-6"   # clamp[:eps] | reject-resample[:eps] | none
//! noise_draws = "shared"        # shared | fresh
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mean_of_ngains, ngain_of_means, pearson_correlation, EstimateReport};
use crate::harness::{preset, summarize_figure_tables, ReplicationRow, SweepResult};
use crate::model::{
    reliability_grid, LatentCohort, ScenarioSpec, DEFAULT_GRID_HI, DEFAULT_GRID_LO,
    DEFAULT_GRID_STEP,
};
use crate::noise::ObservedCohort;

pub const ROWS_HEADER: [&str; 7] = [
    "replication",
    "reliability",
    "fbar",
    "fhat",
    "gap",
    "pearson_r",
    "singular_count",
];
pub const PANEL_A_HEADER: [&str; 3] = ["reliability", "mean_r", "se_r"];
pub const PANEL_B_HEADER: [&str; 5] = ["mean_r", "bias_fbar", "bias_fhat", "se_fbar", "se_fhat"];
pub const PANEL_C_HEADER: [&str; 6] = [
    "reliability",
    "mean_fbar",
    "mean_fhat",
    "se_fbar",
    "se_fhat",
    "mu_f",
];
pub const COHORT_HEADER: [&str; 4] = ["x", "f", "x_star", "f_star"];

pub const SPURIOUS_CORRELATION_CAVEAT: &str = "Caveat: measurement error in pretest and posttest \
scores induces a negative pretest-ngain correlation (and a matching gap between the mean of ngains \
and the ngain of means) even when true pretest and learning rate are independent. The observed \
correlation is not evidence that ngain favours or penalises any pretest group.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (csv|json)"
            ))),
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

// --- scenario config -------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub alpha_x: Option<f64>,
    pub beta_x: Option<f64>,
    pub alpha_f: Option<f64>,
    pub beta_f: Option<f64>,
    pub n: Option<usize>,
    pub replications: Option<usize>,
    pub reliability_min: Option<f64>,
    pub reliability_max: Option<f64>,
    pub reliability_step: Option<f64>,
    pub reliability_grid: Option<Vec<f64>>,
    pub base_seed: Option<u64>,
    pub clamp_policy: Option<String>,
    pub noise_draws: Option<String>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn base(&self) -> Result<ScenarioSpec> {
        let name = self.preset.as_deref().unwrap_or("main");
        let mut spec =
            preset(name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        if self.preset.is_none() {
            spec.name = "custom".into();
        }
        Ok(spec)
    }

    /// Builds a validated scenario from the config's base preset and overrides.
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        let mut spec = self.base()?;
        if let Some(v) = &self.name {
            spec.name = v.clone();
        }
        macro_rules! set {
            ($($field:ident),*) => {$( if let Some(v) = self.$field { spec.$field = v; } )*};
        }
        set!(alpha_x, beta_x, alpha_f, beta_f, n, replications, base_seed);
        if let Some(grid) = &self.reliability_grid {
            spec.reliability_grid = grid.clone();
        } else if self.reliability_min.is_some()
            || self.reliability_max.is_some()
            || self.reliability_step.is_some()
        {
            spec.reliability_grid = reliability_grid(
                self.reliability_min.unwrap_or(DEFAULT_GRID_LO),
                self.reliability_max.unwrap_or(DEFAULT_GRID_HI),
                self.reliability_step.unwrap_or(DEFAULT_GRID_STEP),
            )?;
        }
        if let Some(p) = &self.clamp_policy {
            spec.clamp_policy = p.parse()?;
        }
        if let Some(d) = &self.noise_draws {
            spec.noise_draws = d.parse()?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

// --- raw scores ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub learner_id: String,
    pub pretest_raw: f64,
    pub posttest_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScoreDataset {
    pub max_score: f64,
    pub records: Vec<RawScore>,
}

impl RawScoreDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices of learners whose pretest equals the maximum score.
    pub fn ceiling_learners(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.pretest_raw == self.max_score)
            .map(|(i, _)| i)
            .collect()
    }
}

fn metadata_max_score(text: &str) -> Option<std::result::Result<f64, String>> {
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(comment) = line.strip_prefix('#') else {
            break;
        };
        let comment = comment.trim();
        if let Some(rest) = comment.strip_prefix("max_score") {
            let value = rest.trim_start().trim_start_matches(['=', ':']).trim();
            return Some(value.parse::<f64>().map_err(|_| value.to_string()));
        }
    }
    None
}

/// Reads `learner_id,pretest,posttest` rows. The maximum score comes from
/// `max_score` if given, else from a leading `# max_score = M` line.
pub fn load_scores(path: &Path, max_score: Option<f64>) -> Result<RawScoreDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let max_score = match (max_score, metadata_max_score(&text)) {
        (Some(m), _) => m,
        (None, Some(Ok(m))) => m,
        (None, Some(Err(bad))) => return Err(parse_err(1, format!("bad max_score `{bad}`"))),
        (None, None) => {
            return Err(Error::Config(format!(
                "{}: no max score (pass one or add a `# max_score = M` line)",
                path.display()
            )))
        }
    };
    if !(max_score > 0.0 && max_score.is_finite()) {
        return Err(Error::domain(format!(
            "max score must be positive, got {max_score}"
        )));
    }
    if text
        .lines()
        .all(|l| l.trim().is_empty() || l.trim_start().starts_with('#'))
    {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let expected = ["learner_id", "pretest", "posttest"];
    if headers.iter().collect::<Vec<_>>() != expected {
        let line = headers.position().map_or(1, |p| p.line());
        return Err(parse_err(
            line,
            format!("header must be `{}`", expected.join(",")),
        ));
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(parse_err(
                line,
                format!("expected 3 fields, found {}", row.len()),
            ));
        }
        let learner_id = row[0].to_string();
        let number = |field: &str, label: &str| {
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("{label} `{field}` is not a number")))
        };
        let pretest_raw = number(&row[1], "pretest")?;
        let posttest_raw = number(&row[2], "posttest")?;
        for (label, v) in [("pretest", pretest_raw), ("posttest", posttest_raw)] {
            if !(0.0..=max_score).contains(&v) {
                return Err(Error::Score {
                    learner_id: learner_id.clone(),
                    message: format!("{label} {v} outside [0, {max_score}] (line {line})"),
                });
            }
        }
        records.push(RawScore {
            learner_id,
            pretest_raw,
            posttest_raw,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    Ok(RawScoreDataset { max_score, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAnalysis {
    #[serde(flatten)]
    pub report: EstimateReport,
    pub excluded_learners: Vec<String>,
    pub caveat: String,
}

/// Normalizes by the maximum score and computes both estimators. Learners at
/// the ceiling are an error unless `exclude_ceiling` is set.
pub fn analyze_dataset(data: &RawScoreDataset, exclude_ceiling: bool) -> Result<DatasetAnalysis> {
    let ceiling = data.ceiling_learners();
    if !ceiling.is_empty() && !exclude_ceiling {
        return Err(Error::Singular { indices: ceiling });
    }
    let m = data.max_score;
    let kept: Vec<&RawScore> = data
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| !ceiling.contains(i))
        .map(|(_, r)| r)
        .collect();
    if kept.len() < 2 {
        return Err(Error::TooFewLearners {
            needed: 2,
            got: kept.len(),
        });
    }
    let pre: Vec<f64> = kept.iter().map(|r| r.pretest_raw / m).collect();
    let post: Vec<f64> = kept.iter().map(|r| r.posttest_raw / m).collect();
    let gains: Vec<f64> = kept
        .iter()
        .map(|r| (r.posttest_raw - r.pretest_raw) / (m - r.pretest_raw))
        .collect();
    let fbar = mean_of_ngains(&pre, &post)?;
    let fhat = ngain_of_means(&pre, &post)?;
    Ok(DatasetAnalysis {
        report: EstimateReport {
            mean_of_ngains: fbar,
            ngain_of_means: fhat,
            gap: fbar - fhat,
            pearson_r_pre_ngain: pearson_correlation(&pre, &gains).ok(),
            n: kept.len(),
            singular_count: ceiling.len(),
        },
        excluded_learners: ceiling
            .iter()
            .map(|&i| data.records[i].learner_id.clone())
            .collect(),
        caveat: SPURIOUS_CORRELATION_CAVEAT.to_string(),
    })
}

// --- export ----------------------------------------------------------------

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_records<W: std::io::Write, const N: usize>(
    w: &mut csv::Writer<W>,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> std::result::Result<(), csv::Error> {
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_table<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_records(&mut w, header, rows).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize)]
struct ScenarioMeta<'a> {
    digest: &'a str,
    mu_f: f64,
    scenario: &'a ScenarioSpec,
}

#[derive(Serialize)]
struct SweepJson<'a> {
    digest: &'a str,
    mu_f: f64,
    scenario: &'a ScenarioSpec,
    rows: &'a [ReplicationRow],
    #[serde(flatten)]
    panels: crate::harness::FigureTables,
}

/// Writes a sweep into `dir`. CSV: `rows.csv`, `panelA.csv`, `panelB.csv`,
/// `panelC.csv` plus `scenario.json`. JSON: a single `sweep.json`.
pub fn export_sweep(sweep: &SweepResult, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let tables = summarize_figure_tables(sweep);
    match format {
        Format::Json => {
            let path = dir.join("sweep.json");
            write_json(
                &path,
                &SweepJson {
                    digest: &sweep.digest,
                    mu_f: sweep.mu_f,
                    scenario: &sweep.scenario,
                    rows: &sweep.rows,
                    panels: tables,
                },
            )?;
            Ok(vec![path])
        }
        Format::Csv => {
            let rows_path = dir.join("rows.csv");
            write_table(
                &rows_path,
                ROWS_HEADER,
                sweep.rows.iter().map(|r| {
                    [
                        r.replication_index.to_string(),
                        fmt_f64(r.reliability),
                        fmt_f64(r.fbar),
                        fmt_f64(r.fhat),
                        fmt_f64(r.gap),
                        fmt_f64(r.pearson_r),
                        r.singular_count.to_string(),
                    ]
                }),
            )?;
            let a_path = dir.join("panelA.csv");
            write_table(
                &a_path,
                PANEL_A_HEADER,
                tables
                    .panel_a
                    .iter()
                    .map(|r| [fmt_f64(r.reliability), fmt_f64(r.mean_r), fmt_f64(r.se_r)]),
            )?;
            let b_path = dir.join("panelB.csv");
            write_table(
                &b_path,
                PANEL_B_HEADER,
                tables.panel_b.iter().map(|r| {
                    [
                        fmt_f64(r.mean_r),
                        fmt_f64(r.bias_fbar),
                        fmt_f64(r.bias_fhat),
                        fmt_f64(r.se_fbar),
                        fmt_f64(r.se_fhat),
                    ]
                }),
            )?;
            let c_path = dir.join("panelC.csv");
            write_table(
                &c_path,
                PANEL_C_HEADER,
                tables.panel_c.iter().map(|r| {
                    [
                        fmt_f64(r.reliability),
                        fmt_f64(r.mean_fbar),
                        fmt_f64(r.mean_fhat),
                        fmt_f64(r.se_fbar),
                        fmt_f64(r.se_fhat),
                        fmt_f64(r.mu_f),
                    ]
                }),
            )?;
            let meta_path = dir.join("scenario.json");
            write_json(
                &meta_path,
                &ScenarioMeta {
                    digest: &sweep.digest,
                    mu_f: sweep.mu_f,
                    scenario: &sweep.scenario,
                },
            )?;
            Ok(vec![rows_path, a_path, b_path, c_path, meta_path])
        }
    }
}

fn cohort_rows<'a>(
    latent: &'a LatentCohort,
    observed: &'a ObservedCohort,
) -> impl Iterator<Item = [String; 4]> + 'a {
    (0..latent.len()).map(|i| {
        [
            fmt_f64(latent.x[i]),
            fmt_f64(latent.f[i]),
            fmt_f64(observed.x_star[i]),
            fmt_f64(observed.f_star[i]),
        ]
    })
}

/// Per-learner `x,f,x_star,f_star` table for one simulated cohort.
pub fn export_cohort(latent: &LatentCohort, observed: &ObservedCohort, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_table(path, COHORT_HEADER, cohort_rows(latent, observed))
}

pub fn write_cohort(
    latent: &LatentCohort,
    observed: &ObservedCohort,
    out: impl std::io::Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    write_records(&mut w, COHORT_HEADER, cohort_rows(latent, observed)).map_err(|e| Error::Csv {
        path: PathBuf::from("<stream>"),
        source: e,
    })
}

pub fn export_estimate_report(report: &EstimateReport, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Json => write_json(path, report),
        Format::Csv => write_table(
            path,
            [
                "mean_of_ngains",
                "ngain_of_means",
                "gap",
                "pearson_r",
                "n",
                "singular_count",
            ],
            [[
                fmt_f64(report.mean_of_ngains),
                fmt_f64(report.ngain_of_means),
                fmt_f64(report.gap),
                report.pearson_r_pre_ngain.map_or(String::new(), fmt_f64),
                report.n.to_string(),
                report.singular_count.to_string(),
            ]],
        ),
    }
}

pub fn export_asymptotic_report(
    report: &crate::analytics::AsymptoticReport,
    path: &Path,
    format: Format,
) -> Result<()> {
    match format {
        Format::Json => write_json(path, report),
        Format::Csv => write_table(
            path,
            [
                "var_fhat",
                "var_fhat_star",
                "bias_fbar_star",
                "efficiency_fbar_better",
                "expected_f_star",
            ],
            [[
                fmt_f64(report.var_fhat),
                fmt_f64(report.var_fhat_star),
                fmt_f64(report.bias_fbar_star),
                report.efficiency_fbar_better.to_string(),
                fmt_f64(report.expected_f_star),
            ]],
        ),
    }
}

/// Reads `rows.csv` back. Latent means are not exported, so `latent_fbar` is NaN.
pub fn read_rows_csv(path: &Path) -> Result<Vec<ReplicationRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ROWS_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad {what}"),
        };
        let float = |i: usize| record[i].parse::<f64>().map_err(|_| bad(ROWS_HEADER[i]));
        rows.push(ReplicationRow {
            replication_index: record[0].parse().map_err(|_| bad("replication"))?,
            reliability: float(1)?,
            fbar: float(2)?,
            fhat: float(3)?,
            gap: float(4)?,
            pearson_r: float(5)?,
            singular_count: record[6].parse().map_err(|_| bad("singular_count"))?,
            latent_fbar: f64::NAN,
        });
    }
    Ok(rows)
}
