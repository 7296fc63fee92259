//! Evaluation reports (JSON + CSV), the combined comparison table, training
//! logs and trajectory logs.
//!
//! `report.csv` has the columns `metric,mean,std` and these rows, in order:
//! `AA, AB, BB, M1, M2, IN, Total` (NMACs per episode), `N_s` (successful
//! agents per episode), `R_bar_x1e3` (mean reward per agent-step × 10³),
//! `T_A_min, T_B_min` (mean mission time of successful agents, minutes),
//! `F_t` (time fairness, percent), `total_reward` (per episode, all agents)
//! and `steps`. Undefined values are written as `N/A`. Standard deviations
//! are per-episode sample standard deviations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use deconflict_core::metrics::{EvalReport, MeanStd};
use deconflict_core::StepRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed report {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("schema version {found} in {path}, expected {SCHEMA_VERSION}")]
    Schema { path: String, found: u32 },
    #[error("no report could be merged")]
    NothingMerged,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl From<MeanStd> for Stat {
    fn from(m: MeanStd) -> Self {
        Self {
            mean: m.mean,
            std: m.std,
        }
    }
}

/// On-disk form of an [`EvalReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub model: String,
    pub seed: u64,
    pub episodes: usize,
    pub greedy: bool,
    pub nmac_aa: Stat,
    pub nmac_ab: Stat,
    pub nmac_bb: Stat,
    pub nmac_m1: Stat,
    pub nmac_m2: Stat,
    pub nmac_in: Stat,
    pub nmac_total: Stat,
    pub n_success: Stat,
    pub mean_step_reward: f64,
    pub total_reward: Stat,
    pub reward_fleet_a: Stat,
    pub reward_fleet_b: Stat,
    pub mission_time_a_min: Option<f64>,
    pub mission_time_b_min: Option<f64>,
    pub fairness: Option<f64>,
    pub steps: Stat,
}

impl ReportFile {
    pub fn new(model: &str, seed: u64, greedy: bool, r: &EvalReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: model.to_string(),
            seed,
            episodes: r.episodes,
            greedy,
            nmac_aa: r.nmac_by_pair[0].into(),
            nmac_ab: r.nmac_by_pair[1].into(),
            nmac_bb: r.nmac_by_pair[2].into(),
            nmac_m1: r.nmac_by_bottleneck[0].into(),
            nmac_m2: r.nmac_by_bottleneck[1].into(),
            nmac_in: r.nmac_by_bottleneck[2].into(),
            nmac_total: r.nmac_total.into(),
            n_success: r.n_success.into(),
            mean_step_reward: r.mean_step_reward,
            total_reward: r.total_reward.into(),
            reward_fleet_a: r.reward_by_fleet[0].into(),
            reward_fleet_b: r.reward_by_fleet[1].into(),
            mission_time_a_min: r.mission_time_min[0],
            mission_time_b_min: r.mission_time_min[1],
            fairness: r.fairness,
            steps: r.steps.into(),
        }
    }

    /// `(metric, mean, std)` rows of `report.csv`.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>, Option<f64>)> {
        type Cell = (Option<f64>, Option<f64>);
        let s = |x: Stat| (Some(x.mean), Some(x.std));
        let rows: [(&str, Cell); 14] = [
            ("AA", s(self.nmac_aa)),
            ("AB", s(self.nmac_ab)),
            ("BB", s(self.nmac_bb)),
            ("M1", s(self.nmac_m1)),
            ("M2", s(self.nmac_m2)),
            ("IN", s(self.nmac_in)),
            ("Total", s(self.nmac_total)),
            ("N_s", s(self.n_success)),
            ("R_bar_x1e3", (Some(self.mean_step_reward * 1e3), None)),
            ("T_A_min", (self.mission_time_a_min, None)),
            ("T_B_min", (self.mission_time_b_min, None)),
            ("F_t", (self.fairness, None)),
            ("total_reward", s(self.total_reward)),
            ("steps", s(self.steps)),
        ];
        rows.into_iter().map(|(k, (m, sd))| (k, m, sd)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,std\n");
        for (k, m, sd) in self.rows() {
            writeln!(out, "{k},{},{}", fmt_opt(m), fmt_opt(sd)).unwrap();
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        let json = dir.join(REPORT_JSON);
        std::fs::write(&json, self.to_json()).map_err(io_err(&json))?;
        let csv = dir.join(REPORT_CSV);
        std::fs::write(&csv, self.to_csv()).map_err(io_err(&csv))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, ReportError> {
        let path = dir.join(REPORT_JSON);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ReportError::Malformed {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(ReportError::Schema {
                path: path.display().to_string(),
                found,
            });
        }
        serde_json::from_value(value).map_err(|e| ReportError::Malformed {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.6}"))
}

/// Result of merging several run directories.
#[derive(Debug)]
pub struct Merged {
    pub csv: String,
    pub columns: Vec<String>,
    /// Directories that could not be merged, with the reason.
    pub failures: Vec<(PathBuf, ReportError)>,
}

/// Combine the reports of several evaluation directories into one table with
/// one column per model. Missing or unreadable reports are listed in
/// `failures` while the rest are still merged; a schema-version mismatch
/// aborts the merge.
pub fn merge_reports(dirs: &[PathBuf]) -> Result<Merged, ReportError> {
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for d in dirs {
        match ReportFile::read(d) {
            Ok(r) => reports.push(r),
            Err(e @ ReportError::Schema { .. }) => return Err(e),
            Err(e) => failures.push((d.clone(), e)),
        }
    }
    if reports.is_empty() {
        return Err(ReportError::NothingMerged);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string()];
    header.extend(reports.iter().map(|r| r.model.clone()));
    w.write_record(&header)?;
    let table: Vec<_> = reports.iter().map(ReportFile::rows).collect();
    for (i, (name, _, _)) in table[0].iter().enumerate() {
        let mut rec = vec![name.to_string()];
        for rows in &table {
            let (_, m, sd) = rows[i];
            rec.push(match (m, sd) {
                (Some(m), Some(sd)) if *name == "N_s" => format!("{m:.2}±{sd:.2}"),
                (Some(m), _) => format!("{m:.2}"),
                (None, _) => "N/A".to_string(),
            });
        }
        w.write_record(&rec)?;
    }
    let csv = String::from_utf8(
        w.into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?,
    )
    .expect("utf-8");
    Ok(Merged {
        csv,
        columns: header[1..].to_vec(),
        failures,
    })
}

/// One line of the training log: episode outcome plus each fleet's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: u64,
    pub total_reward: f64,
    pub n_success: usize,
    pub nmac_total: u32,
    pub steps: u32,
    pub a_policy: String,
    pub a_mean_reward: f64,
    pub a_policy_loss: Option<f64>,
    pub a_value_loss: Option<f64>,
    pub a_entropy: Option<f64>,
    pub a_nmac: usize,
    pub a_success: usize,
    pub b_policy: String,
    pub b_mean_reward: f64,
    pub b_policy_loss: Option<f64>,
    pub b_value_loss: Option<f64>,
    pub b_entropy: Option<f64>,
    pub b_nmac: usize,
    pub b_success: usize,
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainLogRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(ReportError::from))
        .collect()
}

/// Trajectory CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub episode: u64,
    pub step: u32,
    pub sim_time: f64,
    pub agent_id: usize,
    pub fleet: String,
    pub route: String,
    pub arc_before: f64,
    pub speed_before: f64,
    pub action: String,
    pub x: f64,
    pub y: f64,
    pub arc: f64,
    pub speed: f64,
    pub reward: f64,
    pub status: String,
}

impl TrajectoryRow {
    pub fn new(episode: u64, r: &StepRecord) -> Self {
        Self {
            episode,
            step: r.step,
            sim_time: r.sim_time,
            agent_id: r.agent_id,
            fleet: r.fleet.to_string(),
            route: r.route.as_str().to_string(),
            arc_before: r.arc_before,
            speed_before: r.speed_before,
            action: r.action.label().to_string(),
            x: r.x,
            y: r.y,
            arc: r.arc,
            speed: r.speed,
            reward: r.reward,
            status: format!("{:?}", r.status),
        }
    }
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(ReportError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use deconflict_core::metrics::{aggregate, EpisodeMetrics};

    fn report(model: &str, fairness_defined: bool) -> ReportFile {
        let e = EpisodeMetrics {
            n_success: 19,
            nmac_by_pair: [0, 1, 0],
            nmac_by_bottleneck: [0, 0, 1],
            mission_times: [
                vec![300.0],
                if fairness_defined {
                    vec![330.0]
                } else {
                    vec![]
                },
            ],
            ..EpisodeMetrics::default()
        };
        ReportFile::new(model, 1, true, &aggregate(&[e]).unwrap())
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = report("Random(X)+Random(Y)", true);
        r.write(dir.path()).unwrap();
        assert_eq!(ReportFile::read(dir.path()).unwrap(), r);
        let csv = std::fs::read_to_string(dir.path().join(REPORT_CSV)).unwrap();
        let metrics: Vec<&str> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(
            metrics,
            [
                "AA",
                "AB",
                "BB",
                "M1",
                "M2",
                "IN",
                "Total",
                "N_s",
                "R_bar_x1e3",
                "T_A_min",
                "T_B_min",
                "F_t",
                "total_reward",
                "steps"
            ]
        );
    }

    #[test]
    fn undefined_fairness_is_na() {
        let r = report("m", false);
        assert!(r.to_csv().contains("F_t,N/A,N/A"));
    }

    #[test]
    fn merge_keeps_good_dirs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let missing = tempfile::tempdir().unwrap();
        report("A-model", true).write(a.path()).unwrap();
        report("B-model", false).write(b.path()).unwrap();
        let dirs = vec![a.path().into(), missing.path().into(), b.path().into()];
        let m = merge_reports(&dirs).unwrap();
        assert_eq!(m.columns, ["A-model", "B-model"]);
        assert_eq!(m.failures.len(), 1);
        assert_eq!(m.failures[0].0, missing.path());
        let lines: Vec<&str> = m.csv.lines().collect();
        assert_eq!(lines[0], "metric,A-model,B-model");
        assert!(lines.iter().any(|l| l.starts_with("N_s,19.00±0.00")));
        assert!(lines
            .iter()
            .any(|l| l.starts_with("F_t,") && l.ends_with("N/A")));
    }

    #[test]
    fn single_directory_gives_single_column() {
        let a = tempfile::tempdir().unwrap();
        report("only", true).write(a.path()).unwrap();
        let m = merge_reports(&[a.path().into()]).unwrap();
        assert_eq!(m.columns, ["only"]);
    }

    #[test]
    fn schema_mismatch_aborts() {
        let a = tempfile::tempdir().unwrap();
        let mut r = report("old", true);
        r.schema_version = 0;
        std::fs::write(a.path().join(REPORT_JSON), r.to_json()).unwrap();
        assert!(matches!(
            merge_reports(&[a.path().into()]),
            Err(ReportError::Schema { found: 0, .. })
        ));
    }

    #[test]
    fn nothing_to_merge() {
        let a = tempfile::tempdir().unwrap();
        assert!(matches!(
            merge_reports(&[a.path().into()]),
            Err(ReportError::NothingMerged)
        ));
    }
}
