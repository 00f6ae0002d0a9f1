//! Experiment results, their CSV forms and the summary table.
//!
//! Files written for one experiment:
//!
//! * `report.csv`: one row per method and repetition.
//! * `summary.csv`: one row per method in declared order.
//! * `timings.csv`: wall time per run, kept apart so the two files above are
//!   byte-identical across reruns.
//! * `config.txt`: the canonical configuration with its hash.
//! * `traces/<method>_rep<k>.csv`: solver residual history of each run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rbds_core::matrix::write_atomic;
use rbds_core::solver::{trace_to_csv, IterationRecord};
use rbds_core::{Error, Result};

pub const RUN_HEADER: &str =
    "method,rep,seed,accuracy,iterations,converged,offblock_ratio,status,config_hash";
pub const SUMMARY_HEADER: &str =
    "method,mean_accuracy,std_accuracy,mean_iterations,convergence_rate,offblock_ratio,config_hash";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// Non-finite values appeared in the solver.
    Diverged,
    /// A linear system could not be factored.
    Numeric,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
            RunStatus::Numeric => "numeric",
        }
    }
}

impl FromStr for RunStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "diverged" => Ok(RunStatus::Diverged),
            "numeric" => Ok(RunStatus::Numeric),
            other => Err(Error::Config(format!("unknown run status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: String,
    pub rep: usize,
    pub seed: u64,
    /// Zero for runs that failed.
    pub accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// NaN for runs that failed.
    pub offblock_ratio: f64,
    pub status: RunStatus,
    pub wall_time_s: f64,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub mean_accuracy: f64,
    /// Sample standard deviation; zero for a single repetition.
    pub std_accuracy: f64,
    pub mean_iterations: f64,
    pub convergence_rate: f64,
    /// Mean over runs with a finite ratio, NaN if there are none.
    pub offblock_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub config_text: String,
    /// Declared method order.
    pub methods: Vec<String>,
    /// Sorted by method order, then repetition.
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.methods
            .iter()
            .filter_map(|m| {
                let runs: Vec<&RunRecord> = self.runs.iter().filter(|r| &r.method == m).collect();
                if runs.is_empty() {
                    return None;
                }
                let n = runs.len() as f64;
                let mean = runs.iter().map(|r| r.accuracy).sum::<f64>() / n;
                let std = if runs.len() > 1 {
                    (runs
                        .iter()
                        .map(|r| (r.accuracy - mean).powi(2))
                        .sum::<f64>()
                        / (n - 1.0))
                        .sqrt()
                } else {
                    0.0
                };
                let finite: Vec<f64> = runs
                    .iter()
                    .map(|r| r.offblock_ratio)
                    .filter(|v| v.is_finite())
                    .collect();
                let offblock = if finite.is_empty() {
                    f64::NAN
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                };
                Some(SummaryRow {
                    method: m.clone(),
                    mean_accuracy: mean,
                    std_accuracy: std,
                    mean_iterations: runs.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
                    convergence_rate: runs.iter().filter(|r| r.converged).count() as f64 / n,
                    offblock_ratio: offblock,
                })
            })
            .collect()
    }

    pub fn mean_accuracy(&self, method: &str) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.method == method)
            .map(|s| s.mean_accuracy)
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from(RUN_HEADER);
        out.push('\n');
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                r.rep,
                r.seed,
                r.accuracy,
                r.iterations,
                r.converged,
                r.offblock_ratio,
                r.status.name(),
                self.config_hash
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for s in self.summary() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.method,
                s.mean_accuracy,
                s.std_accuracy,
                s.mean_iterations,
                s.convergence_rate,
                s.offblock_ratio,
                self.config_hash
            );
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("method,rep,wall_time_s\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{:.6}", r.method, r.rep, r.wall_time_s);
        }
        out
    }

    /// Fixed-width summary table.
    pub fn render_table(&self) -> String {
        let rows = self.summary();
        let width = rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>13}  {:>8}  {:>15}  {:>16}  {:>14}",
            "method",
            "mean_accuracy",
            "std",
            "mean_iterations",
            "convergence_rate",
            "offblock_ratio"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>13.4}  {:>8.4}  {:>15.1}  {:>16.2}  {:>14.3e}",
                r.method,
                r.mean_accuracy,
                r.std_accuracy,
                r.mean_iterations,
                r.convergence_rate,
                r.offblock_ratio
            );
        }
        let _ = writeln!(out, "config {}", self.config_hash);
        out
    }

    /// Rebuilds a report from `report.csv`. Wall times and traces are not
    /// part of that file and come back empty.
    pub fn from_runs_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == RUN_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    message: format!("expected header `{RUN_HEADER}`"),
                })
            }
        }
        let mut runs = Vec::new();
        let mut methods: Vec<String> = Vec::new();
        let mut hash: Option<String> = None;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let err = |column: usize, message: String| Error::Parse {
                line: i + 1,
                column,
                message,
            };
            if fields.len() != 9 {
                return Err(err(1, format!("expected 9 fields, got {}", fields.len())));
            }
            fn field<T: FromStr>(
                fields: &[&str],
                k: usize,
            ) -> std::result::Result<T, (usize, String)> {
                fields[k]
                    .parse()
                    .map_err(|_| (k + 1, format!("cannot parse `{}`", fields[k])))
            }
            let parsed = (|| {
                Ok::<_, (usize, String)>(RunRecord {
                    method: fields[0].to_string(),
                    rep: field(&fields, 1)?,
                    seed: field(&fields, 2)?,
                    accuracy: field(&fields, 3)?,
                    iterations: field(&fields, 4)?,
                    converged: field(&fields, 5)?,
                    offblock_ratio: field(&fields, 6)?,
                    status: fields[7].parse().map_err(|e: Error| (8, e.to_string()))?,
                    wall_time_s: 0.0,
                    trace: Vec::new(),
                })
            })()
            .map_err(|(c, m)| err(c, m))?;
            match &hash {
                None => hash = Some(fields[8].to_string()),
                Some(h) if h != fields[8] => {
                    return Err(err(9, "rows carry different config hashes".into()))
                }
                Some(_) => {}
            }
            if !methods.contains(&parsed.method) {
                methods.push(parsed.method.clone());
            }
            runs.push(parsed);
        }
        let config_hash = hash.ok_or_else(|| Error::Validation("report has no rows".into()))?;
        Ok(Self {
            config_hash,
            config_text: String::new(),
            methods,
            runs,
        })
    }

    /// Writes every output file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path, traces: bool) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("report.csv"), self.runs_csv().as_bytes())?;
        write_atomic(&dir.join("summary.csv"), self.summary_csv().as_bytes())?;
        write_atomic(&dir.join("timings.csv"), self.timings_csv().as_bytes())?;
        let echo = format!("# config_hash={}\n{}", self.config_hash, self.config_text);
        write_atomic(&dir.join("config.txt"), echo.as_bytes())?;
        if traces {
            let tdir = dir.join("traces");
            fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
            for r in &self.runs {
                let name = format!("{}_rep{}.csv", file_stem(&r.method), r.rep);
                write_atomic(&tdir.join(name), trace_to_csv(&r.trace).as_bytes())?;
            }
        }
        Ok(())
    }
}

/// Method name with anything outside `[A-Za-z0-9_-]` replaced by `_`.
pub fn file_stem(method: &str) -> String {
    method
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
