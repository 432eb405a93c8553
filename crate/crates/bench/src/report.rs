//! Report types, aggregation and the JSON / CSV / markdown writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use avsvm::{Error, Result};

/// Mean and sample standard deviation over completed repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: None, sd: None };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self { mean: Some(mean), sd }
    }

    fn close_to(&self, other: &Stat) -> bool {
        fn eq(a: Option<f64>, b: Option<f64>) -> bool {
            match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                (None, None) => true,
                _ => false,
            }
        }
        eq(self.mean, other.mean) && eq(self.sd, other.sd)
    }

    /// `mean (sd)` with one decimal, `n/a` when nothing completed.
    pub fn cell(&self) -> String {
        match (self.mean, self.sd) {
            (Some(m), Some(s)) => format!("{m:.1} ({s:.1})"),
            (Some(m), None) => format!("{m:.1} (-)"),
            _ => "n/a".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub complete: bool,
    pub train_error: Option<f64>,
    pub test_error: Option<f64>,
    pub sv_percent: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub completed: usize,
    pub train_error: Stat,
    pub test_error: Stat,
    pub sv_percent: Stat,
}

impl Summary {
    pub fn of(reps: &[RepetitionResult]) -> Self {
        let pick = |f: fn(&RepetitionResult) -> Option<f64>| -> Vec<f64> {
            reps.iter().filter(|r| r.complete).filter_map(f).collect()
        };
        Self {
            completed: reps.iter().filter(|r| r.complete).count(),
            train_error: Stat::of(&pick(|r| r.train_error)),
            test_error: Stat::of(&pick(|r| r.test_error)),
            sv_percent: Stat::of(&pick(|r| r.sv_percent)),
        }
    }

    fn matches(&self, other: &Summary) -> bool {
        self.completed == other.completed
            && self.train_error.close_to(&other.train_error)
            && self.test_error.close_to(&other.test_error)
            && self.sv_percent.close_to(&other.sv_percent)
    }
}

/// One method at one value of C across all repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub kernel: String,
    pub c: f64,
    pub repetitions: Vec<RepetitionResult>,
    pub summary: Summary,
}

/// Which runs represent a method in the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: String,
    pub default_c: f64,
    /// C whose mean test error is nearest the published value, if one exists.
    pub closest_c: Option<f64>,
    pub target_test_error: Option<f64>,
    /// C with the lowest mean test error.
    pub best_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub dataset: String,
    pub kernels: Vec<String>,
    pub combiner: String,
    pub normalization: String,
    pub c_default: f64,
    pub c_sweep: Vec<f64>,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub scaling: String,
    pub psd: String,
    pub kkt_tol: f64,
    pub max_iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config: ConfigEcho,
    pub complete: bool,
    pub runs: Vec<MethodRun>,
    pub selections: Vec<Selection>,
}

impl ExperimentReport {
    pub fn run(&self, method: &str, c: f64) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method && r.c == c)
    }

    pub fn selection(&self, method: &str) -> Option<&Selection> {
        self.selections.iter().find(|s| s.method == method)
    }

    /// Run used for `method` at the default C.
    pub fn default_run(&self, method: &str) -> Option<&MethodRun> {
        let s = self.selection(method)?;
        self.run(method, s.default_c)
    }

    /// Run nearest the published value, falling back to the default.
    pub fn closest_run(&self, method: &str) -> Option<&MethodRun> {
        let s = self.selection(method)?;
        self.run(method, s.closest_c.unwrap_or(s.default_c))
    }

    /// Recomputes every summary from its repetitions.
    pub fn check_aggregates(&self) -> Result<()> {
        for run in &self.runs {
            if !run.summary.matches(&Summary::of(&run.repetitions)) {
                return Err(Error::InvalidParameter(format!(
                    "summary of {} at C={} disagrees with its repetitions",
                    run.method, run.c
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.check_aggregates()?;
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<report>".into(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// One row per run and repetition.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidParameter(e.to_string());
        w.write_record([
            "method",
            "kernel",
            "c",
            "repetition",
            "complete",
            "train_error",
            "test_error",
            "sv_percent",
        ])
        .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for run in &self.runs {
            for r in &run.repetitions {
                w.write_record([
                    run.method.clone(),
                    run.kernel.clone(),
                    run.c.to_string(),
                    r.repetition.to_string(),
                    r.complete.to_string(),
                    opt(r.train_error),
                    opt(r.test_error),
                    opt(r.sv_percent),
                ])
                .map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Table with `mean (sd)` cells: each method at the default C, then at
    /// the C nearest the published value when that differs.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| Method | C | Training error | Test error | % SV |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        let mut row = |label: &str, run: &MethodRun| {
            let _ = writeln!(
                out,
                "| {label} | {} | {} | {} | {} |",
                run.c,
                run.summary.train_error.cell(),
                run.summary.test_error.cell(),
                run.summary.sv_percent.cell()
            );
        };
        for s in &self.selections {
            if let Some(run) = self.run(&s.method, s.default_c) {
                row(&s.method, run);
            }
            if let Some(c) = s.closest_c.filter(|&c| c != s.default_c) {
                if let Some(run) = self.run(&s.method, c) {
                    row(&format!("{} (closest C)", s.method), run);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

/// Writes `report.json`, `report.csv` and `report.md` into `dir` (as
/// requested) and returns the written paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = match f {
            Format::Json => ("report.json", report.to_json()?),
            Format::Csv => ("report.csv", report.to_csv()?),
            Format::Markdown => ("report.md", report.to_markdown()),
        };
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        written.push(path);
    }
    Ok(written)
}
