//! Runs external SMT solvers on benchmark files with a wall-clock timeout
//! and tabulates verdicts and times.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

/// Placeholder replaced by the benchmark path in a command template.
pub const FILE_PLACEHOLDER: &str = "{file}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarnessError {
    #[error("solver spec `{0}` must look like NAME:COMMAND")]
    MalformedSpec(String),
    #[error("command template `{0}` must contain {FILE_PLACEHOLDER} exactly once")]
    Placeholder(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverSpec {
    pub name: String,
    /// Whitespace-separated program and arguments.
    pub template: String,
    pub timeout: Duration,
}

impl SolverSpec {
    pub fn new(name: &str, template: &str, timeout: Duration) -> Result<Self, HarnessError> {
        if template.matches(FILE_PLACEHOLDER).count() != 1 {
            return Err(HarnessError::Placeholder(template.to_string()));
        }
        Ok(SolverSpec {
            name: name.to_string(),
            template: template.to_string(),
            timeout,
        })
    }

    /// Parses `NAME:COMMAND`. A template without the placeholder gets the
    /// file appended as the last argument.
    pub fn parse(s: &str, timeout: Duration) -> Result<Self, HarnessError> {
        let (name, cmd) = s
            .split_once(':')
            .filter(|(n, c)| !n.trim().is_empty() && !c.trim().is_empty())
            .ok_or_else(|| HarnessError::MalformedSpec(s.to_string()))?;
        let cmd = cmd.trim();
        let template = if cmd.contains(FILE_PLACEHOLDER) {
            cmd.to_string()
        } else {
            format!("{cmd} {FILE_PLACEHOLDER}")
        };
        SolverSpec::new(name.trim(), &template, timeout)
    }

    fn argv(&self, file: &Path) -> Vec<String> {
        let f = file.to_string_lossy();
        self.template
            .split_whitespace()
            .map(|w| w.replace(FILE_PLACEHOLDER, &f))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Raw,
    Preprocessed,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Raw => "raw",
            Variant::Preprocessed => "preprocessed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverVerdict {
    Sat,
    Unsat,
    Unknown,
    Timeout,
    /// Unparseable output or abnormal exit, with the captured output.
    Error(String),
    /// The program could not be started.
    SpawnFailure(String),
}

impl SolverVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            SolverVerdict::Sat => "sat",
            SolverVerdict::Unsat => "unsat",
            SolverVerdict::Unknown => "unknown",
            SolverVerdict::Timeout => "timeout",
            SolverVerdict::Error(_) | SolverVerdict::SpawnFailure(_) => "error",
        }
    }

    pub fn is_decided(&self) -> bool {
        matches!(self, SolverVerdict::Sat | SolverVerdict::Unsat)
    }

    pub fn is_error(&self) -> bool {
        matches!(
            self,
            SolverVerdict::Error(_) | SolverVerdict::SpawnFailure(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub benchmark: String,
    pub variant: Variant,
    pub solver: String,
    pub verdict: SolverVerdict,
    pub seconds: f64,
}

/// First non-blank line must be exactly `sat`, `unsat` or `unknown`.
pub fn parse_verdict(stdout: &str) -> Option<SolverVerdict> {
    let line = stdout.lines().map(str::trim).find(|l| !l.is_empty())?;
    match line {
        "sat" => Some(SolverVerdict::Sat),
        "unsat" => Some(SolverVerdict::Unsat),
        "unknown" => Some(SolverVerdict::Unknown),
        _ => None,
    }
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = r {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Runs one solver on one file.
pub fn run_solver(spec: &SolverSpec, file: &Path, benchmark: &str, variant: Variant) -> RunRecord {
    let argv = spec.argv(file);
    let record = |verdict, seconds| RunRecord {
        benchmark: benchmark.to_string(),
        variant,
        solver: spec.name.clone(),
        verdict,
        seconds,
    };
    let start = Instant::now();
    let child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => {
            return record(
                SolverVerdict::SpawnFailure(format!("{}: {e}", argv[0])),
                start.elapsed().as_secs_f64(),
            )
        }
    };
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break Some(s),
            Ok(None) if start.elapsed() >= spec.timeout => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(_) => {
                let _ = child.kill();
                break None;
            }
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let Some(status) = status else {
        return record(SolverVerdict::Timeout, seconds);
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let verdict = match parse_verdict(&stdout) {
        Some(v) => v,
        None => SolverVerdict::Error(format!(
            "exit {status}; stdout: {}; stderr: {}",
            stdout.trim(),
            stderr.trim()
        )),
    };
    record(verdict, seconds)
}

/// One benchmark file to run under a variant label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub benchmark: String,
    pub variant: Variant,
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Per-solver rows followed by portfolio rows, in input order.
    pub rows: Vec<RunRecord>,
}

impl Report {
    pub fn solver_rows(&self) -> impl Iterator<Item = &RunRecord> {
        self.rows.iter().filter(|r| r.solver != PORTFOLIO)
    }

    /// Benchmarks where some decided verdicts contradict each other.
    pub fn disagreements(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in self.solver_rows() {
            if !r.verdict.is_decided() || out.contains(&r.benchmark) {
                continue;
            }
            let clash = self.solver_rows().any(|o| {
                o.benchmark == r.benchmark && o.verdict.is_decided() && o.verdict != r.verdict
            });
            if clash {
                out.push(r.benchmark.clone());
            }
        }
        out
    }

    /// True when every solver cell ended in an error.
    pub fn all_errored(&self) -> bool {
        let mut rows = self.solver_rows().peekable();
        rows.peek().is_some() && rows.all(|r| r.verdict.is_error())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["benchmark", "variant", "solver", "verdict", "seconds"])?;
        for r in &self.rows {
            wr.write_record([
                r.benchmark.as_str(),
                &r.variant.to_string(),
                r.solver.as_str(),
                r.verdict.label(),
                &format!("{:.3}", r.seconds),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Solver name used for the per-variant best-of row.
pub const PORTFOLIO: &str = "portfolio";

fn portfolio(benchmark: &str, variant: Variant, runs: &[RunRecord]) -> RunRecord {
    let best = runs
        .iter()
        .filter(|r| r.verdict.is_decided())
        .min_by(|a, b| a.seconds.total_cmp(&b.seconds));
    let (verdict, seconds) = match best {
        Some(r) => (r.verdict.clone(), r.seconds),
        None if runs.iter().any(|r| r.verdict == SolverVerdict::Timeout) => {
            let t = runs
                .iter()
                .filter(|r| r.verdict == SolverVerdict::Timeout)
                .map(|r| r.seconds)
                .fold(f64::INFINITY, f64::min);
            (SolverVerdict::Timeout, t)
        }
        None if runs.iter().any(|r| r.verdict == SolverVerdict::Unknown) => {
            (SolverVerdict::Unknown, 0.0)
        }
        None => (
            SolverVerdict::Error("no solver produced a verdict".into()),
            0.0,
        ),
    };
    RunRecord {
        benchmark: benchmark.to_string(),
        variant,
        solver: PORTFOLIO.to_string(),
        verdict,
        seconds,
    }
}

/// Runs every (cell, solver) pair on a pool of `workers` threads and
/// appends a portfolio row after each cell's solver rows.
pub fn compare(
    cells: &[Cell],
    solvers: &[SolverSpec],
    workers: usize,
) -> Result<Report, HarnessError> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let jobs: Vec<(&Cell, &SolverSpec)> = cells
        .iter()
        .flat_map(|c| solvers.iter().map(move |s| (c, s)))
        .collect();
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|(c, s)| run_solver(s, &c.file, &c.benchmark, c.variant))
            .collect()
    });
    let mut rows = Vec::with_capacity(runs.len() + cells.len());
    for (cell, chunk) in cells.iter().zip(runs.chunks(solvers.len().max(1))) {
        rows.extend_from_slice(chunk);
        if !solvers.is_empty() {
            rows.push(portfolio(&cell.benchmark, cell.variant, chunk));
        }
    }
    Ok(Report { rows })
}
