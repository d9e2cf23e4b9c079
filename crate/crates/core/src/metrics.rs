//! Tracking metrics, acceptance checks and replicated ensembles.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{aggregate, layout_of, simulate_with, EnsembleResult, RunSummary, SummaryBuilder, TraceRow};
use crate::graph::GaugePartition;
use crate::scenario::{AcceptanceCriteria, Scenario};
use crate::trace::{TraceError, TraceWriter};

/// Slack allowed in the row-wise check `||e~|| <= ||z|| / h`.
pub const ERROR_BOUND_SLACK: f64 = 1e-9;

/// `e~_i = y_i - S_i y_r` for every agent.
pub fn tracking_errors(row: &TraceRow, gauge: &GaugePartition) -> Vec<f64> {
    row.agents.iter().enumerate().map(|(i, a)| a.x[0] - gauge.sign(i) * row.leader).collect()
}

/// Steady-state bound on `||e~||` implied by the envelope: `sigma_inf sqrt(N) / h`.
pub fn steady_error_bound(sigma_inf: f64, agents: usize, gain_constant: f64) -> f64 {
    sigma_inf * (agents as f64).sqrt() / gain_constant
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub completed: bool,
    pub failure: Option<String>,
    pub failed_at: Option<f64>,
    pub inside_envelope: bool,
    /// `sup |z_i1|` over recorded `t >= from`, per agent.
    pub sup_abs_z: Vec<f64>,
    /// Largest `||e~|| - ||z|| / h` over recorded rows.
    pub worst_error_bound_gap: f64,
}

/// Everything reported about one ensemble. Time series live in the ensemble
/// mean CSV, not in the serialised summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryMetrics {
    pub scenario: String,
    pub runs: usize,
    pub completed: usize,
    /// Start of the window the steady-state statistics use.
    pub from: f64,
    pub error_bound: f64,
    pub all_inside_envelope: bool,
    /// Largest ensemble mean of `|z_i1|` over agents and recorded `t >= from`
    /// (NaN when nothing was recorded there).
    pub worst_mean_abs_z: f64,
    /// Largest ensemble mean of `||e~||` over recorded `t >= from`.
    pub worst_mean_error_norm: f64,
    pub per_run: Vec<RunMetrics>,
    pub checks: Vec<Check>,
    pub passed: bool,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub mean_abs_z: Vec<Vec<f64>>,
    #[serde(skip)]
    pub mean_error_norm: Vec<f64>,
}

fn worst_after(times: &[f64], values: impl Iterator<Item = f64>, from: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from)
        .map(|(_, v)| v)
        .fold(f64::NAN, f64::max)
}

fn run_metrics(r: &RunSummary, from: f64) -> RunMetrics {
    let agents = r.abs_z.first().map_or(0, Vec::len);
    let mut sup = vec![0.0; agents];
    for (t, zs) in r.times.iter().zip(&r.abs_z) {
        if *t >= from {
            for (s, z) in sup.iter_mut().zip(zs) {
                *s = f64::max(*s, *z);
            }
        }
    }
    RunMetrics {
        seed: r.seed,
        completed: r.completed(),
        failure: r.failure.clone(),
        failed_at: r.failed_at,
        inside_envelope: r.inside_envelope,
        sup_abs_z: sup,
        worst_error_bound_gap: r.worst_error_bound_gap,
    }
}

/// Reduces an ensemble and checks it against the scenario's thresholds.
pub fn summarize(scenario: &Scenario, ens: &EnsembleResult) -> SummaryMetrics {
    let cl = &scenario.closed_loop;
    let crit = scenario.acceptance();
    let from = crit.from.unwrap_or(cl.profile.ts);
    let per_run: Vec<RunMetrics> = ens.runs.iter().map(|r| run_metrics(r, from)).collect();
    let runs = per_run.len();
    let completed = per_run.iter().filter(|r| r.completed).count();
    let all_inside_envelope = per_run.iter().all(|r| r.inside_envelope);
    let worst_mean_abs_z = worst_after(
        &ens.times,
        ens.mean_abs_z.iter().map(|zs| zs.iter().cloned().fold(f64::NAN, f64::max)),
        from,
    );
    let worst_mean_error_norm = worst_after(&ens.times, ens.mean_error_norm.iter().cloned(), from);
    let checks = acceptance_checks(crit, scenario.strict_envelope(), &per_run, worst_mean_abs_z, worst_mean_error_norm);
    SummaryMetrics {
        scenario: scenario.name().to_string(),
        runs,
        completed,
        from,
        error_bound: steady_error_bound(cl.profile.sigma_inf, cl.agents(), cl.gain_constant),
        all_inside_envelope,
        worst_mean_abs_z,
        worst_mean_error_norm,
        passed: checks.iter().all(|c| c.passed),
        per_run,
        checks,
        times: ens.times.clone(),
        mean_abs_z: ens.mean_abs_z.clone(),
        mean_error_norm: ens.mean_error_norm.clone(),
    }
}

fn acceptance_checks(
    crit: &AcceptanceCriteria,
    strict: bool,
    runs: &[RunMetrics],
    worst_mean_abs_z: f64,
    worst_mean_error_norm: f64,
) -> Vec<Check> {
    let total = runs.len();
    let completed = runs.iter().filter(|r| r.completed).count();
    let mut checks = vec![Check::new(
        "runs completed",
        total > 0 && completed == total,
        format!("{completed}/{total}"),
    )];
    let gap = runs.iter().map(|r| r.worst_error_bound_gap).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new(
        "tracking error within consensus bound",
        runs.iter().all(|r| r.worst_error_bound_gap <= ERROR_BOUND_SLACK),
        format!("worst ||e|| - ||z||/h = {gap:.3e}"),
    ));
    if strict {
        let inside = runs.iter().filter(|r| r.inside_envelope).count();
        checks.push(Check::new("envelope held", inside == total, format!("{inside}/{total} runs")));
    }
    // statistics over zero completed runs are undefined, so they fail
    let have_means = completed > 0;
    if let Some(thr) = crit.mean_abs_z_below {
        checks.push(Check::new(
            "mean |z| below threshold",
            have_means && worst_mean_abs_z < thr,
            format!("worst mean {worst_mean_abs_z:.4} vs {thr}"),
        ));
    }
    if let Some(thr) = crit.run_sup_z_below {
        let frac = crit.run_fraction.unwrap_or(1.0);
        let good = runs
            .iter()
            .filter(|r| r.completed && r.sup_abs_z.iter().all(|s| *s < thr))
            .count();
        let need = (frac * total as f64 - 1e-9).ceil() as usize;
        checks.push(Check::new(
            "per-run sup |z| below threshold",
            total > 0 && good >= need,
            format!("{good}/{total} runs, need {need}"),
        ));
    }
    if let Some(thr) = crit.mean_error_norm_below {
        checks.push(Check::new(
            "mean tracking error below threshold",
            have_means && worst_mean_error_norm < thr,
            format!("worst mean {worst_mean_error_norm:.4} vs {thr}"),
        ));
    }
    checks
}

#[derive(Debug, Error)]
pub enum ReplicateError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("trace for seed {seed}: {source}")]
    Trace { seed: u64, source: TraceError },
    #[error("cannot serialise summary: {0}")]
    Summary(#[from] toml::ser::Error),
}

pub fn run_file_name(scenario: &str, seed: u64) -> String {
    format!("{scenario}_seed{seed}.csv")
}

pub const SUMMARY_FILE: &str = "summary.toml";
pub const MEAN_FILE: &str = "ensemble_mean.csv";

/// Runs seeds `seed .. seed + n_runs` in parallel. With `out` set, every run is
/// streamed to its own CSV and the summary files are written alongside.
pub fn replicate(
    scenario: &Scenario,
    n_runs: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<SummaryMetrics, ReplicateError> {
    let cl = &scenario.closed_loop;
    let cfg = &scenario.integrator;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|source| ReplicateError::Io { path: dir.to_path_buf(), source })?;
    }
    let runs: Vec<Result<RunSummary, ReplicateError>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let mut b = SummaryBuilder::for_loop(cl, s);
            let Some(dir) = out else {
                let res = simulate_with(cl, cfg, s, |row| b.push(&row));
                return Ok(b.finish(res.err().as_ref()));
            };
            let path = dir.join(run_file_name(scenario.name(), s));
            let file = File::create(&path).map_err(|source| ReplicateError::Io { path: path.clone(), source })?;
            let trace_err = |source| ReplicateError::Trace { seed: s, source };
            let mut w = TraceWriter::new(BufWriter::new(file), layout_of(cl)).map_err(trace_err)?;
            let mut first_err = None;
            let res = simulate_with(cl, cfg, s, |row| {
                b.push(&row);
                if let Err(e) = w.write_row(&row) {
                    first_err.get_or_insert(e);
                }
            });
            if let Some(e) = first_err {
                return Err(trace_err(e));
            }
            let buf = w.finish().map_err(trace_err)?;
            buf.into_inner().map_err(|e| ReplicateError::Io { path: path.clone(), source: e.into_error() })?;
            Ok(b.finish(res.err().as_ref()))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(scenario, &aggregate(runs));
    if let Some(dir) = out {
        write_summary(dir, &summary)?;
    }
    Ok(summary)
}

pub fn write_summary(dir: &Path, summary: &SummaryMetrics) -> Result<(), ReplicateError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReplicateError::Io { path, source }
    };
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, toml::to_string(summary)?).map_err(io(&path))?;

    let path = dir.join(MEAN_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(io(&path))?);
    let agents = summary.mean_abs_z.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=agents).map(|i| format!("mean_abs_z{i}")));
    header.push("mean_error_norm".into());
    writeln!(w, "{}", header.join(",")).map_err(io(&path))?;
    for (k, t) in summary.times.iter().enumerate() {
        let mut cols = vec![format!("{t:?}")];
        cols.extend(summary.mean_abs_z[k].iter().map(|v| format!("{v:?}")));
        cols.push(format!("{:?}", summary.mean_error_norm[k]));
        writeln!(w, "{}", cols.join(",")).map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;
    Ok(())
}
