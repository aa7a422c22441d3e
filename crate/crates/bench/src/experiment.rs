//! Replicated runs: `runs x variants` jobs on a bounded worker pool.
//!
//! Run `i` uses seed `base_seed + i` for both the objective instance and the
//! optimizer, so the variants of one run are paired.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dsbo::bo::{self, BoTrace, Variant};
use dsbo::objectives::{make_objective, Family, Objective};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::trace_io::{write_trace, TraceHeader};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{0} already exists; pass --force to overwrite")]
    WouldOverwrite(PathBuf),
    #[error("cannot prepare output directory {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub fn trace_path(out: &Path, suite: Family, variant: Variant, run: usize) -> PathBuf {
    out.join(format!("{suite}_{}_{run:03}.trace", variant.to_string().to_lowercase()))
}

fn failure_path(trace: &Path) -> PathBuf {
    trace.with_extension("failed")
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run: usize,
    pub variant: Variant,
    pub path: PathBuf,
    pub objective: String,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct ExperimentReport {
    /// In (run, variant) order regardless of completion order.
    pub outcomes: Vec<RunOutcome>,
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some())
    }

    pub fn all_succeeded(&self) -> bool {
        self.failures().next().is_none()
    }
}

fn write_file(path: &Path, header: &TraceHeader, trace: &BoTrace, error: Option<&str>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(e) = error {
        writeln!(w, "# error: {e}")?;
    }
    write_trace(&mut w, header, &trace.events)?;
    w.flush()
}

fn run_one(cfg: &ExperimentConfig, run: usize, variant: Variant) -> RunOutcome {
    let seed = cfg.base_seed + run as u64;
    let path = trace_path(&cfg.out, cfg.suite, variant, run);
    let started = Instant::now();
    let outcome = |objective: String, error: Option<String>| RunOutcome {
        run,
        variant,
        path: path.clone(),
        objective,
        seconds: started.elapsed().as_secs_f64(),
        error,
    };
    let objective = match make_objective(cfg.suite, seed) {
        Ok(o) => o,
        Err(e) => return outcome(String::new(), Some(format!("cannot build objective: {e}"))),
    };
    let header = TraceHeader {
        run_id: run,
        suite: cfg.suite,
        variant,
        objective: objective.id.clone(),
        dim: objective.dim(),
        budget: cfg.budget,
    };
    let (trace, error) = match bo::run(&objective, &cfg.bo_config(variant, seed)) {
        Ok(t) => (t, None),
        Err(e) => {
            let msg = e.to_string();
            (e.trace, Some(msg))
        }
    };
    let target = if error.is_some() { failure_path(&path) } else { path.clone() };
    let error = match write_file(&target, &header, &trace, error.as_deref()) {
        Ok(()) => error,
        Err(io) => Some(format!("cannot write {}: {io}", target.display())),
    };
    match &error {
        None => tracing::info!(run, %variant, seconds = started.elapsed().as_secs_f64(), "run finished"),
        Some(e) => tracing::error!(run, %variant, error = %e, "run failed"),
    }
    outcome(objective.id, error)
}

/// Runs every (run, variant) job and writes one trace per job into
/// `cfg.out`. Existing traces are only replaced when `force` is set.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<ExperimentReport, ExperimentError> {
    std::fs::create_dir_all(&cfg.out).map_err(|source| ExperimentError::Io { path: cfg.out.clone(), source })?;
    let jobs: Vec<(usize, Variant)> =
        (0..cfg.runs).flat_map(|r| cfg.variants.iter().map(move |v| (r, *v))).collect();
    if !force {
        for (r, v) in &jobs {
            let p = trace_path(&cfg.out, cfg.suite, *v, *r);
            if p.exists() || failure_path(&p).exists() {
                return Err(ExperimentError::WouldOverwrite(p));
            }
        }
    }
    for (r, v) in &jobs {
        // A stale failure marker from an earlier attempt would be misleading.
        let _ = std::fs::remove_file(failure_path(&trace_path(&cfg.out, cfg.suite, *v, *r)));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let outcomes = pool.install(|| jobs.par_iter().map(|(r, v)| run_one(cfg, *r, *v)).collect());
    Ok(ExperimentReport { outcomes })
}
