//! Percentile curves of the incumbent across replicated runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use dsbo::bo::{EventKind, Variant};

use crate::trace_io::{read_trace, TraceError, TraceFile};

pub const CSV_HEADER: &str = "suite,variant,iteration,p25,p50,p75";

#[derive(Debug, thiserror::Error)]
pub enum AggregateError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("no trace files found in {0}")]
    Empty(PathBuf),
    #[error("mismatched budgets in suite {suite}: {first} has {first_budget}, {other} has {other_budget}")]
    BudgetMismatch { suite: String, first: PathBuf, first_budget: usize, other: PathBuf, other_budget: usize },
    #[error("{path}: trace is incomplete (iteration {iteration} has no evaluation)")]
    Incomplete { path: PathBuf, iteration: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub suite: String,
    pub variant: Variant,
    pub iteration: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// Percentile `p` in [0, 1] of sorted data, interpolating linearly between
/// order statistics at position `p * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Incumbent after the evaluation of each iteration `1..=budget`.
pub fn incumbent_curve(trace: &TraceFile) -> Result<Vec<f64>, usize> {
    let mut curve = vec![None; trace.header.budget];
    for e in &trace.events {
        if e.kind == EventKind::Evaluation && e.iteration >= 1 && e.iteration <= curve.len() {
            curve[e.iteration - 1] = e.incumbent;
        }
    }
    curve.iter().enumerate().map(|(i, v)| v.ok_or(i + 1)).collect()
}

/// Reads every `*.trace` file in `dir`, ordered by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, TraceFile)>, AggregateError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(AggregateError::Empty(dir.to_path_buf()));
    }
    paths
        .into_iter()
        .map(|p| {
            let f = File::open(&p)?;
            let t = read_trace(BufReader::new(f)).map_err(|source| AggregateError::Trace { path: p.clone(), source })?;
            Ok((p, t))
        })
        .collect()
}

/// Rows ordered by suite, variant and iteration. The result does not depend
/// on the order of `traces`.
pub fn aggregate(traces: &[(PathBuf, TraceFile)]) -> Result<Vec<AggregateRow>, AggregateError> {
    let mut order: Vec<&(PathBuf, TraceFile)> = traces.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    let mut budgets: BTreeMap<String, (&Path, usize)> = BTreeMap::new();
    let mut curves: BTreeMap<(String, Variant), Vec<Vec<f64>>> = BTreeMap::new();
    for (path, t) in order {
        let suite = t.header.suite.to_string();
        let (first, first_budget) = *budgets.entry(suite.clone()).or_insert((path, t.header.budget));
        if first_budget != t.header.budget {
            return Err(AggregateError::BudgetMismatch {
                suite,
                first: first.to_path_buf(),
                first_budget,
                other: path.clone(),
                other_budget: t.header.budget,
            });
        }
        let curve = incumbent_curve(t).map_err(|iteration| AggregateError::Incomplete { path: path.clone(), iteration })?;
        curves.entry((suite, t.header.variant)).or_default().push(curve);
    }
    let mut rows = Vec::new();
    for ((suite, variant), cs) in curves {
        let budget = cs[0].len();
        for it in 0..budget {
            let mut v: Vec<f64> = cs.iter().map(|c| c[it]).collect();
            v.sort_by(f64::total_cmp);
            rows.push(AggregateRow {
                suite: suite.clone(),
                variant,
                iteration: it + 1,
                p25: percentile(&v, 0.25),
                p50: percentile(&v, 0.5),
                p75: percentile(&v, 0.75),
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(mut w: W, rows: &[AggregateRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.suite, r.variant, r.iteration, r.p25, r.p50, r.p75)?;
    }
    Ok(())
}

/// Writes one CSV per suite. With a single suite the file is `out` itself;
/// otherwise each suite goes to `<stem>_<suite>.<ext>` next to `out`.
pub fn write_outputs(rows: &[AggregateRow], out: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut by_suite: BTreeMap<&str, Vec<AggregateRow>> = BTreeMap::new();
    for r in rows {
        by_suite.entry(r.suite.as_str()).or_default().push(r.clone());
    }
    let single = by_suite.len() == 1;
    let mut written = Vec::new();
    for (suite, rs) in by_suite {
        let path = if single {
            out.to_path_buf()
        } else {
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("aggregate");
            let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
            out.with_file_name(format!("{stem}_{suite}.{ext}"))
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(File::create(&path)?);
        write_csv(&mut f, &rs)?;
        f.flush()?;
        written.push(path);
    }
    Ok(written)
}
