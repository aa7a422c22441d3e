//! Line-oriented trace files.
//!
//! ```text
//! # dsbo-trace v1 run_id=3 suite=mnd variant=DBO objective=mnd:3 dim=3 budget=30
//! run_id,variant,event_kind,iteration,point,y,incumbent
//! 3,DBO,evaluation,0,0.01;0.01;0.01,-0.0213,-0.0198
//! 3,DBO,virtual_added,1,1;0.4;0.7,,-0.0198
//! ```
//!
//! Reals use the shortest representation that parses back to the same value,
//! so a written trace reads back identically.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use dsbo::bo::{EventKind, TraceEvent, Variant};
use dsbo::objectives::Family;

pub const SCHEMA: &str = "dsbo-trace v1";
pub const COLUMNS: &str = "run_id,variant,event_kind,iteration,point,y,incumbent";

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub run_id: usize,
    pub suite: Family,
    pub variant: Variant,
    pub objective: String,
    pub dim: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

fn join_point(p: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in p.iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(mut w: W, header: &TraceHeader, events: &[TraceEvent]) -> std::io::Result<()> {
    let h = header;
    writeln!(
        w,
        "# {SCHEMA} run_id={} suite={} variant={} objective={} dim={} budget={}",
        h.run_id, h.suite, h.variant, h.objective, h.dim, h.budget
    )?;
    writeln!(w, "{COLUMNS}")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            h.run_id,
            h.variant,
            e.kind,
            e.iteration,
            join_point(&e.point),
            opt(e.y),
            opt(e.incumbent)
        )?;
    }
    Ok(())
}

fn format_err(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Format { line, message: message.into() }
}

fn parse_header(line: &str) -> Result<TraceHeader, TraceError> {
    let rest = line
        .strip_prefix("# ")
        .and_then(|r| r.strip_prefix(SCHEMA))
        .ok_or_else(|| format_err(1, format!("expected header starting with `# {SCHEMA}`")))?;
    let mut fields = std::collections::HashMap::new();
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| format_err(1, format!("bad header field {kv:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format_err(1, format!("header lacks `{k}`")));
    let num = |k: &str| -> Result<usize, TraceError> {
        get(k)?.parse().map_err(|_| format_err(1, format!("header `{k}` is not an integer")))
    };
    Ok(TraceHeader {
        run_id: num("run_id")?,
        suite: get("suite")?.parse().map_err(|e: dsbo::Error| format_err(1, e.to_string()))?,
        variant: get("variant")?.parse().map_err(|e: dsbo::Error| format_err(1, e.to_string()))?,
        objective: get("objective")?.to_string(),
        dim: num("dim")?,
        budget: num("budget")?,
    })
}

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64, TraceError> {
    s.parse().map_err(|_| format_err(line, format!("bad {what} {s:?}")))
}

fn parse_opt(s: &str, line: usize, what: &str) -> Result<Option<f64>, TraceError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, line, what).map(Some)
    }
}

pub fn read_trace<R: BufRead>(r: R) -> Result<TraceFile, TraceError> {
    let mut lines = r.lines();
    let header = parse_header(&lines.next().ok_or_else(|| format_err(1, "empty trace"))??)?;
    if lines.next().transpose()?.as_deref() != Some(COLUMNS) {
        return Err(format_err(2, format!("expected column line `{COLUMNS}`")));
    }
    let mut events = Vec::new();
    for (i, l) in lines.enumerate() {
        let n = i + 3;
        let l = l?;
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 7 {
            return Err(format_err(n, format!("expected 7 fields, got {}", f.len())));
        }
        if f[0] != header.run_id.to_string() || f[1] != header.variant.to_string() {
            return Err(format_err(n, "run_id/variant disagree with the header"));
        }
        let point = f[4].split(';').map(|v| parse_f64(v, n, "coordinate")).collect::<Result<Vec<_>, _>>()?;
        if point.len() != header.dim {
            return Err(format_err(n, format!("point has {} coordinates, header says {}", point.len(), header.dim)));
        }
        events.push(TraceEvent {
            iteration: f[3].parse().map_err(|_| format_err(n, format!("bad iteration {:?}", f[3])))?,
            kind: f[2].parse().map_err(|e: dsbo::Error| format_err(n, e.to_string()))?,
            point,
            y: parse_opt(f[5], n, "y")?,
            incumbent: parse_opt(f[6], n, "incumbent")?,
        });
    }
    Ok(TraceFile { header, events })
}

impl TraceFile {
    pub fn evaluation_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Evaluation).count()
    }
}
