//! Acquisition pattern on the two-Gaussian objective, VBO next to DBO.

use std::io::Write;

use dsbo::bo::{self, BoConfig, EventKind, TraceEvent, Variant};
use dsbo::objectives::two_gaussian_2d;

pub const CSV_HEADER: &str = "variant,iteration,event_kind,x0,x1,y";

/// Runs VBO and DBO with a shared seed and returns their traces.
pub fn demo_traces(seed: u64, budget: usize) -> dsbo::Result<Vec<(Variant, Vec<TraceEvent>)>> {
    let f = two_gaussian_2d();
    [Variant::Vbo, Variant::Dbo]
        .into_iter()
        .map(|v| {
            let cfg = BoConfig { variant: v, budget, seed, ..BoConfig::default() };
            bo::run(&f, &cfg).map(|t| (v, t.events)).map_err(|e| e.source)
        })
        .collect()
}

/// One row per evaluation or virtual observation.
pub fn write_demo_csv<W: Write>(mut w: W, traces: &[(Variant, Vec<TraceEvent>)]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for (v, events) in traces {
        for e in events.iter().filter(|e| e.kind != EventKind::VirtualRemoved) {
            let y = e.y.map(|y| y.to_string()).unwrap_or_default();
            writeln!(w, "{v},{},{},{},{},{y}", e.iteration, e.kind, e.point[0], e.point[1])?;
        }
    }
    Ok(())
}
