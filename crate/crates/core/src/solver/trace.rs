use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub const TRACE_HEADER: &str =
    "elapsed_seconds,best_feasible_value,best_modified_value,steps,least_penalty_value";

/// One sample of search progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub elapsed_seconds: f64,
    /// Empty until a feasible vector has been seen.
    pub best_feasible_value: Option<f64>,
    pub best_modified_value: f64,
    pub steps: u64,
    pub least_penalty_value: f64,
}

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TracePoint]) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for t in trace {
        let feasible = t
            .best_feasible_value
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{:.6},{},{},{},{}",
            t.elapsed_seconds, feasible, t.best_modified_value, t.steps, t.least_penalty_value
        )?;
    }
    Ok(())
}

pub fn trace_to_csv(trace: &[TracePoint]) -> String {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace csv is ascii")
}
