use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::TracePoint;

pub const PLOT_HEADER: &str = "run_id,elapsed,best_value";

/// Time a run first reached the target, if it did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeToTarget {
    pub run_id: usize,
    pub seconds: Option<f64>,
}

impl TimeToTarget {
    pub fn censored(&self) -> bool {
        self.seconds.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    /// Long-format CSV: one row per sample, then two `target` rows spanning
    /// the time axis at the target value.
    pub csv: String,
    pub time_to_target: Vec<TimeToTarget>,
}

/// The plotted value of a sample: the best feasible value, else the best
/// modified value.
pub fn plotted_value(t: &TracePoint) -> f64 {
    t.best_feasible_value.unwrap_or(t.best_modified_value)
}

/// Merges traces (run id = position) into plotting rows sorted by run and time.
pub fn emit_trace_plot_data(traces: &[Vec<TracePoint>], target: f64) -> Result<PlotData> {
    if traces.is_empty() {
        return Err(Error::invalid("no traces given"));
    }
    let mut csv = format!("{PLOT_HEADER}\n");
    let mut time_to_target = Vec::with_capacity(traces.len());
    let mut t_max: f64 = 0.0;
    for (run_id, trace) in traces.iter().enumerate() {
        let mut rows: Vec<&TracePoint> = trace.iter().collect();
        rows.sort_by(|a, b| a.elapsed_seconds.total_cmp(&b.elapsed_seconds));
        for t in &rows {
            let _ = writeln!(csv, "{run_id},{:.6},{}", t.elapsed_seconds, plotted_value(t));
            t_max = t_max.max(t.elapsed_seconds);
        }
        let hit = rows
            .iter()
            .find(|t| t.best_feasible_value.is_some_and(|v| v >= target))
            .map(|t| t.elapsed_seconds);
        time_to_target.push(TimeToTarget { run_id, seconds: hit });
    }
    let _ = writeln!(csv, "target,{:.6},{target}", 0.0);
    let _ = writeln!(csv, "target,{t_max:.6},{target}");
    Ok(PlotData { csv, time_to_target })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(t: f64, v: Option<f64>) -> TracePoint {
        TracePoint {
            elapsed_seconds: t,
            best_feasible_value: v,
            best_modified_value: v.unwrap_or(-1.0),
            steps: 0,
            least_penalty_value: 0.0,
        }
    }

    #[test]
    fn target_below_first_sample() {
        let d = emit_trace_plot_data(&[vec![point(0.5, Some(10.0)), point(1.0, Some(12.0))]], 3.0).unwrap();
        assert_eq!(d.time_to_target[0].seconds, Some(0.5));
    }

    #[test]
    fn unreached_target_is_censored() {
        let d = emit_trace_plot_data(&[vec![point(0.5, None), point(1.0, Some(2.0))]], 3.0).unwrap();
        assert!(d.time_to_target[0].censored());
    }

    #[test]
    fn rows_sorted_by_run_then_time() {
        let d = emit_trace_plot_data(
            &[
                vec![point(2.0, Some(5.0)), point(1.0, Some(4.0))],
                vec![point(0.5, Some(1.0))],
            ],
            4.5,
        )
        .unwrap();
        assert_eq!(
            d.csv,
            "run_id,elapsed,best_value\n0,1.000000,4\n0,2.000000,5\n1,0.500000,1\ntarget,0.000000,4.5\ntarget,2.000000,4.5\n"
        );
        assert_eq!(d.time_to_target[0].seconds, Some(2.0));
        assert!(d.time_to_target[1].censored());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(emit_trace_plot_data(&[], 1.0).is_err());
    }
}
