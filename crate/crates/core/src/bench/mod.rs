//! Random instances, the time-to-target speedup protocol and plot data.

pub mod generator;
pub mod plot;
pub mod speedup;

pub use generator::{generate_instance, GeneratorSpec};
pub use plot::{emit_trace_plot_data, PlotData, TimeToTarget, PLOT_HEADER};
pub use speedup::{
    measure_speedup, reached, run_seed, target_from, RunRecord, Runner, SpeedupReport, SpeedupSpec,
};
