//! Time-to-target comparison of two run configurations.
//!
//! A pilot run with a fixed time budget sets the target. Both sides then
//! run `k` times each, stopping as soon as the target is met; the run
//! times are compared. A run that hits the safety cap is censored and
//! counted at the cap.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{run_in_process, ClusterConfig};
use crate::error::{Error, Result};
use crate::model::Problem;
use crate::solver::{solve, ClockKind, Solution, SolverConfig, Target, TracePoint};

/// A way of running the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "runner", rename_all = "snake_case")]
pub enum Runner {
    Solver(SolverConfig),
    /// In-process cluster of `nodes` nodes.
    Cluster { config: ClusterConfig, nodes: usize },
}

impl Runner {
    /// Processors or nodes used, the divisor of the efficiency.
    pub fn resources(&self) -> usize {
        match self {
            Runner::Solver(c) => c.workers,
            Runner::Cluster { config, nodes } => nodes * config.solver.workers,
        }
    }

    /// One run with a fresh seed, stopping at `target` or after `cap` seconds.
    pub fn run(&self, problem: &Problem, seed: u64, target: Option<Target>, cap: f64) -> Result<Solution> {
        let tune = |c: &SolverConfig| SolverConfig {
            seed,
            target,
            max_steps: None,
            no_improve_stop: None,
            max_time_seconds: Some(cap),
            clock: ClockKind::Wall,
            ..c.clone()
        };
        match self {
            Runner::Solver(c) => solve(problem, &tune(c)),
            Runner::Cluster { config, nodes } => {
                let config = ClusterConfig {
                    solver: tune(&config.solver),
                    quiet_period_seconds: cap,
                    ..config.clone()
                };
                Ok(run_in_process(problem, &config, *nodes, None)?.result.solution)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupSpec {
    pub k: usize,
    pub pilot_seconds: f64,
    /// Runs are cut off at `cap_factor * pilot_seconds`.
    pub cap_factor: f64,
    pub seed: u64,
}

impl Default for SpeedupSpec {
    fn default() -> Self {
        Self {
            k: 10,
            pilot_seconds: 60.0,
            cap_factor: 100.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub seconds: f64,
    pub reached: bool,
    /// Best feasible value, or the least penalty when none was feasible.
    pub value: f64,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

impl RunRecord {
    pub fn censored(&self) -> bool {
        !self.reached
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub k: usize,
    pub target: Target,
    pub pilot_seconds: f64,
    pub cap_seconds: f64,
    pub serial: Vec<RunRecord>,
    pub parallel: Vec<RunRecord>,
    pub serial_mean: f64,
    pub parallel_mean: f64,
    /// `serial_mean / parallel_mean`.
    pub speedup: f64,
    pub resources: usize,
    /// `speedup / resources`.
    pub efficiency: f64,
    /// Runs on either side that hit the cap.
    pub censored: usize,
    pub serial_runner: Runner,
    pub parallel_runner: Runner,
}

/// Seed of the `i`-th timed run; both sides share it.
pub fn run_seed(master: u64, i: usize) -> u64 {
    crate::cluster::node_seed(master ^ 0x5EED_0000_0000_0000, i + 1)
}

/// The stop rule met by a solution: its best feasible value, or for an
/// instance with nothing feasible found, its least penalty.
pub fn target_from(solution: &Solution) -> Target {
    if solution.feasible {
        Target::Objective(solution.f)
    } else {
        Target::Penalty(solution.least_penalty)
    }
}

/// Whether `solution` satisfies `target`.
pub fn reached(solution: &Solution, target: Target) -> bool {
    match target {
        Target::Objective(t) => solution.feasible && solution.f >= t,
        Target::Penalty(t) => solution.least_penalty <= t,
    }
}

fn timed(runner: &Runner, problem: &Problem, seed: u64, target: Target, cap: f64) -> Result<RunRecord> {
    let start = Instant::now();
    let s = runner.run(problem, seed, Some(target), cap)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        seed,
        seconds: seconds.max(f64::MIN_POSITIVE),
        reached: reached(&s, target),
        value: if s.feasible { s.f } else { s.least_penalty },
        trace: s.trace,
    })
}

fn mean_time(runs: &[RunRecord], cap: f64) -> f64 {
    let sum: f64 = runs.iter().map(|r| if r.reached { r.seconds } else { cap }).sum();
    sum / runs.len() as f64
}

/// Runs the pilot, then `spec.k` timed runs per side, one after another.
pub fn measure_speedup(
    problem: &Problem,
    serial: &Runner,
    parallel: &Runner,
    spec: &SpeedupSpec,
) -> Result<SpeedupReport> {
    if spec.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(spec.pilot_seconds > 0.0) || !(spec.cap_factor >= 1.0) {
        return Err(Error::invalid("pilot_seconds must be positive and cap_factor at least 1"));
    }
    let pilot = serial.run(problem, spec.seed, None, spec.pilot_seconds)?;
    let target = target_from(&pilot);
    let cap = spec.cap_factor * spec.pilot_seconds;
    let serial_runs = (0..spec.k)
        .map(|i| timed(serial, problem, run_seed(spec.seed, i), target, cap))
        .collect::<Result<Vec<_>>>()?;
    let parallel_runs = (0..spec.k)
        .map(|i| timed(parallel, problem, run_seed(spec.seed, i), target, cap))
        .collect::<Result<Vec<_>>>()?;
    let serial_mean = mean_time(&serial_runs, cap);
    let parallel_mean = mean_time(&parallel_runs, cap);
    let speedup = serial_mean / parallel_mean;
    let resources = parallel.resources().max(1);
    let censored = serial_runs.iter().chain(&parallel_runs).filter(|r| r.censored()).count();
    if censored > 0 {
        log::warn!("{censored} runs hit the {cap:.1} s cap");
    }
    Ok(SpeedupReport {
        k: spec.k,
        target,
        pilot_seconds: spec.pilot_seconds,
        cap_seconds: cap,
        serial: serial_runs,
        parallel: parallel_runs,
        serial_mean,
        parallel_mean,
        speedup,
        resources,
        efficiency: speedup / resources as f64,
        censored,
        serial_runner: serial.clone(),
        parallel_runner: parallel.clone(),
    })
}
