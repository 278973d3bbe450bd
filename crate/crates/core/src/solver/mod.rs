//! The variant-probability search loop.
//!
//! Each step: optional rollback of the probability vector, generation and
//! scoring of a batch, selection of the best and worst vectors by the
//! modified objective, bookkeeping of the running maxima, and adaptation
//! toward the best vector. Batch evaluation may be spread over several
//! worker threads; see [`parallel`].

pub mod parallel;
pub mod trace;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{
    adapt_additive, adapt_multiplicative, full_rollback, partial_rollback, rollback_weight,
    should_rollback, AdaptConfig, Strategy,
};
use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::model::{Candidate, Problem};
use crate::sampler::{initial_probability, ProbabilityVector};

pub use parallel::{parallel_evaluate, BatchOutcome, Engine, Extrema};
pub use trace::{trace_to_csv, write_trace_csv, TracePoint, TRACE_HEADER};

/// A value the run stops at once reached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Target {
    /// Best feasible objective `>=` value.
    Objective(f64),
    /// Least penalty seen `<=` value.
    Penalty(f64),
}

/// Source of the `elapsed_seconds` readings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    Wall,
    /// Advances one microsecond per evaluated candidate. Makes time budgets
    /// and traces reproducible.
    Logical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeasibilityRetry {
    /// Steps without any feasible vector before the start probability is cut.
    pub steps: u64,
    pub factor: f64,
    pub max_retries: u32,
}

impl Default for FeasibilityRetry {
    fn default() -> Self {
        Self {
            steps: 200,
            factor: 0.5,
            max_retries: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Vectors generated per step.
    pub population: usize,
    pub max_steps: Option<u64>,
    pub max_time_seconds: Option<f64>,
    /// Stop after this many steps without a new `f^M` maximum.
    pub no_improve_stop: Option<u64>,
    pub target: Option<Target>,
    pub workers: usize,
    pub adapt: AdaptConfig,
    pub seed: u64,
    /// Overrides `sum |a_i|`.
    pub c_penalty: Option<f64>,
    /// Overrides the constraint-derived start probability.
    pub p0: Option<f64>,
    pub feasibility_retry: FeasibilityRetry,
    pub trace_every: u64,
    pub clock: ClockKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            population: 100,
            max_steps: Some(5000),
            max_time_seconds: None,
            no_improve_stop: None,
            target: None,
            workers: 1,
            adapt: AdaptConfig::default(),
            seed: 0,
            c_penalty: None,
            p0: None,
            feasibility_retry: FeasibilityRetry::default(),
            trace_every: 10,
            clock: ClockKind::Wall,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("population must be at least 2"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if self.max_steps.is_none() && self.max_time_seconds.is_none() && self.no_improve_stop.is_none() {
            return Err(Error::invalid(
                "set at least one of max_steps, max_time_seconds or no_improve_stop",
            ));
        }
        if let Some(t) = self.max_time_seconds {
            if !(t >= 0.0) {
                return Err(Error::invalid("max_time_seconds must be nonnegative"));
            }
        }
        if let Some(c) = self.c_penalty {
            if !(c > 0.0) {
                return Err(Error::invalid("c_penalty must be positive"));
            }
        }
        if let Some(p) = self.p0 {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid("p0 must lie in (0,1)"));
            }
        }
        if !(self.feasibility_retry.factor > 0.0 && self.feasibility_retry.factor < 1.0) {
            return Err(Error::invalid("feasibility_retry.factor must lie in (0,1)"));
        }
        if self.trace_every == 0 {
            return Err(Error::invalid("trace_every must be at least 1"));
        }
        self.adapt.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StepBudget,
    TimeBudget,
    NoImprovement,
    TargetReached,
    Cancelled,
    /// Cluster coordinator saw no improvement report for the quiet period.
    QuietPeriod,
    /// Cluster node received a stop message.
    StopRequested,
}

/// Running records of a search.
#[derive(Clone, Debug, Default)]
pub struct SolverState {
    /// Best vector with zero penalty, by `f`.
    pub best_feasible: Option<Candidate>,
    /// Best vector by `f^M`; its value never decreases.
    pub best_modified: Option<Candidate>,
    pub least_penalty: f64,
    pub steps_made: u64,
    /// Steps since `best_modified` last improved.
    pub steps_no_result: u64,
    pub evaluations: u64,
    pub full_rollbacks: u64,
    pub feasibility_retries: u32,
    pub trace: Vec<TracePoint>,
}

/// What one step did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub batch_best_f_m: f64,
    pub batch_worst_f_m: f64,
    pub batch_best_feasible_f: Option<f64>,
    pub improved_modified: bool,
    pub improved_feasible: bool,
    /// A stagnation reset happened before this step's batch.
    pub restarted: bool,
}

/// Decision taken when the stagnation test fires.
#[derive(Clone, Debug, PartialEq)]
pub enum Restart {
    /// Ordinary full rollback to `p0` (or to the mean, when adaptive).
    Reset,
    /// Replace the vector; its `p0` becomes the new reset value.
    To(ProbabilityVector),
    /// Keep the vector and start a fresh stagnation window.
    Continue,
}

/// Hook consulted whenever a full rollback is due.
pub trait StagnationHandler {
    fn on_stagnation(&mut self, solver: &Solver<'_>) -> Restart;
}

/// Always performs the ordinary full rollback.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlainReset;

impl StagnationHandler for PlainReset {
    fn on_stagnation(&mut self, _: &Solver<'_>) -> Restart {
        Restart::Reset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: u64,
    pub evaluations: u64,
    pub full_rollbacks: u64,
    pub feasibility_retries: u32,
    /// Not serialized so that result files stay reproducible.
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

/// Outcome of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Bits,
    /// Canonical (maximize-sense) objective.
    pub f: f64,
    pub f_p: f64,
    pub f_m: f64,
    pub feasible: bool,
    /// `f` in the problem's own sense.
    pub objective: f64,
    pub least_penalty: f64,
    pub stop_reason: StopReason,
    pub stats: RunStats,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

struct Clock {
    kind: ClockKind,
    start: Instant,
}

impl Clock {
    fn elapsed(&self, evaluations: u64) -> f64 {
        match self.kind {
            ClockKind::Wall => self.start.elapsed().as_secs_f64(),
            ClockKind::Logical => evaluations as f64 * 1e-6,
        }
    }
}

/// A search in progress over one problem.
pub struct Solver<'p> {
    problem: &'p Problem,
    config: SolverConfig,
    c_penalty: f64,
    pv: ProbabilityVector,
    reset_p0: f64,
    master: ChaCha8Rng,
    engine: Engine,
    clock: Clock,
    state: SolverState,
    // running f^M maxima of the current epoch, one per step
    epoch: Vec<f64>,
    epoch_steps: u64,
    steps_since_retry: u64,
    cancel: Option<Arc<AtomicBool>>,
}

impl<'p> Solver<'p> {
    pub fn new(problem: &'p Problem, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let c_penalty = config.c_penalty.unwrap_or_else(|| problem.penalty_coefficient());
        let p0 = config.p0.unwrap_or_else(|| initial_probability(problem));
        let pv = ProbabilityVector::uniform(problem.dim(), p0)?;
        let engine = Engine::new(config.workers)?;
        let master = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            problem,
            c_penalty,
            reset_p0: pv.p0(),
            pv,
            master,
            engine,
            clock: Clock {
                kind: config.clock,
                start: Instant::now(),
            },
            config,
            state: SolverState {
                least_penalty: f64::INFINITY,
                ..Default::default()
            },
            epoch: Vec::new(),
            epoch_steps: 0,
            steps_since_retry: 0,
            cancel: None,
        })
    }

    /// Stops the run at the next step boundary once `flag` is set.
    pub fn set_cancel_flag(&mut self, flag: Arc<AtomicBool>) {
        self.cancel = Some(flag);
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn probabilities(&self) -> &ProbabilityVector {
        &self.pv
    }

    pub fn penalty_coefficient(&self) -> f64 {
        self.c_penalty
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.clock.elapsed(self.state.evaluations)
    }

    /// Length of the current stagnation window.
    pub fn epoch_len(&self) -> usize {
        self.epoch.len()
    }

    fn reset_value(&self) -> f64 {
        if self.config.adapt.adaptive_p0 {
            self.pv.mean()
        } else {
            self.reset_p0
        }
    }

    fn start_epoch(&mut self) {
        self.epoch.clear();
        self.epoch_steps = 0;
    }

    fn possible_reset(&mut self, handler: &mut dyn StagnationHandler) -> Result<bool> {
        if self.state.steps_made == 0 {
            return Ok(false);
        }
        let adapt = &self.config.adapt;
        if adapt.adaptive_p0 {
            let mean = self.pv.mean();
            self.pv.set_p0(mean);
        }
        if adapt.rollback.full_on_stagnation()
            && should_rollback(&self.epoch, adapt.window, adapt.delta_f)
        {
            match handler.on_stagnation(self) {
                Restart::Reset => {
                    let p0 = self.reset_value();
                    full_rollback(&mut self.pv, p0)?;
                    self.state.full_rollbacks += 1;
                }
                Restart::To(pv) => {
                    if pv.len() != self.pv.len() {
                        return Err(Error::DimensionMismatch {
                            expected: self.pv.len(),
                            found: pv.len(),
                        });
                    }
                    self.pv = pv;
                    self.state.full_rollbacks += 1;
                }
                Restart::Continue => {}
            }
            self.start_epoch();
            return Ok(true);
        }
        if adapt.rollback.partial_each_step() {
            let q = rollback_weight(adapt.w, self.state.steps_no_result);
            partial_rollback(&mut self.pv, q, adapt.one_sided_rollback);
        }
        Ok(false)
    }

    pub fn step(&mut self) -> Result<StepReport> {
        self.step_with(&mut PlainReset)
    }

    pub fn step_with(&mut self, handler: &mut dyn StagnationHandler) -> Result<StepReport> {
        let restarted = self.possible_reset(handler)?;
        self.state.steps_made += 1;
        self.state.steps_no_result += 1;
        self.epoch_steps += 1;
        self.steps_since_retry += 1;

        let key: [u8; 32] = self.master.gen();
        let batch = self.engine.evaluate(
            self.problem,
            &self.pv,
            self.config.population,
            &key,
            self.c_penalty,
            false,
        )?;
        self.state.evaluations += batch.extrema.count as u64;
        let ext = batch.extrema;
        let best = ext.best.expect("population is at least 2").candidate;
        let worst = ext.worst.expect("population is at least 2").candidate;

        let improved_modified = self
            .state
            .best_modified
            .as_ref()
            .map_or(true, |b| best.f_m > b.f_m);
        if improved_modified {
            self.state.steps_no_result = 0;
            self.state.best_modified = Some(best.clone());
        }
        let epoch_max = self.epoch.last().map_or(best.f_m, |&m| m.max(best.f_m));
        self.epoch.push(epoch_max);

        let batch_best_feasible_f = ext.best_feasible.as_ref().map(|r| r.candidate.f);
        let mut improved_feasible = false;
        if let Some(r) = ext.best_feasible {
            if self
                .state
                .best_feasible
                .as_ref()
                .map_or(true, |b| r.candidate.f > b.f)
            {
                self.state.best_feasible = Some(r.candidate);
                improved_feasible = true;
            }
        }
        self.state.least_penalty = self.state.least_penalty.min(ext.least_penalty);

        match self.config.adapt.strategy {
            Strategy::Multiplicative { d } => adapt_multiplicative(&mut self.pv, &best.x, &worst.x, d)?,
            Strategy::Additive { d, schedule } => {
                adapt_additive(&mut self.pv, &best.x, &worst.x, schedule.step(d, self.epoch_steps))?
            }
        }

        let retry = &self.config.feasibility_retry;
        if self.state.best_feasible.is_some() {
            self.steps_since_retry = 0;
        } else if self.steps_since_retry >= retry.steps
            && self.state.feasibility_retries < retry.max_retries
        {
            self.reset_p0 *= retry.factor;
            full_rollback(&mut self.pv, self.reset_p0.max(crate::sampler::P_MIN))?;
            self.reset_p0 = self.pv.p0();
            self.state.feasibility_retries += 1;
            self.steps_since_retry = 0;
            self.start_epoch();
        }

        if improved_modified
            || improved_feasible
            || self.state.steps_made % self.config.trace_every == 0
        {
            self.record_trace();
        }

        Ok(StepReport {
            step: self.state.steps_made,
            batch_best_f_m: best.f_m,
            batch_worst_f_m: worst.f_m,
            batch_best_feasible_f,
            improved_modified,
            improved_feasible,
            restarted,
        })
    }

    fn record_trace(&mut self) {
        let point = TracePoint {
            elapsed_seconds: self.elapsed_seconds(),
            best_feasible_value: self.state.best_feasible.as_ref().map(|c| c.f),
            best_modified_value: self
                .state
                .best_modified
                .as_ref()
                .map_or(f64::NEG_INFINITY, |c| c.f_m),
            steps: self.state.steps_made,
            least_penalty_value: self.state.least_penalty,
        };
        self.state.trace.push(point);
    }

    /// The first stop condition that holds, if any.
    pub fn stop_reason(&self) -> Option<StopReason> {
        if self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Some(StopReason::Cancelled);
        }
        match self.config.target {
            Some(Target::Objective(t)) if self.state.best_feasible.as_ref().is_some_and(|b| b.f >= t) => {
                return Some(StopReason::TargetReached)
            }
            Some(Target::Penalty(t)) if self.state.least_penalty <= t => {
                return Some(StopReason::TargetReached)
            }
            _ => {}
        }
        if self.config.max_steps.is_some_and(|m| self.state.steps_made >= m) {
            return Some(StopReason::StepBudget);
        }
        if self
            .config
            .max_time_seconds
            .is_some_and(|t| self.elapsed_seconds() >= t)
        {
            return Some(StopReason::TimeBudget);
        }
        if self
            .config
            .no_improve_stop
            .is_some_and(|n| self.state.steps_made > 0 && self.state.steps_no_result >= n)
        {
            return Some(StopReason::NoImprovement);
        }
        None
    }

    /// Steps until a stop condition holds.
    pub fn run(&mut self) -> Result<StopReason> {
        self.run_with(&mut PlainReset)
    }

    pub fn run_with(&mut self, handler: &mut dyn StagnationHandler) -> Result<StopReason> {
        loop {
            if let Some(reason) = self.stop_reason() {
                return Ok(reason);
            }
            self.step_with(handler)?;
        }
    }

    /// Packs the current records into a [`Solution`].
    pub fn solution(&self, stop_reason: StopReason) -> Solution {
        let mut trace = self.state.trace.clone();
        if self.state.steps_made > 0 && trace.last().map(|t| t.steps) != Some(self.state.steps_made) {
            let point = TracePoint {
                elapsed_seconds: self.elapsed_seconds(),
                best_feasible_value: self.state.best_feasible.as_ref().map(|c| c.f),
                best_modified_value: self
                    .state
                    .best_modified
                    .as_ref()
                    .map_or(f64::NEG_INFINITY, |c| c.f_m),
                steps: self.state.steps_made,
                least_penalty_value: self.state.least_penalty,
            };
            trace.push(point);
        }
        let (candidate, feasible) = match (&self.state.best_feasible, &self.state.best_modified) {
            (Some(c), _) => (c.clone(), true),
            (None, Some(c)) => (c.clone(), false),
            (None, None) => {
                let x = Bits::zeros(self.problem.dim());
                let s = self.problem.score_unchecked(&x, self.c_penalty);
                let c = Candidate {
                    x,
                    f: s.f,
                    f_p: s.f_p,
                    f_m: s.f_m,
                };
                let feasible = c.is_feasible();
                (c, feasible)
            }
        };
        Solution {
            objective: self.problem.reported_value(candidate.f),
            x: candidate.x,
            f: candidate.f,
            f_p: candidate.f_p,
            f_m: candidate.f_m,
            feasible,
            least_penalty: self.state.least_penalty,
            stop_reason,
            stats: RunStats {
                steps: self.state.steps_made,
                evaluations: self.state.evaluations,
                full_rollbacks: self.state.full_rollbacks,
                feasibility_retries: self.state.feasibility_retries,
                elapsed_seconds: self.elapsed_seconds(),
            },
            trace,
        }
    }
}

/// Runs a full search with `config`.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<Solution> {
    let mut solver = Solver::new(problem, config.clone())?;
    let reason = solver.run()?;
    Ok(solver.solution(reason))
}
