use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::message::{Message, MessageKind};
use super::transport::{NullTransport, Transport};
use crate::adapt::RollbackMode;
use crate::bits::Bits;
use crate::error::Result;
use crate::model::{Candidate, Problem};
use crate::sampler::{clamp_probability, ProbabilityVector, P_MIN};
use crate::solver::{Restart, Solution, Solver, SolverConfig, StagnationHandler, StopReason, Target};

/// How a node rebuilds its vector from an adopted record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reseed {
    /// Bias every component toward the received vector.
    #[default]
    Reconstruct,
    /// Reset every component to the sender's mean probability.
    Average,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Per-node search settings. Rollback is forced to
    /// [`RollbackMode::Triggered`] with `window = c_max`.
    pub solver: SolverConfig,
    /// Steps without local progress before a node consults its inbox.
    pub c_max: usize,
    /// Coordinator stops everyone after this long without a report.
    pub quiet_period_seconds: f64,
    pub reseed: Reseed,
    /// Overrides `0.5 / V`.
    pub c_corr: Option<f64>,
    /// How long the coordinator waits for the final answer after a stop.
    pub final_timeout_seconds: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            c_max: 500,
            quiet_period_seconds: 30.0,
            reseed: Reseed::Reconstruct,
            c_corr: None,
            final_timeout_seconds: 5.0,
        }
    }
}

impl ClusterConfig {
    /// Solver settings used by node `node_id`.
    pub fn node_solver_config(&self, node_id: usize) -> SolverConfig {
        let mut c = self.solver.clone();
        c.adapt.rollback = RollbackMode::Triggered;
        c.adapt.window = self.c_max;
        c.seed = node_seed(self.solver.seed, node_id);
        c
    }
}

/// Node 0 runs with `seed` itself; other nodes get decorrelated seeds.
pub fn node_seed(seed: u64, node_id: usize) -> u64 {
    if node_id == 0 {
        return seed;
    }
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((node_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Probability vector centred on `x_best`.
///
/// `p_avg` defaults to the share of ones in `x_best` (at least `P_MIN`).
/// The correction constant is `c_corr`, else `0.5 / variants`, else `p_avg`.
/// Components with `x_i = 1` get `(1 - c) p / (c + (1 - 2c) p)`, the others
/// `c p / (c + (1 - 2c) p)`; the reset value becomes `p_avg`.
pub fn reconstruct_probability(
    x_best: &Bits,
    p_avg: Option<f64>,
    variants: Option<usize>,
    c_corr: Option<f64>,
) -> ProbabilityVector {
    let p = average_probability(x_best, p_avg);
    let c = c_corr
        .or_else(|| variants.filter(|&v| v > 0).map(|v| 0.5 / v as f64))
        .unwrap_or(p);
    let denom = c + (1.0 - 2.0 * c) * p;
    let one = clamp_probability((1.0 - c) * p / denom);
    let zero = clamp_probability(c * p / denom);
    let comps = x_best.iter().map(|b| if b { one } else { zero }).collect();
    ProbabilityVector::from_components(comps, p).expect("components are finite and p is clamped")
}

/// `p_avg` if given, else the share of ones in `x`; clamped to the open interval.
pub fn average_probability(x: &Bits, p_avg: Option<f64>) -> f64 {
    let p = p_avg.unwrap_or_else(|| {
        if x.is_empty() {
            P_MIN
        } else {
            (x.count_ones() as f64 / x.len() as f64).max(P_MIN)
        }
    });
    clamp_probability(p)
}

/// What one node knows about the records of the whole cluster.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub node_id: usize,
    pub is_coordinator: bool,
    /// Best feasible record known, own or received.
    pub global_feasible: Option<Message>,
    /// Best modified-objective record known, own or received.
    pub global_modified: Option<Message>,
    pending_feasible: Option<Message>,
    pending_modified: Option<Message>,
    received_since_check: bool,
    reseed: Reseed,
    c_corr: Option<f64>,
    variants: Option<usize>,
    pub reseeds: u64,
    pub continued: u64,
    pub received: u64,
}

impl NodeState {
    fn new(node_id: usize, config: &ClusterConfig, problem: &Problem) -> Self {
        Self {
            node_id,
            is_coordinator: node_id == 0,
            global_feasible: None,
            global_modified: None,
            pending_feasible: None,
            pending_modified: None,
            received_since_check: false,
            reseed: config.reseed,
            c_corr: config.c_corr,
            variants: problem.variants(),
            reseeds: 0,
            continued: 0,
            received: 0,
        }
    }

    /// This node holds the best record: the feasible one if any exists,
    /// else the modified one.
    pub fn x_opt(&self) -> bool {
        match (&self.global_feasible, &self.global_modified) {
            (Some(m), _) | (None, Some(m)) => m.sender == self.node_id,
            (None, None) => false,
        }
    }

    /// Takes in a received improvement. True if it beat the known record.
    fn absorb(&mut self, msg: Message) -> bool {
        self.received += 1;
        self.received_since_check = true;
        let (known, pending) = match msg.kind {
            MessageKind::ImproveFeasible => (&mut self.global_feasible, &mut self.pending_feasible),
            MessageKind::ImproveModified => (&mut self.global_modified, &mut self.pending_modified),
            _ => return false,
        };
        if known.as_ref().is_some_and(|k| !msg.outranks(k)) {
            return false;
        }
        *known = Some(msg.clone());
        *pending = Some(msg);
        true
    }

    fn record_own(&mut self, msg: Message) {
        match msg.kind {
            MessageKind::ImproveFeasible => {
                self.pending_feasible = None;
                self.global_feasible = Some(msg);
            }
            MessageKind::ImproveModified => {
                self.pending_modified = None;
                self.global_modified = Some(msg);
            }
            _ => {}
        }
    }
}

impl StagnationHandler for NodeState {
    fn on_stagnation(&mut self, solver: &Solver<'_>) -> Restart {
        let pending = self.pending_feasible.take().or(self.pending_modified.take());
        self.pending_modified = None;
        let received = std::mem::replace(&mut self.received_since_check, false);
        if let Some(m) = pending {
            if let Some(x) = m.x.as_ref().filter(|x| x.len() == solver.problem().dim()) {
                self.reseeds += 1;
                let pv = match self.reseed {
                    Reseed::Reconstruct => reconstruct_probability(x, m.p_avg, self.variants, self.c_corr),
                    Reseed::Average => {
                        let p = average_probability(x, m.p_avg);
                        ProbabilityVector::uniform(x.len(), p).expect("p is clamped")
                    }
                };
                return Restart::To(pv);
            }
        }
        if received && self.x_opt() {
            self.continued += 1;
            return Restart::Continue;
        }
        Restart::Reset
    }
}

/// A node's own account of its run.
#[derive(Clone, Debug)]
pub struct NodeReport {
    pub node_id: usize,
    /// Best vectors found by this node itself.
    pub solution: Solution,
    /// Improvement messages this node sent, in order.
    pub broadcasts: Vec<Message>,
    pub x_opt: bool,
    pub global_feasible: Option<f64>,
    pub global_modified: Option<f64>,
    pub received: u64,
    pub reseeds: u64,
    /// The transport failed and the node carried on alone.
    pub degraded: bool,
}

/// The answer assembled by the coordinator.
#[derive(Clone, Debug)]
pub struct ClusterResult {
    pub solution: Solution,
    /// Node whose vector was returned.
    pub source: usize,
    pub finals_received: usize,
}

#[derive(Clone, Debug)]
pub struct NodeOutcome {
    pub report: NodeReport,
    /// Present on the coordinator only.
    pub result: Option<ClusterResult>,
}

struct Node<'p> {
    solver: Solver<'p>,
    state: NodeState,
    transport: Box<dyn Transport + 'p>,
    degraded: bool,
    broadcasts: Vec<Message>,
    finals: Vec<Message>,
    stop_requested: bool,
    last_report: f64,
    cancel: Option<Arc<AtomicBool>>,
}

impl<'p> Node<'p> {
    fn now(&self) -> f64 {
        self.solver.elapsed_seconds()
    }

    fn degrade(&mut self, why: &str) {
        if !self.degraded {
            log::warn!("node {}: {why}; continuing alone", self.state.node_id);
            self.degraded = true;
            self.transport = Box::new(NullTransport {
                node_id: self.state.node_id,
            });
        }
    }

    fn handle(&mut self, msg: Message) {
        match msg.kind {
            MessageKind::Stop => self.stop_requested = true,
            MessageKind::Final => self.finals.push(msg),
            MessageKind::ImproveFeasible | MessageKind::ImproveModified => {
                if self.state.absorb(msg) {
                    self.last_report = self.now();
                }
            }
        }
    }

    fn drain(&mut self) {
        // after a stop the coordinator may hang up; that is not a failure
        while !self.stop_requested {
            match self.transport.try_recv() {
                Ok(Some(m)) => self.handle(m),
                Ok(None) => return,
                Err(e) => {
                    self.degrade(&e.to_string());
                    return;
                }
            }
        }
    }

    fn send(&mut self, msg: Message) {
        if let Err(e) = self.transport.broadcast(&msg) {
            self.degrade(&e.to_string());
        }
        self.state.record_own(msg.clone());
        self.broadcasts.push(msg);
        self.last_report = self.now();
    }

    /// Broadcasts local records that beat the known global ones.
    fn publish(&mut self) {
        let st = self.solver.state();
        let p_avg = Some(self.solver.probabilities().mean());
        let ts = self.now();
        let mut out = Vec::new();
        if let Some(c) = &st.best_feasible {
            if self.state.global_feasible.as_ref().map_or(true, |g| c.f > g.f) {
                out.push(self.message(MessageKind::ImproveFeasible, c.f, &c.x, p_avg, ts));
            }
        }
        if let Some(c) = &st.best_modified {
            if self.state.global_modified.as_ref().map_or(true, |g| c.f_m > g.f) {
                out.push(self.message(MessageKind::ImproveModified, c.f_m, &c.x, p_avg, ts));
            }
        }
        for m in out {
            self.send(m);
        }
    }

    fn message(&self, kind: MessageKind, f: f64, x: &Bits, p_avg: Option<f64>, ts: f64) -> Message {
        Message {
            kind,
            sender: self.state.node_id,
            f,
            x: Some(x.clone()),
            p_avg,
            ts,
        }
    }

    fn global_target_reached(&self) -> bool {
        match self.solver.config().target {
            Some(Target::Objective(t)) => self.state.global_feasible.as_ref().is_some_and(|m| m.f >= t),
            _ => false,
        }
    }

    fn search(&mut self, quiet_period: f64) -> Result<StopReason> {
        loop {
            self.drain();
            if self.stop_requested {
                return Ok(StopReason::StopRequested);
            }
            if let Some(r) = self.solver.stop_reason() {
                return Ok(r);
            }
            let timer_owner = self.state.is_coordinator || self.degraded;
            if timer_owner && self.now() - self.last_report >= quiet_period {
                return Ok(StopReason::QuietPeriod);
            }
            if self.state.is_coordinator && self.global_target_reached() {
                return Ok(StopReason::TargetReached);
            }
            self.solver.step_with(&mut self.state)?;
            self.publish();
        }
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }

    /// Non-coordinators idle here until the stop message arrives.
    fn await_stop(&mut self) {
        while !self.stop_requested && !self.degraded && !self.cancelled() {
            match self.transport.recv_timeout(Duration::from_millis(50)) {
                Ok(Some(m)) => self.handle(m),
                Ok(None) => {}
                Err(e) => self.degrade(&e.to_string()),
            }
        }
    }

    /// The vector this node stands behind: its best feasible one, else its
    /// best modified one.
    fn own_best(&self) -> Option<&Candidate> {
        let st = self.solver.state();
        st.best_feasible.as_ref().or(st.best_modified.as_ref())
    }

    fn send_final(&mut self) {
        let Some(c) = self.own_best().cloned() else { return };
        let msg = self.message(
            MessageKind::Final,
            c.f,
            &c.x,
            Some(self.solver.probabilities().mean()),
            self.now(),
        );
        if let Err(e) = self.transport.send_to(0, &msg) {
            log::warn!("node {}: final answer not delivered: {e}", self.state.node_id);
        }
    }

    fn best_sender(&self) -> Option<usize> {
        self.state
            .global_feasible
            .as_ref()
            .or(self.state.global_modified.as_ref())
            .map(|m| m.sender)
    }

    /// Coordinator: gathers the answer after the stop broadcast.
    fn collect(&mut self, own: &Solution, timeout: f64) -> ClusterResult {
        let deadline = Instant::now() + Duration::from_secs_f64(timeout.max(0.0));
        loop {
            let wanted = self.best_sender();
            let have = |s: usize| self.finals.iter().any(|f| f.sender == s);
            match wanted {
                Some(s) if s != self.state.node_id && !have(s) => {}
                _ => break,
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                log::warn!("no final answer from node {}; using its last report", wanted.unwrap_or(0));
                break;
            }
            match self.transport.recv_timeout(left) {
                Ok(Some(m)) => self.handle(m),
                Ok(None) => {}
                Err(_) => break,
            }
        }

        let problem = self.solver.problem();
        let c_penalty = self.solver.penalty_coefficient();
        let me = self.state.node_id;
        let mut pool: Vec<(usize, Bits)> = Vec::new();
        if let Some(c) = self.own_best() {
            pool.push((me, c.x.clone()));
        }
        let reports = self
            .finals
            .iter()
            .chain(self.state.global_feasible.iter())
            .chain(self.state.global_modified.iter());
        for m in reports {
            if let Some(x) = &m.x {
                pool.push((m.sender, x.clone()));
            }
        }
        let mut best: Option<(usize, Candidate)> = None;
        for (sender, x) in pool {
            let Ok(s) = problem.score(&x, c_penalty) else { continue };
            let cand = Candidate {
                x,
                f: s.f,
                f_p: s.f_p,
                f_m: s.f_m,
            };
            let better = match &best {
                None => true,
                Some((bs, b)) => {
                    let key = |c: &Candidate| (c.is_feasible(), if c.is_feasible() { c.f } else { c.f_m });
                    let (nf, nv) = key(&cand);
                    let (of, ov) = key(b);
                    (nf, nv) > (of, ov) || (nf == of && nv == ov && sender < *bs)
                }
            };
            if better {
                best = Some((sender, cand));
            }
        }

        let mut solution = own.clone();
        let source = match best {
            Some((sender, c)) if sender != me || Some(&c.x) != self.own_best().map(|o| &o.x) => {
                solution.objective = problem.reported_value(c.f);
                solution.feasible = c.is_feasible();
                solution.least_penalty = solution.least_penalty.min(c.f_p);
                solution.x = c.x;
                solution.f = c.f;
                solution.f_p = c.f_p;
                solution.f_m = c.f_m;
                sender
            }
            _ => me,
        };
        ClusterResult {
            solution,
            source,
            finals_received: self.finals.len(),
        }
    }
}

/// Runs one node until the cluster stops.
///
/// Each step drains the inbox without blocking, runs one solver step and
/// broadcasts any local record that strictly beats the known global one.
/// Records received are only acted on when the stagnation test fires.
pub fn run_node<'p>(
    problem: &'p Problem,
    config: &ClusterConfig,
    transport: Box<dyn Transport + 'p>,
    cancel: Option<Arc<AtomicBool>>,
) -> Result<NodeOutcome> {
    let node_id = transport.node_id();
    let mut solver = Solver::new(problem, config.node_solver_config(node_id))?;
    if let Some(c) = &cancel {
        solver.set_cancel_flag(c.clone());
    }
    let mut node = Node {
        solver,
        state: NodeState::new(node_id, config, problem),
        transport,
        degraded: false,
        broadcasts: Vec::new(),
        finals: Vec::new(),
        stop_requested: false,
        last_report: 0.0,
        cancel,
    };

    let reason = node.search(config.quiet_period_seconds)?;
    let own = node.solver.solution(reason);
    let result = if node.state.is_coordinator {
        if let Err(e) = node.transport.broadcast(&Message::stop(node_id, node.now())) {
            log::warn!("stop broadcast incomplete: {e}");
        }
        Some(node.collect(&own, config.final_timeout_seconds))
    } else {
        node.await_stop();
        if node.state.x_opt() && !node.degraded {
            node.send_final();
        }
        None
    };

    let report = NodeReport {
        node_id,
        solution: own,
        broadcasts: node.broadcasts,
        x_opt: node.state.x_opt(),
        global_feasible: node.state.global_feasible.as_ref().map(|m| m.f),
        global_modified: node.state.global_modified.as_ref().map(|m| m.f),
        received: node.state.received,
        reseeds: node.state.reseeds,
        degraded: node.degraded,
    };
    Ok(NodeOutcome { report, result })
}
