use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pbsearch_core::adapt::{RollbackMode, Schedule, Strategy};
use pbsearch_core::cluster::{ClusterConfig, Reseed};
use pbsearch_core::solver::{ClockKind, SolverConfig, Target};

#[derive(Parser, Debug)]
#[command(name = "pbsearch", version, about = "Variant-probability random search for constrained pseudo-Boolean problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one problem.
    Solve(SolveArgs),
    /// Write a random instance.
    Generate(GenerateArgs),
    /// Time-to-target comparison of a serial and a parallel configuration.
    Bench(BenchArgs),
    /// Run one cluster node, or a whole cluster in this process.
    ClusterRun(ClusterArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum AdaptKind {
    Mult,
    Add,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum RollbackArg {
    None,
    Full,
    Partial,
    Triggered,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ScheduleArg {
    Harmonic,
    Constant,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ReseedArg {
    Reconstruct,
    Average,
}

/// Search settings shared by every subcommand that runs the solver.
/// Each flag overrides the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct SolverFlags {
    /// JSON run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Vectors generated per step.
    #[arg(long)]
    pub population: Option<usize>,
    /// Step budget; 0 removes it.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Time budget in seconds.
    #[arg(long)]
    pub max_time: Option<f64>,
    /// Stop after this many steps without improvement.
    #[arg(long)]
    pub no_improve: Option<u64>,
    /// Stop once the best feasible value reaches this. Minimization
    /// problems are maximized internally, so give the negated value.
    #[arg(long)]
    pub target: Option<f64>,
    /// Evaluation threads.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub adapt: Option<AdaptKind>,
    /// Adaptation coefficient.
    #[arg(long)]
    pub d: Option<f64>,
    /// Additive step schedule.
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Partial-rollback weight.
    #[arg(long)]
    pub w: Option<f64>,
    /// Minimum gain over the stagnation window.
    #[arg(long)]
    pub delta_f: Option<f64>,
    /// Stagnation window in steps.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub rollback: Option<RollbackArg>,
    /// Reset to the mean probability instead of the initial one.
    #[arg(long)]
    pub adaptive_p0: bool,
    /// Contract only components below the reset value.
    #[arg(long)]
    pub one_sided_rollback: bool,
    /// Penalty coefficient; defaults to the sum of |a_i|.
    #[arg(long)]
    pub c_penalty: Option<f64>,
    /// Initial probability; defaults to the constraint-derived value.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Trace sampling interval in steps.
    #[arg(long)]
    pub trace_every: Option<u64>,
    /// Count time in evaluations (1 µs each) for reproducible traces.
    #[arg(long)]
    pub logical_clock: bool,
}

impl SolverFlags {
    pub fn apply(&self, c: &mut SolverConfig) {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.population {
            c.population = v;
        }
        if let Some(v) = self.max_steps {
            c.max_steps = (v > 0).then_some(v);
        }
        if let Some(v) = self.max_time {
            c.max_time_seconds = Some(v);
        }
        if let Some(v) = self.no_improve {
            c.no_improve_stop = Some(v);
        }
        if let Some(v) = self.target {
            c.target = Some(Target::Objective(v));
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        let a = &mut c.adapt;
        a.strategy = match (self.adapt, a.strategy) {
            (None | Some(AdaptKind::Mult), Strategy::Multiplicative { d }) => Strategy::Multiplicative {
                d: self.d.unwrap_or(d),
            },
            (Some(AdaptKind::Mult), Strategy::Additive { .. }) => Strategy::Multiplicative {
                d: self.d.unwrap_or(1.5),
            },
            (Some(AdaptKind::Add), Strategy::Multiplicative { .. }) => Strategy::Additive {
                d: self.d.unwrap_or(0.1),
                schedule: self.schedule.map(Into::into).unwrap_or(Schedule::Harmonic),
            },
            (None | Some(AdaptKind::Add), Strategy::Additive { d, schedule }) => Strategy::Additive {
                d: self.d.unwrap_or(d),
                schedule: self.schedule.map(Into::into).unwrap_or(schedule),
            },
        };
        if let Some(v) = self.w {
            a.w = v;
        }
        if let Some(v) = self.delta_f {
            a.delta_f = v;
        }
        if let Some(v) = self.window {
            a.window = v;
        }
        if let Some(v) = self.rollback {
            a.rollback = match v {
                RollbackArg::None => RollbackMode::None,
                RollbackArg::Full => RollbackMode::Full,
                RollbackArg::Partial => RollbackMode::PartialEachStep,
                RollbackArg::Triggered => RollbackMode::Triggered,
            };
        }
        if self.adaptive_p0 {
            a.adaptive_p0 = true;
        }
        if self.one_sided_rollback {
            a.one_sided_rollback = true;
        }
        if let Some(v) = self.c_penalty {
            c.c_penalty = Some(v);
        }
        if let Some(v) = self.p0 {
            c.p0 = Some(v);
        }
        if let Some(v) = self.trace_every {
            c.trace_every = v;
        }
        if self.logical_clock {
            c.clock = ClockKind::Logical;
        }
    }
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Harmonic => Schedule::Harmonic,
            ScheduleArg::Constant => Schedule::Constant,
        }
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Solution JSON; printed to stdout when absent.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Progress trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Preset shape: paper-smp or paper-large.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub constraints: Option<usize>,
    /// Share of each row sum used as its bound.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Add at-most-one groups of this size.
    #[arg(long)]
    pub variants: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Make the instance admit no feasible vector.
    #[arg(long)]
    pub infeasible: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Timed runs per side.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 60.0)]
    pub pilot_seconds: f64,
    /// Runs stop at this multiple of the pilot time.
    #[arg(long, default_value_t = 100.0)]
    pub cap_factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run config of the serial side.
    #[arg(long)]
    pub serial_config: Option<PathBuf>,
    /// Run config of the parallel side; defaults to one worker per core.
    #[arg(long)]
    pub parallel_config: Option<PathBuf>,
    /// Run the parallel side as an in-process cluster of this many nodes.
    #[arg(long)]
    pub parallel_nodes: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Long-format CSV of all timed-run traces.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Run this many nodes inside this process.
    #[arg(long, conflicts_with_all = ["node_id", "bind", "peers"])]
    pub in_process: Option<usize>,
    /// Expected cluster size; checked against the peer list.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// This node's id; node 0 coordinates.
    #[arg(long, requires = "bind")]
    pub node_id: Option<usize>,
    /// Address this node listens on.
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Other nodes' addresses in node-id order, skipping this node.
    #[arg(long, value_delimiter = ',')]
    pub peers: Vec<SocketAddr>,
    /// Seconds without a report before the coordinator stops the cluster.
    #[arg(long)]
    pub quiet_period: Option<f64>,
    /// Steps without local progress before consulting received records.
    #[arg(long)]
    pub c_max: Option<usize>,
    #[arg(long, value_enum)]
    pub reseed: Option<ReseedArg>,
    #[arg(long)]
    pub c_corr: Option<f64>,
    /// Run-length encode long vectors on the wire.
    #[arg(long)]
    pub compress: bool,
    /// Seconds to keep retrying connections to peers.
    #[arg(long, default_value_t = 30.0)]
    pub connect_timeout: f64,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

impl ClusterArgs {
    pub fn apply(&self, c: &mut ClusterConfig) {
        self.solver.apply(&mut c.solver);
        if let Some(v) = self.quiet_period {
            c.quiet_period_seconds = v;
        }
        if let Some(v) = self.c_max {
            c.c_max = v;
        }
        if let Some(v) = self.reseed {
            c.reseed = match v {
                ReseedArg::Reconstruct => Reseed::Reconstruct,
                ReseedArg::Average => Reseed::Average,
            };
        }
        if let Some(v) = self.c_corr {
            c.c_corr = Some(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "pbsearch", "solve", "--problem", "p.json", "--seed", "4", "--max-steps", "0", "--max-time", "2",
            "--adapt", "add", "--d", "0.2", "--rollback", "partial", "--adaptive-p0",
        ])
        .unwrap();
        let Command::Solve(a) = cli.command else { panic!() };
        let mut c = SolverConfig::default();
        a.solver.apply(&mut c);
        assert_eq!(c.seed, 4);
        assert_eq!(c.max_steps, None);
        assert_eq!(c.max_time_seconds, Some(2.0));
        assert_eq!(
            c.adapt.strategy,
            Strategy::Additive {
                d: 0.2,
                schedule: Schedule::Harmonic
            }
        );
        assert_eq!(c.adapt.rollback, RollbackMode::PartialEachStep);
        assert!(c.adapt.adaptive_p0);
    }

    #[test]
    fn d_alone_keeps_strategy() {
        let mut c = SolverConfig::default();
        SolverFlags {
            d: Some(2.0),
            ..Default::default()
        }
        .apply(&mut c);
        assert_eq!(c.adapt.strategy, Strategy::Multiplicative { d: 2.0 });
        let mut c = SolverConfig::default();
        c.adapt.strategy = Strategy::Multiplicative { d: 3.0 };
        SolverFlags::default().apply(&mut c);
        assert_eq!(c.adapt.strategy, Strategy::Multiplicative { d: 3.0 });
    }

    #[test]
    fn peers_split_on_commas() {
        let cli = Cli::try_parse_from([
            "pbsearch", "cluster-run", "--problem", "p.json", "--node-id", "1", "--bind", "127.0.0.1:7001",
            "--peers", "127.0.0.1:7000,127.0.0.1:7002",
        ])
        .unwrap();
        let Command::ClusterRun(a) = cli.command else { panic!() };
        assert_eq!(a.peers.len(), 2);
        assert!(Cli::try_parse_from(["pbsearch", "cluster-run", "--problem", "p", "--in-process", "2", "--node-id", "0"]).is_err());
    }
}
