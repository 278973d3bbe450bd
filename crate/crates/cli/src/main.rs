mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::Parser;
use serde::Serialize;

use args::{BenchArgs, Cli, ClusterArgs, Command, GenerateArgs, SolveArgs};
use pbsearch_core::bench::{
    emit_trace_plot_data, generate_instance, measure_speedup, GeneratorSpec, Runner, SpeedupReport,
    SpeedupSpec,
};
use pbsearch_core::cluster::{run_in_process, run_node, ClusterConfig, TcpOptions, TcpTransport};
use pbsearch_core::solver::{write_trace_csv, Solution, Solver, Target};
use pbsearch_core::Problem;

const EXIT_NO_FEASIBLE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 3;

/// Error with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error,
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_FAILURE,
            error,
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Generate(a) => generate(a),
        Command::Bench(a) => bench(a),
        Command::ClusterRun(a) => cluster_run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    Problem::load(path)
        .with_context(|| format!("cannot load problem {}", path.display()))
        .map_err(usage)
}

fn load_config(path: Option<&Path>) -> Result<ClusterConfig, Failure> {
    let Some(path) = path else {
        return Ok(ClusterConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("malformed config {}", path.display()))
        .map_err(usage)
}

/// Sets a flag on Ctrl-C so the run stops at the next step and its best
/// result still gets written.
fn cancel_on_interrupt() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::Relaxed)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    flag
}

#[derive(Serialize)]
struct SolutionFile<'a, C: Serialize> {
    problem: String,
    seed: u64,
    config: &'a C,
    solution: &'a Solution,
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_trace<C: Serialize>(path: &Path, seed: u64, config: &C, solution: &Solution) -> anyhow::Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(format!("# seed={seed}\n# config={}\n", serde_json::to_string(config)?).as_bytes());
    write_trace_csv(&mut out, &solution.trace)?;
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

fn solve(a: SolveArgs) -> Outcome {
    let problem = load_problem(&a.problem)?;
    let mut config = load_config(a.solver.config.as_deref())?.solver;
    a.solver.apply(&mut config);
    config.validate().map_err(|e| usage(e.into()))?;

    let mut solver = Solver::new(&problem, config.clone()).map_err(|e| usage(e.into()))?;
    solver.set_cancel_flag(cancel_on_interrupt());
    let reason = solver.run().map_err(anyhow::Error::from)?;
    let solution = solver.solution(reason);
    log::info!(
        "stopped ({:?}) after {} steps: f = {}, feasible = {}",
        reason,
        solution.stats.steps,
        solution.objective,
        solution.feasible
    );

    let file = SolutionFile {
        problem: a.problem.display().to_string(),
        seed: config.seed,
        config: &config,
        solution: &solution,
    };
    write_json(a.solution.as_deref(), &file)?;
    if let Some(t) = &a.trace {
        write_trace(t, config.seed, &config, &solution)?;
    }
    Ok(if solution.feasible { 0 } else { EXIT_NO_FEASIBLE })
}

fn generate(a: GenerateArgs) -> Outcome {
    let mut spec = match &a.profile {
        Some(name) => GeneratorSpec::profile(name).map_err(|e| usage(e.into()))?,
        None => GeneratorSpec::default(),
    };
    if let Some(v) = a.dim {
        spec.dim = v;
    }
    if let Some(v) = a.constraints {
        spec.n_constraints = v;
    }
    if let Some(v) = a.margin {
        spec.margin = v;
    }
    if a.variants.is_some() {
        spec.variants = a.variants;
    }
    spec.seed = a.seed;
    spec.infeasible = a.infeasible;
    let problem = generate_instance(&spec).map_err(|e| usage(e.into()))?;
    let mut doc = problem.to_doc().map_err(anyhow::Error::from)?;
    doc.meta = Some(serde_json::json!({ "generator": spec }));
    let text = serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)? + "\n";
    fs::write(&a.output, text)
        .with_context(|| format!("cannot write {}", a.output.display()))?;
    Ok(0)
}

#[derive(Serialize)]
struct BenchFile<'a> {
    problem: String,
    seed: u64,
    spec: &'a SpeedupSpec,
    report: &'a SpeedupReport,
}

fn bench(a: BenchArgs) -> Outcome {
    let problem = load_problem(&a.problem)?;
    let serial = load_config(a.serial_config.as_deref())?;
    let parallel = match &a.parallel_config {
        Some(p) => load_config(Some(p))?,
        None => {
            let mut c = serial.clone();
            c.solver.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
            c
        }
    };
    let serial_runner = Runner::Solver(serial.solver);
    let parallel_runner = match a.parallel_nodes {
        Some(nodes) => Runner::Cluster {
            config: parallel,
            nodes,
        },
        None => Runner::Solver(parallel.solver),
    };
    let spec = SpeedupSpec {
        k: a.k,
        pilot_seconds: a.pilot_seconds,
        cap_factor: a.cap_factor,
        seed: a.seed,
    };
    let report = measure_speedup(&problem, &serial_runner, &parallel_runner, &spec).map_err(|e| usage(e.into()))?;
    eprintln!(
        "speedup {:.3} on {} resources (efficiency {:.3}); {} censored runs",
        report.speedup, report.resources, report.efficiency, report.censored
    );
    let file = BenchFile {
        problem: a.problem.display().to_string(),
        seed: a.seed,
        spec: &spec,
        report: &report,
    };
    write_json(Some(&a.output), &file)?;
    if let Some(path) = &a.plot_data {
        let Target::Objective(t) = report.target else {
            return Err(anyhow!("plot data needs an objective target; no feasible value was found").into());
        };
        let traces: Vec<_> = report
            .serial
            .iter()
            .chain(&report.parallel)
            .map(|r| r.trace.clone())
            .collect();
        let data = emit_trace_plot_data(&traces, t).map_err(anyhow::Error::from)?;
        let header = format!(
            "# seed={}\n# runs 0..{} serial, {}..{} parallel\n",
            a.seed,
            report.k,
            report.k,
            2 * report.k
        );
        fs::write(path, header + &data.csv).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(0)
}

fn cluster_run(a: ClusterArgs) -> Outcome {
    let problem = load_problem(&a.problem)?;
    let mut config = load_config(a.solver.config.as_deref())?;
    a.apply(&mut config);
    config.solver.validate().map_err(|e| usage(e.into()))?;
    let cancel = cancel_on_interrupt();

    let (solution, source) = if let Some(n) = a.in_process {
        let run = run_in_process(&problem, &config, n, Some(cancel)).map_err(|e| usage(e.into()))?;
        for node in &run.nodes {
            log::info!(
                "node {}: {} broadcasts, {} received, {} reseeds",
                node.node_id,
                node.broadcasts.len(),
                node.received,
                node.reseeds
            );
        }
        (run.result.solution, Some(run.result.source))
    } else {
        let node_id = a
            .node_id
            .ok_or_else(|| usage(anyhow!("give --in-process N, or --node-id with --bind and --peers")))?;
        let bind = a.bind.ok_or_else(|| usage(anyhow!("--bind is required with --node-id")))?;
        if let Some(n) = a.nodes {
            if n != a.peers.len() + 1 {
                return Err(usage(anyhow!(
                    "--nodes {n} disagrees with {} peers plus this node",
                    a.peers.len()
                )));
            }
        }
        let options = TcpOptions {
            connect_timeout: Duration::from_secs_f64(a.connect_timeout),
            compress: a.compress,
        };
        let transport = TcpTransport::connect(node_id, bind, &a.peers, &options).map_err(anyhow::Error::from)?;
        let outcome = run_node(&problem, &config, Box::new(transport), Some(cancel)).map_err(anyhow::Error::from)?;
        match outcome.result {
            Some(r) => (r.solution, Some(r.source)),
            None => (outcome.report.solution, None),
        }
    };
    if let Some(s) = source {
        log::info!("answer taken from node {s}");
    }
    let file = SolutionFile {
        problem: a.problem.display().to_string(),
        seed: config.solver.seed,
        config: &config,
        solution: &solution,
    };
    write_json(a.solution.as_deref(), &file)?;
    if let Some(t) = &a.trace {
        write_trace(t, config.solver.seed, &config, &solution)?;
    }
    Ok(0)
}
