//! Acceptance checks. Prints one verdict line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `PBSEARCH_ACCEPTANCE=2,4` runs a subset.

mod common;

use std::time::Instant;

use pbsearch_core::adapt::{
    adapt_additive, adapt_multiplicative, full_rollback, multiplicative_move, partial_rollback,
    rollback_weight, should_rollback,
};
use pbsearch_core::bench::{generate_instance, measure_speedup, GeneratorSpec, Runner, SpeedupSpec};
use pbsearch_core::cluster::{
    average_probability, reconstruct_probability, run_in_process, ClusterConfig, MessageKind,
};
use pbsearch_core::solver::{parallel_evaluate, trace_to_csv, ClockKind, Solution};
use pbsearch_core::{
    initial_probability, solve, Bits, Problem, ProbabilityVector, SolverConfig, P_MIN,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{bits, brute_force, close};

enum Verdict {
    Pass(String),
    Fail(String),
    /// The host cannot run the check as stated.
    Unverified(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn small_instance(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_instance(&GeneratorSpec {
        dim: rng.gen_range(8..=16),
        n_constraints: rng.gen_range(2..=5),
        margin: 0.3,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn oracle_equivalence() -> Verdict {
    let mut runs = 0;
    let mut optimal = 0;
    let mut feasible = 0;
    let mut slowest = 0.0f64;
    for inst in 0..30u64 {
        let p = small_instance(1000 + inst);
        let t = Instant::now();
        let best = brute_force(&p).expect("zero vector is feasible");
        slowest = slowest.max(t.elapsed().as_secs_f64());
        for seed in 0..5 {
            let s = solve(&p, &SolverConfig { seed, ..Default::default() }).unwrap();
            runs += 1;
            feasible += s.feasible as usize;
            optimal += (s.feasible && s.f == best.value) as usize;
        }
    }
    let rate = optimal as f64 / runs as f64;
    verdict(
        rate >= 0.95 && feasible == runs && slowest < 1.0,
        format!(
            "{optimal}/{runs} runs optimal ({:.1}%, need >= 95%), {feasible}/{runs} feasible, oracle <= {slowest:.4} s/instance",
            100.0 * rate
        ),
    )
}

struct Checks {
    total: usize,
    failed: Vec<String>,
}

impl Checks {
    fn value(&mut self, name: &str, got: f64, want: f64) {
        self.total += 1;
        if !close(got, want, 1e-12) {
            self.failed.push(format!("{name}: got {got}, want {want}"));
        }
    }

    fn truth(&mut self, name: &str, ok: bool) {
        self.total += 1;
        if !ok {
            self.failed.push(name.to_string());
        }
    }
}

fn formula_suite() -> Verdict {
    let mut c = Checks { total: 0, failed: Vec::new() };
    let b = |v: &[u8]| Bits::from_bools(v.iter().map(|&x| x == 1));

    // penalty
    let p = Problem::builder(vec![1.0, 1.0]).constraint(vec![2.0, 3.0], 4.0).build().unwrap();
    c.value("penalty single row", p.evaluate_penalty(&b(&[1, 1]), 1.0).unwrap(), 1.25);
    c.value("penalty feasible", p.evaluate_penalty(&b(&[1, 0]), 1.0).unwrap(), 0.0);
    let p = Problem::builder(vec![1.0, 1.0])
        .constraint(vec![3.0, 0.0], 2.0)
        .constraint(vec![0.0, 4.0], 2.0)
        .build()
        .unwrap();
    c.value("penalty two rows", p.evaluate_penalty(&b(&[1, 1]), 10.0).unwrap(), 35.0);
    let p = Problem::builder(vec![3.0, -2.0, 5.0]).constraint(vec![1.0, 0.0, 1.5], 2.0).build().unwrap();
    let m = p.evaluate_modified(&b(&[1, 0, 1]), 10.0).unwrap();
    c.value("modified f", m.f, 8.0);
    c.value("modified f_p", m.f_p, 12.5);
    c.value("modified f_m", m.f_m, -4.5);

    // penalty coefficient
    c.value("coefficient", p.default_penalty_coefficient(), 10.0);
    let ones = Problem::builder(vec![1.0; 100]).build().unwrap();
    c.value("coefficient ones", ones.default_penalty_coefficient(), 100.0);
    let zero = Problem::builder(vec![0.0; 3]).build().unwrap();
    c.value("coefficient zero", zero.default_penalty_coefficient(), 0.0);
    c.value("coefficient fallback", zero.penalty_coefficient(), 1.0);

    // additive adaptation
    let mut pv = ProbabilityVector::uniform(3, 0.5).unwrap();
    adapt_additive(&mut pv, &b(&[1, 0, 1]), &b(&[0, 1, 1]), 0.1).unwrap();
    c.value("additive up", pv.components()[0], 0.6);
    c.value("additive down", pv.components()[1], 0.4);
    c.value("additive no signal", pv.components()[2], 0.5);
    let mut pv = ProbabilityVector::uniform(1, 0.99).unwrap();
    adapt_additive(&mut pv, &b(&[1]), &b(&[0]), 0.1).unwrap();
    c.value("additive cap", pv.components()[0], 1.0 - P_MIN);

    // multiplicative adaptation, five branches
    c.value("mult up low", multiplicative_move(0.25, true, 2.0), 0.5);
    c.value("mult up high", multiplicative_move(0.8, true, 2.0), 0.9);
    c.value("mult down high", multiplicative_move(0.8, false, 2.0), 0.6);
    c.value("mult down low", multiplicative_move(0.25, false, 2.0), 0.125);
    let mut pv = ProbabilityVector::from_components(vec![0.3, 0.7], 0.5).unwrap();
    adapt_multiplicative(&mut pv, &b(&[1, 0]), &b(&[1, 0]), 2.0).unwrap();
    c.value("mult equal low", pv.components()[0], 0.3);
    c.value("mult equal high", pv.components()[1], 0.7);
    c.value("mult down floor", multiplicative_move(0.6, false, 3.0), P_MIN);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut inversions = 0;
    while inversions < 10_000 {
        let p: f64 = rng.gen_range(0.001..0.999);
        let d: f64 = rng.gen_range(1.01..5.0);
        let up = multiplicative_move(p, true, d);
        let down = multiplicative_move(p, false, d);
        // away from clamps and on the same side of one half
        if (up < 0.5) == (p < 0.5) && up < 0.999 {
            c.value("mult up then down", multiplicative_move(up, false, d), p);
            inversions += 1;
        }
        if (down < 0.5) == (p < 0.5) && down > 0.001 {
            c.value("mult down then up", multiplicative_move(down, true, d), p);
        }
    }

    // partial rollback
    let mut pv = ProbabilityVector::from_components(vec![0.02], 0.1).unwrap();
    partial_rollback(&mut pv, 0.05, false);
    c.value("partial rollback", pv.components()[0], 0.025 / 1.05);
    c.value("rollback weight", rollback_weight(0.1, 4), 0.025);
    c.value("rollback weight floor", rollback_weight(0.1, 0), 0.1);

    // stagnation test
    c.truth("stagnation small gain", should_rollback(&[10.0, 10.0001], 1, 0.01));
    c.truth("stagnation real gain", !should_rollback(&[10.0, 15.0], 1, 0.01));
    c.truth("stagnation warm-up", !should_rollback(&[10.0], 1, 0.01));

    // expected left-hand side
    let pv = ProbabilityVector::uniform(4, 0.5).unwrap();
    c.value("expected lhs", pv.expected_lhs(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 5.0);
    let pv = ProbabilityVector::uniform(4, 0.25).unwrap();
    c.value("expected lhs inversion", pv.expected_lhs(&[1.0, 2.0, 3.0, 2.0]).unwrap(), 2.0);

    // start probability
    let row = vec![1.0, 2.0, 3.0, 4.0];
    let free = Problem::builder(vec![1.0; 4]).constraint(row.clone(), 5.0).build().unwrap();
    c.value("start probability", initial_probability(&free), 0.5);
    let grouped = Problem::builder(vec![1.0; 4]).constraint(row, 5.0).variant_groups(4).build().unwrap();
    c.value("start probability capped", initial_probability(&grouped), 0.2);
    c.value("start probability default", initial_probability(&ones), 0.5);
    let two = Problem::builder(vec![1.0; 2])
        .constraint(vec![1.0, 1.0], 0.6)
        .constraint(vec![1.0, 1.0], 0.2)
        .build()
        .unwrap();
    c.value("start probability min rule", initial_probability(&two), 0.1);

    // adaptive reset
    let mut pv = ProbabilityVector::from_components(vec![0.2, 0.4, 0.6], 0.1).unwrap();
    let mean = pv.mean();
    full_rollback(&mut pv, mean).unwrap();
    c.truth("adaptive reset", pv.components().iter().all(|&p| close(p, 0.4, 1e-12)));
    c.value("adaptive reset p0", pv.p0(), 0.4);
    let mut pv = ProbabilityVector::from_components(vec![0.2, 0.4, 0.6], 0.1).unwrap();
    full_rollback(&mut pv, 0.1).unwrap();
    c.truth("plain reset", pv.components().iter().all(|&p| p == 0.1));

    // reconstruction
    let x = b(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    let pv = reconstruct_probability(&x, Some(0.1), None, Some(0.05));
    c.value("reconstruct one", pv.components()[0], 0.095 / 0.14);
    c.value("reconstruct zero", pv.components()[1], 0.005 / 0.14);
    c.value("reconstruct p0", pv.p0(), 0.1);
    let x = b(&[1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
    c.value("average estimate", average_probability(&x, None), 0.3);

    let total = c.total;
    if c.failed.is_empty() {
        Verdict::Pass(format!("{total} checks within 1e-12 relative"))
    } else {
        Verdict::Fail(format!("{} of {total} checks off: {}", c.failed.len(), c.failed.join("; ")))
    }
}

fn solution_bytes(s: &Solution) -> (String, String) {
    (serde_json::to_string_pretty(s).unwrap(), trace_to_csv(&s.trace))
}

fn strip_elapsed(csv: &str) -> String {
    csv.lines()
        .map(|l| l.split_once(',').map_or(l, |(_, rest)| rest))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Verdict {
    let p = generate_instance(&GeneratorSpec { dim: 120, n_constraints: 8, seed: 3, ..Default::default() }).unwrap();
    let config = |clock| SolverConfig { seed: 42, max_steps: Some(1500), clock, ..Default::default() };
    let logical: Vec<_> = (0..3).map(|_| solution_bytes(&solve(&p, &config(ClockKind::Logical)).unwrap())).collect();
    let wall: Vec<_> = (0..3).map(|_| solution_bytes(&solve(&p, &config(ClockKind::Wall)).unwrap())).collect();
    let logical_ok = logical.iter().all(|r| r == &logical[0]);
    let wall_solution_ok = wall.iter().all(|r| r.0 == wall[0].0) && wall[0].0 == logical[0].0;
    let wall_trace_ok = wall.iter().all(|r| strip_elapsed(&r.1) == strip_elapsed(&logical[0].1));
    verdict(
        logical_ok && wall_solution_ok && wall_trace_ok,
        format!(
            "logical clock: solution and trace byte-identical over 3 runs = {logical_ok}; \
             wall clock: solution identical = {wall_solution_ok}, trace identical apart from elapsed column = {wall_trace_ok}"
        ),
    )
}

fn parallel_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = Vec::new();
    for batch in 0..100 {
        let dim = rng.gen_range(5..200);
        let p = generate_instance(&GeneratorSpec {
            dim,
            n_constraints: rng.gen_range(1..10),
            margin: rng.gen_range(0.1..0.9),
            seed: rng.gen(),
            ..Default::default()
        })
        .unwrap();
        let comps = (0..dim).map(|_| rng.gen_range(0.01..0.99)).collect();
        let pv = ProbabilityVector::from_components(comps, 0.5).unwrap();
        let count = rng.gen_range(1..400);
        let workers = [2, 3, 4, 8][batch % 4];
        let key: [u8; 32] = rng.gen();
        let cp = p.penalty_coefficient();

        let single = parallel_evaluate(&p, &pv, count, 1, &key, cp).unwrap();
        let all = single.candidates.unwrap();
        let mut best = 0;
        let mut worst = 0;
        for (i, cand) in all.iter().enumerate() {
            if cand.f_m > all[best].f_m {
                best = i;
            }
            if cand.f_m < all[worst].f_m {
                worst = i;
            }
        }
        let multi = parallel_evaluate(&p, &pv, count, workers, &key, cp).unwrap();
        let e = &multi.extrema;
        let got_best = e.best.as_ref().unwrap();
        let got_worst = e.worst.as_ref().unwrap();
        let same = got_best.candidate.f_m == all[best].f_m
            && got_worst.candidate.f_m == all[worst].f_m
            && got_best.index == best
            && got_worst.index == worst
            && multi.candidates.as_deref() == Some(&all[..]);
        if !same {
            mismatches.push(batch);
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("100 batches on 2-8 workers, reduced best/worst equal to full scan; mismatching batches {mismatches:?}"),
    )
}

fn shared_memory_speedup() -> Verdict {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let p = generate_instance(&GeneratorSpec::profile("paper-large").unwrap()).unwrap();
    let serial = Runner::Solver(SolverConfig::default());
    let parallel = Runner::Solver(SolverConfig { workers: 4, ..Default::default() });
    if cores >= 4 {
        let spec = SpeedupSpec { k: 5, pilot_seconds: 20.0, cap_factor: 5.0, seed: 5 };
        let r = measure_speedup(&p, &serial, &parallel, &spec).unwrap();
        return verdict(
            r.speedup >= 2.0,
            format!(
                "D=10000, 100 rows, K=5 on {cores} cores: speedup {:.2} (need >= 2.0), efficiency {:.2}, {} censored",
                r.speedup, r.efficiency, r.censored
            ),
        );
    }
    let spec = SpeedupSpec { k: 1, pilot_seconds: 2.0, cap_factor: 5.0, seed: 5 };
    let r = measure_speedup(&p, &serial, &parallel, &spec).unwrap();
    Verdict::Unverified(format!(
        "host has {cores} core(s), criterion needs >= 4; scaled K=1 run measured speedup {:.2} ({} censored)",
        r.speedup, r.censored
    ))
}

fn tiny_cluster_config(seed: u64) -> ClusterConfig {
    ClusterConfig {
        solver: SolverConfig { seed, ..Default::default() },
        ..Default::default()
    }
}

fn broadcasts_increase(run: &pbsearch_core::cluster::ClusterRun) -> bool {
    run.nodes.iter().all(|n| {
        [MessageKind::ImproveFeasible, MessageKind::ImproveModified].iter().all(|&kind| {
            let fs: Vec<f64> = n.broadcasts.iter().filter(|m| m.kind == kind).map(|m| m.f).collect();
            fs.windows(2).all(|w| w[1] > w[0])
        })
    })
}

fn reevaluates(p: &Problem, s: &Solution) -> bool {
    let f = p.evaluate_objective(&s.x).unwrap();
    close(f, s.f, 1e-9) && p.is_feasible(&s.x).unwrap() == s.feasible
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn cluster_protocol() -> Verdict {
    let mut runs = 0;
    let mut optimal = 0;
    let mut reeval_ok = true;
    let mut monotone_ok = true;
    for inst in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + inst);
        let p = generate_instance(&GeneratorSpec {
            dim: rng.gen_range(8..=14),
            n_constraints: rng.gen_range(2..=5),
            seed: 2000 + inst,
            ..Default::default()
        })
        .unwrap();
        let best = brute_force(&p).unwrap();
        for seed in 0..3 {
            let run = run_in_process(&p, &tiny_cluster_config(seed), 4, None).unwrap();
            let s = &run.result.solution;
            runs += 1;
            optimal += (s.feasible && s.f == best.value) as usize;
            reeval_ok &= reevaluates(&p, s);
            monotone_ok &= broadcasts_increase(&run);
        }
    }
    let mid = generate_instance(&GeneratorSpec { dim: 300, n_constraints: 10, seed: 6, ..Default::default() }).unwrap();
    let mut mid_config = tiny_cluster_config(6);
    mid_config.solver.max_steps = Some(1500);
    mid_config.c_max = 100;
    let run = run_in_process(&mid, &mid_config, 4, None).unwrap();
    reeval_ok &= reevaluates(&mid, &run.result.solution);
    monotone_ok &= broadcasts_increase(&run);

    // one node with a stub transport against the plain solver
    let mut single_ok = true;
    for seed in 0..3 {
        let p = small_instance(3000 + seed);
        let mut config = tiny_cluster_config(seed);
        config.solver.clock = ClockKind::Logical;
        config.solver.max_steps = Some(2000);
        config.c_max = 50;
        let cluster = run_in_process(&p, &config, 1, None).unwrap().result.solution;
        let serial = solve(&p, &config.node_solver_config(0)).unwrap();
        single_ok &= solution_bytes(&cluster) == solution_bytes(&serial);
    }

    let rate = optimal as f64 / runs as f64;
    let core = rate >= 0.9 && reeval_ok && monotone_ok && single_ok;
    let mut detail = format!(
        "(a) re-evaluation within 1e-9 = {reeval_ok}; (b) broadcasts strictly increasing = {monotone_ok}; \
         (c) {optimal}/{runs} optimal ({:.1}%, need >= 90%); (d) single node equals serial = {single_ok}",
        100.0 * rate
    );

    // 4 nodes against 1 serial solver under the same wall-clock cap
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let p = generate_instance(&GeneratorSpec { dim: 2000, n_constraints: 20, seed: 8, ..Default::default() }).unwrap();
    let serial = Runner::Solver(SolverConfig::default());
    let cluster = Runner::Cluster { config: ClusterConfig { c_max: 100, ..Default::default() }, nodes: 4 };
    let spec = SpeedupSpec { k: 10, pilot_seconds: 1.0, cap_factor: 6.0, seed: 8 };
    let r = measure_speedup(&p, &serial, &cluster, &spec).unwrap();
    let time = |runs: &[pbsearch_core::bench::RunRecord]| {
        median(runs.iter().map(|x| if x.reached { x.seconds } else { r.cap_seconds }).collect())
    };
    let (ms, mc) = (time(&r.serial), time(&r.parallel));
    let substitute_ok = mc <= ms;
    detail += &format!(
        "; D=2000 time to target, median over 10 seeds: 4 nodes {mc:.3} s vs serial {ms:.3} s on {cores} core(s)"
    );
    if !core {
        return Verdict::Fail(detail);
    }
    if substitute_ok {
        Verdict::Pass(detail)
    } else if cores < 4 {
        Verdict::Unverified(detail + " (4 nodes share fewer than 4 cores; timing comparison needs >= 4)")
    } else {
        Verdict::Fail(detail)
    }
}

fn infeasible_handling() -> Verdict {
    let mut ok = 0;
    for seed in 0..5u64 {
        let p = generate_instance(&GeneratorSpec {
            dim: 40,
            n_constraints: 4,
            seed: 500 + seed,
            infeasible: true,
            ..Default::default()
        })
        .unwrap();
        let s = solve(&p, &SolverConfig { seed, max_steps: Some(2000), ..Default::default() }).unwrap();
        let lp: Vec<f64> = s.trace.iter().map(|t| t.least_penalty_value).collect();
        let monotone = lp.windows(2).all(|w| w[1] <= w[0]);
        let ends_at_record = lp.last() == Some(&s.least_penalty);
        if !s.feasible && monotone && ends_at_record && s.least_penalty > 0.0 {
            ok += 1;
        }
    }
    verdict(
        ok == 5,
        format!("{ok}/5 infeasible instances end infeasible with a non-increasing least-penalty trace"),
    )
}

fn reconstruction_fidelity() -> Verdict {
    let dim = 200;
    let draws = 10_000;
    let c = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x: Vec<bool> = (0..dim).map(|_| rng.gen_bool(0.1)).collect();
    let pv = reconstruct_probability(&bits(&x), None, None, Some(c));

    let p = x.iter().filter(|&&v| v).count() as f64 / dim as f64;
    let denom = c + (1.0 - 2.0 * c) * p;
    let one = (1.0 - c) * p / denom;
    let zero = c * p / denom;
    let mut agree = vec![0usize; dim];
    for _ in 0..draws {
        let y = pv.generate(&mut rng);
        for (i, a) in agree.iter_mut().enumerate() {
            *a += (y.get(i) == x[i]) as usize;
        }
    }
    let mut worst_z = 0.0f64;
    let mut formula_ok = true;
    for i in 0..dim {
        let (marginal, q) = if x[i] { (one, one) } else { (zero, 1.0 - zero) };
        formula_ok &= close(pv.components()[i], marginal, 1e-12);
        let sigma = (q * (1.0 - q) / draws as f64).sqrt();
        let freq = agree[i] as f64 / draws as f64;
        worst_z = worst_z.max((freq - q).abs() / sigma);
    }
    verdict(
        formula_ok && worst_z <= 4.0,
        format!(
            "density {p:.3}, C_corr 0.05, 10^4 draws over {dim} components: worst deviation {worst_z:.2} sigma (limit 4), components match closed form = {formula_ok}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("formula suite", formula_suite),
        ("determinism", determinism),
        ("parallel soundness", parallel_soundness),
        ("shared-memory speedup", shared_memory_speedup),
        ("cluster protocol", cluster_protocol),
        ("infeasible handling", infeasible_handling),
        ("reconstruction fidelity", reconstruction_fidelity),
    ];
    let only: Option<Vec<usize>> = std::env::var("PBSEARCH_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let v = check();
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Unverified(d) => ("UNVERIFIED", d),
        };
        println!("criterion {n} {tag} {name} [{secs:.1} s]: {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
