//! Batch generation and evaluation across worker threads.
//!
//! Every candidate index owns its own random stream derived from a
//! per-batch key, so the batch contents do not depend on how indices are
//! spread over workers. Workers pull the next unclaimed index from a
//! shared counter and keep private extrema; the coordinator only merges
//! those extrema.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Candidate, Problem};
use crate::sampler::ProbabilityVector;

/// Seed material for one batch.
pub type BatchKey = [u8; 32];

/// The random stream of candidate `index` within a batch.
pub fn candidate_rng(key: &BatchKey, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(index as u64);
    rng
}

/// A candidate tagged with its position in the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub candidate: Candidate,
}

/// Best and worst candidates by `f^M`, plus the best feasible one by `f`.
///
/// Ties go to the lower batch index.
#[derive(Clone, Debug, PartialEq)]
pub struct Extrema {
    pub best: Option<Ranked>,
    pub worst: Option<Ranked>,
    pub best_feasible: Option<Ranked>,
    pub least_penalty: f64,
    pub count: usize,
}

impl Default for Extrema {
    fn default() -> Self {
        Self {
            best: None,
            worst: None,
            best_feasible: None,
            least_penalty: f64::INFINITY,
            count: 0,
        }
    }
}

fn beats(a: &Ranked, b: &Ranked, key: impl Fn(&Candidate) -> f64, higher: bool) -> bool {
    let (va, vb) = (key(&a.candidate), key(&b.candidate));
    if va == vb {
        a.index < b.index
    } else if higher {
        va > vb
    } else {
        va < vb
    }
}

fn keep(slot: &mut Option<Ranked>, other: Ranked, key: impl Fn(&Candidate) -> f64, higher: bool) {
    match slot {
        Some(cur) if !beats(&other, cur, key, higher) => {}
        _ => *slot = Some(other),
    }
}

impl Extrema {
    pub fn offer(&mut self, index: usize, candidate: Candidate) {
        self.count += 1;
        self.least_penalty = self.least_penalty.min(candidate.f_p);
        let ranked = Ranked { index, candidate };
        if ranked.candidate.is_feasible() {
            keep(&mut self.best_feasible, ranked.clone(), |c| c.f, true);
        }
        keep(&mut self.worst, ranked.clone(), |c| c.f_m, false);
        keep(&mut self.best, ranked, |c| c.f_m, true);
    }

    pub fn merge(mut self, other: Extrema) -> Extrema {
        self.count += other.count;
        self.least_penalty = self.least_penalty.min(other.least_penalty);
        if let Some(r) = other.best {
            keep(&mut self.best, r, |c| c.f_m, true);
        }
        if let Some(r) = other.worst {
            keep(&mut self.worst, r, |c| c.f_m, false);
        }
        if let Some(r) = other.best_feasible {
            keep(&mut self.best_feasible, r, |c| c.f, true);
        }
        self
    }
}

/// Result of one batch.
#[derive(Clone, Debug)]
pub struct BatchOutcome {
    /// Reduction of the per-worker extrema.
    pub extrema: Extrema,
    pub per_worker: Vec<Extrema>,
    /// All candidates in index order, when requested.
    pub candidates: Option<Vec<Candidate>>,
}

/// Evaluation lanes. One worker runs inline on the caller's thread.
pub struct Engine {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("workers", &self.workers).finish()
    }
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::invalid("at least one worker is required"));
        }
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("pbsearch-worker-{i}"))
                    .build()
                    .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { workers, pool })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Generates and scores `count` candidates from `pv`.
    pub fn evaluate(
        &self,
        problem: &Problem,
        pv: &ProbabilityVector,
        count: usize,
        key: &BatchKey,
        c_penalty: f64,
        keep_all: bool,
    ) -> Result<BatchOutcome> {
        if pv.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                found: pv.len(),
            });
        }
        if !(c_penalty > 0.0) {
            return Err(Error::invalid("penalty coefficient must be positive"));
        }
        let work = |index: usize| {
            let mut rng = candidate_rng(key, index);
            let x = pv.generate(&mut rng);
            let s = problem.score_unchecked(&x, c_penalty);
            Candidate {
                x,
                f: s.f,
                f_p: s.f_p,
                f_m: s.f_m,
            }
        };

        let Some(pool) = &self.pool else {
            let mut ext = Extrema::default();
            let mut all = keep_all.then(|| Vec::with_capacity(count));
            for i in 0..count {
                let c = work(i);
                if let Some(all) = all.as_mut() {
                    all.push(c.clone());
                }
                ext.offer(i, c);
            }
            return Ok(BatchOutcome {
                extrema: ext.clone(),
                per_worker: vec![ext],
                candidates: all,
            });
        };

        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(usize, Extrema, Vec<(usize, Candidate)>)>> =
            Mutex::new(Vec::with_capacity(self.workers));
        pool.scope(|s| {
            for w in 0..self.workers {
                let next = &next;
                let results = &results;
                let work = &work;
                s.spawn(move |_| {
                    let mut ext = Extrema::default();
                    let mut mine = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= count {
                            break;
                        }
                        let c = work(i);
                        if keep_all {
                            mine.push((i, c.clone()));
                        }
                        ext.offer(i, c);
                    }
                    results
                        .lock()
                        .expect("worker result lock poisoned")
                        .push((w, ext, mine));
                });
            }
        });

        let mut results = results.into_inner().expect("worker result lock poisoned");
        results.sort_by_key(|(w, _, _)| *w);
        let mut candidates = keep_all.then(|| Vec::with_capacity(count));
        let mut per_worker = Vec::with_capacity(results.len());
        let mut extrema = Extrema::default();
        let mut gathered = Vec::new();
        for (_, ext, mine) in results {
            extrema = extrema.merge(ext.clone());
            per_worker.push(ext);
            gathered.extend(mine);
        }
        if let Some(all) = candidates.as_mut() {
            gathered.sort_by_key(|(i, _)| *i);
            all.extend(gathered.into_iter().map(|(_, c)| c));
        }
        Ok(BatchOutcome {
            extrema,
            per_worker,
            candidates,
        })
    }
}

/// Generates and evaluates `count` candidates on `workers` lanes and
/// returns every candidate plus the per-worker extrema.
pub fn parallel_evaluate(
    problem: &Problem,
    pv: &ProbabilityVector,
    count: usize,
    workers: usize,
    key: &BatchKey,
    c_penalty: f64,
) -> Result<BatchOutcome> {
    Engine::new(workers)?.evaluate(problem, pv, count, key, c_penalty, true)
}
