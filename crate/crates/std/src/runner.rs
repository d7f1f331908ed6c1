//! Running experiments: single runs, sweeps over a worker pool, and the
//! cutting-plane benchmark.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use charter_core::baseline::run_dpsgd;
use charter_core::orchestrator::{run_charter, RunTranscript};
use charter_core::problems::{build_problem, excess_risk, ProblemConfig};
use charter_core::vaidya::{run_cutting_plane, VaidyaConfig};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::results::ResultRow;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CHARTER_THREADS";

/// Worker count from `CHARTER_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One seed of one grid cell.
#[derive(Debug, Clone)]
pub struct Job {
    pub run_id: usize,
    pub seed: u64,
    pub config: ExperimentConfig,
}

/// The rows of a job plus, for CHARTER, its transcript.
#[derive(Debug, Clone)]
pub struct JobOutput {
    pub rows: Vec<ResultRow>,
    pub transcript: RunTranscript,
}

pub fn jobs(cells: &[ExperimentConfig]) -> Vec<Job> {
    cells
        .iter()
        .flat_map(|c| c.seeds.iter().map(move |&seed| (seed, c)))
        .enumerate()
        .map(|(run_id, (seed, c))| Job {
            run_id,
            seed,
            config: c.clone(),
        })
        .collect()
}

fn elapsed_ms(start: Instant, timing: bool) -> u64 {
    if timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

/// Runs CHARTER (and the baseline when enabled) for one job.
pub fn run_job(job: &Job, timing: bool) -> Result<JobOutput, CliError> {
    let cfg = &job.config;
    let problem = cfg.build_problem(job.seed)?;
    let rc = cfg.run_config(job.seed);
    let start = Instant::now();
    let transcript = run_charter(problem.as_ref(), &rc)?;
    let row = ResultRow::from_charter(
        job.run_id,
        &cfg.problem,
        &transcript,
        elapsed_ms(start, timing),
    );
    let mut rows = vec![row];
    if cfg.baseline {
        let start = Instant::now();
        let run = run_dpsgd(problem.as_ref(), &rc, &cfg.dpsgd)?;
        rows.push(ResultRow::from_dpsgd(
            job.run_id,
            &rows[0],
            &run,
            elapsed_ms(start, timing),
        ));
    }
    Ok(JobOutput { rows, transcript })
}

/// Runs `jobs` on `threads` workers and hands each output to `sink` in job
/// order. Stops at the first failing job (in job order) and returns its error;
/// outputs of earlier jobs have already been delivered.
pub fn run_jobs<F>(jobs: &[Job], threads: usize, timing: bool, mut sink: F) -> Result<(), CliError>
where
    F: FnMut(&Job, JobOutput) -> Result<(), CliError>,
{
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<JobOutput, CliError>)>();
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if tx.send((i, run_job(job, timing))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut expected = 0;
        let mut outcome = Ok(());
        for (i, res) in rx {
            pending.insert(i, res);
            while let Some(res) = pending.remove(&expected) {
                let delivered = res.and_then(|out| sink(&jobs[expected], out));
                if let Err(e) = delivered {
                    stop.store(true, Ordering::Relaxed);
                    outcome = Err(e);
                    break;
                }
                expected += 1;
            }
            if outcome.is_err() {
                break;
            }
        }
        outcome
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub d: usize,
    pub iterations: usize,
    pub adds: usize,
    pub drops: usize,
    pub final_rows: usize,
    pub best_excess_risk: f64,
    pub wall_ms: u64,
}

/// Exact-subgradient cutting-plane run on the max-abs instance.
pub fn bench_vaidya(
    d: usize,
    iterations: usize,
    vaidya: VaidyaConfig,
    seed: u64,
    timing: bool,
) -> Result<BenchResult, CliError> {
    let pc = ProblemConfig {
        sigma_g: 0.0,
        sigma_f: 0.0,
        seed,
        ..ProblemConfig::new(d)
    };
    let problem = build_problem("max-abs", &pc)?;
    let start = Instant::now();
    let run = run_cutting_plane(problem.domain().polyhedron()?, vaidya, iterations, |x| {
        problem
            .true_subgradient(x)
            .expect("max-abs has a subgradient oracle")
    })?;
    let wall_ms = elapsed_ms(start, timing);
    let mut best = f64::INFINITY;
    for x in &run.iterates {
        best = best.min(excess_risk(problem.as_ref(), x)?);
    }
    Ok(BenchResult {
        d,
        iterations,
        adds: run.steps.iter().filter(|s| s.is_add()).count(),
        drops: run
            .steps
            .iter()
            .filter(|s| matches!(s.kind, charter_core::CutKind::Drop { .. }))
            .count(),
        final_rows: run.final_polyhedron.num_rows(),
        best_excess_risk: best,
        wall_ms,
    })
}
