//! The subcommands, independent of argument parsing.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use charter_core::dp::accountant::{charter_privacy_ledger, Mechanism, Partition};
use charter_core::dp::{derive_params_with, DerivedParams, ParamInputs};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::results::{aggregate, write_aggregate, ResultRow, RowWriter};
use crate::runner::{bench_vaidya, jobs, run_jobs, BenchResult};
use crate::transcript;

/// `dir/stem<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn open(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One row per seed (two with the baseline). With an output path the rows go
/// to that CSV and each seed's transcript to `<stem>-seed<seed>.transcript`;
/// otherwise the CSV goes to `stdout`.
pub fn cmd_run(
    cfg: &ExperimentConfig,
    threads: usize,
    timing: bool,
    stdout: &mut dyn Write,
) -> Result<Vec<ResultRow>, CliError> {
    let cells = [cfg.clone()];
    execute(&cells, threads, timing, stdout, cfg.out.as_deref(), true)
}

/// Cartesian product of the sweep axes times the seeds. With an output path
/// the per-cell summary goes to `<stem>.aggregate.csv`.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    threads: usize,
    timing: bool,
    stdout: &mut dyn Write,
) -> Result<Vec<ResultRow>, CliError> {
    let cells = cfg.grid();
    let rows = execute(&cells, threads, timing, stdout, cfg.out.as_deref(), false)?;
    let summary = aggregate(&rows);
    match cfg.out.as_deref() {
        Some(path) => write_aggregate(open(&sibling(path, ".aggregate.csv"))?, &summary)?,
        None => write_aggregate(&mut *stdout, &summary)?,
    }
    Ok(rows)
}

fn execute(
    cells: &[ExperimentConfig],
    threads: usize,
    timing: bool,
    stdout: &mut dyn Write,
    out: Option<&Path>,
    transcripts: bool,
) -> Result<Vec<ResultRow>, CliError> {
    preflight(cells)?;
    let sink: Box<dyn Write + '_> = match out {
        Some(path) => Box::new(open(path)?),
        None => Box::new(&mut *stdout),
    };
    let mut writer = RowWriter::new(sink)?;
    let mut rows = Vec::new();
    run_jobs(&jobs(cells), threads, timing, |job, output| {
        for r in &output.rows {
            writer.write(r)?;
        }
        if let (true, Some(path)) = (transcripts, out) {
            let t = sibling(path, &format!("-seed{}.transcript", job.seed));
            let mut f = open(&t)?;
            transcript::write(&mut f, &job.config.problem, &output.transcript)?;
            f.flush()?;
        }
        rows.extend(output.rows);
        Ok(())
    })?;
    Ok(rows)
}

/// Checks every cell's preconditions before any output is written.
fn preflight(cells: &[ExperimentConfig]) -> Result<(), CliError> {
    for c in cells {
        let seed = c.seeds[0];
        let problem = c.build_problem(seed)?;
        let params = c.run_config(seed).derive(problem.as_ref())?;
        charter_privacy_ledger(&params)?;
    }
    Ok(())
}

/// Derived parameters for the configuration, without building a problem.
pub fn derive(cfg: &ExperimentConfig) -> Result<DerivedParams, CliError> {
    let inputs = ParamInputs {
        d: cfg.d,
        m: cfg.clients,
        n: cfg.resolved_samples(),
        r: cfg.side,
        sigma_g: cfg.sigma_g,
        sigma_f: cfg.sigma_f,
    };
    Ok(derive_params_with(
        &inputs,
        cfg.vaidya.gamma,
        &cfg.privacy(),
        cfg.iterations,
    )?)
}

/// Output of `validate-params`: the report, and the ledger failure if the
/// privacy chain does not fit the budget (the report is complete either way).
#[derive(Debug)]
pub struct ParamsReport {
    pub text: String,
    pub params: DerivedParams,
    pub ledger_error: Option<CliError>,
}

/// Human-readable report of the derived parameters, the privacy chain and
/// the predicted communication cost.
pub fn cmd_validate_params(cfg: &ExperimentConfig) -> Result<ParamsReport, CliError> {
    let p = derive(cfg)?;
    let (ledger, ledger_error) = match charter_privacy_ledger(&p) {
        Ok(l) => (Some(l), None),
        Err(e) => (None, Some(CliError::from(e))),
    };
    let mut s = String::new();
    let i = &p.inputs;
    let _ = writeln!(
        s,
        "inputs: d={} M={} N={} R={} sigma_g={} sigma_f={} gamma={}",
        i.d, i.m, i.n, i.r, i.sigma_g, i.sigma_f, p.gamma
    );
    let delta = if p.privacy.is_private() {
        p.privacy.delta
    } else {
        0.0
    };
    let _ = writeln!(
        s,
        "privacy: eps={} delta={delta} delta_err={}",
        p.privacy.eps, p.privacy.delta_err
    );
    for (name, v) in [
        ("K", p.k.to_string()),
        ("G0", p.g0.to_string()),
        ("G1", p.g1.to_string()),
        ("sigma0_sq", p.sigma0_sq.to_string()),
        ("sigma1_sq", p.sigma1_sq.to_string()),
        ("D0", p.d0.to_string()),
        ("D1", p.d1.to_string()),
        ("J0", p.j0.to_string()),
        ("J1", p.j1.to_string()),
    ] {
        let _ = writeln!(s, "{name} = {v}");
    }
    let _ = writeln!(
        s,
        "batch = {}  |D1| = {}  |D2| = {}",
        p.batch_size(),
        p.learning_split(),
        p.verification_split()
    );
    let floor = p.n_floor();
    let _ = writeln!(
        s,
        "sample floor = {:.0} ({})",
        floor.ceil(),
        if (i.n as f64) >= floor {
            "met"
        } else {
            "NOT met"
        }
    );
    match &ledger_error {
        Some(e) => {
            let _ = writeln!(s, "ledger: {}: {e}", e.name());
        }
        None if !p.privacy.is_private() => {
            let _ = writeln!(s, "ledger: non-private");
        }
        None => {}
    }
    if let Some(ledger) = ledger.filter(|l| !l.is_empty()) {
        let chain = [
            ("eps0", Mechanism::Gaussian, Partition::Batch),
            ("eps1", Mechanism::Subsampled, Partition::Learning),
            ("eps2", Mechanism::Gaussian, Partition::Verification),
        ];
        for (name, m, part) in chain {
            if let Some(e) = ledger.find(m, part) {
                let _ = writeln!(s, "{name} = {}  delta = {}", e.eps, e.delta);
            }
        }
        for (name, c) in [
            ("learning", ledger.learning()),
            ("verification", ledger.verification()),
        ] {
            if let Some(c) = c {
                let _ = writeln!(
                    s,
                    "composed {name}: {} folds -> eps = {} delta = {}",
                    c.folds, c.eps, c.delta
                );
            }
        }
    }
    let _ = writeln!(
        s,
        "predicted CC = K*d*J0 + (K+1)*J1 = {} bits per client",
        p.predicted_cc()
    );
    Ok(ParamsReport {
        text: s,
        params: p,
        ledger_error,
    })
}

pub fn cmd_bench_vaidya(
    dims: &[usize],
    iterations: usize,
    cfg: &ExperimentConfig,
    seed: u64,
    timing: bool,
) -> Result<Vec<BenchResult>, CliError> {
    dims.iter()
        .map(|&d| bench_vaidya(d, iterations, cfg.vaidya, seed, timing))
        .collect()
}

pub fn render_bench(results: &[BenchResult]) -> String {
    let mut s = String::from("d,iterations,adds,drops,final_rows,best_excess_risk,wall_ms\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.d, r.iterations, r.adds, r.drops, r.final_rows, r.best_excess_risk, r.wall_ms
        );
    }
    s
}
