//! Argument parsing and dispatch for the `charter` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{cmd_bench_vaidya, cmd_run, cmd_sweep, cmd_validate_params, render_bench};
use crate::config::{parse_entries, ConfigError, ExperimentConfig, KEYS};
use crate::error::CliError;
use crate::runner::thread_count;

#[derive(Parser)]
#[command(
    name = "charter",
    version,
    about = "Private, communication-efficient cutting-plane experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run CHARTER (and optionally DP-SGD) once per seed.
    Run(Common),
    /// Run every cell of the sweep grid for every seed.
    Sweep(Common),
    /// Print the derived parameters, the privacy chain and the predicted CC.
    ValidateParams(Common),
    /// Deterministic exact-gradient cutting-plane benchmark on max-abs.
    BenchVaidya {
        #[command(flatten)]
        common: Common,
        /// Comma separated dimensions.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 300)]
        iterations: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines with `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed, replacing `seeds`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the per-client sample floor check.
    #[arg(long)]
    override_n_floor: bool,
    /// Write 0 in the `wall_ms` column so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    clients: Option<usize>,
    /// Samples per client, or `auto` for the smallest count meeting the floor.
    #[arg(long)]
    samples: Option<String>,
    /// `inf` for non-private runs.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    delta_err: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Also run the DP-SGD baseline.
    #[arg(long)]
    baseline: bool,
    /// Any configuration key, e.g. `--set vaidya.max_rows=80`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        let mut entries = parse_entries(&text)?;
        let mut set = |k: &str, v: String| entries.insert(k.to_string(), v);
        let flags: [(&str, Option<String>); 13] = [
            ("seeds", self.seed.map(|s| s.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            (
                "run.override_n_floor",
                self.override_n_floor.then(|| "true".into()),
            ),
            ("baseline", self.baseline.then(|| "true".into())),
            ("problem", self.problem.clone()),
            ("problem.d", self.d.map(|v| v.to_string())),
            ("run.clients", self.clients.map(|v| v.to_string())),
            ("run.samples", self.samples.clone()),
            ("privacy.eps", self.eps.clone()),
            ("privacy.delta", self.delta.map(|v| v.to_string())),
            ("privacy.delta_err", self.delta_err.map(|v| v.to_string())),
            ("vaidya.gamma", self.gamma.map(|v| v.to_string())),
            ("vaidya.eta", self.eta.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                set(k, v);
            }
        }
        for kv in &self.sets {
            let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError {
                line: None,
                message: format!("--set expects KEY=VALUE, got `{kv}`"),
            })?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(ConfigError {
                    line: None,
                    message: format!("unknown key `{k}`"),
                }
                .into());
            }
            set(k, v.trim().to_string());
        }
        if entries.contains_key("privacy.eps") && self.eps.is_some() {
            entries.remove("privacy.eps_scale");
        }
        Ok(ExperimentConfig::from_entries(&entries)?)
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            cmd_run(&c.load()?, thread_count(), !c.no_timing, out)?;
        }
        Command::Sweep(c) => {
            cmd_sweep(&c.load()?, thread_count(), !c.no_timing, out)?;
        }
        Command::ValidateParams(c) => {
            let report = cmd_validate_params(&c.load()?)?;
            out.write_all(report.text.as_bytes())?;
            if let Some(e) = report.ledger_error {
                return Err(e);
            }
        }
        Command::BenchVaidya {
            common,
            dims,
            iterations,
        } => {
            let cfg = common.load()?;
            let results =
                cmd_bench_vaidya(&dims, iterations, &cfg, cfg.seeds[0], !common.no_timing)?;
            out.write_all(render_bench(&results).as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Exit status for a failed command.
pub const FAILURE: u8 = 2;

/// Runs the command line `args` (including the program name). Errors are
/// reported on `err` as `error: <Name>: <message>`; usage errors use clap's
/// own status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code() as u8;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", e.name());
            FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::{read_rows, Algo, HEADER};
    use crate::transcript::{parse_messages, summary_value};
    use std::path::Path;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Instant;

    fn scratch(name: &str) -> PathBuf {
        static NEXT: AtomicUsize = AtomicUsize::new(0);
        let dir = std::env::temp_dir().join(format!(
            "charter-cli-{}-{}-{name}",
            std::process::id(),
            NEXT.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn call(args: &[&str]) -> (u8, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("charter").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    const SMALL: &[&str] = &[
        "--d",
        "2",
        "--clients",
        "2",
        "--samples",
        "300",
        "--override-n-floor",
        "--set",
        "run.iterations=20",
        "--no-timing",
    ];

    fn with(extra: &[&'static str]) -> Vec<&'static str> {
        SMALL.iter().chain(extra).copied().collect()
    }

    #[test]
    fn run_is_byte_reproducible() {
        let args: Vec<&str> = ["run"]
            .into_iter()
            .chain(with(&["--seed", "4", "--eps", "0.1"]))
            .collect();
        let (code, first, err) = call(&args);
        assert_eq!(code, 0, "{err}");
        let (_, second, _) = call(&args);
        assert_eq!(first, second);
        assert_eq!(first.lines().next().unwrap(), HEADER.join(","));
        let rows = read_rows(first.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].seed, rows[0].wall_ms), (4, 0));
    }

    #[test]
    fn large_budget_is_rejected() {
        let (code, out, err) = call(&["run", "--d", "3", "--eps", "1"]);
        assert_eq!(code, FAILURE);
        assert!(out.is_empty());
        assert!(err.starts_with("error: PrivacyBudgetTooLarge:"), "{err}");
    }

    #[test]
    fn empty_axis_writes_nothing() {
        let dir = scratch("empty-axis");
        let csv = dir.join("sweep.csv");
        let (code, _, err) = call(&["sweep", "--set", "sweep.d=", "--out", csv.to_str().unwrap()]);
        assert_eq!(code, FAILURE);
        assert!(err.contains("ConfigError"), "{err}");
        assert!(!csv.exists());
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 0);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let (code, _, err) = call(&["run", "--set", "vaidya.speed=3"]);
        assert_eq!(code, FAILURE);
        assert!(err.starts_with("error: ConfigError:"), "{err}");
    }

    fn file(path: &Path) -> String {
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn transcripts_agree_with_rows() {
        let dir = scratch("transcript");
        let csv = dir.join("runs.csv");
        let args: Vec<&str> = ["run"]
            .into_iter()
            .chain(with(&["--set", "seeds=1,2", "--eps", "0.1"]))
            .chain(["--out", csv.to_str().unwrap()])
            .collect();
        let (code, out, err) = call(&args);
        assert_eq!(code, 0, "{err}");
        assert!(out.is_empty());
        let rows = read_rows(file(&csv).as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        for row in rows {
            let text = file(&dir.join(format!("runs-seed{}.transcript", row.seed)));
            let messages = parse_messages(&text).unwrap();
            let total: u64 = messages.iter().map(|m| m.3).sum();
            assert_eq!(total as f64 / row.m as f64, row.cc_bits);
            let per_client =
                row.k as u64 * row.d as u64 * row.j0 as u64 + (row.k as u64 + 1) * row.j1 as u64;
            let nulls: u64 = summary_value(&text, "null_messages")
                .unwrap()
                .parse()
                .unwrap();
            let shortfall = nulls * (row.d as u64 * row.j0 as u64 - 1);
            assert_eq!(total, row.m as u64 * per_client - shortfall);
            assert_eq!(
                summary_value(&text, "k_star").unwrap(),
                row.k_star.to_string()
            );
        }
    }

    #[test]
    fn baseline_rows_follow_charter_rows() {
        let args: Vec<&str> = ["run"].into_iter().chain(with(&["--baseline"])).collect();
        let (code, out, err) = call(&args);
        assert_eq!(code, 0, "{err}");
        let rows = read_rows(out.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].algo, rows[1].algo), (Algo::Charter, Algo::DpSgd));
        assert_eq!(rows[1].cc_bits, (rows[1].k * rows[1].d * 32) as f64);
        assert_eq!(rows[1].k, 20);
    }

    fn report_value<'a>(text: &'a str, key: &str) -> &'a str {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
            .unwrap_or_else(|| panic!("no `{key}` in report:\n{text}"))
    }

    #[test]
    fn validate_params_report() {
        let base = [
            "validate-params",
            "--d",
            "4",
            "--gamma",
            "0.2",
            "--clients",
            "4",
            "--samples",
            "768",
            "--set",
            "problem.side=1",
        ];
        let (code, out, err) = call(&base);
        assert_eq!(code, 0, "{err}");
        assert_eq!(report_value(&out, "K"), "561");
        assert!(report_value(&out, "G0").starts_with("5.3396"));
        let sigma = |eps: &'static str| {
            let args: Vec<&str> = base.iter().copied().chain(["--eps", eps]).collect();
            let (_, out, _) = call(&args);
            report_value(&out, "sigma0_sq").parse::<f64>().unwrap()
        };
        assert_eq!(sigma("0.02"), 4.0 * sigma("0.04"));
    }

    #[test]
    fn minimal_run_is_fast() {
        let start = Instant::now();
        let (code, _, err) = call(&["run", "--problem", "max-abs", "--d", "2", "--clients", "1"]);
        assert_eq!(code, 0, "{err}");
        assert!(start.elapsed().as_secs_f64() < 10.0);
    }

    #[test]
    fn bench_lists_every_dimension() {
        let (code, out, err) = call(&[
            "bench-vaidya",
            "--dims",
            "2,3",
            "--iterations",
            "50",
            "--no-timing",
        ]);
        assert_eq!(code, 0, "{err}");
        assert_eq!(out.lines().count(), 3);
    }
}
