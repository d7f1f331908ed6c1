//! Experiment configuration files.
//!
//! The format is line oriented. Blank lines and lines starting with `#` are
//! ignored, `[name]` opens a section, and `key = value` sets `name.key`
//! (keys before the first header live in the top-level section). Lists are
//! comma separated; seeds also accept a half-open range `a..b`.
//!
//! ```text
//! problem = hard-instance
//! seeds = 0..20
//!
//! [problem]
//! d = 3
//!
//! [privacy]
//! eps = inf
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use charter_core::baseline::DpSgdConfig;
use charter_core::dp::{iteration_count, min_samples, ParamInputs, PrivacyParams};
use charter_core::orchestrator::RunConfig;
use charter_core::problems::{build_problem, Problem, ProblemConfig, CATALOG};
use charter_core::vaidya::{VaidyaConfig, DEFAULT_ETA, DEFAULT_GAMMA};
use charter_core::CenteringOptions;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        message: message.into(),
    }
}

/// Every accepted `section.key`.
pub const KEYS: &[&str] = &[
    "problem",
    "seeds",
    "out",
    "baseline",
    "problem.d",
    "problem.side",
    "problem.sigma_g",
    "problem.sigma_f",
    "problem.alpha",
    "problem.target",
    "problem.seed",
    "run.clients",
    "run.samples",
    "run.iterations",
    "run.override_n_floor",
    "privacy.eps",
    "privacy.eps_scale",
    "privacy.delta",
    "privacy.delta_err",
    "vaidya.gamma",
    "vaidya.eta",
    "vaidya.max_rows",
    "vaidya.center_tol",
    "vaidya.center_max_iter",
    "dpsgd.rounds",
    "dpsgd.step",
    "sweep.d",
    "sweep.clients",
    "sweep.samples",
    "sweep.mn",
    "sweep.eps",
    "sweep.eps_scale",
];

/// Parses the raw text into `section.key -> value`.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let at = |message: String| ConfigError {
            line: Some(i + 1),
            message,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(format!("unterminated section header `{line}`")))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        if !KEYS.contains(&key.as_str()) {
            return Err(at(format!("unknown key `{key}`")));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(at(format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = v
        .split(',')
        .map(|s| parse_value(key, s.trim()))
        .collect::<Result<_, _>>()?;
    if v.trim().is_empty() || items.is_empty() {
        return Err(err(format!("`{key}`: empty list")));
    }
    Ok(items)
}

/// `inf` or a positive number.
pub fn parse_eps(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => parse_value(key, v),
    }
}

fn parse_seeds(v: &str) -> Result<Vec<u64>, ConfigError> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (
            parse_value("seeds", a.trim())?,
            parse_value("seeds", b.trim())?,
        );
        if a >= b {
            return Err(err("`seeds`: empty range"));
        }
        return Ok((a..b).collect());
    }
    parse_list("seeds", v)
}

/// Sample count per client: an explicit number or the smallest count that
/// satisfies the sample floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Samples {
    Fixed(usize),
    Auto,
}

/// How the privacy budget is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// `eps_dp` directly; `inf` is non-private.
    Eps(f64),
    /// `eps_dp = c / sqrt(K)`.
    Scale(f64),
}

/// Grid axes for `sweep`; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub d: Vec<usize>,
    pub clients: Vec<usize>,
    pub samples: Vec<usize>,
    /// Total samples `M N`; sets `N = mn / M`.
    pub mn: Vec<usize>,
    pub budgets: Vec<Budget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub d: usize,
    pub side: f64,
    pub sigma_g: f64,
    pub sigma_f: f64,
    pub alpha: f64,
    pub target: Option<Vec<f64>>,
    /// Seed of the problem instance; `None` follows the run seed.
    pub problem_seed: Option<u64>,
    pub clients: usize,
    pub samples: Samples,
    pub iterations: Option<usize>,
    pub override_n_floor: bool,
    pub budget: Budget,
    pub delta: f64,
    pub delta_err: f64,
    pub vaidya: VaidyaConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub baseline: bool,
    pub dpsgd: DpSgdConfig,
    pub sweep: SweepAxes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: "max-abs".to_string(),
            d: 2,
            side: 2.0,
            sigma_g: 1.0,
            sigma_f: 1.0,
            alpha: 1.0,
            target: None,
            problem_seed: None,
            clients: 2,
            samples: Samples::Auto,
            iterations: None,
            override_n_floor: false,
            budget: Budget::Eps(f64::INFINITY),
            delta: 1e-5,
            delta_err: 0.1,
            vaidya: VaidyaConfig::default(),
            seeds: vec![0],
            out: None,
            baseline: false,
            dpsgd: DpSgdConfig::default(),
            sweep: SweepAxes::default(),
        }
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        ExperimentConfig::from_entries(&parse_entries(text)?)
    }
}

impl ExperimentConfig {
    pub fn from_entries(e: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if e.contains_key("privacy.eps") && e.contains_key("privacy.eps_scale") {
            return Err(err(
                "`privacy.eps` and `privacy.eps_scale` are mutually exclusive",
            ));
        }
        let mut c = ExperimentConfig::default();
        let mut centering = CenteringOptions::default();
        let (mut gamma, mut eta) = (DEFAULT_GAMMA, DEFAULT_ETA);
        for (key, v) in e {
            let k = key.as_str();
            match k {
                "problem" => c.problem = v.clone(),
                "seeds" => c.seeds = parse_seeds(v)?,
                "out" => c.out = Some(PathBuf::from(v)),
                "baseline" => c.baseline = parse_value(k, v)?,
                "problem.d" => c.d = parse_value(k, v)?,
                "problem.side" => c.side = parse_value(k, v)?,
                "problem.sigma_g" => c.sigma_g = parse_value(k, v)?,
                "problem.sigma_f" => c.sigma_f = parse_value(k, v)?,
                "problem.alpha" => c.alpha = parse_value(k, v)?,
                "problem.target" => c.target = Some(parse_list(k, v)?),
                "problem.seed" => c.problem_seed = Some(parse_value(k, v)?),
                "run.clients" => c.clients = parse_value(k, v)?,
                "run.samples" => {
                    c.samples = if v == "auto" {
                        Samples::Auto
                    } else {
                        Samples::Fixed(parse_value(k, v)?)
                    }
                }
                "run.iterations" => c.iterations = Some(parse_value(k, v)?),
                "run.override_n_floor" => c.override_n_floor = parse_value(k, v)?,
                "privacy.eps" => c.budget = Budget::Eps(parse_eps(k, v)?),
                "privacy.eps_scale" => c.budget = Budget::Scale(parse_value(k, v)?),
                "privacy.delta" => c.delta = parse_value(k, v)?,
                "privacy.delta_err" => c.delta_err = parse_value(k, v)?,
                "vaidya.gamma" => gamma = parse_value(k, v)?,
                "vaidya.eta" => eta = parse_value(k, v)?,
                "vaidya.max_rows" => c.vaidya.max_rows = Some(parse_value(k, v)?),
                "vaidya.center_tol" => centering.tol = parse_value(k, v)?,
                "vaidya.center_max_iter" => centering.max_iter = parse_value(k, v)?,
                "dpsgd.rounds" => c.dpsgd.rounds = Some(parse_value(k, v)?),
                "dpsgd.step" => c.dpsgd.step = Some(parse_value(k, v)?),
                "sweep.d" => c.sweep.d = parse_list(k, v)?,
                "sweep.clients" => c.sweep.clients = parse_list(k, v)?,
                "sweep.samples" => c.sweep.samples = parse_list(k, v)?,
                "sweep.mn" => c.sweep.mn = parse_list(k, v)?,
                "sweep.eps" => {
                    let list = v
                        .split(',')
                        .map(|s| parse_eps(k, s.trim()).map(Budget::Eps))
                        .collect::<Result<Vec<_>, _>>()?;
                    c.sweep.budgets.extend(list);
                }
                "sweep.eps_scale" => {
                    let list: Vec<f64> = parse_list(k, v)?;
                    c.sweep.budgets.extend(list.into_iter().map(Budget::Scale));
                }
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        c.vaidya.gamma = gamma;
        c.vaidya.eta = eta;
        c.vaidya.centering = centering;
        c.validate()?;
        Ok(c)
    }

    /// Checks the fields that do not depend on derived parameters.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !CATALOG.contains(&self.problem.as_str()) {
            return Err(err(format!(
                "unknown problem `{}`; expected one of {}",
                self.problem,
                CATALOG.join(", ")
            )));
        }
        if self.d == 0 || self.clients == 0 {
            return Err(err("`problem.d` and `run.clients` must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(err("`seeds` is empty"));
        }
        if !self.sweep.mn.is_empty() && !self.sweep.samples.is_empty() {
            return Err(err("`sweep.mn` and `sweep.samples` are mutually exclusive"));
        }
        self.vaidya.validate().map_err(|e| err(e.to_string()))
    }

    pub fn problem_config(&self, run_seed: u64) -> ProblemConfig {
        ProblemConfig {
            d: self.d,
            clients: self.clients,
            side: self.side,
            sigma_g: self.sigma_g,
            sigma_f: self.sigma_f,
            alpha: self.alpha,
            target: self.target.clone(),
            seed: self.problem_seed.unwrap_or(run_seed),
        }
    }

    pub fn build_problem(&self, run_seed: u64) -> charter_core::Result<Box<dyn Problem>> {
        build_problem(&self.problem, &self.problem_config(run_seed))
    }

    fn param_inputs(&self, n: usize) -> ParamInputs {
        ParamInputs {
            d: self.d,
            m: self.clients,
            n,
            r: self.side,
            sigma_g: self.sigma_g,
            sigma_f: self.sigma_f,
        }
    }

    /// Samples per client after resolving `auto`.
    pub fn resolved_samples(&self) -> usize {
        match self.samples {
            Samples::Fixed(n) => n,
            Samples::Auto => min_samples(
                &self.param_inputs(0),
                self.vaidya.gamma,
                self.delta_err,
                self.iterations,
            ),
        }
    }

    /// `eps_dp` after resolving a `c / sqrt(K)` budget.
    pub fn resolved_eps(&self) -> f64 {
        match self.budget {
            Budget::Eps(e) => e,
            Budget::Scale(c) => {
                let k = self.iterations.unwrap_or_else(|| {
                    iteration_count(
                        &self.param_inputs(self.resolved_samples()),
                        self.vaidya.gamma,
                    )
                });
                c / (k as f64).sqrt()
            }
        }
    }

    pub fn privacy(&self) -> PrivacyParams {
        let eps = self.resolved_eps();
        if eps.is_finite() {
            PrivacyParams::new(eps, self.delta, self.delta_err)
        } else {
            PrivacyParams::non_private(self.delta_err)
        }
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        let mut rc = RunConfig::new(self.clients, self.resolved_samples(), self.privacy(), seed);
        rc.vaidya = self.vaidya;
        rc.override_n_floor = self.override_n_floor;
        rc.iterations = self.iterations;
        rc
    }

    /// One configuration per grid cell, in row-major axis order
    /// (`d`, `clients`, `samples` or `mn`, budget).
    pub fn grid(&self) -> Vec<ExperimentConfig> {
        let mut cells = vec![self.clone()];
        if !self.sweep.d.is_empty() {
            cells = cells
                .iter()
                .flat_map(|c| {
                    self.sweep
                        .d
                        .iter()
                        .map(move |&d| ExperimentConfig { d, ..c.clone() })
                })
                .collect();
        }
        if !self.sweep.clients.is_empty() {
            cells = cells
                .iter()
                .flat_map(|c| {
                    self.sweep
                        .clients
                        .iter()
                        .map(move |&clients| ExperimentConfig {
                            clients,
                            ..c.clone()
                        })
                })
                .collect();
        }
        if !self.sweep.samples.is_empty() {
            cells = cells
                .iter()
                .flat_map(|c| {
                    self.sweep.samples.iter().map(move |&n| ExperimentConfig {
                        samples: Samples::Fixed(n),
                        ..c.clone()
                    })
                })
                .collect();
        }
        if !self.sweep.mn.is_empty() {
            cells = cells
                .iter()
                .flat_map(|c| {
                    self.sweep.mn.iter().map(move |&mn| ExperimentConfig {
                        samples: Samples::Fixed(mn / c.clients),
                        ..c.clone()
                    })
                })
                .collect();
        }
        if !self.sweep.budgets.is_empty() {
            cells = cells
                .iter()
                .flat_map(|c| {
                    self.sweep
                        .budgets
                        .iter()
                        .map(move |&budget| ExperimentConfig {
                            budget,
                            ..c.clone()
                        })
                })
                .collect();
        }
        cells
            .iter_mut()
            .for_each(|c| c.sweep = SweepAxes::default());
        cells
    }
}
