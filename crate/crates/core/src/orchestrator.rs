//! End-to-end runs: learning stage, verification stage, selection of the
//! returned iterate, and communication accounting.
//!
//! Round `k` (for `k = 0, ..., K-1`) collects one gradient message per client
//! at `x_k`, averages the non-null ones and hands the negated average to the
//! cutting-plane step that produces `x_{k+1}`. The verification stage then
//! scores all `K + 1` iterates `x_0, ..., x_K`.

use alloc::format;
use alloc::vec::Vec;

use crate::client::{ClientState, GradientMessage, LossMessage};
use crate::dp::accountant::{charter_privacy_ledger, PrivacyLedger};
use crate::dp::params::{derive_params_with, DerivedParams, ParamInputs, PrivacyParams};
use crate::dp::quantize::Quantizer;
use crate::error::{Error, Result};
use crate::problems::{excess_risk, Problem};
use crate::vaidya::{CutKind, CuttingPlane, VaidyaConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub clients: usize,
    /// Samples per client.
    pub samples: usize,
    pub privacy: PrivacyParams,
    pub vaidya: VaidyaConfig,
    pub seed: u64,
    /// Skip the check `N >= 24 K ln(10 M (K + 1) / delta_err)`.
    pub override_n_floor: bool,
    /// Replaces the formula value of `K`.
    pub iterations: Option<usize>,
}

impl RunConfig {
    pub fn new(clients: usize, samples: usize, privacy: PrivacyParams, seed: u64) -> Self {
        RunConfig {
            clients,
            samples,
            privacy,
            vaidya: VaidyaConfig::default(),
            seed,
            override_n_floor: false,
            iterations: None,
        }
    }

    pub fn param_inputs(&self, problem: &dyn Problem) -> ParamInputs {
        ParamInputs {
            d: problem.dim(),
            m: self.clients,
            n: self.samples,
            r: problem.domain().side,
            sigma_g: problem.sigma_g(),
            sigma_f: problem.sigma_f(),
        }
    }

    /// Derived parameters after all precondition checks.
    pub fn derive(&self, problem: &dyn Problem) -> Result<DerivedParams> {
        self.vaidya.validate()?;
        let params = derive_params_with(
            &self.param_inputs(problem),
            self.vaidya.gamma,
            &self.privacy,
            self.iterations,
        )?;
        let floor = params.n_floor();
        if !self.override_n_floor && (self.samples as f64) < floor {
            return Err(Error::ConfigRejected(format!(
                "N = {} is below the sample floor {:.0} for K = {}",
                self.samples,
                libm::ceil(floor),
                params.k
            )));
        }
        Ok(params)
    }
}

/// What happened in one learning round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Server average of the non-null decoded messages; `None` if all were null.
    pub aggregate: Option<Vec<f64>>,
    pub step: CutKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTranscript {
    pub seed: u64,
    pub params: DerivedParams,
    pub ledger: PrivacyLedger,
    /// `x_0, ..., x_K`.
    pub iterates: Vec<Vec<f64>>,
    pub rounds: Vec<RoundRecord>,
    /// Round-major: message `k * M + m` is client `m` in round `k`.
    pub gradient_messages: Vec<GradientMessage>,
    pub loss_messages: Vec<LossMessage>,
    /// Server-side average loss estimate per iterate.
    pub loss_estimates: Vec<f64>,
    pub k_star: usize,
    pub output: Vec<f64>,
    /// Total uploaded bits averaged over clients.
    pub cc_bits: f64,
    /// Number of null gradient messages (1 bit each).
    pub null_messages: usize,
    pub excess_risk: Option<f64>,
}

impl RunTranscript {
    /// Total bits uploaded by client `m`.
    pub fn client_bits(&self, m: usize) -> u64 {
        let g: u64 = self
            .gradient_messages
            .iter()
            .filter(|g| g.client == m)
            .map(|g| g.bits)
            .sum();
        let l: u64 = self
            .loss_messages
            .iter()
            .filter(|l| l.client == m)
            .map(|l| l.bits)
            .sum();
        g + l
    }

    /// Recomputes the round-`k` aggregate from the stored messages.
    pub fn recompute_aggregate(&self, round: usize) -> Result<Option<Vec<f64>>> {
        let q = Quantizer::new(self.params.d0, self.params.j0)?;
        let m = self.params.inputs.m;
        Ok(server_average(
            &self.gradient_messages[round * m..(round + 1) * m],
            &q,
        ))
    }
}

/// Mean of the decoded non-null messages, or `None` if every message is null.
pub fn server_average(messages: &[GradientMessage], q: &Quantizer) -> Option<Vec<f64>> {
    let mut sum: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for v in messages.iter().filter_map(|msg| msg.decode(q)) {
        count += 1;
        match sum.as_mut() {
            None => sum = Some(v),
            Some(s) => s.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
        }
    }
    sum.map(|mut s| {
        s.iter_mut().for_each(|a| *a /= count as f64);
        s
    })
}

/// Index of the smallest estimate, lowest index on ties.
pub fn select_k_star(estimates: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, &v) in estimates.iter().enumerate() {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Per-iterate average of the decoded loss messages.
pub fn average_losses(messages: &[LossMessage], q: &Quantizer) -> Vec<f64> {
    let len = messages.first().map_or(0, |m| m.codes.len());
    let mut avg = alloc::vec![0.0; len];
    for msg in messages {
        for (a, v) in avg.iter_mut().zip(msg.decode(q)) {
            *a += v;
        }
    }
    let m = messages.len().max(1) as f64;
    avg.iter_mut().for_each(|a| *a /= m);
    avg
}

/// Runs both stages for `problem` and assembles the transcript.
pub fn run_charter(problem: &dyn Problem, cfg: &RunConfig) -> Result<RunTranscript> {
    let params = cfg.derive(problem)?;
    let ledger = charter_privacy_ledger(&params)?;
    let m = cfg.clients;
    let k = params.k;

    let mut clients = (0..m)
        .map(|id| ClientState::new(problem, id, cfg.samples, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let q0 = Quantizer::new(params.d0, params.j0)?;
    let q1 = Quantizer::new(params.d1, params.j1)?;

    let mut cp = CuttingPlane::new(problem.domain().polyhedron()?, cfg.vaidya)?;
    let mut iterates = Vec::with_capacity(k + 1);
    let mut rounds = Vec::with_capacity(k);
    let mut gradient_messages = Vec::with_capacity(k * m);
    iterates.push(cp.center().to_vec());
    for round in 0..k {
        let x = cp.center().to_vec();
        let start = gradient_messages.len();
        for c in clients.iter_mut() {
            gradient_messages.push(c.gradient_round(problem, &x, round, &params)?);
        }
        let aggregate = server_average(&gradient_messages[start..], &q0);
        let step = cp.step(aggregate.as_deref())?;
        iterates.push(step.center_after.clone());
        rounds.push(RoundRecord {
            round,
            aggregate,
            step: step.kind,
        });
    }

    let loss_messages = clients
        .iter()
        .map(|c| c.verification_estimates(problem, &iterates, &params))
        .collect::<Result<Vec<_>>>()?;
    let loss_estimates = average_losses(&loss_messages, &q1);
    let k_star = select_k_star(&loss_estimates);
    let output = iterates[k_star].clone();

    let total_bits: u64 = gradient_messages.iter().map(|g| g.bits).sum::<u64>()
        + loss_messages.iter().map(|l| l.bits).sum::<u64>();
    let null_messages = gradient_messages.iter().filter(|g| g.is_null()).count();
    let er = match excess_risk(problem, &output) {
        Ok(v) => Some(v),
        Err(Error::OracleUnavailable) => None,
        Err(e) => return Err(e),
    };
    Ok(RunTranscript {
        seed: cfg.seed,
        params,
        ledger,
        iterates,
        rounds,
        gradient_messages,
        loss_messages,
        loss_estimates,
        k_star,
        output,
        cc_bits: total_bits as f64 / m as f64,
        null_messages,
        excess_risk: er,
    })
}
