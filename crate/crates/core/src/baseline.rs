//! Distributed minibatch DP-SGD, used as a comparison point.
//!
//! Each round every client draws a batch of `b = ceil(N / (2T))` points
//! without replacement from its whole dataset, averages the per-sample
//! gradients clipped at `G0`, adds Gaussian noise and uploads the result as
//! `d` 32-bit floats. The server averages, takes a projected step of size
//! `step / sqrt(t + 1)` and the output is the running average of the iterates.
//!
//! Privacy: the batch average has sensitivity `2 G0 / b`. Each round is
//! calibrated to the same per-round budget as the CHARTER learning stage,
//! amplified by the actual ratio `b / N` and composed over `T` rounds.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::client::draw_batch;
use crate::dp::accountant::{
    advanced_composition, amplify_by_subsampling, gradient_budget, Composed, LedgerEntry,
    Mechanism, Partition, PrivacyLedger, LEDGER_TOLERANCE,
};
use crate::dp::mechanisms::{add_gaussian_noise, clip_in_place, gaussian_variance};
use crate::error::{invalid, Error, Result};
use crate::orchestrator::RunConfig;
use crate::problems::{excess_risk, Problem};
use crate::rng::{stream, Stage};

/// Bits per uploaded coordinate.
pub const FLOAT_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DpSgdConfig {
    /// Number of rounds `T`; `None` uses the CHARTER iteration count.
    pub rounds: Option<usize>,
    /// Base step size; `None` uses `R / 2`.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSgdRun {
    pub rounds: usize,
    pub batch: usize,
    pub step: f64,
    /// Per-coordinate noise standard deviation of one client upload.
    pub sigma: f64,
    pub ledger: PrivacyLedger,
    pub output: Vec<f64>,
    /// `T d 32` bits per client.
    pub cc_bits: u64,
    pub excess_risk: Option<f64>,
}

fn project(x: &mut [f64], center: &[f64], side: f64) {
    for (v, c) in x.iter_mut().zip(center) {
        *v = v.clamp(c - side / 2.0, c + side / 2.0);
    }
}

/// Noise level and ledger for `rounds` releases on batches of `batch` out of `n`.
fn calibrate(
    cfg: &RunConfig,
    g0: f64,
    rounds: usize,
    batch: usize,
    n: usize,
) -> Result<(f64, PrivacyLedger)> {
    let mut ledger = PrivacyLedger::default();
    let privacy = cfg.privacy;
    if !privacy.is_private() {
        return Ok((0.0, ledger));
    }
    let (eps0, delta0) = gradient_budget(privacy.eps, privacy.delta, rounds);
    let var = gaussian_variance(2.0 * g0 / batch as f64, eps0, delta0)?;
    ledger.record(LedgerEntry {
        mechanism: Mechanism::Gaussian,
        eps: eps0,
        delta: delta0,
        partition: Partition::Batch,
    });
    let (eps1, delta1) = amplify_by_subsampling(eps0, delta0, batch, n)?;
    ledger.record(LedgerEntry {
        mechanism: Mechanism::Subsampled,
        eps: eps1,
        delta: delta1,
        partition: Partition::Learning,
    });
    let (e, d) = advanced_composition(eps1, delta1, rounds, privacy.delta / 2.0)?;
    if e > privacy.eps * (1.0 + LEDGER_TOLERANCE) || d > privacy.delta * (1.0 + LEDGER_TOLERANCE) {
        return Err(Error::LedgerViolation(format!(
            "DP-SGD composes to ({e}, {d}) which exceeds ({}, {})",
            privacy.eps, privacy.delta
        )));
    }
    ledger.set_learning(Composed {
        folds: rounds,
        eps: e,
        delta: d,
    });
    Ok((libm::sqrt(var), ledger))
}

/// Runs the baseline with the same clients, samples and privacy target as `cfg`.
pub fn run_dpsgd(problem: &dyn Problem, cfg: &RunConfig, sgd: &DpSgdConfig) -> Result<DpSgdRun> {
    let params = cfg.derive(problem)?;
    let d = problem.dim();
    let n = cfg.samples;
    let rounds = sgd.rounds.unwrap_or(params.k);
    if rounds == 0 {
        return Err(invalid("DP-SGD needs at least one round"));
    }
    let domain = problem.domain().clone();
    let step = sgd.step.unwrap_or(domain.side / 2.0);
    if !(step >= 0.0) || !step.is_finite() {
        return Err(invalid("step size must be nonnegative and finite"));
    }
    let batch = n.div_ceil(2 * rounds).min(n - 1).max(1);
    let (sigma, ledger) = calibrate(cfg, params.g0, rounds, batch, n)?;

    let data = (0..cfg.clients)
        .map(|m| problem.sample_dataset(n, &mut stream(cfg.seed, m, 0, Stage::Dataset)))
        .collect::<Vec<_>>();

    let mut x = domain.center.clone();
    let mut avg = vec![0.0; d];
    let mut base = vec![0.0; d];
    let mut g = vec![0.0; d];
    for t in 0..rounds {
        let mut update = vec![0.0; d];
        for (m, data) in data.iter().enumerate() {
            let mut rng = stream(cfg.seed, m, t, Stage::Baseline);
            problem.client_subgradient(m, &x, &mut base);
            let mut local = vec![0.0; d];
            for i in draw_batch(n, batch, &mut rng) {
                for ((gj, bj), xi) in g.iter_mut().zip(&base).zip(data.gradient_noise(i)) {
                    *gj = bj + xi;
                }
                clip_in_place(&mut g, params.g0);
                local
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(a, b)| *a += b / batch as f64);
            }
            add_gaussian_noise(&mut local, sigma, &mut rng);
            for (u, l) in update.iter_mut().zip(&local) {
                *u += (*l as f32) as f64 / cfg.clients as f64;
            }
        }
        let eta = step / libm::sqrt(t as f64 + 1.0);
        x.iter_mut().zip(&update).for_each(|(xi, u)| *xi -= eta * u);
        project(&mut x, &domain.center, domain.side);
        let w = 1.0 / (t as f64 + 1.0);
        avg.iter_mut()
            .zip(&x)
            .for_each(|(a, xi)| *a += w * (xi - *a));
    }
    let output = avg;
    let er = match excess_risk(problem, &output) {
        Ok(v) => Some(v),
        Err(Error::OracleUnavailable) => None,
        Err(e) => return Err(e),
    };
    Ok(DpSgdRun {
        rounds,
        batch,
        step,
        sigma,
        ledger,
        output,
        cc_bits: rounds as u64 * d as u64 * FLOAT_BITS,
        excess_risk: er,
    })
}
