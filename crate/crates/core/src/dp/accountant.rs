//! (eps, delta) bookkeeping: Gaussian mechanism, amplification by
//! subsampling without replacement, and advanced composition.

use alloc::format;
use alloc::vec::Vec;

use crate::dp::mechanisms::gaussian_variance;
use crate::dp::params::DerivedParams;
use crate::error::{Error, Result};
use crate::math::{exp, exp_m1, ln, ln_1p, sqrt};

/// Relative slack allowed when comparing composed budgets with the target.
pub const LEDGER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Gaussian,
    Subsampled,
}

/// Which part of a client's data a guarantee refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    /// One round's batch drawn from the learning split.
    Batch,
    /// The learning split `D1`.
    Learning,
    /// The verification split `D2`.
    Verification,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub mechanism: Mechanism,
    pub eps: f64,
    pub delta: f64,
    pub partition: Partition,
}

/// Result of a `folds`-fold composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composed {
    pub folds: usize,
    pub eps: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrivacyLedger {
    entries: Vec<LedgerEntry>,
    learning: Option<Composed>,
    verification: Option<Composed>,
}

impl PrivacyLedger {
    pub fn record(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn learning(&self) -> Option<Composed> {
        self.learning
    }

    pub fn verification(&self) -> Option<Composed> {
        self.verification
    }

    /// The first recorded entry of the given kind on the given partition.
    pub fn find(&self, mechanism: Mechanism, partition: Partition) -> Option<&LedgerEntry> {
        self.entries
            .iter()
            .find(|e| e.mechanism == mechanism && e.partition == partition)
    }

    pub(crate) fn set_learning(&mut self, composed: Composed) {
        self.learning = Some(composed);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Guarantee of an `(eps, delta)` mechanism run on `k` points drawn without
/// replacement from `n`: `((e - 1) k eps / n, k delta / n)`. Requires `eps < 1`.
pub fn amplify_by_subsampling(eps: f64, delta: f64, k: usize, n: usize) -> Result<(f64, f64)> {
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::InvalidBudget(format!(
            "amplification needs eps in [0, 1), got {eps}"
        )));
    }
    if !(delta >= 0.0 && delta < 1.0) {
        return Err(Error::InvalidBudget(format!(
            "amplification needs delta in [0, 1), got {delta}"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidBudget(format!(
            "amplification needs 0 < k < n, got k = {k}, n = {n}"
        )));
    }
    let ratio = k as f64 / n as f64;
    Ok(((core::f64::consts::E - 1.0) * ratio * eps, ratio * delta))
}

/// `folds`-fold adaptive composition of an `(eps, delta)` mechanism:
///
/// `eps~ = min{k eps, k (e^eps - 1) eps / (e^eps + 1) + eps sqrt(2k ln(min{e + sqrt(k eps^2)/delta~, 1/delta~}))}`
/// and `delta_total = 1 - (1 - delta)^k (1 - delta~)`.
pub fn advanced_composition(
    eps: f64,
    delta: f64,
    folds: usize,
    tilde_delta: f64,
) -> Result<(f64, f64)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidBudget(format!(
            "composition needs eps > 0, got {eps}"
        )));
    }
    if !(delta >= 0.0 && delta <= 1.0) {
        return Err(Error::InvalidBudget(format!(
            "composition needs delta in [0, 1], got {delta}"
        )));
    }
    if !(tilde_delta > 0.0 && tilde_delta <= 1.0) {
        return Err(Error::InvalidBudget(format!(
            "composition needs delta~ in (0, 1], got {tilde_delta}"
        )));
    }
    if folds == 0 {
        return Err(Error::InvalidBudget(
            "composition needs at least one fold".into(),
        ));
    }
    let k = folds as f64;
    let ee = exp(eps);
    let inner = (core::f64::consts::E + sqrt(k * eps * eps) / tilde_delta).min(1.0 / tilde_delta);
    let advanced = k * (ee - 1.0) * eps / (ee + 1.0) + eps * sqrt(2.0 * k * ln(inner));
    let eps_total = (k * eps).min(advanced);
    let log_keep = k * ln_1p(-delta) + ln_1p(-tilde_delta);
    let delta_total = if delta == 1.0 || tilde_delta == 1.0 {
        1.0
    } else {
        -exp_m1(log_keep)
    };
    Ok((eps_total, delta_total))
}

/// The per-round gradient guarantee `(eps * sqrt(K / (15 ln(2.5/delta))), delta / 2)`.
pub fn gradient_budget(eps: f64, delta: f64, k: usize) -> (f64, f64) {
    (eps * sqrt(k as f64 / (15.0 * ln(2.5 / delta))), delta / 2.0)
}

/// The amplified per-round guarantee stated for the learning split,
/// `((e - 1) eps / 2 * sqrt(1 / (15 K ln(2.5/delta))), delta / (2K))`.
pub fn learning_budget(eps: f64, delta: f64, k: usize) -> (f64, f64) {
    let kf = k as f64;
    (
        (core::f64::consts::E - 1.0) * eps / 2.0 * sqrt(1.0 / (15.0 * kf * ln(2.5 / delta))),
        delta / (2.0 * kf),
    )
}

/// The per-iterate verification guarantee `eps * sqrt(9 / (20 K ln(2.5/delta)))`
/// with delta `delta / (2 (K + 1))`.
pub fn verification_budget(eps: f64, delta: f64, k: usize) -> (f64, f64) {
    let kf = k as f64;
    (
        eps * sqrt(9.0 / (20.0 * kf * ln(2.5 / delta))),
        delta / (2.0 * (kf + 1.0)),
    )
}

fn within(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + LEDGER_TOLERANCE)
}

/// Builds and checks the full privacy chain for one client.
///
/// Learning stage: the Gaussian release of the batch gradient (sensitivity
/// `6 K G0 / N`) is `(eps0, delta0)`-private for the batch; subsampling the
/// batch from `D1` amplifies it, and `K` rounds are composed with
/// `delta~ = delta / 2`. Verification stage: each of the `K + 1` loss releases
/// (sensitivity `3 G1 / N`) is composed likewise. Both stages must fit within
/// `(eps_dp, delta_dp)`; they touch disjoint splits.
///
/// Non-private parameters produce an empty ledger.
pub fn charter_privacy_ledger(params: &DerivedParams) -> Result<PrivacyLedger> {
    let mut ledger = PrivacyLedger::default();
    let privacy = params.privacy;
    if !privacy.is_private() {
        return Ok(ledger);
    }
    let (eps, delta, k) = (privacy.eps, privacy.delta, params.k);
    let n = params.inputs.n as f64;

    let (eps0, delta0) = gradient_budget(eps, delta, k);
    let sensitivity0 = 6.0 * k as f64 * params.g0 / n;
    let need0 = gaussian_variance(sensitivity0, eps0, delta0)?;
    if !within(need0, params.sigma0_sq) {
        return Err(Error::LedgerViolation(format!(
            "gradient noise variance {} is below the {} required for ({eps0}, {delta0})",
            params.sigma0_sq, need0
        )));
    }
    ledger.record(LedgerEntry {
        mechanism: Mechanism::Gaussian,
        eps: eps0,
        delta: delta0,
        partition: Partition::Batch,
    });

    let (eps1, delta1) =
        amplify_by_subsampling(eps0, delta0, params.batch_size(), params.learning_split())?;
    ledger.record(LedgerEntry {
        mechanism: Mechanism::Subsampled,
        eps: eps1,
        delta: delta1,
        partition: Partition::Learning,
    });
    let (le, ld) = advanced_composition(eps1, delta1, k, delta / 2.0)?;
    ledger.learning = Some(Composed {
        folds: k,
        eps: le,
        delta: ld,
    });

    let delta2 = delta / (2.0 * (k as f64 + 1.0));
    let sensitivity1 = 3.0 * params.g1 / n;
    let eps2 = sensitivity1 * sqrt(2.0 * ln(5.0 / (4.0 * delta2))) / params.sigma1();
    ledger.record(LedgerEntry {
        mechanism: Mechanism::Gaussian,
        eps: eps2,
        delta: delta2,
        partition: Partition::Verification,
    });
    let (ve, vd) = advanced_composition(eps2, delta2, k + 1, delta / 2.0)?;
    ledger.verification = Some(Composed {
        folds: k + 1,
        eps: ve,
        delta: vd,
    });

    for (stage, c) in [
        ("learning", ledger.learning),
        ("verification", ledger.verification),
    ] {
        let c = c.expect("both stages are composed above");
        if !within(c.eps, eps) || !within(c.delta, delta) {
            return Err(Error::LedgerViolation(format!(
                "{stage} stage composes to ({}, {}) which exceeds ({eps}, {delta})",
                c.eps, c.delta
            )));
        }
    }
    Ok(ledger)
}
