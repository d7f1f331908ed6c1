use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::dp::accountant::{LedgerEntry, Mechanism, Partition, PrivacyLedger};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::standard_normal;

/// `v * min(1, radius / |v|)`.
pub fn clip(v: &[f64], radius: f64) -> Vec<f64> {
    let n = math::norm2(v);
    if n <= radius {
        return v.to_vec();
    }
    let s = radius / n;
    v.iter().map(|x| x * s).collect()
}

/// In-place variant of [`clip`].
pub fn clip_in_place(v: &mut [f64], radius: f64) {
    let n = math::norm2(v);
    if n > radius {
        let s = radius / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Per-coordinate variance `2 ln(5 / (4 delta)) sensitivity^2 / eps^2` of the
/// Gaussian mechanism.
pub fn gaussian_variance(sensitivity: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidBudget(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidBudget(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
        return Err(Error::InvalidBudget(format!(
            "sensitivity must be nonnegative, got {sensitivity}"
        )));
    }
    Ok(2.0 * math::ln(5.0 / (4.0 * delta)) * sensitivity * sensitivity / (eps * eps))
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every coordinate.
pub fn add_gaussian_noise<R: Rng + ?Sized>(v: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for x in v.iter_mut() {
        *x += sigma * standard_normal(rng);
    }
}

/// Releases `v` through the Gaussian mechanism and records the release.
pub fn gaussian_mechanism<R: Rng + ?Sized>(
    v: &[f64],
    sensitivity: f64,
    eps: f64,
    delta: f64,
    partition: Partition,
    ledger: &mut PrivacyLedger,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let var = gaussian_variance(sensitivity, eps, delta)?;
    let mut out = v.to_vec();
    add_gaussian_noise(&mut out, math::sqrt(var), rng);
    ledger.record(LedgerEntry {
        mechanism: Mechanism::Gaussian,
        eps,
        delta,
        partition,
    });
    Ok(out)
}
