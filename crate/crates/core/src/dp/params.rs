//! The derived parameters: iteration count, clipping radii, noise levels,
//! quantizer ranges and bit widths. All logarithms are natural except the
//! `log2` in the bit widths.

use alloc::format;

use crate::dp::quantize::MAX_BITS;
use crate::error::{invalid, Error, Result};
use crate::math::{ceil, ln, log2, sqrt};

/// Problem-side inputs to the parameter calculator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamInputs {
    pub d: usize,
    /// Number of clients.
    pub m: usize,
    /// Samples per client.
    pub n: usize,
    /// Side of the hypercube domain.
    pub r: f64,
    pub sigma_g: f64,
    pub sigma_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    /// `f64::INFINITY` selects non-private mode.
    pub eps: f64,
    pub delta: f64,
    pub delta_err: f64,
}

impl PrivacyParams {
    pub fn new(eps: f64, delta: f64, delta_err: f64) -> Self {
        PrivacyParams {
            eps,
            delta,
            delta_err,
        }
    }

    pub fn non_private(delta_err: f64) -> Self {
        PrivacyParams {
            eps: f64::INFINITY,
            delta: 0.5,
            delta_err,
        }
    }

    pub fn is_private(&self) -> bool {
        self.eps.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub inputs: ParamInputs,
    pub gamma: f64,
    pub privacy: PrivacyParams,
    pub k: usize,
    pub g0: f64,
    pub g1: f64,
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    pub d0: f64,
    pub d1: f64,
    pub j0: u32,
    pub j1: u32,
}

/// Smallest per-client sample count for which the fresh-sample count stays
/// within a constant factor of the batch size with high probability:
/// `24 K ln(10 M (K + 1) / delta_err)`.
pub fn n_floor(k: usize, m: usize, delta_err: f64) -> f64 {
    24.0 * k as f64 * ln(10.0 * m as f64 * (k as f64 + 1.0) / delta_err)
}

fn check_inputs(inputs: &ParamInputs, gamma: f64, privacy: &PrivacyParams) -> Result<()> {
    if inputs.d == 0 || inputs.m == 0 {
        return Err(invalid("d and M must be positive"));
    }
    if inputs.n < 3 {
        return Err(invalid(
            "N must be at least 3 so both data splits are non-empty",
        ));
    }
    if !(inputs.r > 0.0) || !inputs.r.is_finite() {
        return Err(invalid(format!(
            "R must be positive and finite, got {}",
            inputs.r
        )));
    }
    for (name, v) in [("sigma_g", inputs.sigma_g), ("sigma_f", inputs.sigma_f)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(invalid(format!(
                "{name} must be nonnegative and finite, got {v}"
            )));
        }
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma must lie in (0, 1)"));
    }
    if !(privacy.eps > 0.0) {
        return Err(invalid("eps_dp must be positive"));
    }
    if !(privacy.delta > 0.0 && privacy.delta < 1.0) {
        return Err(invalid("delta_dp must lie in (0, 1)"));
    }
    if !(privacy.delta_err > 0.0 && privacy.delta_err < 1.0) {
        return Err(invalid("delta_err must lie in (0, 1)"));
    }
    Ok(())
}

/// `K = ceil((4d / gamma) ln(d sqrt(MN) / (gamma sigma_g)))`, at least 1.
pub fn iteration_count(inputs: &ParamInputs, gamma: f64) -> usize {
    let d = inputs.d as f64;
    let mn = inputs.m as f64 * inputs.n as f64;
    let k = ceil(4.0 * d / gamma * ln(d * sqrt(mn) / (gamma * inputs.sigma_g)));
    if k.is_finite() && k >= 1.0 {
        k as usize
    } else {
        1
    }
}

/// Smallest `N` with `N >= n_floor(K(N), M, delta_err)`, where `K(N)` is the
/// formula iteration count (or `k_override` when given). `inputs.n` is ignored.
pub fn min_samples(
    inputs: &ParamInputs,
    gamma: f64,
    delta_err: f64,
    k_override: Option<usize>,
) -> usize {
    let floor_at = |n: usize| {
        let k = k_override.unwrap_or_else(|| iteration_count(&ParamInputs { n, ..*inputs }, gamma));
        ceil(n_floor(k, inputs.m, delta_err)).max(3.0) as usize
    };
    let mut hi = 3usize;
    while floor_at(hi) > hi {
        hi = floor_at(hi).max(hi * 2);
    }
    let mut lo = 2usize;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if floor_at(mid) <= mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `ceil(log2(arg))` clamped to `1..=52`. In non-private mode `arg` is the
/// `eps -> infinity` limit `2 D sqrt(N) / sigma`, which is infinite when
/// `sigma = 0`.
fn bit_width(range: f64, n: f64, eps: f64, scale: f64, sigma: f64) -> u32 {
    let arg = if eps.is_finite() {
        2.0 * range * n * eps / (scale + sigma * eps * sqrt(n))
    } else {
        2.0 * range * sqrt(n) / sigma
    };
    let j = ceil(log2(arg));
    if j.is_nan() || j < 1.0 {
        1
    } else if j > MAX_BITS as f64 {
        MAX_BITS
    } else {
        j as u32
    }
}

/// Computes every derived parameter for the given inputs.
pub fn derive_params(
    inputs: &ParamInputs,
    gamma: f64,
    privacy: &PrivacyParams,
) -> Result<DerivedParams> {
    derive_params_with(inputs, gamma, privacy, None)
}

/// As [`derive_params`], with an optional fixed iteration count replacing the
/// formula value. The formula needs `sigma_g > 0`.
pub fn derive_params_with(
    inputs: &ParamInputs,
    gamma: f64,
    privacy: &PrivacyParams,
    iterations: Option<usize>,
) -> Result<DerivedParams> {
    check_inputs(inputs, gamma, privacy)?;
    let k = match iterations {
        Some(0) => return Err(invalid("K must be at least 1")),
        Some(k) => k,
        None if inputs.sigma_g > 0.0 => iteration_count(inputs, gamma),
        None => {
            return Err(Error::ConfigRejected(
                "K is unbounded for sigma_g = 0; set the iteration count explicitly".into(),
            ))
        }
    };
    complete(inputs, gamma, privacy, k)
}

impl DerivedParams {
    /// The same parameters recomputed with `k` iterations instead of the formula value.
    pub fn with_iterations(&self, k: usize) -> Result<DerivedParams> {
        if k == 0 {
            return Err(invalid("K must be at least 1"));
        }
        complete(&self.inputs, self.gamma, &self.privacy, k)
    }

    pub fn sigma0(&self) -> f64 {
        sqrt(self.sigma0_sq)
    }

    pub fn sigma1(&self) -> f64 {
        sqrt(self.sigma1_sq)
    }

    /// Per-round batch size `ceil(N / 3K)`.
    pub fn batch_size(&self) -> usize {
        let n = self.inputs.n;
        n.div_ceil(3 * self.k).min(self.learning_split())
    }

    /// `|D1| = floor(2N / 3)`.
    pub fn learning_split(&self) -> usize {
        2 * self.inputs.n / 3
    }

    /// `|D2| = N - |D1|`.
    pub fn verification_split(&self) -> usize {
        self.inputs.n - self.learning_split()
    }

    /// Upper limit `1.5 / sqrt(K)` on eps_dp.
    pub fn eps_limit(&self) -> f64 {
        1.5 / sqrt(self.k as f64)
    }

    pub fn n_floor(&self) -> f64 {
        n_floor(self.k, self.inputs.m, self.privacy.delta_err)
    }

    /// Bits uploaded per client: `K d J0 + (K + 1) J1`.
    pub fn predicted_cc(&self) -> u64 {
        let k = self.k as u64;
        k * self.inputs.d as u64 * self.j0 as u64 + (k + 1) * self.j1 as u64
    }
}

fn complete(
    inputs: &ParamInputs,
    gamma: f64,
    privacy: &PrivacyParams,
    k: usize,
) -> Result<DerivedParams> {
    let kf = k as f64;
    let eps = privacy.eps;
    if eps.is_finite() {
        let limit = 1.5 / sqrt(kf);
        if !(eps < limit) {
            return Err(Error::PrivacyBudgetTooLarge { eps, limit });
        }
    }
    let d = inputs.d as f64;
    let m = inputs.m as f64;
    let n = inputs.n as f64;
    let delta = privacy.delta;
    let tail = sqrt(2.0 * ln(4.0 * m * n));
    let g0 = 1.0 + inputs.sigma_g * tail;
    let g1 = inputs.r + inputs.sigma_f * tail;
    let (sigma0_sq, sigma1_sq) = if eps.is_finite() {
        let l0 = ln(2.5 / delta);
        let l1 = ln(2.5 * kf / delta);
        (
            1080.0 * g0 * g0 * l0 * l0 * kf / (n * n * eps * eps),
            40.0 * g1 * g1 * l1 * l1 * kf / (n * n * eps * eps),
        )
    } else {
        (0.0, 0.0)
    };
    let d0 = g0 + sqrt(sigma0_sq) * sqrt(32.0 * ln(40.0 * m * kf * d / privacy.delta_err));
    let d1 = g1 + sqrt(sigma1_sq) * sqrt(2.0 * ln(16.0 * m * kf / privacy.delta_err));
    let j0 = bit_width(d0, n, eps, sqrt(d), inputs.sigma_g);
    let j1 = bit_width(d1, n, eps, inputs.r * sqrt(d), inputs.sigma_f);
    Ok(DerivedParams {
        inputs: *inputs,
        gamma,
        privacy: *privacy,
        k,
        g0,
        g1,
        sigma0_sq,
        sigma1_sq,
        d0,
        d1,
        j0,
        j1,
    })
}
