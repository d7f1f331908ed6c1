//! A simulated client.
//!
//! The local dataset is split into a learning part `D1` (the first
//! `floor(2N/3)` points) and a verification part `D2` (the rest). Learning
//! rounds draw a batch from `D1` without replacement, keep only points never
//! drawn before, and release a clipped, noised, debiased and quantized
//! gradient. The verification stage releases a noised and quantized loss
//! estimate for every iterate, computed on all of `D2`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::dp::mechanisms::{add_gaussian_noise, clip_in_place};
use crate::dp::params::DerivedParams;
use crate::dp::quantize::Quantizer;
use crate::error::{invalid, Result};
use crate::problems::{Dataset, Problem};
use crate::rng::{standard_normal, stream, Stage};

/// One client's upload for one learning round.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMessage {
    pub round: usize,
    pub client: usize,
    /// Grid indices of the `d` coordinates; `None` for a null message
    /// (no fresh samples this round).
    pub codes: Option<Vec<u64>>,
    /// Number of fresh samples `T_{k,m}` in the batch.
    pub fresh: usize,
    pub bits: u64,
}

impl GradientMessage {
    pub fn is_null(&self) -> bool {
        self.codes.is_none()
    }

    pub fn decode(&self, q: &Quantizer) -> Option<Vec<f64>> {
        self.codes
            .as_ref()
            .map(|c| c.iter().map(|&j| q.decode(j)).collect())
    }
}

/// One client's verification upload: one grid index per iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMessage {
    pub client: usize,
    pub codes: Vec<u64>,
    pub bits: u64,
}

impl LossMessage {
    pub fn decode(&self, q: &Quantizer) -> Vec<f64> {
        self.codes.iter().map(|&j| q.decode(j)).collect()
    }
}

/// Draws `batch` distinct indices from `0..pool`.
pub fn draw_batch<R: Rng + ?Sized>(pool: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    index::sample(rng, pool, batch).into_vec()
}

/// Fresh counts `T_{k}` of a client's sampling schedule over `rounds` rounds,
/// using exactly the streams a [`ClientState`] with the same seed would use.
pub fn fresh_counts(
    pool: usize,
    batch: usize,
    rounds: usize,
    seed: u64,
    client: usize,
) -> Vec<usize> {
    let mut seen = vec![false; pool];
    (0..rounds)
        .map(|k| {
            let mut rng = stream(seed, client, k, Stage::Learning);
            draw_batch(pool, batch, &mut rng)
                .into_iter()
                .filter(|&i| !core::mem::replace(&mut seen[i], true))
                .count()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ClientState {
    id: usize,
    seed: u64,
    data: Dataset,
    learning: usize,
    seen: Vec<bool>,
    /// Loss noise of `D2`, sorted, with prefix sums (`prefix[0] = 0`).
    sorted_loss_noise: Vec<f64>,
    prefix: Vec<f64>,
}

impl ClientState {
    /// Draws `n` samples for client `id` from `problem` and splits them.
    pub fn new(problem: &dyn Problem, id: usize, n: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, id, 0, Stage::Dataset);
        let data = problem.sample_dataset(n, &mut rng);
        Self::with_data(id, data, seed)
    }

    pub fn with_data(id: usize, data: Dataset, seed: u64) -> Result<Self> {
        let n = data.len();
        if n < 3 {
            return Err(invalid("a client needs at least 3 samples"));
        }
        let learning = 2 * n / 3;
        let mut sorted_loss_noise: Vec<f64> = (learning..n).map(|i| data.loss_noise(i)).collect();
        sorted_loss_noise.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(sorted_loss_noise.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for z in &sorted_loss_noise {
            acc += z;
            prefix.push(acc);
        }
        Ok(ClientState {
            id,
            seed,
            data,
            learning,
            seen: vec![false; learning],
            sorted_loss_noise,
            prefix,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// `|D1|`
    pub fn learning_len(&self) -> usize {
        self.learning
    }

    /// `|D2|`
    pub fn verification_len(&self) -> usize {
        self.data.len() - self.learning
    }

    pub fn seen_count(&self) -> usize {
        self.seen.iter().filter(|&&s| s).count()
    }

    /// The privatized, debiased gradient before quantization, together with
    /// `T_{k,m}`. Returns `None` when the batch has no fresh samples.
    ///
    /// Every point in the batch is marked as seen.
    pub fn private_gradient(
        &mut self,
        problem: &dyn Problem,
        x: &[f64],
        round: usize,
        params: &DerivedParams,
    ) -> Result<(Option<Vec<f64>>, usize)> {
        let d = problem.dim();
        if x.len() != d || self.data.dim() != d {
            return Err(invalid("point dimension does not match the problem"));
        }
        let n = params.inputs.n as f64;
        let k = params.k as f64;
        let mut rng = stream(self.seed, self.id, round, Stage::Learning);
        let batch = draw_batch(
            self.learning,
            params.batch_size().min(self.learning),
            &mut rng,
        );

        let mut base = vec![0.0; d];
        problem.client_subgradient(self.id, x, &mut base);
        let mut sum = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut fresh = 0;
        for i in batch {
            if core::mem::replace(&mut self.seen[i], true) {
                continue;
            }
            fresh += 1;
            for ((gj, bj), xi) in g.iter_mut().zip(&base).zip(self.data.gradient_noise(i)) {
                *gj = bj + xi;
            }
            clip_in_place(&mut g, params.g0);
            sum.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
        }
        if fresh == 0 {
            return Ok((None, 0));
        }
        let scale = 3.0 * k / n;
        sum.iter_mut().for_each(|s| *s *= scale);
        add_gaussian_noise(&mut sum, params.sigma0(), &mut rng);
        let debias = n / (3.0 * k * fresh as f64);
        sum.iter_mut().for_each(|s| *s *= debias);
        Ok((Some(sum), fresh))
    }

    /// One learning round at iterate `x`.
    pub fn gradient_round(
        &mut self,
        problem: &dyn Problem,
        x: &[f64],
        round: usize,
        params: &DerivedParams,
    ) -> Result<GradientMessage> {
        let (estimate, fresh) = self.private_gradient(problem, x, round, params)?;
        let q = Quantizer::new(params.d0, params.j0)?;
        let mut qrng = stream(self.seed, self.id, round, Stage::Quantization);
        let codes = estimate.map(|v| {
            v.iter()
                .map(|&w| q.encode(w, &mut qrng))
                .collect::<Vec<_>>()
        });
        let bits = match &codes {
            Some(c) => c.len() as u64 * params.j0 as u64,
            None => 1,
        };
        Ok(GradientMessage {
            round,
            client: self.id,
            codes,
            fresh,
            bits,
        })
    }

    /// `(3/N) sum_{z in D2} l(x; z) 1{|l(x; z)| <= G1}`, before noise.
    ///
    /// With `l(x; z) = L_m(x) + zeta` the kept samples are those with
    /// `zeta` in `[-G1 - L_m(x), G1 - L_m(x)]`, found by binary search.
    pub fn loss_estimate(&self, problem: &dyn Problem, x: &[f64], params: &DerivedParams) -> f64 {
        let n = params.inputs.n as f64;
        let base = problem.client_loss(self.id, x);
        let zs = &self.sorted_loss_noise;
        let lo = zs.partition_point(|&z| (base + z) < -params.g1);
        let hi = zs.partition_point(|&z| (base + z) <= params.g1);
        if hi <= lo {
            return 0.0;
        }
        let total = (hi - lo) as f64 * base + (self.prefix[hi] - self.prefix[lo]);
        3.0 * total / n
    }

    /// Verification uploads for all iterates.
    pub fn verification_estimates(
        &self,
        problem: &dyn Problem,
        iterates: &[Vec<f64>],
        params: &DerivedParams,
    ) -> Result<LossMessage> {
        if iterates.len() != params.k + 1 {
            return Err(invalid("verification needs exactly K + 1 iterates"));
        }
        let q = Quantizer::new(params.d1, params.j1)?;
        let sigma1 = params.sigma1();
        let mut rng = stream(self.seed, self.id, 0, Stage::Verification);
        let codes = iterates
            .iter()
            .map(|x| {
                let mut v = self.loss_estimate(problem, x, params);
                if sigma1 > 0.0 {
                    v += sigma1 * standard_normal(&mut rng);
                }
                q.encode(v, &mut rng)
            })
            .collect::<Vec<_>>();
        let bits = codes.len() as u64 * params.j1 as u64;
        Ok(LossMessage {
            client: self.id,
            codes,
            bits,
        })
    }
}
