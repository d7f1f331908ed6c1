//! Benchmark problems with known population loss.
//!
//! A datum is the pair of noise realizations `(xi, zeta)` with
//! `xi ~ N(0, sigma_g^2 / d I)` and `zeta ~ N(0, sigma_f^2)`. For client `m`
//! the sample loss and gradient are `L_m(x) + zeta` and `g_m(x) + xi`, where
//! `g_m(x)` is a subgradient of the client's expected loss `L_m`. The
//! population loss is the average of the `L_m`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::polytope::Polyhedron;
use crate::rng::{standard_normal, stream, Stage};

/// Catalog keys accepted by [`build_problem`].
pub const CATALOG: [&str; 3] = ["hard-instance", "max-abs", "hetero-quadratic"];

/// Per-client samples: `n` gradient-noise vectors and `n` loss-noise scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    gradient_noise: Vec<f64>,
    loss_noise: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, gradient_noise: Vec<f64>, loss_noise: Vec<f64>) -> Result<Self> {
        if dim == 0 || gradient_noise.len() != dim * loss_noise.len() {
            return Err(invalid("dataset buffers have inconsistent sizes"));
        }
        Ok(Dataset {
            dim,
            gradient_noise,
            loss_noise,
        })
    }

    pub fn len(&self) -> usize {
        self.loss_noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss_noise.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gradient_noise(&self, i: usize) -> &[f64] {
        &self.gradient_noise[i * self.dim..(i + 1) * self.dim]
    }

    pub fn loss_noise(&self, i: usize) -> f64 {
        self.loss_noise[i]
    }
}

/// The hypercube `center + [-side/2, side/2]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub center: Vec<f64>,
    pub side: f64,
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(a, c)| (a - c).abs() <= self.side / 2.0)
    }

    pub fn polyhedron(&self) -> Result<Polyhedron> {
        Polyhedron::hypercube(&self.center, self.side)
    }
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn domain(&self) -> &Domain;
    fn sigma_g(&self) -> f64;
    fn sigma_f(&self) -> f64;

    /// Expected loss of client `m` at `x`.
    fn client_loss(&self, m: usize, x: &[f64]) -> f64;

    /// A subgradient of the client's expected loss, written to `out`.
    fn client_subgradient(&self, m: usize, x: &[f64], out: &mut [f64]);

    /// Population loss `L(x)`.
    fn true_loss(&self, x: &[f64]) -> Result<f64>;

    /// `min_x L(x)` over the domain.
    fn min_loss(&self) -> Result<f64>;

    /// A subgradient of `L` at `x`.
    fn true_subgradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Draws `n` data points for client `m`.
    fn sample_dataset(&self, n: usize, rng: &mut dyn RngCore) -> Dataset {
        let d = self.dim();
        let sg = self.sigma_g() / math::sqrt(d as f64);
        let sf = self.sigma_f();
        let mut gradient_noise = Vec::with_capacity(n * d);
        let mut loss_noise = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..d {
                gradient_noise.push(sg * standard_normal(rng));
            }
            loss_noise.push(sf * standard_normal(rng));
        }
        Dataset {
            dim: d,
            gradient_noise,
            loss_noise,
        }
    }
}

/// `l(x; z_i) = L_m(x) + zeta_i`.
pub fn sample_loss(problem: &dyn Problem, m: usize, x: &[f64], data: &Dataset, i: usize) -> f64 {
    problem.client_loss(m, x) + data.loss_noise(i)
}

/// `dl(x; z_i) = g_m(x) + xi_i`, written to `out`.
pub fn sample_gradient(
    problem: &dyn Problem,
    m: usize,
    x: &[f64],
    data: &Dataset,
    i: usize,
    out: &mut [f64],
) {
    problem.client_subgradient(m, x, out);
    for (o, xi) in out.iter_mut().zip(data.gradient_noise(i)) {
        *o += xi;
    }
}

/// `L(x) - L*`.
pub fn excess_risk(problem: &dyn Problem, x: &[f64]) -> Result<f64> {
    Ok(problem.true_loss(x)? - problem.min_loss()?)
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `f(x) = alpha * max_i |a_i . x - b_i / sqrt(d)|` over an orthonormal basis
/// `a_1, ..., a_d` and signs `b_i`. The minimizer is
/// `x* = (1/sqrt(d)) sum_i a_i b_i` with `f(x*) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    basis: Vec<Vec<f64>>,
    signs: Vec<f64>,
    alpha: f64,
    sigma: f64,
    sigma_f: f64,
    domain: Domain,
}

impl HardInstance {
    pub fn new(
        basis: Vec<Vec<f64>>,
        signs: Vec<f64>,
        alpha: f64,
        sigma: f64,
        sigma_f: f64,
        side: f64,
    ) -> Result<Self> {
        let d = basis.len();
        if d == 0 || signs.len() != d || basis.iter().any(|a| a.len() != d) {
            return Err(invalid("basis must be d vectors of length d with d signs"));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(invalid("signs must be +1 or -1"));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid("alpha must lie in (0, 1]"));
        }
        if !(sigma >= 0.0) || !(sigma_f >= 0.0) {
            return Err(invalid("noise levels must be nonnegative"));
        }
        let h = HardInstance {
            basis,
            signs,
            alpha,
            sigma,
            sigma_f,
            domain: Domain {
                center: vec![0.0; d],
                side,
            },
        };
        let star = h.minimizer();
        if !(side > 0.0) || star.iter().any(|v| v.abs() >= side / 2.0) {
            return Err(invalid("the domain must strictly contain the minimizer"));
        }
        Ok(h)
    }

    /// Orthonormal basis from Gram-Schmidt on a seeded Gaussian matrix and
    /// uniformly random signs.
    pub fn random(
        d: usize,
        alpha: f64,
        sigma: f64,
        sigma_f: f64,
        side: f64,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let mut rng = stream(seed, 0, 0, Stage::Problem);
        let basis = loop {
            let raw: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..d).map(|_| standard_normal(&mut rng)).collect())
                .collect();
            if let Some(q) = orthonormalize(raw) {
                break q;
            }
        };
        let signs = (0..d)
            .map(|_| if rng.next_u32() & 1 == 0 { 1.0 } else { -1.0 })
            .collect();
        Self::new(basis, signs, alpha, sigma, sigma_f, side)
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn offset(&self) -> f64 {
        1.0 / math::sqrt(self.basis.len() as f64)
    }

    /// `a_j . x - b_j / sqrt(d)`
    fn residual(&self, j: usize, x: &[f64]) -> f64 {
        math::dot(&self.basis[j], x) - self.signs[j] * self.offset()
    }

    pub fn minimizer(&self) -> Vec<f64> {
        let d = self.basis.len();
        let s = self.offset();
        (0..d)
            .map(|c| (0..d).map(|i| self.basis[i][c] * self.signs[i] * s).sum())
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.alpha * argmax((0..self.basis.len()).map(|j| self.residual(j, x).abs())).1
    }

    /// `i(x)`: the lowest index attaining the maximum.
    pub fn active_index(&self, x: &[f64]) -> usize {
        argmax((0..self.basis.len()).map(|j| self.residual(j, x).abs())).0
    }

    /// `s_j(x)`: `+1` if `a_j . x - b_j / sqrt(d) >= 0`, else `-1`.
    pub fn sign(&self, j: usize, x: &[f64]) -> f64 {
        if self.residual(j, x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `alpha * a_{i(x)} * s_{i(x)}(x)`, the oracle's mean.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let i = self.active_index(x);
        let s = self.alpha * self.sign(i, x);
        self.basis[i].iter().map(|a| a * s).collect()
    }

    fn noise(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.basis.len();
        let sd = self.sigma / math::sqrt(d as f64);
        (0..d).map(|_| sd * standard_normal(rng)).collect()
    }

    /// Oracle `O`: `alpha a_{i(x)} s_{i(x)}(x) + N(0, sigma^2/d I)`.
    pub fn oracle(&self, x: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let mut g = self.subgradient(x);
        for (gi, n) in g.iter_mut().zip(self.noise(rng)) {
            *gi += n;
        }
        g
    }

    /// Oracle `O'`: `(alpha a_{i(x)} + N(0, sigma^2/d I), s_{i(x)}(x))`.
    pub fn oracle_split(&self, x: &[f64], rng: &mut dyn RngCore) -> (Vec<f64>, f64) {
        let i = self.active_index(x);
        let g = self.basis[i]
            .iter()
            .zip(self.noise(rng))
            .map(|(a, n)| self.alpha * a + n)
            .collect();
        (g, self.sign(i, x))
    }
}

/// Modified Gram-Schmidt; `None` if the vectors are (nearly) dependent.
pub fn orthonormalize(mut v: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    for i in 0..v.len() {
        for j in 0..i {
            let (done, rest) = v.split_at_mut(i);
            let p = math::dot(&done[j], &rest[0]);
            for (x, q) in rest[0].iter_mut().zip(&done[j]) {
                *x -= p * q;
            }
        }
        let n = math::norm2(&v[i]);
        if !(n > 1e-8) {
            return None;
        }
        v[i].iter_mut().for_each(|x| *x /= n);
    }
    Some(v)
}

impl Problem for HardInstance {
    fn name(&self) -> &str {
        "hard-instance"
    }
    fn dim(&self) -> usize {
        self.basis.len()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn sigma_g(&self) -> f64 {
        self.sigma
    }
    fn sigma_f(&self) -> f64 {
        self.sigma_f
    }
    fn client_loss(&self, _m: usize, x: &[f64]) -> f64 {
        self.value(x)
    }
    fn client_subgradient(&self, _m: usize, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.subgradient(x));
    }
    fn true_loss(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value(x))
    }
    fn min_loss(&self) -> Result<f64> {
        Ok(0.0)
    }
    fn true_subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.subgradient(x))
    }
}

/// `f(x) = max_i |x_i - c_i|`, identical for every client.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAbs {
    target: Vec<f64>,
    sigma_g: f64,
    sigma_f: f64,
    domain: Domain,
}

impl MaxAbs {
    pub fn new(target: Vec<f64>, sigma_g: f64, sigma_f: f64, domain: Domain) -> Result<Self> {
        if target.is_empty() || domain.center.len() != target.len() {
            return Err(invalid("target and domain dimensions differ"));
        }
        if !domain.contains(&target) {
            return Err(invalid("target must lie in the domain"));
        }
        if !(sigma_g >= 0.0) || !(sigma_f >= 0.0) {
            return Err(invalid("noise levels must be nonnegative"));
        }
        Ok(MaxAbs {
            target,
            sigma_g,
            sigma_f,
            domain,
        })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        argmax(x.iter().zip(&self.target).map(|(a, c)| (a - c).abs())).1
    }

    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let (i, v) = argmax(x.iter().zip(&self.target).map(|(a, c)| (a - c).abs()));
        if v > 0.0 {
            g[i] = if x[i] > self.target[i] { 1.0 } else { -1.0 };
        }
        g
    }
}

impl Problem for MaxAbs {
    fn name(&self) -> &str {
        "max-abs"
    }
    fn dim(&self) -> usize {
        self.target.len()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn sigma_g(&self) -> f64 {
        self.sigma_g
    }
    fn sigma_f(&self) -> f64 {
        self.sigma_f
    }
    fn client_loss(&self, _m: usize, x: &[f64]) -> f64 {
        self.value(x)
    }
    fn client_subgradient(&self, _m: usize, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.subgradient(x));
    }
    fn true_loss(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value(x))
    }
    fn min_loss(&self) -> Result<f64> {
        Ok(0.0)
    }
    fn true_subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.subgradient(x))
    }
}

/// Client `m` has `L_m(x) = (kappa/2) |x - c - u_m|^2` with `sum_m u_m = 0`, so
/// `L(x) = (kappa/2) |x - c|^2 + (kappa/2) mean_m |u_m|^2`.
/// `kappa = 1 / (2 R sqrt(d))` keeps every client gradient below 1 on the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroQuadratic {
    center: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    kappa: f64,
    sigma_g: f64,
    sigma_f: f64,
    domain: Domain,
}

impl HeteroQuadratic {
    pub fn new(
        center: Vec<f64>,
        shifts: Vec<Vec<f64>>,
        sigma_g: f64,
        sigma_f: f64,
        domain: Domain,
    ) -> Result<Self> {
        let d = center.len();
        if d == 0
            || domain.center.len() != d
            || shifts.is_empty()
            || shifts.iter().any(|u| u.len() != d)
        {
            return Err(invalid(
                "center, shifts and domain must share one dimension",
            ));
        }
        if !domain.contains(&center) {
            return Err(invalid("center must lie in the domain"));
        }
        let m = shifts.len() as f64;
        for c in 0..d {
            let s: f64 = shifts.iter().map(|u| u[c]).sum();
            if s.abs() > 1e-9 * m {
                return Err(invalid("client shifts must sum to zero"));
            }
        }
        if shifts
            .iter()
            .any(|u| math::norm2(u) > domain.side * math::sqrt(d as f64))
        {
            return Err(invalid("client shifts must be at most the domain diameter"));
        }
        if !(sigma_g >= 0.0) || !(sigma_f >= 0.0) {
            return Err(invalid("noise levels must be nonnegative"));
        }
        let kappa = 1.0 / (2.0 * domain.side * math::sqrt(d as f64));
        Ok(HeteroQuadratic {
            center,
            shifts,
            kappa,
            sigma_g,
            sigma_f,
            domain,
        })
    }

    /// Shifts of length `side / 4` in seeded random directions, recentred to sum to zero.
    pub fn random(
        center: Vec<f64>,
        clients: usize,
        sigma_g: f64,
        sigma_f: f64,
        side: f64,
        seed: u64,
    ) -> Result<Self> {
        let d = center.len();
        if clients == 0 {
            return Err(invalid("need at least one client"));
        }
        let mut rng = stream(seed, 0, 1, Stage::Problem);
        let mut shifts: Vec<Vec<f64>> = (0..clients)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
                let n = math::norm2(&v).max(1e-12);
                v.iter().map(|x| x / n * side / 4.0).collect()
            })
            .collect();
        for c in 0..d {
            let mean = shifts.iter().map(|u| u[c]).sum::<f64>() / clients as f64;
            shifts.iter_mut().for_each(|u| u[c] -= mean);
        }
        let domain = Domain {
            center: vec![0.0; d],
            side,
        };
        Self::new(center, shifts, sigma_g, sigma_f, domain)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn shifts(&self) -> &[Vec<f64>] {
        &self.shifts
    }

    fn spread(&self) -> f64 {
        let m = self.shifts.len() as f64;
        0.5 * self.kappa * self.shifts.iter().map(|u| math::dot(u, u)).sum::<f64>() / m
    }

    fn client(&self, m: usize) -> &[f64] {
        &self.shifts[m % self.shifts.len()]
    }
}

impl Problem for HeteroQuadratic {
    fn name(&self) -> &str {
        "hetero-quadratic"
    }
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn sigma_g(&self) -> f64 {
        self.sigma_g
    }
    fn sigma_f(&self) -> f64 {
        self.sigma_f
    }
    fn client_loss(&self, m: usize, x: &[f64]) -> f64 {
        let u = self.client(m);
        let sq: f64 = x
            .iter()
            .zip(&self.center)
            .zip(u)
            .map(|((a, c), s)| (a - c - s) * (a - c - s))
            .sum();
        0.5 * self.kappa * sq
    }
    fn client_subgradient(&self, m: usize, x: &[f64], out: &mut [f64]) {
        let u = self.client(m);
        for (((o, a), c), s) in out.iter_mut().zip(x).zip(&self.center).zip(u) {
            *o = self.kappa * (a - c - s);
        }
    }
    fn true_loss(&self, x: &[f64]) -> Result<f64> {
        let sq: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        Ok(0.5 * self.kappa * sq + self.spread())
    }
    fn min_loss(&self) -> Result<f64> {
        Ok(self.spread())
    }
    fn true_subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter()
            .zip(&self.center)
            .map(|(a, c)| self.kappa * (a - c))
            .collect())
    }
}

/// Settings for [`build_problem`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub d: usize,
    /// Number of clients (used by the heterogeneous instance).
    pub clients: usize,
    /// Domain side `R`; the domain is centred at the origin.
    pub side: f64,
    pub sigma_g: f64,
    pub sigma_f: f64,
    /// Scale of the hard instance.
    pub alpha: f64,
    /// Minimizer for max-abs / centre for the quadratic; seeded when `None`.
    pub target: Option<Vec<f64>>,
    pub seed: u64,
}

impl ProblemConfig {
    pub fn new(d: usize) -> Self {
        ProblemConfig {
            d,
            clients: 1,
            side: 2.0,
            sigma_g: 1.0,
            sigma_f: 1.0,
            alpha: 1.0,
            target: None,
            seed: 0,
        }
    }
}

fn seeded_target(cfg: &ProblemConfig) -> Vec<f64> {
    let mut rng = stream(cfg.seed, 0, 2, Stage::Problem);
    (0..cfg.d)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            (u - 0.5) * cfg.side / 2.0
        })
        .collect()
}

/// Builds a catalog problem by key.
pub fn build_problem(key: &str, cfg: &ProblemConfig) -> Result<Box<dyn Problem>> {
    if cfg.d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let domain = Domain {
        center: vec![0.0; cfg.d],
        side: cfg.side,
    };
    let target = || cfg.target.clone().unwrap_or_else(|| seeded_target(cfg));
    match key {
        "hard-instance" => Ok(Box::new(HardInstance::random(
            cfg.d,
            cfg.alpha,
            cfg.sigma_g,
            cfg.sigma_f,
            cfg.side,
            cfg.seed,
        )?)),
        "max-abs" => Ok(Box::new(MaxAbs::new(
            target(),
            cfg.sigma_g,
            cfg.sigma_f,
            domain,
        )?)),
        "hetero-quadratic" => Ok(Box::new(HeteroQuadratic::random(
            target(),
            cfg.clients,
            cfg.sigma_g,
            cfg.sigma_f,
            cfg.side,
            cfg.seed,
        )?)),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// The catalog keys as owned strings.
pub fn catalog() -> Vec<String> {
    CATALOG.iter().map(|s| s.to_string()).collect()
}
