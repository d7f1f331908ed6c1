//! Bounded polyhedra `{x : a_i . x >= b_i}` and their volumetric barrier.
//!
//! For an interior point `x` with slacks `s_i = a_i . x - b_i`:
//!
//! * `H(x) = sum_i a_i a_i^T / s_i^2`
//! * `V(x) = 1/2 log det H(x)` (the volumetric barrier)
//! * `sigma_i(x) = a_i^T H(x)^{-1} a_i / s_i^2` (leverage of row `i`)
//!
//! The minimizer of `V` is the volumetric center. Constraint offsets are
//! stored relative to a movable origin so that slacks stay accurate when the
//! polyhedron becomes very small compared to its distance from zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    origin: Vec<f64>,
    /// Unit-norm rows, `p x dim`, row-major.
    normals: Vec<f64>,
    /// Offsets in the local frame: `a_i . (x - origin) >= offsets[i]`.
    offsets: Vec<f64>,
}

impl Polyhedron {
    /// Builds `{x : a_i . x >= b_i}`, normalizing every row to unit length.
    ///
    /// `interior` must satisfy every constraint strictly; it also becomes the
    /// origin of the local frame.
    pub fn new(dim: usize, rows: &[(Vec<f64>, f64)], interior: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if rows.len() < dim + 1 {
            return Err(invalid("a bounded polyhedron needs at least d+1 rows"));
        }
        if interior.len() != dim || !math::all_finite(interior) {
            return Err(invalid(
                "interior point has wrong dimension or non-finite entries",
            ));
        }
        let mut p = Polyhedron {
            dim,
            origin: interior.to_vec(),
            normals: Vec::with_capacity(rows.len() * dim),
            offsets: Vec::with_capacity(rows.len()),
        };
        for (a, b) in rows {
            p.push_row(a, *b)?;
        }
        if p.slacks(interior).iter().any(|&s| !(s > 0.0)) {
            return Err(Error::NotInterior);
        }
        Ok(p)
    }

    /// Axis-aligned cube of edge length `side` centered at `center`.
    pub fn hypercube(center: &[f64], side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(invalid("cube side must be positive"));
        }
        let d = center.len();
        let half = side / 2.0;
        let mut rows = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            rows.push((e.clone(), center[i] - half));
            e[i] = -1.0;
            rows.push((e, -(center[i] + half)));
        }
        Self::new(d, &rows, center)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len()
    }

    /// Unit normal of row `i`.
    pub fn normal(&self, i: usize) -> &[f64] {
        &self.normals[i * self.dim..(i + 1) * self.dim]
    }

    /// Offset `b_i` of row `i` in absolute coordinates.
    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i] + math::dot(self.normal(i), &self.origin)
    }

    /// Offset of row `i` relative to [`Polyhedron::origin`].
    pub fn local_offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.num_rows()).map(move |i| (self.normal(i), self.offset(i)))
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn to_local(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.origin).map(|(a, o)| a - o).collect()
    }

    pub fn to_absolute(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.origin).map(|(a, o)| a + o).collect()
    }

    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.local_slacks(&self.to_local(x))
    }

    pub(crate) fn local_slacks(&self, y: &[f64]) -> Vec<f64> {
        (0..self.num_rows())
            .map(|i| math::dot(self.normal(i), y) - self.offsets[i])
            .collect()
    }

    /// Appends `a . x >= b`. The row is rescaled to unit norm.
    pub fn push_row(&mut self, a: &[f64], b: f64) -> Result<()> {
        let local = b - math::dot(a, &self.origin);
        self.push_local_row(a, local)
    }

    pub(crate) fn push_local_row(&mut self, a: &[f64], local_offset: f64) -> Result<()> {
        if a.len() != self.dim || !math::all_finite(a) || !local_offset.is_finite() {
            return Err(invalid(
                "constraint row has wrong dimension or non-finite entries",
            ));
        }
        let n = math::norm2(a);
        if !(n > 0.0) {
            return Err(invalid("constraint row has zero norm"));
        }
        self.normals.extend(a.iter().map(|v| v / n));
        self.offsets.push(local_offset / n);
        Ok(())
    }

    pub fn remove_row(&mut self, i: usize) {
        let d = self.dim;
        self.normals.drain(i * d..(i + 1) * d);
        self.offsets.remove(i);
    }

    /// Moves the local origin by `shift` (given in the current local frame).
    pub(crate) fn rebase(&mut self, shift: &[f64]) {
        for i in 0..self.num_rows() {
            let delta = math::dot(self.normal(i), shift);
            self.offsets[i] -= delta;
        }
        for (o, s) in self.origin.iter_mut().zip(shift) {
            *o += s;
        }
    }

    /// The polyhedron shifted by `v`.
    pub fn translated(&self, v: &[f64]) -> Self {
        let mut p = self.clone();
        for (o, s) in p.origin.iter_mut().zip(v) {
            *o += s;
        }
        p
    }
}

/// Barrier quantities at one interior point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierState {
    x: Vec<f64>,
    local: Vec<f64>,
    slacks: Vec<f64>,
    h: Matrix,
    chol: Cholesky,
    sigmas: Vec<f64>,
    value: f64,
}

impl BarrierState {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// The point relative to the polyhedron's local origin.
    pub fn local(&self) -> &[f64] {
        &self.local
    }

    pub fn slacks(&self) -> &[f64] {
        &self.slacks
    }

    pub fn hessian(&self) -> &Matrix {
        &self.h
    }

    pub fn factor(&self) -> &Cholesky {
        &self.chol
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// `V(x)`
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Index of the smallest leverage value (lowest index on ties).
    pub fn min_sigma(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, &s) in self.sigmas.iter().enumerate() {
            if s < best.1 {
                best = (i, s);
            }
        }
        best
    }

    /// `c^T H^{-1} c`
    pub fn inv_quad(&self, c: &[f64]) -> f64 {
        self.chol.inv_quad(c)
    }
}

fn scaled_rows(p: &Polyhedron, slacks: &[f64]) -> Vec<f64> {
    let d = p.dim();
    let mut u = Vec::with_capacity(slacks.len() * d);
    for (i, s) in slacks.iter().enumerate() {
        u.extend(p.normal(i).iter().map(|a| a / s));
    }
    u
}

pub(crate) fn evaluate_local(p: &Polyhedron, y: &[f64]) -> Result<BarrierState> {
    let d = p.dim();
    if y.len() != d {
        return Err(invalid("point has wrong dimension"));
    }
    let slacks = p.local_slacks(y);
    if slacks.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::NotInterior);
    }
    let u = scaled_rows(p, &slacks);
    let mut h = Matrix::zeros(d);
    for ui in u.chunks_exact(d) {
        h.add_outer(ui, 1.0);
    }
    let chol = Cholesky::factor(&h)?;
    let sigmas = u.chunks_exact(d).map(|ui| chol.inv_quad(ui)).collect();
    let value = 0.5 * chol.log_det();
    Ok(BarrierState {
        x: p.to_absolute(y),
        local: y.to_vec(),
        slacks,
        h,
        chol,
        sigmas,
        value,
    })
}

/// Barrier quantities at an absolute point `x`.
pub fn barrier_state(p: &Polyhedron, x: &[f64]) -> Result<BarrierState> {
    if x.len() != p.dim() {
        return Err(invalid("point has wrong dimension"));
    }
    evaluate_local(p, &p.to_local(x))
}

/// `V(x) = 1/2 log det H(x)`.
pub fn barrier_value(p: &Polyhedron, x: &[f64]) -> Result<f64> {
    barrier_state(p, x).map(|s| s.value)
}

/// All `sigma_i(x)`; they sum to `d`.
pub fn leverage_scores(p: &Polyhedron, x: &[f64]) -> Result<Vec<f64>> {
    barrier_state(p, x).map(|s| s.sigmas)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteringOptions {
    /// Stop once `sqrt(g^T H^{-1} g) <= tol` for the barrier gradient `g`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CenteringOptions {
    fn default() -> Self {
        CenteringOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Gradient and exact Hessian of `V` at `state`.
///
/// `grad V = -sum_i sigma_i u_i` and
/// `hess V = 3 sum_i sigma_i u_i u_i^T - 2 sum_{i,j} P_ij^2 u_i u_j^T`
/// with `u_i = a_i / s_i` and `P_ij = u_i^T H^{-1} u_j`.
fn gradient_and_hessian(p: &Polyhedron, st: &BarrierState) -> (Vec<f64>, Matrix, Matrix) {
    let d = p.dim();
    let rows = p.num_rows();
    let u = scaled_rows(p, &st.slacks);
    let w: Vec<f64> = u.chunks_exact(d).flat_map(|ui| st.chol.solve(ui)).collect();

    let mut grad = vec![0.0; d];
    let mut q = Matrix::zeros(d);
    for (ui, &s) in u.chunks_exact(d).zip(&st.sigmas) {
        for (g, v) in grad.iter_mut().zip(ui) {
            *g -= s * v;
        }
        q.add_outer(ui, s);
    }

    let mut hess = Matrix::zeros(d);
    let mut acc = vec![0.0; d];
    for i in 0..rows {
        let ui = &u[i * d..(i + 1) * d];
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..rows {
            let pij = math::dot(ui, &w[j * d..(j + 1) * d]);
            let pij2 = pij * pij;
            for (a, v) in acc.iter_mut().zip(&u[j * d..(j + 1) * d]) {
                *a += pij2 * v;
            }
        }
        for r in 0..d {
            for c in 0..d {
                hess[(r, c)] -= 2.0 * ui[r] * acc[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..d {
            hess[(r, c)] += 3.0 * q[(r, c)];
        }
    }
    for r in 0..d {
        for c in 0..r {
            let avg = 0.5 * (hess[(r, c)] + hess[(c, r)]);
            hess[(r, c)] = avg;
            hess[(c, r)] = avg;
        }
    }
    (grad, hess, q)
}

/// Approximate volumetric center by damped Newton on `V`.
///
/// Steps are shortened so that no slack falls below half of its value
/// before the step, then backtracked until `V` decreases.
pub fn volumetric_center(
    p: &Polyhedron,
    warm_start: &[f64],
    opts: &CenteringOptions,
) -> Result<BarrierState> {
    if warm_start.len() != p.dim() {
        return Err(invalid("warm start has wrong dimension"));
    }
    center_from_local(p, &p.to_local(warm_start), opts)
}

pub(crate) fn center_from_local(
    p: &Polyhedron,
    y0: &[f64],
    opts: &CenteringOptions,
) -> Result<BarrierState> {
    if !(opts.tol > 0.0) {
        return Err(invalid("centering tolerance must be positive"));
    }
    let d = p.dim();
    let mut st = evaluate_local(p, y0)?;
    for _ in 0..opts.max_iter {
        let (grad, hess, q) = gradient_and_hessian(p, &st);
        if math::sqrt(st.chol.inv_quad(&grad)) <= opts.tol {
            return Ok(st);
        }
        let newton = Cholesky::factor(&hess).or_else(|_| Cholesky::factor(&q))?;
        let mut step = newton.solve(&grad);
        step.iter_mut().for_each(|v| *v = -*v);
        let decrement = -math::dot(&grad, &step);

        let mut t: f64 = 1.0;
        for (i, &s) in st.slacks.iter().enumerate() {
            let rate = math::dot(p.normal(i), &step);
            if rate < 0.0 {
                t = t.min(0.5 * s / -rate);
            }
        }

        let mut next = None;
        for _ in 0..60 {
            let y: Vec<f64> = st.local.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            match evaluate_local(p, &y) {
                Ok(cand) => {
                    // Below this decrement the change in V is at round-off level.
                    if decrement < 1e-12 || cand.value <= st.value - 1e-4 * t * decrement {
                        next = Some(cand);
                        break;
                    }
                }
                Err(Error::NotInterior) | Err(Error::SingularH) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        match next {
            Some(cand) => st = cand,
            None => break,
        }
        debug_assert_eq!(st.local.len(), d);
    }
    let (grad, _, _) = gradient_and_hessian(p, &st);
    if math::sqrt(st.chol.inv_quad(&grad)) <= opts.tol {
        return Ok(st);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
    })
}

/// Gradient of `V` at `x`, exposed for diagnostics and tests.
pub fn barrier_gradient(p: &Polyhedron, x: &[f64]) -> Result<Vec<f64>> {
    let st = barrier_state(p, x)?;
    Ok(gradient_and_hessian(p, &st).0)
}
