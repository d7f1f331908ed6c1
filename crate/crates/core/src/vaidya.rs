//! Vaidya's volumetric cutting-plane method.
//!
//! Each round starts at the (approximate) volumetric center `x_k` of the
//! current polyhedron. If some row has leverage below `gamma`, the row with
//! the smallest leverage is dropped. Otherwise a cut `c . x >= beta` is added
//! with `c = -g(x_k)` and `beta <= c . x_k` chosen so that
//! `c^T H^{-1} c / (c . x_k - beta)^2 = sqrt(eta * gamma) / 2`.
//! The polyhedron is then re-centered.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::polytope::{self, BarrierState, CenteringOptions, Polyhedron};

/// Directions shorter than this are treated as zero.
pub const MIN_DIRECTION_NORM: f64 = 1e-12;
/// Smallest admissible slack at a computed center.
pub const MIN_CENTER_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaidyaConfig {
    /// Together with `gamma`, sets the depth of every added cut.
    pub eta: f64,
    /// Leverage threshold below which a row is dropped.
    pub gamma: f64,
    /// Hard cap on the number of rows; `None` means `ceil(d / gamma) + 2`.
    pub max_rows: Option<usize>,
    pub centering: CenteringOptions,
}

impl Default for VaidyaConfig {
    fn default() -> Self {
        VaidyaConfig {
            eta: DEFAULT_ETA,
            gamma: DEFAULT_GAMMA,
            max_rows: None,
            centering: CenteringOptions::default(),
        }
    }
}

pub const DEFAULT_GAMMA: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 0.99;

impl VaidyaConfig {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        let cfg = VaidyaConfig {
            eta,
            gamma,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma must lie in (0, 1)"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid("eta must lie in (0, 1)"));
        }
        if !(self.centering.tol > 0.0) || self.centering.max_iter == 0 {
            return Err(invalid(
                "centering tolerance and iteration cap must be positive",
            ));
        }
        Ok(())
    }

    /// Target leverage of a new cut at the current center, `sqrt(eta*gamma)/2`.
    pub fn cut_leverage(&self) -> f64 {
        0.5 * math::sqrt(self.eta * self.gamma)
    }

    pub fn row_cap(&self, dim: usize) -> usize {
        self.max_rows
            .unwrap_or_else(|| math::ceil(dim as f64 / self.gamma) as usize + 2)
            .max(dim + 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CutKind {
    /// Row `row` (its index before removal) was removed.
    Drop { row: usize },
    /// The constraint `direction . x >= offset` was appended; `direction` has unit norm.
    Add { direction: Vec<f64>, offset: f64 },
    /// Nothing changed; the center stays put.
    Skip(SkipReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// No usable cut direction (zero or missing gradient estimate).
    DegenerateDirection,
    /// A drop would leave fewer than `d + 1` rows.
    MinimumRows,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutStep {
    pub kind: CutKind,
    pub center_before: Vec<f64>,
    pub center_after: Vec<f64>,
}

impl CutStep {
    pub fn is_add(&self) -> bool {
        matches!(self.kind, CutKind::Add { .. })
    }
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Distance `c . x - beta` that gives the new cut leverage `cut_leverage()`.
fn cut_depth(state: &BarrierState, cfg: &VaidyaConfig, unit_c: &[f64]) -> f64 {
    math::sqrt(state.inv_quad(unit_c) / cfg.cut_leverage())
}

/// The drop-or-add decision at `state` for cut direction `c`.
///
/// Ties in the smallest leverage go to the lowest row index.
pub fn decide_step(state: &BarrierState, cfg: &VaidyaConfig, c: &[f64]) -> Result<CutKind> {
    let (row, sigma) = state.min_sigma();
    if sigma < cfg.gamma {
        return Ok(CutKind::Drop { row });
    }
    if c.len() != state.x().len() || !math::all_finite(c) {
        return Err(invalid(
            "cut direction has wrong dimension or non-finite entries",
        ));
    }
    let norm = math::norm2(c);
    if norm < MIN_DIRECTION_NORM {
        return Err(Error::DegenerateDirection);
    }
    let unit: Vec<f64> = c.iter().map(|v| v / norm).collect();
    let depth = cut_depth(state, cfg, &unit);
    let offset = math::dot(&unit, state.x()) - depth;
    Ok(CutKind::Add {
        direction: unit,
        offset,
    })
}

/// Incremental driver holding the current polyhedron and its center.
#[derive(Debug, Clone)]
pub struct CuttingPlane {
    poly: Polyhedron,
    state: BarrierState,
    cfg: VaidyaConfig,
}

impl CuttingPlane {
    /// Centers `initial`, starting from its stored interior point.
    pub fn new(initial: Polyhedron, cfg: VaidyaConfig) -> Result<Self> {
        cfg.validate()?;
        let start = vec![0.0; initial.dim()];
        let state = polytope::center_from_local(&initial, &start, &cfg.centering)?;
        Ok(CuttingPlane {
            poly: initial,
            state,
            cfg,
        })
    }

    pub fn center(&self) -> &[f64] {
        self.state.x()
    }

    pub fn state(&self) -> &BarrierState {
        &self.state
    }

    pub fn polyhedron(&self) -> &Polyhedron {
        &self.poly
    }

    pub fn config(&self) -> &VaidyaConfig {
        &self.cfg
    }

    /// One round. `gradient` is the (estimated) subgradient at the current
    /// center; the cut uses its negation. `None` means no estimate is
    /// available this round.
    pub fn step(&mut self, gradient: Option<&[f64]>) -> Result<CutStep> {
        let d = self.poly.dim();
        let before = self.state.x().to_vec();
        let (min_row, min_sigma) = self.state.min_sigma();

        let kind = if min_sigma < self.cfg.gamma {
            if self.poly.num_rows() > d + 1 {
                CutKind::Drop { row: min_row }
            } else {
                CutKind::Skip(SkipReason::MinimumRows)
            }
        } else {
            let c: Option<Vec<f64>> = gradient.and_then(|g| {
                let n = math::norm2(g);
                (n.is_finite() && n >= MIN_DIRECTION_NORM)
                    .then(|| g.iter().map(|v| -v / n).collect())
            });
            match c {
                None => CutKind::Skip(SkipReason::DegenerateDirection),
                Some(_) if self.poly.num_rows() + 1 > self.cfg.row_cap(d) => {
                    CutKind::Drop { row: min_row }
                }
                Some(unit) => {
                    let depth = cut_depth(&self.state, &self.cfg, &unit);
                    let offset = math::dot(&unit, &before) - depth;
                    CutKind::Add {
                        direction: unit,
                        offset,
                    }
                }
            }
        };

        if matches!(kind, CutKind::Skip(_)) {
            return Ok(CutStep {
                kind,
                center_before: before.clone(),
                center_after: before,
            });
        }

        // Move the local frame to the current center so that the new row and
        // all slacks are represented relative to it.
        let mut poly = self.poly.clone();
        poly.rebase(self.state.local());
        match &kind {
            CutKind::Drop { row } => poly.remove_row(*row),
            CutKind::Add { direction, .. } => {
                let depth = cut_depth(&self.state, &self.cfg, direction);
                poly.push_local_row(direction, -depth)?;
            }
            CutKind::Skip(_) => unreachable!(),
        }
        // A Hessian that is singular relative to its trace means the polytope
        // has become a sliver in some direction.
        let state = match polytope::center_from_local(&poly, &vec![0.0; d], &self.cfg.centering) {
            Err(Error::SingularH) => {
                return Err(Error::CollapsedPolytope {
                    min_slack: min_of(self.state.slacks()),
                })
            }
            other => other?,
        };
        let min_slack = min_of(state.slacks());
        if min_slack < MIN_CENTER_SLACK {
            return Err(Error::CollapsedPolytope { min_slack });
        }
        self.poly = poly;
        self.state = state;
        Ok(CutStep {
            kind,
            center_before: before,
            center_after: self.state.x().to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneRun {
    /// `x_0, ..., x_K`.
    pub iterates: Vec<Vec<f64>>,
    pub steps: Vec<CutStep>,
    pub final_polyhedron: Polyhedron,
}

/// Runs `iterations` rounds from `initial`, querying `grad` once per round at
/// the current center.
pub fn run_cutting_plane<F>(
    initial: Polyhedron,
    cfg: VaidyaConfig,
    iterations: usize,
    mut grad: F,
) -> Result<CuttingPlaneRun>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut cp = CuttingPlane::new(initial, cfg)?;
    let mut iterates = Vec::with_capacity(iterations + 1);
    let mut steps = Vec::with_capacity(iterations);
    iterates.push(cp.center().to_vec());
    for _ in 0..iterations {
        let g = grad(cp.center());
        let step = cp.step(Some(&g))?;
        iterates.push(step.center_after.clone());
        steps.push(step);
    }
    Ok(CuttingPlaneRun {
        iterates,
        steps,
        final_polyhedron: cp.poly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_state() -> BarrierState {
        let p = Polyhedron::hypercube(&[0.0, 0.0], 2.0).unwrap();
        polytope::barrier_state(&p, &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn add_depth_on_square() {
        // sqrt(eta * gamma) / 2 = 0.05 with gamma = 0.05, eta = 0.2.
        let cfg = VaidyaConfig::new(0.05, 0.2).unwrap();
        assert!((cfg.cut_leverage() - 0.05).abs() < 1e-15);
        let kind = decide_step(&square_state(), &cfg, &[1.0, 0.0]).unwrap();
        match kind {
            CutKind::Add { direction, offset } => {
                assert_eq!(direction, vec![1.0, 0.0]);
                assert!((offset + math::sqrt(10.0)).abs() < 1e-12);
            }
            other => panic!("expected add, got {other:?}"),
        }
    }

    #[test]
    fn drop_lowest_index_on_tie() {
        let cfg = VaidyaConfig::new(0.6, 0.5).unwrap();
        assert_eq!(
            decide_step(&square_state(), &cfg, &[1.0, 0.0]).unwrap(),
            CutKind::Drop { row: 0 }
        );
    }

    #[test]
    fn degenerate_direction() {
        let cfg = VaidyaConfig::new(0.05, 0.5).unwrap();
        assert_eq!(
            decide_step(&square_state(), &cfg, &[0.0, 1e-13]),
            Err(Error::DegenerateDirection)
        );
    }

    #[test]
    fn invalid_parameters() {
        assert!(VaidyaConfig::new(0.0, 0.5).is_err());
        assert!(VaidyaConfig::new(0.5, 1.0).is_err());
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let p = Polyhedron::hypercube(&[0.0, 0.0], 2.0).unwrap();
        let mut cp = CuttingPlane::new(p, VaidyaConfig::new(0.05, 0.5).unwrap()).unwrap();
        let step = cp.step(Some(&[0.0, 0.0])).unwrap();
        assert_eq!(step.kind, CutKind::Skip(SkipReason::DegenerateDirection));
        assert_eq!(step.center_before, step.center_after);
        assert_eq!(cp.polyhedron().num_rows(), 4);
    }

    #[test]
    fn minimum_rows_guard() {
        // A triangle has exactly d + 1 rows; no drop is allowed even with a huge gamma.
        let rows = vec![
            (vec![1.0, 0.0], 0.0),
            (vec![0.0, 1.0], 0.0),
            (vec![-1.0, -1.0], -1.0),
        ];
        let p = Polyhedron::new(2, &rows, &[0.2, 0.2]).unwrap();
        let mut cp = CuttingPlane::new(p, VaidyaConfig::new(0.99, 0.5).unwrap()).unwrap();
        let step = cp.step(Some(&[1.0, 0.0])).unwrap();
        assert_eq!(step.kind, CutKind::Skip(SkipReason::MinimumRows));
    }
}
