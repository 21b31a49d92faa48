//! Maximizing averages, calibrated subactions on both sides, the error `R`,
//! deviations `I` and `I*`, Mañé potential, Peierls barrier and the
//! Aubry set.
//!
//! `m(A)` comes from periodic-orbit enumeration, which is only correct when
//! the maximizing measure sits on a periodic orbit of period within the cap.
//! Every report carries that caveat.

mod dual;
mod mane;

use std::sync::Arc;

use serde::Serialize;

pub use dual::{
    dual_calibrated_subaction, i_star, r_star, r_star_good, DualSubactionTable, RStarReport,
};
pub use mane::{aubry_test, mane_potential, peierls_barrier, ActionValue, AubryReport, ChainSearch};

use crate::dynamics::{ExpandingMap, PeriodicOrbit};
use crate::error::{Error, Result};
use crate::par::*;
use crate::transfer::{ChebGrid, GridFunction, PotentialSpec};

pub const PERIODIC_CAVEAT: &str =
    "valid only if the maximizing measure is periodic with period within the cap";

/// Averages closer than this are treated as ties; ties go to the shorter,
/// then lexicographically smaller, itinerary.
pub const AVERAGE_TIE: f64 = 1e-12;

/// Largest accepted anchor shift per step at the fixed point. A converged
/// iteration with a larger shift has solved `T V = V + c` with `c ≠ 0`,
/// which means the supplied `m` is off by `c`.
pub const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxAverage {
    pub m: f64,
    pub orbit: PeriodicOrbit,
    pub max_period: usize,
    /// Best average among orbits that are not tied with the winner.
    pub runner_up: f64,
    /// Number of orbits tied with the winner (1 when unique).
    pub ties: usize,
    pub caveat: &'static str,
}

/// Best Birkhoff average of `A` over periodic orbits of period `≤ max_period`.
pub fn max_ergodic_average(map: &ExpandingMap, pot: &PotentialSpec, max_period: usize) -> Result<MaxAverage> {
    if max_period == 0 {
        return Err(Error::InvalidArgument("max_period must be at least 1".into()));
    }
    let a = |x: f64| pot.a(x);
    let orbits = map.enumerate_periodic_orbits(max_period, &a)?;
    let best = orbits[0].birkhoff_average;
    let tied = orbits
        .iter()
        .take_while(|o| o.birkhoff_average >= best - AVERAGE_TIE)
        .count();
    let winner = orbits[..tied]
        .iter()
        .min_by(|a, b| {
            a.period()
                .cmp(&b.period())
                .then_with(|| a.itinerary.cmp(&b.itinerary))
        })
        .expect("at least one orbit")
        .clone();
    Ok(MaxAverage {
        m: winner.birkhoff_average,
        orbit: winner,
        max_period,
        runner_up: orbits.get(tied).map_or(f64::NEG_INFINITY, |o| o.birkhoff_average),
        ties: tied,
        caveat: PERIODIC_CAVEAT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubactionOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SubactionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

/// Outcome of a renormalized max-plus fixed-point iteration.
struct FixedPoint {
    values: Vec<f64>,
    residual: f64,
    drift: f64,
    iterations: usize,
}

/// Iterates `V ← T V − (T V)(anchor)` until the sup change is below `tol`.
/// The first half of the budget is plain iteration; if that has not settled
/// (max-plus iterates can cycle with the period of the maximizing orbit) the
/// rest uses the averaged step `V ← (V + T' V) / 2`, which damps cycling.
fn max_plus_fixed_point<T, N>(
    v0: Vec<f64>,
    op: T,
    anchor: N,
    tol: f64,
    max_iter: usize,
    drift_tol: f64,
) -> Result<FixedPoint>
where
    T: Fn(&[f64]) -> Vec<f64>,
    N: Fn(&[f64]) -> f64,
{
    let mut v = v0;
    let mut residual = f64::INFINITY;
    let mut drift = f64::NAN;
    let switch = max_iter / 2;
    for it in 1..=max_iter {
        let mut next = op(&v);
        drift = anchor(&next);
        next.iter_mut().for_each(|x| *x -= drift);
        residual = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !residual.is_finite() {
            return Err(Error::NonFinite {
                what: "max-plus iterate",
                x: f64::NAN,
            });
        }
        if residual <= tol {
            if drift.abs() > drift_tol {
                return Err(Error::NoCalibration {
                    iterations: it,
                    residual,
                    drift,
                });
            }
            return Ok(FixedPoint {
                values: next,
                residual,
                drift,
                iterations: it,
            });
        }
        if it > switch {
            v.iter_mut().zip(&next).for_each(|(a, b)| *a = 0.5 * (*a + b));
        } else {
            v = next;
        }
    }
    Err(Error::NoCalibration {
        iterations: max_iter,
        residual,
        drift,
    })
}

/// Calibrated subaction `V` on the node grid with `V(x̄) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubactionGrid {
    #[serde(skip)]
    pub v: GridFunction,
    pub m: f64,
    pub x_bar: f64,
    /// Sup change in the last iteration.
    pub residual: f64,
    /// Anchor shift in the last iteration; estimates the error in `m`.
    pub drift: f64,
    pub iterations: usize,
    pub tol: f64,
}

impl SubactionGrid {
    pub fn eval(&self, x: f64) -> f64 {
        self.v.eval(x)
    }

    pub fn nodes(&self) -> &[f64] {
        self.v.grid().nodes()
    }

    pub fn values(&self) -> &[f64] {
        self.v.values()
    }
}

/// Lax–Oleinik iteration `V(x) ← max_i [V(ψ_i x) + A(ψ_i x) − m]` on the
/// Chebyshev nodes, with `V` between nodes given by barycentric interpolation.
pub fn calibrated_subaction(
    map: &ExpandingMap,
    pot: &PotentialSpec,
    grid: Arc<ChebGrid>,
    m: f64,
    x_bar: f64,
    opts: SubactionOptions,
) -> Result<SubactionGrid> {
    if !(0.0..=1.0).contains(&x_bar) {
        return Err(Error::InvalidArgument(format!("anchor {x_bar} outside [0,1]")));
    }
    let d = map.degree();
    let nodes = grid.nodes().to_vec();
    // rows[j*d + i] interpolates at ψ_i(x_j); gain[j*d + i] = A(ψ_i x_j) − m
    let (rows, gain): (Vec<Vec<f64>>, Vec<f64>) = nodes
        .par_iter()
        .map(|&x| {
            (0..d)
                .map(|i| {
                    let y = map.psi(i, x);
                    (grid.lagrange_row(y), pot.a(y) - m)
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .unzip();
    if let Some(k) = gain.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "potential at a preimage",
            x: map.psi(k % d, nodes[k / d]),
        });
    }
    let bar_row = grid.lagrange_row(x_bar);
    let dot = |r: &[f64], v: &[f64]| r.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let op = |v: &[f64]| -> Vec<f64> {
        (0..nodes.len())
            .into_par_iter()
            .map(|j| {
                (0..d)
                    .map(|i| dot(&rows[j * d + i], v) + gain[j * d + i])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let fp = max_plus_fixed_point(
        vec![0.0; nodes.len()],
        op,
        |v| dot(&bar_row, v),
        opts.tol,
        opts.max_iter,
        DRIFT_TOL,
    )?;
    Ok(SubactionGrid {
        v: GridFunction::new(grid, fp.values)?,
        m,
        x_bar,
        residual: fp.residual,
        drift: fp.drift,
        iterations: fp.iterations,
        tol: opts.tol,
    })
}

/// `R(x) = V(f x) − V(x) − A(x) + m`.
pub fn error_r(sub: &SubactionGrid, map: &ExpandingMap, pot: &PotentialSpec, x: f64) -> Result<f64> {
    let (fx, _) = map.forward_step(x)?;
    Ok(sub.eval(fx) - sub.eval(x) - pot.a(x) + sub.m)
}

/// Minimum of `R` over all preimages of the nodes, and the largest per-node
/// branch minimum. Calibration means the first is `≥ 0` and the second `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationAudit {
    pub min_r: f64,
    pub max_branch_min: f64,
    pub points: usize,
}

impl SubactionGrid {
    /// Evaluates `R` at `ψ_i(x_j)`, using the stored node value for `V(f y) = V(x_j)`.
    pub fn calibration_audit(&self, map: &ExpandingMap, pot: &PotentialSpec) -> CalibrationAudit {
        let d = map.degree();
        let per_node: Vec<f64> = self
            .nodes()
            .par_iter()
            .zip(self.values().par_iter())
            .map(|(&x, &vx)| {
                (0..d)
                    .map(|i| {
                        let y = map.psi(i, x);
                        vx - self.eval(y) - pot.a(y) + self.m
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        // every branch value is ≥ the branch minimum, so min over all R is min of minima
        CalibrationAudit {
            min_r: per_node.iter().copied().fold(f64::INFINITY, f64::min),
            max_branch_min: per_node.iter().map(|r| r.abs()).fold(0.0, f64::max),
            points: per_node.len() * d,
        }
    }
}

/// A (possibly infinite) sum of non-negative errors along an orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationValue {
    pub value: f64,
    /// Heuristic flag: the sum looks divergent (or the point never reaches
    /// the maximizing set). Reported, never asserted.
    pub infinite: bool,
    pub terms: Vec<f64>,
}

const INFINITE_RUN: usize = 10;
const INFINITE_FLOOR: f64 = 0.01;

/// `I(x) ≈ Σ_{i<depth} R(fⁱ x)`.
pub fn deviation_i(
    sub: &SubactionGrid,
    map: &ExpandingMap,
    pot: &PotentialSpec,
    x: f64,
    depth: usize,
) -> Result<DeviationValue> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let mut terms = Vec::with_capacity(depth);
    let mut y = x;
    for _ in 0..depth {
        let (fy, _) = map.forward_step(y)?;
        terms.push(sub.eval(fy) - sub.eval(y) - pot.a(y) + sub.m);
        y = fy;
    }
    let infinite = terms.len() >= INFINITE_RUN
        && terms[terms.len() - INFINITE_RUN..]
            .iter()
            .all(|&t| t > INFINITE_FLOOR);
    Ok(DeviationValue {
        value: terms.iter().sum(),
        infinite,
        terms,
    })
}

/// `max |V(x_i) − V(x_j)| / |x_i − x_j|^α` over node pairs.
pub fn holder_quotient(v: &GridFunction, alpha: f64) -> f64 {
    let x = v.grid().nodes();
    let y = v.values();
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..x.len())
                .map(|j| (y[i] - y[j]).abs() / (x[i] - x[j]).abs().powf(alpha))
                .fold(0.0, f64::max)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Hölder budget for a calibrated subaction: `λ^α/(1−λ^α) · Höl_α(A)`.
pub fn holder_budget(lambda: f64, alpha: f64, holder_a: f64) -> f64 {
    let l = lambda.powf(alpha);
    l / (1.0 - l) * holder_a
}
