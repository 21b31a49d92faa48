//! The transfer operator `(P q)(x) = Σ_i g(ψ_i x)^β q(ψ_i x)`, its leading
//! eigendata, cylinder masses and the finite-depth spectral projection.
//!
//! The eigenfunction is stored as `log v` on the Chebyshev grid and the power
//! iteration runs in log space, so `v_β` spanning many orders of magnitude at
//! large `β` causes no underflow. The eigenmeasure `μ̃` is a vector of
//! quadrature weights obtained by iterating the adjoint action on
//! Clenshaw–Curtis weights; for strongly concentrated measures individual
//! weights can be negative while every tested integral stays accurate.
//!
//! For a word `γ` of length `k`, `h̃_γ(x) = Π_{m ≤ k} g^β(ψ_{γ_m} x)` over the
//! prefixes `γ_m`, and `μ̃(I_γ) = α^{-k} μ̃(h̃_γ)`.

mod grid;
mod potential;

use std::sync::Arc;

pub use grid::{ChebGrid, GridFunction, MIN_NODES};
pub use potential::PotentialSpec;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::ExpandingMap;
use crate::error::{Error, Result};
use crate::par::*;
use crate::symbolic::Word;

pub const DEFAULT_NODES: usize = 128;

/// The adjoint iteration stops at `max(tol, ADJOINT_FLOOR · n · ε)`: at large
/// `β` rounding in the signed node sums stalls it near `1e-11` for `n = 128`.
const ADJOINT_FLOOR: f64 = 1e3;

/// Largest number of leaves a full word-tree walk may visit.
pub const MAX_TREE_LEAVES: usize = 1 << 22;

/// `log Σ_j w_j e^{s_j}` for signed weights; fails if the sum is not positive.
pub fn log_weighted_sum_exp(weights: &[f64], logs: &[f64], what: &'static str) -> Result<f64> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NonFinite { what, x: f64::NAN });
    }
    let s: f64 = weights
        .iter()
        .zip(logs)
        .map(|(w, l)| w * (l - top).exp())
        .sum();
    if s > 0.0 {
        Ok(top + s.ln())
    } else {
        Err(Error::NonPositiveMass { what })
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY || !top.is_finite() {
        return top;
    }
    top + values.map(|v| (v - top).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 5000,
        }
    }
}

/// Leading eigen-triple at inverse temperature `β`: `P v = α v`,
/// `μ̃ P = α μ̃`, `μ̃(1) = 1`, `μ̃(v) = 1`.
#[derive(Debug, Clone)]
pub struct EigenData {
    pub beta: f64,
    pub log_alpha: f64,
    /// `log v` at the nodes.
    pub log_v: GridFunction,
    /// Quadrature weights representing `μ̃`.
    pub mu: Vec<f64>,
    /// `max_j |log (P v)(x_j) − log α − log v(x_j)|`.
    pub residual: f64,
    /// `‖(P/α)^T w − w‖_1` for the weight vector.
    pub adjoint_residual: f64,
    pub iterations: usize,
}

impl EigenData {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn grid(&self) -> &Arc<ChebGrid> {
        self.log_v.grid()
    }

    /// `v(x)`.
    pub fn v(&self, x: f64) -> f64 {
        self.log_v.eval(x).exp()
    }

    pub fn v_grid(&self) -> GridFunction {
        self.log_v.map(f64::exp)
    }

    /// `μ̃(q)` for node values of `q`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.mu.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// `log μ̃(e^s)` for node values of `s`.
    pub fn log_integrate_exp(&self, logs: &[f64]) -> Result<f64> {
        log_weighted_sum_exp(&self.mu, logs, "eigenmeasure integral")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    pub beta: f64,
    pub alpha: f64,
    pub log_alpha: f64,
    pub residual: f64,
    pub adjoint_residual: f64,
    pub iterations: usize,
    pub grid_n: usize,
}

impl EigenData {
    pub fn report(&self) -> EigenReport {
        EigenReport {
            beta: self.beta,
            alpha: self.alpha(),
            log_alpha: self.log_alpha,
            residual: self.residual,
            adjoint_residual: self.adjoint_residual,
            iterations: self.iterations,
            grid_n: self.grid().len(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Bary {
    Den(f64),
    Node(usize),
}

/// The transfer operator of a map and potential on a fixed grid.
#[derive(Debug, Clone)]
pub struct Transfer {
    map: Arc<ExpandingMap>,
    potential: Arc<PotentialSpec>,
    grid: Arc<ChebGrid>,
    /// `ψ_i(x_j)` at index `j*d + i`.
    pre: Vec<f64>,
    /// `A(ψ_i(x_j))`.
    a_pre: Vec<f64>,
    /// Barycentric denominators at `ψ_i(x_j)`, or the node index when it coincides.
    den: Vec<Bary>,
}

impl Transfer {
    pub fn new(
        map: Arc<ExpandingMap>,
        potential: Arc<PotentialSpec>,
        grid: Arc<ChebGrid>,
    ) -> Result<Self> {
        let d = map.degree();
        let mut pre = Vec::with_capacity(grid.len() * d);
        let mut a_pre = Vec::with_capacity(grid.len() * d);
        let mut den = Vec::with_capacity(grid.len() * d);
        for &x in grid.nodes() {
            for i in 0..d {
                let y = map.psi(i, x);
                if !y.is_finite() {
                    return Err(Error::NonFinite {
                        what: "inverse branch",
                        x,
                    });
                }
                let a = potential.a(y);
                if !a.is_finite() {
                    return Err(Error::NonPositivePotential {
                        x: y,
                        value: a.exp(),
                    });
                }
                pre.push(y);
                a_pre.push(a);
                den.push(match grid.node_index(y) {
                    Some(k) => Bary::Node(k),
                    None => Bary::Den(grid
                        .nodes()
                        .iter()
                        .zip(grid.barycentric_weights())
                        .map(|(&t, &b)| b / (y - t))
                        .sum()),
                });
            }
        }
        Ok(Self {
            map,
            potential,
            grid,
            pre,
            a_pre,
            den,
        })
    }

    pub fn with_nodes(map: Arc<ExpandingMap>, potential: Arc<PotentialSpec>, n: usize) -> Result<Self> {
        Self::new(map, potential, ChebGrid::new(n)?)
    }

    pub fn map(&self) -> &Arc<ExpandingMap> {
        &self.map
    }

    pub fn potential(&self) -> &Arc<PotentialSpec> {
        &self.potential
    }

    pub fn grid(&self) -> &Arc<ChebGrid> {
        &self.grid
    }

    fn d(&self) -> usize {
        self.map.degree()
    }

    /// `P q` at the nodes.
    pub fn apply(&self, q: &GridFunction, beta: f64) -> GridFunction {
        let d = self.d();
        let vals = (0..self.grid.len())
            .into_par_iter()
            .map(|j| {
                (0..d)
                    .map(|i| {
                        let k = j * d + i;
                        (beta * self.a_pre[k]).exp() * q.eval(self.pre[k])
                    })
                    .sum()
            })
            .collect();
        GridFunction::new(self.grid.clone(), vals).expect("grid sizes match")
    }

    /// `log P e^{L}` at the nodes.
    fn log_apply(&self, log_q: &[f64], beta: f64) -> Vec<f64> {
        let d = self.d();
        (0..self.grid.len())
            .into_par_iter()
            .map(|j| {
                log_sum_exp((0..d).map(|i| {
                    let k = j * d + i;
                    beta * self.a_pre[k] + self.grid.interpolate(log_q, self.pre[k])
                }))
            })
            .collect()
    }

    /// `(e^{-shift} P)^T w`.
    fn adjoint_apply(&self, w: &[f64], beta: f64, shift: f64) -> Vec<f64> {
        let d = self.d();
        let n = self.grid.len();
        // c_{ji} = w_j G_{ji} / den_{ji}; out_l = Σ c_{ji} b_l / (y_{ji} − x_l)
        let coef: Vec<f64> = (0..n * d)
            .map(|k| w[k / d] * (beta * self.a_pre[k] - shift).exp())
            .collect();
        let nodes = self.grid.nodes();
        let bary = self.grid.barycentric_weights();
        (0..n)
            .into_par_iter()
            .map(|l| {
                let mut acc = 0.0;
                for k in 0..n * d {
                    acc += match self.den[k] {
                        Bary::Node(hit) => {
                            if hit == l {
                                coef[k]
                            } else {
                                0.0
                            }
                        }
                        Bary::Den(den) => coef[k] * bary[l] / ((self.pre[k] - nodes[l]) * den),
                    };
                }
                acc
            })
            .collect()
    }

    fn adjoint_power(&self, mut mu: Vec<f64>, beta: f64, log_alpha: f64, max_iter: usize, tol: f64) -> Result<(Vec<f64>, usize)> {
        let mut delta = f64::INFINITY;
        for it in 1..=max_iter {
            let mut next = self.adjoint_apply(&mu, beta, log_alpha);
            let s: f64 = next.iter().sum();
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NonPositiveMass {
                    what: "adjoint iterate",
                });
            }
            next.iter_mut().for_each(|w| *w /= s);
            delta = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
            mu = next;
            if delta <= tol {
                return Ok((mu, it));
            }
            if it == max_iter {
                break;
            }
        }
        Err(Error::NoConvergence {
            what: "eigenmeasure adjoint iteration",
            iterations: max_iter,
            residual: delta,
        })
    }

    /// Solves `(Mᵀ/α − I) μ = 0`, `Σ μ = 1` for the node matrix `M` of `P`.
    /// Ill-conditioned at large `β`, so only used as a starting point.
    fn adjoint_direct(&self, beta: f64, log_alpha: f64) -> Option<Vec<f64>> {
        let d = self.d();
        let n = self.grid.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut row = vec![0.0; n];
                for i in 0..d {
                    let k = j * d + i;
                    let c = (beta * self.a_pre[k] - log_alpha).exp();
                    for (r, l) in row.iter_mut().zip(self.grid.lagrange_row(self.pre[k])) {
                        *r += c * l;
                    }
                }
                row
            })
            .collect();
        let mut b = DMatrix::from_fn(n, n, |l, j| rows[j][l] - if l == j { 1.0 } else { 0.0 });
        b.row_mut(n - 1).fill(1.0);
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        b.lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect::<Vec<f64>>())
            .filter(|v| v.iter().all(|w| w.is_finite()))
    }

    /// Power iteration for `(α, v)` and adjoint iteration for `μ̃`.
    pub fn leading_eigen(&self, beta: f64, opts: EigenOptions) -> Result<EigenData> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let n = self.grid.len();
        let mut log_v = vec![0.0; n];
        let mut log_alpha = f64::NAN;
        let mut history: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let mut delta = f64::INFINITY;
        for it in 1..=opts.max_iter {
            iterations = it;
            let next = self.log_apply(&log_v, beta);
            let shift = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !shift.is_finite() {
                return Err(Error::NonFinite {
                    what: "transfer iterate",
                    x: f64::NAN,
                });
            }
            let next: Vec<f64> = next.iter().map(|v| v - shift).collect();
            delta = next
                .iter()
                .zip(&log_v)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            log_v = next;
            log_alpha = shift;
            history.push(shift);
            if delta <= opts.tol {
                converged = true;
                break;
            }
            if it >= 200 && oscillating(&history) {
                return Err(Error::SpectralGapCollapse { iterations: it });
            }
        }
        if !converged {
            if oscillating(&history) {
                return Err(Error::SpectralGapCollapse { iterations });
            }
            return Err(Error::NoConvergence {
                what: "eigenfunction power iteration",
                iterations,
                residual: delta,
            });
        }

        // left eigenvector: power iteration from the quadrature weights; when a
        // small spectral gap stalls it, restart from a direct solve
        let adj_tol = opts.tol.max(ADJOINT_FLOOR * n as f64 * f64::EPSILON);
        let cold = self.grid.quadrature_weights().to_vec();
        let (mu, adj_iter) = match self.adjoint_power(cold, beta, log_alpha, opts.max_iter, adj_tol) {
            Ok(done) => done,
            Err(cold_err @ Error::NoConvergence { .. }) => self
                .adjoint_direct(beta, log_alpha)
                .and_then(|warm| self.adjoint_power(warm, beta, log_alpha, opts.max_iter, adj_tol).ok())
                .ok_or(cold_err)?,
            Err(e) => return Err(e),
        };

        // normalizations: μ̃(1) = 1 (already), μ̃(v) = 1
        let log_norm = log_weighted_sum_exp(&mu, &log_v, "normalization of v")?;
        log_v.iter_mut().for_each(|l| *l -= log_norm);

        let check = self.log_apply(&log_v, beta);
        let residual = check
            .iter()
            .zip(&log_v)
            .fold(0.0f64, |m, (a, b)| m.max((a - log_alpha - b).abs()));
        let back = self.adjoint_apply(&mu, beta, log_alpha);
        let adjoint_residual = back.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();

        Ok(EigenData {
            beta,
            log_alpha,
            log_v: GridFunction::new(self.grid.clone(), log_v)?,
            mu,
            residual,
            adjoint_residual,
            iterations: iterations + adj_iter,
        })
    }

    /// `log h̃_γ` at the grid nodes, along with `ψ_γ` at the nodes.
    pub fn log_h_tilde_nodes(&self, gamma: &[u8], beta: f64) -> (Vec<f64>, Vec<f64>) {
        let mut y = self.grid.nodes().to_vec();
        let mut s = vec![0.0; y.len()];
        for &c in gamma {
            for (yj, sj) in y.iter_mut().zip(s.iter_mut()) {
                *yj = self.map.psi(c as usize, *yj);
                *sj += beta * self.potential.a(*yj);
            }
        }
        (y, s)
    }

    fn check_word(&self, gamma: &Word) -> Result<()> {
        if gamma.alphabet() != self.d() {
            return Err(Error::AlphabetMismatch {
                left: gamma.alphabet(),
                right: self.d(),
            });
        }
        Ok(())
    }

    /// `log μ̃(I_γ)`.
    pub fn log_cylinder_mass(&self, gamma: &Word, eig: &EigenData) -> Result<f64> {
        self.check_word(gamma)?;
        let (_, s) = self.log_h_tilde_nodes(gamma.symbols(), eig.beta);
        Ok(eig.log_integrate_exp(&s)? - gamma.len() as f64 * eig.log_alpha)
    }

    /// `μ̃(I_γ)`; masses below `1e-300` are reported as [`Error::Underflow`]
    /// carrying the log-mass.
    pub fn cylinder_mass(&self, gamma: &Word, eig: &EigenData) -> Result<f64> {
        let lm = self.log_cylinder_mass(gamma, eig)?;
        underflow_guard(lm)
    }

    /// `log μ(C_γ) = log ∫_{I_γ} v dμ̃`.
    pub fn log_word_measure(&self, gamma: &Word, eig: &EigenData) -> Result<f64> {
        self.check_word(gamma)?;
        let (y, mut s) = self.log_h_tilde_nodes(gamma.symbols(), eig.beta);
        for (sj, yj) in s.iter_mut().zip(&y) {
            *sj += eig.log_v.eval(*yj);
        }
        Ok(eig.log_integrate_exp(&s)? - gamma.len() as f64 * eig.log_alpha)
    }

    /// `μ(C_γ)` for the invariant measure `v μ̃` lifted to the shift.
    pub fn word_measure(&self, gamma: &Word, eig: &EigenData) -> Result<f64> {
        underflow_guard(self.log_word_measure(gamma, eig)?)
    }

    /// Visits every word of length `k` in index order, carrying `ψ_γ(p)` and
    /// `β Σ_m A(ψ_{γ_m} p)` for each of `points`.
    pub fn walk_words<T, F>(&self, k: usize, points: &[f64], beta: f64, leaf: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &[f64], &[f64]) -> T + Sync,
    {
        let d = self.d();
        let leaves = (d as f64).powi(k as i32);
        if leaves > MAX_TREE_LEAVES as f64 {
            return Err(Error::DepthCap {
                depth: k,
                defect: f64::NAN,
            });
        }
        let mut split = 0;
        while split < k && d.pow(split as u32) < 64 {
            split += 1;
        }
        let rest = k - split;
        let chunks: Vec<Vec<T>> = (0..d.pow(split as u32))
            .into_par_iter()
            .map(|pidx| {
                let prefix = Word::from_index(pidx, split, d);
                let mut y = points.to_vec();
                let mut s = vec![0.0; points.len()];
                for &c in prefix.symbols() {
                    for (yj, sj) in y.iter_mut().zip(s.iter_mut()) {
                        *yj = self.map.psi(c as usize, *yj);
                        *sj += beta * self.potential.a(*yj);
                    }
                }
                let mut out = Vec::with_capacity(d.pow(rest as u32));
                self.dfs(rest, &y, &s, pidx, beta, &leaf, &mut out);
                out
            })
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs<T, F>(&self, left: usize, y: &[f64], s: &[f64], index: usize, beta: f64, leaf: &F, out: &mut Vec<T>)
    where
        F: Fn(usize, &[f64], &[f64]) -> T,
    {
        if left == 0 {
            out.push(leaf(index, y, s));
            return;
        }
        let d = self.d();
        for c in 0..d {
            let y2: Vec<f64> = y.iter().map(|&t| self.map.psi(c, t)).collect();
            let s2: Vec<f64> = s
                .iter()
                .zip(&y2)
                .map(|(&a, &t)| a + beta * self.potential.a(t))
                .collect();
            self.dfs(left - 1, &y2, &s2, index * d + c, beta, leaf, out);
        }
    }

    /// `log μ̃(I_γ)` for all `|γ| = k`, in word-index order.
    pub fn log_cylinder_masses(&self, k: usize, eig: &EigenData) -> Result<Vec<f64>> {
        let la = eig.log_alpha;
        self.walk_words(k, self.grid.nodes(), eig.beta, |_, _, s| {
            eig.log_integrate_exp(s).map(|m| m - k as f64 * la)
        })?
        .into_iter()
        .collect()
    }

    /// `ρᵏ(x) = Σ_{|γ|=k} h_γ(x) ∫_{I_γ} z dμ̃` at each of `xs`.
    pub fn spectral_projection_rho(
        &self,
        z: &GridFunction,
        k: usize,
        xs: &[f64],
        eig: &EigenData,
    ) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let mut points = self.grid.nodes().to_vec();
        points.extend_from_slice(xs);
        let kla = k as f64 * eig.log_alpha;
        let terms = self.walk_words(k, &points, eig.beta, |_, y, s| -> Result<Vec<f64>> {
            let (sn, sx) = s.split_at(n);
            let top = sn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut num = 0.0;
            let mut den = 0.0;
            for ((&w, &sj), &yj) in eig.mu.iter().zip(sn).zip(&y[..n]) {
                let e = w * (sj - top).exp();
                den += e;
                num += e * z.eval(yj);
            }
            if !(den > 0.0) {
                return Err(Error::NonPositiveMass {
                    what: "cylinder average",
                });
            }
            let ratio = num / den;
            Ok(sx.iter().map(|&sv| (sv - kla).exp() * ratio).collect())
        })?;
        let mut rho = vec![0.0; xs.len()];
        for t in terms {
            for (r, v) in rho.iter_mut().zip(t?) {
                *r += v;
            }
        }
        Ok(rho)
    }

    /// `(1/β) log v_β` with the normalization `μ̃(v) = 1`.
    pub fn scaled_log_eigenfunction(&self, eig: &EigenData) -> GridFunction {
        let b = eig.beta;
        eig.log_v.map(|l| l / b)
    }

    /// `(1/β) log v_β`, shifted to vanish at `x_bar`.
    pub fn log_eigenfunction_scaled(&self, eig: &EigenData, x_bar: f64) -> GridFunction {
        let f = self.scaled_log_eigenfunction(eig);
        let c = f.eval(x_bar);
        f.map(|v| v - c)
    }
}

fn underflow_guard(log_mass: f64) -> Result<f64> {
    if log_mass < (1e-300f64).ln() {
        Err(Error::Underflow { log_mass })
    } else {
        Ok(log_mass.exp())
    }
}

/// Sign-alternating increments of roughly constant size over the last 20 steps.
fn oscillating(history: &[f64]) -> bool {
    if history.len() < 42 {
        return false;
    }
    let inc: Vec<f64> = history.windows(2).map(|w| w[1] - w[0]).collect();
    let tail = &inc[inc.len() - 21..];
    let alternating = tail.windows(2).all(|w| w[0] * w[1] < 0.0);
    let first = tail[0].abs();
    let last = tail[20].abs();
    alternating && last > 0.5 * first
}

#[cfg(test)]
mod tests;
