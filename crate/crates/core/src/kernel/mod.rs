//! Involution kernels on `Σ × [0,1]`, the scaling function, the dual
//! potential `A*` and the zero-temperature kernel `H_∞`.
//!
//! At depth `k` the kernel is
//! `log h_β(ω_k, x) = log h̃_{ω_k}(x) − log μ̃(h̃_{ω_k})`; the eigenvalue
//! cancels between numerator and normalizer, and every quantity is carried
//! in log space.
//!
//! Two routes lead to `A*`:
//! * scaling: `log g*_β(ω) = log α + log s(ω)`, from nested cylinder masses;
//! * series: `A*(ω) = A(ψ_{ω₀} x) + W₁(σω, ψ_{ω₀} x) − W₁(ω, x)` with
//!   `W₁(ω, x) = Σ_{n=1}^{D} [A(ψ_{ω_n} x) − A(ψ_{ω_n} x̄)]`.
//!
//! They may differ by a coboundary, so they are compared through periodic
//! orbit averages.

mod duality;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

pub use duality::{dual_max_average, DualMax};
use serde::Serialize;

use crate::dynamics::ExpandingMap;
use crate::error::{Error, Result};
use crate::par::*;
use crate::symbolic::EventuallyPeriodicPoint;
use crate::transfer::{EigenData, EigenOptions, PotentialSpec, Transfer};

pub const DEFAULT_DEPTH_CAP: usize = 400;
pub const DEFAULT_SERIES_TOL: f64 = 1e-9;

/// A limit value with the depth that produced it and a tail estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergedValue {
    pub value: f64,
    pub depth_used: usize,
    pub tail_bound: f64,
}

/// Which construction of `A*` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DualMode {
    Scaling,
    Series,
}

/// Map, potential, grid, anchors `(x̄, ω̄)` and a cache of eigendata by `β`.
#[derive(Debug)]
pub struct KernelContext {
    transfer: Transfer,
    eig_opts: EigenOptions,
    x_bar: f64,
    omega_bar: EventuallyPeriodicPoint,
    depth_cap: usize,
    series_tol: f64,
    cache: Mutex<BTreeMap<u64, Arc<EigenData>>>,
}

/// Incremental state along `ω_k` for `k = 1, 2, …`: `ψ_{ω_k}` and
/// `β Σ_{m≤k} A(ψ_{ω_m})` at the grid nodes and at extra points.
struct Chain<'a> {
    ctx: &'a KernelContext,
    omega: &'a EventuallyPeriodicPoint,
    beta: f64,
    k: usize,
    y: Vec<f64>,
    s: Vec<f64>,
    n_nodes: usize,
}

impl<'a> Chain<'a> {
    fn new(ctx: &'a KernelContext, omega: &'a EventuallyPeriodicPoint, beta: f64, extra: &[f64]) -> Self {
        let mut y = ctx.transfer.grid().nodes().to_vec();
        let n_nodes = y.len();
        y.extend_from_slice(extra);
        let s = vec![0.0; y.len()];
        Self {
            ctx,
            omega,
            beta,
            k: 0,
            y,
            s,
            n_nodes,
        }
    }

    fn step(&mut self) {
        let c = self.omega.symbol(self.k) as usize;
        let map = self.ctx.map();
        let pot = self.ctx.potential();
        for (yj, sj) in self.y.iter_mut().zip(self.s.iter_mut()) {
            *yj = map.psi(c, *yj);
            *sj += self.beta * pot.a(*yj);
        }
        self.k += 1;
    }

    /// `log μ̃(h̃_{ω_k})`.
    fn log_norm(&self, eig: &EigenData) -> Result<f64> {
        eig.log_integrate_exp(&self.s[..self.n_nodes])
    }

    /// `log h̃_{ω_k}` at the extra points.
    fn extra(&self) -> &[f64] {
        &self.s[self.n_nodes..]
    }
}

impl KernelContext {
    pub fn new(transfer: Transfer, x_bar: f64, omega_bar: EventuallyPeriodicPoint) -> Result<Self> {
        if !(0.0..=1.0).contains(&x_bar) {
            return Err(Error::InvalidArgument(format!("anchor x_bar = {x_bar} outside [0,1]")));
        }
        if omega_bar.alphabet() != transfer.map().degree() {
            return Err(Error::AlphabetMismatch {
                left: omega_bar.alphabet(),
                right: transfer.map().degree(),
            });
        }
        Ok(Self {
            transfer,
            eig_opts: EigenOptions::default(),
            x_bar,
            omega_bar,
            depth_cap: DEFAULT_DEPTH_CAP,
            series_tol: DEFAULT_SERIES_TOL,
            cache: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn with_eigen_options(mut self, opts: EigenOptions) -> Self {
        self.eig_opts = opts;
        self
    }

    pub fn with_depth_cap(mut self, cap: usize) -> Self {
        self.depth_cap = cap;
        self
    }

    pub fn with_series_tol(mut self, tol: f64) -> Self {
        self.series_tol = tol;
        self
    }

    pub fn transfer(&self) -> &Transfer {
        &self.transfer
    }

    pub fn map(&self) -> &ExpandingMap {
        self.transfer.map()
    }

    pub fn potential(&self) -> &PotentialSpec {
        self.transfer.potential()
    }

    pub fn x_bar(&self) -> f64 {
        self.x_bar
    }

    pub fn omega_bar(&self) -> &EventuallyPeriodicPoint {
        &self.omega_bar
    }

    pub fn depth_cap(&self) -> usize {
        self.depth_cap
    }

    fn check_point(&self, omega: &EventuallyPeriodicPoint) -> Result<()> {
        if omega.alphabet() != self.map().degree() {
            return Err(Error::AlphabetMismatch {
                left: omega.alphabet(),
                right: self.map().degree(),
            });
        }
        Ok(())
    }

    /// Eigendata at `β`, computed once and cached.
    pub fn eigen(&self, beta: f64) -> Result<Arc<EigenData>> {
        let key = beta.to_bits();
        let mut cache = self.cache.lock().expect("eigen cache poisoned");
        if let Some(e) = cache.get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(self.transfer.leading_eigen(beta, self.eig_opts)?);
        cache.insert(key, e.clone());
        Ok(e)
    }

    /// Fills the cache for several `β` at once (in parallel).
    pub fn prefetch(&self, betas: &[f64]) -> Result<()> {
        let missing: Vec<f64> = {
            let cache = self.cache.lock().expect("eigen cache poisoned");
            betas
                .iter()
                .copied()
                .filter(|b| !cache.contains_key(&b.to_bits()))
                .collect()
        };
        let computed = missing
            .par_iter()
            .map(|&b| self.transfer.leading_eigen(b, self.eig_opts).map(|e| (b, e)))
            .collect::<Result<Vec<_>>>()?;
        let mut cache = self.cache.lock().expect("eigen cache poisoned");
        for (b, e) in computed {
            cache.entry(b.to_bits()).or_insert_with(|| Arc::new(e));
        }
        Ok(())
    }

    /// `log h_β(γ, x)` for a finite word.
    pub fn h_word(&self, gamma: &crate::symbolic::Word, x: f64, beta: f64) -> Result<f64> {
        if gamma.is_empty() {
            return Ok(0.0);
        }
        let eig = self.eigen(beta)?;
        let (_, s) = self.transfer.log_h_tilde_nodes(gamma.symbols(), beta);
        let norm = eig.log_integrate_exp(&s)?;
        let mut y = x;
        let mut sx = 0.0;
        for &c in gamma.symbols() {
            y = self.map().psi(c as usize, y);
            sx += beta * self.potential().a(y);
        }
        Ok(sx - norm)
    }

    fn tail(&self, defect: f64, prev: f64) -> f64 {
        let lam = self.map().lambda();
        defect.max(prev * lam) * lam / (1.0 - lam)
    }

    /// `log h_β(ω, x)` at several `x`, all to depth exactly `depth`.
    pub fn h_at_depth(&self, omega: &EventuallyPeriodicPoint, xs: &[f64], beta: f64, depth: usize) -> Result<Vec<f64>> {
        self.check_point(omega)?;
        let eig = self.eigen(beta)?;
        let mut chain = Chain::new(self, omega, beta, xs);
        for _ in 0..depth {
            chain.step();
        }
        let norm = chain.log_norm(&eig)?;
        Ok(chain.extra().iter().map(|s| s - norm).collect())
    }

    /// `W₁(ω, x) = lim_k log h_β(ω_k, x)`, deepening until the tail estimate
    /// is below `tol`.
    pub fn h_limit(&self, omega: &EventuallyPeriodicPoint, x: f64, beta: f64, tol: f64) -> Result<ConvergedValue> {
        self.check_point(omega)?;
        let eig = self.eigen(beta)?;
        let mut chain = Chain::new(self, omega, beta, &[x]);
        chain.step();
        let mut value = chain.extra()[0] - chain.log_norm(&eig)?;
        let mut prev_defect = f64::INFINITY;
        while chain.k < self.depth_cap {
            chain.step();
            let next = chain.extra()[0] - chain.log_norm(&eig)?;
            let defect = (next - value).abs();
            value = next;
            // one defect alone can vanish by coincidence; wait for two
            let tail = self.tail(defect, prev_defect);
            if tail <= tol {
                return Ok(ConvergedValue {
                    value,
                    depth_used: chain.k,
                    tail_bound: tail,
                });
            }
            prev_defect = defect;
        }
        Err(Error::DepthCap {
            depth: self.depth_cap,
            defect: prev_defect,
        })
    }

    /// `log s(ω)` and `log μ̃` normalizers, iterated to Cauchy tolerance.
    pub fn log_scaling_function(&self, omega: &EventuallyPeriodicPoint, beta: f64, tol: f64) -> Result<ConvergedValue> {
        self.check_point(omega)?;
        let eig = self.eigen(beta)?;
        let shifted = omega.shift();
        let mut top = Chain::new(self, omega, beta, &[]);
        let mut sub = Chain::new(self, &shifted, beta, &[]);
        top.step();
        // log s_1 = log μ̃(I_{ω_1}) − log μ̃(I) = log μ̃(h̃_{ω_1}) − log α
        let mut value = top.log_norm(&eig)? - eig.log_alpha;
        let mut prev_defect = f64::INFINITY;
        while top.k < self.depth_cap {
            top.step();
            sub.step();
            let next = top.log_norm(&eig)? - sub.log_norm(&eig)? - eig.log_alpha;
            let defect = (next - value).abs();
            value = next;
            // one defect alone can vanish by coincidence; wait for two
            let tail = self.tail(defect, prev_defect);
            if tail <= tol {
                return Ok(ConvergedValue {
                    value,
                    depth_used: top.k,
                    tail_bound: tail,
                });
            }
            prev_defect = defect;
        }
        Err(Error::DepthCap {
            depth: self.depth_cap,
            defect: prev_defect,
        })
    }

    /// `s(ω) = lim μ̃(I_{ω_k}) / μ̃(I_{σ(ω_k)})`.
    pub fn scaling_function(&self, omega: &EventuallyPeriodicPoint, beta: f64, tol: f64) -> Result<ConvergedValue> {
        let l = self.log_scaling_function(omega, beta, tol)?;
        let s = l.value.exp();
        Ok(ConvergedValue {
            value: s,
            depth_used: l.depth_used,
            tail_bound: s * l.tail_bound.exp_m1(),
        })
    }

    /// `μ(C_{ω_k}) / μ(C_{σ(ω_k)})` from word measures.
    pub fn word_measure_ratio(&self, omega: &EventuallyPeriodicPoint, beta: f64, k: usize) -> Result<f64> {
        let eig = self.eigen(beta)?;
        let full = omega.prefix(k);
        let tail = omega.shift().prefix(k.saturating_sub(1));
        let t = &self.transfer;
        Ok((t.log_word_measure(&full, &eig)? - t.log_word_measure(&tail, &eig)?).exp())
    }

    /// Scaling-route dual at fixed depth: `log μ̃(h̃_{ω_k}) − log μ̃(h̃_{σω_{k-1}})`.
    fn scaling_dual(&self, omega: &EventuallyPeriodicPoint, beta: f64, depth: usize) -> Result<f64> {
        let eig = self.eigen(beta)?;
        let depth = depth.max(1);
        let shifted = omega.shift();
        let mut top = Chain::new(self, omega, beta, &[]);
        let mut sub = Chain::new(self, &shifted, beta, &[]);
        top.step();
        for _ in 1..depth {
            top.step();
            sub.step();
        }
        let sub_norm = if sub.k == 0 { 0.0 } else { sub.log_norm(&eig)? };
        Ok(top.log_norm(&eig)? - sub_norm)
    }

    /// Truncated series kernel `W₁(ω, x)` anchored at `x̄` (for `β = 1`).
    pub fn series_kernel(&self, omega: &EventuallyPeriodicPoint, x: f64, depth: usize) -> f64 {
        let map = self.map();
        let pot = self.potential();
        let (mut y, mut yb) = (x, self.x_bar);
        let mut w = 0.0;
        for n in 0..depth {
            let c = omega.symbol(n) as usize;
            y = map.psi(c, y);
            yb = map.psi(c, yb);
            w += pot.a(y) - pot.a(yb);
        }
        w
    }

    /// Bound on the neglected part of the series at `depth`.
    pub fn series_truncation_bound(&self, depth: usize) -> f64 {
        let lam = self.map().lambda();
        self.potential().lipschitz(1024) * 1.05 * lam.powi(depth as i32 + 1) / (1.0 - lam)
    }

    fn series_dual_at(&self, omega: &EventuallyPeriodicPoint, x: f64, depth: usize) -> f64 {
        let c = omega.symbol(0) as usize;
        let y = self.map().psi(c, x);
        self.potential().a(y) + self.series_kernel(&omega.shift(), y, depth) - self.series_kernel(omega, x, depth)
    }

    /// `A*(ω)` for the potential `βA`.
    pub fn dual_potential(&self, omega: &EventuallyPeriodicPoint, beta: f64, mode: DualMode, depth: usize) -> Result<f64> {
        self.check_point(omega)?;
        match mode {
            DualMode::Scaling => self.scaling_dual(omega, beta, depth),
            DualMode::Series => {
                let bound = self.series_truncation_bound(depth);
                if bound > self.series_tol {
                    return Err(Error::SeriesTruncation {
                        bound,
                        tol: self.series_tol,
                    });
                }
                let vals: Vec<f64> = [0.0, 0.5, 1.0]
                    .iter()
                    .map(|&x| self.series_dual_at(omega, x, depth))
                    .collect();
                let spread = vals.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
                    - vals.iter().fold(f64::INFINITY, |m, &v| m.min(v));
                if !(spread <= self.series_tol) {
                    return Err(Error::SeriesNotInvariant { spread });
                }
                Ok(beta * vals[1])
            }
        }
    }

    /// `|[log g*(ω) − βA(ψ_{ω₀} x)] − [log h(σω, ψ_{ω₀} x) − log h(ω, x)]|`
    /// with every term at the same depth.
    pub fn involution_residual(&self, omega: &EventuallyPeriodicPoint, x: f64, beta: f64, depth: usize) -> Result<f64> {
        self.check_point(omega)?;
        let c = omega.symbol(0) as usize;
        let y = self.map().psi(c, x);
        let lhs = self.scaling_dual(omega, beta, depth)? - beta * self.potential().a(y);
        let h_shift = self.h_at_depth(&omega.shift(), &[y], beta, depth)?[0];
        let h = self.h_at_depth(omega, &[x], beta, depth)?[0];
        Ok((lhs - (h_shift - h)).abs())
    }

    /// `H_β(ω, x) = (1/β) log h_β(ω, x)`.
    pub fn h_beta(&self, omega: &EventuallyPeriodicPoint, x: f64, beta: f64, tol: f64) -> Result<ConvergedValue> {
        let c = self.h_limit(omega, x, beta, tol * beta)?;
        Ok(ConvergedValue {
            value: c.value / beta,
            depth_used: c.depth_used,
            tail_bound: c.tail_bound / beta,
        })
    }

    /// `H_β` along an increasing schedule; the last entry is reported with the
    /// final Cauchy defect as its tail bound.
    pub fn h_infinity(&self, omega: &EventuallyPeriodicPoint, x: f64, schedule: &[f64], tol: f64) -> Result<HInfinity> {
        check_schedule(schedule)?;
        let per_beta = schedule
            .iter()
            .map(|&b| self.h_beta(omega, x, b, tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(HInfinity::from_values(schedule, per_beta))
    }

    /// `H_β(ω, x)` at a batch of `xs`, fixed depth, every schedule entry.
    /// Rows are indexed `[beta][x]`.
    pub fn h_beta_batch(&self, omega: &EventuallyPeriodicPoint, xs: &[f64], schedule: &[f64], depth: usize) -> Result<Vec<Vec<f64>>> {
        schedule
            .iter()
            .map(|&b| {
                self.h_at_depth(omega, xs, b, depth)
                    .map(|v| v.into_iter().map(|h| h / b).collect())
            })
            .collect()
    }

    /// Depth at which the geometric tail of the kernel series falls below
    /// `tol` for every `β` (sampled Lipschitz constant of `A`).
    pub fn depth_for(&self, tol: f64) -> usize {
        let lam = self.map().lambda();
        let lip = self.potential().lipschitz(1024).max(1e-300) * 1.05;
        let mut k = 1;
        while k < self.depth_cap && lip * lam.powi(k as i32) / (1.0 - lam) > tol {
            k += 1;
        }
        k
    }
}

/// `H_β` values along a schedule and their Cauchy defects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HInfinity {
    pub value: ConvergedValue,
    pub schedule: Vec<f64>,
    pub per_beta: Vec<ConvergedValue>,
    pub defects: Vec<f64>,
    /// Defects non-increasing along the schedule.
    pub converging: bool,
}

impl HInfinity {
    fn from_values(schedule: &[f64], per_beta: Vec<ConvergedValue>) -> Self {
        let defects: Vec<f64> = per_beta
            .windows(2)
            .map(|w| (w[1].value - w[0].value).abs())
            .collect();
        let converging = defects.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        let last = *per_beta.last().expect("schedule is non-empty");
        Self {
            value: ConvergedValue {
                value: last.value,
                depth_used: last.depth_used,
                tail_bound: defects.last().copied().unwrap_or(0.0),
            },
            schedule: schedule.to_vec(),
            per_beta,
            defects,
            converging,
        }
    }
}

pub fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.len() < 3 {
        return Err(Error::InvalidArgument("beta schedule needs at least 3 entries".into()));
    }
    if !schedule.windows(2).all(|w| w[1] > w[0]) || schedule[0] <= 0.0 {
        return Err(Error::InvalidArgument("beta schedule must be positive and increasing".into()));
    }
    Ok(())
}
