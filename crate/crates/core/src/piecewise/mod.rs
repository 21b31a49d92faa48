//! Piecewise structure of the calibrated subaction.
//!
//! `V(x) = max_w [G(w, x) − I*(w)]` over the finitely many words `w` that
//! land on the maximizing cycle of the dual potential within `N̄` shifts.
//! Where one word attains the max on an interval, `V` is a single kernel
//! section there; the places where the selected word changes are the
//! breakpoints.
//!
//! Candidates are kept in increasing lexicographic order, so selections are
//! stored as indices and comparing indices compares words.

mod study;

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use study::{piecewise_study, KernelRoute, PiecewiseStudy, StudyOptions, SupportCheck};

use crate::ergopt::{DualSubactionTable, SubactionGrid};
use crate::error::{Error, Result};
use crate::kernel::{check_schedule, HInfinity, KernelContext};
use crate::par::*;
use crate::symbolic::{lex_order, EventuallyPeriodicPoint as Epp, Word};
use crate::transfer::GridFunction;

pub const DEFAULT_TIE_TOL: f64 = 1e-7;
pub const DEFAULT_REFINE_TOL: f64 = 1e-4;
pub const CERTIFICATE_PROBES: usize = 16;
/// Twist margins within this of zero count as equality.
pub const MARGIN_TOL: f64 = 1e-12;
const MAX_LISTED: usize = 32;

/// A kernel `G(w, x)` on `Σ × [0,1]`.
pub trait KernelEval: Sync {
    fn eval(&self, w: &Epp, x: f64) -> Result<f64>;
}

/// A closure used as a kernel.
pub struct FnKernel<F>(pub F);

impl<F> KernelEval for FnKernel<F>
where
    F: Fn(&Epp, f64) -> Result<f64> + Sync,
{
    fn eval(&self, w: &Epp, x: f64) -> Result<f64> {
        (self.0)(w, x)
    }
}

/// `H_∞(w, x) = H_∞(w, x̄) + W₁(w, x)`.
///
/// For every `β` the `x`-dependence of `H_β(w, ·)` is the series kernel
/// `W₁(w, ·)`, so only the value at the anchor goes through the `β`
/// schedule. Those values are cached per word.
pub struct ScheduleKernel<'a> {
    ctx: &'a KernelContext,
    schedule: Vec<f64>,
    tol: f64,
    depth: usize,
    offsets: Mutex<HashMap<Epp, HInfinity>>,
}

impl<'a> ScheduleKernel<'a> {
    pub fn new(ctx: &'a KernelContext, schedule: &[f64], tol: f64, depth: usize) -> Result<Self> {
        check_schedule(schedule)?;
        Ok(Self {
            ctx,
            schedule: schedule.to_vec(),
            tol,
            depth,
            offsets: Mutex::new(HashMap::new()),
        })
    }

    fn compute(&self, w: &Epp) -> Result<HInfinity> {
        self.ctx.h_infinity(w, self.ctx.x_bar(), &self.schedule, self.tol)
    }

    /// Computes the anchor values of `words` in parallel.
    pub fn prepare(&self, words: &[Epp]) -> Result<()> {
        let missing: Vec<Epp> = {
            let cache = self.offsets.lock().expect("offset cache poisoned");
            words.iter().filter(|w| !cache.contains_key(*w)).cloned().collect()
        };
        let done = missing
            .par_iter()
            .map(|w| Ok((w.clone(), self.compute(w)?)))
            .collect::<Result<Vec<_>>>()?;
        self.offsets.lock().expect("offset cache poisoned").extend(done);
        Ok(())
    }

    /// `H_∞(w, x̄)` with its schedule history.
    pub fn offset(&self, w: &Epp) -> Result<HInfinity> {
        if let Some(h) = self.offsets.lock().expect("offset cache poisoned").get(w) {
            return Ok(h.clone());
        }
        let h = self.compute(w)?;
        self.offsets
            .lock()
            .expect("offset cache poisoned")
            .insert(w.clone(), h.clone());
        Ok(h)
    }
}

impl KernelEval for ScheduleKernel<'_> {
    fn eval(&self, w: &Epp, x: f64) -> Result<f64> {
        Ok(self.offset(w)?.value.value + self.ctx.series_kernel(w, x, self.depth))
    }
}

/// `W₁(w, x) − V*(w)`: the series kernel corrected by the dual subaction.
pub struct TableKernel<'a> {
    pub ctx: &'a KernelContext,
    pub table: &'a DualSubactionTable,
    pub depth: usize,
}

impl KernelEval for TableKernel<'_> {
    fn eval(&self, w: &Epp, x: f64) -> Result<f64> {
        Ok(self.ctx.series_kernel(w, x, self.depth) - self.table.value(w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    #[serde(serialize_with = "crate::io::ser_display")]
    pub word: Epp,
    pub i_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    /// Increasing lexicographic order.
    pub candidates: Vec<Candidate>,
    pub n_bar: usize,
    #[serde(serialize_with = "crate::io::ser_display")]
    pub cycle: Word,
}

/// All `s₁…s_j ⧺ m` with `j ≤ n_bar` and `m` on the orbit of `cycle^∞`,
/// deduplicated, in increasing lexicographic order.
pub fn candidate_words(cycle: &Word, n_bar: usize) -> Result<Vec<Epp>> {
    if cycle.is_empty() {
        return Err(Error::InvalidArgument("empty cycle".into()));
    }
    let d = cycle.alphabet();
    let root = cycle.prefix(cycle.primitive_period());
    let mut out = Vec::new();
    for r in 0..root.len() {
        let m = Epp::periodic(&root.rotate(r))?;
        for j in 0..=n_bar {
            for s in Word::all(j, d) {
                out.push(m.prepend_word(&s)?);
            }
        }
    }
    out.sort_by(lex_order);
    out.dedup();
    Ok(out)
}

/// `|M| (d^{N̄+1} − 1) / (d − 1)`.
pub fn counting_bound(d: usize, cycle_len: usize, n_bar: usize) -> usize {
    cycle_len * (d.pow(n_bar as u32 + 1) - 1) / (d - 1)
}

impl CandidateSet {
    /// Enumerates candidates and attaches `I*`, which must be finite.
    pub fn new<F>(cycle: &Word, n_bar: usize, i_star: F) -> Result<Self>
    where
        F: Fn(&Epp) -> Result<f64> + Sync,
    {
        let words = candidate_words(cycle, n_bar)?;
        let vals = words.par_iter().map(&i_star).collect::<Result<Vec<_>>>()?;
        Self::from_parts(words.into_iter().zip(vals).collect(), cycle.clone(), n_bar)
    }

    /// From explicit `(word, I*)` pairs.
    pub fn from_parts(mut pairs: Vec<(Epp, f64)>, cycle: Word, n_bar: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no candidates".into()));
        }
        if let Some((w, v)) = pairs.iter().find(|p| !p.1.is_finite()) {
            return Err(Error::InvalidArgument(format!("I*({w}) = {v} is not finite")));
        }
        pairs.sort_by(|a, b| lex_order(&a.0, &b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        Ok(Self {
            candidates: pairs
                .into_iter()
                .map(|(word, i_star)| Candidate { word, i_star })
                .collect(),
            n_bar,
            cycle,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn words(&self) -> Vec<Epp> {
        self.candidates.iter().map(|c| c.word.clone()).collect()
    }

    /// `G(w, x) − I*(w)` for every candidate.
    fn scores<K: KernelEval + ?Sized>(&self, kernel: &K, x: f64) -> Result<Vec<f64>> {
        self.candidates
            .iter()
            .map(|c| Ok(kernel.eval(&c.word, x)? - c.i_star))
            .collect()
    }

    fn max_and_ties<K: KernelEval + ?Sized>(&self, kernel: &K, x: f64, tie_tol: f64) -> Result<(f64, Vec<usize>, f64)> {
        let s = self.scores(kernel, x)?;
        let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::NonFinite { what: "dual value", x });
        }
        let ties = (0..s.len()).filter(|&i| s[i] >= top - tie_tol).collect();
        // kernel spread max_w G − min_w G, for the closure diagnostic
        let g: Vec<f64> = s.iter().zip(&self.candidates).map(|(v, c)| v + c.i_star).collect();
        let spread = g.iter().copied().fold(f64::NEG_INFINITY, f64::max) - g.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((top, ties, spread))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualValue {
    /// `max_w [G(w, x) − I*(w)]` minus the same quantity at `x̄`.
    pub value: f64,
    /// Candidate indices within the tie tolerance of the max.
    pub argmax: Vec<usize>,
}

/// The duality formula for `V`, anchored to vanish at `x_bar`.
pub fn v_dual<K: KernelEval + ?Sized>(x: f64, cand: &CandidateSet, kernel: &K, x_bar: f64, tie_tol: f64) -> Result<DualValue> {
    let (v, argmax, _) = cand.max_and_ties(kernel, x, tie_tol)?;
    let (v0, _, _) = cand.max_and_ties(kernel, x_bar, tie_tol)?;
    Ok(DualValue { value: v - v0, argmax })
}

/// Optimal words on a grid of `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionFunction {
    pub xs: Vec<f64>,
    /// `V` anchored at `x_bar`.
    pub values: Vec<f64>,
    pub argmax: Vec<Vec<usize>>,
    pub u_plus: Vec<usize>,
    pub u_minus: Vec<usize>,
    /// `max_w G(w, x) − min_w G(w, x)` over the candidates.
    pub spread: Vec<f64>,
    #[serde(serialize_with = "crate::io::ser_display_vec")]
    pub words: Vec<Epp>,
    pub x_bar: f64,
    pub tie_tol: f64,
}

impl SelectionFunction {
    pub fn word(&self, i: usize) -> &Epp {
        &self.words[i]
    }
}

pub fn optimal_selection<K: KernelEval + ?Sized>(
    xs: &[f64],
    cand: &CandidateSet,
    kernel: &K,
    x_bar: f64,
    tie_tol: f64,
) -> Result<SelectionFunction> {
    let (v0, _, _) = cand.max_and_ties(kernel, x_bar, tie_tol)?;
    let rows = xs
        .par_iter()
        .map(|&x| cand.max_and_ties(kernel, x, tie_tol))
        .collect::<Result<Vec<_>>>()?;
    let mut sel = SelectionFunction {
        xs: xs.to_vec(),
        values: Vec::with_capacity(xs.len()),
        argmax: Vec::with_capacity(xs.len()),
        u_plus: Vec::with_capacity(xs.len()),
        u_minus: Vec::with_capacity(xs.len()),
        spread: Vec::with_capacity(xs.len()),
        words: cand.words(),
        x_bar,
        tie_tol,
    };
    for (v, ties, spread) in rows {
        sel.values.push(v - v0);
        sel.u_plus.push(*ties.last().expect("argmax is non-empty"));
        sel.u_minus.push(ties[0]);
        sel.argmax.push(ties);
        sel.spread.push(spread);
    }
    Ok(sel)
}

/// `n + 1` equally spaced points of `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanOptions {
    /// Scan grid has `grid_n + 1` points.
    pub grid_n: usize,
    pub refine_tol: f64,
    pub tie_tol: f64,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            grid_n: 256,
            refine_tol: DEFAULT_REFINE_TOL,
            tie_tol: DEFAULT_TIE_TOL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentCertificate {
    pub lo: f64,
    pub hi: f64,
    pub word: String,
    pub probes: usize,
    /// Probes that selected `word`.
    pub agree: usize,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakpointReport {
    /// Interior points where the selected word changes, increasing.
    pub breakpoints: Vec<f64>,
    /// One word per segment, `"head|cycle"`.
    pub segment_words: Vec<String>,
    pub certificates: Vec<SegmentCertificate>,
    /// Segment words non-increasing in lexicographic order.
    pub monotone: bool,
    /// Every segment's probes agree.
    pub certified: bool,
    pub tie_tol: f64,
    pub refine_tol: f64,
    pub grid_n: usize,
}

/// Scans for changes of `u⁺`, bisects each to width `refine_tol`, then
/// probes every segment at random points.
pub fn scan_breakpoints<K: KernelEval + ?Sized>(cand: &CandidateSet, kernel: &K, opts: ScanOptions) -> Result<BreakpointReport> {
    let pick = |x: f64| -> Result<usize> {
        let (_, ties, _) = cand.max_and_ties(kernel, x, opts.tie_tol)?;
        Ok(*ties.last().expect("argmax is non-empty"))
    };
    let xs = uniform_grid(opts.grid_n);
    let sel = xs.par_iter().map(|&x| pick(x)).collect::<Result<Vec<_>>>()?;

    // runs of equal selection; each change is bracketed by adjacent grid points
    let mut runs = vec![sel[0]];
    let mut brackets = Vec::new();
    for i in 1..sel.len() {
        if sel[i] != sel[i - 1] {
            runs.push(sel[i]);
            brackets.push((xs[i - 1], xs[i], sel[i - 1]));
        }
    }
    if brackets.len() + 1 > cand.len() {
        return Err(Error::BreakpointInconsistency {
            found: brackets.len(),
            candidates: cand.len(),
        });
    }
    let breakpoints = brackets
        .par_iter()
        .map(|&(mut lo, mut hi, left)| {
            while hi - lo > opts.refine_tol {
                let mid = 0.5 * (lo + hi);
                if pick(mid)? == left {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut edges = vec![0.0];
    edges.extend_from_slice(&breakpoints);
    edges.push(1.0);
    let certificates = (0..runs.len())
        .into_par_iter()
        .map(|j| {
            let (lo, hi) = (edges[j], edges[j + 1]);
            let margin = opts.refine_tol.min(0.25 * (hi - lo));
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(j as u64));
            let mut agree = 0;
            for _ in 0..CERTIFICATE_PROBES {
                let x = rng.gen_range(lo + margin..=hi - margin);
                if pick(x)? == runs[j] {
                    agree += 1;
                }
            }
            Ok(SegmentCertificate {
                lo,
                hi,
                word: cand.candidates[runs[j]].word.to_string(),
                probes: CERTIFICATE_PROBES,
                agree,
                certified: agree == CERTIFICATE_PROBES,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BreakpointReport {
        breakpoints,
        segment_words: runs.iter().map(|&i| cand.candidates[i].word.to_string()).collect(),
        monotone: runs.windows(2).all(|w| w[1] <= w[0]),
        certified: certificates.iter().all(|c| c.certified),
        certificates,
        tie_tol: opts.tie_tol,
        refine_tol: opts.refine_tol,
        grid_n: opts.grid_n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwistStatus {
    Strict,
    /// Every margin is zero or positive, some are zero.
    NonStrict,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwistViolation {
    pub a: String,
    pub a2: String,
    pub b: f64,
    pub b2: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwistReport {
    pub ok: bool,
    pub status: TwistStatus,
    pub min_margin: f64,
    pub checked: usize,
    pub violation_count: usize,
    /// The first few violations, smallest margin first.
    pub violations: Vec<TwistViolation>,
    pub samples: usize,
}

/// Samples the margin `G(a,b′) + G(a′,b) − G(a,b) − G(a′,b′)` over word pairs
/// `a < a′` and `samples` equally spaced `b < b′`; the twist condition asks
/// for every margin to be positive.
pub fn twist_check<K: KernelEval + ?Sized>(kernel: &K, words: &[Epp], samples: usize) -> Result<TwistReport> {
    let mut words = words.to_vec();
    words.sort_by(lex_order);
    words.dedup();
    let xs = uniform_grid(samples.max(2) - 1);
    let g = words
        .par_iter()
        .map(|w| xs.iter().map(|&x| kernel.eval(w, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut all = Vec::new();
    let mut checked = 0;
    let mut min_margin = f64::INFINITY;
    for a in 0..words.len() {
        for a2 in a + 1..words.len() {
            for b in 0..xs.len() {
                for b2 in b + 1..xs.len() {
                    let margin = g[a][b2] + g[a2][b] - g[a][b] - g[a2][b2];
                    checked += 1;
                    min_margin = min_margin.min(margin);
                    if margin <= MARGIN_TOL {
                        all.push(TwistViolation {
                            a: words[a].to_string(),
                            a2: words[a2].to_string(),
                            b: xs[b],
                            b2: xs[b2],
                            margin,
                        });
                    }
                }
            }
        }
    }
    let status = if all.is_empty() {
        TwistStatus::Strict
    } else if min_margin >= -MARGIN_TOL {
        TwistStatus::NonStrict
    } else {
        TwistStatus::Violated
    };
    let violation_count = all.len();
    all.sort_by(|x, y| x.margin.total_cmp(&y.margin));
    all.truncate(MAX_LISTED);
    Ok(TwistReport {
        ok: status == TwistStatus::Strict,
        status,
        min_margin,
        checked,
        violation_count,
        violations: all,
        samples: xs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    /// `"u_plus"` or `"u_minus"`.
    pub which: &'static str,
    pub x: f64,
    pub x_next: f64,
    pub word: String,
    pub word_next: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub ok: bool,
    pub first_violation: Option<Inversion>,
}

/// `u⁺` and `u⁻` must be weakly decreasing along the grid.
pub fn monotonicity_check(sel: &SelectionFunction) -> MonotonicityReport {
    for i in 1..sel.xs.len() {
        for (which, u) in [("u_plus", &sel.u_plus), ("u_minus", &sel.u_minus)] {
            if u[i] > u[i - 1] {
                return MonotonicityReport {
                    ok: false,
                    first_violation: Some(Inversion {
                        which,
                        x: sel.xs[i - 1],
                        x_next: sel.xs[i],
                        word: sel.words[u[i - 1]].to_string(),
                        word_next: sel.words[u[i]].to_string(),
                    }),
                };
            }
        }
    }
    MonotonicityReport {
        ok: true,
        first_violation: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaDistance {
    pub beta: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub x_bar: f64,
    pub sup_dual_lax: f64,
    pub per_beta: Vec<BetaDistance>,
    /// `sup |V_β − V_lax|` non-increasing in `β`.
    pub beta_trend_decreasing: bool,
    pub tol: f64,
    pub pass: bool,
}

/// Compares the three routes to `V` on the selection grid, each anchored to
/// vanish at the selection's `x̄`. `v_beta` holds `(β, (1/β) log v_β)`.
pub fn cross_validate(sel: &SelectionFunction, v_lax: &SubactionGrid, v_beta: &[(f64, GridFunction)], tol: f64) -> CrossValidation {
    let xb = sel.x_bar;
    let lax0 = v_lax.eval(xb);
    let lax: Vec<f64> = sel.xs.iter().map(|&x| v_lax.eval(x) - lax0).collect();
    let sup_dual_lax = sel
        .values
        .iter()
        .zip(&lax)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let per_beta: Vec<BetaDistance> = v_beta
        .iter()
        .map(|(beta, f)| {
            let f0 = f.eval(xb);
            let sup = sel
                .xs
                .iter()
                .zip(&lax)
                .fold(0.0f64, |m, (&x, l)| m.max((f.eval(x) - f0 - l).abs()));
            BetaDistance { beta: *beta, sup }
        })
        .collect();
    let beta_trend_decreasing = per_beta.windows(2).all(|w| w[1].sup <= w[0].sup + 1e-12);
    CrossValidation {
        x_bar: xb,
        sup_dual_lax,
        pass: sup_dual_lax <= tol && beta_trend_decreasing,
        per_beta,
        beta_trend_decreasing,
        tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessStats {
    pub singleton_fraction: f64,
    pub max_tie_cluster_width: f64,
    pub clusters: usize,
    /// Every tie cluster sits within `refine_tol` plus one grid step of a
    /// breakpoint.
    pub ties_localized: bool,
}

pub fn generic_uniqueness_probe(sel: &SelectionFunction, breakpoints: &[f64], refine_tol: f64) -> UniquenessStats {
    let n = sel.xs.len();
    let step = sel.xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let singles = sel.argmax.iter().filter(|a| a.len() == 1).count();
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for i in 0..n {
        if sel.argmax[i].len() > 1 {
            open = Some(match open {
                Some((a, _)) => (a, sel.xs[i]),
                None => (sel.xs[i], sel.xs[i]),
            });
        } else if let Some(c) = open.take() {
            clusters.push(c);
        }
    }
    clusters.extend(open);
    let near = |(a, b): (f64, f64)| {
        breakpoints
            .iter()
            .any(|&z| z >= a - refine_tol - step && z <= b + refine_tol + step)
    };
    UniquenessStats {
        singleton_fraction: if n == 0 { 0.0 } else { singles as f64 / n as f64 },
        max_tie_cluster_width: clusters.iter().map(|c| c.1 - c.0).fold(0.0, f64::max),
        clusters: clusters.len(),
        ties_localized: clusters.iter().all(|&c| near(c)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureReport {
    /// Sampled `max_x [max_w G(w, x) − min_w G(w, x)]`.
    pub k_max: f64,
    /// Smallest `I*` among words needing exactly `N̄ + 1` shifts.
    pub next_layer_min_i_star: f64,
    /// No deeper word can be selected (relative to the sampled bound):
    /// `I*` only grows along preimages since `R* ≥ 0`.
    pub certified: bool,
}

pub fn closure_diagnostic(sel: &SelectionFunction, next_layer_min_i_star: f64) -> ClosureReport {
    let k_max = sel.spread.iter().copied().fold(0.0, f64::max);
    ClosureReport {
        k_max,
        next_layer_min_i_star,
        certified: next_layer_min_i_star > k_max,
    }
}

#[cfg(test)]
mod tests;
