//! The whole pipeline on one map and potential.

use serde::{Deserialize, Serialize};

use super::*;
use crate::dynamics::Orientation;
use crate::ergopt::{calibrated_subaction, dual_calibrated_subaction, i_star, max_ergodic_average, r_star_good, MaxAverage, RStarReport, SubactionOptions};
use crate::kernel::{dual_max_average, DualMax, DualMode};

/// Which kernel enters the duality formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelRoute {
    /// `H_∞` through the `β` schedule.
    Schedule,
    /// Series kernel minus the tabulated dual subaction.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOptions {
    pub schedule: Vec<f64>,
    pub kernel_tol: f64,
    pub series_depth: usize,
    pub max_period: usize,
    pub table_depth: usize,
    pub table_tol: f64,
    pub table_max_iter: usize,
    pub n_bar: usize,
    pub r_star_delta: f64,
    pub twist_samples: usize,
    pub scan: ScanOptions,
    pub subaction: SubactionOptions,
    /// Allowed `sup |V_dual − V_lax|`.
    pub cross_tol: f64,
    pub route: KernelRoute,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            schedule: vec![8.0, 16.0, 32.0, 64.0],
            kernel_tol: 1e-10,
            series_depth: 40,
            max_period: 8,
            table_depth: 12,
            table_tol: 1e-12,
            table_max_iter: 20_000,
            n_bar: 2,
            r_star_delta: 1e-6,
            twist_samples: 16,
            scan: ScanOptions::default(),
            subaction: SubactionOptions::default(),
            cross_tol: 1e-4,
            route: KernelRoute::Schedule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSummary {
    pub depth: usize,
    pub m_star: f64,
    pub residual: f64,
    pub drift: f64,
    pub iterations: usize,
    pub approx_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorValue {
    pub word: String,
    /// `H_∞(w, x̄)`.
    pub value: f64,
    pub tail_bound: f64,
    pub converging: bool,
}

/// At a point `p` of the maximizing orbit the max should be attained by a
/// word of the dual maximizing cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportCheck {
    pub x: f64,
    /// `V(p) − max_{m ∈ M} G(m, p)`, which should vanish.
    pub gap: f64,
    pub support_selected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PiecewiseStudy {
    pub max_average: MaxAverage,
    pub x_bar: f64,
    pub route: KernelRoute,
    pub dual: DualMax,
    pub table: TableSummary,
    pub r_star: Option<RStarReport>,
    pub candidates: CandidateSet,
    pub anchor_values: Vec<AnchorValue>,
    pub twist: TwistReport,
    pub breakpoints: BreakpointReport,
    pub monotonicity: MonotonicityReport,
    pub uniqueness: UniquenessStats,
    pub closure: ClosureReport,
    pub cross: CrossValidation,
    pub support: Vec<SupportCheck>,
    pub warnings: Vec<String>,
    /// Certified failures; empty on a pass.
    pub failures: Vec<String>,
    #[serde(skip)]
    pub selection: SelectionFunction,
    #[serde(skip)]
    pub v_lax: crate::ergopt::SubactionGrid,
}

impl PiecewiseStudy {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs candidates, selection, breakpoints and all certificates.
///
/// Refuses orientation-reversing maps.
pub fn piecewise_study(ctx: &KernelContext, opts: &StudyOptions) -> Result<PiecewiseStudy> {
    let map = ctx.map();
    if map.orientation() == Orientation::Reversing {
        return Err(Error::OrientationReversing);
    }
    let pot = ctx.potential();
    let d = map.degree();
    let x_bar = ctx.x_bar();
    let mut warnings = Vec::new();
    let mut failures = Vec::new();

    let max_average = max_ergodic_average(map, pot, opts.max_period)?;
    if max_average.ties > 1 {
        warnings.push(format!("{} periodic orbits tie for the maximum", max_average.ties));
    }

    let a_star = |w: &Epp| ctx.dual_potential(w, 1.0, DualMode::Series, opts.series_depth);
    let dual = dual_max_average(d, opts.max_period, a_star)?;
    let table = dual_calibrated_subaction(d, a_star, dual.m_star, &dual.cycle, opts.table_depth, opts.table_tol, opts.table_max_iter)?;
    let r_star = match r_star_good(&table, a_star, opts.r_star_delta, opts.max_period) {
        Ok(r) => {
            if !r.ok {
                failures.push(format!("R* is not bounded away from 0 off the cycle (min {})", r.min_r));
            }
            Some(r)
        }
        Err(e @ (Error::NonUniqueMaximizer(_) | Error::InvalidArgument(_))) => {
            failures.push(format!("R* check refused: {e}"));
            None
        }
        Err(e) => return Err(e),
    };

    let i_of = |w: &Epp| -> Result<f64> {
        let dev = i_star(w, &table, a_star)?;
        if dev.infinite {
            return Err(Error::InvalidArgument(format!("{w} never reaches the cycle")));
        }
        Ok(dev.value)
    };
    let candidates = CandidateSet::new(&dual.cycle, opts.n_bar, i_of)?;
    let words = candidates.words();
    let next_layer: Vec<Epp> = candidate_words(&dual.cycle, opts.n_bar + 1)?
        .into_iter()
        .filter(|w| !words.contains(w))
        .collect();
    let next_min = next_layer
        .par_iter()
        .map(i_of)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    let schedule_kernel;
    let table_kernel;
    let mut anchor_values = Vec::new();
    let kernel: &dyn KernelEval = match opts.route {
        KernelRoute::Schedule => {
            schedule_kernel = ScheduleKernel::new(ctx, &opts.schedule, opts.kernel_tol, opts.series_depth)?;
            schedule_kernel.prepare(&words)?;
            for w in &words {
                let h = schedule_kernel.offset(w)?;
                anchor_values.push(AnchorValue {
                    word: w.to_string(),
                    value: h.value.value,
                    tail_bound: h.value.tail_bound,
                    converging: h.converging,
                });
            }
            &schedule_kernel
        }
        KernelRoute::Table => {
            table_kernel = TableKernel {
                ctx,
                table: &table,
                depth: opts.series_depth,
            };
            &table_kernel
        }
    };

    let twist = twist_check(kernel, &words, opts.twist_samples)?;
    let xs = uniform_grid(opts.scan.grid_n);
    let selection = optimal_selection(&xs, &candidates, kernel, x_bar, opts.scan.tie_tol)?;
    let breakpoints = scan_breakpoints(&candidates, kernel, opts.scan)?;
    let monotonicity = monotonicity_check(&selection);
    let uniqueness = generic_uniqueness_probe(&selection, &breakpoints.breakpoints, opts.scan.refine_tol);
    let closure = closure_diagnostic(&selection, next_min);

    let v_lax = calibrated_subaction(map, pot, ctx.transfer().grid().clone(), max_average.m, x_bar, opts.subaction)?;
    let v_beta = opts
        .schedule
        .iter()
        .map(|&b| Ok((b, ctx.transfer().scaled_log_eigenfunction(&*ctx.eigen(b)?))))
        .collect::<Result<Vec<_>>>()?;
    let cross = cross_validate(&selection, &v_lax, &v_beta, opts.cross_tol);

    let cycle_idx: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates.candidates[i].word.is_periodic())
        .collect();
    let support = max_average
        .orbit
        .points
        .iter()
        .map(|&p| {
            let s = candidates.scores(kernel, p)?;
            let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let best = cycle_idx.iter().map(|&i| s[i]).fold(f64::NEG_INFINITY, f64::max);
            Ok(SupportCheck {
                x: p,
                gap: top - best,
                support_selected: top - best <= opts.scan.tie_tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if !cross.pass {
        failures.push(format!(
            "routes disagree: sup |V_dual - V_lax| = {} (tol {}), beta trend decreasing = {}",
            cross.sup_dual_lax, cross.tol, cross.beta_trend_decreasing
        ));
    }
    if !breakpoints.certified {
        failures.push("a segment's probes selected a different word".into());
    }
    if !monotonicity.ok {
        if twist.ok {
            failures.push("selection is not monotone although the twist margins are strict".into());
        } else {
            warnings.push("selection is not monotone (twist not strict, so nothing is claimed)".into());
        }
    }
    if !twist.ok {
        warnings.push(format!("twist margins are not strict ({:?}); monotonicity is empirical only", twist.status));
    }
    if !closure.certified {
        warnings.push(format!(
            "N_bar = {} not certified closed: next-layer I* {} <= kernel spread {}",
            opts.n_bar, closure.next_layer_min_i_star, closure.k_max
        ));
    }
    if support.iter().any(|s| !s.support_selected) {
        warnings.push("a point of the maximizing orbit is not served by a cycle word".into());
    }

    Ok(PiecewiseStudy {
        max_average,
        x_bar,
        route: opts.route,
        dual,
        table: TableSummary {
            depth: table.depth,
            m_star: table.m_star,
            residual: table.residual,
            drift: table.drift,
            iterations: table.iterations,
            approx_bound: table.approx_bound,
        },
        r_star,
        candidates,
        anchor_values,
        twist,
        breakpoints,
        monotonicity,
        uniqueness,
        closure,
        cross,
        support,
        warnings,
        failures,
        selection,
        v_lax,
    })
}
