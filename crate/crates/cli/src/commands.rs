use std::path::{Path, PathBuf};

use ergopt_core::ergopt::{
    aubry_test, calibrated_subaction, deviation_i, dual_calibrated_subaction, holder_budget, holder_quotient, i_star, mane_potential, r_star,
    r_star_good, MaxAverage,
};
use ergopt_core::io::{fmt_f64, write_bytes, Cell, CsvTable};
use ergopt_core::kernel::{dual_max_average, DualMode, KernelContext};
use ergopt_core::piecewise::{piecewise_study, uniform_grid};
use ergopt_core::symbolic::{EventuallyPeriodicPoint as Epp, Word};
use ergopt_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Cli, Command, Outcome, Problem, Status};

/// Deviation sums along forward orbits use this many terms.
const DEVIATION_DEPTH: usize = 20;
/// Calibration audit slack.
const AUDIT_TOL: f64 = 1e-8;
/// Involution residual allowed by `validate`.
const INVOLUTION_TOL: f64 = 1e-8;

/// Collects artifacts and writes them in order at the end.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(format!("json: {e}")))?;
        bytes.push(b'\n');
        self.files.push((self.dir.join(name), bytes));
        Ok(())
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        self.files.push((self.dir.join(name), table.to_bytes()?));
        Ok(())
    }

    fn flush(self) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", self.dir.display())))?;
        let mut out = Vec::new();
        for (path, bytes) in self.files {
            write_bytes(&path, &bytes)?;
            out.push(path);
        }
        Ok(out)
    }
}

fn problem(cli: &Cli) -> Result<Problem> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    Problem::load(path)
}

fn meta(p: &Problem, command: &str, ctx: Option<&KernelContext>) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "map": {
            "inverse_branches": p.map.labels(),
            "lambda": p.map.lambda(),
            "orientation": p.map.orientation(),
        },
        "potential": p.potential.label(),
        "numerics": p.numerics(),
        "anchors": ctx.map(|c| json!({"x_bar": c.x_bar(), "omega_bar": c.omega_bar().to_string()})),
    })
}

fn finish(command: &'static str, art: Artifacts, failures: Vec<String>, message: String) -> Result<Outcome> {
    let outputs = art.flush()?;
    let status = if failures.is_empty() { Status::Pass } else { Status::CertifiedFailure };
    Ok(Outcome {
        command,
        status,
        message: if failures.is_empty() { message } else { failures.join("; ") },
        reasons: failures,
        outputs,
    })
}

pub(crate) fn dispatch(cli: &Cli) -> Result<Outcome> {
    let p = problem(cli)?;
    let art = Artifacts::new(&cli.out);
    match &cli.command {
        Command::Eigen { beta } => eigen(&p, art, *beta),
        Command::Anneal { schedule } => anneal(&p, art, schedule.clone()),
        Command::Subaction => subaction(&p, art),
        Command::Dual => dual(&p, art),
        Command::Kernel { omega, x } => kernel(&p, art, omega, *x),
        Command::Piecewise => piecewise(&p, art),
        Command::Orbits { max_period } => orbits(&p, art, *max_period),
        Command::Mane { x, y } => mane(&p, art, *x, *y),
        Command::Validate => validate(&p, art),
    }
}

fn eigen(p: &Problem, mut art: Artifacts, beta: f64) -> Result<Outcome> {
    let t = p.transfer()?;
    let eig = t.leading_eigen(beta, p.eigen_options())?;
    let mut csv = CsvTable::new(["x", "v", "log_v", "mu_weight", "beta", "grid_n", "eigen_tol"]);
    for ((&x, &lv), &w) in eig.grid().nodes().iter().zip(eig.log_v.values()).zip(&eig.mu) {
        csv.push(vec![x.into(), lv.exp().into(), lv.into(), w.into(), beta.into(), p.numerics().grid_n.into(), p.numerics().eigen_tol.into()]);
    }
    let report = eig.report();
    art.json("eigen.json", &json!({"meta": meta(p, "eigen", None), "eigen": report}))?;
    art.csv("eigen.csv", &csv)?;
    finish("eigen", art, Vec::new(), format!("alpha = {} at beta = {beta}", fmt_f64(report.alpha)))
}

fn anneal(p: &Problem, mut art: Artifacts, schedule: Option<Vec<f64>>) -> Result<Outcome> {
    let schedule = schedule.unwrap_or_else(|| p.numerics().beta_schedule.clone());
    ergopt_core::kernel::check_schedule(&schedule)?;
    let max = p.max_average()?;
    let ctx = p.kernel_context(&max)?;
    let xb = ctx.x_bar();
    let v = calibrated_subaction(&p.map, &p.potential, ctx.transfer().grid().clone(), max.m, xb, p.subaction_options())?;
    let xs = uniform_grid(p.numerics().scan_n);
    let mut csv = CsvTable::new(["beta", "x", "v_beta", "v_lax", "grid_n"]);
    let mut rows = Vec::new();
    for &b in &schedule {
        let eig = ctx.eigen(b)?;
        let f = ctx.transfer().scaled_log_eigenfunction(&eig);
        let f0 = f.eval(xb);
        let (mut raw, mut anchored) = (0.0f64, 0.0f64);
        for &x in &xs {
            let (fx, vx) = (f.eval(x), v.eval(x));
            raw = raw.max((fx - vx).abs());
            anchored = anchored.max((fx - f0 - vx).abs());
            csv.push(vec![b.into(), x.into(), fx.into(), vx.into(), p.numerics().grid_n.into()]);
        }
        rows.push(json!({"beta": b, "log_alpha": eig.log_alpha, "sup": raw, "sup_anchored": anchored}));
    }
    let sups: Vec<f64> = rows.iter().map(|r| r["sup"].as_f64().unwrap_or(f64::NAN)).collect();
    let decreasing = sups.windows(2).all(|w| w[1] < w[0]);
    let failures = if decreasing {
        Vec::new()
    } else {
        vec![format!("sup |(1/beta) log v_beta - V| is not strictly decreasing: {sups:?}")]
    };
    art.json(
        "anneal.json",
        &json!({"meta": meta(p, "anneal", Some(&ctx)), "m": max.m, "schedule": schedule, "per_beta": rows, "strictly_decreasing": decreasing}),
    )?;
    art.csv("anneal.csv", &csv)?;
    let last = sups.last().copied().unwrap_or(f64::NAN);
    finish("anneal", art, failures, format!("final sup distance {}", fmt_f64(last)))
}

fn subaction(p: &Problem, mut art: Artifacts) -> Result<Outcome> {
    let max = p.max_average()?;
    let (xb, _) = p.anchors(&max)?;
    let grid = ergopt_core::transfer::ChebGrid::new(p.numerics().grid_n)?;
    let v = calibrated_subaction(&p.map, &p.potential, grid, max.m, xb, p.subaction_options())?;
    let audit = v.calibration_audit(&p.map, &p.potential);
    let mut csv = CsvTable::new(["x", "V", "R", "I_partial", "I_divergent", "m", "tol", "grid_n", "depth"]);
    for (&x, &vx) in v.nodes().iter().zip(v.values()) {
        let r = ergopt_core::ergopt::error_r(&v, &p.map, &p.potential, x)?;
        let dev = deviation_i(&v, &p.map, &p.potential, x, DEVIATION_DEPTH)?;
        csv.push(vec![
            x.into(),
            vx.into(),
            r.into(),
            dev.value.into(),
            dev.infinite.into(),
            max.m.into(),
            v.tol.into(),
            p.numerics().grid_n.into(),
            DEVIATION_DEPTH.into(),
        ]);
    }
    let quotient = holder_quotient(&v.v, 1.0);
    let budget = holder_budget(p.map.lambda(), 1.0, p.potential.lipschitz(4096));
    let mut failures = Vec::new();
    if audit.min_r < -AUDIT_TOL || audit.max_branch_min > AUDIT_TOL {
        failures.push(format!("calibration audit failed: min R {}, max branch min {}", audit.min_r, audit.max_branch_min));
    }
    if quotient > 1.05 * budget {
        failures.push(format!("Lipschitz quotient {quotient} exceeds budget {budget}"));
    }
    art.json(
        "subaction.json",
        &json!({
            "meta": meta(p, "subaction", None),
            "x_bar": xb,
            "max_average": max,
            "subaction": v,
            "audit": audit,
            "holder": {"alpha": 1.0, "quotient": quotient, "budget": budget},
        }),
    )?;
    art.csv("subaction.csv", &csv)?;
    finish("subaction", art, failures, format!("m = {} on orbit {}", fmt_f64(max.m), max.orbit.itinerary))
}

fn dual(p: &Problem, mut art: Artifacts) -> Result<Outcome> {
    let n = p.numerics();
    let max = p.max_average()?;
    let ctx = p.kernel_context(&max)?;
    let d = p.map.degree();
    let a_star = |w: &Epp| ctx.dual_potential(w, 1.0, DualMode::Series, n.series_depth);
    let dm = dual_max_average(d, n.max_period, a_star)?;
    let table = dual_calibrated_subaction(d, a_star, dm.m_star, &dm.cycle, n.table_depth, n.table_tol, n.table_max_iter)?;
    let mut failures = Vec::new();
    let check = match r_star_good(&table, a_star, n.r_star_delta, n.max_period) {
        Ok(r) => {
            if !r.ok {
                let w: Vec<String> = r.witnesses.iter().map(|(w, v)| format!("{w} (R* = {v})")).collect();
                failures.push(format!("R* not bounded away from 0 off the cycle: {}", w.join(", ")));
            }
            serde_json::to_value(&r).map_err(|e| Error::Config(e.to_string()))?
        }
        Err(e @ (Error::NonUniqueMaximizer(_) | Error::InvalidArgument(_))) => {
            failures.push(format!("R* check refused: {e}"));
            json!({"refused": e.to_string()})
        }
        Err(e) => return Err(e),
    };
    let mut csv = CsvTable::new(["cylinder", "word", "V_star", "R_star", "I_star", "depth", "series_depth"]);
    let words: Vec<Word> = table.words().collect();
    for (u, &vs) in words.iter().zip(&table.values) {
        let rep = Epp::from_words(u, &dm.cycle)?;
        let r = r_star(&rep, &table, a_star)?;
        let i = i_star(&rep, &table, a_star)?;
        csv.push(vec![
            u.to_string().into(),
            rep.to_string().into(),
            vs.into(),
            r.into(),
            i.value.into(),
            n.table_depth.into(),
            n.series_depth.into(),
        ]);
    }
    art.json(
        "dual.json",
        &json!({
            "meta": meta(p, "dual", Some(&ctx)),
            "m": max.m,
            "dual_max": dm,
            "m_gap": (max.m - dm.m_star).abs(),
            "table": {
                "depth": table.depth,
                "anchor": table.anchor,
                "residual": table.residual,
                "drift": table.drift,
                "iterations": table.iterations,
                "approx_bound": table.approx_bound,
            },
            "r_star": check,
        }),
    )?;
    art.csv("dual.csv", &csv)?;
    finish("dual", art, failures, format!("m* = {} on cycle {}", fmt_f64(dm.m_star), dm.cycle))
}

fn kernel(p: &Problem, mut art: Artifacts, omega: &str, x: f64) -> Result<Outcome> {
    let n = p.numerics();
    let max = p.max_average()?;
    let ctx = p.kernel_context(&max)?;
    let w = Epp::parse(omega, p.map.degree())?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("x = {x} outside [0,1]")));
    }
    let h = ctx.h_infinity(&w, x, &n.beta_schedule, n.kernel_tol)?;
    let mut csv = CsvTable::new(["beta", "H_beta", "depth_used", "tail_bound", "kernel_tol"]);
    for (&b, c) in n.beta_schedule.iter().zip(&h.per_beta) {
        csv.push(vec![b.into(), c.value.into(), c.depth_used.into(), c.tail_bound.into(), n.kernel_tol.into()]);
    }
    art.json(
        "kernel.json",
        &json!({
            "meta": meta(p, "kernel", Some(&ctx)),
            "omega": w.to_string(),
            "x": x,
            "h_infinity": h,
            "series_kernel": ctx.series_kernel(&w, x, n.series_depth),
        }),
    )?;
    art.csv("kernel.csv", &csv)?;
    let note = if h.converging { "" } else { " (defects not monotone)" };
    finish("kernel", art, Vec::new(), format!("H_inf({w}, {x}) = {}{note}", fmt_f64(h.value.value)))
}

fn piecewise(p: &Problem, mut art: Artifacts) -> Result<Outcome> {
    let max = p.max_average()?;
    let ctx = p.kernel_context(&max)?;
    let opts = p.study_options();
    let s = piecewise_study(&ctx, &opts)?;
    let sel = &s.selection;
    let lax0 = s.v_lax.eval(sel.x_bar);
    let mut csv = CsvTable::new(["x", "V_dual", "V_lax", "selected", "ties", "tie_tol", "refine_tol"]);
    for i in 0..sel.xs.len() {
        let x = sel.xs[i];
        csv.push(vec![
            x.into(),
            sel.values[i].into(),
            (s.v_lax.eval(x) - lax0).into(),
            sel.word(sel.u_plus[i]).to_string().into(),
            sel.argmax[i].len().into(),
            opts.scan.tie_tol.into(),
            opts.scan.refine_tol.into(),
        ]);
    }
    art.json("piecewise.json", &json!({"meta": meta(p, "piecewise", Some(&ctx)), "study": s}))?;
    art.csv("piecewise.csv", &csv)?;
    let msg = format!(
        "{} segment(s) {:?}, sup |V_dual - V_lax| = {}",
        s.breakpoints.segment_words.len(),
        s.breakpoints.segment_words,
        fmt_f64(s.cross.sup_dual_lax)
    );
    finish("piecewise", art, s.failures.clone(), msg)
}

fn orbits(p: &Problem, mut art: Artifacts, max_period: usize) -> Result<Outcome> {
    if max_period == 0 {
        return Err(Error::InvalidArgument("max-period must be at least 1".into()));
    }
    let pot = p.potential.clone();
    let list = p.map.enumerate_periodic_orbits(max_period, &|x| pot.a(x))?;
    let mut csv = CsvTable::new(["itinerary", "period", "average", "points"]);
    for o in &list {
        let pts: Vec<String> = o.points.iter().map(|&v| fmt_f64(v)).collect();
        csv.push(vec![o.itinerary.to_string().into(), o.period().into(), o.birkhoff_average.into(), Cell::from(pts.join(";"))]);
    }
    let best: MaxAverage = ergopt_core::ergopt::max_ergodic_average(&p.map, &p.potential, max_period)?;
    art.json("orbits.json", &json!({"meta": meta(p, "orbits", None), "count": list.len(), "best": best}))?;
    art.csv("orbits.csv", &csv)?;
    finish("orbits", art, Vec::new(), format!("{} orbits, best {} with average {}", list.len(), best.orbit.itinerary, fmt_f64(best.m)))
}

fn mane(p: &Problem, mut art: Artifacts, x: f64, y: f64) -> Result<Outcome> {
    for v in [x, y] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{v} outside [0,1]")));
        }
    }
    let max = p.max_average()?;
    let search = p.chain_search();
    let s = mane_potential(&p.map, &p.potential, max.m, x, y, search);
    let aubry = aubry_test(&p.map, &p.potential, max.m, x, search.eps, search);
    art.json(
        "mane.json",
        &json!({"meta": meta(p, "mane", None), "m": max.m, "x": x, "y": y, "search": search, "s_xy": s, "aubry_x": aubry}),
    )?;
    let note = if s.exhausted { " (budget exhausted, lower bound)" } else { "" };
    finish("mane", art, Vec::new(), format!("S({x}, {y}) = {}{note}", fmt_f64(s.value)))
}

fn validate(p: &Problem, mut art: Artifacts) -> Result<Outcome> {
    let n = p.numerics();
    let audit = p.map.contraction_audit(4096);
    let (a_min, a_max) = p.potential.range(crate::config::VALIDATION_SAMPLES);
    let max = p.max_average()?;
    let ctx = p.kernel_context(&max)?;
    let eig = ctx.eigen(1.0)?;
    let d = p.map.degree() as u8;
    let mut points = Vec::new();
    for s in 0..d {
        points.push(Epp::new(vec![], vec![s], d as usize)?);
    }
    points.push(Epp::new(vec![0], vec![d - 1], d as usize)?);
    points.push(Epp::new(vec![d - 1, 0], vec![0, 1], d as usize)?);
    let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut worst: f64 = 0.0;
    let mut csv = CsvTable::new(["omega", "x", "residual", "beta", "depth"]);
    for w in &points {
        for &x in &xs {
            let r = ctx.involution_residual(w, x, 1.0, n.series_depth)?;
            worst = worst.max(r);
            csv.push(vec![w.to_string().into(), x.into(), r.into(), 1.0.into(), n.series_depth.into()]);
        }
    }
    let mut failures = Vec::new();
    if !audit.ok {
        failures.push(format!("declared lambda {} below sampled contraction {}", audit.lambda_declared, audit.lambda_empirical));
    }
    if !(worst <= INVOLUTION_TOL) {
        failures.push(format!("involution residual {worst} above {INVOLUTION_TOL}"));
    }
    art.json(
        "validate.json",
        &json!({
            "meta": meta(p, "validate", Some(&ctx)),
            "contraction": audit,
            "potential": {"positive": true, "samples": crate::config::VALIDATION_SAMPLES, "min_A": a_min, "max_A": a_max},
            "eigen": eig.report(),
            "involution": {"max_residual": worst, "tol": INVOLUTION_TOL},
        }),
    )?;
    art.csv("validate.csv", &csv)?;
    finish("validate", art, failures, format!("involution residual {}", fmt_f64(worst)))
}
