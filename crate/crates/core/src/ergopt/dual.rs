//! Subactions, errors and deviations on the shift side.
//!
//! `V*` is a table over the `d^k` cylinders of depth `k`. A cylinder `u` is
//! represented by `u ⧺ c^∞` with `c` the maximizing cycle.

use serde::Serialize;

use super::{max_plus_fixed_point, DeviationValue, DRIFT_TOL};
use crate::error::{Error, Result};
use crate::kernel::dual_max_average;
use crate::par::*;
use crate::symbolic::{EventuallyPeriodicPoint as Epp, Word};

/// Averages within this of the maximum count as competing maximizers.
pub const UNIQUENESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSubactionTable {
    pub depth: usize,
    pub d: usize,
    /// One value per word of length `depth`, in word-index order.
    pub values: Vec<f64>,
    pub m_star: f64,
    #[serde(serialize_with = "crate::io::ser_display")]
    pub cycle: Word,
    /// Index of the cylinder that holds the anchor `c^∞` (value 0).
    pub anchor: usize,
    pub residual: f64,
    pub drift: f64,
    pub iterations: usize,
    /// Largest change of `A*` across a cylinder, doubled: bounds the effect
    /// of the cylinder approximation on `V*`.
    pub approx_bound: f64,
}

impl DualSubactionTable {
    /// A table with every entry `c`.
    pub fn constant(d: usize, depth: usize, c: f64, m_star: f64, cycle: Word) -> Result<Self> {
        let anchor = Epp::periodic(&cycle)?.prefix(depth).index();
        Ok(Self {
            depth,
            d,
            values: vec![c; d.pow(depth as u32)],
            m_star,
            cycle,
            anchor,
            residual: 0.0,
            drift: 0.0,
            iterations: 0,
            approx_bound: 0.0,
        })
    }

    pub fn value(&self, w: &Epp) -> f64 {
        self.values[w.prefix(self.depth).index()]
    }

    pub fn words(&self) -> impl Iterator<Item = Word> + '_ {
        (0..self.values.len()).map(|i| Word::from_index(i, self.depth, self.d))
    }
}

/// Max-plus iteration `V*(w̄) ← max_s [V*(s w̄) + A*(s w̄) − m*]` on depth-`k`
/// cylinders, anchored to 0 on the cylinder of `c^∞`.
pub fn dual_calibrated_subaction<F>(
    d: usize,
    a_star: F,
    m_star: f64,
    cycle: &Word,
    depth: usize,
    tol: f64,
    max_iter: usize,
) -> Result<DualSubactionTable>
where
    F: Fn(&Epp) -> Result<f64> + Sync,
{
    if depth < 1 {
        return Err(Error::InvalidArgument("table depth must be at least 1".into()));
    }
    if cycle.alphabet() != d || cycle.is_empty() {
        return Err(Error::InvalidArgument(format!("bad cycle {cycle} for alphabet {d}")));
    }
    let n = d.pow(depth as u32);
    let reps: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = Word::from_index(i, depth, d);
            let main = a_star(&Epp::from_words(&u, cycle)?)?;
            let mut var: f64 = 0.0;
            for s in 0..d as u8 {
                let alt = Epp::from_words(&u, &Word::new(vec![s], d)?)?;
                var = var.max((a_star(&alt)? - main).abs());
            }
            Ok((main, var))
        })
        .collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let approx_bound = 2.0 * reps.iter().map(|r| r.1).fold(0.0, f64::max);
    let anchor = Epp::periodic(cycle)?.prefix(depth).index();
    let stride = n / d;
    let op = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                // the preimage s ⧺ w̄ truncated: drop the last symbol of w̄, put s in front
                let tail = i / d;
                (0..d)
                    .map(|s| {
                        let j = s * stride + tail;
                        v[j] + a[j] - m_star
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    // cylinder representatives perturb the table's own critical value by up to approx_bound
    let fp = max_plus_fixed_point(vec![0.0; n], op, |v| v[anchor], tol, max_iter, DRIFT_TOL + approx_bound)?;
    Ok(DualSubactionTable {
        depth,
        d,
        values: fp.values,
        m_star,
        cycle: cycle.clone(),
        anchor,
        residual: fp.residual,
        drift: fp.drift,
        iterations: fp.iterations,
        approx_bound,
    })
}

/// `R*(w) = V*(σ w) − V*(w) − A*(w) + m*`.
pub fn r_star<F>(w: &Epp, table: &DualSubactionTable, a_star: F) -> Result<f64>
where
    F: Fn(&Epp) -> Result<f64>,
{
    Ok(table.value(&w.shift()) - table.value(w) - a_star(w)? + table.m_star)
}

/// `I*(w) = Σ_{n<k(w)} R*(σⁿ w)` where `σ^{k(w)} w` first lands on the
/// maximizing cycle; flagged infinite when it never does.
pub fn i_star<F>(w: &Epp, table: &DualSubactionTable, a_star: F) -> Result<DeviationValue>
where
    F: Fn(&Epp) -> Result<f64>,
{
    if !w.tail_matches(&table.cycle) {
        return Ok(DeviationValue {
            value: f64::INFINITY,
            infinite: true,
            terms: Vec::new(),
        });
    }
    // canonical heads are minimal, so the orbit reaches the cycle exactly after the head
    let k = w.preperiod();
    let mut terms = Vec::with_capacity(k);
    let mut cur = w.clone();
    for _ in 0..k {
        terms.push(r_star(&cur, table, &a_star)?);
        cur = cur.shift();
    }
    Ok(DeviationValue {
        value: terms.iter().sum(),
        infinite: false,
        terms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RStarReport {
    pub ok: bool,
    pub min_r: f64,
    pub delta: f64,
    /// Members of `P` with `R* ≤ δ`, smallest first.
    #[serde(serialize_with = "ser_pairs")]
    pub witnesses: Vec<(Epp, f64)>,
    /// `P` with the value of `R*` at each point.
    #[serde(serialize_with = "ser_pairs")]
    pub p_set: Vec<(Epp, f64)>,
}

fn ser_pairs<S: serde::Serializer>(v: &[(Epp, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|(w, r)| (w.to_string(), *r)))
}

/// Checks `R*(w) > δ` on `P = σ⁻¹(M) \ M`.
///
/// Refuses when another periodic cycle of length `≤ uniqueness_period`
/// ties with the maximizing one (the assumption needs a unique maximizer),
/// or when the given cycle is not the maximizer.
pub fn r_star_good<F>(table: &DualSubactionTable, a_star: F, delta: f64, uniqueness_period: usize) -> Result<RStarReport>
where
    F: Fn(&Epp) -> Result<f64> + Sync,
{
    let d = table.d;
    let cycle = &table.cycle;
    let best = dual_max_average(d, uniqueness_period.max(cycle.len()), &a_star)?;
    if best.second >= best.m_star - UNIQUENESS_TOL {
        return Err(Error::NonUniqueMaximizer(format!(
            "another cycle averages {} against {} for {cycle}",
            best.second, best.m_star
        )));
    }
    if !best.cycle.is_rotation_of(&cycle.prefix(cycle.primitive_period())) {
        return Err(Error::InvalidArgument(format!(
            "cycle {cycle} is not maximizing; {} has average {}",
            best.cycle, best.m_star
        )));
    }
    let root = cycle.prefix(cycle.primitive_period());
    let m_set: Vec<Epp> = (0..root.len())
        .map(|r| Epp::periodic(&root.rotate(r)))
        .collect::<Result<_>>()?;
    let mut p_set: Vec<(Epp, f64)> = Vec::new();
    for m in &m_set {
        for pre in m.preimages() {
            if !m_set.contains(&pre) && !p_set.iter().any(|(q, _)| q == &pre) {
                let r = r_star(&pre, table, &a_star)?;
                p_set.push((pre, r));
            }
        }
    }
    p_set.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| crate::symbolic::lex_order(&a.0, &b.0)));
    let min_r = p_set.first().map_or(f64::INFINITY, |p| p.1);
    Ok(RStarReport {
        ok: min_r > delta,
        min_r,
        delta,
        witnesses: p_set.iter().filter(|p| p.1 <= delta).cloned().collect(),
        p_set,
    })
}
