//! Full-branch expanding maps of `[0, 1]` given by their inverse branches.
//!
//! Composition convention: for a word `γ = (i₁, …, i_k)`,
//! `ψ_γ = ψ_{i_k} ∘ … ∘ ψ_{i₁}`, so the first symbol is applied first
//! (innermost). A point of `I_γ = ψ_γ([0,1])` has forward itinerary
//! `i_k, i_{k-1}, …, i₁`: the word read right to left.
//!
//! Branch intervals are half-open on the right except the last one, so a
//! shared endpoint belongs to the interval it opens.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, RealFn};
use crate::par::*;
use crate::symbolic::{lyndon_words, Word};

const TILE_TOL: f64 = 1e-9;
const ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Preserving,
    Reversing,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Preserving => "preserving",
            Orientation::Reversing => "reversing",
        })
    }
}

/// An onto expanding map with `d` analytic inverse branches.
#[derive(Clone)]
pub struct ExpandingMap {
    branches: Vec<RealFn>,
    labels: Vec<String>,
    orientation: Orientation,
    lambda: f64,
    /// Left endpoints of the branch intervals, plus 1.0 at the end.
    cuts: Vec<f64>,
}

impl fmt::Debug for ExpandingMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpandingMap")
            .field("branches", &self.labels)
            .field("orientation", &self.orientation)
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl ExpandingMap {
    /// Builds and validates a map. Branch `i` must map `[0,1]` onto the
    /// `i`-th interval of a left-to-right tiling of `[0,1]`.
    pub fn new(
        branches: Vec<(String, RealFn)>,
        lambda: f64,
        orientation: Orientation,
    ) -> Result<Self> {
        let d = branches.len();
        if d < 2 {
            return Err(Error::InvalidMap(format!("need at least 2 branches, got {d}")));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidMap(format!("lambda {lambda} not in (0,1)")));
        }
        let (labels, branches): (Vec<_>, Vec<_>) = branches.into_iter().unzip();
        let mut cuts = Vec::with_capacity(d + 1);
        let mut prev_hi = 0.0;
        for (i, psi) in branches.iter().enumerate() {
            let (a, b) = (psi(0.0), psi(1.0));
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidMap(format!("branch {i} not finite at 0 or 1")));
            }
            let increasing = b > a;
            match (orientation, increasing) {
                (Orientation::Preserving, false) | (Orientation::Reversing, true) => {
                    return Err(Error::InvalidMap(format!(
                        "branch {i} is not {orientation} (psi(0)={a}, psi(1)={b})"
                    )))
                }
                _ => {}
            }
            let (lo, hi) = (a.min(b), a.max(b));
            if (lo - prev_hi).abs() > TILE_TOL {
                return Err(Error::InvalidMap(format!(
                    "branch {i} interval [{lo}, {hi}] does not start at {prev_hi}"
                )));
            }
            cuts.push(if i == 0 { 0.0 } else { lo });
            prev_hi = hi;
        }
        if (prev_hi - 1.0).abs() > TILE_TOL {
            return Err(Error::InvalidMap(format!(
                "branch intervals end at {prev_hi}, not 1"
            )));
        }
        cuts.push(1.0);
        Ok(Self {
            branches,
            labels,
            orientation,
            lambda,
            cuts,
        })
    }

    /// Parses branch expressions in `x`.
    pub fn from_exprs<S: AsRef<str>>(
        exprs: &[S],
        lambda: f64,
        orientation: Orientation,
    ) -> Result<Self> {
        let branches = exprs
            .iter()
            .map(|s| {
                let e = Expr::parse(s.as_ref())?;
                Ok((s.as_ref().to_string(), e.into_fn()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(branches, lambda, orientation)
    }

    /// `x ↦ 2x mod 1`.
    pub fn doubling() -> Self {
        Self::from_exprs(&["x/2", "(x+1)/2"], 0.5, Orientation::Preserving)
            .expect("doubling map is valid")
    }

    /// `x ↦ -2x mod 1`.
    pub fn minus_doubling() -> Self {
        Self::from_exprs(&["(1-x)/2", "(2-x)/2"], 0.5, Orientation::Reversing)
            .expect("minus-doubling map is valid")
    }

    pub fn degree(&self) -> usize {
        self.branches.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// `ψ_i(x)` without range checks.
    #[inline]
    pub fn psi(&self, i: usize, x: f64) -> f64 {
        (self.branches[i])(x)
    }

    fn check_word(&self, gamma: &Word) -> Result<()> {
        if gamma.alphabet() != self.degree() {
            return Err(Error::AlphabetMismatch {
                left: gamma.alphabet(),
                right: self.degree(),
            });
        }
        Ok(())
    }

    /// `ψ_γ(x)`, first symbol innermost.
    pub fn apply_word(&self, gamma: &Word, x: f64) -> Result<f64> {
        self.check_word(gamma)?;
        Ok(self.apply_symbols(gamma.symbols(), x))
    }

    /// `ψ_γ(x)` on raw symbols (assumed in range).
    pub fn apply_symbols(&self, symbols: &[u8], x: f64) -> f64 {
        symbols.iter().fold(x, |y, &s| self.psi(s as usize, y))
    }

    /// Index of the branch interval containing `x`.
    pub fn symbol_of(&self, x: f64) -> usize {
        let d = self.degree();
        (1..d).rev().find(|&i| x >= self.cuts[i]).unwrap_or(0)
    }

    /// `(f(x), ν(x))`: the branch symbol and the point `y` with `ψ_ν(y) = x`.
    pub fn forward_step(&self, x: f64) -> Result<(f64, u8)> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidArgument(format!("x = {x} outside [0,1]")));
        }
        let i = self.symbol_of(x);
        let y = self.invert_branch(i, x)?;
        Ok((y, i as u8))
    }

    /// Solves `ψ_i(y) = x` for `y ∈ [0,1]` by bisection.
    pub fn invert_branch(&self, i: usize, x: f64) -> Result<f64> {
        let psi = &self.branches[i];
        let (f0, f1) = (psi(0.0) - x, psi(1.0) - x);
        if f0 == 0.0 {
            return Ok(0.0);
        }
        if f1 == 0.0 {
            return Ok(1.0);
        }
        if f0.signum() == f1.signum() {
            // tolerate tiling slack at the interval ends
            if f0.abs() <= TILE_TOL || f1.abs() <= TILE_TOL {
                return Ok(if f0.abs() < f1.abs() { 0.0 } else { 1.0 });
            }
            return Err(Error::RootBracket { x, branch: i });
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let lo_sign = f0.signum();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = psi(mid) - x;
            if fm == 0.0 {
                return Ok(mid);
            }
            if fm.signum() == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (rl, rh) = ((psi(lo) - x).abs(), (psi(hi) - x).abs());
        let (y, r) = if rl <= rh { (lo, rl) } else { (hi, rh) };
        if r > ROOT_TOL {
            return Err(Error::RootBracket { x, branch: i });
        }
        Ok(y)
    }

    /// First `n` symbols of the forward itinerary of `x`.
    pub fn itinerary(&self, x: f64, n: usize) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(n);
        let mut y = x;
        for _ in 0..n {
            let (fy, s) = self.forward_step(y)?;
            out.push(s);
            y = fy;
        }
        Ok(out)
    }

    /// `I_γ = ψ_γ([0,1])` as `(a, b)` with `a ≤ b`.
    pub fn cylinder_interval(&self, gamma: &Word) -> Result<(f64, f64)> {
        let a = self.apply_word(gamma, 0.0)?;
        let b = self.apply_word(gamma, 1.0)?;
        Ok((a.min(b), a.max(b)))
    }

    /// Fixed point of the contraction `ψ_γ`.
    pub fn periodic_point(&self, gamma: &Word) -> Result<f64> {
        self.check_word(gamma)?;
        if gamma.is_empty() {
            return Err(Error::InvalidWord("empty word has no periodic point".into()));
        }
        for end in [0.0, 1.0] {
            if self.apply_symbols(gamma.symbols(), end) == end {
                return Ok(end);
            }
        }
        let mut x = 0.5;
        for _ in 0..10_000 {
            let next = self.apply_symbols(gamma.symbols(), x);
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    what: "inverse branch",
                    x,
                });
            }
            let step = (next - x).abs();
            x = next;
            if step <= 1e-16 {
                break;
            }
        }
        Ok(x)
    }

    /// The periodic orbit generated by `γ`, ordered along the forward dynamics.
    pub fn periodic_orbit(&self, gamma: &Word, potential: &dyn Fn(f64) -> f64) -> Result<PeriodicOrbit> {
        let x0 = self.periodic_point(gamma)?;
        let syms = gamma.symbols();
        let p = syms.len();
        // y_m = ψ_{γ_m}(y_{m-1}) with y_0 = x0; forward orbit is y_p, y_{p-1}, …, y_1
        let mut ys = Vec::with_capacity(p);
        let mut y = x0;
        for &s in syms {
            y = self.psi(s as usize, y);
            ys.push(y);
        }
        ys.reverse();
        let avg = ys.iter().map(|&x| potential(x)).sum::<f64>() / p as f64;
        if !avg.is_finite() {
            return Err(Error::NonFinite {
                what: "potential on periodic orbit",
                x: x0,
            });
        }
        Ok(PeriodicOrbit {
            itinerary: gamma.clone(),
            points: ys,
            birkhoff_average: avg,
        })
    }

    /// One orbit per primitive necklace of length `≤ max_period`, sorted by
    /// Birkhoff average of `potential`, largest first.
    pub fn enumerate_periodic_orbits(
        &self,
        max_period: usize,
        potential: &(dyn Fn(f64) -> f64 + Sync),
    ) -> Result<Vec<PeriodicOrbit>> {
        let words = lyndon_words(self.degree(), max_period);
        let mut orbits = words
            .par_iter()
            .map(|w| self.periodic_orbit(w, potential))
            .collect::<Result<Vec<_>>>()?;
        orbits.sort_by(|a, b| {
            b.birkhoff_average
                .total_cmp(&a.birkhoff_average)
                .then_with(|| a.period().cmp(&b.period()))
                .then_with(|| a.itinerary.cmp(&b.itinerary))
        });
        Ok(orbits)
    }

    /// Largest sampled `|ψ_i'|` by finite differences on a uniform grid.
    pub fn contraction_audit(&self, samples: usize) -> ContractionAudit {
        let samples = samples.max(2);
        let h = 1e-6;
        let mut lam: f64 = 0.0;
        for psi in &self.branches {
            for k in 0..samples {
                let x = k as f64 / (samples - 1) as f64;
                let (a, b) = ((x - h).max(0.0), (x + h).min(1.0));
                let slope = ((psi(b) - psi(a)) / (b - a)).abs();
                lam = lam.max(if slope.is_finite() { slope } else { f64::INFINITY });
            }
        }
        ContractionAudit {
            lambda_empirical: lam,
            lambda_declared: self.lambda,
            ok: lam <= self.lambda + 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionAudit {
    pub lambda_empirical: f64,
    pub lambda_declared: f64,
    pub ok: bool,
}

/// A periodic orbit of `f` labelled by the primitive word `γ` whose inverse
/// composition `ψ_γ` fixes `points[0]`. `f(points[j]) = points[j+1 mod p]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    #[serde(serialize_with = "crate::io::ser_display")]
    pub itinerary: Word,
    pub points: Vec<f64>,
    pub birkhoff_average: f64,
}

impl PeriodicOrbit {
    pub fn period(&self) -> usize {
        self.points.len()
    }

    /// Forward itinerary of `points[0]` over one period.
    pub fn forward_symbols(&self) -> Vec<u8> {
        self.itinerary.symbols().iter().rev().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn w(s: &str) -> Word {
        Word::parse(s, 2).unwrap()
    }

    #[test]
    fn inverse_branch_examples() {
        let m = ExpandingMap::doubling();
        assert_eq!(m.apply_word(&w("0"), 1.0).unwrap(), 0.5);
        assert_eq!(m.apply_word(&w("01"), 0.0).unwrap(), 0.5);
        assert_eq!(m.apply_word(&w(""), 0.37).unwrap(), 0.37);
        let bad = Word::parse("2", 3).unwrap();
        assert!(m.apply_word(&bad, 0.1).is_err());
    }

    #[test]
    fn forward_step_examples() {
        let m = ExpandingMap::doubling();
        let (y, s) = m.forward_step(0.3).unwrap();
        assert_eq!(s, 0);
        assert!((y - 0.6).abs() < 1e-15);
        assert_eq!(m.forward_step(0.75).unwrap(), (0.5, 1));
        assert_eq!(m.forward_step(0.5).unwrap(), (0.0, 1));
        assert_eq!(m.forward_step(1.0).unwrap(), (1.0, 1));
        let t = ExpandingMap::minus_doubling();
        let (y, s) = t.forward_step(1.0 / 6.0).unwrap();
        assert_eq!(s, 0);
        assert!((y - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn cylinder_examples() {
        let m = ExpandingMap::doubling();
        assert_eq!(m.cylinder_interval(&w("0")).unwrap(), (0.0, 0.5));
        assert_eq!(m.cylinder_interval(&w("01")).unwrap(), (0.5, 0.75));
        for g in Word::all(5, 2) {
            let (a, b) = m.cylinder_interval(&g).unwrap();
            assert!(b - a <= 0.5f64.powi(5) + 1e-15);
        }
    }

    #[test]
    fn periodic_points() {
        let m = ExpandingMap::doubling();
        assert_eq!(m.periodic_point(&w("1")).unwrap(), 1.0);
        assert!((m.periodic_point(&w("01")).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        let t = ExpandingMap::minus_doubling();
        assert!((t.periodic_point(&w("1")).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn orbit_enumeration() {
        let m = ExpandingMap::doubling();
        let orbits = m.enumerate_periodic_orbits(2, &|x| x).unwrap();
        assert_eq!(orbits.len(), 3);
        let mut pts: Vec<Vec<f64>> = orbits
            .iter()
            .map(|o| {
                let mut p = o.points.clone();
                p.sort_by(f64::total_cmp);
                p
            })
            .collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(pts[0], vec![0.0]);
        assert!((pts[1][0] - 1.0 / 3.0).abs() < 1e-14 && (pts[1][1] - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(pts[2], vec![1.0]);

        let top = &m.enumerate_periodic_orbits(8, &|x| x).unwrap()[0];
        assert_eq!(top.points, vec![1.0]);
        assert_eq!(top.birkhoff_average, 1.0);
        assert_eq!(m.enumerate_periodic_orbits(3, &|x| x).unwrap().len(), 5);
    }

    #[test]
    fn orbit_points_follow_dynamics() {
        let m = ExpandingMap::doubling();
        for o in m.enumerate_periodic_orbits(6, &|x| x).unwrap() {
            let p = o.period();
            for j in 0..p {
                let (fx, s) = m.forward_step(o.points[j]).unwrap();
                let next = o.points[(j + 1) % p];
                // 1 and 0 are both fixed; floating error near endpoints is tiny
                assert!((fx - next).abs() < 1e-10, "{:?}", o);
                if o.points[j] > 0.0 && o.points[j] < 1.0 {
                    assert_eq!(s, o.forward_symbols()[j]);
                }
            }
        }
    }

    #[test]
    fn contraction_audit_examples() {
        let m = ExpandingMap::doubling();
        let a = m.contraction_audit(101);
        assert!((a.lambda_empirical - 0.5).abs() < 1e-9 && a.ok);
        let m4 = ExpandingMap::from_exprs(&["x/2", "(x+1)/2"], 0.4, Orientation::Preserving).unwrap();
        assert!(!m4.contraction_audit(101).ok);
        let p = ExpandingMap::from_exprs(
            &["x/2 + 0.01*sin(pi*x)", "(x+1)/2"],
            0.55,
            Orientation::Preserving,
        )
        .unwrap();
        let a = p.contraction_audit(1001);
        assert!((a.lambda_empirical - (0.5 + 0.01 * std::f64::consts::PI)).abs() < 1e-6);
        assert!(a.ok);
    }

    #[test]
    fn validation_rejects_bad_tilings() {
        let gap = ExpandingMap::from_exprs(&["x/3", "(x+1)/2"], 0.5, Orientation::Preserving);
        assert!(matches!(gap, Err(Error::InvalidMap(_))));
        let wrong = ExpandingMap::from_exprs(&["(1-x)/2", "(2-x)/2"], 0.5, Orientation::Preserving);
        assert!(wrong.is_err());
        let one: Vec<(String, RealFn)> = vec![("x".into(), Arc::new(|x| x))];
        assert!(ExpandingMap::new(one, 0.5, Orientation::Preserving).is_err());
    }
}
