use std::sync::Arc;

use super::*;
use crate::dynamics::ExpandingMap;
use crate::transfer::{PotentialSpec, Transfer};

fn p(s: &str) -> Epp {
    Epp::parse(s, 2).unwrap()
}

fn one() -> Word {
    Word::parse("1", 2).unwrap()
}

fn ctx(map: ExpandingMap, pot: PotentialSpec, x_bar: f64) -> KernelContext {
    let t = Transfer::with_nodes(Arc::new(map), Arc::new(pot), 128).unwrap();
    KernelContext::new(t, x_bar, p("1")).unwrap()
}

/// Two words with `I* = 0` and `G(w, x) = sign · s(w) (x − 1/2)`, `s` the
/// lexicographic rank.
fn crossing(sign: f64) -> (CandidateSet, FnKernel<impl Fn(&Epp, f64) -> Result<f64> + Sync>) {
    let lo = p("0|1");
    let cand = CandidateSet::from_parts(vec![(p("|1"), 0.0), (lo.clone(), 0.0)], one(), 1).unwrap();
    let k = FnKernel(move |w: &Epp, x: f64| {
        let s = if *w == lo { 0.0 } else { 1.0 };
        Ok(sign * s * (x - 0.5))
    });
    (cand, k)
}

#[test]
fn candidate_enumeration() {
    let w: Vec<String> = candidate_words(&one(), 2).unwrap().iter().map(|w| w.to_string()).collect();
    // 01 ⧺ 1^∞ is the same point as 0 ⧺ 1^∞
    assert_eq!(w, ["00|1", "0|1", "10|1", "|1"]);
    assert_eq!(candidate_words(&one(), 0).unwrap(), vec![p("1")]);
    let c = Word::parse("01", 2).unwrap();
    for n in 0..4 {
        assert!(candidate_words(&c, n).unwrap().len() <= counting_bound(2, 2, n));
        assert!(candidate_words(&one(), n).unwrap().len() <= counting_bound(2, 1, n));
    }
    assert_eq!(candidate_words(&c, 0).unwrap().len(), 2);
}

#[test]
fn infinite_i_star_rejected() {
    let r = CandidateSet::from_parts(vec![(p("|1"), f64::INFINITY)], one(), 0);
    assert!(r.is_err());
}

#[test]
fn doubling_identity_has_one_segment() {
    let k = ctx(ExpandingMap::doubling(), PotentialSpec::parse_a("x").unwrap(), 1.0);
    let s = piecewise_study(&k, &StudyOptions::default()).unwrap();
    assert_eq!(s.max_average.m, 1.0);
    assert_eq!(s.breakpoints.segment_words, ["|1"]);
    assert!(s.breakpoints.breakpoints.is_empty() && s.breakpoints.certified);
    assert!(s.cross.sup_dual_lax <= 1e-4, "{:?}", s.cross);
    assert!(s.cross.beta_trend_decreasing);
    assert_eq!(s.uniqueness.singleton_fraction, 1.0);
    assert!(s.monotonicity.ok);
    assert_eq!(s.twist.status, TwistStatus::NonStrict);
    for c in &s.candidates.candidates {
        let zeros = c.word.expand(c.word.preperiod()).iter().filter(|&&b| b == 0).count();
        assert!((c.i_star - zeros as f64).abs() < 1e-9, "{c:?}");
    }
    let r = s.r_star.as_ref().unwrap();
    assert!(r.ok && (r.min_r - 1.0).abs() < 1e-9);
    assert!(s.closure.certified);
    assert!(s.support.iter().all(|c| c.support_selected));
    assert!(s.passed(), "{:?}", s.failures);
    for (&x, &v) in s.selection.xs.iter().zip(&s.selection.values) {
        assert!((v - (x - 1.0)).abs() <= 1e-4);
    }
}

#[test]
fn table_route_agrees() {
    let k = ctx(ExpandingMap::doubling(), PotentialSpec::parse_a("x").unwrap(), 1.0);
    let opts = StudyOptions {
        route: KernelRoute::Table,
        ..Default::default()
    };
    let s = piecewise_study(&k, &opts).unwrap();
    assert_eq!(s.breakpoints.segment_words, ["|1"]);
    assert!(s.cross.sup_dual_lax <= 1e-4);
}

#[test]
fn orientation_reversing_refused() {
    let k = ctx(ExpandingMap::minus_doubling(), PotentialSpec::parse_a("-(1-x)^2").unwrap(), 2.0 / 3.0);
    assert!(matches!(piecewise_study(&k, &StudyOptions::default()), Err(Error::OrientationReversing)));
}

#[test]
fn planted_crossing() {
    let (cand, k) = crossing(-1.0);
    let r = scan_breakpoints(&cand, &k, ScanOptions::default()).unwrap();
    assert_eq!(r.breakpoints.len(), 1);
    assert!((r.breakpoints[0] - 0.5).abs() <= DEFAULT_REFINE_TOL);
    assert_eq!(r.segment_words, ["|1", "0|1"]);
    assert!(r.monotone && r.certified);

    let sel = optimal_selection(&uniform_grid(511), &cand, &k, 0.0, DEFAULT_TIE_TOL).unwrap();
    let u = generic_uniqueness_probe(&sel, &r.breakpoints, DEFAULT_REFINE_TOL);
    assert!(u.singleton_fraction >= 510.0 / 512.0);
    assert!(u.ties_localized);
    assert!(monotonicity_check(&sel).ok);
    assert!(sel.u_minus.iter().zip(&sel.u_plus).all(|(a, b)| a <= b));

    let at = v_dual(0.5, &cand, &k, 0.0, DEFAULT_TIE_TOL).unwrap();
    assert_eq!(at.argmax.len(), 2);
    assert_eq!(v_dual(0.25, &cand, &k, 0.0, DEFAULT_TIE_TOL).unwrap().argmax.len(), 1);

    // halving the tolerance moves the breakpoint by less than the old one
    let fine = scan_breakpoints(
        &cand,
        &k,
        ScanOptions {
            refine_tol: DEFAULT_REFINE_TOL / 2.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!((fine.breakpoints[0] - r.breakpoints[0]).abs() < DEFAULT_REFINE_TOL);
}

#[test]
fn inverted_selection_reported() {
    let (cand, k) = crossing(1.0);
    let sel = optimal_selection(&uniform_grid(64), &cand, &k, 0.0, DEFAULT_TIE_TOL).unwrap();
    let m = monotonicity_check(&sel);
    assert!(!m.ok);
    let v = m.first_violation.unwrap();
    assert_eq!((v.word.as_str(), v.word_next.as_str()), ("0|1", "|1"));
    assert!(v.x <= 0.5 && v.x_next >= 0.5);
    assert!(!scan_breakpoints(&cand, &k, ScanOptions::default()).unwrap().monotone);
}

#[test]
fn twist_signs() {
    let words = candidate_words(&one(), 2).unwrap();
    let rank = |w: &Epp| words.iter().position(|v| v == w).unwrap() as f64;
    let good = twist_check(&FnKernel(|w: &Epp, x: f64| Ok(-rank(w) * x)), &words, 8).unwrap();
    assert!(good.ok && good.status == TwistStatus::Strict);
    let bad = twist_check(&FnKernel(|w: &Epp, x: f64| Ok(rank(w) * x)), &words, 8).unwrap();
    assert_eq!(bad.status, TwistStatus::Violated);
    assert_eq!(bad.violation_count, bad.checked);
    let flat = twist_check(&FnKernel(|_: &Epp, x: f64| Ok(x * x)), &words, 8).unwrap();
    assert_eq!(flat.status, TwistStatus::NonStrict);
    assert!(!flat.ok);
}

#[test]
fn oscillating_selection_is_inconsistent() {
    let (cand, _) = crossing(1.0);
    let lo = p("0|1");
    let k = FnKernel(move |w: &Epp, x: f64| Ok(if *w == lo { 0.0 } else { (20.0 * std::f64::consts::PI * x).sin() }));
    let r = scan_breakpoints(&cand, &k, ScanOptions::default());
    assert!(matches!(r, Err(Error::BreakpointInconsistency { .. })));
}

#[test]
fn constant_kernel_ties_everywhere() {
    let cand = CandidateSet::from_parts(candidate_words(&one(), 2).unwrap().into_iter().map(|w| (w, 0.0)).collect(), one(), 2).unwrap();
    let k = FnKernel(|_: &Epp, _: f64| Ok(0.0));
    let sel = optimal_selection(&uniform_grid(32), &cand, &k, 0.5, DEFAULT_TIE_TOL).unwrap();
    assert!(sel.argmax.iter().all(|a| a.len() == cand.len()));
    assert!(sel.values.iter().all(|&v| v == 0.0));
    let u = generic_uniqueness_probe(&sel, &[], DEFAULT_REFINE_TOL);
    assert_eq!(u.singleton_fraction, 0.0);
    assert!(!u.ties_localized);
}
