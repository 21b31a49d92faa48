use std::sync::{Arc, OnceLock};

use ergopt_core::dynamics::ExpandingMap;
use ergopt_core::kernel::{DualMode, KernelContext};
use ergopt_core::piecewise::{
    candidate_words, monotonicity_check, optimal_selection, scan_breakpoints, twist_check, uniform_grid, v_dual,
    CandidateSet, FnKernel, ScanOptions, TwistStatus, DEFAULT_TIE_TOL,
};
use ergopt_core::symbolic::{EventuallyPeriodicPoint as Epp, Word};
use ergopt_core::transfer::{PotentialSpec, Transfer};
use proptest::prelude::*;

fn context(src: &str) -> KernelContext {
    let pot = PotentialSpec::parse_a(src).unwrap();
    let t = Transfer::with_nodes(Arc::new(ExpandingMap::doubling()), Arc::new(pot), 64).unwrap();
    KernelContext::new(t, 1.0, Epp::parse("1", 2).unwrap()).unwrap()
}

fn contexts() -> &'static [KernelContext] {
    static CELL: OnceLock<Vec<KernelContext>> = OnceLock::new();
    CELL.get_or_init(|| vec![context("x"), context("cos(2*pi*x)"), context("x*(1-x) + 0.2*sin(2*pi*x)")])
}

fn point() -> impl Strategy<Value = Epp> {
    (prop::collection::vec(0..2u8, 0..6), prop::collection::vec(0..2u8, 1..4)).prop_map(|(h, c)| Epp::new(h, c, 2).unwrap())
}

/// Candidates of the cycle `1` up to depth 2, in lexicographic order.
fn candidates() -> CandidateSet {
    let one = Word::parse("1", 2).unwrap();
    let words = candidate_words(&one, 2).unwrap();
    CandidateSet::from_parts(words.into_iter().map(|w| (w, 0.0)).collect(), one, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn involution_identity(which in 0..3usize, w in point(), x in 0.0..=1.0f64) {
        let k = &contexts()[which];
        prop_assert!(k.involution_residual(&w, x, 1.0, 40).unwrap() <= 1e-8);
    }

    #[test]
    fn series_dual_of_identity_reads_the_first_symbol(w in point()) {
        let a = contexts()[0].dual_potential(&w, 1.0, DualMode::Series, 40).unwrap();
        prop_assert!((a - w.symbol(0) as f64).abs() <= 1e-9);
    }

    /// `H_β(ω, x) − H_β(ω, y)` does not depend on `β`.
    #[test]
    fn kernel_differences_are_temperature_free(which in 0..3usize, w in point(), x in 0.0..=1.0f64, y in 0.0..=1.0f64) {
        let k = &contexts()[which];
        let rows = k.h_beta_batch(&w, &[x, y], &[1.0, 4.0, 16.0, 64.0], 40).unwrap();
        let d0 = rows[0][0] - rows[0][1];
        for r in &rows[1..] {
            prop_assert!((r[0] - r[1] - d0).abs() <= 1e-9);
        }
    }

    /// Affine kernels with slopes decreasing in lexicographic rank satisfy the
    /// strict twist condition, so the selection must be monotone.
    #[test]
    fn strict_twist_forces_monotone_selection(
        slopes in prop::collection::vec(0.1..3.0f64, 4),
        offsets in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let cand = candidates();
        let words = cand.words();
        let mut cum = 0.0;
        let rates: Vec<f64> = slopes.iter().map(|s| { cum += s; cum }).collect();
        let w2 = words.clone();
        let kernel = FnKernel(move |w: &Epp, x: f64| {
            let r = w2.iter().position(|v| v == w).unwrap();
            Ok(offsets[r] - rates[r] * x)
        });
        let twist = twist_check(&kernel, &words, 8).unwrap();
        prop_assert_eq!(twist.status, TwistStatus::Strict);
        let sel = optimal_selection(&uniform_grid(128), &cand, &kernel, 0.5, DEFAULT_TIE_TOL).unwrap();
        prop_assert!(monotonicity_check(&sel).ok);
        for (i, &x) in sel.xs.iter().enumerate() {
            prop_assert!(sel.u_minus[i] <= sel.u_plus[i]);
            let dv = v_dual(x, &cand, &kernel, 0.5, DEFAULT_TIE_TOL).unwrap();
            prop_assert_eq!(dv.value, sel.values[i]);
        }
        let scan = scan_breakpoints(&cand, &kernel, ScanOptions::default()).unwrap();
        prop_assert!(scan.monotone && scan.certified);
        prop_assert!(scan.breakpoints.len() < cand.len());
        prop_assert!(scan.breakpoints.windows(2).all(|b| b[0] < b[1]));
    }
}
