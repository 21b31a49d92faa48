use super::*;
use crate::dynamics::{ExpandingMap, Orientation};
use crate::expr::Expr;

fn doubling(pot: PotentialSpec, n: usize) -> Transfer {
    Transfer::with_nodes(Arc::new(ExpandingMap::doubling()), Arc::new(pot), n).unwrap()
}

fn exp_x() -> PotentialSpec {
    PotentialSpec::parse_g("exp(x)").unwrap()
}

#[test]
fn apply_examples() {
    let t = doubling(PotentialSpec::constant(1.0), 16);
    let one = GridFunction::constant(t.grid().clone(), 1.0);
    let p1 = t.apply(&one, 1.0);
    assert!(p1.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
    let id = GridFunction::from_fn(t.grid().clone(), |x| x);
    let pq = t.apply(&id, 1.0);
    for (&x, &v) in t.grid().nodes().iter().zip(pq.values()) {
        assert!((v - (x + 0.5)).abs() < 1e-14);
    }
    let t = doubling(exp_x(), 16);
    let one = GridFunction::constant(t.grid().clone(), 1.0);
    let v0 = t.apply(&one, 1.0).values()[0];
    assert!((v0 - (1.0 + 0.5f64.exp())).abs() < 1e-14);
    assert!((v0 - 2.64872).abs() < 1e-5);
}

#[test]
fn constant_potential_eigendata() {
    for (c, beta) in [(1.0, 1.0), (0.7, 2.0), (1.3, 4.0)] {
        let t = doubling(PotentialSpec::constant(c), 32);
        let e = t.leading_eigen(beta, EigenOptions::default()).unwrap();
        let expect = 2.0 * f64::powf(c, beta);
        assert!((e.alpha() - expect).abs() <= 1e-10 * expect);
        assert!(e.v_grid().values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        for (a, b) in e.mu.iter().zip(t.grid().quadrature_weights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn jacobian_potential_gives_unit_eigenvalue() {
    let t = doubling(PotentialSpec::constant(0.5), 32);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    assert!((e.alpha() - 1.0).abs() < 1e-12);
}

#[test]
fn resolution_refinement() {
    let a64 = doubling(exp_x(), 64).leading_eigen(1.0, EigenOptions::default()).unwrap();
    let a128 = doubling(exp_x(), 128).leading_eigen(1.0, EigenOptions::default()).unwrap();
    assert!((a64.alpha() - a128.alpha()).abs() <= 1e-8);
}

#[test]
fn eigen_residuals_and_normalization() {
    let t = doubling(exp_x(), 64);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    assert!(e.residual < 1e-11);
    let s: f64 = e.mu.iter().sum();
    assert!((s - 1.0).abs() < 1e-12);
    assert!((e.integrate(e.v_grid().values()) - 1.0).abs() < 1e-10);
    let pv = t.apply(&e.v_grid(), 1.0);
    let err = pv
        .values()
        .iter()
        .zip(e.v_grid().values())
        .fold(0.0f64, |m, (a, b)| m.max((a - e.alpha() * b).abs()));
    assert!(err <= 1e-11 * e.alpha());
    // μ̃(P q) = α μ̃(q) for polynomials
    for p in 0..10 {
        let q = GridFunction::from_fn(t.grid().clone(), |x| (x - 0.3).powi(p));
        let lhs = e.integrate(t.apply(&q, 1.0).values());
        let rhs = e.alpha() * e.integrate(q.values());
        assert!((lhs - rhs).abs() < 1e-11, "p = {p}: {lhs} vs {rhs}");
    }
}

#[test]
fn cylinder_masses() {
    let t = doubling(PotentialSpec::constant(1.0), 32);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    for g in Word::all(5, 2) {
        assert!((t.cylinder_mass(&g, &e).unwrap() - 1.0 / 32.0).abs() < 1e-14);
        assert!((t.word_measure(&g, &e).unwrap() - 1.0 / 32.0).abs() < 1e-12);
    }
    let t = doubling(exp_x(), 64);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    let total: f64 = t
        .log_cylinder_masses(6, &e)
        .unwrap()
        .iter()
        .map(|l| l.exp())
        .sum();
    assert!((total - 1.0).abs() < 1e-8);
    let w = |s: &str| Word::parse(s, 2).unwrap();
    assert!(t.cylinder_mass(&w("01"), &e).unwrap() <= t.cylinder_mass(&w("1"), &e).unwrap());
    assert!((t.word_measure(&w(""), &e).unwrap() - 1.0).abs() < 1e-12);
    let deep = Word::from_index(0, 2000, 2);
    assert!(matches!(t.cylinder_mass(&deep, &e), Err(Error::Underflow { .. })));
    assert!(t.log_cylinder_mass(&deep, &e).unwrap() < -1000.0);
}

#[test]
fn kolmogorov_consistency() {
    let t = doubling(exp_x(), 64);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    for g in Word::all(5, 2) {
        let parent = t.word_measure(&g, &e).unwrap();
        let right: f64 = (0..2).map(|s| t.word_measure(&g.push(s).unwrap(), &e).unwrap()).sum();
        let left: f64 = (0..2)
            .map(|s| {
                let w = Word::new(vec![s], 2).unwrap().concat(&g).unwrap();
                t.word_measure(&w, &e).unwrap()
            })
            .sum();
        assert!((parent - right).abs() < 1e-8);
        assert!((parent - left).abs() < 1e-8);
    }
}

#[test]
fn invariance_of_gibbs_measure() {
    let t = doubling(exp_x(), 128);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    let m = t.map().clone();
    let q = |y: f64| (2.0 * std::f64::consts::PI * y).cos() + y * (1.0 - y) * 0.0;
    let qf: Vec<f64> = t.grid().nodes().iter().map(|&x| q(m.forward_step(x).unwrap().0)).collect();
    let vq: Vec<f64> = t.grid().nodes().iter().map(|&x| q(x)).collect();
    let v = e.v_grid();
    let lhs: f64 = e.integrate(&qf.iter().zip(v.values()).map(|(a, b)| a * b).collect::<Vec<_>>());
    let rhs: f64 = e.integrate(&vq.iter().zip(v.values()).map(|(a, b)| a * b).collect::<Vec<_>>());
    assert!((lhs - rhs).abs() < 1e-7, "{lhs} vs {rhs}");
}

#[test]
fn spectral_projection() {
    let t = doubling(PotentialSpec::constant(1.0), 32);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    let z = GridFunction::from_fn(t.grid().clone(), |x| x);
    let xs = [0.0, 0.2, 0.7, 1.0];
    for k in 1..5 {
        for r in t.spectral_projection_rho(&z, k, &xs, &e).unwrap() {
            assert!((r - 0.5).abs() < 1e-13);
        }
    }
    let t = doubling(exp_x(), 64);
    let e = t.leading_eigen(1.0, EigenOptions::default()).unwrap();
    let one = GridFunction::constant(t.grid().clone(), 1.0);
    let r = t.spectral_projection_rho(&one, 8, &xs, &e).unwrap();
    for (x, r) in xs.iter().zip(r) {
        assert!((r - e.v(*x)).abs() < 1e-2);
    }
}

#[test]
fn zero_temperature_pressure_bound() {
    let t = doubling(PotentialSpec::parse_a("x").unwrap(), 128);
    let e = t.leading_eigen(64.0, EigenOptions::default()).unwrap();
    let p = e.log_alpha / 64.0;
    assert!(p >= 1.0 - 1e-12);
    assert!(p - 1.0 <= 2f64.ln() / 64.0 + 1e-3);
    let e16 = t.leading_eigen(16.0, EigenOptions::default()).unwrap();
    let e32 = t.leading_eigen(32.0, EigenOptions::default()).unwrap();
    let err = |e: &EigenData| {
        let f = t.scaled_log_eigenfunction(e);
        t.grid()
            .nodes()
            .iter()
            .zip(f.values())
            .fold(0.0f64, |m, (&x, &v)| m.max((v - (x - 1.0)).abs()))
    };
    assert!(err(&e32) < err(&e16));
    let anchored = t.log_eigenfunction_scaled(&e32, 1.0);
    assert_eq!(anchored.eval(1.0), 0.0);
}

#[test]
fn constant_potential_scaled_log_is_zero() {
    let t = doubling(PotentialSpec::constant(2.0), 16);
    let e = t.leading_eigen(3.0, EigenOptions::default()).unwrap();
    assert!(t.log_eigenfunction_scaled(&e, 0.5).sup_norm() < 1e-12);
}

#[test]
fn non_positive_potential_is_rejected() {
    let m = Arc::new(ExpandingMap::doubling());
    let p = Arc::new(PotentialSpec::from_g("g = x - 0.5", Expr::parse("x - 0.5").unwrap().into_fn()));
    assert!(matches!(
        Transfer::with_nodes(m, p.clone(), 16),
        Err(Error::NonPositivePotential { .. })
    ));
    assert!(p.validate(1024).is_err());
    let r = ExpandingMap::from_exprs(&["(1-x)/2", "(2-x)/2"], 0.5, Orientation::Reversing).unwrap();
    let t = Transfer::with_nodes(Arc::new(r), Arc::new(exp_x()), 32).unwrap();
    assert!(t.leading_eigen(1.0, EigenOptions::default()).is_ok());
}
