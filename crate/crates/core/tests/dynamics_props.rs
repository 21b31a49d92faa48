use ergopt_core::dynamics::{ExpandingMap, Orientation};
use ergopt_core::symbolic::Word;
use proptest::prelude::*;

fn maps() -> impl Strategy<Value = ExpandingMap> {
    prop_oneof![
        Just(ExpandingMap::doubling()),
        Just(ExpandingMap::minus_doubling()),
        Just(ExpandingMap::from_exprs(&["x/3", "(x+1)/3", "(x+2)/3"], 1.0 / 3.0, Orientation::Preserving).unwrap()),
    ]
}

proptest! {
    #[test]
    fn forward_step_inverts_each_branch(m in maps(), x in 0.001..0.999f64, i in 0..3usize) {
        let i = i % m.degree();
        let (y, s) = m.forward_step(m.psi(i, x)).unwrap();
        prop_assert_eq!(s as usize, i);
        prop_assert!((y - x).abs() <= 1e-12);
    }

    #[test]
    fn itinerary_reads_words_backwards(m in maps(), x in 0.01..0.99f64, syms in prop::collection::vec(0..3u8, 1..8)) {
        let d = m.degree();
        let g = Word::new(syms.iter().map(|s| s % d as u8).collect(), d).unwrap();
        let y = m.apply_word(&g, x).unwrap();
        let mut expect = g.symbols().to_vec();
        expect.reverse();
        prop_assert_eq!(m.itinerary(y, g.len()).unwrap(), expect);
    }

    #[test]
    fn cylinders_nest_and_shrink(m in maps(), syms in prop::collection::vec(0..3u8, 0..8), x in 0.0..=1.0f64) {
        let d = m.degree();
        let g = Word::new(syms.iter().map(|s| s % d as u8).collect(), d).unwrap();
        let (a, b) = m.cylinder_interval(&g).unwrap();
        let y = m.apply_word(&g, x).unwrap();
        prop_assert!(a - 1e-15 <= y && y <= b + 1e-15);
        prop_assert!(b - a <= m.lambda().powi(g.len() as i32) + 1e-15);
        // the child cylinder ψ_{γ s} sits inside ψ_γ
        let (ca, cb) = m.cylinder_interval(&g.push(0).unwrap()).unwrap();
        let (pa, pb) = m.cylinder_interval(&Word::new(vec![0], d).unwrap().concat(&g).unwrap()).unwrap();
        prop_assert!(ca >= -1e-15 && cb <= 1.0 + 1e-15);
        prop_assert!(pa >= a - 1e-15 && pb <= b + 1e-15);
    }

    #[test]
    fn periodic_points_are_fixed(m in maps(), syms in prop::collection::vec(0..3u8, 1..7)) {
        let d = m.degree();
        let g = Word::new(syms.iter().map(|s| s % d as u8).collect(), d).unwrap();
        let x = m.periodic_point(&g).unwrap();
        prop_assert!((m.apply_word(&g, x).unwrap() - x).abs() <= 1e-13);
    }
}

#[test]
fn cylinders_tile_the_interval() {
    for m in [ExpandingMap::doubling(), ExpandingMap::minus_doubling()] {
        for k in 1..8 {
            let total: f64 = Word::all(k, 2)
                .map(|g| {
                    let (a, b) = m.cylinder_interval(&g).unwrap();
                    b - a
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
