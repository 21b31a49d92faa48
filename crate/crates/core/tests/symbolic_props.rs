use std::cmp::Ordering;

use ergopt_core::symbolic::{lex_order, EventuallyPeriodicPoint as Epp, Word};
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = Epp> {
    let sym = 0..d as u8;
    (prop::collection::vec(sym.clone(), 0..6), prop::collection::vec(sym, 1..5))
        .prop_map(move |(h, c)| Epp::new(h, c, d).unwrap())
}

/// Far enough to see any disagreement between points from `point`.
const HORIZON: usize = 64;

proptest! {
    #[test]
    fn text_round_trip(w in point(3)) {
        prop_assert_eq!(Epp::parse(&w.to_string(), 3).unwrap(), w);
    }

    #[test]
    fn canonical_form_is_unique(h in prop::collection::vec(0..2u8, 0..5), c in prop::collection::vec(0..2u8, 1..4), reps in 1..4usize) {
        let a = Epp::new(h.clone(), c.clone(), 2).unwrap();
        // unrolling the cycle into the head, or repeating it, names the same point
        let mut h2 = h.clone();
        h2.extend_from_slice(&c);
        let c2: Vec<u8> = c.iter().copied().cycle().take(c.len() * reps).collect();
        let b = Epp::new(h2, c2, 2).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.expand(HORIZON), b.expand(HORIZON));
        prop_assert!(a.head().is_empty() || a.head().symbols().last() != a.cycle().symbols().last());
    }

    #[test]
    fn lex_order_matches_expansions(a in point(2), b in point(2)) {
        let o = a.lex_compare(&b).unwrap();
        prop_assert_eq!(o, a.expand(HORIZON).cmp(&b.expand(HORIZON)));
        prop_assert_eq!(o.reverse(), b.lex_compare(&a).unwrap());
        prop_assert_eq!(o == Ordering::Equal, a == b);
        prop_assert_eq!(lex_order(&a, &b), o);
    }

    #[test]
    fn distance_is_an_ultrametric(a in point(2), b in point(2), c in point(2)) {
        let d = |x: &Epp, y: &Epp| x.distance(y).unwrap();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0.0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b).max(d(&b, &c)));
        if let Some(n) = a.first_disagreement(&b).unwrap() {
            prop_assert_eq!(d(&a, &b), 0.5f64.powi(n as i32));
            prop_assert_eq!(a.expand(n), b.expand(n));
        }
    }

    #[test]
    fn shift_undoes_prepend(w in point(3), s in 0..3u8, k in 0..12usize) {
        prop_assert_eq!(w.prepend(s).unwrap().shift(), w.clone());
        let (tail, head) = w.shift_truncate(k);
        prop_assert_eq!(tail.prepend_word(&head).unwrap(), w.clone());
        prop_assert_eq!(head.len(), k);
        for p in w.preimages() {
            prop_assert_eq!(p.shift(), w.clone());
        }
    }

    #[test]
    fn word_index_round_trip(syms in prop::collection::vec(0..3u8, 0..9)) {
        let w = Word::new(syms.clone(), 3).unwrap();
        prop_assert_eq!(Word::from_index(w.index(), syms.len(), 3), w.clone());
        prop_assert_eq!(Word::parse(&w.to_string(), 3).unwrap(), w);
    }

    #[test]
    fn primitive_period_divides(syms in prop::collection::vec(0..2u8, 1..13)) {
        let w = Word::new(syms, 2).unwrap();
        let p = w.primitive_period();
        prop_assert_eq!(w.len() % p, 0);
        prop_assert!(w.prefix(p).is_primitive());
        prop_assert!(w.rotate(p) == w);
    }
}
