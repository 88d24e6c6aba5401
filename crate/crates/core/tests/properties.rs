//! Property tests for the series kernel and the term order.

use ijets_core::multiindex::{class, ClassTermOrder, IndexedCoordinate, MultiIndex};
use ijets_core::scalar::{rat, Rat};
use ijets_core::Series;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn small_rat() -> impl Strategy<Value = Rat> {
    (-9i64..=9, 1i64..=7).prop_map(|(n, d)| rat(n, d))
}

fn series(max_order: usize) -> impl Strategy<Value = Series> {
    let coeffs = proptest::collection::vec(small_rat(), 0..12);
    (1..=max_order, coeffs).prop_map(|(n, cs)| {
        let mut s = Series::zero(2, n);
        let mut i = 0;
        'outer: for k in 0..=n {
            for j in MultiIndex::all_of_order(2, k) {
                if i >= cs.len() {
                    break 'outer;
                }
                s.set(j, cs[i].clone());
                i += 1;
            }
        }
        s
    })
}

proptest! {
    #[test]
    fn invert_round_trips(s in series(8), c in small_rat()) {
        let mut s = s;
        let constant = if c.is_zero() { Rat::one() } else { c };
        s.set(MultiIndex::empty(), constant);
        let inv = s.invert().unwrap();
        let product = s.mul(&inv).unwrap();
        prop_assert_eq!(
            product,
            Series::constant(2, s.truncation_order(), Rat::one())
        );
    }

    #[test]
    fn sqrt_round_trips(s in series(4)) {
        let mut s = s;
        if s.coeff(&MultiIndex::empty()).is_zero() {
            s.set(MultiIndex::empty(), Rat::one());
        }
        // a perfect square by construction
        let sq = s.mul(&s).unwrap();
        if let Ok(root) = sq.sqrt() {
            let back = root.mul(&root).unwrap();
            prop_assert_eq!(back, sq);
        }
    }

    #[test]
    fn term_order_total_and_class_respecting(
        entries_a in proptest::collection::vec(1u8..=3, 1..5),
        entries_b in proptest::collection::vec(1u8..=3, 1..5),
        dep_a in 1u8..=2,
        dep_b in 1u8..=2,
    ) {
        prop_assume!(entries_a.len() == entries_b.len());
        let order = ClassTermOrder::natural(3, 2);
        let a = IndexedCoordinate::new(dep_a, MultiIndex::new(entries_a));
        let b = IndexedCoordinate::new(dep_b, MultiIndex::new(entries_b));
        let ab = order.cmp_columns(&a, &b);
        let ba = order.cmp_columns(&b, &a);
        prop_assert_eq!(ab, ba.reverse());
        if ab == std::cmp::Ordering::Equal {
            prop_assert_eq!(a.clone(), b.clone());
        }
        if class(&a.index) > class(&b.index) {
            prop_assert_eq!(ab, std::cmp::Ordering::Less);
        }
    }
}
