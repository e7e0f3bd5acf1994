use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use poincare_core::motivic::MotivicScalar;
use proptest::prelude::*;

fn scalar() -> impl Strategy<Value = MotivicScalar> {
    (prop::collection::btree_map(-3i64..4, -5i64..6, 0..4), prop::collection::btree_map(1u32..4, 0u32..3, 0..3))
        .prop_map(|(num, den)| {
            let num: BTreeMap<i64, BigInt> = num.into_iter().map(|(k, c)| (k, BigInt::from(c))).collect();
            MotivicScalar::new(num, den).unwrap()
        })
}

fn points() -> Vec<BigRational> {
    [(2, 1), (3, 1), (7, 2), (11, 10)].iter().map(|&(a, b)| BigRational::new(a.into(), BigInt::from(b))).collect()
}

proptest! {
    #[test]
    fn specialization_is_a_ring_map(a in scalar(), b in scalar()) {
        for q in points() {
            prop_assert_eq!((&a + &b).theta(&q), a.theta(&q) + b.theta(&q));
            prop_assert_eq!((&a - &b).theta(&q), a.theta(&q) - b.theta(&q));
            prop_assert_eq!((&a * &b).theta(&q), a.theta(&q) * b.theta(&q));
        }
        prop_assert_eq!(MotivicScalar::one().theta_int(5), BigRational::from_integer(1.into()));
    }

    #[test]
    fn equality_is_representation_free(a in scalar(), i in 1u32..4) {
        // Multiplying and dividing by 1 - L^-i is the identity.
        let f = &MotivicScalar::l_pow(0) - &MotivicScalar::l_pow(-(i as i64));
        let g = MotivicScalar::geometric(i).unwrap();
        prop_assert_eq!(&(&a * &f) * &g, a.clone());
    }

    #[test]
    fn nonnegativity_agrees_with_specialization(a in scalar()) {
        let square = &a * &a;
        prop_assert!(square.is_nonneg());
        if a.is_nonneg() {
            for q in points() {
                prop_assert!(a.theta(&q) >= BigRational::zero(), "{a} at {q}");
            }
        }
        // A negative value anywhere on q > 1 rules out nonnegativity.
        let neg = -&a;
        let samples: Vec<BigRational> = (0..40).map(|k| BigRational::new((1001 + 25 * k * k).into(), 1000.into())).collect();
        let signs: Vec<bool> = samples.iter().map(|q| a.theta(q) >= BigRational::zero()).collect();
        if signs.iter().any(|&s| !s) {
            prop_assert!(!a.is_nonneg());
        }
        if a.is_zero() {
            prop_assert!(a.is_nonneg() && neg.is_nonneg());
        }
        prop_assert_eq!(a.sub_nonneg(&a), Some(MotivicScalar::zero()));
    }
}
