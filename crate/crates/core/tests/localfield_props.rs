use poincare_core::{Characteristic, FieldSpec};
use proptest::prelude::*;

mod common;

use common::{oracle_add, oracle_mul};

#[test]
fn ord_and_ac_are_multiplicative_exhaustively() {
    common::ord_ac_exhaustive().unwrap();
}

fn spec_strategy() -> impl Strategy<Value = (FieldSpec, u64, u64, u32)> {
    (prop::sample::select(vec![2u64, 3, 5, 7]), 1u32..=8, any::<bool>(), any::<u64>(), any::<u64>(), any::<u32>())
        .prop_map(|(p, n, equal, a, b, k)| {
            let case = if equal { Characteristic::Equal } else { Characteristic::Mixed };
            let spec = FieldSpec::new(case, p, n).unwrap();
            (spec, a % spec.size(), b % spec.size(), 1 + k % n)
        })
}

proptest! {
    #[test]
    fn reduction_is_a_ring_homomorphism((spec, a, b, k) in spec_strategy()) {
        let lo = spec.with_precision(k).unwrap();
        let red = |x: u64| spec.from_repr(x).unwrap().reduce_precision(k).unwrap().repr();
        prop_assert_eq!(red(spec.add_raw(a, b)), lo.add_raw(red(a), red(b)));
        prop_assert_eq!(red(spec.mul_raw(a, b)), lo.mul_raw(red(a), red(b)));
        prop_assert_eq!(red(spec.neg_raw(a)), lo.neg_raw(red(a)));
        prop_assert_eq!(red(spec.one().repr()), lo.one().repr());
    }

    #[test]
    fn arithmetic_matches_the_oracle((spec, a, b, _k) in spec_strategy()) {
        let (p, n) = (spec.p(), spec.precision());
        prop_assert_eq!(spec.mul_raw(a, b), oracle_mul(spec.case(), p, n, a, b));
        prop_assert_eq!(spec.add_raw(a, b), oracle_add(spec.case(), p, n, a, b));
        prop_assert_eq!(spec.add_raw(a, spec.neg_raw(a)), 0);
    }

    #[test]
    fn truncation_keeps_low_digits((spec, a, _b, k) in spec_strategy()) {
        let t = spec.truncate_raw(a, k);
        for i in 0..spec.precision() {
            let expect = if i < k { spec.digit_raw(a, i) } else { 0 };
            prop_assert_eq!(spec.digit_raw(t, i), expect);
        }
    }
}
