use poincare_core::multibox::{is_multiball, multibox, FiniteSubset, Multivolume};
use poincare_core::{Characteristic, FieldSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

#[test]
fn small_sets_match_the_oracle_exhaustively() {
    let checked = common::multibox_sweep(40, 7).unwrap();
    assert!(checked > 60_000, "{checked}");
}

#[test]
fn projection_witness() {
    common::projection_witness().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn multibox_matches_exhaustive_enumeration(
        seed in any::<u64>(),
        p in prop::sample::select(vec![2u64, 3]),
        level in 1u32..=3,
        arity in 1usize..=2,
        equal in any::<bool>(),
    ) {
        let case = if equal { Characteristic::Equal } else { Characteristic::Mixed };
        let spec = FieldSpec::new(case, p, 3).unwrap();
        let boxes = common::random_box_union(&mut ChaCha8Rng::seed_from_u64(seed), p, level, arity);
        common::multibox_agrees(spec, level, arity, &boxes).map_err(TestCaseError::fail)?;
    }

    /// A single multiball is its own multibox.
    #[test]
    fn multiballs_are_fixed(c0 in 0u64..27, c1 in 0u64..27, r0 in 0u32..=3, r1 in 0u32..=3, slope in 0u64..3) {
        let spec = FieldSpec::mixed(3, 3).unwrap();
        let (m0, m1) = (3u64.pow(r0), 3u64.pow(r1));
        let y = FiniteSubset::from_predicate(spec, 2, 3, |v| {
            v[0] % m0 == c0 % m0 && (v[1] + 27 * m1 - slope * v[0] % m1) % m1 == c1 % m1
        })
        .unwrap();
        prop_assert_eq!(is_multiball(&y), Some(Multivolume(vec![r0, r1])));
        let report = multibox(&y).unwrap();
        prop_assert_eq!(report.mb, y);
        prop_assert_eq!(report.multivolume, Multivolume(vec![r0, r1]));
    }
}
