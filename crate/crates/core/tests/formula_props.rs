use poincare_core::parse;
use proptest::prelude::*;

mod common;

#[test]
fn parser_survives_random_input() {
    let accepted = common::parser_fuzz(100_000, 0x5eed).unwrap();
    // The token soup should produce some well-formed formulas.
    assert!(accepted > 5_000, "only {accepted} inputs parsed");
}

fn vf_term() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![Just("x".to_string()), Just("y".to_string()), (-3i64..4).prop_map(|c| c.to_string())];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), 1u32..4).prop_map(|(a, e)| format!("({a})^{e}")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

fn atom() -> impl Strategy<Value = String> {
    let rel = prop::sample::select(vec!["=", "<", "<=", ">="]);
    prop_oneof![
        (vf_term(), rel, -2i64..3).prop_map(|(t, r, c)| format!("ord({t}) {r} n + {c}")),
        (vf_term(), vf_term()).prop_map(|(a, b)| format!("ac({a}) = ac({b})")),
        (vf_term(), vf_term()).prop_map(|(a, b)| format!("{a} = {b} + x")),
    ]
}

fn formula() -> impl Strategy<Value = String> {
    atom().prop_recursive(3, 10, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) /\\ ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) \\/ ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) -> ({b})")),
            inner.clone().prop_map(|a| format!("~({a})")),
            inner.prop_map(|a| format!("E w:VF. ({a}) /\\ ord(w - x) >= 0")),
        ]
    })
}

proptest! {
    #[test]
    fn generated_formulas_round_trip(body in formula()) {
        let text = format!("ord(x:VF) >= 0 /\\ ord(y:VF) >= 0 /\\ n:VG >= 0 /\\ ({body})");
        let f = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        let printed = f.to_canonical();
        let g = parse(&printed).map_err(|e| TestCaseError::fail(format!("{printed}: {e}")))?;
        prop_assert_eq!(&g, &f);
        prop_assert_eq!(g.to_canonical(), printed);
    }
}
