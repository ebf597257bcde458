use plc_st::{check_source, class_counts, parse, print_unit, DialectRegistry};
use proptest::prelude::*;

const PIECES: &[&str] = &[
    "IF", "THEN", "ELSE", "END_IF", ";", ":=", "x", "y", "(", ")", "[", "]", "1", "2.5", "+", "*", "**",
    "AND", "NOT", "CASE", "OF", "END_CASE", ":", "FOR", "TO", "DO", "END_FOR", "WHILE", "END_WHILE",
    "'s'", "T#1S", "t(IN := TRUE)", "FOO(1)", "VAR", "END_VAR", "REPEAT", "UNTIL", "\n", "#z", "\"q\"",
    "REGION r\n", "END_REGION", "GOTO l;", "l:", "%IX0.0", "EXIT",
];

fn soup() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(PIECES), 0..60).prop_map(|v| {
        format!(
            "FUNCTION_BLOCK P\nVAR\n    x : INT;\n    y : BOOL;\n    t : TON;\nEND_VAR\n{}\nEND_FUNCTION_BLOCK\n",
            v.join(" ")
        )
    })
}

fn int_expr() -> impl Strategy<Value = String> {
    let leaf = prop::sample::select(vec!["x", "1", "16#FF", "-x"]).prop_map(str::to_string);
    leaf.prop_recursive(3, 12, 2, |inner| {
        (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "MOD", "**"]), inner.clone())
            .prop_map(|(a, op, b)| format!("{a} {op} {b}"))
            .boxed()
            .prop_union(inner.prop_map(|e| format!("({e})")).boxed())
    })
}

fn bool_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        prop::sample::select(vec!["y", "TRUE", "t.Q", "NOT y"]).prop_map(str::to_string),
        (int_expr(), prop::sample::select(vec!["=", "<>", "<", ">=", ">"]), int_expr())
            .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        (inner.clone(), prop::sample::select(vec!["AND", "OR", "XOR"]), inner)
            .prop_map(|(a, op, b)| format!("({a}) {op} {b}"))
    })
}

fn statements() -> impl Strategy<Value = String> {
    let simple = prop_oneof![
        int_expr().prop_map(|e| format!("x := {e};")),
        bool_expr().prop_map(|e| format!("y := {e};")),
        Just("t(IN := y, PT := T#1S);".to_string()),
        Just(";".to_string()),
        Just("RETURN;".to_string()),
    ];
    let stmt = simple.prop_recursive(3, 24, 4, |inner| {
        let block = prop::collection::vec(inner, 0..4).prop_map(|v| v.join("\n"));
        prop_oneof![
            (bool_expr(), block.clone(), prop::option::of(block.clone()))
                .prop_map(|(c, b, e)| match e {
                    Some(e) => format!("IF {c} THEN\n{b}\nELSE\n{e}\nEND_IF;"),
                    None => format!("IF {c} THEN\n{b}\nEND_IF;"),
                }),
            (block.clone(), block.clone()).prop_map(|(a, b)| format!("CASE x OF\n1, 2: {a}\n3..5: {b}\nEND_CASE;")),
            (int_expr(), block.clone()).prop_map(|(e, b)| format!("FOR x := 0 TO {e} BY 2 DO\n{b}\nEXIT;\nEND_FOR;")),
            (bool_expr(), block.clone()).prop_map(|(c, b)| format!("WHILE {c} DO\n{b}\nEND_WHILE;")),
            (block, bool_expr()).prop_map(|(b, c)| format!("REPEAT\n{b}\nUNTIL {c}\nEND_REPEAT;")),
        ]
    });
    prop::collection::vec(stmt, 0..6).prop_map(|v| v.join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn parser_never_panics_and_spans_stay_in_bounds(src in soup(), scl in any::<bool>()) {
        let reg = DialectRegistry::builtin();
        let d = reg.get(if scl { "siemens_scl" } else { "codesys_st" }).unwrap();
        let diags = check_source(&src, &d, &());
        for diag in &diags {
            prop_assert!(diag.span.start.offset <= diag.span.end.offset.max(diag.span.start.offset));
            prop_assert!(diag.span.end.offset <= src.len());
        }
        prop_assert_eq!(class_counts(&diags).iter().sum::<usize>(), diags.len());
        prop_assert_eq!(check_source(&src, &d, &()), diags);
    }

    #[test]
    fn clean_parses_print_to_a_fixpoint(body in statements()) {
        let d = DialectRegistry::builtin().get("codesys_st").unwrap();
        let src = format!(
            "FUNCTION_BLOCK P\nVAR\n    x : INT;\n    y : BOOL;\n    t : TON;\nEND_VAR\n{body}\nEND_FUNCTION_BLOCK\n"
        );
        let out = parse(&src, &d);
        prop_assert!(out.diagnostics.is_empty(), "{:?}\n{}", out.diagnostics, src);
        let once = print_unit(&out.unit);
        let again = parse(&once, &d);
        prop_assert!(again.diagnostics.is_empty());
        prop_assert_eq!(print_unit(&again.unit), once);
    }
}
