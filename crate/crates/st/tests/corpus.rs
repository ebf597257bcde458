use std::path::PathBuf;

use plc_st::corpus::{load_dir, Fixture};
use plc_st::{check_source, class_counts, parse, print_unit, DialectRegistry};

fn fixtures(kind: &str) -> Vec<Fixture> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(kind);
    load_dir(&dir).unwrap()
}

#[test]
fn clean_fixtures_have_no_findings_and_print_stably() {
    let reg = DialectRegistry::builtin();
    let mut failures = Vec::new();
    for f in fixtures("valid") {
        assert!(f.expect.is_none(), "{} carries an expectation", f.name());
        let d = reg.get(&f.dialect).unwrap();
        let diags = check_source(&f.source, &d, &());
        if !diags.is_empty() {
            let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            failures.push(format!("{}:\n  {}", f.name(), list.join("\n  ")));
            continue;
        }
        let once = print_unit(&parse(&f.source, &d).unit);
        let reparsed = parse(&once, &d);
        assert!(reparsed.diagnostics.is_empty(), "{}: printed form does not parse: {:?}", f.name(), reparsed.diagnostics);
        assert_eq!(print_unit(&reparsed.unit), once, "{}: printing is not a fixpoint", f.name());
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn seeded_error_fixtures_match_expected_classes() {
    let reg = DialectRegistry::builtin();
    let mut failures = Vec::new();
    for f in fixtures("errors") {
        let expect = f.expect.unwrap_or_else(|| panic!("{} has no expectation", f.name()));
        let d = reg.get(&f.dialect).unwrap();
        let diags = check_source(&f.source, &d, &());
        let got = class_counts(&diags);
        if got != expect {
            let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            failures.push(format!("{}: expected {expect:?}, got {got:?}\n  {}", f.name(), list.join("\n  ")));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
