use pointcause_oracles::{exact_invariants, fast_oracles, trivial_examples, OracleReport};

fn check(reports: Vec<OracleReport>) {
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.to_string()).collect();
    assert!(failed.is_empty(), "failed:\n{}", failed.join("\n"));
}

#[test]
fn closed_form_examples() {
    check(fast_oracles());
}

#[test]
fn self_evident_examples() {
    check(trivial_examples());
}

#[test]
fn exact_identities() {
    check(exact_invariants());
}

#[test]
fn ids_are_unique() {
    let mut ids: Vec<String> = fast_oracles()
        .into_iter()
        .chain(trivial_examples())
        .chain(exact_invariants())
        .map(|r| r.id)
        .collect();
    let n = ids.len();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), n);
}
