//! Prints every oracle report. `cargo run --release -p pointcause-oracles --example report [fast]`

fn main() {
    let fast_only = std::env::args().nth(1).as_deref() == Some("fast");
    let mut reports = pointcause_oracles::fast_oracles();
    reports.extend(pointcause_oracles::trivial_examples());
    reports.extend(pointcause_oracles::exact_invariants());
    if !fast_only {
        reports.extend(pointcause_oracles::simulation_oracles());
    }
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("{} reports, {failed} failed", reports.len());
}
