//! Acceptance criteria 1–9 at their stated tolerances, one line per
//! criterion. Run with `cargo test -p hanzawa-core --test acceptance -- --nocapture`.

use std::time::Instant;

use hanzawa_core::verify::{run_suite, Suite};
use hanzawa_core::RunConfig;

fn criterion(suite: Suite) -> bool {
    let cfg = RunConfig::default();
    let start = Instant::now();
    let (pass, detail) = match run_suite(suite, &cfg) {
        Ok(records) => {
            for r in records.iter().filter(|r| !r.pass) {
                println!("    {r}");
            }
            let failed = records.iter().filter(|r| !r.pass).count();
            (!records.is_empty() && failed == 0, format!("{} checks, {failed} failed", records.len()))
        }
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {} ({}): {} [{detail}, {:.1}s]",
        suite.criterion(),
        suite.name(),
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    pass
}

#[test]
fn acceptance_criteria() {
    let failed: Vec<u8> = Suite::ALL.iter().filter(|s| !criterion(**s)).map(|s| s.criterion()).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
