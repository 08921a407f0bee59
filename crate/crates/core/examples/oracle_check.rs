//! Cross-checks a generated system against the product machine.
//!
//! cargo run --release --example oracle_check -- 42

use summachine::check::{cross_check, CheckOptions};
use summachine::gen::{generate, spec_hash, GenParams};
use summachine::unfold::{unfold, ExecMode, Limits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(42);
    let params = GenParams { seed, machines: 3, states: 4, coupling: 2, conflict_width: 2 };
    let spec = generate(&params)?;
    println!("seed {seed}, sha256 {}", spec_hash(&spec));
    let sum = unfold(&spec, Limits::default(), ExecMode::Sequential)?;
    let report = cross_check(&sum, &CheckOptions { seed, ..CheckOptions::default() });
    println!(
        "{} queries, {} mismatches; product {} states vs {} sum nodes",
        report.queries,
        report.mismatches.len(),
        report.sizes.product_states,
        report.sizes.sum_nodes
    );
    if let Some(b) = &report.bisimulation {
        println!("bisimulation {}: {} configurations", if b.passed() { "holds" } else { "fails" }, b.configurations);
    }
    Ok(())
}
