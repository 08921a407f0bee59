//! Dead leaves of the unfolding next to the deadlocks of the product.
//!
//! cargo run --example deadlocks -- fixtures/mismatch.sm

use summachine::dsl::parse_system;
use summachine::oracle::{build_product, compare_deadlocks, DEFAULT_BOUND};
use summachine::reach::list_deadlocks;
use summachine::unfold::{unfold, ExecMode, Limits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "fixtures/mismatch.sm".into());
    let spec = parse_system(&std::fs::read_to_string(&path)?)?;
    let sum = unfold(&spec, Limits::default(), ExecMode::Sequential)?;
    for d in list_deadlocks(&sum) {
        let leaves: Vec<String> = d.leaves.iter().map(|&r| sum.qualified_name(r)).collect();
        println!("stuck from {}: {}", spec.format_vector(&d.vector), leaves.join(", "));
    }
    let pm = build_product(&spec, DEFAULT_BOUND);
    for s in pm.deadlocks() {
        println!("product deadlock {}", spec.format_vector(&pm.states[s]));
    }
    let c = compare_deadlocks(&pm, &sum);
    println!("{} unconfirmed leaves, {} uncovered product deadlocks", c.unconfirmed.len(), c.missed.len());
    Ok(())
}
