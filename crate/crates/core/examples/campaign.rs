//! Unfolds a batch of seeded random systems and prints size statistics.
//!
//! cargo run --release --example campaign -- 1000

use std::time::Instant;

use summachine::gen::{generate, GenParams};
use summachine::unfold::{unfold, ExecMode, Limits};

fn main() {
    let count: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let start = Instant::now();
    let mut worst = (0usize, 0u64);
    let mut failures = 0;
    for seed in 0..count {
        let params = GenParams::campaign(seed);
        let spec = generate(&params).expect("generator parameters are feasible");
        match unfold(&spec, Limits::default(), ExecMode::Sequential) {
            Ok(sum) => {
                if sum.stats.total_nodes > worst.0 {
                    worst = (sum.stats.total_nodes, seed);
                }
            }
            Err(e) => {
                failures += 1;
                println!("seed {seed}: {e}");
            }
        }
    }
    println!(
        "{count} systems in {:.2?}; largest {} nodes (seed {}); {failures} failures",
        start.elapsed(),
        worst.0,
        worst.1
    );
}
