//! Unfolds a system and prints every tree with environment vectors.
//!
//! cargo run --example unfold -- fixtures/chain3.sm

use summachine::dsl::parse_system;
use summachine::model::validate_system;
use summachine::unfold::{unfold, ExecMode, Limits, NodeRef};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "fixtures/chain3.sm".into());
    let spec = parse_system(&std::fs::read_to_string(&path)?)?;
    for v in validate_system(&spec).violations {
        eprintln!("warning: {v}");
    }
    let sum = unfold(&spec, Limits::default(), ExecMode::Sequential)?;
    for u in &sum.unfoldings {
        println!("{}", spec.machines[u.machine].name);
        for idx in u.preorder() {
            let r = NodeRef::new(u.machine, idx);
            let n = sum.node(r);
            let env: Vec<String> = (0..sum.machines()).map(|k| sum.node_name(n.env.component(k))).collect();
            let mut tags = Vec::new();
            if n.cutoff {
                tags.push("cut-off".to_string());
            }
            if n.dead {
                tags.push("dead".to_string());
            }
            if let Some(p) = n.sync_partner {
                tags.push(format!("with {}", sum.qualified_name(p)));
            }
            println!("{}{} env=({}) {}", "  ".repeat(n.depth + 1), sum.node_name(r), env.join(","), tags.join(" "));
        }
    }
    println!("{}", sum.stats);
    Ok(())
}
