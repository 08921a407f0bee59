//! Reachability of partial global states, with a witness interleaving.
//!
//! cargo run --example reach

use summachine::dsl::parse_system;
use summachine::reach::{global_reachable, materialize_configuration, ReachOptions, ReachQuery};
use summachine::unfold::{unfold, ExecMode, Limits};

const SYSTEM: &str = "
system relay
machine F1 { init A states A B trans A -> B : a with F3 }
machine F2 { init P states P Q trans P -> Q : b with F3 }
machine F3 { init X states X Y Z trans X -> Y : a with F1 trans X -> Z : b with F2 }
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = parse_system(SYSTEM)?;
    let sum = unfold(&spec, Limits::default(), ExecMode::Sequential)?;
    for targets in [vec![("F1", "B"), ("F3", "Y")], vec![("F1", "B"), ("F2", "Q")], vec![("F2", "Q")]] {
        let q = ReachQuery::from_names(&spec, targets.iter().copied())?;
        let v = global_reachable(&sum, &q, ReachOptions::default())?;
        print!("{targets:?}: ");
        match &v.witness {
            Some(w) => {
                println!("reachable at {}", w.display(&sum));
                for step in materialize_configuration(&sum, w)? {
                    println!("    {:>4} {}", step.action, spec.format_vector(&step.vector));
                }
            }
            None => println!("unreachable ({} co checks)", v.diagnostics.pairwise_checks),
        }
    }
    Ok(())
}
