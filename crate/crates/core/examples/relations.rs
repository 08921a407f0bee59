//! Audits the seq / conf / co relations of a system: totality, overlaps,
//! agreement of the anchored concurrency test with the definition, and
//! which of reflexivity, asymmetry and transitivity actually hold.
//!
//! cargo run --example relations -- fixtures/chain3.sm

use summachine::dsl::parse_system;
use summachine::relations::{co_fast, Relations};
use summachine::unfold::{unfold, ExecMode, Limits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "fixtures/chain3.sm".into());
    let spec = parse_system(&std::fs::read_to_string(&path)?)?;
    let sum = unfold(&spec, Limits::default(), ExecMode::Sequential)?;
    let rel = Relations::new(&sum);
    let nodes: Vec<_> = sum.all_nodes().collect();
    let (mut pairs, mut uncovered, mut overlaps, mut disagree) = (0, 0, 0, 0);
    for (a, &s) in nodes.iter().enumerate() {
        for &t in &nodes[a + 1..] {
            pairs += 1;
            let c = rel.classify_pair(s, t);
            uncovered += usize::from(c.is_uncovered());
            overlaps += usize::from(c.is_overlap());
            if s.machine != t.machine && co_fast(&sum, s, t)?.0 != rel.co_definitional(s, t)? {
                disagree += 1;
                println!("co differs at {} / {}", sum.qualified_name(s), sum.qualified_name(t));
            }
        }
    }
    println!("{pairs} pairs: {uncovered} uncovered, {overlaps} overlapping, {disagree} co disagreements");
    let reflexive = nodes.iter().filter(|&&s| rel.seq_rel(s, s)).count();
    let symmetric = nodes
        .iter()
        .flat_map(|&s| nodes.iter().map(move |&t| (s, t)))
        .filter(|&(s, t)| s != t && rel.seq_rel(s, t) && rel.seq_rel(t, s))
        .count();
    println!(
        "seq: {reflexive} of {} nodes related to themselves, {symmetric} ordered pairs related both ways",
        nodes.len()
    );
    let co = |s: summachine::unfold::NodeRef, t: summachine::unfold::NodeRef| {
        s.machine != t.machine && rel.co_definitional(s, t).unwrap_or(false)
    };
    let mut broken = 0;
    for &a in &nodes {
        for &b in nodes.iter().filter(|&&b| co(a, b)) {
            broken += nodes.iter().filter(|&&c| c.machine != a.machine && co(b, c) && !co(a, c)).count();
        }
    }
    println!("co: {broken} triples with a co b, b co c but not a co c");
    print!("{}", rel.dump_tsv());
    Ok(())
}
