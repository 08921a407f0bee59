//! Local formulas on one unfolding and the global forms, each compared with
//! CTL on the product machine.
//!
//! cargo run --example cdtl

use summachine::cdtl::{eval_global, eval_local, parse_local, CdtlError, GlobalForm};
use summachine::dsl::parse_system;
use summachine::oracle::{build_product, eval_ctl, DEFAULT_BOUND};
use summachine::unfold::{unfold, ExecMode, Limits};

const SYSTEM: &str = "
system pingpong
machine F1 { init A states A B trans A -> B : ping with F2 trans B -> A : pong with F2 }
machine F2 { init X states X Y trans X -> Y : ping with F1 trans Y -> X : pong with F1 }
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = parse_system(SYSTEM)?;
    let sum = unfold(&spec, Limits::default(), ExecMode::Sequential)?;
    let pm = build_product(&spec, DEFAULT_BOUND);
    for text in [r#"EF "B""#, r#"AG AF "A""#, r#"EX "A""#, r#"A["A" U "B"]"#] {
        let f = parse_local(&sum, 0, text)?;
        let local = eval_local(&sum, sum.root(0), &f)?;
        let product = eval_ctl(&pm, &f.clone().try_map(&mut |p| Ok::<_, CdtlError>((0, p)))?)?;
        println!("F1 ⊨ {f}: {local} (product {product})");
    }
    for text in [r#"conj-atoms F1:"B" F2:"Y""#, r#"conj-AX F1:"B" F2:"Y""#, r#"conj-AF F1:"A" F2:"X""#] {
        let g = GlobalForm::parse(&sum, text)?;
        let v = eval_global(&sum, &g)?;
        let witness = v.witness.map(|w| w.display(&sum)).unwrap_or_default();
        println!("{text}: {} {witness} (product {})", v.holds, eval_ctl(&pm, &g.to_ctl())?);
    }
    Ok(())
}
