//! Writes DOT files for every unfolding and for the product machine.
//!
//! cargo run --example dot_export -- fixtures/chain3.sm out/

use std::path::PathBuf;

use summachine::dsl::parse_system;
use summachine::oracle::{build_product, DEFAULT_BOUND};
use summachine::unfold::{unfold, ExecMode, Limits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "fixtures/chain3.sm".into());
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("summachine-dot"));
    let spec = parse_system(&std::fs::read_to_string(&path)?)?;
    let sum = unfold(&spec, Limits::default(), ExecMode::Sequential)?;
    std::fs::create_dir_all(&dir)?;
    for (name, dot) in sum.to_dot() {
        std::fs::write(dir.join(format!("{name}.dot")), dot)?;
    }
    std::fs::write(dir.join("product.dot"), build_product(&spec, DEFAULT_BOUND).to_dot())?;
    println!("wrote {} files to {}", sum.machines() + 1, dir.display());
    Ok(())
}
