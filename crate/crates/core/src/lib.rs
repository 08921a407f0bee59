//! Sum-machine analysis of communicating finite state machines.

pub mod cdtl;
pub mod check;
pub mod cli;
pub mod dsl;
pub mod gen;
pub mod model;
pub mod oracle;
pub mod reach;
pub mod relations;
pub mod transition;
pub mod unfold;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::unfold::{unfold, ExecMode, Limits, SumMachine};

    /// Unfolds `fixtures/<name>.sm`.
    pub fn fixture(name: &str) -> SumMachine {
        let path = format!("{}/fixtures/{name}.sm", env!("CARGO_MANIFEST_DIR"));
        let spec = crate::dsl::parse_system(&std::fs::read_to_string(path).unwrap()).unwrap();
        unfold(&spec, Limits::default(), ExecMode::Sequential).unwrap()
    }
}
