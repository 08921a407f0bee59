//! Command-line front end. `main` only forwards to [`run`].
//!
//! Exit codes: 0 success or positive answer, 1 error, 2 a size bound was hit
//! (unfolding limit, truncated oracle), 3 negative answer (unreachable,
//! formula false, verdict mismatches), 4 sum and oracle disagree in `eval`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cdtl::{eval_global, eval_local, parse_local, CdtlError, GlobalForm};
use crate::check::{cross_check, CheckOptions, CheckReport};
use crate::dsl::{parse_system, pretty_print};
use crate::gen::{generate, spec_hash, GenParams};
use crate::model::validate_system;
use crate::oracle::{build_product, eval_ctl, DEFAULT_BOUND};
use crate::reach::{
    global_reachable, list_deadlocks, materialize_configuration, CertifyMode, Diagnostics, ReachOptions, ReachQuery,
    TraceStep,
};
use crate::relations::Relations;
use crate::unfold::{unfold, CutoffRule, ExecMode, Limits, NodeRef, SumMachine, UnfoldError, SCHEMA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BOUND: i32 = 2;
pub const EXIT_NEGATIVE: i32 = 3;
pub const EXIT_DISAGREE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "summachine", version, about = "Sum-machine analysis of communicating finite state machines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the sum machine and report its size.
    Unfold(UnfoldArgs),
    /// Decide whether a (partial) global state is reachable.
    Reach(ReachArgs),
    /// Cross-check every full-vector query against the product machine.
    Check(CheckArgs),
    /// Evaluate a local formula or one of the global forms.
    Eval(EvalArgs),
    /// Generate a random system from a seed.
    Gen(GenArgs),
    /// List dead leaves grouped by environment.
    Deadlocks(DeadlocksArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sequential,
    Parallel,
    /// Run both, require identical JSON and report both timings.
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CutoffArg {
    Marking,
    Ancestor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CertifyArg {
    Pairwise,
    Chain,
    ChainOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
    Dot,
    Tsv,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// System in the text format, or a sum machine JSON written by `unfold`.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "sequential")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = Limits::default().max_nodes)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = Limits::default().max_depth)]
    pub max_depth: usize,
    #[arg(long, value_enum, default_value = "marking")]
    pub cutoff: CutoffArg,
    /// Recorded in every JSON output.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct UnfoldArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Write the sum machine JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one DOT file per machine into this directory.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReachArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Query document, e.g. '{"targets":{"F1":"B","F2":"Y"}}'.
    #[arg(long, conflicts_with = "target")]
    pub query: Option<String>,
    /// One constraint MACHINE=STATE; repeatable.
    #[arg(long)]
    pub target: Vec<String>,
    #[arg(long, value_enum, default_value = "pairwise")]
    pub certify: CertifyArg,
    /// Keep at most this many candidates per machine.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Run the local searches on worker threads.
    #[arg(long)]
    pub parallel: bool,
    /// Include an interleaving that reaches the witness.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_BOUND)]
    pub bound: usize,
    /// Compare this many seeded random vectors instead of all of them.
    #[arg(long)]
    pub sample: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Local formula, or `conj-atoms|conj-AX|conj-AF` followed by qualified atoms.
    pub formula: String,
    /// Machine a local formula is bound to.
    #[arg(long)]
    pub machine: Option<String>,
    /// Node to evaluate at, as STATE#INSTANCE; defaults to the root.
    #[arg(long)]
    pub node: Option<String>,
    /// Also evaluate the corresponding CTL formula on the product machine.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short = 'n', default_value_t = 3)]
    pub machines: usize,
    #[arg(long, short = 'm', default_value_t = 4)]
    pub states: usize,
    /// Maximum number of sync partners per machine.
    #[arg(long, short = 'd', default_value_t = 1)]
    pub coupling: usize,
    /// Maximum out-degree of a state.
    #[arg(long, short = 'w', default_value_t = 2)]
    pub width: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct DeadlocksArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn error(message: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_ERROR, message: message.to_string() }
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Unfold(a) => cmd_unfold(&a, out, err),
        Command::Reach(a) => cmd_reach(&a, out, err),
        Command::Check(a) => cmd_check(&a, out, err),
        Command::Eval(a) => cmd_eval(&a, out, err),
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Deadlocks(a) => cmd_deadlocks(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::error(e)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(io)?;
    if !text.ends_with('\n') {
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn limits(a: &InputArgs) -> Limits {
    let cutoff = match a.cutoff {
        CutoffArg::Marking => CutoffRule::Marking,
        CutoffArg::Ancestor => CutoffRule::Ancestor,
    };
    Limits { max_nodes: a.max_nodes, max_depth: a.max_depth, cutoff }
}

fn unfold_error(e: UnfoldError) -> Failure {
    let code = if matches!(e, UnfoldError::LimitExceeded { .. }) { EXIT_BOUND } else { EXIT_ERROR };
    Failure { code, message: e.to_string() }
}

struct Loaded {
    sum: SumMachine,
    seed: Option<u64>,
    timings: Vec<(ExecMode, Duration)>,
}

/// Reads a system or a stored sum machine, unfolding the former.
fn load(a: &InputArgs, err: &mut dyn Write) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| Failure::error(format!("cannot read {}: {e}", a.input.display())))?;
    if text.trim_start().starts_with('{') {
        let (sum, seed) = SumMachine::from_json(&text).map_err(Failure::error)?;
        return Ok(Loaded { sum, seed: a.seed.or(seed), timings: Vec::new() });
    }
    let spec = parse_system(&text).map_err(|e| Failure::error(format!("{}: {e}", a.input.display())))?;
    let seed = a.seed.or_else(|| header_seed(&text));
    let report = validate_system(&spec);
    if !report.is_unfoldable() {
        return Err(Failure::error(format!("invalid system:\n{report}")));
    }
    for v in &report.violations {
        let _ = writeln!(err, "warning: {v}");
    }
    let modes: &[ExecMode] = match a.mode {
        ModeArg::Sequential => &[ExecMode::Sequential],
        ModeArg::Parallel => &[ExecMode::Parallel],
        ModeArg::Both => &[ExecMode::Sequential, ExecMode::Parallel],
    };
    let mut built: Option<SumMachine> = None;
    let mut timings = Vec::new();
    for &mode in modes {
        let start = Instant::now();
        let sum = unfold(&spec, limits(a), mode).map_err(unfold_error)?;
        timings.push((mode, start.elapsed()));
        if let Some(first) = &built {
            if first.to_json(seed) != sum.to_json(seed) {
                return Err(Failure::error("sequential and parallel unfoldings differ"));
            }
        } else {
            built = Some(sum);
        }
    }
    Ok(Loaded { sum: built.expect("at least one mode ran"), seed, timings })
}

/// The seed in the `# seed N ...` header written by `gen`.
fn header_seed(text: &str) -> Option<u64> {
    let line = text.lines().next()?.strip_prefix("# seed ")?;
    line.split_whitespace().next()?.parse().ok()
}

fn warn_deadlocks(sum: &SumMachine, err: &mut dyn Write) {
    for d in list_deadlocks(sum) {
        let names: Vec<String> = d.leaves.iter().map(|&r| sum.qualified_name(r)).collect();
        let _ = writeln!(
            err,
            "warning: communication deadlock at {} ({})",
            sum.spec.format_vector(&d.vector),
            names.join(", ")
        );
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::error(format!("cannot write {}: {e}", path.display())))
}

fn cmd_unfold(a: &UnfoldArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let loaded = load(&a.input, err)?;
    let sum = &loaded.sum;
    warn_deadlocks(sum, err);
    let json = sum.to_json(loaded.seed);
    if let Some(path) = &a.out {
        write_file(path, &json)?;
    }
    if let Some(dir) = &a.dot {
        std::fs::create_dir_all(dir).map_err(io)?;
        for (name, dot) in sum.to_dot() {
            write_file(&dir.join(format!("{name}.dot")), &dot)?;
        }
    }
    match a.input.format {
        Format::Json => emit(out, &json)?,
        Format::Dot => {
            for (_, dot) in sum.to_dot() {
                emit(out, &dot)?;
            }
        }
        Format::Tsv => emit(out, &Relations::new(sum).dump_tsv())?,
        Format::Human => {
            emit(out, &sum.stats.to_string())?;
            for (mode, t) in &loaded.timings {
                let name = match mode {
                    ExecMode::Sequential => "sequential",
                    ExecMode::Parallel => "parallel",
                };
                emit(out, &format!("{name}: {:.3} ms", t.as_secs_f64() * 1e3))?;
            }
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct WitnessDoc {
    display: String,
    nodes: Vec<String>,
    components: Vec<NodeRef>,
}

#[derive(Serialize)]
struct ReachDoc {
    schema: &'static str,
    seed: Option<u64>,
    query: Vec<(String, String)>,
    reachable: bool,
    witness: Option<WitnessDoc>,
    diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<TraceStep>>,
}

fn parse_query(a: &ReachArgs, sum: &SumMachine) -> Result<ReachQuery, Failure> {
    if let Some(text) = &a.query {
        return ReachQuery::from_json(&sum.spec, text).map_err(Failure::error);
    }
    if a.target.is_empty() {
        return Err(Failure::error("give --query or at least one --target MACHINE=STATE"));
    }
    let mut pairs = Vec::new();
    for t in &a.target {
        let (m, s) = t.split_once('=').ok_or_else(|| Failure::error(format!("target {t:?} is not MACHINE=STATE")))?;
        pairs.push((m.trim(), s.trim()));
    }
    ReachQuery::from_names(&sum.spec, pairs).map_err(Failure::error)
}

fn cmd_reach(a: &ReachArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let loaded = load(&a.input, err)?;
    let sum = &loaded.sum;
    let q = parse_query(a, sum)?;
    let mode = match a.certify {
        CertifyArg::Pairwise => CertifyMode::Pairwise,
        CertifyArg::Chain => CertifyMode::Chain,
        CertifyArg::ChainOnly => CertifyMode::ChainOnly,
    };
    let verdict =
        global_reachable(sum, &q, ReachOptions { mode, cap: a.cap, parallel: a.parallel }).map_err(Failure::error)?;
    let trace = match (&verdict.witness, a.trace) {
        (Some(w), true) => Some(materialize_configuration(sum, w).map_err(Failure::error)?),
        _ => None,
    };
    let doc = ReachDoc {
        schema: SCHEMA,
        seed: loaded.seed,
        query: q
            .targets
            .iter()
            .map(|(&i, &s)| (sum.spec.machines[i].name.clone(), sum.spec.machines[i].states[s].clone()))
            .collect(),
        reachable: verdict.reachable,
        witness: verdict.witness.as_ref().map(|w| WitnessDoc {
            display: w.display(sum),
            nodes: w.nodes().map(|r| sum.qualified_name(r)).collect(),
            components: w.nodes().collect(),
        }),
        diagnostics: verdict.diagnostics.clone(),
        trace,
    };
    match a.input.format {
        Format::Json => emit(out, &to_json(&doc))?,
        _ => {
            match &doc.witness {
                Some(w) => emit(out, &format!("reachable: {}", w.display))?,
                None => emit(out, "unreachable")?,
            }
            let d = &doc.diagnostics;
            emit(
                out,
                &format!(
                    "candidates k = {} (total {}), co checks {}, ancestor steps {}",
                    d.k_max, d.k_total, d.pairwise_checks, d.ancestor_steps
                ),
            )?;
            if d.chain_disagreement {
                emit(out, "chain certification disagrees with pairwise")?;
            }
            for step in doc.trace.iter().flatten() {
                let label = if step.action.is_empty() { "init" } else { step.action.as_str() };
                emit(out, &format!("  {label:>8}  {}", sum.spec.format_vector(&step.vector)))?;
            }
        }
    }
    Ok(if verdict.reachable { EXIT_OK } else { EXIT_NEGATIVE })
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let loaded = load(&a.input, err)?;
    let sum = &loaded.sum;
    let opts = CheckOptions { bound: a.bound, sample: a.sample, seed: loaded.seed.unwrap_or(0), chain: true };
    let report = cross_check(sum, &opts);
    match a.input.format {
        Format::Json => emit(out, &to_json(&report))?,
        _ => emit(out, &human_check(sum, &report))?,
    }
    Ok(if report.truncated {
        EXIT_BOUND
    } else if report.mismatches.is_empty() {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

fn human_check(sum: &SumMachine, r: &CheckReport) -> String {
    let mut lines = vec![
        format!("queries {}, reachable {}, mismatches {}", r.queries, r.reachable, r.mismatches.len()),
        format!(
            "size: product {} states / {} edges, sum {} nodes ({} cut-offs), d = {:.3}",
            r.sizes.product_states,
            r.sizes.product_edges,
            r.sizes.sum_nodes,
            r.sizes.sum_cutoffs,
            r.sizes.coupling_factor
        ),
    ];
    for m in &r.mismatches {
        lines.push(format!("  mismatch {}: sum {}, product {}", sum.spec.format_vector(&m.vector), m.sum, m.product));
    }
    if r.truncated {
        lines.push("product truncated: partial report".into());
    }
    if let Some(b) = &r.bisimulation {
        lines.push(format!(
            "bisimulation: {} ({} configurations, {} classes)",
            if b.passed() { "ok" } else { "violated" },
            b.configurations,
            b.classes
        ));
        lines.extend(b.violations.iter().map(|v| format!("  {v}")));
    }
    if let Some(d) = &r.deadlocks {
        lines.push(format!(
            "deadlocks: {} dead leaves, {} product deadlocks, {} unconfirmed, {} missed",
            d.dead_leaves,
            d.product_deadlocks,
            d.unconfirmed.len(),
            d.missed.len()
        ));
    }
    lines.push(format!("chain disagreements: {}", r.chain_disagreements.len()));
    for v in &r.chain_disagreements {
        lines.push(format!("  {}", sum.spec.format_vector(v)));
    }
    lines.join("\n")
}

#[derive(Serialize)]
struct EvalDoc {
    schema: &'static str,
    seed: Option<u64>,
    formula: String,
    machine: Option<String>,
    node: Option<String>,
    holds: bool,
    witness: Option<String>,
    oracle: Option<bool>,
}

fn node_arg(sum: &SumMachine, i: usize, text: &str) -> Result<NodeRef, Failure> {
    let (state, inst) = text.split_once('#').unwrap_or((text, "0"));
    let inst: usize = inst.parse().map_err(|_| Failure::error(format!("bad node {text:?}")))?;
    sum.find(i, state, inst).ok_or_else(|| Failure::error(format!("no node {text:?} in {}", sum.spec.machines[i].name)))
}

fn cdtl(e: CdtlError) -> Failure {
    Failure::error(e)
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let loaded = load(&a.input, err)?;
    let sum = &loaded.sum;
    let (doc, ctl) = if a.formula.trim_start().starts_with("conj-") {
        let g = GlobalForm::parse(sum, &a.formula).map_err(cdtl)?;
        let v = eval_global(sum, &g).map_err(cdtl)?;
        let doc = EvalDoc {
            schema: SCHEMA,
            seed: loaded.seed,
            formula: a.formula.trim().to_string(),
            machine: None,
            node: None,
            holds: v.holds,
            witness: v.witness.as_ref().map(|w| w.display(sum)),
            oracle: None,
        };
        (doc, g.to_ctl())
    } else {
        let name = a.machine.as_deref().ok_or_else(|| Failure::error("local formulas need --machine"))?;
        let i = sum.spec.machine_index(name).ok_or_else(|| Failure::error(format!("unknown machine {name:?}")))?;
        let f = parse_local(sum, i, &a.formula).map_err(cdtl)?;
        let node = match &a.node {
            Some(t) => node_arg(sum, i, t)?,
            None => sum.root(i),
        };
        if a.oracle && node != sum.root(i) {
            return Err(Failure::error("--oracle compares at the initial state only"));
        }
        let holds = eval_local(sum, node, &f).map_err(cdtl)?;
        let doc = EvalDoc {
            schema: SCHEMA,
            seed: loaded.seed,
            formula: f.to_string(),
            machine: Some(name.to_string()),
            node: Some(sum.node_name(node)),
            holds,
            witness: None,
            oracle: None,
        };
        let ctl = f.try_map(&mut |p| Ok::<_, CdtlError>((i, p))).map_err(cdtl)?;
        (doc, ctl)
    };
    let mut doc = doc;
    if a.oracle {
        let pm = build_product(&sum.spec, DEFAULT_BOUND);
        doc.oracle = Some(eval_ctl(&pm, &ctl).map_err(Failure::error)?);
    }
    match a.input.format {
        Format::Json => emit(out, &to_json(&doc))?,
        _ => {
            emit(out, &doc.holds.to_string())?;
            if let Some(w) = &doc.witness {
                emit(out, &format!("witness {w}"))?;
            }
            if let Some(o) = doc.oracle {
                emit(out, &format!("product: {o}"))?;
            }
        }
    }
    if doc.oracle.is_some_and(|o| o != doc.holds) {
        let _ = writeln!(err, "warning: sum machine and product machine disagree");
        return Ok(EXIT_DISAGREE);
    }
    Ok(if doc.holds { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Serialize)]
struct GenDoc {
    schema: &'static str,
    seed: u64,
    params: GenParams,
    sha256: String,
    system: String,
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Outcome {
    let params = GenParams {
        seed: a.seed,
        machines: a.machines,
        states: a.states,
        coupling: a.coupling,
        conflict_width: a.width,
    };
    let spec = generate(&params).map_err(Failure::error)?;
    let hash = spec_hash(&spec);
    let text = format!(
        "# seed {} machines {} states {} coupling {} width {}\n# sha256 {hash}\n{}",
        a.seed,
        a.machines,
        a.states,
        a.coupling,
        a.width,
        pretty_print(&spec)
    );
    if let Some(path) = &a.out {
        write_file(path, &text)?;
    }
    match a.format {
        Format::Json => {
            emit(out, &to_json(&GenDoc { schema: SCHEMA, seed: a.seed, params, sha256: hash, system: text }))?
        }
        _ if a.out.is_none() => emit(out, &text)?,
        _ => emit(out, &format!("sha256 {hash}"))?,
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DeadlockDoc {
    vector: String,
    configuration: Vec<String>,
    leaves: Vec<String>,
}

#[derive(Serialize)]
struct DeadlocksDoc {
    schema: &'static str,
    seed: Option<u64>,
    deadlocks: Vec<DeadlockDoc>,
}

fn cmd_deadlocks(a: &DeadlocksArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let loaded = load(&a.input, err)?;
    let sum = &loaded.sum;
    let deadlocks: Vec<DeadlockDoc> = list_deadlocks(sum)
        .into_iter()
        .map(|d| DeadlockDoc {
            vector: sum.spec.format_vector(&d.vector),
            configuration: d
                .configuration
                .iter()
                .enumerate()
                .map(|(k, &n)| sum.qualified_name(NodeRef::new(k, n)))
                .collect(),
            leaves: d.leaves.iter().map(|&r| sum.qualified_name(r)).collect(),
        })
        .collect();
    match a.input.format {
        Format::Json => emit(out, &to_json(&DeadlocksDoc { schema: SCHEMA, seed: loaded.seed, deadlocks }))?,
        _ if deadlocks.is_empty() => emit(out, "no dead leaves")?,
        _ => {
            for d in &deadlocks {
                emit(out, &format!("{} at ({}), dead: {}", d.vector, d.configuration.join(", "), d.leaves.join(", ")))?;
            }
        }
    }
    Ok(EXIT_OK)
}
