//! The `csm` command: validate systems, build reachability graphs, reduce
//! them and cross-check the reduction against the unreduced graph.

pub mod fixtures;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use csm_core::bisim::{check_bisimilar, check_theorem1, generate_corpus};
use csm_core::qsctl::{complete_props, parse_formula_file, PropSet, TF};
use csm_core::reducer::{audit, reduce_offline, reduce_online, Outcome, ReductionContext, ReductionReport};
use csm_core::rg::{
    build_rg, build_rg_minus_at, graph_to_json, strip_ears, to_dot, to_dot_annotated, Graph, RgError, DEFAULT_STATE_CAP,
};
use csm_core::system::{parse_system, CsmSystem, EnvironmentPolicy};

use crate::fixtures::Family;

#[derive(Debug, Parser)]
#[command(
    name = "csm",
    version,
    about = "CSM reachability graphs, QsCTL and invisibility-based reduction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that every automaton has one initial state and complete guards.
    Validate(SystemArgs),
    /// Build RG and RG-@ and print their sizes.
    Build(BuildArgs),
    /// Reduce RG-@ for the given formulas.
    Reduce(ReduceArgs),
    /// Compare formula verdicts and stuttering classes between RG-@ and the reduced graph.
    Diff(DiffArgs),
    /// Time the reducer on a parametric family and print CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    /// System description file.
    #[arg(long)]
    pub system: PathBuf,
    /// How external signals are driven: closed, all, or fixed:a,b,...
    #[arg(long, default_value = "closed")]
    pub env: String,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Give up after discovering this many global states.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    pub cap: usize,
    /// Write RG-@ as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write RG-@ as DOT.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReductionArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// One QsCTL formula per line.
    #[arg(long)]
    pub formula: PathBuf,
    /// Reduce while generating instead of reducing a prebuilt graph.
    #[arg(long)]
    pub online: bool,
    /// Allow exception v beyond direct successors.
    #[arg(long)]
    pub relaxed_v: bool,
    /// Repeat passes until nothing changes.
    #[arg(long)]
    pub fixpoint: bool,
    /// Give up after discovering this many global states.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    pub cap: usize,
    /// Drop the first atom from the reducer's proposition set.
    #[arg(long, hide = true)]
    pub fault_inject: bool,
    /// Apply the restrictions without the stutter-class check.
    #[arg(long, hide = true)]
    pub bare_rule: bool,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub reduction: ReductionArgs,
    /// Print every decision with its reason code.
    #[arg(long)]
    pub explain: bool,
    /// Write the reduction report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the reduced graph as JSON.
    #[arg(long)]
    pub graph_json: Option<PathBuf>,
    /// Write RG-@ as DOT with removed arcs and skipped states marked.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    #[command(flatten)]
    pub reduction: ReductionArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Maximum temporal nesting of generated formulas.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Number of generated formulas.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Write the diff report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Comma-separated instance sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Validation failed, the diff found mismatches or a cap was hit.
    Failure,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Failure => 1,
        }
    }
}

/// Runs a parsed command. Errors are usage, I/O or parse problems.
pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<Status> {
    match &cli.command {
        Command::Validate(args) => validate(args, out),
        Command::Build(args) => build(args, out),
        Command::Reduce(args) => reduce(args, out),
        Command::Diff(args) => diff(args, out),
        Command::Bench(args) => bench(args, out),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn parse_env(spec: &str, sys: &CsmSystem) -> anyhow::Result<EnvironmentPolicy> {
    match spec {
        "closed" => Ok(EnvironmentPolicy::Closed),
        "all" => Ok(EnvironmentPolicy::AllSubsets),
        _ => {
            let Some(list) = spec.strip_prefix("fixed:") else {
                bail!("unknown environment `{spec}` (expected closed, all or fixed:a,b)");
            };
            let mut set = BTreeSet::new();
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match sys.alphabet.lookup(name) {
                    Some(id) => {
                        set.insert(id);
                    }
                    None => bail!("unknown signal `{name}` in environment"),
                }
            }
            Ok(EnvironmentPolicy::Fixed(set))
        }
    }
}

fn load_system(args: &SystemArgs) -> anyhow::Result<CsmSystem> {
    let sys = parse_system(&read(&args.system)?).with_context(|| format!("in {}", args.system.display()))?;
    let env = parse_env(&args.env, &sys)?;
    Ok(sys.with_environment(env)?)
}

fn load_formulas(path: &Path, sys: &CsmSystem) -> anyhow::Result<Vec<TF>> {
    parse_formula_file(&read(path)?, sys).with_context(|| format!("in {}", path.display()))
}

/// Prints semantic graph-construction failures and maps them to [`Status::Failure`].
fn graph_or_fail(result: Result<Graph, RgError>, out: &mut dyn Write) -> anyhow::Result<Option<Graph>> {
    match result {
        Ok(g) => Ok(Some(g)),
        Err(e) => {
            writeln!(out, "error: {e}")?;
            Ok(None)
        }
    }
}

fn validate(args: &SystemArgs, out: &mut dyn Write) -> anyhow::Result<Status> {
    let sys = load_system(args)?;
    let report = sys.validate();
    write!(out, "{report}")?;
    Ok(if report.passed() {
        writeln!(out, "ok")?;
        Status::Success
    } else {
        writeln!(out, "incomplete: {}", report.incomplete_states().join(", "))?;
        Status::Failure
    })
}

fn build(args: &BuildArgs, out: &mut dyn Write) -> anyhow::Result<Status> {
    let sys = load_system(&args.system)?;
    let Some(rg) = graph_or_fail(build_rg(&sys, args.cap), out)? else {
        return Ok(Status::Failure);
    };
    let stripped = strip_ears(&rg);
    writeln!(out, "RG: {} states, {} arcs", rg.len(), rg.arc_count())?;
    writeln!(out, "RG-@: {} states, {} arcs", stripped.len(), stripped.arc_count())?;
    if let Some(path) = &args.json {
        write_json(path, &graph_to_json(&stripped, &sys, None))?;
    }
    if let Some(path) = &args.dot {
        write_file(path, &to_dot(&stripped, &sys))?;
    }
    Ok(Status::Success)
}

struct Prepared {
    sys: CsmSystem,
    props: PropSet,
    ctx: ReductionContext,
}

fn prepare(args: &ReductionArgs) -> anyhow::Result<Prepared> {
    let sys = load_system(&args.system)?;
    let formulas = load_formulas(&args.formula, &sys)?;
    let props = complete_props(&formulas, &sys);
    let reducer_props = if args.fault_inject && !props.atoms().is_empty() {
        props.without_atoms(&[0])
    } else {
        props.clone()
    };
    let mut ctx = ReductionContext::new(reducer_props);
    ctx.relaxed_v = args.relaxed_v;
    ctx.fixpoint = args.fixpoint;
    ctx.stutter_guard = !args.bare_rule;
    Ok(Prepared { sys, props, ctx })
}

/// Runs the configured reduction; returns RG-@ (when built), the reduced graph and its report.
fn run_reduction(
    args: &ReductionArgs,
    p: &Prepared,
    out: &mut dyn Write,
) -> anyhow::Result<Option<(Option<Graph>, Graph, ReductionReport)>> {
    if args.online {
        match reduce_online(&p.sys, &p.ctx, args.cap) {
            Ok((g, report)) => Ok(Some((None, g, report))),
            Err(e) => {
                writeln!(out, "error: {e}")?;
                Ok(None)
            }
        }
    } else {
        let Some(full) = graph_or_fail(build_rg_minus_at(&p.sys, args.cap), out)? else {
            return Ok(None);
        };
        let (g, report) = reduce_offline(&full, &p.ctx);
        Ok(Some((Some(full), g, report)))
    }
}

fn print_summary(report: &ReductionReport, out: &mut dyn Write) -> anyhow::Result<()> {
    writeln!(
        out,
        "reduction allowed: {}",
        if report.reduction_allowed { "yes" } else { "no" }
    )?;
    for note in &report.notes {
        writeln!(out, "note: {note}")?;
    }
    writeln!(
        out,
        "before: {} states, {} arcs",
        report.states_before, report.arcs_before
    )?;
    writeln!(out, "after: {} states, {} arcs", report.states_after, report.arcs_after)?;
    writeln!(out, "skipped states: {}", report.skipped_states.len())?;
    writeln!(out, "ratio: {:.4}", report.reduction_ratio)?;
    Ok(())
}

fn reduce(args: &ReduceArgs, out: &mut dyn Write) -> anyhow::Result<Status> {
    let p = prepare(&args.reduction)?;
    let Some((full, reduced, mut report)) = run_reduction(&args.reduction, &p, out)? else {
        return Ok(Status::Failure);
    };
    print_summary(&report, out)?;
    if args.explain {
        for d in &report.decisions {
            let outcome = match d.outcome {
                Outcome::Skipped => "skip",
                Outcome::Kept => "keep",
                Outcome::Mixed => "mixed",
            };
            let reason = d.reason().map_or("-", |r| r.code());
            writeln!(
                out,
                "{} -> {} wave {}: {outcome} ({reason})",
                d.root.display(&p.sys),
                d.candidate.display(&p.sys),
                d.wave
            )?;
        }
    } else {
        report.decisions.clear();
    }
    if let Some(path) = &args.json {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.graph_json {
        write_json(path, &graph_to_json(&reduced, &p.sys, Some(&p.props)))?;
    }
    if let Some(path) = &args.dot {
        let dot = match &full {
            Some(full) => to_dot_annotated(full, &reduced, &p.sys),
            None => to_dot(&reduced, &p.sys),
        };
        write_file(path, &dot)?;
    }
    Ok(Status::Success)
}

fn diff(args: &DiffArgs, out: &mut dyn Write) -> anyhow::Result<Status> {
    let p = prepare(&args.reduction)?;
    let Some((full, reduced, report)) = run_reduction(&args.reduction, &p, out)? else {
        return Ok(Status::Failure);
    };
    let full = match full {
        Some(g) => g,
        None => match graph_or_fail(build_rg_minus_at(&p.sys, args.reduction.cap), out)? {
            Some(g) => g,
            None => return Ok(Status::Failure),
        },
    };
    let corpus = generate_corpus(&p.props, &full, args.depth, args.seed, args.count);
    let d = check_theorem1(&full, &reduced, &p.sys, &corpus);
    let b = check_bisimilar(&full, &reduced, &p.props);
    let a = audit(&full, &reduced, &report, &p.props);
    writeln!(
        out,
        "graphs: {} -> {} states, {} -> {} arcs",
        full.len(),
        reduced.len(),
        full.arc_count(),
        reduced.arc_count()
    )?;
    writeln!(
        out,
        "formulas: {}, mismatches: {}, states compared: {}",
        d.verdicts.len(),
        d.mismatches,
        d.states_compared
    )?;
    for v in d.verdicts.iter().filter(|v| !v.matches) {
        writeln!(out, "mismatch: {}", v.formula)?;
        if let Some(e) = &v.error {
            writeln!(out, "  error: {e}")?;
        }
        if !v.differing_states.is_empty() {
            writeln!(out, "  at: {}", v.differing_states.join(", "))?;
        }
    }
    if b.bisimilar {
        writeln!(out, "stuttering bisimulation: ok ({} classes)", b.blocks)?;
    } else {
        let witness: Vec<String> = b.witness.iter().map(|s| s.display(&p.sys).to_string()).collect();
        writeln!(out, "stuttering bisimulation: FAILED at {}", witness.join(", "))?;
    }
    writeln!(out, "audit: {}", if a.is_clean() { "clean" } else { "FAILED" })?;
    if let Some(path) = &args.json {
        write_json(path, &d)?;
    }
    Ok(if d.mismatches == 0 {
        Status::Success
    } else {
        Status::Failure
    })
}

/// One measured instance of a bench family.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub states: usize,
    pub arcs: usize,
    pub seconds: f64,
    pub ratio: f64,
}

/// Builds the instance, then times offline reduction (mean over enough runs
/// to cover at least 20 ms).
pub fn bench_row(family: Family, n: usize) -> anyhow::Result<BenchRow> {
    let (sys, formulas) = family.build(n).load()?;
    let full = build_rg_minus_at(&sys, DEFAULT_STATE_CAP)?;
    let ctx = ReductionContext::new(complete_props(&formulas, &sys));
    let mut runs = 0u32;
    let mut ratio = 1.0;
    let start = Instant::now();
    while runs == 0 || start.elapsed() < Duration::from_millis(20) {
        let (_, report) = reduce_offline(&full, &ctx);
        ratio = report.reduction_ratio;
        runs += 1;
    }
    Ok(BenchRow {
        n,
        states: full.len(),
        arcs: full.arc_count(),
        seconds: start.elapsed().as_secs_f64() / f64::from(runs),
        ratio,
    })
}

fn bench(args: &BenchArgs, out: &mut dyn Write) -> anyhow::Result<Status> {
    writeln!(out, "n,states,arcs,reduce_seconds,ratio")?;
    for &n in args.sizes.iter().filter(|&&n| n > 0) {
        let row = bench_row(args.family, n)?;
        writeln!(
            out,
            "{},{},{},{:.9},{:.6}",
            row.n, row.states, row.arcs, row.seconds, row.ratio
        )?;
    }
    Ok(Status::Success)
}

#[cfg(test)]
mod tests {
    use super::*;
    use csm_core::system::parse_system;

    #[test]
    fn env_specs() {
        let sys = parse_system(&fixtures::two_by_two().system).unwrap();
        assert_eq!(parse_env("closed", &sys).unwrap(), EnvironmentPolicy::Closed);
        assert_eq!(parse_env("all", &sys).unwrap(), EnvironmentPolicy::AllSubsets);
        let p = sys.alphabet.lookup("p").unwrap();
        assert_eq!(
            parse_env("fixed:p", &sys).unwrap(),
            EnvironmentPolicy::Fixed([p].into_iter().collect())
        );
        assert!(parse_env("fixed:zz", &sys).is_err());
        assert!(parse_env("open", &sys).is_err());
    }

    #[test]
    fn bench_rows_grow() {
        let a = bench_row(Family::Chain, 4).unwrap();
        assert_eq!((a.states, a.arcs), (5, 5));
        assert!(a.seconds > 0.0);
        assert!(a.ratio > 1.0);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
