//! Command-line driver for the cluster simulator: p2p and collective
//! bandwidth sweeps plus the balanced-training report, written as CSV.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hetccl_core::balancer::{ModelDesc, ZeroStage};
use hetccl_core::collectives::CollectiveOp;
use hetccl_core::sweep::{
    collective_csv, p2p_csv, run_collective_sweep, run_p2p_sweep, run_train_sim, train_csv,
    Scenario, SweepError, SweepSpec,
};
use hetccl_core::topology::ClusterTopology;

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

/// Deterministic bandwidth sweeps and training simulation for a mixed
/// cuda-like / hip-like cluster.
#[derive(Parser, Debug)]
#[command(name = "hetccl-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Point-to-point bandwidth sweep over transfer sizes.
    P2p(P2pArgs),
    /// Collective bus-bandwidth sweep over world sizes.
    Coll(CollArgs),
    /// Balanced-training simulation report.
    Train(TrainArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Cluster topology JSON; defaults to the built-in four-node cluster.
    #[arg(long, value_name = "FILE")]
    topology: Option<PathBuf>,

    /// Cluster slice to exercise: homoA, homoB, or het.
    #[arg(long, default_value = "het", value_parser = parse_scenario)]
    scenario: Scenario,

    /// Seed for the randomized payload self-checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct P2pArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Transfer sizes as START:END:xFACTOR (default 1024:1073741824:x2).
    #[arg(long, value_parser = parse_sizes, value_name = "RANGE")]
    sizes: Option<SizeList>,

    /// Skip registered-memory transfers; emit only host-staged rows.
    #[arg(long)]
    no_rdma: bool,

    /// Output CSV path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CollArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Operations: "all" or a comma list (all_reduce,broadcast,...).
    #[arg(long, default_value = "all", value_parser = parse_ops)]
    ops: OpList,

    /// World sizes; defaults to 2,4,8 (homo) or 8,12,16 (het).
    #[arg(long, value_delimiter = ',', value_name = "N,...")]
    world: Option<Vec<usize>>,

    /// Payload bytes per rank.
    #[arg(long, default_value_t = 1 << 20, value_name = "BYTES")]
    size: u64,

    /// Output CSV path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Preset name (gpt-125m, gpt-355m, llama-1b, llama-3b) or a JSON file.
    #[arg(long, value_name = "NAME|FILE")]
    model: String,

    /// Optimizer sharding stage: none, 1, or 3.
    #[arg(long, default_value = "1", value_parser = parse_zero)]
    zero: ZeroStage,

    /// Speed-proportional micro-batch balancing: on or off.
    #[arg(long, default_value = "on", value_parser = parse_balance, action = clap::ArgAction::Set)]
    balance: bool,

    /// Profiling warm-up steps (at least 1).
    #[arg(long, default_value_t = 3)]
    warmup: usize,

    /// Optional CSV path; the report always prints to stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct OpList(Vec<CollectiveOp>);

#[derive(Debug, Clone)]
struct SizeList(Vec<u64>);

fn parse_scenario(value: &str) -> Result<Scenario, String> {
    Scenario::parse(value).ok_or_else(|| format!("unknown scenario {value:?} (homoA, homoB, het)"))
}

fn parse_zero(value: &str) -> Result<ZeroStage, String> {
    ZeroStage::parse(value).ok_or_else(|| format!("unknown stage {value:?} (none, 1, 3)"))
}

fn parse_balance(value: &str) -> Result<bool, String> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

fn parse_ops(value: &str) -> Result<OpList, String> {
    if value == "all" {
        return Ok(OpList(CollectiveOp::ALL.to_vec()));
    }
    value
        .split(',')
        .map(|name| {
            CollectiveOp::parse(name).ok_or_else(|| format!("unknown collective {name:?}"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(OpList)
}

fn parse_sizes(value: &str) -> Result<SizeList, String> {
    let parts: Vec<&str> = value.split(':').collect();
    let bad = || format!("expected START:END:xFACTOR, got {value:?}");
    if parts.len() != 3 {
        return Err(bad());
    }
    let factor_text = parts[2].strip_prefix('x').ok_or_else(bad)?;
    let start: u64 = parts[0].parse().map_err(|_| bad())?;
    let end: u64 = parts[1].parse().map_err(|_| bad())?;
    let factor: u64 = factor_text.parse().map_err(|_| bad())?;
    if start == 0 || end < start || factor < 2 {
        return Err(format!(
            "need START >= 1, END >= START, FACTOR >= 2 in {value:?}"
        ));
    }
    let mut sizes = Vec::new();
    let mut size = start;
    while size <= end {
        sizes.push(size);
        match size.checked_mul(factor) {
            Some(next) => size = next,
            None => break,
        }
    }
    Ok(SizeList(sizes))
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

enum CliError {
    Config(String),
    SelfCheck(String),
}

impl From<SweepError> for CliError {
    fn from(err: SweepError) -> CliError {
        match err {
            SweepError::SelfCheckFailed { .. } => CliError::SelfCheck(err.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn load_topology(path: Option<&PathBuf>) -> Result<ClusterTopology, CliError> {
    match path {
        None => Ok(ClusterTopology::builtin()),
        Some(path) => ClusterTopology::from_file(path)
            .map_err(|err| CliError::Config(format!("{}: {err}", path.display()))),
    }
}

/// Resolve `--model`: a preset name, otherwise a JSON file on disk.
fn load_model(value: &str) -> Result<(String, ModelDesc), CliError> {
    if let Some(model) = ModelDesc::preset(value) {
        return Ok((value.to_string(), model));
    }
    let path = PathBuf::from(value);
    let text = fs::read_to_string(&path).map_err(|err| {
        CliError::Config(format!(
            "{value:?} is neither a preset ({}) nor a readable file: {err}",
            ModelDesc::PRESET_NAMES.join(", ")
        ))
    })?;
    let model: ModelDesc = serde_json::from_str(&text)
        .map_err(|err| CliError::Config(format!("{}: {err}", path.display())))?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("custom")
        .to_string();
    Ok((label, model))
}

fn write_out(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|err| CliError::Config(format!("{}: {err}", path.display())))
}

fn run_p2p(args: &P2pArgs) -> Result<(), CliError> {
    let topology = load_topology(args.common.topology.as_ref())?;
    let mut spec = SweepSpec::p2p(args.common.scenario);
    if let Some(sizes) = &args.sizes {
        spec.sizes = sizes.0.clone();
    }
    spec.include_rdma = !args.no_rdma;
    spec.seed = args.common.seed;
    let rows = run_p2p_sweep(&topology, &spec)?;
    write_out(&args.out, &p2p_csv(&rows))?;
    println!("wrote {} p2p rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn run_coll(args: &CollArgs) -> Result<(), CliError> {
    let topology = load_topology(args.common.topology.as_ref())?;
    let mut spec = SweepSpec::collective(args.common.scenario);
    spec.ops = args.ops.0.clone();
    if let Some(world) = &args.world {
        if world.is_empty() || world.contains(&0) {
            return Err(CliError::Config("world sizes must be at least 1".into()));
        }
        spec.world_sizes = world.clone();
    }
    spec.sizes = vec![args.size];
    spec.seed = args.common.seed;
    let rows = run_collective_sweep(&topology, &spec)?;
    write_out(&args.out, &collective_csv(&rows))?;
    println!("wrote {} collective rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<(), CliError> {
    if args.warmup < 1 {
        return Err(CliError::Config("profiling needs at least one warm-up step".into()));
    }
    let topology = load_topology(args.common.topology.as_ref())?;
    let (label, model) = load_model(&args.model)?;
    let report = run_train_sim(
        &topology,
        &label,
        &model,
        args.zero,
        args.common.scenario,
        args.balance,
        args.warmup,
    )?;
    println!(
        "model {}  zero {}  scenario {}  balance {}",
        report.model,
        report.stage.name(),
        report.scenario.name(),
        if report.balanced { "on" } else { "off" }
    );
    println!("throughput:         {} tokens/s", report.throughput);
    println!("speedup vs uniform: {}", report.speedup_vs_uniform);
    match report.efficiency {
        Some(eff) => println!("efficiency:         {eff}"),
        None => println!("efficiency:         n/a (single-vendor run)"),
    }
    println!("profiling overhead: {} virtual s", report.profiling_overhead);
    if let Some(out) = &args.out {
        write_out(out, &train_csv(&report))?;
        println!("wrote report to {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version surface here as non-error exits.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::P2p(args) => run_p2p(args),
        Command::Coll(args) => run_coll(args),
        Command::Train(args) => run_train(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::SelfCheck(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_ranges_expand_geometrically() {
        assert_eq!(parse_sizes("1024:8192:x2").unwrap().0, vec![1024, 2048, 4096, 8192]);
        assert_eq!(parse_sizes("1000:9000:x3").unwrap().0, vec![1000, 3000, 9000]);
        assert!(parse_sizes("0:1024:x2").is_err());
        assert!(parse_sizes("1024:512:x2").is_err());
        assert!(parse_sizes("1024:2048:x1").is_err());
        assert!(parse_sizes("1024:2048").is_err());
        assert!(parse_sizes("1024:2048:2").is_err());
    }

    #[test]
    fn op_lists_accept_all_and_subsets() {
        assert_eq!(parse_ops("all").unwrap().0.len(), 6);
        let subset = parse_ops("all_reduce,broadcast").unwrap().0;
        assert_eq!(subset, vec![CollectiveOp::AllReduce, CollectiveOp::Broadcast]);
        assert!(parse_ops("all_reduce,").is_err());
        assert!(parse_ops("gather").is_err());
    }

    #[test]
    fn cli_grammar_parses_the_documented_invocations() {
        Cli::try_parse_from([
            "hetccl-sim", "p2p", "--scenario", "het", "--out", "p2p.csv", "--sizes",
            "1024:1073741824:x2", "--no-rdma",
        ])
        .unwrap();
        Cli::try_parse_from([
            "hetccl-sim", "coll", "--ops", "all", "--world", "2,4,8,12,16", "--scenario",
            "homoA", "--out", "coll.csv", "--seed", "7",
        ])
        .unwrap();
        Cli::try_parse_from([
            "hetccl-sim", "train", "--model", "llama-1b", "--zero", "3", "--balance", "on",
        ])
        .unwrap();
        assert!(Cli::try_parse_from(["hetccl-sim", "p2p"]).is_err(), "--out is required");
        assert!(Cli::try_parse_from(["hetccl-sim", "warble"]).is_err());
    }
}
