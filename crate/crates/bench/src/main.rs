use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hpcdag::alloc::{allocate_taskset, cpdag_reduction, verify_allocation, AllocOutcome, AllocParams, Allocation};
use hpcdag::expand::enumerate_concretes;
use hpcdag::gen::{gen_taskset, GenConfig};
use hpcdag::io::TaskSetFile;
use hpcdag::model::{tag, Architecture, ConcreteTask};
use hpcdag::timing::PreemptionScheme;
use hpcdag_bench::{emit_dat, emit_preemption_dat, run_preemption_experiment, run_sweep, SweepConfig};
use hpcdag_ttable::{
    build_ilp, construct_timetable, export_lp, validate_timetable, Construction, Method, SolverConfig, TimeTable,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hpcdag", version, about = "Allocation, analysis and time tables for heterogeneous DAG task sets")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random task set.
    Gen(GenArgs),
    /// Re-check an allocation against its task set.
    Analyze(AnalyzeArgs),
    /// Allocate a task set onto the engines.
    Alloc(AllocArgs),
    /// Build a static time table (or export its ILP).
    Ttbuild(TtbuildArgs),
    /// Validate a time table or an allocation.
    Validate(ValidateArgs),
    /// Run the utilization sweep and write .dat tables.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Xavier,
    Pegasus,
}

impl Preset {
    fn build(self) -> Architecture {
        match self {
            Preset::Xavier => Architecture::xavier(),
            Preset::Pegasus => Architecture::pegasus(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Max,
    Reduced,
}

impl From<Scheme> for PreemptionScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Max => PreemptionScheme::Max,
            Scheme::Reduced => PreemptionScheme::Reduced,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Global,
    Partitioned,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "xavier")]
    arch: Preset,
    /// Generator settings as JSON; utilization targets below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Utilization step: every tag gets `index * m_tag / steps`.
    #[arg(long, default_value_t = 8)]
    index: usize,
    #[arg(long, default_value_t = 16)]
    steps: usize,
    /// Explicit per-tag target, e.g. `CPU=3.5`; repeatable.
    #[arg(long = "util", value_parser = parse_target)]
    utils: Vec<(String, f64)>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct HeuristicArgs {
    #[arg(long, default_value = "BRF-P")]
    heuristic: String,
    #[arg(long, value_enum, default_value = "reduced")]
    scheme: Scheme,
    /// Analyse DLA/PVA with non-preemptive blocking instead of chunks.
    #[arg(long)]
    blocking: bool,
}

impl HeuristicArgs {
    fn params(&self, seed: u64) -> Result<AllocParams> {
        let mut p: AllocParams = self.heuristic.parse()?;
        p.chunked = !self.blocking;
        Ok(p.with_scheme(self.scheme.into()).with_seed(seed))
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    taskset: PathBuf,
    allocation: PathBuf,
    #[command(flatten)]
    heuristic: HeuristicArgs,
}

#[derive(Args)]
struct AllocArgs {
    taskset: PathBuf,
    #[command(flatten)]
    heuristic: HeuristicArgs,
    /// Fix one random concrete task per spec first.
    #[arg(long)]
    cp_dag: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TtbuildArgs {
    taskset: PathBuf,
    #[arg(long, value_enum, default_value = "global")]
    method: MethodArg,
    #[arg(long, default_value_t = 3)]
    max_it: u32,
    /// Write the model of iteration `--max-it` in LP format instead of solving.
    #[arg(long)]
    export_lp: Option<PathBuf>,
    #[arg(long, default_value_t = SolverConfig::default().node_budget)]
    node_budget: usize,
    #[arg(long, default_value_t = SolverConfig::default().binary_cap)]
    binary_cap: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    taskset: PathBuf,
    #[arg(long, conflicts_with = "allocation", required_unless_present = "allocation")]
    table: Option<PathBuf>,
    #[arg(long)]
    allocation: Option<PathBuf>,
    #[command(flatten)]
    heuristic: HeuristicArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep settings as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    serial: bool,
    /// Run BRF-P under both charging schemes and write preemp.dat.
    #[arg(long)]
    preemption: bool,
}

fn parse_target(text: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = text.split_once('=').ok_or("expected TAG=VALUE")?;
    let value: f64 = value.parse().map_err(|e| format!("{value}: {e}"))?;
    Ok((name.to_string(), value))
}

fn write_out(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_taskset(path: &Path) -> Result<TaskSetFile> {
    TaskSetFile::read(path).with_context(|| format!("reading task set {}", path.display()))
}

/// Verdict of a command: `Ok(true)` exits 0, `Ok(false)` exits 1.
fn run(cli: Cli) -> Result<bool> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen(args) => {
            let arch = args.arch.build();
            let mut cfg: GenConfig = match &args.config {
                Some(path) => read_json(path)?,
                None => GenConfig::default(),
            };
            if args.utils.is_empty() {
                if args.steps == 0 || args.index > args.steps {
                    bail!("--index must lie in 0..={}", args.steps);
                }
                let sweep = SweepConfig { arch: arch.clone(), steps: args.steps, ..Default::default() };
                if args.config.is_none() || cfg.utilization.is_empty() {
                    cfg.utilization = sweep.targets(args.index);
                }
            } else {
                cfg.utilization = args.utils.iter().map(|(t, u)| (tag(t), *u)).collect();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tasks = gen_taskset(&arch, &cfg, &mut rng)?;
            let mut file = TaskSetFile::new(arch, tasks);
            file.meta = Some(serde_json::json!({ "seed": seed, "generator": cfg }));
            write_out(args.output.as_deref(), &file.to_json()?)?;
            Ok(true)
        }
        Command::Alloc(args) => {
            let file = read_taskset(&args.taskset)?;
            let params = args.heuristic.params(seed)?;
            let specs = if args.cp_dag {
                cpdag_reduction(&file.tasks, &mut ChaCha8Rng::seed_from_u64(seed))?
            } else {
                file.tasks.clone()
            };
            let outcome = allocate_taskset(&specs, &file.architecture, &params)?;
            write_out(args.output.as_deref(), &to_json(outcome.allocation())?)?;
            match &outcome {
                AllocOutcome::Success(_) => eprintln!("{}: schedulable", params.name()),
                AllocOutcome::Fail { task, .. } => eprintln!("{}: task {task} could not be placed", params.name()),
            }
            Ok(outcome.is_success())
        }
        Command::Analyze(args) => {
            let file = read_taskset(&args.taskset)?;
            let alloc: Allocation = read_json(&args.allocation)?;
            report_allocation(&file, &alloc, &args.heuristic.params(seed)?)
        }
        Command::Ttbuild(args) => {
            let file = read_taskset(&args.taskset)?;
            let tasks = first_concretes(&file)?;
            let method = match args.method {
                MethodArg::Global => Method::Global,
                MethodArg::Partitioned => Method::Partitioned,
            };
            if let Some(path) = &args.export_lp {
                let model = build_ilp(&tasks, &file.architecture, args.max_it, method)?;
                fs::write(path, export_lp(&model)).with_context(|| format!("writing {}", path.display()))?;
                return Ok(true);
            }
            let solver = SolverConfig { binary_cap: args.binary_cap, node_budget: args.node_budget, maximise: true };
            match construct_timetable(&tasks, &file.architecture, method, args.max_it, &solver)? {
                Construction::Success(table) => {
                    eprintln!("time table found at iteration {}", table.iteration);
                    write_out(args.output.as_deref(), &to_json(&table)?)?;
                    Ok(true)
                }
                Construction::Fail { iterations, reason } => {
                    eprintln!("FAIL after {iterations} iteration(s): {reason}");
                    Ok(false)
                }
            }
        }
        Command::Validate(args) => {
            let file = read_taskset(&args.taskset)?;
            if let Some(path) = &args.table {
                let table: TimeTable = read_json(path)?;
                let tasks = first_concretes(&file)?;
                match validate_timetable(&table, &tasks, &file.architecture) {
                    Ok(()) => {
                        println!("table valid: {} reservations", table.reservations.len());
                        Ok(true)
                    }
                    Err(v) => {
                        println!("table invalid: {v}");
                        Ok(false)
                    }
                }
            } else {
                let path = args.allocation.as_ref().expect("clap requires one of --table and --allocation");
                let alloc: Allocation = read_json(path)?;
                report_allocation(&file, &alloc, &args.heuristic.params(seed)?)
            }
        }
        Command::Sweep(args) => {
            let mut cfg: SweepConfig = match &args.config {
                Some(path) => read_json(path)?,
                None => SweepConfig::default(),
            };
            cfg.seed = seed;
            if let Some(runs) = args.runs {
                cfg.runs = runs;
            }
            if let Some(steps) = args.steps {
                cfg.steps = steps;
            }
            if args.serial {
                cfg.parallel = false;
            }
            if cfg.steps == 0 {
                bail!("steps must be positive");
            }
            if args.preemption {
                let table = run_preemption_experiment(&cfg);
                emit_preemption_dat(&table, &args.out)?;
            } else {
                let result = run_sweep(&cfg);
                emit_dat(&result, &args.out)?;
                if result.recheck_failures > 0 {
                    eprintln!("{} re-checked allocations failed", result.recheck_failures);
                    return Ok(false);
                }
            }
            eprintln!("tables written to {}", args.out.display());
            Ok(true)
        }
    }
}

/// Time tables are built for the first concrete task of every spec.
fn first_concretes(file: &TaskSetFile) -> Result<Vec<ConcreteTask>> {
    file.tasks
        .iter()
        .map(|spec| {
            enumerate_concretes(spec)?.into_iter().next().with_context(|| format!("task {} has no concrete task", spec.id))
        })
        .collect()
}

fn report_allocation(file: &TaskSetFile, alloc: &Allocation, params: &AllocParams) -> Result<bool> {
    let mut problems = verify_allocation(alloc, &file.architecture, params)?;
    for spec in &file.tasks {
        if alloc.concrete(spec.id).is_none() {
            problems.push(format!("task {} has no concrete task in the allocation", spec.id));
        }
    }
    for task in &alloc.unallocated {
        problems.push(format!("task {task} is unallocated"));
    }
    if problems.is_empty() {
        println!("schedulable");
        return Ok(true);
    }
    println!("not schedulable");
    for p in problems {
        println!("  {p}");
    }
    Ok(false)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
