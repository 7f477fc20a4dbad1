//! `popproto` — seeded population-protocol runs, sweeps, scaling fits and
//! statistics on tree graphs.
//!
//! Exit codes: 0 on success, 2 on invalid parameters, 3 on fit failure.
//! `POPPROTO_THREADS` bounds seed-level parallelism.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use popproto::engine::{TraceConfig, TraceLevel};
use popproto::experiment::{self, ExperimentSpec};
use popproto::{
    Candidates, Error, GraphDescriptor, InitMode, InitSpec, MajorityInputs, ProtocolStack,
    RunSettings, Runner, Tail,
};

#[derive(Parser)]
#[command(name = "popproto", version, about = "Population protocols on trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one graph point for one or more seeds.
    Run(RunArgs),
    /// Sweep a graph family over several sizes.
    Sweep(SweepArgs),
    /// Fit a log-log scaling slope to a JSONL record file.
    Fit(FitArgs),
    /// Summarize a JSONL record file.
    Stats(StatsArgs),
}

#[derive(Args)]
struct StackArgs {
    /// coloring | orientation | leader | majority | two-colour | count | full
    #[arg(long)]
    stack: String,
    /// clean | random (self-stabilisation start)
    #[arg(long, default_value = "clean")]
    init: String,
    /// Majority inputs: alternating | all-a | all-b | first-a=K
    #[arg(long, default_value = "alternating")]
    inputs: String,
    /// Leader candidates: all | comma-separated node ids
    #[arg(long, default_value = "all")]
    candidates: String,
    /// Root used to pre-orient app-only stacks
    #[arg(long, default_value_t = 0)]
    root: u32,
    /// Step cap (default: 50·n²·⌈log2 n⌉)
    #[arg(long)]
    cap: Option<u64>,
    /// Verification tail in steps past first-hold
    /// (default: max(10·n·diameter, 10^5))
    #[arg(long)]
    tail: Option<u64>,
}

impl StackArgs {
    fn stack(&self) -> Result<ProtocolStack, Error> {
        ProtocolStack::by_name(&self.stack)
    }

    fn init(&self) -> Result<InitSpec, Error> {
        let mode = match self.init.as_str() {
            "clean" => InitMode::Clean,
            "random" => InitMode::Random,
            other => return Err(Error::invalid(format!("unknown init mode '{other}'"))),
        };
        let majority_inputs = match self.inputs.as_str() {
            "alternating" => MajorityInputs::Alternating,
            "all-a" => MajorityInputs::AllA,
            "all-b" => MajorityInputs::AllB,
            other => match other.strip_prefix("first-a=") {
                Some(k) => MajorityInputs::FirstA(
                    k.parse()
                        .map_err(|_| Error::invalid(format!("bad input count '{k}'")))?,
                ),
                None => return Err(Error::invalid(format!("unknown inputs '{other}'"))),
            },
        };
        let leader_candidates = if self.candidates == "all" {
            Candidates::All
        } else {
            let nodes = self
                .candidates
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<u32>, _>>()
                .map_err(|_| Error::invalid(format!("bad candidate list '{}'", self.candidates)))?;
            Candidates::Nodes(nodes)
        };
        Ok(InitSpec {
            mode,
            majority_inputs,
            leader_candidates,
            preorient_root: self.root,
        })
    }

    fn tail(&self) -> Tail {
        match self.tail {
            Some(k) => Tail::Steps(k),
            None => Tail::Default,
        }
    }
}

#[derive(Args)]
struct FamilyArgs {
    /// path | star | balanced-binary | random | tnk | file
    #[arg(long)]
    family: Option<String>,
    /// Degree cap for the random family
    #[arg(long, default_value_t = 3)]
    delta: usize,
    /// Generator seed for the random family
    #[arg(long, default_value_t = 0)]
    graph_seed: u64,
    /// Path-length parameter for the tnk family (default n/8)
    #[arg(long)]
    k: Option<usize>,
}

impl FamilyArgs {
    fn descriptor_for(&self, n: usize) -> Result<GraphDescriptor, Error> {
        let family = self.family.as_deref().unwrap_or("path");
        Ok(match family {
            "path" => GraphDescriptor::Path { n },
            "star" => GraphDescriptor::Star { n },
            "balanced-binary" => GraphDescriptor::BalancedBinary { n },
            "random" => GraphDescriptor::RandomBoundedDegree {
                n,
                delta_cap: self.delta,
                seed: self.graph_seed,
            },
            "tnk" => GraphDescriptor::LowerBoundTnk { n, k: self.k.unwrap_or(n / 8) },
            other => return Err(Error::invalid(format!("unknown graph family '{other}'"))),
        })
    }
}

#[derive(Args)]
struct GraphArgs {
    /// Path to a graph-descriptor JSON file (alternative to family flags)
    #[arg(long)]
    graph: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    /// Node count
    #[arg(long)]
    n: Option<usize>,
    /// Edge-list file for the file family
    #[arg(long)]
    graph_file: Option<PathBuf>,
}

impl GraphArgs {
    fn descriptor(&self) -> Result<GraphDescriptor, Error> {
        if let Some(path) = &self.graph {
            let text = std::fs::read_to_string(path)?;
            return Ok(serde_json::from_str(&text)?);
        }
        if self.family.family.as_deref() == Some("file") {
            let path = self
                .graph_file
                .as_ref()
                .ok_or_else(|| Error::invalid("family 'file' needs --graph-file"))?;
            return Ok(GraphDescriptor::FromFile { path: path.display().to_string() });
        }
        let n = self
            .n
            .ok_or_else(|| Error::invalid("specify --n or --graph <descriptor.json>"))?;
        self.family.descriptor_for(n)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    stack: StackArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// JSONL output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-step trace JSONL (requires --seeds 1)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// off | light | full
    #[arg(long, default_value = "off")]
    instrument: String,
    /// Steps between full-instrumentation layer summaries
    #[arg(long, default_value_t = 100)]
    sample_every: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    stack: StackArgs,
    #[command(flatten)]
    family: FamilyArgs,
    /// Comma-separated node counts, e.g. 32,64,128,256
    #[arg(long = "n", required = true)]
    sizes: String,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let descriptor = args.graph.descriptor()?;
    let stack = args.stack.stack()?;
    let init = args.stack.init()?;
    let level = match args.instrument.as_str() {
        "off" => None,
        "light" => Some(TraceLevel::Light),
        "full" => Some(TraceLevel::Full),
        other => return Err(Error::invalid(format!("unknown instrumentation '{other}'"))),
    };
    if args.trace.is_some() != level.is_some() {
        return Err(Error::invalid(
            "--trace and --instrument light|full go together",
        ));
    }

    if let (Some(trace_path), Some(level)) = (&args.trace, level) {
        if args.seeds != 1 {
            return Err(Error::invalid("tracing requires --seeds 1"));
        }
        let graph = descriptor.build()?;
        let n = graph.node_count();
        let settings = RunSettings {
            step_cap: args.stack.cap.unwrap_or_else(|| popproto::engine::default_step_cap(n)),
            tail: args.stack.tail(),
        };
        let mut runner = Runner::new(graph, stack, &init, args.seed_base)?;
        let mut trace_out = BufWriter::new(File::create(trace_path)?);
        let record = runner.run_traced(
            &descriptor,
            settings,
            &mut trace_out,
            TraceConfig { level, sample_every: args.sample_every.max(1) },
        )?;
        trace_out.flush()?;
        let mut out = out_writer(&args.out)?;
        experiment::write_jsonl(&[record], &mut out)?;
        out.flush()?;
        return Ok(());
    }

    let spec = ExperimentSpec {
        graphs: vec![descriptor],
        stack,
        init,
        seeds: args.seeds,
        seed_base: args.seed_base,
        step_cap: args.stack.cap,
        tail: args.stack.tail(),
    };
    let records = experiment::run_experiment(&spec)?;
    let mut out = out_writer(&args.out)?;
    experiment::write_jsonl(&records, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::invalid(format!("bad size list '{}'", args.sizes)))?;
    if sizes.is_empty() {
        return Err(Error::invalid("sweep needs at least one size"));
    }
    let graphs = sizes
        .iter()
        .map(|&n| args.family.descriptor_for(n))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = ExperimentSpec {
        graphs,
        stack: args.stack.stack()?,
        init: args.stack.init()?,
        seeds: args.seeds,
        seed_base: args.seed_base,
        step_cap: args.stack.cap,
        tail: args.stack.tail(),
    };
    let records = experiment::run_experiment(&spec)?;
    let mut out = out_writer(&args.out)?;
    experiment::write_jsonl(&records, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let records = experiment::read_jsonl(BufReader::new(File::open(&args.input)?))?;
    let fit = experiment::fit_scaling(&records)?;
    let mut out = out_writer(&args.out)?;
    experiment::write_fit_csv(&fit, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), Error> {
    let records = experiment::read_jsonl(BufReader::new(File::open(&args.input)?))?;
    if records.is_empty() {
        return Err(Error::invalid("no records in input"));
    }
    // group by (stack, graph descriptor)
    let mut groups: std::collections::BTreeMap<(String, String), Vec<_>> =
        std::collections::BTreeMap::new();
    for r in records {
        let key = (r.stack.clone(), serde_json::to_string(&r.graph)?);
        groups.entry(key).or_default().push(r);
    }
    let mut out = io::stdout().lock();
    for ((stack, graph), recs) in &groups {
        let stats = experiment::summarize(recs)?;
        writeln!(
            out,
            "stack={stack} graph={graph} runs={} capped={} mean={:.1} median={} p95={} rounds_mean={:.1}",
            stats.count,
            stats.capped,
            stats.mean,
            stats.median,
            stats.p95,
            recs.iter().map(|r| r.rounds).sum::<u64>() as f64 / recs.len() as f64,
        )?;
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Fit(_) => 3,
        Error::InvalidParameter(_)
        | Error::Composition(_)
        | Error::NoEdges
        | Error::Disconnected
        | Error::GraphFile(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Stats(args) => cmd_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
