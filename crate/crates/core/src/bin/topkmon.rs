use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use topkmon::harness::{
    oracle_report, protocol_bench, simulate, to_json, write_per_step_csv, write_repro_bundle, BenchConfig,
    RunConfig, TraceSource,
};
use topkmon::streams::{generate, load_csv, save_csv, Family, GeneratorParams, GeneratorSpec, DEFAULT_MAX_VALUE};
use topkmon::{Error, Mode, Trace};

#[derive(Parser)]
#[command(name = "topkmon", version, about = "Top-k position monitoring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the monitor over a trace and check it against the oracle.
    Simulate(SimulateArgs),
    /// Benchmark the extremum protocol on shuffled distinct values.
    ProtocolBench(BenchArgs),
    /// Print the offline lower bound and delta of a trace.
    Oracle(OracleArgs),
    /// Generate a synthetic trace as CSV.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    RandomWalk,
    Uniform,
    AdversarialCrossing,
    Constant,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::RandomWalk => Family::RandomWalk,
            FamilyArg::Uniform => Family::Uniform,
            FamilyArg::AdversarialCrossing => Family::AdversarialCrossing,
            FamilyArg::Constant => Family::Constant,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Max,
    Min,
}

#[derive(Args)]
struct GeneratorArgs {
    #[arg(long, value_enum, default_value = "random-walk")]
    family: FamilyArg,
    /// Number of nodes.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Number of time steps.
    #[arg(long, default_value_t = 1000)]
    t: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_VALUE)]
    max_value: u64,
    /// Random walk step, in walk levels.
    #[arg(long)]
    step: Option<u64>,
    /// Adversarial crossing amplitude.
    #[arg(long)]
    amplitude: Option<u64>,
    /// Adversarial crossing period.
    #[arg(long)]
    period: Option<u64>,
    /// Allow repeated values within a snapshot.
    #[arg(long)]
    allow_ties: bool,
}

impl GeneratorArgs {
    fn spec(&self, k: usize, seed: u64) -> GeneratorSpec {
        let defaults = GeneratorParams::default();
        let params = GeneratorParams {
            max_value: self.max_value,
            step: self.step.unwrap_or(defaults.step),
            amplitude: self.amplitude.unwrap_or(self.max_value / 8),
            period: self.period.unwrap_or(defaults.period),
            distinct: !self.allow_ties,
        };
        GeneratorSpec { family: self.family.into(), n: self.n, k, t: self.t, seed, params }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Replay a CSV trace instead of generating one.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-step CSV sidecar path.
    #[arg(long)]
    per_step: Option<PathBuf>,
    /// Event log path, one message per line.
    #[arg(long)]
    event_log: Option<PathBuf>,
    /// Suppress protocol round broadcasts that repeat the previous extremum.
    #[arg(long)]
    silent_rounds: bool,
    /// Where to write the reproduction bundle on an oracle mismatch.
    #[arg(long, default_value = "topkmon-repro")]
    repro_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Protocol bound N.
    #[arg(long)]
    n: u64,
    /// Number of participants (defaults to N).
    #[arg(long)]
    participants: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, value_enum, default_value = "max")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    silent_rounds: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn load_or_generate(
    path: &Option<PathBuf>,
    generator: &GeneratorArgs,
    k: usize,
    seed: u64,
) -> Result<(Trace, TraceSource), Error> {
    match path {
        Some(p) => Ok((load_csv(p)?, TraceSource::File { path: p.display().to_string() })),
        None => {
            let spec = generator.spec(k, seed);
            Ok((generate(&spec)?, TraceSource::Generated { spec }))
        }
    }
}

fn emit(text: &str, path: &Option<PathBuf>) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_simulate(args: SimulateArgs) -> Result<bool, Error> {
    let (trace, source) = load_or_generate(&args.trace, &args.generator, args.k, args.seed)?;
    let config = RunConfig {
        n: trace.n(),
        k: args.k,
        t: trace.len(),
        seed: args.seed,
        source,
        silent_rounds: args.silent_rounds,
    };
    let sim = match simulate(&trace, config.clone(), args.per_step.is_some()) {
        Ok(sim) => sim,
        Err(err @ Error::OracleMismatch { t, .. }) => {
            let dir = write_repro_bundle(&args.repro_dir, &trace, t, &config)?;
            eprintln!("reproduction bundle written to {}", dir.display());
            return Err(err);
        }
        Err(err) => return Err(err),
    };
    if let Some(path) = &args.per_step {
        let mut out = create(path)?;
        write_per_step_csv(&sim.steps, &mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.event_log {
        let mut out = create(path)?;
        sim.write_event_log(&mut out)?;
        out.flush()?;
    }
    emit(&to_json(&sim.report)?, &args.report)?;
    Ok(sim.report.passed)
}

fn run_bench(args: BenchArgs) -> Result<bool, Error> {
    let mode = match args.mode {
        ModeArg::Max => Mode::Max,
        ModeArg::Min => Mode::Min,
    };
    let mut config = BenchConfig::new(args.n, args.trials, mode, args.seed);
    config.participants = args.participants.unwrap_or(args.n as usize);
    config.silent_rounds = args.silent_rounds;
    let report = protocol_bench(config)?;
    emit(&to_json(&report)?, &args.report)?;
    Ok(report.all_correct)
}

fn run_oracle(args: OracleArgs) -> Result<bool, Error> {
    let (trace, _) = load_or_generate(&args.trace, &args.generator, args.k, args.seed)?;
    emit(&to_json(&oracle_report(&trace, args.k)?)?, &args.report)?;
    Ok(true)
}

fn run_gen(args: GenArgs) -> Result<bool, Error> {
    let trace = generate(&args.generator.spec(args.k, args.seed))?;
    save_csv(&trace, &args.out)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::ProtocolBench(a) => run_bench(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Gen(a) => run_gen(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("topkmon: one or more checks failed");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("topkmon: {err}");
            ExitCode::from(2)
        }
    }
}
