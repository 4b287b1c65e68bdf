use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedipm::commands::{
    bench_sketch, cmd_compare, cmd_solve, gen_problem, write_bench, write_compare, BenchConfig, CompareConfig,
    GenConfig, GenKind, RunConfig, RunMode, Transport,
};
use fedipm::{CliError, CliResult};
use fedipm_core::centralpath::{Profile, Termination};
use fedipm_core::sketch::SketchKind;

#[derive(Parser)]
#[command(name = "fedipm", version, about = "Federated interior-point solver with sketched Newton steps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write its trace and summary.
    Solve(SolveArgs),
    /// Measure sketch error against sketch size.
    BenchSketch(BenchArgs),
    /// Compare one Newton step across the naive federated models and the sketched protocol.
    CompareModels(CompareArgs),
    /// Write a generated problem file.
    GenProblem(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Sketched,
    Federated,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Practical,
}

#[derive(Clone, Copy, ValueEnum)]
enum SketchArg {
    Ams,
    Srht,
    Identity,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    /// Stop once the duality gap bound is below delta.
    Delta,
    /// Stop once it is below delta squared.
    Delta2,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Threads,
    Inline,
}

impl From<SketchArg> for SketchKind {
    fn from(s: SketchArg) -> Self {
        match s {
            SketchArg::Ams => SketchKind::Ams,
            SketchArg::Srht => SketchKind::Srht,
            SketchArg::Identity => SketchKind::Identity,
        }
    }
}

#[derive(Args)]
struct SketchSizes {
    #[arg(long)]
    b1: Option<usize>,
    #[arg(long)]
    b2: Option<usize>,
    #[arg(long)]
    b3: Option<usize>,
    #[arg(long)]
    b4: Option<usize>,
}

impl SketchSizes {
    fn get(&self) -> CliResult<Option<[usize; 4]>> {
        match (self.b1, self.b2, self.b3, self.b4) {
            (None, None, None, None) => Ok(None),
            (Some(a), Some(b), Some(c), Some(d)) => Ok(Some([a, b, c, d])),
            _ => Err(CliError::Usage("give all of --b1 --b2 --b3 --b4 or none".into())),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "practical")]
    profile: ProfileArg,
    #[arg(long, value_enum, default_value = "ams")]
    sketch: SketchArg,
    #[command(flatten)]
    sizes: SketchSizes,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long, value_enum, default_value = "delta2")]
    stop: StopArg,
    #[arg(long, value_enum, default_value = "threads")]
    transport: TransportArg,
    #[arg(long)]
    out_trace: Option<PathBuf>,
    /// Defaults to stdout.
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    d: usize,
    /// Comma-separated sketch sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    b_list: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "ams")]
    sketch: SketchArg,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Problem file; the built-in two-client instance when omitted.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Spread blocks evenly over this many clients instead of the file's partition.
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long, value_enum, default_value = "identity")]
    sketch: SketchArg,
    #[command(flatten)]
    sizes: SketchSizes,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKindArg {
    Boxlp,
    LeastSquaresErm,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKindArg,
    /// Box LP variables.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Box LP constraints.
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    features: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    clients: usize,
    /// Write box LPs with n > 16 without a reference optimum.
    #[arg(long)]
    skip_reference: bool,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve(a) => {
            let mode = match a.mode {
                ModeArg::Exact => RunMode::Exact,
                ModeArg::Sketched => RunMode::Sketched,
                ModeArg::Federated => RunMode::Federated,
            };
            let config = RunConfig {
                profile: match a.profile {
                    ProfileArg::Paper => Profile::Paper,
                    ProfileArg::Practical => Profile::Practical,
                },
                sketch: a.sketch.into(),
                sizes: a.sizes.get()?,
                delta: a.delta,
                seed: a.seed,
                max_iters: a.max_iters,
                termination: match a.stop {
                    StopArg::Delta => Termination::GapBelowDelta,
                    StopArg::Delta2 => Termination::GapBelowDeltaSquared,
                },
                transport: match a.transport {
                    TransportArg::Threads => Transport::Threads,
                    TransportArg::Inline => Transport::Inline,
                },
                out_trace: a.out_trace,
                out_summary: a.out_summary,
                ..RunConfig::new(mode)
            };
            cmd_solve(&a.problem, &config).map(|_| ())
        }
        Command::BenchSketch(a) => {
            let rows = bench_sketch(&BenchConfig {
                d: a.d,
                b_list: a.b_list,
                trials: a.trials,
                seed: a.seed,
                sketch: a.sketch.into(),
            })?;
            write_bench(output(a.out.as_deref())?, &rows)
        }
        Command::CompareModels(a) => {
            let config = CompareConfig {
                sketch: a.sketch.into(),
                sizes: a.sizes.get()?,
                seed: a.seed,
                t: a.t,
                clients: a.clients,
            };
            let rows = cmd_compare(a.problem.as_deref(), &config)?;
            write_compare(output(a.out.as_deref())?, &rows)
        }
        Command::GenProblem(a) => {
            let kind = match a.kind {
                GenKindArg::Boxlp => GenKind::BoxLp { n: a.n, d: a.d },
                GenKindArg::LeastSquaresErm => GenKind::LeastSquaresErm {
                    points: a.points,
                    features: a.features,
                },
            };
            let file = gen_problem(&GenConfig {
                kind,
                seed: a.seed,
                clients: a.clients,
                skip_reference: a.skip_reference,
            })?;
            match a.out {
                Some(path) => file.save(&path),
                None => {
                    print!("{}", file.to_json());
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDIPM_LOG", "error")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::to_string(&e.report()).expect("error report serializes");
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
