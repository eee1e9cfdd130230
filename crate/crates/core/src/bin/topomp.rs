use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use topomp::complex::{Complex, DomainKind};
use topomp::homology::betti_numbers;
use topomp::io::{
    coo_text, complex_to_json, matrix_tokens, output_to_json, read_complex, read_hyperedge_list, read_off_mesh,
};
use topomp::lifting::{clique_lift, cycle_lift, group_lift, hyperedge_augment, Graph};
use topomp::model::{Model, ModelConfig};
use topomp::neighborhoods::{degree, MatrixRequest};
use topomp::symmetry::{permutation_deviation, random_permutations};
use topomp::synthetic::{block_hypergraph, random_complex, random_features, trajectory_dataset, BlockParams};
use topomp::train::{train, Dataset, Task, TrainConfig};
use topomp::{Error, FeatureStore};

const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Equivariance tolerance for `forward --check-equivariance`.
const EQUIVARIANCE_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "topomp", version, about = "Topological message passing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a complex, then write canonical JSON.
    Build(BuildArgs),
    /// Lift the 1-skeleton of a complex into a richer domain.
    Lift(LiftArgs),
    /// Print cell counts and optional diagnostics.
    Inspect(InspectArgs),
    /// Run a model on a complex and write the output features.
    Forward(ForwardArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Generate synthetic complexes and datasets.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Hyperedges,
    Off,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LiftMethod {
    Clique,
    Cycles,
    Groups,
    Augment,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: LiftMethod,
    /// Highest simplex rank for the clique lift.
    #[arg(long, default_value_t = 2)]
    max_rank: usize,
    /// Longest chordless cycle for the cycle lift.
    #[arg(long, default_value_t = 4)]
    max_len: usize,
    /// One vertex set per line, for the groups and augment methods.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Rank given to cells added by the augment method.
    #[arg(long, default_value_t = 2)]
    cell_rank: usize,
    /// Also keep graph edges as hyperedges in the groups method.
    #[arg(long)]
    keep_edges: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    betti: bool,
    #[arg(long)]
    degrees: bool,
    /// Matrix name such as `B1`, `B_1`, `Lup0` or `incidence_between:0:2`.
    #[arg(long)]
    export: Option<String>,
    /// Where to write the exported matrix; defaults to standard output.
    #[arg(long, requires = "export")]
    export_to: Option<PathBuf>,
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    complex: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also compare against a randomly relabeled copy of the input.
    #[arg(long)]
    check_equivariance: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Trajectory,
    NodeClass,
    ComplexClass,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Trajectory => Task::Trajectory,
            TaskArg::NodeClass => Task::NodeClass,
            TaskArg::ComplexClass => Task::ComplexClass,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Where to write the trained parameters as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print one JSON object per epoch and a final summary line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    what: SynthCommand,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Loops around the two holes of a triangulated grid.
    Trajectory {
        #[arg(long, default_value_t = 400)]
        samples: usize,
        #[arg(long, default_value_t = 0.25)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Two-block hypergraph with node labels.
    Blocks {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// A random complex with uniform features on every rank.
    Random {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 10)]
        max_vertices: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_data_error() { EXIT_DATA } else { EXIT_USAGE };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| {
        Error::Io {
            path: path.to_owned(),
            source,
        }
        .into()
    })
}

fn emit(output: Option<&Path>, text: &str) -> CliResult {
    match output {
        Some(path) => fs::write(path, text).map_err(|source| {
            Error::Io {
                path: path.to_owned(),
                source,
            }
            .into()
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure {
                    code: EXIT_DATA,
                    message: e.to_string(),
                })
        }
    }
}

fn counts_line(c: &Complex) -> String {
    let counts: Vec<String> = c.counts().iter().map(usize::to_string).collect();
    format!("counts: {}", counts.join(" "))
}

fn build(args: BuildArgs) -> CliResult {
    let (complex, features) = match args.format {
        Format::Json => read_complex(&args.input)?,
        Format::Hyperedges => {
            let (c, warnings) = read_hyperedge_list(&args.input)?;
            for w in warnings {
                log::warn!("{}: {w}", args.input.display());
            }
            (c, FeatureStore::new())
        }
        Format::Off => read_off_mesh(&args.input)?,
    };
    emit(args.output.as_deref(), &complex_to_json(&complex, &features)?)
}

/// Vertex sets, one per nonblank line not starting with `#`.
fn read_groups(path: &Path) -> CliResult<Vec<Vec<String>>> {
    Ok(read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect())
}

fn lift(args: LiftArgs) -> CliResult {
    let (input, _) = read_complex(&args.input)?;
    let lifted = match args.method {
        LiftMethod::Clique => clique_lift(&Graph::from_complex(&input)?, args.max_rank)?,
        LiftMethod::Cycles => cycle_lift(&Graph::from_complex(&input)?, args.max_len)?,
        LiftMethod::Groups => {
            let path = args.groups.as_deref().ok_or_else(|| usage("--groups is required for --method groups"))?;
            group_lift(&Graph::from_complex(&input)?, &read_groups(path)?, args.keep_edges)?
        }
        LiftMethod::Augment => {
            let path = args.groups.as_deref().ok_or_else(|| usage("--groups is required for --method augment"))?;
            let cells: Vec<(Vec<String>, usize)> =
                read_groups(path)?.into_iter().map(|g| (g, args.cell_rank)).collect();
            hyperedge_augment(&input, &cells)?
        }
    };
    println!("{}", counts_line(&lifted));
    if let Some(path) = &args.output {
        emit(Some(path), &complex_to_json(&lifted, &FeatureStore::new())?)?;
    }
    Ok(())
}

fn inspect(args: InspectArgs) -> CliResult {
    let (c, _) = read_complex(&args.input)?;
    // the matrix name is checked before any output is produced
    let request = match &args.export {
        Some(name) => Some(name.parse::<MatrixRequest>().map_err(|e| usage(e.to_string()))?),
        None => None,
    };
    println!("kind: {}", c.kind());
    println!("{}", counts_line(&c));
    if args.betti {
        let betti: Vec<String> = betti_numbers(&c)?.iter().map(usize::to_string).collect();
        println!("betti: {}", betti.join(" "));
    }
    if args.degrees {
        for r in 0..c.max_rank() {
            let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
            for d in degree(&c, r)?.matrix.diagonal_values() {
                *hist.entry(d).or_default() += 1;
            }
            let parts: Vec<String> = hist.iter().map(|(d, n)| format!("{d}:{n}")).collect();
            println!("degrees {r}: {}", parts.join(" "));
        }
    }
    if let Some(req) = request {
        let m = req.build(&c)?;
        let text = coo_text(&m.matrix);
        match &args.export_to {
            Some(path) => emit(Some(path), &text)?,
            None => emit(None, &text)?,
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> CliResult<ModelConfig> {
    Ok(ModelConfig::from_json(&read_to_string(path)?)?)
}

fn forward(args: ForwardArgs) -> CliResult {
    let config = load_config(&args.model)?;
    let (c, h) = read_complex(&args.complex)?;
    let model = Model::init(config, &c, &h.dims(), args.seed)?;
    let out = model.forward(&c, &h)?;
    if args.check_equivariance {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let perms = random_permutations(&c, &mut rng);
        let deviation = permutation_deviation(&c, &h, &perms, |c, h| model.forward(c, h).map(|o| o.features))?;
        eprintln!("equivariance deviation: {deviation:e}");
        if deviation.is_nan() || deviation >= EQUIVARIANCE_TOL {
            return Err(Failure {
                code: EXIT_DATA,
                message: format!("permutation equivariance violated: deviation {deviation:e}"),
            });
        }
    }
    emit(args.output.as_deref(), &output_to_json(&out)?)
}

fn train_cmd(args: TrainArgs) -> CliResult {
    let config = load_config(&args.model)?;
    let data = Dataset::read(&args.data)?;
    let complex = data
        .first_complex()
        .ok_or_else(|| Failure::from(Error::InvalidArgument("dataset has no complexes".into())))?;
    let mut model = Model::init(config, complex, &data.input_dims(), args.seed)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        seed: args.seed,
        batch_size: args.batch_size,
    };
    let report = train(&mut model, args.task.into(), &data, &cfg)?;
    let mut out = String::new();
    for e in &report.epochs {
        if args.json {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
        } else {
            out.push_str(&format!(
                "epoch {}: loss {:.6} train {:.4} test {:.4}",
                e.epoch, e.loss, e.train_accuracy, e.test_accuracy
            ));
        }
        out.push('\n');
    }
    if args.json {
        let summary = serde_json::json!({
            "task": report.task,
            "train_accuracy": report.train_accuracy,
            "test_accuracy": report.test_accuracy,
        });
        out.push_str(&summary.to_string());
    } else {
        out.push_str(&format!(
            "final: train {:.4} test {:.4}",
            report.train_accuracy, report.test_accuracy
        ));
    }
    out.push('\n');
    emit(None, &out)?;
    if let Some(path) = &args.output {
        let params = model
            .export_params()
            .iter()
            .map(|(name, m)| Ok((name.clone(), matrix_tokens(m)?)))
            .collect::<topomp::Result<BTreeMap<_, _>>>()?;
        let mut text = serde_json::to_string_pretty(&params).expect("serializable");
        text.push('\n');
        emit(Some(path), &text)?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> CliResult {
    match args.what {
        SynthCommand::Trajectory {
            samples,
            test_fraction,
            seed,
            output,
        } => {
            if !(0.0..=1.0).contains(&test_fraction) {
                return Err(usage("--test-fraction must lie in [0, 1]"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = Dataset::Complexes(trajectory_dataset(samples, test_fraction, &mut rng)?);
            emit(output.as_deref(), &data.to_json()?)
        }
        SynthCommand::Blocks { seed, output } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = Dataset::Nodes(block_hypergraph(BlockParams::default(), &mut rng)?);
            emit(output.as_deref(), &data.to_json()?)
        }
        SynthCommand::Random {
            kind,
            max_vertices,
            dim,
            seed,
            output,
        } => {
            let kind: DomainKind = kind.parse()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_complex(kind, max_vertices, &mut rng);
            let h = random_features(&c, dim, &mut rng);
            emit(output.as_deref(), &complex_to_json(&c, &h)?)
        }
    }
}

fn init_threads() -> CliResult {
    let threads = match std::env::var("TOPOMP_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("TOPOMP_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult {
    init_threads()?;
    match cli.command {
        Command::Build(a) => build(a),
        Command::Lift(a) => lift(a),
        Command::Inspect(a) => inspect(a),
        Command::Forward(a) => forward(a),
        Command::Train(a) => train_cmd(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
