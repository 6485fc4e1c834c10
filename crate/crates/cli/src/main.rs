//! Command-line front end: ensemble runs, verification suites, scaling
//! analysis and tape replay.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_ising::cluster::ClusterState;
use adaptive_ising::ensemble::{convergence_check, read_csv, run_sweep, Engine, Grid, RunConfig, Sampling, Sweeps};
use adaptive_ising::fss::{
    curves_from_rows, find_crossing, optimize_collapse, rescale, write_rescaled_csv, CollapseSpec, CrossingOptions,
    Param,
};
use adaptive_ising::lattice::{Dimension, Lattice};
use adaptive_ising::observables::Observable;
use adaptive_ising::schedule::{Initial, RandomStream, Schedule, SiteOrder, TrajectoryTape};
use adaptive_ising::verify::{replay_tape, verify_channels, verify_equivalence, verify_oracles, ReplayEngine};
use adaptive_ising::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const OUT_ENV: &str = "ADAPTIVE_ISING_OUT";

#[derive(Parser)]
#[command(
    name = "adaptive-ising",
    version,
    about = "Adaptive monitored Ising circuit: simulation, verification and scaling analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trajectory ensemble over an (L, p) grid.
    Run(RunArgs),
    /// Run a verification suite and print a JSON report.
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Crossing or collapse analysis of a sweep CSV.
    Analyze {
        #[command(subcommand)]
        mode: Analysis,
    },
    /// Replay a recorded trajectory tape through one engine.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Cluster,
    Mvc,
    Percolation,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialArg {
    AllZero,
    AllPlus,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Raster,
    Random,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Lattice dimension, 1 or 2.
    #[arg(long)]
    dim: Option<u8>,
    /// Linear sizes.
    #[arg(long = "L", value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Values of p.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    p: Vec<f64>,
    /// Inclusive p range as start:stop:step.
    #[arg(long)]
    p_range: Option<String>,
    /// Fixed number of sweeps.
    #[arg(long)]
    sweeps: Option<usize>,
    /// Sweeps as factor · L^exponent.
    #[arg(long, conflicts_with = "sweeps")]
    sweeps_factor: Option<f64>,
    #[arg(long, requires = "sweeps_factor")]
    sweeps_exponent: Option<f64>,
    #[arg(long)]
    traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    initial: Option<InitialArg>,
    #[arg(long, value_enum)]
    order: Option<OrderArg>,
    /// Average observables over sweeps after this burn-in.
    #[arg(long, requires = "stride")]
    burn_in: Option<usize>,
    #[arg(long, requires = "burn_in")]
    stride: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $ADAPTIVE_ISING_OUT or the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
    /// Record trajectory 0 of the first point to this tape (.json for JSON).
    #[arg(long)]
    tape_out: Option<PathBuf>,
    /// Also rerun with sweeps ×1, ×2, ×4 and report convergence.
    #[arg(long)]
    convergence: bool,
}

#[derive(Subcommand)]
enum Suite {
    /// Cluster engine against the tableau and percolation oracles.
    Oracles {
        #[arg(long, default_value_t = 1)]
        dim: u8,
        #[arg(long = "L", default_value_t = 12)]
        size: usize,
        /// Defaults to 2L.
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long, default_value_t = 500)]
        tapes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dephasing identities of the measurement and reset channels.
    Channels {
        #[arg(long = "n", value_delimiter = ',', default_values_t = [1, 2, 4])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Averaged quantum dynamics against the classical majority-vote model.
    Equivalence {
        #[arg(long, value_enum, default_value = "mvc")]
        against: Against,
        #[arg(long = "n", value_delimiter = ',', default_values_t = [4, 5])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8])]
        p: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        sweeps: usize,
        #[arg(long, default_value_t = 100)]
        schedules: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Against {
    Mvc,
}

#[derive(Subcommand)]
enum Analysis {
    /// Pairwise crossing point of the curves.
    Crossing {
        #[command(flatten)]
        input: AnalysisInput,
        /// Search window lo:hi.
        #[arg(long)]
        window: Option<String>,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Data collapse; each parameter is fixed by value or searched in lo:hi.
    Collapse {
        #[command(flatten)]
        input: AnalysisInput,
        #[arg(long, default_value = "0:1")]
        pc: String,
        #[arg(long, default_value = "0.3:3")]
        nu: String,
        #[arg(long, default_value = "0")]
        beta: String,
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0.95)]
        ci_level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct AnalysisInput {
    /// Sweep CSV written by `run`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    observable: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReplayEngineArg {
    Cluster,
    Tableau,
    Percolation,
}

#[derive(Args)]
struct ReplayArgs {
    tape: PathBuf,
    #[arg(long, value_enum, default_value = "cluster")]
    engine: ReplayEngineArg,
}

/// Failure with its exit code.
enum Failure {
    Validation(String),
    Verification(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Io(e.to_string()),
            Error::Replay(_) | Error::Trajectory { .. } | Error::NotClusterForm(_) => {
                Failure::Verification(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify { suite } => cmd_verify(suite),
        Command::Analyze { mode } => cmd_analyze(mode),
        Command::Replay(args) => cmd_replay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(3)
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn print_json(value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value).map_err(Error::from)?)?;
    Ok(())
}

fn parse_range(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(':')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Validation(format!("bad number {t:?} in {s:?}")))
        })
        .collect()
}

fn build_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let mut c = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| Failure::Validation(format!("invalid config: {e}")))?
        }
        None => {
            let dim = a
                .dim
                .ok_or_else(|| Failure::Validation("--dim is required without --config".into()))?;
            let dimension = Dimension::try_from(dim).map_err(Failure::from)?;
            RunConfig::new(Engine::Cluster, dimension, Vec::new(), Vec::new(), 1000, 0)
        }
    };
    if let Some(e) = a.engine {
        c.engine = match e {
            EngineArg::Cluster => Engine::Cluster,
            EngineArg::Mvc => Engine::Mvc,
            EngineArg::Percolation => Engine::Percolation,
        };
    }
    if let Some(d) = a.dim {
        c.dimension = Dimension::try_from(d).map_err(Failure::from)?;
    }
    if !a.sizes.is_empty() {
        c.sizes = a.sizes.clone();
    }
    if !a.p.is_empty() {
        c.p = Grid::List(a.p.clone());
    }
    if let Some(r) = &a.p_range {
        match parse_range(r)?[..] {
            [start, stop, step] => c.p = Grid::Range { start, stop, step },
            _ => return Err(Failure::Validation("--p-range takes start:stop:step".into())),
        }
    }
    if let Some(n) = a.sweeps {
        c.sweeps = Sweeps::Fixed(n);
    }
    if let Some(factor) = a.sweeps_factor {
        c.sweeps = Sweeps::Scaled {
            factor,
            exponent: a.sweeps_exponent.unwrap_or(1.0),
        };
    }
    if let Some(n) = a.traj {
        c.n_traj = n;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(i) = a.initial {
        c.initial = match i {
            InitialArg::AllZero => Initial::AllZero,
            InitialArg::AllPlus => Initial::AllPlus,
        };
    }
    if let Some(o) = a.order {
        c.order = match o {
            OrderArg::Raster => SiteOrder::Raster,
            OrderArg::Random => SiteOrder::Random,
        };
    }
    if let (Some(burn_in), Some(stride)) = (a.burn_in, a.stride) {
        c.sampling = Sampling::TimeAveraged { burn_in, stride };
    }
    if a.workers.is_some() {
        c.workers = a.workers;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_run(a: RunArgs) -> Outcome {
    let config = build_config(&a)?;
    let dir = out_dir(a.out.clone());
    let stem = a
        .name
        .clone()
        .or_else(|| config.output.as_ref().map(|p| p.to_string_lossy().into_owned()))
        .unwrap_or_else(|| format!("sweep_{}", &config.hash()[..12]));
    let result = run_sweep(&config)?;
    let (csv_path, json_path) = result.write_files(&dir.join(&stem))?;
    let mut summary = serde_json::json!({
        "csv": csv_path,
        "metadata": json_path,
        "config_hash": result.config_hash,
        "points": result.points.len(),
    });
    if let Some(tape_path) = &a.tape_out {
        let size = config.sizes[0];
        let p = config.p.values()[0];
        let lattice = Lattice::new(config.dimension, size)?;
        let sweeps = config.sweeps.resolve(size);
        let stream = RandomStream::new(config.point_seed(size, p), 0);
        let schedule = Schedule::generate_with_order(&lattice, p, sweeps, stream, config.order)?;
        let mut st = ClusterState::new(&lattice, config.initial);
        let outcomes = st.run_recorded(&lattice, &schedule)?;
        let tape = TrajectoryTape::new(schedule, config.initial, outcomes);
        if let Some(dir) = tape_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        if tape_path.extension().is_some_and(|e| e == "json") {
            fs::write(tape_path, tape.to_json()?)?;
        } else {
            tape.write_to(fs::File::create(tape_path)?)?;
        }
        summary["tape"] = serde_json::json!(tape_path);
    }
    if a.convergence {
        let report = convergence_check(&config, &[1.0, 2.0, 4.0])?;
        let path = dir.join(format!("{stem}_convergence.json"));
        write_json(&path, &report)?;
        summary["convergence"] = serde_json::json!(path);
        summary["convergence_flagged"] = serde_json::json!(report.flagged);
    }
    print_json(&summary)
}

fn verdict(passed: bool, report: &impl Serialize) -> Outcome {
    print_json(report)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification("see report".into()))
    }
}

fn cmd_verify(suite: Suite) -> Outcome {
    match suite {
        Suite::Oracles {
            dim,
            size,
            sweeps,
            tapes,
            seed,
        } => {
            let lattice = Lattice::new(Dimension::try_from(dim)?, size)?;
            let r = verify_oracles(&lattice, sweeps.unwrap_or(2 * size), tapes, seed)?;
            verdict(r.passed, &r)
        }
        Suite::Channels { sizes, trials, seed } => {
            let r = verify_channels(&sizes, trials, seed)?;
            verdict(r.passed, &r)
        }
        Suite::Equivalence {
            against: Against::Mvc,
            sizes,
            p,
            sweeps,
            schedules,
            seed,
        } => {
            let r = verify_equivalence(&sizes, &p, sweeps, schedules, seed)?;
            verdict(r.passed, &r)
        }
    }
}

fn parse_param(s: &str) -> Result<Param, Failure> {
    match parse_range(s)?[..] {
        [v] => Ok(Param::Fixed(v)),
        [lo, hi] => Ok(Param::Free { lo, hi }),
        _ => Err(Failure::Validation(format!("parameter {s:?} must be a value or lo:hi"))),
    }
}

fn load_curves(input: &AnalysisInput) -> Result<Vec<adaptive_ising::fss::ScalingCurve>, Failure> {
    let observable: Observable = input.observable.parse()?;
    let rows = read_csv(fs::File::open(&input.input)?)?;
    let curves = curves_from_rows(&rows, observable)?;
    if curves.is_empty() {
        return Err(Failure::Validation(format!("no rows for observable {observable}")));
    }
    Ok(curves)
}

fn analysis_stem(input: &AnalysisInput) -> PathBuf {
    let dir = input
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| input.input.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = input
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dir.join(format!("{stem}_{}", input.observable))
}

fn cmd_analyze(mode: Analysis) -> Outcome {
    match mode {
        Analysis::Crossing {
            input,
            window,
            bootstrap,
            seed,
        } => {
            let curves = load_curves(&input)?;
            let window = match window.as_deref().map(parse_range).transpose()? {
                None => None,
                Some(v) if v.len() == 2 => Some((v[0], v[1])),
                Some(_) => return Err(Failure::Validation("--window takes lo:hi".into())),
            };
            let r = find_crossing(
                &curves,
                &CrossingOptions {
                    bootstrap,
                    seed,
                    window,
                },
            )?;
            let path = PathBuf::from(format!("{}_crossing.json", analysis_stem(&input).display()));
            write_json(&path, &r)?;
            print_json(&r)
        }
        Analysis::Collapse {
            input,
            pc,
            nu,
            beta,
            grid,
            bootstrap,
            ci_level,
            seed,
        } => {
            let curves = load_curves(&input)?;
            let spec = CollapseSpec {
                grid,
                bootstrap,
                ci_level,
                seed,
                ..CollapseSpec::new(parse_param(&pc)?, parse_param(&nu)?, parse_param(&beta)?)
            };
            let r = optimize_collapse(&curves, &spec)?;
            let stem = analysis_stem(&input).display().to_string();
            write_json(Path::new(&format!("{stem}_collapse.json")), &r)?;
            let csv_path = format!("{stem}_rescaled.csv");
            write_rescaled_csv(fs::File::create(&csv_path)?, &rescale(&curves, r.params()))?;
            print_json(&r)
        }
    }
}

fn cmd_replay(a: ReplayArgs) -> Outcome {
    let bytes = fs::read(&a.tape)?;
    let tape = if a.tape.extension().is_some_and(|e| e == "json") {
        TrajectoryTape::from_json(std::str::from_utf8(&bytes).map_err(|e| Failure::Validation(e.to_string()))?)?
    } else {
        TrajectoryTape::from_bytes(&bytes)?
    };
    let engine = match a.engine {
        ReplayEngineArg::Cluster => ReplayEngine::Cluster,
        ReplayEngineArg::Tableau => ReplayEngine::Tableau,
        ReplayEngineArg::Percolation => ReplayEngine::Percolation,
    };
    let r = replay_tape(&tape, engine)?;
    print_json(&r)
}
