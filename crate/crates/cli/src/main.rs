use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use robust_degree::attacks::{AttackKind, AttackName};
use robust_degree::bounds::{bound_for, bound_nonprivate};
use robust_degree::graph::{write_edge_list, GraphError};
use robust_degree::harness::{
    run_experiment, write_results, ExperimentConfig, GraphSource, HarnessError, OutputFormat,
    Summary, TargetRule, DEFAULT_C, DEFAULT_DELTA, DEFAULT_TRIALS,
};
use robust_degree::protocols::{Mode, Protocol};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_)
            | HarnessError::Param(_)
            | HarnessError::Graph(GraphError::Probability(_) | GraphError::Empty) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "robust-degree", version, about = "Degree estimation under edge LDP with poisoning attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw an Erdős–Rényi graph and write it as an edge list.
    Generate(GenerateArgs),
    /// Run a seeded Monte-Carlo experiment.
    Run(RunArgs),
    /// Print the theoretical bounds as JSON.
    Bounds(BoundsArgs),
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Uniform,
    MaxDegree,
}

#[derive(clap::Args)]
struct RunArgs {
    /// `er:N,P` or `file:PATH`.
    #[arg(long, value_parser = parse_graph)]
    graph: GraphSpec,
    #[arg(long)]
    protocol: Protocol,
    #[arg(long, default_value = "none")]
    attack: AttackName,
    /// Implied by inflate-*/deflate-*; selects the threshold for `none`.
    #[arg(long)]
    mode: Option<Mode>,
    /// Required for every protocol except nonprivate.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Target::Uniform)]
    target: Target,
    /// Results file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(clap::Args)]
struct BoundsArgs {
    #[arg(long)]
    protocol: Protocol,
    #[arg(long, default_value = "response")]
    mode: Mode,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
}

#[derive(Clone)]
enum GraphSpec {
    Er(usize, f64),
    File(PathBuf),
}

fn parse_graph(s: &str) -> Result<GraphSpec, String> {
    if let Some(rest) = s.strip_prefix("er:") {
        let (n, p) = rest
            .split_once(',')
            .ok_or_else(|| format!("expected er:N,P, got `{s}`"))?;
        let n = n.trim().parse().map_err(|e| format!("bad n in `{s}`: {e}"))?;
        let p = p.trim().parse().map_err(|e| format!("bad p in `{s}`: {e}"))?;
        Ok(GraphSpec::Er(n, p))
    } else if let Some(path) = s.strip_prefix("file:") {
        Ok(GraphSpec::File(PathBuf::from(path)))
    } else {
        Err(format!("expected er:N,P or file:PATH, got `{s}`"))
    }
}

fn check_eps(eps: Option<f64>, protocol: Protocol) -> Result<Option<f64>, CliError> {
    match eps {
        Some(e) if !(e.is_finite() && e > 0.0) => Err(CliError::Usage(format!(
            "--eps must be finite and positive, got {e}"
        ))),
        None if protocol != Protocol::Nonprivate => Err(CliError::Usage(format!(
            "--eps is required for protocol {protocol}"
        ))),
        e => Ok(e),
    }
}

fn resolve_mode(attack: AttackName, mode: Option<Mode>) -> Result<Mode, CliError> {
    match (attack.mode(), attack.kind(), mode) {
        (Some(implied), _, Some(given)) if implied != given => Err(CliError::Usage(format!(
            "attack {attack} implies --mode {implied}, got {given}"
        ))),
        (Some(implied), _, _) => Ok(implied),
        // the non-private constructions do not distinguish the two classes
        (None, AttackKind::Thm6(_), _) => Ok(Mode::Response),
        (None, _, given) => Ok(given.unwrap_or(Mode::Response)),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let g = GraphSource::Er {
        n: args.n,
        p: args.p,
    }
    .build(args.seed)?;
    let file = File::create(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let mut w = BufWriter::new(file);
    write_edge_list(&g, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", args.out.display())))?;
    println!("{} edges on {} nodes written to {}", g.edge_count(), g.n(), args.out.display());
    Ok(())
}

fn echo(config: &ExperimentConfig, args: &RunArgs) -> String {
    let mut s = String::from("effective config: run");
    match &args.graph {
        GraphSpec::Er(n, p) => write!(s, " --graph er:{n},{p}"),
        GraphSpec::File(path) => write!(s, " --graph file:{}", path.display()),
    }
    .unwrap();
    write!(
        s,
        " --protocol {} --attack {} --mode {}",
        config.protocol, config.attack, config.mode
    )
    .unwrap();
    if let Some(e) = config.eps {
        write!(s, " --eps {e}").unwrap();
    }
    write!(
        s,
        " --delta {} --c {} --m {} --b {} --trials {} --seed {} --target {} --format {}",
        config.delta,
        config.c,
        config.m,
        config.b,
        config.trials,
        config.seed,
        match args.target {
            Target::Uniform => "uniform",
            Target::MaxDegree => "max-degree",
        },
        match args.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    )
    .unwrap();
    if let Some(out) = &args.out {
        write!(s, " --out {}", out.display()).unwrap();
    }
    s
}

fn summary_line(summary: &Summary) -> String {
    let parts: Vec<String> = summary
        .metrics
        .iter()
        .map(|(name, st)| format!("{name} {:.4} ± {:.4}", st.mean, st.se))
        .collect();
    format!("{} trials | {}", summary.trials, parts.join(" | "))
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let eps = check_eps(args.eps, args.protocol)?;
    let mode = resolve_mode(args.attack, args.mode)?;
    let graph = match &args.graph {
        GraphSpec::Er(n, p) => GraphSource::Er { n: *n, p: *p },
        GraphSpec::File(path) => GraphSource::File(path.clone()),
    };
    let config = ExperimentConfig {
        graph,
        protocol: args.protocol,
        attack: args.attack,
        mode,
        b: args.b,
        eps,
        delta: args.delta,
        c: args.c,
        m: args.m,
        target_rule: match args.target {
            Target::Uniform => TargetRule::Uniform,
            Target::MaxDegree => TargetRule::MaxDegreeHonest,
        },
        trials: args.trials,
        seed: args.seed,
    };
    config.validate()?;
    let effective = echo(&config, &args);
    let result = run_experiment(&config)?;
    if result.summary.bound_inapplicable {
        eprintln!(
            "warning: (4/3) e^eps ln(2/delta) < n fails; the bound columns carry no guarantee"
        );
    }
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let rows = result.rows();
    match &args.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            write_results(&rows, &result.summary, format, &mut w)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            w.flush()
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            println!("{effective}");
            println!("{}", summary_line(&result.summary));
        }
        None => {
            let stdout = io::stdout();
            write_results(&rows, &result.summary, format, stdout.lock())
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            eprintln!("{effective}");
            eprintln!("{}", summary_line(&result.summary));
        }
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), CliError> {
    let eps = check_eps(args.eps, args.protocol)?;
    let report = match eps {
        None => bound_nonprivate(args.n, args.m),
        Some(e) => bound_for(args.protocol, args.mode, args.n, args.m, e, args.delta, args.c)
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Bounds(a) => cmd_bounds(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
