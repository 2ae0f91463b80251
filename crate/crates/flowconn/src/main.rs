use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowconn::commands::{self, Command};
use flowconn::{CliError, ExperimentConfig, EXIT_ERROR};

#[derive(Parser)]
#[command(
    name = "flowconn",
    version,
    about = "Connection recovery from stochastic flows on embedded manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Print the nonzero Christoffel symbols at a point.
    Christoffel(Shared),
    /// Check the projector identities at random points.
    VerifyIdentities(Shared),
    /// Verify the connection identity along a curve.
    Theorem(Shared),
    /// Recover Christoffel symbols from short segments or small loops.
    Recover(Shared),
    /// Evaluate the Itô drift of a contour integral.
    ContourDrift {
        #[command(flatten)]
        shared: Shared,
        /// Exit 1 if the value disagrees with its known reference.
        #[arg(long)]
        cross_check: bool,
    },
}

#[derive(Args)]
struct Shared {
    /// Flat `key = value` file applied before any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifold: Option<String>,
    #[arg(long)]
    curve: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    paths: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    point: Option<String>,
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    i: Option<String>,
    #[arg(long)]
    j: Option<String>,
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    q_source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Tolerance override, `name=value` (oracle, projector, derivative, contour).
    #[arg(long, value_name = "NAME=VALUE")]
    tol: Vec<String>,
    /// Any configuration key, `key=value`.
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Shared {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.merge_file(path)?;
        }
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        for pair in &self.tol {
            cfg.set_pair(&format!("tol.{pair}"))?;
        }
        let flags = [
            ("manifold", &self.manifold),
            ("curve", &self.curve),
            ("nodes", &self.nodes),
            ("scheme", &self.scheme),
            ("h", &self.h),
            ("dt", &self.dt),
            ("paths", &self.paths),
            ("seed", &self.seed),
            ("mode", &self.mode),
            ("out", &self.out),
            ("format", &self.format),
            ("point", &self.point),
            ("direction", &self.direction),
            ("eps", &self.eps),
            ("radius", &self.radius),
            ("case", &self.case),
            ("i", &self.i),
            ("j", &self.j),
            ("points", &self.points),
            ("q_source", &self.q_source),
            ("target", &self.target),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("FLOWCONN_THREADS") {
        let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            format!("invalid `FLOWCONN_THREADS`: expected a positive integer, got `{raw}`")
        })?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, shared) = match &cli.command {
        Sub::Christoffel(s) => (Command::Christoffel, s),
        Sub::VerifyIdentities(s) => (Command::VerifyIdentities, s),
        Sub::Theorem(s) => (Command::Theorem, s),
        Sub::Recover(s) => (Command::Recover, s),
        Sub::ContourDrift {
            shared,
            cross_check,
        } => (
            Command::ContourDrift {
                cross_check: *cross_check,
            },
            shared,
        ),
    };
    let pool = match thread_pool() {
        Ok(pool) => pool,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let result = shared
        .resolve()
        .and_then(|cfg| pool.install(|| commands::run(command, &cfg)));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
