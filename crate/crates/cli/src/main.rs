//! `twosite`: batch runs of the two-site combined heat and power experiments.

mod check;
mod config;
mod context;
mod control;
mod equilibrium;
mod error;
mod output;
mod scan;
mod zero;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use twosite::{SystemParams, TwoSiteModel};

use crate::context::Context;
use crate::error::CliError;
use crate::output::{sha256_hex, ConfigSource, Outputs, ParamSource, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "twosite", version, about = "Zero dynamics, stability scans and tracking control of a two-site CHP plant")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Parameter file of `key = value` lines; the built-in table when omitted.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Command configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel runs; all cores when omitted.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for randomly sampled states (`check`).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Zero-dynamics trajectories for a list of initial conditions.
    ZeroDynamics,
    /// Singularity map or eigenvalue scan.
    Scan {
        #[arg(value_enum)]
        kind: scan::ScanArg,
    },
    /// Closed-loop tracking of `(Y1, Y2)`.
    Track,
    /// Closed-loop stabilization (`K = 0`).
    Stabilize,
    /// Equilibrium for `(Y1, Ŷ2)`.
    Equilibrium {
        #[arg(long)]
        y1: f64,
        #[arg(long, default_value_t = 0.0)]
        yhat2: f64,
    },
    /// Relative-degree identities and jet/oracle agreement at random states.
    Check {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        oracle_samples: usize,
    },
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::ZeroDynamics => "zero-dynamics".into(),
            Command::Scan { kind } => format!("scan {kind:?}").to_lowercase(),
            Command::Track => "track".into(),
            Command::Stabilize => "stabilize".into(),
            Command::Equilibrium { .. } => "equilibrium".into(),
            Command::Check { .. } => "check".into(),
        }
    }
}

fn load_params(path: Option<&PathBuf>) -> Result<(SystemParams, ParamSource), CliError> {
    match path {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", p.display())))?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| CliError::Validation(format!("{} is not UTF-8", p.display())))?;
            let params = SystemParams::from_kv_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            Ok((
                params.clone(),
                ParamSource {
                    path: Some(p.display().to_string()),
                    sha256: sha256_hex(&bytes),
                    values: params.to_kv_string(),
                },
            ))
        }
        None => {
            let params = SystemParams::default();
            let values = params.to_kv_string();
            Ok((
                params,
                ParamSource {
                    path: None,
                    sha256: sha256_hex(values.as_bytes()),
                    values,
                },
            ))
        }
    }
}

fn dispatch(ctx: &mut Context, command: &Command) -> Result<(), CliError> {
    match command {
        Command::ZeroDynamics => zero::run(ctx),
        Command::Scan { kind } => scan::run(ctx, *kind),
        Command::Track => control::run(ctx, control::Mode::Track),
        Command::Stabilize => control::run(ctx, control::Mode::Stabilize),
        Command::Equilibrium { y1, yhat2 } => equilibrium::run(ctx, *y1, *yhat2),
        Command::Check { samples, oracle_samples } => check::run(ctx, *samples, *oracle_samples),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let g = &cli.global;

    let workers = g.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        eprintln!("validation error: --workers must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        eprintln!("cannot start worker pool: {e}");
        return ExitCode::from(2);
    }

    let setup = load_params(g.params.as_ref()).and_then(|(params, source)| {
        let model = TwoSiteModel::new(params).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok((model, source, Outputs::new(&g.out)?))
    });
    let (model, params, out) = match setup {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };

    let mut ctx = Context {
        model,
        out,
        config_path: g.config.clone(),
        config_sha256: None,
        resolved: serde_json::Value::Null,
        seed: g.seed,
    };
    let result = dispatch(&mut ctx, &cli.command);

    let manifest = RunManifest {
        toolkit: "twosite",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        argv: std::env::args().collect(),
        params,
        config: ConfigSource {
            path: g.config.as_ref().map(|p| p.display().to_string()),
            sha256: ctx.config_sha256.clone(),
            resolved: ctx.resolved.clone(),
        },
        workers,
        seed: g.seed,
        outputs: ctx.out.written().to_vec(),
        wall_time_s: started.elapsed().as_secs_f64(),
        status: match &result {
            Ok(()) => "ok".into(),
            Err(e) => e.to_string(),
        },
    };
    let manifest_written = ctx.out.json("manifest.json", &manifest);

    match result.and(manifest_written) {
        Ok(()) => {
            eprintln!("wrote {} files to {}", ctx.out.written().len(), ctx.out.dir().display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
