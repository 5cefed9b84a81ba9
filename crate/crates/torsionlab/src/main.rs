use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use torsionlab::commands::{self, format_oracle};
use torsionlab::config::{parse_complex, OracleCall, ORACLE_NAMES};
use torsionlab::{resolve_threads, CliError, CliResult, Context, RunConfig};

#[derive(Parser)]
#[command(name = "torsionlab", version, about = "Analytic torsion on flat tori")]
struct Cli {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to TORSIONLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides every tolerance in the config.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Zeta data and torsion for compute jobs.
    Compute {
        #[arg(long)]
        job: Option<String>,
    },
    /// Metric, gauge and flux sweeps.
    Sweep {
        #[arg(long)]
        job: Option<String>,
    },
    /// Runs every declared suite.
    Verify,
    /// Prints a closed-form value.
    Oracle {
        name: String,
        #[arg(long)]
        tau: Option<String>,
        #[arg(long)]
        z: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        v: Option<f64>,
    },
}

fn need<T>(x: Option<T>, flag: &str, name: &str) -> CliResult<T> {
    x.ok_or_else(|| CliError::Config(format!("oracle {name} needs --{flag}")))
}

fn complex_arg(s: Option<String>, flag: &str, name: &str) -> CliResult<[f64; 2]> {
    let s = need(s, flag, name)?;
    let z = parse_complex(&s).ok_or_else(|| CliError::Config(format!("cannot parse complex number '{s}'")))?;
    Ok([z.re, z.im])
}

fn context(cli: &Cli) -> CliResult<Context> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let threads = resolve_threads(cli.threads.or(cfg.knobs.threads));
    Context::new(cfg, threads, cli.out.clone(), cli.tolerance)
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.cmd {
        Cmd::Compute { job } => {
            for p in commands::compute(&context(&cli)?, job.as_deref())? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Sweep { job } => {
            let mut failed = Vec::new();
            for (p, r) in commands::sweep(&context(&cli)?, job.as_deref())? {
                println!("{} {} -> {}", if r.pass { "PASS" } else { "FAIL" }, r.suite, p.display());
                if !r.pass {
                    failed.push(p.display().to_string());
                }
            }
            if !failed.is_empty() {
                return Err(CliError::Failed(failed));
            }
        }
        Cmd::Verify => {
            let s = commands::verify(&context(&cli)?)?;
            println!("all {} suites pass; summary in {}", s.reports.len(), s.path.display());
        }
        Cmd::Oracle { name, tau, z, u, v } => {
            let call = match name.as_str() {
                "eta" => OracleCall::Eta { tau: complex_arg(tau.clone(), "tau", name)? },
                "theta1" => OracleCall::Theta1 {
                    z: complex_arg(z.clone(), "z", name)?,
                    tau: complex_arg(tau.clone(), "tau", name)?,
                },
                "kronecker" => OracleCall::Kronecker {
                    u: need(*u, "u", name)?,
                    v: need(*v, "v", name)?,
                    tau: complex_arg(tau.clone(), "tau", name)?,
                },
                "hurwitz-logdet" => OracleCall::HurwitzLogdet { u: need(*u, "u", name)? },
                other => {
                    return Err(CliError::Config(format!(
                        "unknown formula '{other}'; known: {}",
                        ORACLE_NAMES.join(", ")
                    )))
                }
            };
            println!("{}", format_oracle(commands::oracle(&call)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
