use clap::{Parser, Subcommand};
use gbsde::cli::{cmd_gexp, cmd_skorokhod, cmd_solve};
use gbsde::config::RunConfig;
use gbsde::selftest::run_selftest;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gbsde",
    about = "Doubly mean-reflected G-BSDE solvers: Skorokhod maps, a G-expectation engine and Picard iteration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the sublinear expectation of a payoff over the time grid.
    Gexp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        verbose: bool,
    },
    /// Solve a two-barrier Skorokhod problem for a configured input curve.
    Skorokhod {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        verbose: bool,
    },
    /// Solve a doubly mean-reflected system and emit the solution bundle.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        verbose: bool,
    },
    /// Run the deterministic property suite at desk scale.
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        verbose: bool,
    },
}

fn load(config: &PathBuf, seed: Option<u64>) -> gbsde::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Gexp {
            config,
            out,
            seed,
            verbose,
        } => run(|| {
            let cfg = load(&config, seed)?;
            let path = cmd_gexp(&cfg, &out)?;
            if verbose {
                eprintln!("wrote {}", path.display());
            }
            Ok(0)
        }),
        Command::Skorokhod {
            config,
            out,
            seed,
            verbose,
        } => run(|| {
            let cfg = load(&config, seed)?;
            let base = config.parent().map(|p| p.to_path_buf());
            let path = cmd_skorokhod(&cfg, &out, base.as_deref())?;
            if verbose {
                eprintln!("wrote {}", path.display());
            }
            Ok(0)
        }),
        Command::Solve {
            config,
            out,
            seed,
            verbose,
        } => run(|| {
            let cfg = load(&config, seed)?;
            let base = config.parent().map(|p| p.to_path_buf());
            let outcome = cmd_solve(&cfg, &out, base.as_deref())?;
            if verbose {
                for f in &outcome.files {
                    eprintln!("wrote {}", f.display());
                }
                eprintln!(
                    "label {:?}, {} sweeps, all_pass = {}",
                    outcome.solution.label, outcome.solution.iterations, outcome.all_pass
                );
            }
            Ok(if outcome.all_pass { 0 } else { 1 })
        }),
        Command::Selftest { seed, verbose } => run(|| {
            let checks = run_selftest(seed.unwrap_or(42));
            let mut failed = 0;
            for c in &checks {
                if c.pass {
                    println!("ok   {:<38} {}", c.name, c.detail);
                } else {
                    println!("FAIL {:<38} {}", c.name, c.detail);
                    failed += 1;
                }
            }
            println!("selftest: {} checks, {} failed", checks.len(), failed);
            let _ = verbose;
            Ok(if failed == 0 { 0 } else { 1 })
        }),
    };
    ExitCode::from(code)
}

fn run(f: impl FnOnce() -> gbsde::Result<i32>) -> u8 {
    match f() {
        Ok(code) => code as u8,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}
