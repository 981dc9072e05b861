//! Batch command-line front end: power sweeps, training runs, learned-model
//! reports, gradient checks and the acceptance self-test.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fiberae::acceptance;
use fiberae::error::Error;
use fiberae::experiment::{
    parse_system, parse_variant, resolve_config, run_report, run_sweep, run_train, CliOverrides,
    Preset,
};

#[derive(Parser)]
#[command(
    name = "fiberae",
    about = "Coherent nonlinear fiber link simulation: conventional baseline and trainable transceiver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Flat key-value config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scale preset: desk | full.
    #[arg(long)]
    preset: Option<String>,
    /// RNG seed for data, noise and initialization streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (a run-id subdirectory is created inside).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Launch power in dBm; repeat for a grid.
    #[arg(long = "power-dbm", allow_negative_numbers = true)]
    power_dbm: Vec<f64>,
    /// Channel variant: a | ad | adn.
    #[arg(long)]
    channel: Option<String>,
    /// Transceiver: conv | ae.
    #[arg(long)]
    system: Option<String>,
    /// Single-sided receiver window (trainable system).
    #[arg(long = "n-adj")]
    n_adj: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a launch-power sweep and write se.csv plus PSD artifacts.
    Sweep(CommonOpts),
    /// Train the trainable transceiver at the first grid power.
    Train(CommonOpts),
    /// Regenerate learned-model artifacts from a checkpoint.
    Report {
        #[command(flatten)]
        opts: CommonOpts,
        /// Checkpoint written by `train` or an ae sweep.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Finite-difference validation of the autodiff engine.
    Gradcheck,
    /// Run the full acceptance suite and print one line per criterion.
    Selftest {
        #[command(flatten)]
        opts: CommonOpts,
        /// Skip the two training criteria and the full-grid sweep.
        #[arg(long)]
        fast: bool,
    },
}

fn build_config(opts: &CommonOpts) -> Result<fiberae::experiment::ExperimentConfig, Error> {
    let file_text = match &opts.config {
        Some(path) => Some(std::fs::read_to_string(path)?),
        None => None,
    };
    let mut cli = CliOverrides {
        seed: opts.seed,
        out: opts.out.clone(),
        powers_dbm: opts.power_dbm.clone(),
        n_adj: opts.n_adj,
        ..Default::default()
    };
    if let Some(p) = &opts.preset {
        cli.preset = Some(match p.as_str() {
            "desk" => Preset::Desk,
            "full" => Preset::Full,
            other => return Err(Error::Config(format!("unknown preset `{other}`"))),
        });
    }
    if let Some(c) = &opts.channel {
        cli.channel = Some(parse_variant(c)?);
    }
    if let Some(s) = &opts.system {
        cli.system = Some(parse_system(s)?);
    }
    resolve_config(file_text.as_deref(), &cli)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Diverged(_) => 2,
        _ => 3,
    }
}

fn run() -> Result<u8, Error> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with successful exit.
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return Ok(code);
        }
    };

    match cli.command {
        Command::Sweep(opts) => {
            let cfg = build_config(&opts)?;
            let out = run_sweep(&cfg)?;
            println!("run directory: {}", out.run_dir.display());
            for r in &out.rows {
                println!(
                    "P {:>6.1} dBm | SNR {:>6.2} dB | MI {:>6.3} bits | SE {:>6.3} | SER {:.3e}{}",
                    r.p_dbm,
                    r.snr_db,
                    r.mi_bits,
                    r.se,
                    r.ser,
                    if r.diverged { " [diverged]" } else { "" }
                );
            }
            Ok(u8::from(out.rows.iter().any(|r| r.diverged)) * 2)
        }
        Command::Train(opts) => {
            let cfg = build_config(&opts)?;
            let out = run_train(&cfg)?;
            println!("run directory: {}", out.run_dir.display());
            let r = &out.rows[0];
            if r.diverged {
                println!("training diverged; partial history written");
                return Ok(2);
            }
            println!(
                "P {:.1} dBm | SNR {:.2} dB | MI {:.3} bits | SE {:.3} | SER {:.3e}",
                r.p_dbm, r.snr_db, r.mi_bits, r.se, r.ser
            );
            Ok(0)
        }
        Command::Report { opts, checkpoint } => {
            let cfg = build_config(&opts)?;
            let dir = run_report(&cfg, &checkpoint)?;
            println!("report written to {}", dir.display());
            Ok(0)
        }
        Command::Gradcheck => {
            let prim = acceptance::primitive_gradcheck_worst(25);
            let composed = acceptance::composed_gradcheck_worst();
            println!("primitive gradients vs finite differences: max rel error {prim:.3e}");
            println!("composed TX+channel+RX graph:              max rel error {composed:.3e}");
            if prim < 1e-5 && composed < 1e-4 {
                println!("gradcheck PASS");
                Ok(0)
            } else {
                println!("gradcheck FAIL");
                Ok(3)
            }
        }
        Command::Selftest { opts, fast } => {
            let out = opts
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("selftest-out"));
            let results = if fast {
                acceptance::run_fast(&out)
            } else {
                acceptance::run_all(&out)
            };
            let mut all_ok = true;
            for r in &results {
                println!(
                    "criterion {:>2} [{}] {}: {}",
                    r.id,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                all_ok &= r.passed;
            }
            Ok(if all_ok { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
