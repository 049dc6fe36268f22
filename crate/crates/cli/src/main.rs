use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use muxclock_cli::commands::{self, AttackOptions, Overrides};
use muxclock_cli::config::parse_key;
use muxclock_cli::{CliError, ExperimentConfig};
use muxclock_core::aes::to_hex;

#[derive(Parser)]
#[command(name = "muxclock", version, about = "Randomized mux clock side-channel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Clock statistics, period histograms and timing overheads per set.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Generate one trace file per set.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Filter, align and attack a trace file.
    Attack {
        traces: PathBuf,
        /// True key in hex; enables ranks and the minimum-trace search.
        #[arg(long, value_name = "KEYHEX")]
        evaluate: Option<String>,
        /// Correlate over whole unaligned traces.
        #[arg(long)]
        no_sync: bool,
        /// Trace-count grid of the minimum-trace search.
        #[arg(long, value_name = "N")]
        step: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Attack thresholds from a config file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Averaged spectrum of a trace file.
    Fft {
        traces: PathBuf,
        /// Frequency bin width in Hz.
        #[arg(long, value_name = "HZ", allow_negative_numbers = true)]
        bin: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, generate and attack every set, then rank them.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "N")]
        step: Option<usize>,
    },
}

fn load(common: &Common, step: Option<usize>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    Overrides {
        seed: common.seed,
        out: common.out.clone(),
        step,
    }
    .apply(&mut cfg)?;
    Ok(cfg)
}

fn fmt_min(m: Option<usize>) -> String {
    m.map_or("not broken".into(), |n| n.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = load(&common, None)?;
            for r in commands::simulate(&cfg)? {
                println!(
                    "{:<48} edges {:>7}  unique {:>5}  overhead {:+.3}  error risk {:.4}",
                    r.label, r.n_edges, r.unique_periods, r.mean_overhead, r.error_risk
                );
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Gen { common } => {
            let cfg = load(&common, None)?;
            for e in commands::gen(&cfg)? {
                println!(
                    "{:<48} {} traces, failed fraction {:.4} -> {}",
                    e.label,
                    e.n_traces,
                    e.failed_fraction,
                    cfg.out.join(&e.file).display()
                );
            }
        }
        Command::Attack { traces, evaluate, no_sync, step, out, config } => {
            let evaluate = evaluate
                .map(|k| parse_key(&k, "--evaluate"))
                .transpose()
                .map_err(CliError::Usage)?;
            let config = config.map(|p| ExperimentConfig::load(&p)).transpose()?;
            let o = commands::attack(&traces, &AttackOptions { evaluate, no_sync, step, out, config })?;
            let r = &o.report;
            println!(
                "min traces {}  kept {}/{}  removed {:.3}  failed {:.3}  max delay {} samples",
                fmt_min(r.min_traces),
                r.kept_traces,
                r.n_traces,
                r.removed_fraction,
                r.failed_fraction,
                r.max_delay_samples
            );
            println!("recovered key {}", to_hex(&o.cpa.recovered_key));
            if let Some(ranks) = o.cpa.ranks() {
                println!("true-byte ranks {ranks:?}");
            }
        }
        Command::Fft { traces, bin, out } => {
            let s = commands::fft(&traces, bin, out.as_deref())?;
            if let Some(d) = s.dominant_hz {
                println!("dominant bin {:.3} MHz (bin width {:.1} kHz)", d / 1e6, s.bin_hz / 1e3);
            }
            for p in &s.top_peaks {
                println!("  {:>10.3} MHz  {:.4e}", p.bin_low_hz / 1e6, p.magnitude);
            }
        }
        Command::Compare { common, step } => {
            let cfg = load(&common, step)?;
            let rows = commands::compare(&cfg)?;
            println!("{:>4}  {:<48} {:>11} {:>8} {:>8} {:>9}", "rank", "set", "min traces", "removed", "failed", "overhead");
            for (i, r) in rows.iter().enumerate() {
                println!(
                    "{:>4}  {:<48} {:>11} {:>8.3} {:>8.3} {:>+9.3}",
                    i + 1,
                    r.label,
                    fmt_min(r.min_traces),
                    r.removed_fraction,
                    r.failed_fraction,
                    r.mean_overhead
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("muxclock: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
