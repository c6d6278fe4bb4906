use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use spikefolio::config::RunConfig;
use spikefolio::{pipeline, Error, Result};

#[derive(Parser)]
#[command(name = "spikefolio", version, about = "Spiking-network portfolio policy: ingest, train, backtest, quantize, bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest JSON from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load or fetch candles, align, select the universe and split.
    Ingest(Common),
    /// Train the policy on the training split.
    Train(Common),
    /// Back-test strategies on the back-test split.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subset of sdp, ucrp, best_stock.
        #[arg(long, default_value = "sdp,ucrp,best_stock")]
        strategies: String,
    },
    /// Rescale weights to integers and report divergence from the float net.
    Quantize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Measure float and quantized inference throughput.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Seconds per variant.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
    },
}

fn run(cli: Cli) -> Result<()> {
    let load = |c: &Common| RunConfig::load(&c.config);
    match cli.command {
        Command::Ingest(c) => {
            let info = pipeline::cmd_ingest(&load(&c)?, &c.out)?;
            println!("ingested {} assets, {} candles ({} train / {} back-test)", info.symbols.len(), info.total_len, info.train_len, info.backtest_len);
        }
        Command::Train(c) => {
            let ckpt = pipeline::cmd_train(&load(&c)?, &c.out)?;
            println!("trained {} steps, checkpoint at {}", ckpt.step, c.out.join(pipeline::CHECKPOINT_FILE).display());
        }
        Command::Backtest { common, checkpoint, strategies } => {
            let cfg = load(&common)?;
            let names = pipeline::parse_strategies(&strategies)?;
            let reports = pipeline::cmd_backtest(&cfg, &common.out, checkpoint.as_deref(), &names)?;
            print!("{}", spikefolio::metrics::comparison_text(&spikefolio::metrics::comparison_rows(&reports)));
        }
        Command::Quantize { common, checkpoint } => {
            let report = pipeline::cmd_quantize(&load(&common)?, &common.out, checkpoint.as_deref())?;
            println!("mean action L1 {:.6}, max {:.6}", report.mean_action_l1, report.max_action_l1);
        }
        Command::Bench { common, checkpoint, duration } => {
            if !(duration.is_finite() && duration >= 0.0) {
                return Err(Error::Config(format!("duration must be a non-negative number of seconds, got {duration}")));
            }
            let report = pipeline::cmd_bench(&load(&common)?, &common.out, checkpoint.as_deref(), Duration::from_secs_f64(duration))?;
            for r in &report.rows {
                println!("{:<10} {:>12.1} inf/s  mean {:.1} us  median {:.1} us  p99 {:.1} us", r.variant, r.inferences_per_sec, r.mean_us, r.median_us, r.p99_us);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
