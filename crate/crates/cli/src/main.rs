//! `atp`: prune, sweep, cost, visualize and probe visual token pruning over
//! ATPF fixture files.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use atp_core::{IntraMode, Keep, LmShape, PruneConfig};
use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "atp", version, about = "Training-free visual token pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct PruneArgs {
    /// Weight of text relevance against attention saliency.
    #[arg(long, default_value_t = atp_core::pruner::DEFAULT_ALPHA)]
    alpha: f64,
    /// Fraction of patches to keep; defaults to 0.6.
    #[arg(long, conflicts_with = "keep_k")]
    keep_ratio: Option<f64>,
    /// Absolute number of patches to keep.
    #[arg(long)]
    keep_k: Option<usize>,
    #[arg(long, default_value = "cls_row", value_parser = ["cls_row", "row_sum"])]
    intra_mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PruneArgs {
    fn config(&self) -> Result<PruneConfig, CliError> {
        let keep = match (self.keep_ratio, self.keep_k) {
            (_, Some(k)) => Keep::Count(k),
            (Some(r), None) => Keep::Ratio(r),
            (None, None) => Keep::Ratio(atp_core::pruner::DEFAULT_KEEP_RATIO),
        };
        let cfg = PruneConfig {
            alpha: self.alpha,
            keep,
            intra_mode: parse_mode(&self.intra_mode)?,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_mode(s: &str) -> Result<IntraMode, CliError> {
    Ok(s.parse::<IntraMode>()?)
}

#[derive(Args, Debug, Clone)]
struct CostArgs {
    #[arg(long, default_value_t = 32)]
    layers: u64,
    #[arg(long, default_value_t = 4096)]
    hidden: u64,
    /// Bytes per cached key/value element.
    #[arg(long, default_value_t = 2)]
    kv_bytes: u64,
    /// Text tokens appended after the visual prefix.
    #[arg(long, default_value_t = 0)]
    text_len: u64,
    /// Share of end-to-end latency spent decoding.
    #[arg(long, default_value_t = atp_core::cost::DEFAULT_DECODE_FRACTION)]
    decode_fraction: f64,
}

impl CostArgs {
    fn shape(&self) -> Result<LmShape, CliError> {
        Ok(LmShape::new(self.layers, self.hidden, self.kv_bytes)?)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score and prune one fixture, writing the full result as JSON.
    Prune {
        #[arg(long)]
        fixture: PathBuf,
        #[command(flatten)]
        prune: PruneArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid over alpha × keep ratio, one CSV row per cell.
    Sweep {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.6")]
        keep_ratio: Vec<f64>,
        #[arg(long, default_value = "cls_row", value_parser = ["cls_row", "row_sum"])]
        intra_mode: String,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Modeled prefill FLOPs, kv-cache and speedup for N → K visual tokens.
    Cost {
        /// Visual tokens before pruning.
        #[arg(long)]
        n: u64,
        #[arg(long, conflicts_with = "keep_k")]
        keep_ratio: Option<f64>,
        #[arg(long)]
        keep_k: Option<u64>,
        #[command(flatten)]
        cost: CostArgs,
    },
    /// Render kept (blue) and removed (gray) patches as a P6 PPM.
    Viz {
        #[arg(long)]
        fixture: PathBuf,
        #[command(flatten)]
        prune: PruneArgs,
        #[arg(long, default_value_t = 16)]
        cell_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Jaccard overlap of kept sets under Gaussian embedding noise.
    Stability {
        #[arg(long)]
        fixture: PathBuf,
        #[command(flatten)]
        prune: PruneArgs,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic fixture with a planted salient block.
    Gen {
        #[arg(long, default_value_t = 16)]
        grid_rows: usize,
        #[arg(long, default_value_t = 16)]
        grid_cols: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        /// Planted block as row0,col0,height,width.
        #[arg(long, value_delimiter = ',', default_value = "6,6,4,4")]
        block: Vec<usize>,
        #[arg(long, default_value_t = 0.9)]
        signal_strength: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prune {
            fixture,
            prune,
            out,
        } => commands::prune(&fixture, &prune.config()?, out.as_deref()),
        Command::Sweep {
            fixture,
            alpha,
            keep_ratio,
            intra_mode,
            cost,
            out,
        } => commands::sweep(
            &commands::SweepSpec {
                fixture,
                alphas: alpha,
                keep_ratios: keep_ratio,
                intra_mode: parse_mode(&intra_mode)?,
                shape: cost.shape()?,
                text_len: cost.text_len,
                decode_fraction: cost.decode_fraction,
            },
            out.as_deref(),
        ),
        Command::Cost {
            n,
            keep_ratio,
            keep_k,
            cost,
        } => {
            let k = match (keep_k, keep_ratio) {
                (Some(k), _) => k,
                (None, r) => Keep::Ratio(r.unwrap_or(atp_core::pruner::DEFAULT_KEEP_RATIO))
                    .resolve(n as usize)? as u64,
            };
            commands::cost(n, k, cost.text_len, &cost.shape()?, cost.decode_fraction)
        }
        Command::Viz {
            fixture,
            prune,
            cell_size,
            out,
        } => commands::viz(&fixture, &prune.config()?, cell_size, &out),
        Command::Stability {
            fixture,
            prune,
            sigma,
            trials,
            out,
        } => commands::stability(&fixture, &prune.config()?, sigma, trials, out.as_deref()),
        Command::Gen {
            grid_rows,
            grid_cols,
            dim,
            heads,
            block,
            signal_strength,
            seed,
            out,
        } => {
            let [row0, col0, height, width] = block[..] else {
                return Err(CliError::Invalid(
                    "--block takes four values: row0,col0,height,width".into(),
                ));
            };
            commands::generate(
                &atp_core::SyntheticSpec {
                    grid_rows,
                    grid_cols,
                    dim,
                    heads,
                    block: atp_core::PlantedBlock {
                        row0,
                        col0,
                        height,
                        width,
                    },
                    signal_strength,
                    seed,
                },
                &out,
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ATP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
