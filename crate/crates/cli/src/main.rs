use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lessvit_cli::commands::{cmd_bench, cmd_generate, cmd_pretrain, cmd_probe, BenchPlan, ModelSource, ProbeMode};
use lessvit_cli::config::{ModelSize, RunConfig};
use lessvit_cli::dataset::resolve_data_dir;
use lessvit_cli::record::Record;
use lessvit_cli::verify::{cmd_verify, Fault, VerifyOptions};
use lessvit_cli::{CliError, Result};
use lessvit_tensor::{set_precision, Precision};

#[derive(Debug, Parser)]
#[command(name = "lessvit", version, about = "LESS ViT desk-scale toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel work; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = PrecisionArg::F64)]
    precision: PrecisionArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic tile dataset and its manifest.
    Generate(GenerateArgs),
    /// Run the invariant checks; exit status 1 if any fails.
    Verify {
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Masked-autoencoder pretraining to a checkpoint.
    Pretrain(PretrainArgs),
    /// MAC counts and timings of LESS against full attention.
    Bench(BenchArgs),
    /// Evaluate frozen encoder features with a probing head.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    /// sentinel2, sentinel12 or a channel count.
    #[arg(long)]
    bands: Option<String>,
    /// Tile side in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// Dataset directory; falls back to the config, then LESS_DATA_DIR.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss curve; defaults to the checkpoint path with `.loss.txt`.
    #[arg(long)]
    loss_log: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelSize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    positions: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    ratio: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long, value_enum)]
    mode: ProbeMode,
    #[arg(long, required_unless_present = "random_init")]
    checkpoint: Option<PathBuf>,
    /// Probe a freshly initialized encoder built from the run config.
    #[arg(long, conflicts_with = "checkpoint")]
    random_init: bool,
    #[arg(long)]
    data: Option<PathBuf>,
    /// PPM output of the pca mode; a `.txt` grid is written beside it.
    #[arg(long)]
    pca_out: Option<PathBuf>,
    /// Tile rendered by the pca mode.
    #[arg(long, default_value_t = 0)]
    tile: usize,
}

fn emit(records: &[Record]) {
    for r in records {
        println!("{r}");
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    set_precision(match cli.precision {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    });
    match cli.command {
        Command::Generate(a) => {
            cfg.data.bands = a.bands.or(cfg.data.bands);
            cfg.data.size = a.size.or(cfg.data.size);
            cfg.data.train_fraction = a.train_fraction.or(cfg.data.train_fraction);
            cfg.data.val_fraction = a.val_fraction.or(cfg.data.val_fraction);
            let count = a.count.or(cfg.data.count).unwrap_or(100);
            emit(&cmd_generate(&a.out, &cfg.synth()?, count, cfg.seed(), cfg.splits())?);
        }
        Command::Verify { inject_fault } => {
            let report = cmd_verify(&VerifyOptions {
                fault: inject_fault,
                seed: cfg.seed(),
            });
            emit(&report.records);
            if report.failed > 0 {
                return Err(CliError::Invariant {
                    failed: report.failed,
                    total: report.passed + report.failed,
                });
            }
        }
        Command::Pretrain(a) => {
            cfg.model.size = a.model.or(cfg.model.size);
            cfg.pretrain.epochs = a.epochs.or(cfg.pretrain.epochs);
            cfg.pretrain.lr = a.lr.or(cfg.pretrain.lr);
            cfg.pretrain.batch_size = a.batch_size.or(cfg.pretrain.batch_size);
            let data = resolve_data_dir(a.data.as_deref(), cfg.data.dir.as_deref())?;
            let log = a.loss_log.unwrap_or_else(|| a.out.with_extension("loss.txt"));
            emit(&cmd_pretrain(&data, &a.out, &log, &cfg.hypermae()?, &cfg.pretrain())?);
        }
        Command::Bench(a) => {
            let d = BenchPlan::default();
            let plan = BenchPlan {
                positions: a.positions.unwrap_or(d.positions),
                channels: a.channels.unwrap_or(d.channels),
                dims: a.dims.unwrap_or(d.dims),
                ratio: a.ratio.or(cfg.model.ratio).unwrap_or(d.ratio),
                rank: a.rank.or(cfg.model.rank).unwrap_or(d.rank),
                seed: cfg.seed(),
            };
            let (records, table) = cmd_bench(&plan)?;
            print!("{table}");
            emit(&records);
        }
        Command::Probe(a) => {
            let source = match a.checkpoint {
                Some(p) if !a.random_init => ModelSource::Checkpoint(p),
                _ => ModelSource::Random {
                    cfg: cfg.hypermae()?,
                    seed: cfg.seed(),
                },
            };
            let data = resolve_data_dir(a.data.as_deref(), cfg.data.dir.as_deref())?;
            emit(&cmd_probe(&source, &data, a.mode, &cfg, a.pca_out.as_deref(), a.tile)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
