use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tbsnn::encoders::{encode, Encoding};
use tbsnn::harness::{
    compare_encoders, emit_comparison_csv, emit_csv, emit_markdown, final_val, load_dataset, run_experiment,
    write_spike_dump, TrainConfig, DATA_DIR_ENV,
};
use tbsnn::SeededRng;

#[derive(Parser)]
#[command(name = "tbsnn", version, about = "Spike encoders and surrogate-gradient SNN training")]
struct Cli {
    /// Directory that relative dataset paths in the config are resolved against.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the first samples of the configured dataset and write a spike dump.
    Encode {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's encoder.
        #[arg(long)]
        encoder: Option<Encoding>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration and write `metrics.csv`.
    Train(RunArgs),
    /// Train once per encoder and write a comparison table.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated encoder names.
        #[arg(long, value_delimiter = ',', required = true)]
        encoders: Vec<Encoding>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn load_config(path: &Path, data_dir: Option<&Path>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::from_path(path)?;
    if let Some(root) = data_dir {
        cfg.resolve_paths(root);
    }
    Ok(cfg)
}

fn prepare(args: &RunArgs, data_dir: Option<&Path>) -> Result<TrainConfig> {
    let mut cfg = load_config(&args.config, data_dir)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let data_dir = cli.data_dir.as_deref();
    match cli.command {
        Command::Encode {
            config,
            encoder,
            count,
            out,
        } => {
            let cfg = load_config(&config, data_dir)?;
            let ds = load_dataset(&cfg)?;
            if count == 0 || count > ds.len() {
                bail!("--count must be in 1..={}, got {count}", ds.len());
            }
            let encoding = encoder.unwrap_or(cfg.encoder.kind);
            let images = ds.take(count).images;
            let train = encode(encoding, &images, &cfg.encoder.config(), &mut SeededRng::new(cfg.seed))?;
            write_spike_dump(&train, &out)?;
            println!("{encoding}: shape {:?} -> {}", train.spikes().shape(), out.display());
        }
        Command::Train(args) => {
            let cfg = prepare(&args, data_dir)?;
            let records = run_experiment(&cfg)?;
            let path = args.out_dir.join("metrics.csv");
            emit_csv(&records, &path)?;
            let last = final_val(&records).expect("epochs >= 1");
            println!(
                "epoch {} val top1 {:.4} loss {:.4} -> {}",
                last.epoch,
                last.top1,
                last.loss,
                path.display()
            );
        }
        Command::Compare { run, encoders } => {
            let cfg = prepare(&run, data_dir)?;
            let table = compare_encoders(&cfg, &encoders)?;
            for row in &table.rows {
                emit_csv(&row.records, run.out_dir.join(format!("metrics-{}.csv", row.encoding)))?;
            }
            let tables = [table];
            emit_comparison_csv(&tables, run.out_dir.join("comparison.csv"))?;
            emit_markdown(&tables, run.out_dir.join("comparison.md"))?;
            for row in &tables[0].rows {
                let delta = row.delta.map(|d| format!(" ({:+.2})", d * 100.0)).unwrap_or_default();
                println!("{:<20} {:6.2}{delta}", row.encoding, row.top1 * 100.0);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
