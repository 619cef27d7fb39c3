use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kiqt::config::RunConfig;
use kiqt::eval;
use kiqt::io;
use kiqt::kspace::Domain;
use kiqt::pipeline::{self, TrainMode};
use kiqt::sampling::{self, MaskSpec, Pattern};
use kiqt::unet::{Checkpoint, LayerMode, TINY_WIDTH};
use kiqt::{Error, Result};

/// k-space image quality transfer for undersampled low-field MRI.
///
/// Settings resolve as: built-in defaults, then `--config`, then flags.
/// `KIQT_THREADS` caps worker threads.
#[derive(Parser)]
#[command(name = "kiqt", version)]
struct Cli {
    /// `key = value` run configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an undersampling mask (KSD1, or PGM when OUT ends in .pgm).
    Mask(MaskArgs),
    /// Simulate paired low-field/high-field slices into a data directory.
    Simulate(SimulateArgs),
    /// Train with k-fold cross-validation; writes best.ckpt and train_log.csv.
    Train(TrainArgs),
    /// Reconstruct one undersampled k-space file.
    Reconstruct(ReconstructArgs),
    /// Evaluate zero-fill, spatial and k-space reconstructions on the test split.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct MaskArgs {
    /// radial or cartesian.
    #[arg(long)]
    pattern: Option<Pattern>,
    /// Target sampling rate in (0, 1].
    #[arg(long)]
    rate: Option<f64>,
    /// Grid edge length (power of two).
    #[arg(long)]
    size: Option<usize>,
    /// Fraction of central rows always kept (Cartesian).
    #[arg(long)]
    center_fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    /// radial or cartesian.
    #[arg(long)]
    pattern: Option<Pattern>,
    /// Per-component std of the complex image noise.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Retained central k-space band per axis.
    #[arg(long)]
    lowpass_fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    /// kspace or spatial.
    #[arg(long, default_value = "kspace")]
    mode: TrainMode,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Train only the first N folds.
    #[arg(long)]
    fold_limit: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Channels of the first encoder block (64 for the full network).
    #[arg(long)]
    width: Option<usize>,
    /// Shorthand for --width 4.
    #[arg(long, conflicts_with = "width")]
    tiny: bool,
    /// standard or complex.
    #[arg(long)]
    layer_mode: Option<LayerMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Undersampled k-space as a 2-channel KSD1 file.
    #[arg(long)]
    input: PathBuf,
    /// Checkpoint; omit for a zero-filled reconstruction.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Magnitude image: PGM when OUT ends in .pgm, otherwise 1-channel KSD1.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt_kspace: PathBuf,
    #[arg(long)]
    ckpt_spatial: PathBuf,
    /// Comma-separated sampling rates.
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.3")]
    rates: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn set<T: ToString>(cfg: &mut RunConfig, key: &str, value: Option<T>) -> Result<()> {
    match value {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg, "seed", cli.seed)?;
    Ok(cfg)
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn cmd_mask(mut cfg: RunConfig, a: &MaskArgs) -> Result<()> {
    set(&mut cfg, "pattern", a.pattern)?;
    set(&mut cfg, "rate", a.rate)?;
    set(&mut cfg, "size", a.size)?;
    set(&mut cfg, "center_fraction", a.center_fraction)?;
    let spec = MaskSpec {
        pattern: cfg.pattern,
        target_rate: cfg.rate,
        seed: cfg.seed,
        center_fraction: cfg.center_fraction,
    };
    let mask = sampling::generate(&spec, cfg.size, cfg.size)?;
    if has_extension(&a.out, "pgm") {
        let values: Vec<f64> = mask.bits().iter().map(|&b| f64::from(u8::from(b))).collect();
        io::write_pgm(&a.out, cfg.size, cfg.size, &values)?;
    } else {
        io::write_ksd1(&a.out, &mask.to_tensor().cast(), Domain::Frequency)?;
    }
    println!(
        "{} mask {}x{}: {} samples, rate {:.4}",
        spec.pattern,
        cfg.size,
        cfg.size,
        mask.count_ones(),
        mask.achieved_rate()
    );
    Ok(())
}

fn cmd_simulate(mut cfg: RunConfig, a: &SimulateArgs) -> Result<()> {
    set(&mut cfg, "n_train", a.n_train)?;
    set(&mut cfg, "n_test", a.n_test)?;
    set(&mut cfg, "size", a.size)?;
    set(&mut cfg, "rate", a.rate)?;
    set(&mut cfg, "pattern", a.pattern)?;
    set(&mut cfg, "noise_sigma", a.noise_sigma)?;
    set(&mut cfg, "lowpass_fraction", a.lowpass_fraction)?;
    let manifest = pipeline::simulate(&cfg, &a.out, pipeline::threads_from_env()?)?;
    println!("wrote {} slices to {}", manifest.records.len(), a.out.display());
    Ok(())
}

fn cmd_train(mut cfg: RunConfig, a: &TrainArgs) -> Result<()> {
    set(&mut cfg, "epochs", a.epochs)?;
    set(&mut cfg, "folds", a.folds)?;
    set(&mut cfg, "fold_limit", a.fold_limit)?;
    set(&mut cfg, "batch_size", a.batch_size)?;
    set(&mut cfg, "learning_rate", a.learning_rate)?;
    set(&mut cfg, "weight_decay", a.weight_decay)?;
    set(&mut cfg, "base_width", if a.tiny { Some(TINY_WIDTH) } else { a.width })?;
    set(&mut cfg, "layer_mode", a.layer_mode.map(LayerMode::as_str))?;
    let threads = pipeline::threads_from_env()?;
    let outcome = pipeline::train_dir(&a.data, &cfg, a.mode, &a.out, threads)?;
    println!(
        "best checkpoint: fold {} epoch {} validation loss {:.6e} -> {}",
        outcome.best.fold,
        outcome.best.epoch,
        outcome.best.validation_loss,
        a.out.join("best.ckpt").display()
    );
    Ok(())
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let us = io::read_grid(&a.input)?;
    if us.domain() != Domain::Frequency {
        return Err(Error::Domain {
            expected: "frequency",
            found: us.domain().name(),
        });
    }
    let image = match &a.ckpt {
        None => eval::zero_fill_recon(&us)?,
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            match ckpt.params.in_channels {
                2 => eval::kspace_iqt_recon(&ckpt.params, &us)?,
                _ => eval::spatial_iqt_recon(&ckpt.params, &us)?,
            }
        }
    };
    if has_extension(&a.out, "pgm") {
        io::write_pgm(&a.out, image.height(), image.width(), image.data())?;
    } else {
        let t = kiqt::tensor::Tensor::from_vec(
            1,
            image.height(),
            image.width(),
            image.data().iter().map(|&v| v as f32).collect(),
        )?;
        io::write_ksd1(&a.out, &t, Domain::Spatial)?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let missing: Vec<String> = [&a.ckpt_kspace, &a.ckpt_spatial]
        .into_iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let kspace = Checkpoint::load(&a.ckpt_kspace)?;
    let spatial = Checkpoint::load(&a.ckpt_spatial)?;
    let threads = pipeline::threads_from_env()?;
    let report = pipeline::evaluate_dir(&a.data, &kspace, &spatial, &a.rates, &a.out, threads)?;
    print!("{}", report.to_table());
    println!("{} metric rows -> {}", report.rows.len(), a.out.join("metrics.csv").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = base_config(cli)?;
    match &cli.command {
        Command::Mask(a) => cmd_mask(cfg, a),
        Command::Simulate(a) => cmd_simulate(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kiqt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
