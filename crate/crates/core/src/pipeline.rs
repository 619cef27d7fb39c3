//! Directory-level workflow: simulate a dataset, train on it, evaluate checkpoints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{self, MagnitudeImage, Method, MetricReport, MetricRow};
use crate::io::{self, Manifest, SliceRecord, Split};
use crate::kspace::{self, split_complex, ComplexGrid};
use crate::lfsim;
use crate::sampling::{self, Mask, Pattern};
use crate::training::{self, Sample, TrainOutcome};
use crate::unet::Checkpoint;

pub const THREADS_ENV: &str = "KIQT_THREADS";

/// Worker cap from `KIQT_THREADS`; unset or empty means no cap.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    KSpace,
    Spatial,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::KSpace => "kspace",
            TrainMode::Spatial => "spatial",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            TrainMode::KSpace => 2,
            TrainMode::Spatial => 1,
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kspace" => Ok(TrainMode::KSpace),
            "spatial" => Ok(TrainMode::Spatial),
            _ => Err(Error::Usage(format!("unknown mode `{s}` (expected kspace or spatial)"))),
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generates `n_train + n_test` slice pairs into `out`. Slice `i` uses seed
/// `cfg.seed + i` for its phantom, degradation and mask; test slices follow
/// the training slices.
pub fn simulate(cfg: &RunConfig, out: &Path, threads: Option<usize>) -> Result<Manifest> {
    cfg.validate()?;
    if cfg.n_train + cfg.n_test == 0 {
        return Err(Error::Config("nothing to simulate: n_train and n_test are both 0".into()));
    }
    let prior = cfg.prior()?;
    create_dir(out)?;
    let indices: Vec<usize> = (0..cfg.n_train + cfg.n_test).collect();
    let records = crate::par::with_threads(threads, || crate::par::map(&indices, |&index| {
        let seed = cfg.seed.wrapping_add(index as u64);
        let hf = lfsim::gen_phantom(seed, cfg.size, cfg.size)?;
        let spec = cfg.mask_spec(cfg.pattern, cfg.rate, seed);
        let pair = lfsim::build_pair(&hf, &prior, &cfg.degradation(seed), &spec, seed)?;
        let name = |kind: &str| PathBuf::from(format!("slice_{index:04}_{kind}.ksd"));
        let rec = SliceRecord {
            index,
            split: if index < cfg.n_train { Split::Train } else { Split::Test },
            size: cfg.size,
            phantom_seed: seed,
            degrade_seed: seed,
            noise_sigma: cfg.noise_sigma,
            lowpass_fraction: cfg.lowpass_fraction,
            mask: spec,
            scale: pair.record.scale(),
            input: name("input"),
            target: name("target"),
            lf: name("lf"),
        };
        io::write_grid(&out.join(&rec.input), &pair.input)?;
        io::write_grid(&out.join(&rec.target), &pair.target)?;
        io::write_grid(&out.join(&rec.lf), &pair.lf_kspace)?;
        Ok(rec)
    }))?;
    let manifest = Manifest { records };
    manifest.save(out)?;
    cfg.save(&out.join("simulate.cfg"))?;
    Ok(manifest)
}

/// Network input/target pair for one record.
pub fn load_sample(dir: &Path, rec: &SliceRecord, mode: TrainMode) -> Result<Sample> {
    let input = io::read_grid(&dir.join(&rec.input))?;
    let target = io::read_grid(&dir.join(&rec.target))?;
    match mode {
        TrainMode::KSpace => Ok(Sample {
            input: split_complex(&input).cast(),
            target: split_complex(&target).cast(),
        }),
        TrainMode::Spatial => {
            let (input, target) = eval::spatial_sample(&input, &target)?;
            Ok(Sample { input, target })
        }
    }
}

pub fn load_training_samples(dir: &Path, manifest: &Manifest, mode: TrainMode) -> Result<Vec<Sample>> {
    let records: Vec<&SliceRecord> = manifest.split(Split::Train).collect();
    if records.is_empty() {
        return Err(Error::Config(format!("{} has no training slices", dir.display())));
    }
    crate::par::map(&records, |r| load_sample(dir, r, mode))
}

pub fn log_csv(outcome: &TrainOutcome) -> String {
    let mut s = String::from("fold,epoch,train_loss,val_loss\n");
    for l in &outcome.log {
        let _ = writeln!(s, "{},{},{:.9e},{:.9e}", l.fold, l.epoch, l.train_loss, l.val_loss);
    }
    s
}

/// Trains on the training split of `data`; writes `best.ckpt`, `train_log.csv`
/// and `fold_best.csv` into `out`.
pub fn train_dir(data: &Path, cfg: &RunConfig, mode: TrainMode, out: &Path, threads: Option<usize>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = Manifest::load(data)?;
    let samples = crate::par::with_threads(threads, || load_training_samples(data, &manifest, mode))?;
    let outcome = training::train_samples(
        &samples,
        &cfg.train_config(threads),
        &cfg.model_config(mode.channels()),
    )?;
    create_dir(out)?;
    outcome.best.save(&out.join("best.ckpt"))?;
    io::write_bytes(&out.join("train_log.csv"), log_csv(&outcome).as_bytes())?;
    let mut folds = String::from("fold,best_val_loss\n");
    for (fold, v) in outcome.fold_best.iter().enumerate() {
        let _ = writeln!(folds, "{fold},{v:.9e}");
    }
    io::write_bytes(&out.join("fold_best.csv"), folds.as_bytes())?;
    cfg.save(&out.join("train.cfg"))?;
    Ok(outcome)
}

/// Mask for a record at an arbitrary condition, reusing its seed.
pub fn condition_mask(rec: &SliceRecord, pattern: Pattern, rate: f64) -> Result<Mask> {
    if rate >= 1.0 {
        return Ok(Mask::full(rec.size, rec.size));
    }
    let spec = sampling::MaskSpec {
        pattern,
        target_rate: rate,
        ..rec.mask
    };
    sampling::generate(&spec, rec.size, rec.size)
}

/// High-field reference magnitude recovered from the stored target.
pub fn reference_image(dir: &Path, rec: &SliceRecord) -> Result<MagnitudeImage> {
    let target = io::read_grid(&dir.join(&rec.target))?;
    let record = kspace::NormalizationRecord::new(rec.scale)?;
    eval::zero_fill_recon(&kspace::denormalize(&target, record)?)
}

fn rate_tag(rate: f64) -> String {
    format!("r{:03}", (rate * 100.0).round() as i64)
}

/// Reconstructions and metrics for every test slice under each method,
/// pattern and rate. Images go to `out/images`, tables to `out`.
pub fn evaluate_dir(
    data: &Path,
    kspace_ckpt: &Checkpoint,
    spatial_ckpt: &Checkpoint,
    rates: &[f64],
    out: &Path,
    threads: Option<usize>,
) -> Result<MetricReport> {
    if rates.is_empty() {
        return Err(Error::Config("no sampling rates given".into()));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::Config(format!("sampling rate {r} outside (0, 1]")));
    }
    let manifest = Manifest::load(data)?;
    let tests: Vec<&SliceRecord> = manifest.split(Split::Test).collect();
    if tests.is_empty() {
        return Err(Error::Config(format!("{} has no test slices", data.display())));
    }
    let missing: Vec<String> = tests
        .iter()
        .flat_map(|r| [&r.target, &r.lf])
        .map(|p| data.join(p))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let images = out.join("images");
    create_dir(&images)?;

    let per_slice = crate::par::with_threads(threads, || {
        crate::par::map(&tests, |rec| {
            let reference = reference_image(data, rec)?;
            io::write_pgm(
                &images.join(format!("hf_{:04}.pgm", rec.index)),
                reference.height(),
                reference.width(),
                reference.data(),
            )?;
            let lf = io::read_grid(&data.join(&rec.lf))?;
            let mut rows = Vec::new();
            for pattern in Pattern::ALL {
                for &rate in rates {
                    let us = sampling::apply_mask(&lf, &condition_mask(rec, pattern, rate)?)?;
                    for method in Method::ALL {
                        let recon = reconstruct(method, kspace_ckpt, spatial_ckpt, &us)?;
                        let err = eval::error_map(&recon, &reference)?;
                        let stem = format!("{}_{}_{}_{:04}", method, pattern, rate_tag(rate), rec.index);
                        io::write_pgm(&images.join(format!("{stem}_recon.pgm")), recon.height(), recon.width(), recon.data())?;
                        io::write_pgm(&images.join(format!("{stem}_error.pgm")), err.height(), err.width(), err.data())?;
                        rows.push(MetricRow {
                            method,
                            pattern,
                            rate,
                            slice: rec.index,
                            psnr_db: eval::psnr(&recon, &reference)?,
                            ssim: eval::ssim(&recon, &reference)?,
                        });
                    }
                }
            }
            Ok(rows)
        })
    })?;
    let mut rows: Vec<MetricRow> = per_slice.into_iter().flatten().collect();
    rows.sort_by_key(|r| r.method);
    let report = MetricReport { rows };
    io::write_bytes(&out.join("metrics.csv"), report.to_csv().as_bytes())?;
    io::write_bytes(&out.join("table.txt"), report.to_table().as_bytes())?;
    Ok(report)
}

pub fn reconstruct(method: Method, kspace_ckpt: &Checkpoint, spatial_ckpt: &Checkpoint, us: &ComplexGrid) -> Result<MagnitudeImage> {
    match method {
        Method::ZeroFill => eval::zero_fill_recon(us),
        Method::SpatialIqt => eval::spatial_iqt_recon(&spatial_ckpt.params, us),
        Method::KspaceIqt => eval::kspace_iqt_recon(&kspace_ckpt.params, us),
    }
}
