//! Combined MAE+MSE loss, Adam with decoupled weight decay, k-fold
//! cross-validation and best-checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::unet::{self, Checkpoint, LayerMode, UNetParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

const SHUFFLE_STREAM: u64 = 0x7368_7566;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mae: f64,
    pub mse: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mae: 1.0, mse: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Decay weights directly (`p ← p·(1 − lr·wd)`) instead of adding `wd·p` to the gradient.
    pub decoupled_weight_decay: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    /// Train only the first `n` folds when set.
    pub fold_limit: Option<usize>,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Worker threads for per-sample gradients; `None` uses the default pool.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-6,
            decoupled_weight_decay: true,
            batch_size: 8,
            epochs: 30,
            folds: 3,
            fold_limit: None,
            loss_weights: LossWeights::default(),
            seed: 1,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning rate", self.learning_rate)?;
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.loss_weights.mae < 0.0
            || self.loss_weights.mse < 0.0
            || self.loss_weights.mae + self.loss_weights.mse <= 0.0
        {
            return Err(Error::Config("loss weights must be >= 0 and not both zero".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.fold_limit == Some(0) {
            return Err(Error::Config("fold limit must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        Ok(())
    }
}

fn check_same_shape<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if !pred.same_shape(target) {
        return Err(Error::shape(
            "loss",
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    Ok(())
}

/// `α·mean|p − t| + β·mean (p − t)²` over all elements.
pub fn loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, w: LossWeights) -> Result<f64> {
    check_same_shape(pred, target)?;
    let n = pred.data().len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.as_f64() - t.as_f64();
        abs += d.abs();
        sq += d * d;
    }
    Ok(w.mae * abs / n + w.mse * sq / n)
}

/// Gradient of [`loss`] with respect to `pred`, scaled by `scale`.
pub fn loss_grad<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, w: LossWeights, scale: f64) -> Result<Tensor<T>> {
    check_same_shape(pred, target)?;
    let n = pred.data().len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            let sign = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            T::cast_from(scale * (w.mae * sign + 2.0 * w.mse * d) / n)
        })
        .collect();
    Tensor::from_vec(pred.channels(), pred.height(), pred.width(), data)
}

/// First and second moments for every parameter array, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &UNetParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params
            .arrays()
            .iter()
            .map(|a| vec![T::zero(); a.values.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Adam update for flat parameter arrays.
pub fn adam_update<T: Real>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    let step = state.t + 1;
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Training {
            step,
            detail: "non-finite gradient".into(),
        });
    }
    let lr = cfg.learning_rate;
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    let decay = T::cast_from(1.0 - lr * cfg.weight_decay);
    let (b1, b2) = (T::cast_from(ADAM_BETA1), T::cast_from(ADAM_BETA2));
    let (one_b1, one_b2) = (T::cast_from(1.0 - ADAM_BETA1), T::cast_from(1.0 - ADAM_BETA2));
    let wd = T::cast_from(cfg.weight_decay);
    let step_size = T::cast_from(lr / bc1);
    let inv_sqrt_bc2 = T::cast_from(1.0 / bc2.sqrt());
    let eps = T::cast_from(ADAM_EPSILON);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let mut gj = g[j];
            if cfg.decoupled_weight_decay {
                p[j] = p[j] * decay;
            } else {
                gj = gj + wd * p[j];
            }
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            p[j] = p[j] - step_size * m[j] / ((v[j]).sqrt() * inv_sqrt_bc2 + eps);
        }
    }
    state.t = step;
    Ok(())
}

/// One optimizer step on a full parameter set.
pub fn adam_step<T: Real>(
    params: &mut UNetParams<T>,
    grads: &UNetParams<T>,
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    let g = grads.arrays();
    let g: Vec<&[T]> = g.iter().map(|a| a.values).collect();
    let mut p = params.arrays_mut();
    adam_update(&mut p, &g, state, cfg)
}

/// Seeded permutation cut into `folds` contiguous blocks; block `k` validates fold `k`.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 || n < folds {
        return Err(Error::Config(format!(
            "cannot split {n} slices into {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut bounds = Vec::with_capacity(folds + 1);
    bounds.push(0);
    for k in 0..folds {
        bounds.push(bounds[k] + base + usize::from(k < extra));
    }
    Ok((0..folds)
        .map(|k| {
            let val = order[bounds[k]..bounds[k + 1]].to_vec();
            let train = order[..bounds[k]]
                .iter()
                .chain(&order[bounds[k + 1]..])
                .copied()
                .collect();
            (train, val)
        })
        .collect())
}

/// An input/target pair in the network's native layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
}

/// Architecture of the network being trained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub mode: LayerMode,
    pub channels: usize,
    pub base_width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub fold: usize,
    /// 0 is the evaluation of the freshly initialized network.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Lowest validation loss seen in each fold.
    pub fold_best: Vec<f64>,
}

/// Stable hash of everything that determines a training run.
pub fn fingerprint(cfg: &TrainConfig, model: &ModelConfig, n_samples: usize) -> u64 {
    let text = format!(
        "lr={:e};wd={:e};decoupled={};batch={};epochs={};folds={};limit={:?};mae={:e};mse={:e};seed={};mode={};ch={};width={};n={}",
        cfg.learning_rate,
        cfg.weight_decay,
        cfg.decoupled_weight_decay,
        cfg.batch_size,
        cfg.epochs,
        cfg.folds,
        cfg.fold_limit,
        cfg.loss_weights.mae,
        cfg.loss_weights.mse,
        cfg.seed,
        model.mode,
        model.channels,
        model.base_width,
        n_samples
    );
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn sample_loss(params: &UNetParams<f32>, s: &Sample, w: LossWeights) -> Result<f64> {
    loss(&unet::unet_forward(params, &s.input)?, &s.target, w)
}

fn mean_loss(params: &UNetParams<f32>, samples: &[Sample], idx: &[usize], w: LossWeights) -> Result<f64> {
    let losses = crate::par::map(idx, |&i| sample_loss(params, &samples[i], w))?;
    Ok(losses.iter().sum::<f64>() / idx.len().max(1) as f64)
}

/// Mean loss over a batch and the gradient of that mean. Per-sample gradients
/// are summed in batch order so the result is independent of worker count.
pub fn batch_gradient(
    params: &UNetParams<f32>,
    samples: &[Sample],
    batch: &[usize],
    w: LossWeights,
) -> Result<(f64, UNetParams<f32>)> {
    let scale = 1.0 / batch.len() as f64;
    let per_sample = crate::par::map(batch, |&i| {
        let s = &samples[i];
        let (pred, trace) = unet::forward_with_trace(params, &s.input)?;
        let l = loss(&pred, &s.target, w)?;
        let upstream = loss_grad(&pred, &s.target, w, scale)?;
        Ok((l, unet::backward(params, &trace, &upstream)?.params))
    })?;
    let mut total = params.zeros_like();
    let mut loss_sum = 0.0;
    for (l, g) in &per_sample {
        loss_sum += l;
        total.add_assign(g);
    }
    Ok((loss_sum * scale, total))
}

fn run_folds(samples: &[Sample], cfg: &TrainConfig, model: &ModelConfig) -> Result<TrainOutcome> {
    let splits = kfold_split(samples.len(), cfg.folds, cfg.seed)?;
    let fold_count = cfg.fold_limit.map_or(cfg.folds, |l| l.min(cfg.folds));
    let fp = fingerprint(cfg, model, samples.len());
    let w = cfg.loss_weights;
    let mut log = Vec::new();
    let mut fold_best = Vec::with_capacity(fold_count);
    let mut best: Option<Checkpoint> = None;
    let mut step: u64 = 0;

    for (fold, (train_idx, val_idx)) in splits.into_iter().take(fold_count).enumerate() {
        let mut params: UNetParams<f32> = unet::init_params(
            cfg.seed.wrapping_add(fold as u64),
            model.mode,
            model.channels,
            model.channels,
            model.base_width,
        )?;
        let mut adam = AdamState::new(&params);
        let mut fold_min = f64::INFINITY;
        let mut order = train_idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(fold as u64));
        rng.set_stream(SHUFFLE_STREAM);

        for epoch in 0..=cfg.epochs {
            let train_loss = if epoch == 0 {
                mean_loss(&params, samples, &train_idx, w)?
            } else {
                order.shuffle(&mut rng);
                let mut total = 0.0;
                for batch in order.chunks(cfg.batch_size) {
                    step += 1;
                    let (l, grads) = batch_gradient(&params, samples, batch, w)?;
                    if !l.is_finite() {
                        return Err(Error::Training {
                            step,
                            detail: format!("non-finite loss in fold {fold} epoch {epoch}"),
                        });
                    }
                    total += l * batch.len() as f64;
                    adam_step(&mut params, &grads, &mut adam, cfg).map_err(|e| match e {
                        Error::Training { detail, .. } => Error::Training {
                            step,
                            detail: format!("{detail} in fold {fold} epoch {epoch}"),
                        },
                        other => other,
                    })?;
                }
                total / order.len().max(1) as f64
            };
            let val_loss = mean_loss(&params, samples, &val_idx, w)?;
            if !val_loss.is_finite() {
                return Err(Error::Training {
                    step,
                    detail: format!("non-finite validation loss in fold {fold} epoch {epoch}"),
                });
            }
            log.push(EpochLog {
                fold,
                epoch,
                train_loss,
                val_loss,
            });
            fold_min = fold_min.min(val_loss);
            if best.as_ref().is_none_or(|b| val_loss < b.validation_loss) {
                best = Some(Checkpoint {
                    params: params.clone(),
                    fold: fold as u32,
                    epoch: epoch as u32,
                    validation_loss: val_loss,
                    fingerprint: fp,
                });
            }
        }
        fold_best.push(fold_min);
    }
    Ok(TrainOutcome {
        best: best.expect("at least one fold and one evaluation"),
        log,
        fold_best,
    })
}

/// Cross-validated training; returns the lowest-validation-loss checkpoint over
/// all folds and epochs (earlier fold/epoch wins ties).
pub fn train_samples(samples: &[Sample], cfg: &TrainConfig, model: &ModelConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    crate::unet::init_params::<f32>(0, model.mode, model.channels, model.channels, model.base_width)?;
    if let Some(s) = samples.iter().find(|s| s.input.channels() != model.channels || !s.input.same_shape(&s.target)) {
        return Err(Error::shape(
            "training data",
            format!(
                "sample input {:?} / target {:?} incompatible with {} channels",
                s.input.shape(),
                s.target.shape(),
                model.channels
            ),
        ));
    }
    crate::par::with_threads(cfg.threads, || run_folds(samples, cfg, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unet::TINY_WIDTH;
    use rand::Rng;

    fn t(values: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(1, 1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn loss_values() {
        let w = LossWeights::default();
        let a = t(&[1.0, -2.0, 3.5]);
        assert_eq!(loss(&a, &a, w).unwrap(), 0.0);
        let b = t(&[3.0, 0.0, 5.5]);
        assert_eq!(loss(&b, &a, w).unwrap(), 6.0);
        assert!(loss(&t(&[1.0]), &a, w).is_err());
    }

    #[test]
    fn loss_zero_iff_equal() {
        let w = LossWeights::default();
        let a = t(&[0.5, 0.25]);
        let mut b = a.clone();
        b.data_mut()[1] = f32::from_bits(0.25f32.to_bits() + 1);
        assert!(loss(&a, &b, w).unwrap() > 0.0);
    }

    #[test]
    fn loss_gradient_matches_differences() {
        let w = LossWeights { mae: 0.7, mse: 1.3 };
        let pred = Tensor::from_vec(1, 1, 3, vec![0.3f64, -1.0, 2.0]).unwrap();
        let target = Tensor::from_vec(1, 1, 3, vec![0.0f64, 0.5, 2.5]).unwrap();
        let g = loss_grad(&pred, &target, w, 1.0).unwrap();
        for i in 0..3 {
            let eps = 1e-6;
            let mut p = pred.clone();
            p.data_mut()[i] += eps;
            let up = loss(&p, &target, w).unwrap();
            p.data_mut()[i] -= 2.0 * eps;
            let down = loss(&p, &target, w).unwrap();
            assert!((g.data()[i] - (up - down) / (2.0 * eps)).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_zero_gradient_zero_decay_is_identity() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = vec![0.5f32, -1.25];
        let g = [0.0f32; 2];
        let mut state = AdamState {
            m: vec![vec![0.0; 2]],
            v: vec![vec![0.0; 2]],
            t: 0,
        };
        adam_update(&mut [&mut p[..]], &[&g[..]], &mut state, &cfg).unwrap();
        assert_eq!(p, vec![0.5, -1.25]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut p = [0.0f64];
        let mut state = AdamState {
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
            t: 0,
        };
        adam_update(&mut [&mut p[..]], &[&[1.0][..]], &mut state, &cfg).unwrap();
        // m̂ = 1, v̂ = 1 → step = lr · 1 / (1 + ε)
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_decoupled_decay_shrinks_weights() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.5,
            ..TrainConfig::default()
        };
        let mut p = [2.0f64];
        let mut state = AdamState {
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
            t: 0,
        };
        adam_update(&mut [&mut p[..]], &[&[0.0][..]], &mut state, &cfg).unwrap();
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let cfg = TrainConfig::default();
        let mut p = [0.0f32];
        let mut state = AdamState {
            m: vec![vec![0.0]],
            v: vec![vec![0.0]],
            t: 4,
        };
        let err = adam_update(&mut [&mut p[..]], &[&[f32::NAN][..]], &mut state, &cfg).unwrap_err();
        assert!(matches!(err, Error::Training { step: 5, .. }));
    }

    #[test]
    fn kfold_partitions() {
        let splits = kfold_split(9, 3, 0).unwrap();
        let mut all: Vec<usize> = splits.iter().flat_map(|(_, v)| v.clone()).collect();
        all.sort();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        for (train, val) in &splits {
            assert_eq!(val.len(), 3);
            assert_eq!(train.len(), 6);
            assert!(train.iter().all(|i| !val.contains(i)));
        }
        let sizes: Vec<usize> = kfold_split(400, 3, 7).unwrap().iter().map(|(_, v)| v.len()).collect();
        assert_eq!(sizes, vec![134, 133, 133]);
        assert!(kfold_split(2, 3, 0).is_err());
        assert!(kfold_split(10, 1, 0).is_err());
    }

    fn toy_samples(n: usize, size: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let input: Vec<f32> = (0..2 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
                let target = input.iter().map(|v| 0.5 * v).collect();
                Sample {
                    input: Tensor::from_vec(2, size, size, input).unwrap(),
                    target: Tensor::from_vec(2, size, size, target).unwrap(),
                }
            })
            .collect()
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            mode: LayerMode::Standard,
            channels: 2,
            base_width: TINY_WIDTH,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let samples = toy_samples(6, 16, 1);
        let cfg = TrainConfig {
            epochs: 0,
            fold_limit: Some(1),
            ..TrainConfig::default()
        };
        let out = train_samples(&samples, &cfg, &tiny_model()).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!((out.best.fold, out.best.epoch), (0, 0));
        let init = unet::init_params::<f32>(cfg.seed, LayerMode::Standard, 2, 2, TINY_WIDTH).unwrap();
        assert_eq!(out.best.params, init);
        assert_eq!(out.best.validation_loss, out.log[0].val_loss);
    }

    #[test]
    fn training_descends_and_is_deterministic() {
        let samples = toy_samples(20, 16, 2);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            fold_limit: Some(1),
            ..TrainConfig::default()
        };
        let a = train_samples(&samples, &cfg, &tiny_model()).unwrap();
        let first = a.log.first().unwrap().train_loss;
        let last = a.log.last().unwrap().train_loss;
        assert!(last < first, "{first} -> {last}");
        let b = train_samples(&samples, &cfg, &tiny_model()).unwrap();
        assert_eq!(a.best.to_bytes(), b.best.to_bytes());
    }

    #[test]
    fn rejects_bad_config() {
        let samples = toy_samples(4, 16, 3);
        for cfg in [
            TrainConfig { folds: 1, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train_samples(&samples, &cfg, &tiny_model()), Err(Error::Config(_))));
        }
        let wrong = ModelConfig { channels: 1, ..tiny_model() };
        assert!(train_samples(&samples, &TrainConfig::default(), &wrong).is_err());
    }
}
