//! Minibatch ADAM training with chronological early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::dataset::{Dataset, Sample};
use super::loss::LossKind;
use super::network::{NetConfig, Network};
use crate::error::{Error, Result};
use crate::marketdata::STANDARD_GRANULARITIES;
use crate::scalar::Scalar;

pub const MIN_TRAIN_SAMPLES: usize = 10;
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub receptive_field_days: usize,
    pub granularity: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub channels: usize,
    pub kernel_width: usize,
    /// Derived from the window length when unset.
    pub layers: Option<usize>,
    /// Adds the linear realised-variance term.
    pub fusion: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            receptive_field_days: 1,
            granularity: 5,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.2,
            seed: 0,
            loss: LossKind::Qlike,
            channels: 8,
            kernel_width: 2,
            layers: None,
            fusion: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return bad(format!("validation fraction {} must lie in (0, 0.5)", self.validation_fraction));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch budget must be positive".into());
        }
        if self.receptive_field_days == 0 {
            return bad("receptive field must be at least one day".into());
        }
        if !STANDARD_GRANULARITIES.contains(&self.granularity) {
            return bad(format!("granularity {} is not one of {STANDARD_GRANULARITIES:?}", self.granularity));
        }
        if self.channels == 0 || self.kernel_width < 2 {
            return bad("need at least one channel and kernel width ≥ 2".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }

    /// Architecture for a window of `input_len` steps.
    pub fn net_config(&self, input_len: usize) -> Result<NetConfig> {
        let mut cfg = NetConfig::for_window(input_len, self.channels, self.kernel_width);
        if let Some(l) = self.layers {
            cfg.layers = l;
            if cfg.receptive_field() < input_len {
                return Err(Error::invalid(format!(
                    "{l} layers give a receptive field of {} steps, shorter than the {input_len}-step window",
                    cfg.receptive_field()
                )));
            }
        }
        if self.fusion {
            cfg.rv_inputs = self.receptive_field_days;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub input_len: usize,
    pub layers: usize,
    pub n_train: usize,
    pub n_validation: usize,
    /// Validation loss of the initial network.
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch beat the initial network.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

fn batch_views<'a, F: Scalar>(batch: &[&'a Sample<F>], fusion: bool) -> (Vec<&'a [F]>, Option<Vec<&'a [F]>>, Vec<F>) {
    let inputs = batch.iter().map(|s| s.window.as_slice()).collect();
    let aux = fusion.then(|| batch.iter().map(|s| s.rv_aux.as_slice()).collect());
    let targets = batch.iter().map(|s| s.target.expect("training samples carry targets")).collect();
    (inputs, aux, targets)
}

/// Forecasts for every sample, evaluated in fixed-size chunks.
pub fn predict_samples<F: Scalar>(net: &Network<F>, samples: &[&Sample<F>]) -> Result<Vec<F>> {
    let fusion = net.config.rv_inputs > 0;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let inputs: Vec<&[F]> = chunk.iter().map(|s| s.window.as_slice()).collect();
        let aux: Option<Vec<&[F]>> = fusion.then(|| chunk.iter().map(|s| s.rv_aux.as_slice()).collect());
        out.extend(net.forward_batch(&inputs, aux.as_deref())?);
    }
    Ok(out)
}

fn dataset_loss<F: Scalar>(net: &Network<F>, samples: &[&Sample<F>], kind: LossKind) -> Result<F> {
    let h = predict_samples(net, samples)?;
    let t: Vec<F> = samples.iter().map(|s| s.target.expect("validation samples carry targets")).collect();
    kind.evaluate(&h, &t)
}

/// Splits by target date: the last `fraction` of distinct dates validate.
fn chronological_split<F: Scalar>(data: &Dataset<F>, fraction: f64) -> (Vec<&Sample<F>>, Vec<&Sample<F>>) {
    let mut dates: Vec<usize> = data.samples.iter().map(|s| s.date).collect();
    dates.sort_unstable();
    dates.dedup();
    let n_val = ((dates.len() as f64) * fraction).ceil() as usize;
    let n_val = n_val.clamp(1, dates.len().saturating_sub(1).max(1));
    let cutoff = dates[dates.len() - n_val];
    let owned: Vec<&Sample<F>> = data.samples.iter().filter(|s| s.target.is_some()).collect();
    owned.into_iter().partition(|s| s.date < cutoff)
}

pub fn train<F: Scalar>(data: &Dataset<F>, config: &TrainConfig) -> Result<(Network<F>, TrainHistory)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training dataset"));
    }
    if data.spec.granularity != config.granularity || data.spec.receptive_field_days != config.receptive_field_days {
        return Err(Error::invalid(format!(
            "dataset windows ({} min, {} days) disagree with the training configuration ({} min, {} days)",
            data.spec.granularity, data.spec.receptive_field_days, config.granularity, config.receptive_field_days
        )));
    }
    let (train_set, val_set) = chronological_split(data, config.validation_fraction);
    if train_set.len() < MIN_TRAIN_SAMPLES || val_set.is_empty() {
        return Err(Error::invalid(format!(
            "need at least {MIN_TRAIN_SAMPLES} training samples and one validation sample, got {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }
    let net_cfg = config.net_config(data.input_len())?;
    log::info!(
        "training on {} samples ({} validation), input length {}, {} layers",
        train_set.len(),
        val_set.len(),
        net_cfg.input_len,
        net_cfg.layers
    );
    let mean_target = train_set.iter().map(|s| s.target.unwrap()).sum::<F>() / F::from_usize_lossy(train_set.len());
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Network::init(net_cfg, mean_target, &mut init_rng)?;
    net.window = Some(data.spec);

    let initial = dataset_loss(&net, &val_set, config.loss)?.to_f64_lossy();
    let mut history = TrainHistory {
        input_len: net_cfg.input_len,
        layers: net_cfg.layers,
        n_train: train_set.len(),
        n_validation: val_set.len(),
        initial_validation_loss: initial,
        epochs: Vec::new(),
        best_epoch: 0,
        best_validation_loss: initial,
        stopped_early: false,
    };
    let mut best = net.flat();
    let mut flat = best.clone();
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        flat.len(),
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut since_best = 0;
    let fusion = net_cfg.rv_inputs > 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Sample<F>> = idx.iter().map(|&i| train_set[i]).collect();
            let (inputs, aux, targets) = batch_views(&batch, fusion);
            let step = net.loss_and_gradient(&inputs, aux.as_deref(), &targets, config.loss);
            let (loss, grad) = match step {
                Ok(v) if v.0.is_finite() && v.1.iter().all(|g| g.is_finite()) => v,
                Ok(_) | Err(Error::NonFinite { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        message: format!("non-finite loss or gradient; history so far: {}", serde_json::to_string(&history)?),
                    })
                }
                Err(e) => return Err(e),
            };
            total += loss.to_f64_lossy() * idx.len() as f64;
            adam.update(&mut flat, &grad);
            net.set_flat(&flat)?;
        }
        let val = match dataset_loss(&net, &val_set, config.loss) {
            Ok(v) if v.is_finite() => v.to_f64_lossy(),
            _ => {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("non-finite validation loss; history so far: {}", serde_json::to_string(&history)?),
                })
            }
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            validation_loss: val,
        });
        log::debug!("epoch {epoch}: train {:.6} validation {val:.6}", total / train_set.len() as f64);
        if val < history.best_validation_loss {
            history.best_validation_loss = val;
            history.best_epoch = epoch;
            best.clone_from(&flat);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    net.set_flat(&best)?;
    Ok((net, history))
}
