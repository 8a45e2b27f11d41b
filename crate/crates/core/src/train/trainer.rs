use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{augment, balance_classes, stack_batch, Label, LabeledDataset, LabeledImage, NormStats, Split};
use crate::error::{Error, Result};
use crate::head::cross_entropy;
use crate::metrics::{EvaluationReport, RunMetadata};
use crate::model::{FcflModel, ModelConfig};
use crate::nrca::reconstruction_loss;
use crate::ops::softmax_rows;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::train::{adamw_step, clip_global_norm, lr_schedule, AdamState, Checkpoint, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the step losses.
    pub train_loss: f64,
    pub val_acc: Option<f64>,
}

impl EpochLog {
    /// `epoch<TAB>lr<TAB>train_loss<TAB>val_acc`, with `nan` for a missing
    /// validation split.
    pub fn tsv_line(&self) -> String {
        let val = self.val_acc.map_or_else(|| "nan".to_string(), |v| v.to_string());
        format!("{}\t{}\t{}\t{}", self.epoch, self.lr, self.train_loss, val)
    }
}

pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Snapshot at the highest validation accuracy (first epoch on ties).
    pub best: Option<Checkpoint>,
    pub log: Vec<EpochLog>,
}

/// SHA-256 over the JSON of both configs.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let text = serde_json::to_string(&(model, train)).expect("configs serialize");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Class probabilities for `images`, batched with `batch_size`, computed
/// without recording gradients.
pub fn predict_proba(
    model: &FcflModel<f32>,
    norm: &NormStats,
    images: &[&LabeledImage],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let (x, _) = stack_batch(chunk, Some(norm))?;
        let logits = model.predict(&x)?.cast::<f64>();
        let p = softmax_rows(&logits);
        let k = p.shape()[1];
        out.extend(p.data().chunks(k).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Fraction of `images` whose arg-max prediction matches the label.
pub fn accuracy(model: &FcflModel<f32>, norm: &NormStats, images: &[&LabeledImage], batch_size: usize) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Data("accuracy over an empty image set".into()));
    }
    let probs = predict_proba(model, norm, images, batch_size)?;
    let pred = Tensor::new([probs.len(), probs[0].len()], probs.concat())?.argmax_rows()?;
    let hits = pred
        .iter()
        .zip(images)
        .filter(|(p, im)| **p == im.label.index())
        .count();
    Ok(hits as f64 / images.len() as f64)
}

fn check_compatible(cfg: &ModelConfig, images: &[&LabeledImage]) -> Result<()> {
    for im in images {
        if im.channels() != cfg.image_channels {
            return Err(Error::Contract(format!(
                "{} has {} channels, the model expects {}",
                im.source_id,
                im.channels(),
                cfg.image_channels
            )));
        }
    }
    if cfg.head.num_classes != Label::ALL.len() {
        return Err(Error::Contract(format!(
            "the data has {} classes, the head predicts {}",
            Label::ALL.len(),
            cfg.head.num_classes
        )));
    }
    Ok(())
}

fn noisy_copy(x: &Tensor<f32>, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    use rand_distr::{Distribution, Normal};
    if sigma == 0.0 {
        return x.clone();
    }
    let n = Normal::new(0.0, sigma).expect("validated sigma");
    x.map(|v| v + n.sample(rng) as f32)
}

/// Mini-batch AdamW training on the train split. Validation accuracy is
/// measured after every epoch when a val split exists. With `out_dir`, the
/// epoch log goes to `train_log.tsv` and checkpoints to `best/` and `last/`.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &LabeledDataset,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    data.validate()?;
    let originals: Vec<LabeledImage> = data.split(Split::Train).cloned().collect();
    if originals.is_empty() {
        return Err(Error::Data("the train split is empty".into()));
    }
    let val: Vec<&LabeledImage> = data.split(Split::Val).collect();
    check_compatible(model_cfg, &originals.iter().collect::<Vec<_>>())?;
    let norm = NormStats::fit(&originals)?;
    let train_set = if train_cfg.balance {
        let spec = crate::data::AugmentSpec {
            seed: train_cfg.seed,
            ..train_cfg.augment_spec.clone()
        };
        balance_classes(originals, &spec)?
    } else {
        originals
    };

    let mut model = FcflModel::<f32>::new(model_cfg.clone())?;
    let mut opt = AdamState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let joint = train_cfg.reconstruction_weight > 0.0 && model_cfg.nrca.enabled;
    let size = model_cfg.image_size;
    let mut log = Vec::with_capacity(train_cfg.epochs);
    let mut best: Option<Checkpoint> = None;
    let snapshot = |model: &FcflModel<f32>, opt: &AdamState<f32>, epoch: usize, rng: &ChaCha8Rng, acc| Checkpoint {
        model_config: model_cfg.clone(),
        train_config: train_cfg.clone(),
        params: model.params().clone(),
        optimizer: opt.clone(),
        epoch,
        norm: norm.clone(),
        rng: rng.clone(),
        val_accuracy: acc,
    };

    for epoch in 0..train_cfg.epochs {
        let lr = lr_schedule(epoch, train_cfg);
        let epoch_images: Vec<LabeledImage> = if train_cfg.augment {
            train_set
                .iter()
                .enumerate()
                .map(|(i, im)| {
                    let mut r = ChaCha8Rng::seed_from_u64(train_cfg.seed);
                    r.set_stream(((epoch as u64) << 32) | i as u64);
                    augment(im, &train_cfg.augment_spec, &mut r)
                })
                .collect::<Result<_>>()?
        } else {
            train_set.clone()
        };
        let mut order: Vec<usize> = (0..epoch_images.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, idx) in order.chunks(train_cfg.batch_size).enumerate() {
            let batch: Vec<&LabeledImage> = idx.iter().map(|&i| &epoch_images[i]).collect();
            let (clean_raw, labels) = stack_batch(&batch, None)?;
            let mut tape = Tape::<f32>::new();
            let p = model.params().bind(&mut tape);
            let loss = if joint {
                let noisy = noisy_copy(&clean_raw, train_cfg.denoise_sigma, &mut rng);
                let x = tape.constant(norm.apply(&noisy)?);
                let clean = tape.constant(norm.apply(&clean_raw)?);
                let clean = tape.resize_bilinear(clean, size, size)?;
                let out = model.forward(&mut tape, &p, x)?;
                let ce = cross_entropy(&mut tape, out.logits, &labels)?.loss;
                let denoised = out.denoised.expect("autoencoder enabled");
                let rec = reconstruction_loss(&mut tape, denoised, clean)?;
                let rec = tape.scale(rec, train_cfg.reconstruction_weight as f32);
                tape.add(ce, rec)?
            } else {
                let x = tape.constant(norm.apply(&clean_raw)?);
                let out = model.forward(&mut tape, &p, x)?;
                cross_entropy(&mut tape, out.logits, &labels)?.loss
            };
            let value = tape.value(loss).item()? as f64;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    loss: value,
                });
            }
            tape.backward(loss)?;
            let mut grads: Vec<Tensor<f32>> = p
                .grads(&tape)
                .into_iter()
                .map(|g| g.expect("bound parameters receive gradients"))
                .collect();
            if let Some(c) = train_cfg.grad_clip {
                clip_global_norm(&mut grads, c);
            }
            adamw_step(model.params_mut(), &grads, &mut opt, lr, &train_cfg.optimizer)?;
            loss_sum += value * batch.len() as f64;
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            Some(accuracy(&model, &norm, &val, train_cfg.batch_size)?)
        };
        if let Some(acc) = val_acc {
            if best.as_ref().and_then(|b| b.val_accuracy).is_none_or(|b| acc > b) {
                best = Some(snapshot(&model, &opt, epoch + 1, &rng, val_acc));
            }
        }
        log.push(EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / epoch_images.len() as f64,
            val_acc,
        });
    }
    let last = snapshot(&model, &opt, train_cfg.epochs, &rng, log.last().and_then(|l| l.val_acc));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text: String = std::iter::once("epoch\tlr\ttrain_loss\tval_acc".to_string())
            .chain(log.iter().map(EpochLog::tsv_line))
            .map(|l| l + "\n")
            .collect();
        let lp = dir.join("train_log.tsv");
        fs::write(&lp, text).map_err(|e| Error::io(&lp, e))?;
        last.save(dir.join("last"))?;
        if let Some(b) = &best {
            b.save(dir.join("best"))?;
        }
    }
    Ok(TrainOutcome { last, best, log })
}

/// Metrics of `ckpt` on one split of `data`.
pub fn evaluate(ckpt: &Checkpoint, data: &LabeledDataset, split: Split) -> Result<EvaluationReport> {
    let images: Vec<&LabeledImage> = data.split(split).collect();
    if images.is_empty() {
        return Err(Error::Data(format!("the {split} split is empty")));
    }
    check_compatible(&ckpt.model_config, &images)?;
    if ckpt.norm.mean.len() != ckpt.model_config.image_channels {
        return Err(Error::Contract(
            "normalization statistics do not match the image channels".into(),
        ));
    }
    let model = ckpt.model()?;
    let probs = predict_proba(&model, &ckpt.norm, &images, ckpt.train_config.batch_size)?;
    let labels: Vec<usize> = images.iter().map(|im| im.label.index()).collect();
    let names = Label::ALL.iter().map(|l| l.name().to_string()).collect();
    let meta = RunMetadata {
        seed: ckpt.model_config.seed,
        config_hash: config_hash(&ckpt.model_config, &ckpt.train_config),
        epochs: Some(ckpt.epoch),
        split: Some(split.name().to_string()),
    };
    EvaluationReport::from_scores(&probs, &labels, names, meta)
}
