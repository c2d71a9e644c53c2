use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{LossMode, TimestepTarget};
use super::optim::{cosine_lr, Sgd};
use super::tape::{backward, forward_train};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::snn::{LayerParams, Model, SnnInstance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub loss_mode: LossMode,
    pub timestep_target: TimestepTarget,
    pub seed: u64,
    /// Timesteps unrolled during training; `None` uses the network's `t_max`.
    pub t_train: Option<usize>,
    /// Batch size for evaluation passes.
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 10,
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            loss_mode: LossMode::PerTimestep,
            timestep_target: TimestepTarget::RunningMean,
            seed: 0,
            t_train: None,
            eval_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("train: {m}")));
        if self.batch_size == 0 {
            return fail("batch_size must satisfy B >= 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail(&format!("lr0 = {} violates lr0 > 0", self.lr0));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(&format!("weight_decay = {} violates weight_decay >= 0", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(&format!("momentum = {} violates 0 <= momentum < 1", self.momentum));
        }
        if self.t_train == Some(0) {
            return fail("t_train must be >= 1");
        }
        if self.eval_batch_size == 0 {
            return fail("eval_batch_size must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy on the training samples seen this epoch, at `t_train`.
    pub train_acc: f64,
    /// Evaluation accuracy at `t = 1..=t_train`; empty without an eval set.
    pub eval_acc: Vec<f64>,
    /// CRC-32 of the epoch's shuffled sample order.
    pub order_hash: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub t_train: usize,
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,train_acc");
        for t in 1..=self.t_train {
            let _ = write!(out, ",eval_acc_t{t}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{:.6e},{:.6},{:.6}", r.epoch, r.lr, r.train_loss, r.train_acc);
            for t in 0..self.t_train {
                match r.eval_acc.get(t) {
                    Some(a) => {
                        let _ = write!(out, ",{a:.6}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn order_hash(indices: &[usize]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for &i in indices {
        h.update(&(i as u32).to_le_bytes());
    }
    h.finalize()
}

fn check_compat(model: &Model, data: &Dataset) -> Result<()> {
    let spec = model.spec();
    if data.item_shape() != &spec.input_shape[..] {
        return Err(Error::dim(format!(
            "dataset items {:?} do not match the network input {:?}",
            data.item_shape(),
            spec.input_shape
        )));
    }
    if data.num_classes() > spec.num_classes {
        return Err(Error::dim(format!(
            "dataset has {} classes but the network outputs {}",
            data.num_classes(),
            spec.num_classes
        )));
    }
    Ok(())
}

/// Top-1 accuracy of the accumulated output after each of `t = 1..=t_max`
/// timesteps.
pub fn accuracy_per_timestep(model: &Model, data: &Dataset, t_max: usize, batch_size: usize) -> Result<Vec<f64>> {
    check_compat(model, data)?;
    if t_max == 0 || t_max > model.spec().t_max {
        return Err(Error::arg(format!("timesteps {t_max} outside 1..={}", model.spec().t_max)));
    }
    let k = model.spec().num_classes;
    let mut correct = vec![0usize; t_max];
    let mut inst = SnnInstance::new(model);
    let mut start = 0;
    while start < data.len() {
        let count = batch_size.max(1).min(data.len() - start);
        let x = data.images().slice_batch(start, count)?;
        let labels = &data.labels()[start..start + count];
        inst.reset();
        for c in correct.iter_mut() {
            inst.forward_timestep(&x)?;
            let acc = inst.accumulated_logits().expect("one step ran");
            *c += acc
                .data()
                .chunks_exact(k)
                .zip(labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
        }
        start += count;
    }
    Ok(correct.into_iter().map(|c| c as f64 / data.len() as f64).collect())
}

/// Trains `model` in place. `on_epoch` sees every record as it is produced.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    eval_set: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingLog> {
    cfg.validate()?;
    check_compat(model, train_set)?;
    if let Some(e) = eval_set {
        check_compat(model, e)?;
    }
    let t_train = cfg.t_train.unwrap_or(model.spec().t_max);
    if t_train > model.spec().t_max {
        return Err(Error::Config(format!(
            "t_train = {t_train} exceeds the network t_max = {}",
            model.spec().t_max
        )));
    }
    let k = model.spec().num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(cfg.momentum as f32, cfg.weight_decay as f32);
    let mut log = TrainingLog {
        t_train,
        records: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr0, epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train_set.batch(chunk)?;
            let tape = forward_train(model, &x, t_train)?;
            let (loss, grads) = backward(model, &tape, &labels, cfg.loss_mode, cfg.timestep_target)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    reason: format!("loss became {loss}"),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            let mut sum = tape.step_logits()[0].clone();
            for s in &tape.step_logits()[1..] {
                sum.add_assign(s)?;
            }
            correct += sum
                .data()
                .chunks_exact(k)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            opt.step(model, &grads, lr as f32)?;
            for (p, stats) in model.params_mut().iter_mut().zip(tape.norm_stats()) {
                if let (LayerParams::Norm(n), Some(s)) = (p, stats) {
                    n.running_mean.clone_from(&s.running_mean);
                    n.running_var.clone_from(&s.running_var);
                }
            }
        }
        if !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: "non-finite parameters after the update".into(),
            });
        }
        let eval_acc = match eval_set {
            Some(e) => accuracy_per_timestep(model, e, t_train, cfg.eval_batch_size)?,
            None => Vec::new(),
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            eval_acc,
            order_hash: order_hash(&order),
        };
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(log)
}
