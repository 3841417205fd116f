use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{split_indices, DatasetReader, SamplePair};
use crate::error::{create_output, Error, Result};
use crate::pose::Label6;
use crate::rng::{stream, Domain};

use super::adam::{AdamConfig, AdamState};
use super::float::Float;
use super::layers::Tensor;
use super::network::{forward_eval, loss_and_gradients, mse, NetworkParams, BN_MOMENTUM, OUTPUTS};

const CHANNELS: usize = 4;

/// Random-access source of standardized training pairs.
pub trait TrainingSource: Sync {
    fn side(&self) -> usize;
    fn len(&self) -> u64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn load(&self, index: u64, x_pred: &mut [f32], x_obs: &mut [f32]) -> Result<Label6>;
}

impl TrainingSource for DatasetReader {
    fn side(&self) -> usize {
        self.header().side
    }

    fn len(&self) -> u64 {
        DatasetReader::len(self)
    }

    fn load(&self, index: u64, x_pred: &mut [f32], x_obs: &mut [f32]) -> Result<Label6> {
        self.read_into(index, x_pred, x_obs)
    }
}

impl TrainingSource for Vec<SamplePair> {
    fn side(&self) -> usize {
        self.first().map_or(0, |s| s.x_pred.side())
    }

    fn len(&self) -> u64 {
        self.as_slice().len() as u64
    }

    fn load(&self, index: u64, x_pred: &mut [f32], x_obs: &mut [f32]) -> Result<Label6> {
        let s = self
            .get(index as usize)
            .ok_or_else(|| Error::invalid(format!("record {index} out of {}", self.as_slice().len())))?;
        if x_pred.len() != s.x_pred.data().len() || x_obs.len() != s.x_obs.data().len() {
            return Err(Error::shape("sample buffers do not match the input side"));
        }
        x_pred.copy_from_slice(s.x_pred.data());
        x_obs.copy_from_slice(s.x_obs.data());
        Ok(s.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Dropout keep probability on the FC input.
    pub keep: f64,
    /// Stop once validation MSE has not improved for this many epochs; 0
    /// trains exactly one epoch.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            keep: 0.5,
            patience: 5,
            max_epochs: 30,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "must be at least 2 (batch normalization)"));
        }
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return Err(Error::config("keep", "must be in (0, 1]"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be positive"));
        }
        AdamState::<f32>::new(self.adam, &[]).map(|_| ())
    }
}

/// One row of the training history. Epoch 0 is the untrained network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the lowest validation MSE.
    pub params: NetworkParams<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn batches(indices: &[u64], size: usize) -> Vec<&[u64]> {
    let mut out: Vec<&[u64]> = indices.chunks(size).collect();
    // a trailing batch of one cannot be batch-normalized; fold it into the previous one
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let n = out.len();
        out[n - 1] = &indices[(n - 1) * size..];
    }
    out
}

struct Batch<T> {
    x_pred: Tensor<T>,
    x_obs: Tensor<T>,
    targets: Vec<T>,
}

fn load_batch<T: Float>(data: &dyn TrainingSource, idx: &[u64]) -> Result<Batch<T>> {
    let s = data.side();
    let grid = s * s * CHANNELS;
    let n = idx.len();
    let (mut p32, mut o32) = (vec![0f32; grid], vec![0f32; grid]);
    let (mut xp, mut xo) = (Vec::with_capacity(n * grid), Vec::with_capacity(n * grid));
    let mut targets = Vec::with_capacity(n * OUTPUTS);
    for &i in idx {
        let y = data.load(i, &mut p32, &mut o32)?;
        xp.extend(p32.iter().map(|&v| T::c(v as f64)));
        xo.extend(o32.iter().map(|&v| T::c(v as f64)));
        targets.extend(y.0.iter().map(|&v| T::c(v)));
    }
    Ok(Batch {
        x_pred: Tensor::from_vec([n, s, s, CHANNELS], xp)?,
        x_obs: Tensor::from_vec([n, s, s, CHANNELS], xo)?,
        targets,
    })
}

/// Eval-mode MSE over `indices`.
pub fn evaluate_mse<T: Float>(
    params: &NetworkParams<T>,
    data: &dyn TrainingSource,
    indices: &[u64],
    batch_size: usize,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::DatasetTooSmall("no records to evaluate".into()));
    }
    let mut total = 0.0;
    for idx in indices.chunks(batch_size.max(1)) {
        let b = load_batch::<T>(data, idx)?;
        let out = forward_eval(params, &b.x_pred, &b.x_obs)?;
        total += mse(&out, &b.targets)?.0 * idx.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

/// Minibatch ADAM on the training split with early stopping on the
/// validation split. `on_epoch` sees every history row as it is produced.
pub fn train<T: Float>(
    init: NetworkParams<T>,
    data: &dyn TrainingSource,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    init.validate()?;
    if data.side() != init.arch.input_side {
        return Err(Error::ArchitectureMismatch(format!(
            "data side {} vs network input side {}",
            data.side(),
            init.arch.input_side
        )));
    }
    let (mut train_idx, val_idx) = split_indices(data.len());
    let need = 2 * cfg.batch_size;
    if train_idx.len() < need || val_idx.len() < 2 {
        return Err(Error::DatasetTooSmall(format!(
            "{} training / {} validation records; need at least {need} / 2",
            train_idx.len(),
            val_idx.len()
        )));
    }

    let mut params = init;
    let mut adam = AdamState::for_params(cfg.adam, &params)?;
    let first = EpochRecord {
        epoch: 0,
        train_mse: evaluate_mse(&params, data, &train_idx, cfg.batch_size)?,
        val_mse: evaluate_mse(&params, data, &val_idx, cfg.batch_size)?,
        lr: cfg.adam.lr,
    };
    on_epoch(&first);
    let mut history = vec![first];
    let (mut best, mut best_epoch, mut best_val) = (params.clone(), 0, first.val_mse);
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut stream(cfg.seed, Domain::Training, 2 * epoch as u64));
        let mut drop_rng = stream(cfg.seed, Domain::Training, 2 * epoch as u64 + 1);
        let mut sum = 0.0;
        for idx in batches(&train_idx, cfg.batch_size) {
            let b = load_batch::<T>(data, idx)?;
            let step = loss_and_gradients(&params, &b.x_pred, &b.x_obs, &b.targets, cfg.keep, &mut drop_rng)?;
            if !step.loss.is_finite() {
                return Err(Error::OutOfRange(format!("training loss diverged at epoch {epoch}")));
            }
            adam.step(&mut params, &step.grads)?;
            params.update_running_stats(&step.stats, BN_MOMENTUM);
            sum += step.loss * idx.len() as f64;
        }
        let rec = EpochRecord {
            epoch,
            train_mse: sum / train_idx.len() as f64,
            val_mse: evaluate_mse(&params, data, &val_idx, cfg.batch_size)?,
            lr: adam.lr_at(adam.step),
        };
        on_epoch(&rec);
        history.push(rec);
        if rec.val_mse < best_val {
            best_val = rec.val_mse;
            best_epoch = epoch;
            best = params.clone();
        }
        if epoch - best_epoch >= cfg.patience && epoch < cfg.max_epochs {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
        stopped_early,
    })
}

/// Writes `epoch,train_mse,val_mse,lr` rows; refuses to overwrite.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = BufWriter::new(create_output(path)?);
    writeln!(w, "epoch,train_mse,val_mse,lr")?;
    for r in history {
        writeln!(w, "{},{:.9e},{:.9e},{:.9e}", r.epoch, r.train_mse, r.val_mse, r.lr)?;
    }
    w.flush()?;
    Ok(())
}
