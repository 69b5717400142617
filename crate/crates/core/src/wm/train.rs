//! Offline training loop with micro-batched gradient accumulation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{build_steps, dataset_n};
use super::loss::{wm_loss, LossBreakdown};
use super::model::{WmConfig, WorldModel};
use crate::error::{Error, Result};
use crate::features::FeatureNorm;
use crate::nn::{optim, Adam, Mat, Tape};
use crate::rng;
use crate::traj::{batch_sequences, Dataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmTrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub seq_len: usize,
    pub clip: f64,
    pub epochs: usize,
    /// Windows per backward pass; gradients of the micro-batches of one batch
    /// are averaged before the update.
    pub micro_batch: usize,
    /// Overrides the number of batches per epoch (by default the eligible
    /// frames divided by `batch * seq_len`, rounded up).
    pub batches_per_epoch: Option<usize>,
}

impl Default for WmTrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch: 32,
            seq_len: 50,
            clip: 100.0,
            epochs: 100,
            micro_batch: 8,
            batches_per_epoch: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub parts: LossBreakdown,
    pub grad_norm: f64,
}

pub const LOG_COLUMNS: [&str; 11] = [
    "epoch", "total", "recon", "pos", "energy", "adj", "reward", "cont", "kl_raw", "kl", "grad_norm",
];

impl EpochLog {
    pub fn record(&self) -> Vec<String> {
        let p = &self.parts;
        let mut r = vec![self.epoch.to_string()];
        r.extend(
            [self.total, self.recon, p.pos, p.energy, p.adj, p.reward, p.cont, p.kl_raw, p.kl, self.grad_norm]
                .iter()
                .map(|v| v.to_string()),
        );
        r
    }
}

pub struct TrainOptions<'a> {
    /// Rewritten after every completed epoch; on divergence the last good
    /// copy stays in place.
    pub checkpoint: Option<&'a Path>,
    pub log_csv: Option<PathBuf>,
    pub verbose: bool,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self {
            checkpoint: None,
            log_csv: None,
            verbose: false,
        }
    }
}

/// Fresh model sized for the dataset; normalisation from its first scenario.
pub fn init_model(ds: &Dataset, cfg: WmConfig, seed: u64) -> Result<WorldModel> {
    let n = dataset_n(ds)?;
    let norm = FeatureNorm::from_scenario(&ds.meta.scenarios[ds.episodes[0].scenario]);
    Ok(WorldModel::new(cfg, n, norm, &mut rng::init_rng(seed)))
}

pub fn batches_per_epoch(ds: &Dataset, cfg: &WmTrainConfig) -> usize {
    if let Some(b) = cfg.batches_per_epoch {
        return b;
    }
    let frames: usize = ds
        .episodes
        .iter()
        .filter(|e| e.frames.len() >= cfg.seq_len)
        .map(|e| e.frames.len())
        .sum();
    frames.div_ceil(cfg.batch * cfg.seq_len).max(1)
}

/// Trains `model` in place and returns one log row per epoch.
pub fn train_wm(
    model: &mut WorldModel,
    ds: &Dataset,
    cfg: &WmTrainConfig,
    seed: u64,
    opts: &TrainOptions<'_>,
) -> Result<Vec<EpochLog>> {
    if cfg.micro_batch == 0 {
        return Err(Error::InvalidArgument("micro_batch must be positive".into()));
    }
    if dataset_n(ds)? != model.n {
        return Err(Error::InvalidArgument(format!(
            "model decodes {} nodes, dataset has {}",
            model.n,
            dataset_n(ds)?
        )));
    }
    let mut batches = batch_sequences(ds, cfg.batch, cfg.seq_len, rng::train_rng(seed))?;
    let mut latent = rng::latent_rng(seed);
    let mut adam = Adam::new(cfg.lr, Some(cfg.clip));
    let per_epoch = batches_per_epoch(ds, cfg);
    let mut writer = match &opts.log_csv {
        Some(p) => {
            let mut w = csv::Writer::from_path(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            w.write_record(LOG_COLUMNS).map_err(|e| Error::Config(format!("training log: {e}")))?;
            Some(w)
        }
        None => None,
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sum = LossBreakdown::default();
        let mut norm_sum = 0.0;
        for _ in 0..per_epoch {
            let windows = batches.next().expect("batch iterator is endless");
            let mut grads: Vec<Option<Mat>> = Vec::new();
            let mut parts = LossBreakdown::default();
            for chunk in windows.chunks(cfg.micro_batch) {
                let w = chunk.len() as f64 / windows.len() as f64;
                let steps = build_steps(ds, chunk);
                let tape = Tape::new();
                let (loss, bd) = wm_loss(model, &tape, &steps, &mut latent, true)?;
                let g = tape.backward(loss, model.store.len()).into_params();
                if g.iter().flatten().any(|m| !m.all_finite()) {
                    return Err(Error::Divergence(format!("non-finite gradient at epoch {epoch}")));
                }
                optim::accumulate(&mut grads, g, w);
                parts.add(&bd.scaled(w));
            }
            norm_sum += adam.step(&mut model.store, &grads);
            sum.add(&parts);
        }
        let parts = sum.scaled(1.0 / per_epoch as f64);
        let row = EpochLog {
            epoch,
            total: parts.total(&model.cfg),
            recon: parts.recon(&model.cfg),
            parts,
            grad_norm: norm_sum / per_epoch as f64,
        };
        if opts.verbose {
            eprintln!(
                "epoch {epoch}: total {:.4} recon {:.4} cont {:.4} kl {:.4}",
                row.total, row.recon, parts.cont, parts.kl_raw
            );
        }
        if let Some(w) = writer.as_mut() {
            w.write_record(row.record()).map_err(|e| Error::Config(format!("training log: {e}")))?;
            w.flush().map_err(|e| Error::io("training log", e))?;
        }
        if let Some(p) = opts.checkpoint {
            model.save(p)?;
        }
        log.push(row);
    }
    Ok(log)
}
