use std::fmt;

use lessvit_tensor::optim::{AdamW, CosineSchedule};
use lessvit_tensor::{precision, with_precision, Bound, ParamGrads, Tape};
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::masking::sample_mask_plan;
use super::model::HyperMae;
use crate::data::{hflip, CropFlip, HyperCube};
use crate::error::{LessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Tiles per forward pass; micro-batches run in parallel.
    pub micro_batch: usize,
    /// Random square crop side in pixels; the full tile when unset.
    pub crop: Option<usize>,
    pub hflip: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            base_lr: 1.5e-4,
            warmup_fraction: 0.05,
            weight_decay: 0.05,
            seed: 0,
            micro_batch: 4,
            crop: None,
            hflip: true,
        }
    }
}

/// Batch-averaged losses of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: u64,
    pub l_spatial: f64,
    pub l_spectral: f64,
    pub loss: f64,
    pub lr: f64,
}

impl fmt::Display for LossRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} step={} l_spatial={:.9e} l_spectral={:.9e} loss={:.9e} lr={:.9e}",
            self.epoch, self.step, self.l_spatial, self.l_spectral, self.loss, self.lr
        )
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub records: Vec<LossRecord>,
    /// Mean step loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Trainer generator after the last step.
    pub rng: ChaCha8Rng,
}

struct ChunkResult {
    grads: ParamGrads,
    terms: Vec<(f64, f64, f64)>,
}

fn prepare(tile: &HyperCube, cfg: &PretrainConfig, aug_seed: u64) -> Result<HyperCube> {
    match cfg.crop {
        Some(side) if side < tile.height() || side < tile.width() => {
            let mut window = CropFlip::sample(tile.height(), tile.width(), (side, side), aug_seed)?;
            window.flip &= cfg.hflip;
            window.apply(tile)
        }
        _ if cfg.hflip && aug_seed & 1 == 1 => Ok(hflip(tile)),
        _ => Ok(tile.clone()),
    }
}

/// Summed gradient and per-tile losses of tiles sharing one shape.
fn chunk_step(model: &HyperMae, tiles: &[HyperCube], draws: &[(usize, u64, u64)], cfg: &PretrainConfig) -> Result<ChunkResult> {
    let mut cubes = Vec::with_capacity(draws.len());
    let mut plans = Vec::with_capacity(draws.len());
    for &(i, plan_seed, aug_seed) in draws {
        let tile = prepare(&tiles[i], cfg, aug_seed)?;
        let (rows, cols) = tile.patch_grid(model.cfg.patch)?;
        plans.push(sample_mask_plan(rows * cols, tile.channels(), model.cfg.mask, plan_seed)?);
        cubes.push(tile);
    }
    let tape = Tape::new();
    let bound = Bound::new(&tape, &model.store);
    let refs: Vec<&HyperCube> = cubes.iter().collect();
    let losses = model.loss_batch(&bound, &refs, &plans)?;
    let mut terms = Vec::with_capacity(losses.len());
    let mut total = losses[0].total;
    for (k, l) in losses.iter().enumerate() {
        let values = l.values()?;
        if !values.2.is_finite() {
            return Err(LessError::Divergence(format!("non-finite loss {}", values.2)));
        }
        terms.push(values);
        if k > 0 {
            total = total.add(l.total)?;
        }
    }
    let grads = bound.take_gradients(tape.backward(total)?);
    Ok(ChunkResult { grads, terms })
}

/// Split a batch into micro-batches of at most `size` equally shaped tiles.
fn micro_batches(tiles: &[HyperCube], draws: &[(usize, u64, u64)], size: usize) -> Vec<std::ops::Range<usize>> {
    let shape = |k: usize| {
        let t = &tiles[draws[k].0];
        (t.channels(), t.height(), t.width())
    };
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=draws.len() {
        if k == draws.len() || k - start == size || shape(k) != shape(start) {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Masked-reconstruction pretraining with AdamW and warmup + cosine decay.
///
/// One generator seeded from `cfg.seed` drives shuffling, masks and
/// augmentation. Gradients are summed in batch order, so a run is
/// reproducible regardless of thread count.
/// `observe` sees every step record as it is produced.
pub fn pretrain(
    model: &mut HyperMae,
    tiles: &[HyperCube],
    cfg: &PretrainConfig,
    mut observe: impl FnMut(&LossRecord),
) -> Result<PretrainOutcome> {
    if tiles.is_empty() {
        return Err(LessError::Config("no training tiles".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(LessError::Config("epochs and batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps_per_epoch = tiles.len().div_ceil(cfg.batch_size);
    let schedule = CosineSchedule::new(cfg.base_lr, cfg.warmup_fraction, (steps_per_epoch * cfg.epochs) as u64);
    let mut opt = AdamW::new(&model.store, cfg.weight_decay);
    let mode = precision();
    let mut records = Vec::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..tiles.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let draws: Vec<(usize, u64, u64)> = batch.iter().map(|&i| (i, rng.gen(), rng.gen())).collect();
            let frozen: &HyperMae = model;
            let results = micro_batches(tiles, &draws, cfg.micro_batch.max(1))
                .into_par_iter()
                .map(|range| with_precision(mode, || chunk_step(frozen, tiles, &draws[range], cfg)))
                .collect::<Vec<_>>();
            let mut grads: Option<ParamGrads> = None;
            let (mut ls, mut lc, mut lt) = (0.0, 0.0, 0.0);
            for r in results {
                let r = r?;
                match &mut grads {
                    Some(g) => g.add_assign(&r.grads)?,
                    None => grads = Some(r.grads),
                }
                for (s, c, t) in r.terms {
                    ls += s;
                    lc += c;
                    lt += t;
                }
            }
            let mut grads = grads.expect("batch is non-empty");
            let b = batch.len() as f64;
            grads.scale(1.0 / b);
            let lr = schedule.lr(step);
            opt.step(&mut model.store, &grads, lr);
            let record = LossRecord {
                epoch,
                step,
                l_spatial: ls / b,
                l_spectral: lc / b,
                loss: lt / b,
                lr,
            };
            observe(&record);
            records.push(record);
            epoch_sum += record.loss;
            step += 1;
        }
        let mean = epoch_sum / steps_per_epoch as f64;
        log::info!("epoch {epoch} mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(PretrainOutcome {
        records,
        epoch_losses,
        rng,
    })
}
