use std::sync::Arc;

use lessvit_tensor::optim::AdamW;
use lessvit_tensor::{Bound, ParamId, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linear::{accuracy, argmax, linear_head};
use crate::data::HyperCube;
use crate::error::{LessError, Result};
use crate::hypermae::HyperMae;
use crate::init;

#[derive(Clone, Debug, PartialEq)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            lr: 1e-4,
            weight_decay: 5e-2,
            seed: 0,
        }
    }
}

/// Encoder copy with a linear head on its global CLS token.
#[derive(Clone, Debug)]
pub struct FineTuned {
    pub model: HyperMae,
    pub weight: ParamId,
    pub bias: ParamId,
    /// Mean cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl FineTuned {
    pub fn logits(&self, cube: &HyperCube) -> Result<Vec<f64>> {
        let d = self.model.cfg.dim;
        let x = Tensor::new(&[1, d], self.model.global_features(cube)?)?;
        let store = &self.model.store;
        Ok(linear_head(&x, store.get(self.weight), store.get(self.bias))?.data().to_vec())
    }

    pub fn predict(&self, cube: &HyperCube) -> Result<usize> {
        Ok(argmax(&self.logits(cube)?))
    }

    pub fn accuracy(&self, tiles: &[&HyperCube], labels: &[usize]) -> Result<f64> {
        let predictions = tiles.iter().map(|t| self.predict(t)).collect::<Result<Vec<_>>>()?;
        Ok(accuracy(&predictions, labels))
    }
}

/// Train the encoder and a fresh linear head together on softmax
/// cross-entropy of the global CLS token. The decoder is carried along
/// unused.
pub fn fine_tune(
    model: &HyperMae,
    tiles: &[&HyperCube],
    labels: &[usize],
    classes: usize,
    cfg: &FineTuneConfig,
) -> Result<FineTuned> {
    if tiles.is_empty() || tiles.len() != labels.len() {
        return Err(LessError::Contract(format!("{} tiles for {} labels", tiles.len(), labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(LessError::Contract(format!("label {l} outside {classes} classes")));
    }
    if cfg.batch_size == 0 {
        return Err(LessError::Config("batch size must be positive".into()));
    }
    let d = model.cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tuned = model.clone();
    let weight = tuned.store.add("finetune.weight", init::xavier(&mut rng, d, classes));
    let bias = tuned.store.add("finetune.bias", Tensor::zeros(&[classes]));
    let mut opt = AdamW::new(&tuned.store, cfg.weight_decay);
    let cls: Arc<[usize]> = (0..d).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..tiles.len()).collect();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let bound = Bound::new(&tape, &tuned.store);
            let rows = batch
                .iter()
                .map(|&i| tuned.encode(&bound, tiles[i], None)?.tokens.gather(cls.clone(), &[1, d]).map_err(Into::into))
                .collect::<Result<Vec<_>>>()?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let loss = tape
                .concat(&rows, 0)?
                .matmul(bound.var(weight))?
                .add_row(bound.var(bias))?
                .cross_entropy(&y)?;
            let value = loss.value().data()[0];
            if !value.is_finite() {
                return Err(LessError::Divergence(format!("non-finite fine-tuning loss {value}")));
            }
            sum += value * batch.len() as f64;
            let grads = bound.take_gradients(tape.backward(loss)?);
            opt.step(&mut tuned.store, &grads, cfg.lr);
        }
        epoch_losses.push(sum / tiles.len() as f64);
    }
    Ok(FineTuned { model: tuned, weight, bias, epoch_losses })
}
