use lessvit_tensor::optim::AdamW;
use lessvit_tensor::{Bound, ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LessError, Result};
use crate::init;

/// `features · W + b`, `[n, D]` to `[n, K]` logits.
pub fn linear_head(features: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    Ok(features.matmul(weight)?.add_row(bias)?)
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Accuracy of always answering the most frequent training label.
pub fn majority_baseline(train_labels: &[usize], test_labels: &[usize]) -> f64 {
    let classes = train_labels.iter().chain(test_labels).max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    train_labels.iter().for_each(|&l| counts[l] += 1);
    let top = (0..classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
    accuracy(&vec![top; test_labels.len()], test_labels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Z-score features with training statistics first.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 1e-2,
            weight_decay: 1e-4,
            standardize: true,
            seed: 0,
        }
    }
}

/// Affine classifier over frozen features.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    pub weight: Tensor,
    pub bias: Tensor,
    /// Per-feature shift and scale applied before the head.
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

fn check_rows(features: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, d) = features.dims2()?;
    if n == 0 {
        return Err(LessError::Contract("empty training set".into()));
    }
    if labels.len() != n {
        return Err(LessError::Dimension(format!("{} labels for {n} feature rows", labels.len())));
    }
    Ok((n, d))
}

fn standardized(features: &Tensor, shift: &[f64], scale: &[f64]) -> Tensor {
    let d = shift.len();
    Tensor::from_fn(features.shape(), |i| (features.data()[i] - shift[i % d]) * scale[i % d])
}

/// Full-batch AdamW on softmax cross-entropy.
pub fn train_linear_probe(features: &Tensor, labels: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<LinearProbe> {
    let (n, d) = check_rows(features, labels)?;
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(LessError::Contract(format!("label {l} outside {classes} classes")));
    }
    let (shift, scale) = if cfg.standardize {
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for row in features.data().chunks(d) {
            row.iter().zip(&mut mean).for_each(|(v, m)| *m += v / n as f64);
        }
        for row in features.data().chunks(d) {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2) / n as f64;
            }
        }
        (mean, var.iter().map(|v| 1.0 / v.sqrt().max(1e-8)).collect())
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let x = standardized(features, &shift, &scale);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let w = store.add("weight", init::xavier(&mut rng, d, classes));
    let b = store.add("bias", Tensor::zeros(&[classes]));
    let mut opt = AdamW::new(&store, cfg.weight_decay);
    for _ in 0..cfg.epochs {
        let tape = Tape::new();
        let bound = Bound::new(&tape, &store);
        let loss = tape
            .constant(x.clone())
            .matmul(bound.var(w))?
            .add_row(bound.var(b))?
            .cross_entropy(labels)?;
        let grads = bound.take_gradients(tape.backward(loss)?);
        opt.step(&mut store, &grads, cfg.lr);
    }
    Ok(LinearProbe {
        weight: store.get(w).clone(),
        bias: store.get(b).clone(),
        shift,
        scale,
    })
}

impl LinearProbe {
    pub fn logits(&self, features: &Tensor) -> Result<Tensor> {
        let x = standardized(features, &self.shift, &self.scale);
        linear_head(&x, &self.weight, &self.bias)
    }

    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(features)?;
        let k = logits.shape()[1];
        Ok(logits.data().chunks(k).map(argmax).collect())
    }

    pub fn accuracy(&self, features: &Tensor, labels: &[usize]) -> Result<f64> {
        check_rows(features, labels)?;
        Ok(accuracy(&self.predict(features)?, labels))
    }
}
