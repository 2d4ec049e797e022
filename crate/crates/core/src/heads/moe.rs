use std::cmp::Ordering;

use lessvit_tensor::optim::AdamW;
use lessvit_tensor::{Bound, ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::linear::argmax;
use crate::error::{LessError, Result};
use crate::init;

/// Channels kept by each expert.
pub const DEFAULT_TOP_K: usize = 3;

/// One expert: a gate over channels and a linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct MoeExpert {
    /// Gate logits, one per channel.
    pub gate: Vec<f64>,
    /// `[D, K]`.
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoeHead {
    pub experts: Vec<MoeExpert>,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoePrediction {
    pub class: usize,
    /// Argmax of each expert, in expert order.
    pub votes: Vec<usize>,
    /// Softmax class probabilities summed over experts.
    pub summed_probs: Vec<f64>,
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Indices of the `k` largest gate logits, largest first; ties to the lower index.
pub fn top_k(gate: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..gate.len()).collect();
    idx.sort_by(|&a, &b| gate[b].partial_cmp(&gate[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

impl MoeExpert {
    /// Gate-weighted average of the selected channel tokens, then logits.
    pub fn logits(&self, channel_cls: &Tensor, k: usize) -> Result<Vec<f64>> {
        let (c, d) = channel_cls.dims2()?;
        if self.gate.len() != c {
            return Err(LessError::Dimension(format!("gate over {} channels, input has {c}", self.gate.len())));
        }
        let sel = top_k(&self.gate, k);
        let weights = softmax(&sel.iter().map(|&i| self.gate[i]).collect::<Vec<_>>());
        let mut pooled = vec![0.0; d];
        for (&ch, w) in sel.iter().zip(&weights) {
            let row = &channel_cls.data()[ch * d..(ch + 1) * d];
            pooled.iter_mut().zip(row).for_each(|(p, v)| *p += w * v);
        }
        let classes = self.bias.len();
        let mut out = self.bias.clone();
        for (j, p) in pooled.iter().enumerate() {
            let wrow = &self.weight.data()[j * classes..(j + 1) * classes];
            out.iter_mut().zip(wrow).for_each(|(o, w)| *o += p * w);
        }
        Ok(out)
    }
}

/// Majority vote over experts; ties go to the larger summed probability,
/// then to the smaller class index.
pub fn moe_forward(channel_cls: &Tensor, head: &MoeHead) -> Result<MoePrediction> {
    let (c, _) = channel_cls.dims2()?;
    if head.experts.is_empty() {
        return Err(LessError::Config("a mixture needs at least one expert".into()));
    }
    if c < head.k || head.k == 0 {
        return Err(LessError::Config(format!("cannot keep {} of {c} channels", head.k)));
    }
    let classes = head.experts[0].bias.len();
    let mut counts = vec![0usize; classes];
    let mut summed_probs = vec![0.0; classes];
    let mut votes = Vec::with_capacity(head.experts.len());
    for e in &head.experts {
        let logits = e.logits(channel_cls, head.k)?;
        let vote = argmax(&logits);
        counts[vote] += 1;
        votes.push(vote);
        softmax(&logits).iter().zip(&mut summed_probs).for_each(|(p, s)| *s += p);
    }
    let class = (0..classes)
        .max_by(|&a, &b| {
            counts[a]
                .cmp(&counts[b])
                .then(summed_probs[a].partial_cmp(&summed_probs[b]).unwrap_or(Ordering::Equal))
                .then(b.cmp(&a))
        })
        .expect("at least one class");
    Ok(MoePrediction {
        class,
        votes,
        summed_probs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoeConfig {
    pub experts: usize,
    pub k: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MoeConfig {
    fn default() -> Self {
        Self {
            experts: 4,
            k: DEFAULT_TOP_K,
            epochs: 200,
            lr: 1e-2,
            seed: 0,
        }
    }
}

/// Train each expert on cross-entropy of its own logits. The top-k set is
/// re-selected every step from the current gate; gradients reach the gate
/// through the renormalized weights of the kept channels.
///
/// `channel_cls` is `[n, C, D]`.
pub fn train_moe(channel_cls: &Tensor, labels: &[usize], classes: usize, cfg: &MoeConfig) -> Result<MoeHead> {
    let [n, c, d] = channel_cls.shape() else {
        return Err(LessError::Dimension(format!("expected [n, C, D], got {:?}", channel_cls.shape())));
    };
    let (n, c, d) = (*n, *c, *d);
    if n == 0 || labels.len() != n {
        return Err(LessError::Contract(format!("{} labels for {n} samples", labels.len())));
    }
    if cfg.experts == 0 || cfg.k == 0 || cfg.k > c {
        return Err(LessError::Config(format!(
            "{} experts keeping {} of {c} channels",
            cfg.experts, cfg.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gate_init = Normal::new(0.0, 1.0).expect("unit normal");
    let mut experts = Vec::with_capacity(cfg.experts);
    for _ in 0..cfg.experts {
        let mut store = ParamStore::new();
        let gate = store.add("gate", Tensor::from_fn(&[c], |_| gate_init.sample(&mut rng)));
        let w = store.add("weight", init::xavier(&mut rng, d, classes));
        let b = store.add("bias", Tensor::zeros(&[classes]));
        let mut opt = AdamW::new(&store, 0.0);
        for _ in 0..cfg.epochs {
            let sel = top_k(store.get(gate).data(), cfg.k);
            let tape = Tape::new();
            let bound = Bound::new(&tape, &store);
            let weights = bound
                .var(gate)
                .index_select(0, &sel)?
                .reshape(&[1, cfg.k])?
                .softmax(None)?
                .transpose()?;
            let picked = tape.constant(channel_cls.clone()).index_select(1, &sel)?;
            let loss = picked
                .transpose()?
                .matmul(weights)?
                .reshape(&[n, d])?
                .matmul(bound.var(w))?
                .add_row(bound.var(b))?
                .cross_entropy(labels)?;
            let grads = bound.take_gradients(tape.backward(loss)?);
            opt.step(&mut store, &grads, cfg.lr);
        }
        experts.push(MoeExpert {
            gate: store.get(gate).data().to_vec(),
            weight: store.get(w).clone(),
            bias: store.get(b).data().to_vec(),
        });
    }
    Ok(MoeHead { experts, k: cfg.k })
}
