use lessvit_tensor::{axis_select_indices, flops, Tensor};
use rand::Rng;

use crate::error::{LessError, Result};
use crate::init;

/// Full multi-head attention block over all `(N+1)(C+1)` tokens.
///
/// Plain tensors, no tape: it is a reference for equivalence and MAC
/// counts, never trained.
#[derive(Clone, Debug)]
pub struct VanillaBlock {
    pub dim: usize,
    pub heads: usize,
    pub ln1: (Tensor, Tensor),
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub out: (Tensor, Tensor),
    pub ln2: (Tensor, Tensor),
    pub fc1: (Tensor, Tensor),
    pub fc2: (Tensor, Tensor),
}

impl VanillaBlock {
    pub fn random<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(LessError::Config(format!(
                "dimension {dim} is not divisible by {heads} heads"
            )));
        }
        let hidden = 4 * dim;
        Ok(Self {
            dim,
            heads,
            ln1: (Tensor::ones(&[dim]), Tensor::zeros(&[dim])),
            wq: init::xavier(rng, dim, dim),
            wk: init::xavier(rng, dim, dim),
            wv: init::xavier(rng, dim, dim),
            out: (init::xavier(rng, dim, dim), Tensor::zeros(&[dim])),
            ln2: (Tensor::ones(&[dim]), Tensor::zeros(&[dim])),
            fc1: (init::xavier(rng, dim, hidden), Tensor::zeros(&[hidden])),
            fc2: (init::xavier(rng, hidden, dim), Tensor::zeros(&[dim])),
        })
    }

    fn head_columns(&self, x: &Tensor, h: usize) -> Result<Tensor> {
        let hd = self.dim / self.heads;
        let picks: Vec<usize> = (h * hd..(h + 1) * hd).collect();
        let idx = axis_select_indices(x.shape(), 1, &picks);
        Ok(x.gather(&idx, &[x.shape()[0], hd])?)
    }

    /// Row-stochastic `[T, T]` attention map of head `h` on normalized tokens.
    pub fn attention_map(&self, xn: &Tensor, h: usize) -> Result<Tensor> {
        self.head_map(&xn.matmul(&self.wq)?, &xn.matmul(&self.wk)?, h)
    }

    fn head_map(&self, q: &Tensor, k: &Tensor, h: usize) -> Result<Tensor> {
        let hd = self.dim / self.heads;
        let q = self.head_columns(q, h)?;
        let k = self.head_columns(k, h)?;
        let scores = flops::tagged(flops::ATTENTION, || q.matmul_t(&k))?;
        Ok(scores.scale(1.0 / (hd as f64).sqrt()).softmax(None)?)
    }

    /// `x` is `[T, D]`, flattened tokens.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, d) = x.dims2()?;
        if d != self.dim {
            return Err(LessError::Dimension(format!(
                "tokens of width {d} for a {}-wide block",
                self.dim
            )));
        }
        let xn = x.layernorm(&self.ln1.0, &self.ln1.1)?;
        let q = xn.matmul(&self.wq)?;
        let k = xn.matmul(&self.wk)?;
        let v = xn.matmul(&self.wv)?;
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let a = self.head_map(&q, &k, h)?;
            let vh = self.head_columns(&v, h)?;
            heads.push(flops::tagged(flops::ATTENTION, || a.matmul(&vh))?);
        }
        let refs: Vec<&Tensor> = heads.iter().collect();
        let att = Tensor::concat(&refs, 1)?
            .matmul(&self.out.0)?
            .add_row(&self.out.1)?;
        let x1 = x.add(&att)?;
        let hidden = x1
            .layernorm(&self.ln2.0, &self.ln2.1)?
            .matmul(&self.fc1.0)?
            .add_row(&self.fc1.1)?
            .gelu();
        let mlp = hidden.matmul(&self.fc2.0)?.add_row(&self.fc2.1)?;
        Ok(x1.add(&mlp)?)
    }
}
