use lessvit_tensor::{flops, Bound, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

use super::{AttentionConfig, KronOrder, RankCombine};
use crate::error::{LessError, Result};
use crate::init;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Spatial,
    Spectral,
}

/// Global CLS token attending over every token of the grid, `[1, D]`.
fn pool_global<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let shape = x.shape();
    let (p1, q1, d) = (shape[0], shape[1], shape[2]);
    let all = x.reshape(&[p1 * q1, d])?;
    let query = all.narrow(0, 0, 1)?;
    let weights = query
        .matmul_t(all)?
        .scale(1.0 / (d as f64).sqrt())
        .softmax(None)?;
    Ok(weights.matmul(all)?)
}

/// Attention pooling of a `[N+1, C+1, D]` grid along one axis, then projection.
///
/// Along the spatial axis the query of row `n ≥ 1` is its spatial CLS token
/// and the keys are that row's channel tokens; element 0 is the global CLS
/// pooled over the whole grid. The spectral axis is the transpose.
pub fn atten_pool<'t>(x: Var<'t>, axis: Axis, proj: Var<'t>) -> Result<Var<'t>> {
    let global = pool_global(x)?;
    pool_with_global(x, axis, global)?.matmul(proj).map_err(Into::into)
}

fn pool_with_global<'t>(x: Var<'t>, axis: Axis, global: Var<'t>) -> Result<Var<'t>> {
    let xa = match axis {
        Axis::Spatial => x,
        Axis::Spectral => x.swap_leading()?,
    };
    let shape = xa.shape();
    let (a1, b1, d) = (shape[0], shape[1], shape[2]);
    if a1 == 1 {
        return Ok(global);
    }
    if b1 < 2 {
        return Err(LessError::Dimension(format!(
            "cannot pool a {a1}x{b1} grid along {axis:?}: no tokens to attend"
        )));
    }
    let rows = xa.narrow(0, 1, a1 - 1)?;
    let query = rows.narrow(1, 0, 1)?;
    let keys = rows.narrow(1, 1, b1 - 1)?;
    let weights = query
        .bmm(keys, true)?
        .scale(1.0 / (d as f64).sqrt())
        .softmax(None)?;
    let pooled = weights.bmm(keys, false)?.reshape(&[a1 - 1, d])?;
    Ok(x.tape().concat(&[global, pooled], 0)?)
}

/// Per-head attention maps `A^i`, `[H, L, L]` each, and shared values
/// `V`, `[H, L, d]`, of pooled tokens `[H, L, d]`.
///
/// Scores are scaled by `1/√d`; `mask`, when given, is `L²` entries tiled
/// over heads.
pub fn attention_maps<'t>(
    pooled: Var<'t>,
    queries: &[Var<'t>],
    keys: &[Var<'t>],
    value: Var<'t>,
    mask: Option<&[bool]>,
) -> Result<(Vec<Var<'t>>, Var<'t>)> {
    let d = pooled.shape()[2];
    let v = pooled.bmm(value, false)?;
    let maps = queries
        .iter()
        .zip(keys)
        .map(|(&wq, &wk)| {
            let q = pooled.bmm(wq, false)?;
            let k = pooled.bmm(wk, false)?;
            Ok(q.bmm(k, true)?
                .scale(1.0 / (d as f64).sqrt())
                .softmax(mask)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((maps, v))
}

fn rank_terms<'t>(maps: Vec<Var<'t>>, v: Var<'t>) -> Result<Vec<Var<'t>>> {
    maps.into_iter()
        .map(|a| Ok(a.bmm(v, false)?))
        .collect()
}

/// Combine rank terms `Y_C^i = A_C^i V_C` (`[H, C+1, d2]`) and
/// `Y_S^i = A_S^i V_S` (`[H, N+1, d1]`) into the `[N+1, C+1, H·d1·d2]`
/// attention output, without forming any `(N+1)(C+1)`-sized map.
///
/// Per head the product `Y_C ⊗ Y_S` has rows `c·(N+1)+n` and columns
/// `j_C·d1+j_S`; rows are then moved to grid position `[n, c]`.
pub fn kron_combine<'t>(
    spectral: &[Var<'t>],
    spatial: &[Var<'t>],
    combine: RankCombine,
    order: KronOrder,
) -> Result<Var<'t>> {
    let first_s = spatial
        .first()
        .ok_or_else(|| LessError::Contract("kron_combine needs at least one rank term".into()))?;
    if spectral.len() != spatial.len() {
        return Err(LessError::Contract(format!(
            "{} spectral and {} spatial rank terms",
            spectral.len(),
            spatial.len()
        )));
    }
    let tape = first_s.tape();
    let ss = first_s.shape();
    let sc = spectral[0].shape();
    let (heads, p1, d1) = (ss[0], ss[1], ss[2]);
    let (q1, d2) = (sc[1], sc[2]);
    let mut per_head = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut acc: Option<Var<'t>> = None;
        for (yc, ys) in spectral.iter().zip(spatial) {
            let yc = yc.narrow(0, h, 1)?.reshape(&[q1, d2])?;
            let ys = ys.narrow(0, h, 1)?.reshape(&[p1, d1])?;
            let term = match order {
                KronOrder::SpectralMajor => yc.kron(ys)?,
                KronOrder::SpatialMajor => ys.kron(yc)?,
            };
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(term)?,
            });
        }
        let mut y = acc.expect("at least one rank term");
        if combine == RankCombine::Mean && spatial.len() > 1 {
            y = y.scale(1.0 / spatial.len() as f64);
        }
        per_head.push(y.reshape(&[q1, p1, d1 * d2])?.swap_leading()?);
    }
    Ok(tape.concat(&per_head, 2)?)
}

/// One pre-norm transformer block with LESS attention.
#[derive(Clone, Debug)]
pub struct LessBlock {
    pub cfg: AttentionConfig,
    pub ln1: (ParamId, ParamId),
    pub pool_spatial: ParamId,
    pub pool_spectral: ParamId,
    pub q_spatial: Vec<ParamId>,
    pub k_spatial: Vec<ParamId>,
    pub q_spectral: Vec<ParamId>,
    pub k_spectral: Vec<ParamId>,
    pub v_spatial: ParamId,
    pub v_spectral: ParamId,
    pub out: (ParamId, ParamId),
    pub ln2: (ParamId, ParamId),
    pub fc1: (ParamId, ParamId),
    pub fc2: (ParamId, ParamId),
}

impl LessBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, cfg: &AttentionConfig, rng: &mut R) -> Result<Self> {
        let (d1, d2) = cfg.factorization()?;
        let (d, h) = (cfg.dim, cfg.heads);
        let hidden = cfg.mlp_ratio * d;
        let mut add = |name: &str, t: Tensor| store.add(format!("{prefix}.{name}"), t);
        let ln1 = (add("ln1.gamma", Tensor::ones(&[d])), add("ln1.beta", Tensor::zeros(&[d])));
        let pool_spatial = add("pool_spatial", init::xavier(rng, d, h * d1));
        let pool_spectral = add("pool_spectral", init::xavier(rng, d, h * d2));
        let mut per_head = |name: String, k: usize, rng: &mut R| {
            add(&name, init::xavier_shaped(rng, &[h, k, k], k, k))
        };
        let mut q_spatial = Vec::new();
        let mut k_spatial = Vec::new();
        let mut q_spectral = Vec::new();
        let mut k_spectral = Vec::new();
        for i in 0..cfg.rank {
            q_spatial.push(per_head(format!("q_spatial.{i}"), d1, rng));
            k_spatial.push(per_head(format!("k_spatial.{i}"), d1, rng));
            q_spectral.push(per_head(format!("q_spectral.{i}"), d2, rng));
            k_spectral.push(per_head(format!("k_spectral.{i}"), d2, rng));
        }
        let v_spatial = per_head("v_spatial".into(), d1, rng);
        let v_spectral = per_head("v_spectral".into(), d2, rng);
        let out = (
            add("out.weight", init::xavier(rng, d, d)),
            add("out.bias", Tensor::zeros(&[d])),
        );
        let ln2 = (add("ln2.gamma", Tensor::ones(&[d])), add("ln2.beta", Tensor::zeros(&[d])));
        let fc1 = (
            add("fc1.weight", init::xavier(rng, d, hidden)),
            add("fc1.bias", Tensor::zeros(&[hidden])),
        );
        let fc2 = (
            add("fc2.weight", init::xavier(rng, hidden, d)),
            add("fc2.bias", Tensor::zeros(&[d])),
        );
        Ok(Self {
            cfg: cfg.clone(),
            ln1,
            pool_spatial,
            pool_spectral,
            q_spatial,
            k_spatial,
            q_spectral,
            k_spectral,
            v_spatial,
            v_spectral,
            out,
            ln2,
            fc1,
            fc2,
        })
    }

    /// Multi-head LESS attention of a normalized grid, before the output
    /// projection: `[N+1, C+1, D]`.
    ///
    /// `mask` is the `(N+1)²` spatial mask including the CLS row and column.
    pub fn attention<'t>(&self, bound: &Bound<'t, '_>, xn: Var<'t>, mask: Option<&[bool]>) -> Result<Var<'t>> {
        let (d1, d2) = self.cfg.factorization()?;
        let shape = xn.shape();
        if shape.len() != 3 || shape[2] != self.cfg.dim {
            return Err(LessError::Dimension(format!(
                "token grid {shape:?} does not have width {}",
                self.cfg.dim
            )));
        }
        let (p1, q1, h) = (shape[0], shape[1], self.cfg.heads);
        if let Some(m) = mask {
            if m.len() != p1 * p1 {
                return Err(LessError::Dimension(format!(
                    "mask of {} entries for {p1} spatial tokens",
                    m.len()
                )));
            }
        }
        flops::tagged(flops::ATTENTION, || {
            let global = pool_global(xn)?;
            let xs = pool_with_global(xn, Axis::Spatial, global)?
                .matmul(bound.var(self.pool_spatial))?;
            let xc = pool_with_global(xn, Axis::Spectral, global)?
                .matmul(bound.var(self.pool_spectral))?;
            let xs = xs.reshape(&[p1, h, d1])?.swap_leading()?;
            let xc = xc.reshape(&[q1, h, d2])?.swap_leading()?;
            let vars = |ids: &[ParamId]| ids.iter().map(|&i| bound.var(i)).collect::<Vec<_>>();
            let (maps_s, vs) = attention_maps(
                xs,
                &vars(&self.q_spatial),
                &vars(&self.k_spatial),
                bound.var(self.v_spatial),
                mask,
            )?;
            let (maps_c, vc) = attention_maps(
                xc,
                &vars(&self.q_spectral),
                &vars(&self.k_spectral),
                bound.var(self.v_spectral),
                None,
            )?;
            let ys = rank_terms(maps_s, vs)?;
            let yc = rank_terms(maps_c, vc)?;
            kron_combine(&yc, &ys, self.cfg.combine, self.cfg.kron_order)
        })
    }

    pub fn forward<'t>(&self, bound: &Bound<'t, '_>, x: Var<'t>, mask: Option<&[bool]>) -> Result<Var<'t>> {
        self.forward_batch(bound, x, &[mask])
    }

    /// Several equally shaped grids stacked along the first axis,
    /// `[B·(N+1), C+1, D]`, with one spatial mask per grid. Attention runs
    /// per grid; the projections and MLP run on the whole stack.
    pub fn forward_batch<'t>(&self, bound: &Bound<'t, '_>, x: Var<'t>, masks: &[Option<&[bool]>]) -> Result<Var<'t>> {
        let v = |id: ParamId| bound.var(id);
        let rows = x.shape()[0];
        let b = masks.len();
        if b == 0 || rows % b != 0 {
            return Err(LessError::Dimension(format!("{rows} rows do not split into {b} grids")));
        }
        let xn = x.layernorm(v(self.ln1.0), v(self.ln1.1))?;
        let att = if b == 1 {
            self.attention(bound, xn, masks[0])?
        } else {
            let per = rows / b;
            let parts = masks
                .iter()
                .enumerate()
                .map(|(i, m)| self.attention(bound, xn.narrow(0, i * per, per)?, *m))
                .collect::<Result<Vec<_>>>()?;
            bound.tape().concat(&parts, 0)?
        };
        let att = att.matmul(v(self.out.0))?.add_row(v(self.out.1))?;
        let x1 = x.add(att)?;
        let xn2 = x1.layernorm(v(self.ln2.0), v(self.ln2.1))?;
        let mlp = xn2
            .matmul(v(self.fc1.0))?
            .add_row(v(self.fc1.1))?
            .gelu()
            .matmul(v(self.fc2.0))?
            .add_row(v(self.fc2.1))?;
        Ok(x1.add(mlp)?)
    }
}
