use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use lessvit_tensor::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_terms, patch_normalized_target, LossTerms};
use super::masking::{apply_masks, MaskPlan, MaskRatios};
use crate::attention::{AttentionConfig, DistanceMetric, LessBlock, PerceptionMask, RankCombine};
use crate::data::HyperCube;
use crate::embedding::{embed, unpatchify_index, EmbedParams, GridLayout, TokenGrid};
use crate::error::{LessError, Result};
use crate::init;

/// Architecture and masking hyperparameters of a Hyper-MAE model.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperMaeConfig {
    pub patch: usize,
    pub dim: usize,
    pub heads: usize,
    pub ratio: usize,
    pub rank: usize,
    pub combine: RankCombine,
    pub mlp_ratio: usize,
    pub encoder_depth: usize,
    pub decoder_dim: usize,
    pub decoder_heads: usize,
    pub decoder_depth: usize,
    pub mask: MaskRatios,
    /// Restrict spatial attention to nearby patches.
    pub perception: bool,
    /// Defaults to two patch pitches when unset.
    pub threshold_m: Option<f64>,
    pub metric: DistanceMetric,
    /// Regress per-patch standardized pixels.
    pub norm_pix: bool,
}

impl HyperMaeConfig {
    /// ViT-B encoder with the 512-wide decoder.
    pub fn base() -> Self {
        Self {
            patch: 16,
            dim: 768,
            heads: 12,
            ratio: 16,
            rank: 1,
            combine: RankCombine::Mean,
            mlp_ratio: 4,
            encoder_depth: 12,
            decoder_dim: 512,
            decoder_heads: 8,
            decoder_depth: 8,
            mask: MaskRatios::default(),
            perception: true,
            threshold_m: None,
            metric: DistanceMetric::Euclidean,
            norm_pix: false,
        }
    }

    /// ViT-S encoder with a 4-block decoder.
    pub fn small() -> Self {
        Self {
            dim: 384,
            heads: 6,
            decoder_depth: 4,
            ..Self::base()
        }
    }

    /// ViT-S widths at desk-scale depth: 4 encoder and 2 narrow decoder blocks.
    pub fn desk() -> Self {
        Self {
            encoder_depth: 4,
            decoder_dim: 128,
            decoder_heads: 2,
            decoder_depth: 2,
            ..Self::small()
        }
    }

    pub fn encoder_attention(&self) -> AttentionConfig {
        AttentionConfig {
            mlp_ratio: self.mlp_ratio,
            combine: self.combine,
            ..AttentionConfig::new(self.dim, self.heads, self.ratio, self.rank)
        }
    }

    pub fn decoder_attention(&self) -> AttentionConfig {
        AttentionConfig {
            mlp_ratio: self.mlp_ratio,
            combine: self.combine,
            ..AttentionConfig::new(self.decoder_dim, self.decoder_heads, self.ratio, self.rank)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 {
            return Err(LessError::Config("patch size must be positive".into()));
        }
        if self.encoder_depth == 0 || self.decoder_depth == 0 {
            return Err(LessError::Config("encoder and decoder need at least one block".into()));
        }
        if self.dim % 4 != 0 || self.decoder_dim % 4 != 0 {
            return Err(LessError::Config("embedding widths must be multiples of 4".into()));
        }
        if let Some(t) = self.threshold_m {
            if !(t > 0.0) {
                return Err(LessError::Config(format!("perception threshold {t} must be positive")));
            }
        }
        self.encoder_attention().validate()?;
        self.decoder_attention().validate()
    }

    /// `key=value` lines, one per field.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let threshold = self.threshold_m.map_or("auto".to_string(), |t| t.to_string());
        let fields: [(&str, String); 17] = [
            ("patch", self.patch.to_string()),
            ("dim", self.dim.to_string()),
            ("heads", self.heads.to_string()),
            ("ratio", self.ratio.to_string()),
            ("rank", self.rank.to_string()),
            ("combine", self.combine.to_string()),
            ("mlp_ratio", self.mlp_ratio.to_string()),
            ("encoder_depth", self.encoder_depth.to_string()),
            ("decoder_dim", self.decoder_dim.to_string()),
            ("decoder_heads", self.decoder_heads.to_string()),
            ("decoder_depth", self.decoder_depth.to_string()),
            ("mask_spatial", self.mask.spatial.to_string()),
            ("mask_spectral", self.mask.spectral.to_string()),
            ("perception", self.perception.to_string()),
            ("threshold_m", threshold),
            ("metric", self.metric.to_string()),
            ("norm_pix", self.norm_pix.to_string()),
        ];
        for (k, v) in fields {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LessError::Config(format!("malformed config line `{line}`")))?;
            map.insert(k.to_string(), v.to_string());
        }
        fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = map
                .get(key)
                .ok_or_else(|| LessError::Config(format!("missing config key `{key}`")))?;
            raw.parse()
                .map_err(|_| LessError::Config(format!("bad value `{raw}` for `{key}`")))
        }
        let threshold: String = get(&map, "threshold_m")?;
        let cfg = Self {
            patch: get(&map, "patch")?,
            dim: get(&map, "dim")?,
            heads: get(&map, "heads")?,
            ratio: get(&map, "ratio")?,
            rank: get(&map, "rank")?,
            combine: get(&map, "combine")?,
            mlp_ratio: get(&map, "mlp_ratio")?,
            encoder_depth: get(&map, "encoder_depth")?,
            decoder_dim: get(&map, "decoder_dim")?,
            decoder_heads: get(&map, "decoder_heads")?,
            decoder_depth: get(&map, "decoder_depth")?,
            mask: MaskRatios {
                spatial: get(&map, "mask_spatial")?,
                spectral: get(&map, "mask_spectral")?,
            },
            perception: get(&map, "perception")?,
            threshold_m: match threshold.as_str() {
                "auto" => None,
                t => Some(
                    t.parse()
                        .map_err(|_| LessError::Config(format!("bad threshold `{t}`")))?,
                ),
            },
            metric: get(&map, "metric")?,
            norm_pix: get(&map, "norm_pix")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Encoder, decoder and pixel head of a masked autoencoder over token grids.
#[derive(Clone, Debug)]
pub struct HyperMae {
    pub cfg: HyperMaeConfig,
    pub store: ParamStore,
    pub embed: EmbedParams,
    pub encoder: Vec<LessBlock>,
    pub encoder_norm: (ParamId, ParamId),
    pub decoder_embed: (ParamId, ParamId),
    pub mask_token: ParamId,
    pub decoder: Vec<LessBlock>,
    pub decoder_norm: (ParamId, ParamId),
    pub head: (ParamId, ParamId),
}

fn norm_pair(store: &mut ParamStore, prefix: &str, d: usize) -> (ParamId, ParamId) {
    (
        store.add(format!("{prefix}.gamma"), Tensor::ones(&[d])),
        store.add(format!("{prefix}.beta"), Tensor::zeros(&[d])),
    )
}

impl HyperMae {
    /// Fresh model; parameter names and order depend only on `cfg`.
    pub fn new(cfg: HyperMaeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embed = EmbedParams::new(&mut store, "embed", cfg.patch, cfg.dim, &mut rng)?;
        let enc_cfg = cfg.encoder_attention();
        let encoder = (0..cfg.encoder_depth)
            .map(|i| LessBlock::new(&mut store, &format!("encoder.{i}"), &enc_cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let encoder_norm = norm_pair(&mut store, "encoder.norm", cfg.dim);
        let (d, dd, p2) = (cfg.dim, cfg.decoder_dim, cfg.patch * cfg.patch);
        let decoder_embed = (
            store.add("decoder.embed.weight", init::xavier(&mut rng, d, dd)),
            store.add("decoder.embed.bias", Tensor::zeros(&[dd])),
        );
        let mask_token = store.add("decoder.mask_token", init::normal(&mut rng, &[dd], 0.02));
        let dec_cfg = cfg.decoder_attention();
        let decoder = (0..cfg.decoder_depth)
            .map(|i| LessBlock::new(&mut store, &format!("decoder.{i}"), &dec_cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let decoder_norm = norm_pair(&mut store, "decoder.norm", dd);
        let head = (
            store.add("head.weight", init::xavier(&mut rng, dd, p2)),
            store.add("head.bias", Tensor::zeros(&[p2])),
        );
        Ok(Self {
            cfg,
            store,
            embed,
            encoder,
            encoder_norm,
            decoder_embed,
            mask_token,
            decoder,
            decoder_norm,
            head,
        })
    }

    /// Spatial attention mask, CLS included, for the patches in `layout`.
    pub fn perception_mask(&self, layout: &GridLayout) -> Option<Vec<bool>> {
        self.cfg.perception.then(|| {
            let t = self
                .cfg
                .threshold_m
                .unwrap_or_else(|| PerceptionMask::default_threshold(layout.patch, layout.resolution));
            PerceptionMask::for_layout(layout, t, self.cfg.metric).with_cls()
        })
    }

    /// Embed, drop masked rows/columns, run the encoder.
    pub fn encode<'t>(&self, bound: &Bound<'t, '_>, cube: &HyperCube, plan: Option<&MaskPlan>) -> Result<TokenGrid<'t>> {
        let plans = plan.map(std::slice::from_ref);
        Ok(self.encode_batch(bound, &[cube], plans)?.remove(0))
    }

    /// [`HyperMae::encode`] over tiles whose masked grids share one shape.
    pub fn encode_batch<'t>(
        &self,
        bound: &Bound<'t, '_>,
        cubes: &[&HyperCube],
        plans: Option<&[MaskPlan]>,
    ) -> Result<Vec<TokenGrid<'t>>> {
        if let Some(p) = plans {
            if p.len() != cubes.len() {
                return Err(LessError::Contract(format!("{} plans for {} tiles", p.len(), cubes.len())));
            }
        }
        let grids = cubes
            .iter()
            .enumerate()
            .map(|(i, cube)| {
                let full = embed(bound, &self.embed, cube)?;
                match plans {
                    Some(p) => apply_masks(&full, &p[i]),
                    None => Ok(full),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let layouts: Vec<GridLayout> = grids.iter().map(|g| g.layout.clone()).collect();
        let tokens: Vec<Var<'t>> = grids.iter().map(|g| g.tokens).collect();
        let x = self.run_stack(bound, &tokens, &layouts, &self.encoder, self.encoder_norm)?;
        Ok(x.into_iter()
            .zip(layouts)
            .map(|(tokens, layout)| TokenGrid { tokens, layout })
            .collect())
    }

    /// Blocks and final norm over equally shaped grids, batched.
    fn run_stack<'t>(
        &self,
        bound: &Bound<'t, '_>,
        grids: &[Var<'t>],
        layouts: &[GridLayout],
        blocks: &[LessBlock],
        norm: (ParamId, ParamId),
    ) -> Result<Vec<Var<'t>>> {
        let shape = grids[0].shape();
        if let Some(g) = grids.iter().find(|g| g.shape() != shape) {
            return Err(LessError::Dimension(format!(
                "cannot batch grids {shape:?} and {:?}",
                g.shape()
            )));
        }
        let masks: Vec<Option<Vec<bool>>> = layouts.iter().map(|l| self.perception_mask(l)).collect();
        let mask_refs: Vec<Option<&[bool]>> = masks.iter().map(|m| m.as_deref()).collect();
        let mut x = if grids.len() == 1 {
            grids[0]
        } else {
            bound.tape().concat(grids, 0)?
        };
        for block in blocks {
            x = block.forward_batch(bound, x, &mask_refs)?;
        }
        let x = x.layernorm(bound.var(norm.0), bound.var(norm.1))?;
        if grids.len() == 1 {
            return Ok(vec![x]);
        }
        (0..grids.len())
            .map(|i| Ok(x.narrow(0, i * shape[0], shape[0])?))
            .collect()
    }

    /// Decoder input on the full grid: projected visible tokens, the mask
    /// token elsewhere, plus positional/channel embedding at absent slots.
    fn decoder_input<'t>(&self, bound: &Bound<'t, '_>, latent: &TokenGrid<'t>) -> Result<(Var<'t>, GridLayout)> {
        let vis = &latent.layout;
        let full = vis.select(
            (0..vis.total_positions()).collect(),
            (0..vis.total_channels()).collect(),
        );
        let dd = self.cfg.decoder_dim;
        let (vp, vc) = vis.grid_shape();
        let (fp, fc) = full.grid_shape();
        let v = |id| bound.var(id);
        let projected = latent
            .tokens
            .matmul(v(self.decoder_embed.0))?
            .add_row(v(self.decoder_embed.1))?
            .reshape(&[vp * vc, dd])?;
        let source = bound
            .tape()
            .concat(&[projected, v(self.mask_token).reshape(&[1, dd])?], 0)?;
        let mut row_of = vec![None; fp];
        row_of[0] = Some(0);
        vis.positions.iter().enumerate().for_each(|(i, &p)| row_of[p + 1] = Some(i + 1));
        let mut col_of = vec![None; fc];
        col_of[0] = Some(0);
        vis.channels.iter().enumerate().for_each(|(i, &c)| col_of[c + 1] = Some(i + 1));
        let mut index = Vec::with_capacity(fp * fc * dd);
        let mut pe = full.positional_grid(dd);
        let pe_data = pe.data_mut();
        for n in 0..fp {
            for c in 0..fc {
                let slot = n * fc + c;
                let src = match (row_of[n], col_of[c]) {
                    (Some(r), Some(k)) => {
                        pe_data[slot * dd..(slot + 1) * dd].fill(0.0);
                        r * vc + k
                    }
                    _ => vp * vc,
                };
                index.extend((0..dd).map(|j| src * dd + j));
            }
        }
        let index: Arc<[usize]> = index.into();
        let grid = source
            .gather(index, &[fp, fc, dd])?
            .add(bound.tape().constant(pe))?;
        Ok((grid, full))
    }

    /// Decode an encoded grid into a `[C, H, W]` image of the full tile.
    pub fn reconstruct<'t>(&self, bound: &Bound<'t, '_>, latent: &TokenGrid<'t>) -> Result<Var<'t>> {
        Ok(self.reconstruct_batch(bound, std::slice::from_ref(latent))?.remove(0))
    }

    pub fn reconstruct_batch<'t>(&self, bound: &Bound<'t, '_>, latents: &[TokenGrid<'t>]) -> Result<Vec<Var<'t>>> {
        let (inputs, layouts): (Vec<_>, Vec<_>) = latents
            .iter()
            .map(|l| self.decoder_input(bound, l))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let decoded = self.run_stack(bound, &inputs, &layouts, &self.decoder, self.decoder_norm)?;
        let v = |id| bound.var(id);
        let p = self.cfg.patch;
        decoded
            .into_iter()
            .zip(&layouts)
            .map(|(x, full)| {
                let (n, c) = (full.positions.len(), full.channels.len());
                let patches = x
                    .narrow(0, 1, n)?
                    .narrow(1, 1, c)?
                    .matmul(v(self.head.0))?
                    .add_row(v(self.head.1))?;
                let index: Arc<[usize]> = unpatchify_index(full.grid_rows, full.grid_cols, c, p).into();
                Ok(patches.gather(index, &[c, full.grid_rows * p, full.grid_cols * p])?)
            })
            .collect()
    }

    fn target(&self, cube: &HyperCube) -> Result<Tensor> {
        let target = Tensor::new(
            &[cube.channels(), cube.height(), cube.width()],
            cube.pixels().iter().map(|&v| v as f64).collect(),
        )?;
        if self.cfg.norm_pix {
            patch_normalized_target(&target, self.cfg.patch)
        } else {
            Ok(target)
        }
    }

    /// Reconstruction loss of one tile under `plan`.
    pub fn loss<'t>(&self, bound: &Bound<'t, '_>, cube: &HyperCube, plan: &MaskPlan) -> Result<LossTerms<'t>> {
        Ok(self.loss_batch(bound, &[cube], std::slice::from_ref(plan))?.remove(0))
    }

    /// Per-tile losses; tiles must share one shape and mask counts.
    pub fn loss_batch<'t>(&self, bound: &Bound<'t, '_>, cubes: &[&HyperCube], plans: &[MaskPlan]) -> Result<Vec<LossTerms<'t>>> {
        let latents = self.encode_batch(bound, cubes, Some(plans))?;
        let recons = self.reconstruct_batch(bound, &latents)?;
        recons
            .into_iter()
            .zip(cubes.iter().zip(plans))
            .map(|(r, (cube, plan))| loss_terms(r, &self.target(cube)?, plan, self.cfg.patch))
            .collect()
    }

    /// Encoded token grid `[N+1, C+1, D]` of an unmasked tile.
    pub fn features(&self, cube: &HyperCube) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = Bound::new(&tape, &self.store);
        let grid = self.encode(&bound, cube, None)?;
        Ok(Arc::unwrap_or_clone(grid.tokens.value()))
    }

    /// Global CLS token of the encoded tile.
    pub fn global_features(&self, cube: &HyperCube) -> Result<Vec<f64>> {
        let f = self.features(cube)?;
        Ok(f.data()[..self.cfg.dim].to_vec())
    }

    /// Spectral CLS tokens `[C, D]`, one per channel.
    pub fn channel_features(&self, cube: &HyperCube) -> Result<Tensor> {
        let f = self.features(cube)?;
        let (c, d) = (cube.channels(), self.cfg.dim);
        Ok(Tensor::new(&[c, d], f.data()[d..(c + 1) * d].to_vec())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_record_round_trips() {
        let mut cfg = HyperMaeConfig::small();
        cfg.threshold_m = Some(1234.5);
        cfg.norm_pix = true;
        assert_eq!(HyperMaeConfig::from_record(&cfg.to_record()).unwrap(), cfg);
        let base = HyperMaeConfig::base();
        assert_eq!(HyperMaeConfig::from_record(&base.to_record()).unwrap(), base);
    }

    #[test]
    fn missing_keys_are_reported() {
        let text = HyperMaeConfig::small().to_record().replace("dim=384\n", "");
        let err = HyperMaeConfig::from_record(&text).unwrap_err();
        assert!(err.to_string().contains("dim"), "{err}");
    }
}
