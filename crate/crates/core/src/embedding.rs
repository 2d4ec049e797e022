//! Hyperspectral patch embedding: tied per-modality projections, CLS tokens
//! and physically grounded positional/channel encodings.
//!
//! A token grid is stored as a `[N+1, C+1, D]` tensor. Row 0 holds the
//! global CLS token at `[0,0]` followed by one spectral CLS token per
//! channel; column 0 of rows `1..=N` holds one spatial CLS token per patch
//! position; the interior holds patch tokens.

use std::sync::Arc;

use lessvit_tensor::{Bound, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

use crate::data::{HyperCube, Modality};
use crate::error::{LessError, Result};
use crate::init;

pub const DEFAULT_PATCH: usize = 16;
pub const CLS_INIT_STD: f64 = 0.02;
const PE_BASE: f64 = 10000.0;

fn sinusoid(arg: f64, d: usize) -> Vec<f64> {
    assert!(d % 2 == 0, "embedding dimension {d} must be even");
    let mut out = vec![0.0; d];
    for i in 0..d / 2 {
        let a = arg / PE_BASE.powf(2.0 * i as f64 / d as f64);
        out[2 * i] = a.sin();
        out[2 * i + 1] = a.cos();
    }
    out
}

/// Sinusoidal encoding of grid index `x` at `r` meters/pixel and patch size `p`.
///
/// The argument is the physical offset `x·r·p` in meters.
pub fn spatial_pe(x: f64, r: f64, p: f64, d: usize) -> Vec<f64> {
    sinusoid(x * r * p, d)
}

/// Row half followed by column half, each a [`spatial_pe`] of `d/2`.
pub fn spatial_pe_2d(row: usize, col: usize, r: f64, p: f64, d: usize) -> Vec<f64> {
    assert!(d % 4 == 0, "2-D positional dimension {d} must be a multiple of 4");
    let mut out = spatial_pe(row as f64, r, p, d / 2);
    out.extend(spatial_pe(col as f64, r, p, d / 2));
    out
}

/// Sinusoidal encoding of a central wavelength in nanometers.
pub fn channel_pe(lambda: f64, d: usize) -> Vec<f64> {
    sinusoid(lambda, d)
}

/// Which patch positions and channels of a tile a token grid carries.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    pub patch: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub resolution: f64,
    /// Row-major patch indices present, ascending.
    pub positions: Vec<usize>,
    /// Channel indices present, ascending.
    pub channels: Vec<usize>,
    /// Wavelength of every channel of the source tile.
    pub wavelengths: Vec<f64>,
}

impl GridLayout {
    pub fn full(cube: &HyperCube, patch: usize) -> Result<Self> {
        let (grid_rows, grid_cols) = cube.patch_grid(patch)?;
        Ok(Self {
            patch,
            grid_rows,
            grid_cols,
            resolution: cube.resolution() as f64,
            positions: (0..grid_rows * grid_cols).collect(),
            channels: (0..cube.channels()).collect(),
            wavelengths: cube.wavelengths_nm(),
        })
    }

    pub fn total_positions(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn total_channels(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_full(&self) -> bool {
        self.positions.len() == self.total_positions()
            && self.channels.len() == self.total_channels()
    }

    /// `(row, col)` on the patch grid of patch index `pos`.
    pub fn coords(&self, pos: usize) -> (usize, usize) {
        (pos / self.grid_cols, pos % self.grid_cols)
    }

    /// Token-grid extents `(N+1, C+1)`.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.positions.len() + 1, self.channels.len() + 1)
    }

    /// Sub-layout keeping the listed entries of `positions` and `channels`.
    pub fn select(&self, positions: Vec<usize>, channels: Vec<usize>) -> Self {
        Self {
            positions,
            channels,
            ..self.clone()
        }
    }

    /// Additive embedding for every slot of the grid, `[N+1, C+1, d]`.
    pub fn positional_grid(&self, d: usize) -> Tensor {
        let (rows, cols) = self.grid_shape();
        let mut out = Tensor::zeros(&[rows, cols, d]);
        let chan: Vec<Vec<f64>> = self
            .channels
            .iter()
            .map(|&c| channel_pe(self.wavelengths[c], d))
            .collect();
        let data = out.data_mut();
        for (n, &pos) in std::iter::once(&usize::MAX)
            .chain(&self.positions)
            .enumerate()
        {
            let spatial = (n > 0).then(|| {
                let (r, c) = self.coords(pos);
                spatial_pe_2d(r, c, self.resolution, self.patch as f64, d)
            });
            for c in 0..cols {
                let slot = &mut data[(n * cols + c) * d..(n * cols + c + 1) * d];
                if let Some(s) = &spatial {
                    slot.iter_mut().zip(s).for_each(|(o, v)| *o += v);
                }
                if c > 0 {
                    slot.iter_mut().zip(&chan[c - 1]).for_each(|(o, v)| *o += v);
                }
            }
        }
        out
    }
}

/// A token grid on a tape together with its layout.
#[derive(Clone, Debug)]
pub struct TokenGrid<'t> {
    pub tokens: Var<'t>,
    pub layout: GridLayout,
}

/// Learnable parameters of the patch embedding.
#[derive(Clone, Debug)]
pub struct EmbedParams {
    pub patch: usize,
    pub dim: usize,
    pub optical: ParamId,
    pub radar: ParamId,
    pub global_cls: ParamId,
    pub spatial_cls: ParamId,
    pub spectral_cls: ParamId,
}

impl EmbedParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        patch: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if patch == 0 {
            return Err(LessError::Config("patch size must be positive".into()));
        }
        if dim == 0 || dim % 4 != 0 {
            return Err(LessError::Config(format!(
                "embedding dimension {dim} must be a positive multiple of 4"
            )));
        }
        let p2 = patch * patch;
        Ok(Self {
            patch,
            dim,
            optical: store.add(format!("{prefix}.proj_optical"), init::xavier(rng, p2, dim)),
            radar: store.add(format!("{prefix}.proj_radar"), init::xavier(rng, p2, dim)),
            global_cls: store.add(
                format!("{prefix}.cls_global"),
                init::normal(rng, &[dim], CLS_INIT_STD),
            ),
            spatial_cls: store.add(
                format!("{prefix}.cls_spatial"),
                init::normal(rng, &[dim], CLS_INIT_STD),
            ),
            spectral_cls: store.add(
                format!("{prefix}.cls_spectral"),
                init::normal(rng, &[dim], CLS_INIT_STD),
            ),
        })
    }

    pub fn projection(&self, modality: Modality) -> ParamId {
        match modality {
            Modality::Optical => self.optical,
            Modality::Radar => self.radar,
        }
    }
}

/// Flattened patches `[N, C, P²]`, patches in row-major grid order.
pub fn patchify(cube: &HyperCube, patch: usize) -> Result<Tensor> {
    let (gr, gc) = cube.patch_grid(patch)?;
    let (c, w) = (cube.channels(), cube.width());
    let p2 = patch * patch;
    let mut data = vec![0.0; gr * gc * c * p2];
    for ch in 0..c {
        let plane = cube.channel(ch);
        for n in 0..gr * gc {
            let (py, px) = (n / gc, n % gc);
            let dst = &mut data[(n * c + ch) * p2..(n * c + ch + 1) * p2];
            for y in 0..patch {
                let src = &plane[(py * patch + y) * w + px * patch..][..patch];
                for (d, &s) in dst[y * patch..(y + 1) * patch].iter_mut().zip(src) {
                    *d = s as f64;
                }
            }
        }
    }
    Ok(Tensor::new(&[gr * gc, c, p2], data)?)
}

/// Index map turning `[N, C, P²]` patches back into a `[C, H, W]` image.
pub fn unpatchify_index(grid_rows: usize, grid_cols: usize, channels: usize, patch: usize) -> Vec<usize> {
    let (h, w) = (grid_rows * patch, grid_cols * patch);
    let p2 = patch * patch;
    let mut index = Vec::with_capacity(channels * h * w);
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                let n = (y / patch) * grid_cols + x / patch;
                index.push((n * channels + c) * p2 + (y % patch) * patch + x % patch);
            }
        }
    }
    index
}

/// Raw patch tokens `[N, C, D]`; each channel uses its modality's projection.
pub fn tied_patch_embed<'t>(bound: &Bound<'t, '_>, params: &EmbedParams, cube: &HyperCube) -> Result<Var<'t>> {
    if cube.wavelengths().len() != cube.channels() {
        return Err(LessError::Metadata("wavelength count does not match channels".into()));
    }
    let patches = patchify(cube, params.patch)?;
    let tape = bound.tape();
    let modalities = cube.modalities();
    let first = modalities[0];
    if modalities.iter().all(|&m| m == first) {
        return Ok(tape.constant(patches).matmul(bound.var(params.projection(first)))?);
    }
    let mut order = Vec::with_capacity(cube.channels());
    let mut parts = Vec::new();
    for modality in [Modality::Optical, Modality::Radar] {
        let picks: Vec<usize> = (0..cube.channels())
            .filter(|&c| modalities[c] == modality)
            .collect();
        if picks.is_empty() {
            continue;
        }
        let idx = lessvit_tensor::axis_select_indices(patches.shape(), 1, &picks);
        let n = patches.shape()[0];
        let sub = patches.gather(&idx, &[n, picks.len(), patches.shape()[2]])?;
        parts.push(tape.constant(sub).matmul(bound.var(params.projection(modality)))?);
        order.extend(picks);
    }
    let joined = tape.concat(&parts, 1)?;
    let mut inverse = vec![0; order.len()];
    for (slot, &c) in order.iter().enumerate() {
        inverse[c] = slot;
    }
    Ok(joined.index_select(1, &inverse)?)
}

/// Prepend CLS tokens and add positional/channel embeddings.
pub fn assemble_token_grid<'t>(
    bound: &Bound<'t, '_>,
    params: &EmbedParams,
    raw: Var<'t>,
    layout: &GridLayout,
) -> Result<TokenGrid<'t>> {
    let shape = raw.shape();
    let (n, c) = (layout.positions.len(), layout.channels.len());
    if shape != [n, c, params.dim] {
        return Err(LessError::Dimension(format!(
            "raw tokens {shape:?} do not match layout {n}x{c}x{}",
            params.dim
        )));
    }
    let d = params.dim;
    let tape = bound.tape();
    let tile = |id: ParamId, count: usize, shape: &[usize]| -> Result<Var<'t>> {
        let index: Arc<[usize]> = (0..count * d).map(|i| i % d).collect();
        Ok(bound.var(id).gather(index, shape)?)
    };
    let global = bound.var(params.global_cls).reshape(&[1, 1, d])?;
    let spectral = tile(params.spectral_cls, c, &[1, c, d])?;
    let spatial = tile(params.spatial_cls, n, &[n, 1, d])?;
    let top = tape.concat(&[global, spectral], 1)?;
    let body = tape.concat(&[spatial, raw], 1)?;
    let grid = tape.concat(&[top, body], 0)?;
    let pe = tape.constant(layout.positional_grid(d));
    Ok(TokenGrid {
        tokens: grid.add(pe)?,
        layout: layout.clone(),
    })
}

/// Full token grid of a tile.
pub fn embed<'t>(bound: &Bound<'t, '_>, params: &EmbedParams, cube: &HyperCube) -> Result<TokenGrid<'t>> {
    let layout = GridLayout::full(cube, params.patch)?;
    let raw = tied_patch_embed(bound, params, cube)?;
    assemble_token_grid(bound, params, raw, &layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_index_alternates() {
        let v = spatial_pe(0.0, 10.0, 16.0, 6);
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn unpatchify_inverts_patchify() {
        let pixels: Vec<f32> = (0..2 * 4 * 6).map(|i| i as f32).collect();
        let cube = HyperCube::optical(4, 6, 10.0, vec![500.0, 600.0], pixels).unwrap();
        let patches = patchify(&cube, 2).unwrap();
        let idx = unpatchify_index(2, 3, 2, 2);
        let img = patches.gather(&idx, &[2, 4, 6]).unwrap();
        let back: Vec<f64> = cube.pixels().iter().map(|&v| v as f64).collect();
        assert_eq!(img.data(), &back[..]);
    }

    #[test]
    fn coords_are_row_major() {
        let cube = HyperCube::optical(32, 48, 10.0, vec![500.0], vec![0.0; 32 * 48]).unwrap();
        let layout = GridLayout::full(&cube, 16).unwrap();
        assert_eq!(layout.coords(4), (1, 1));
        assert_eq!(layout.grid_shape(), (7, 2));
    }
}
