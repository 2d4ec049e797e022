//! Tiles, the tile file format, synthetic generation and dataset plumbing.

mod augment;
mod cube;
mod manifest;
mod normalize;
mod synth;
mod tile_file;

use std::path::Path;

pub use augment::{augment, hflip, CropFlip};
pub use cube::{HyperCube, Modality, SAR_SURROGATE_WAVELENGTHS_NM, SENTINEL2_WAVELENGTHS_NM};
pub use manifest::{
    load_dataset, Manifest, ManifestRecord, Sample, Split, MANIFEST_FILE, MANIFEST_HEADER,
};
pub use normalize::{
    compute_stats, normalize_dataset, normalize_tile, quantile, ChannelStats, DatasetStats,
    CLIP_PERCENTILES,
};
pub use synth::{
    channel_correlation, generate_tile, horizontal_autocorrelation, SynthConfig,
};
pub use tile_file::{
    decode_tile, encode_tile, read_tile, write_tile, TileError, TILE_MAGIC, TILE_VERSION,
};

use crate::error::Result;

/// Split fractions used by [`generate_dataset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
        }
    }
}

/// Split of the `i`-th of `n` samples: contiguous train, val, test runs.
pub fn split_for(i: usize, n: usize, fractions: SplitFractions) -> Split {
    let train = (fractions.train * n as f64).round() as usize;
    let val = (fractions.val * n as f64).round() as usize;
    if i < train {
        Split::Train
    } else if i < train + val {
        Split::Val
    } else {
        Split::Test
    }
}

/// Write `count` synthetic tiles and a manifest into `dir`.
///
/// Tile `i` uses seed `seed + i`, so any prefix of a dataset is reproducible
/// on its own.
pub fn generate_dataset(
    dir: impl AsRef<Path>,
    cfg: &SynthConfig,
    count: usize,
    seed: u64,
    fractions: SplitFractions,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut manifest = Manifest::default();
    for i in 0..count {
        let (cube, label) = generate_tile(cfg, seed.wrapping_add(i as u64))?;
        let name = format!("tile_{i:05}.ght");
        write_tile(dir.join(&name), &cube)?;
        manifest.records.push(ManifestRecord {
            path: name,
            label,
            split: split_for(i, count, fractions),
        });
    }
    manifest.write(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
