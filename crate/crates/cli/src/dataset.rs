use std::path::{Path, PathBuf};

use lessvit_core::data::{compute_stats, load_dataset, normalize_tile, HyperCube, Split};
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Environment variable naming the dataset root when no path is given.
pub const DATA_DIR_ENV: &str = "LESS_DATA_DIR";

/// Dataset directory from the flag, then the config file, then `LESS_DATA_DIR`.
pub fn resolve_data_dir(flag: Option<&Path>, config: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = flag.or(config) {
        return Ok(p.to_path_buf());
    }
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Usage(format!("no dataset given: pass --data or set {DATA_DIR_ENV}")))
}

/// Tiles ready for the model: clipped and scaled into `[0, 1]` with
/// statistics of the training split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub tiles: Vec<HyperCube>,
    pub labels: Vec<Option<usize>>,
    pub splits: Vec<Split>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.tiles.first().map_or(0, |t| t.channels())
    }

    /// Indices of labelled samples in `split`.
    pub fn labelled(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split && self.labels[i].is_some())
            .collect()
    }

    pub fn classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }
}

pub fn load_prepared(dir: &Path) -> Result<Prepared> {
    let samples = load_dataset(dir)?;
    if samples.is_empty() {
        return Err(CliError::Usage(format!("dataset {} is empty", dir.display())));
    }
    let has_train = samples.iter().any(|s| s.split == Split::Train);
    let stats = compute_stats(
        samples
            .iter()
            .filter(|s| !has_train || s.split == Split::Train)
            .map(|s| &s.cube),
    )?;
    let tiles = samples
        .par_iter()
        .map(|s| {
            let t = normalize_tile(&s.cube, &stats)?;
            let px = t.pixels().iter().map(|v| v / 255.0).collect();
            Ok(t.with_pixels(px)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        tiles,
        labels: samples.iter().map(|s| s.label).collect(),
        splits: samples.iter().map(|s| s.split).collect(),
    })
}
