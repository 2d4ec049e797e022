use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::TokenGrid;
use crate::error::{LessError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskRatios {
    pub spatial: f64,
    pub spectral: f64,
}

impl Default for MaskRatios {
    fn default() -> Self {
        Self {
            spatial: 0.75,
            spectral: 0.5,
        }
    }
}

/// `round(ratio · total)` with halves rounded up.
pub fn mask_count(ratio: f64, total: usize) -> usize {
    (ratio * total as f64 + 0.5).floor() as usize
}

/// Masked patch positions and channels of one sample. One spatial pattern
/// serves every channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPlan {
    pub positions: usize,
    pub channels: usize,
    /// Ascending.
    pub masked_patches: Vec<usize>,
    /// Ascending.
    pub masked_channels: Vec<usize>,
    pub seed: u64,
}

impl MaskPlan {
    pub fn new(
        positions: usize,
        channels: usize,
        mut masked_patches: Vec<usize>,
        mut masked_channels: Vec<usize>,
    ) -> Result<Self> {
        masked_patches.sort_unstable();
        masked_patches.dedup();
        masked_channels.sort_unstable();
        masked_channels.dedup();
        if let Some(&p) = masked_patches.iter().find(|&&p| p >= positions) {
            return Err(LessError::Contract(format!(
                "masked patch {p} out of range for {positions} positions"
            )));
        }
        if let Some(&c) = masked_channels.iter().find(|&&c| c >= channels) {
            return Err(LessError::Contract(format!(
                "masked channel {c} out of range for {channels} channels"
            )));
        }
        Ok(Self {
            positions,
            channels,
            masked_patches,
            masked_channels,
            seed: 0,
        })
    }

    pub fn empty(positions: usize, channels: usize) -> Self {
        Self {
            positions,
            channels,
            masked_patches: Vec::new(),
            masked_channels: Vec::new(),
            seed: 0,
        }
    }

    fn complement(masked: &[usize], total: usize) -> Vec<usize> {
        let mut keep = vec![true; total];
        masked.iter().for_each(|&m| keep[m] = false);
        (0..total).filter(|&i| keep[i]).collect()
    }

    pub fn visible_patches(&self) -> Vec<usize> {
        Self::complement(&self.masked_patches, self.positions)
    }

    pub fn visible_channels(&self) -> Vec<usize> {
        Self::complement(&self.masked_channels, self.channels)
    }

    /// Token count entering the encoder, CLS tokens included.
    pub fn visible_tokens(&self) -> usize {
        (self.positions - self.masked_patches.len() + 1) * (self.channels - self.masked_channels.len() + 1)
    }
}

/// Uniform draw without replacement on both axes.
pub fn sample_mask_plan(positions: usize, channels: usize, ratios: MaskRatios, seed: u64) -> Result<MaskPlan> {
    for (name, r) in [("spatial", ratios.spatial), ("spectral", ratios.spectral)] {
        if !(r > 0.0 && r < 1.0) {
            return Err(LessError::Config(format!("{name} mask ratio {r} must lie in (0, 1)")));
        }
    }
    let mp = mask_count(ratios.spatial, positions);
    let mc = mask_count(ratios.spectral, channels);
    if mp >= positions || mc >= channels {
        return Err(LessError::Config(format!(
            "masking {mp}/{positions} patches and {mc}/{channels} channels leaves nothing visible"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patches = sample(&mut rng, positions, mp).into_vec();
    let chans = sample(&mut rng, channels, mc).into_vec();
    let mut plan = MaskPlan::new(positions, channels, patches, chans)?;
    plan.seed = seed;
    Ok(plan)
}

/// Drop masked rows and columns; CLS row and column always survive.
pub fn apply_masks<'t>(grid: &TokenGrid<'t>, plan: &MaskPlan) -> Result<TokenGrid<'t>> {
    let layout = &grid.layout;
    if plan.positions != layout.positions.len() || plan.channels != layout.channels.len() {
        return Err(LessError::Contract(format!(
            "plan for {}x{} applied to a {}x{} grid",
            plan.positions,
            plan.channels,
            layout.positions.len(),
            layout.channels.len()
        )));
    }
    if plan.masked_patches.is_empty() && plan.masked_channels.is_empty() {
        return Ok(grid.clone());
    }
    let keep_p = plan.visible_patches();
    let keep_c = plan.visible_channels();
    let rows: Vec<usize> = std::iter::once(0).chain(keep_p.iter().map(|p| p + 1)).collect();
    let cols: Vec<usize> = std::iter::once(0).chain(keep_c.iter().map(|c| c + 1)).collect();
    let tokens = grid.tokens.index_select(0, &rows)?.index_select(1, &cols)?;
    let positions = keep_p.iter().map(|&i| layout.positions[i]).collect();
    let channels = keep_c.iter().map(|&i| layout.channels[i]).collect();
    Ok(TokenGrid {
        tokens,
        layout: layout.select(positions, channels),
    })
}
