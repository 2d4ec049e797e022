use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cube::HyperCube;
use crate::error::{LessError, Result};

/// One crop window plus an optional horizontal flip, shared by all channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropFlip {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub flip: bool,
}

impl CropFlip {
    /// Uniform crop offsets and a fair-coin flip.
    pub fn sample(tile_h: usize, tile_w: usize, crop: (usize, usize), seed: u64) -> Result<Self> {
        let (ch, cw) = crop;
        if ch == 0 || cw == 0 || ch > tile_h || cw > tile_w {
            return Err(LessError::Dimension(format!(
                "cannot crop {ch}x{cw} from a {tile_h}x{tile_w} tile"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            top: rng.gen_range(0..=tile_h - ch),
            left: rng.gen_range(0..=tile_w - cw),
            height: ch,
            width: cw,
            flip: rng.gen_bool(0.5),
        })
    }

    pub fn apply(&self, tile: &HyperCube) -> Result<HyperCube> {
        if self.top + self.height > tile.height() || self.left + self.width > tile.width() {
            return Err(LessError::Dimension(format!(
                "crop window {self:?} exceeds {}x{}",
                tile.height(),
                tile.width()
            )));
        }
        let mut pixels = Vec::with_capacity(tile.channels() * self.height * self.width);
        for c in 0..tile.channels() {
            for y in 0..self.height {
                for x in 0..self.width {
                    let sx = if self.flip { self.width - 1 - x } else { x };
                    pixels.push(tile.pixel(c, self.top + y, self.left + sx));
                }
            }
        }
        HyperCube::new(
            self.height,
            self.width,
            tile.resolution(),
            tile.wavelengths().to_vec(),
            tile.modalities().to_vec(),
            pixels,
        )
    }
}

/// Random crop of `crop` pixels plus a horizontal flip with probability ½.
pub fn augment(tile: &HyperCube, crop: (usize, usize), seed: u64) -> Result<HyperCube> {
    CropFlip::sample(tile.height(), tile.width(), crop, seed)?.apply(tile)
}

pub fn hflip(tile: &HyperCube) -> HyperCube {
    CropFlip {
        top: 0,
        left: 0,
        height: tile.height(),
        width: tile.width(),
        flip: true,
    }
    .apply(tile)
    .expect("full window always fits")
}
