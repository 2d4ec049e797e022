use crate::error::{LessError, Result};

/// Sensing modality of a channel; the numeric value is the on-disk tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Modality {
    Optical = 0,
    Radar = 1,
}

impl Modality {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Modality::Optical),
            1 => Some(Modality::Radar),
            _ => None,
        }
    }
}

/// Central wavelengths (nm) of the 13 Sentinel-2 bands, B0..B12.
pub const SENTINEL2_WAVELENGTHS_NM: [f64; 13] = [
    442.7, 492.4, 559.8, 664.6, 704.1, 740.5, 782.8, 832.8, 864.7, 945.1, 1373.5, 1613.7, 2202.4,
];

/// Stand-in channel indices for the Sentinel-1 VV and VH polarizations.
///
/// Radar channels have no optical wavelength; these sit well above the
/// optical range so they never collide with a band.
pub const SAR_SURROGATE_WAVELENGTHS_NM: [f64; 2] = [5000.0, 5500.0];

/// One multi-channel raster tile, channel-major `C×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperCube {
    channels: usize,
    height: usize,
    width: usize,
    resolution: f32,
    wavelengths: Vec<f32>,
    modalities: Vec<Modality>,
    pixels: Vec<f32>,
}

impl HyperCube {
    pub fn new(
        height: usize,
        width: usize,
        resolution: f32,
        wavelengths: Vec<f32>,
        modalities: Vec<Modality>,
        pixels: Vec<f32>,
    ) -> Result<Self> {
        let channels = wavelengths.len();
        if channels == 0 {
            return Err(LessError::Metadata("a tile needs at least one channel".into()));
        }
        if modalities.len() != channels {
            return Err(LessError::Metadata(format!(
                "{} modality tags for {channels} channels",
                modalities.len()
            )));
        }
        if let Some(bad) = wavelengths.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(LessError::Metadata(format!("wavelength {bad} is not positive")));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(LessError::Metadata(format!(
                "resolution {resolution} m/px is not positive"
            )));
        }
        if pixels.len() != channels * height * width {
            return Err(LessError::Dimension(format!(
                "{} pixels for {channels}x{height}x{width}",
                pixels.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            resolution,
            wavelengths,
            modalities,
            pixels,
        })
    }

    /// All-optical tile.
    pub fn optical(
        height: usize,
        width: usize,
        resolution: f32,
        wavelengths: Vec<f32>,
        pixels: Vec<f32>,
    ) -> Result<Self> {
        let modalities = vec![Modality::Optical; wavelengths.len()];
        Self::new(height, width, resolution, wavelengths, modalities, pixels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Ground sample distance in meters per pixel.
    pub fn resolution(&self) -> f32 {
        self.resolution
    }

    pub fn wavelengths(&self) -> &[f32] {
        &self.wavelengths
    }

    pub fn wavelengths_nm(&self) -> Vec<f64> {
        self.wavelengths.iter().map(|&w| w as f64).collect()
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.pixels[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.height * self.width;
        &mut self.pixels[c * plane..(c + 1) * plane]
    }

    pub fn pixel(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// Same tile with pixels replaced.
    pub fn with_pixels(&self, pixels: Vec<f32>) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.resolution,
            self.wavelengths.clone(),
            self.modalities.clone(),
            pixels,
        )
    }

    /// Keep only the listed channels, in the given order.
    pub fn select_channels(&self, picks: &[usize]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(picks.len() * self.height * self.width);
        let mut wavelengths = Vec::with_capacity(picks.len());
        let mut modalities = Vec::with_capacity(picks.len());
        for &c in picks {
            if c >= self.channels {
                return Err(LessError::Dimension(format!(
                    "channel {c} out of range for {} channels",
                    self.channels
                )));
            }
            pixels.extend_from_slice(self.channel(c));
            wavelengths.push(self.wavelengths[c]);
            modalities.push(self.modalities[c]);
        }
        Self::new(
            self.height,
            self.width,
            self.resolution,
            wavelengths,
            modalities,
            pixels,
        )
    }

    /// Patch grid extents `(H/P, W/P)`.
    pub fn patch_grid(&self, patch: usize) -> Result<(usize, usize)> {
        if patch == 0 || self.height % patch != 0 || self.width % patch != 0 {
            return Err(LessError::Dimension(format!(
                "{}x{} tile is not divisible by patch size {patch}",
                self.height, self.width
            )));
        }
        Ok((self.height / patch, self.width / patch))
    }
}
