//! Synthetic multi-channel tiles built from smooth latent fields.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cube::{HyperCube, Modality, SAR_SURROGATE_WAVELENGTHS_NM, SENTINEL2_WAVELENGTHS_NM};
use crate::error::{LessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    /// Meters per pixel.
    pub resolution: f64,
    pub wavelengths: Vec<f64>,
    pub modalities: Vec<Modality>,
    /// Gaussian smoothing scale of the latent fields, in meters.
    pub correlation_length_m: f64,
    /// Number of latent fields, and of channel groups.
    pub mixing_rank: usize,
    /// Standard deviation of the independent per-channel noise.
    pub noise: f64,
    /// Seed of the labelling rule; `None` produces unlabelled tiles.
    pub label_seed: Option<u64>,
    pub classes: usize,
    /// Offset added to the winning latent field.
    pub class_margin: f64,
}

impl SynthConfig {
    /// 13-band optical tile.
    pub fn sentinel2(size: usize) -> Self {
        Self {
            height: size,
            width: size,
            resolution: 10.0,
            wavelengths: SENTINEL2_WAVELENGTHS_NM.to_vec(),
            modalities: vec![Modality::Optical; 13],
            correlation_length_m: 60.0,
            mixing_rank: 4,
            noise: 0.2,
            label_seed: Some(7),
            classes: 4,
            class_margin: 0.75,
        }
    }

    /// 13 optical bands followed by the two radar polarizations.
    pub fn sentinel12(size: usize) -> Self {
        let mut cfg = Self::sentinel2(size);
        cfg.wavelengths.extend_from_slice(&SAR_SURROGATE_WAVELENGTHS_NM);
        cfg.modalities.extend([Modality::Radar; 2]);
        cfg
    }

    /// `channels` optical bands evenly spaced over 400–2400 nm.
    pub fn evenly_spaced(channels: usize, size: usize) -> Self {
        let step = if channels > 1 { 2000.0 / (channels - 1) as f64 } else { 0.0 };
        Self {
            wavelengths: (0..channels).map(|i| 400.0 + step * i as f64).collect(),
            modalities: vec![Modality::Optical; channels],
            ..Self::sentinel2(size)
        }
    }

    pub fn channels(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if c == 0 || self.modalities.len() != c {
            return Err(LessError::Config(format!(
                "{c} wavelengths and {} modality tags",
                self.modalities.len()
            )));
        }
        if self.height == 0 || self.width == 0 || !(self.resolution > 0.0) {
            return Err(LessError::Config("empty tile or non-positive resolution".into()));
        }
        if !(self.correlation_length_m > 0.0) {
            return Err(LessError::Config("correlation length must be positive".into()));
        }
        if self.mixing_rank == 0 || self.mixing_rank > c {
            return Err(LessError::Config(format!(
                "mixing rank {} must lie in 1..={c}",
                self.mixing_rank
            )));
        }
        if self.label_seed.is_some() && (self.classes < 2 || self.classes > self.mixing_rank) {
            return Err(LessError::Config(format!(
                "{} classes need 2..={} latent fields",
                self.classes, self.mixing_rank
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(LessError::Config("noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Group of each channel: channels sorted by wavelength are cut into
    /// `mixing_rank` contiguous runs.
    pub fn channel_groups(&self) -> Vec<usize> {
        let c = self.channels();
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| self.wavelengths[a].total_cmp(&self.wavelengths[b]));
        let mut groups = vec![0; c];
        for (rank, &ch) in order.iter().enumerate() {
            groups[ch] = rank * self.mixing_rank / c;
        }
        groups
    }

    /// `C × k` mixing matrix; each channel loads on its own group only.
    pub fn mixing_matrix(&self) -> Vec<Vec<f64>> {
        let groups = self.channel_groups();
        self.wavelengths
            .iter()
            .zip(&groups)
            .map(|(&lambda, &g)| {
                let mut row = vec![0.0; self.mixing_rank];
                row[g] = 0.6 + 0.4 * (lambda / 300.0).sin();
                row
            })
            .collect()
    }
}

/// Region of the tile pooled by one class of the labelling rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Whole,
    Quadrant(usize),
}

struct LabelRule {
    fields: Vec<usize>,
    regions: Vec<Region>,
}

impl LabelRule {
    fn new(seed: u64, classes: usize, rank: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fields: Vec<usize> = (0..rank).collect();
        fields.shuffle(&mut rng);
        fields.truncate(classes);
        let regions = (0..classes)
            .map(|_| match rng.gen_range(0..5) {
                4 => Region::Whole,
                q => Region::Quadrant(q),
            })
            .collect();
        Self { fields, regions }
    }

    fn pooled(field: &[f64], h: usize, w: usize, region: Region) -> f64 {
        let (ys, xs) = match region {
            Region::Whole => (0..h, 0..w),
            Region::Quadrant(q) => {
                let ys = if q / 2 == 0 { 0..h.div_ceil(2) } else { h / 2..h };
                let xs = if q % 2 == 0 { 0..w.div_ceil(2) } else { w / 2..w };
                (ys, xs)
            }
        };
        let mut total = 0.0;
        let mut count = 0usize;
        for y in ys {
            for x in xs.clone() {
                total += field[y * w + x];
                count += 1;
            }
        }
        total / count as f64
    }

    fn label(&self, fields: &[Vec<f64>], h: usize, w: usize) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (class, (&f, &region)) in self.fields.iter().zip(&self.regions).enumerate() {
            let s = Self::pooled(&fields[f], h, w, region);
            if s > best_score {
                best = class;
                best_score = s;
            }
        }
        best
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    // Unit gain in variance: white noise keeps unit marginal variance.
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

/// Unit-variance smooth random field of `h × w` pixels.
fn smooth_field(rng: &mut ChaCha8Rng, h: usize, w: usize, sigma_px: f64) -> Vec<f64> {
    if sigma_px < 0.1 {
        return (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
    }
    let kernel = gaussian_kernel(sigma_px);
    let r = kernel.len() / 2;
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    let noise: Vec<f64> = (0..ph * pw).map(|_| rng.sample(StandardNormal)).collect();
    let mut rows = vec![0.0; ph * w];
    for y in 0..ph {
        for x in 0..w {
            rows[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * noise[y * pw + x + k])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * rows[(y + k) * w + x])
                .sum();
        }
    }
    out
}

/// Generate one tile, and its class when the config carries a label rule.
pub fn generate_tile(cfg: &SynthConfig, seed: u64) -> Result<(HyperCube, Option<usize>)> {
    cfg.validate()?;
    let (h, w, c) = (cfg.height, cfg.width, cfg.channels());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma_px = cfg.correlation_length_m / cfg.resolution;
    let mut fields: Vec<Vec<f64>> = (0..cfg.mixing_rank)
        .map(|_| smooth_field(&mut rng, h, w, sigma_px))
        .collect();

    let label = cfg.label_seed.map(|s| {
        let rule = LabelRule::new(s, cfg.classes, cfg.mixing_rank);
        let label = rule.label(&fields, h, w);
        fields[rule.fields[label]]
            .iter_mut()
            .for_each(|v| *v += cfg.class_margin);
        label
    });

    let mixing = cfg.mixing_matrix();
    let mut pixels = Vec::with_capacity(c * h * w);
    for row in &mixing {
        for p in 0..h * w {
            let signal: f64 = row.iter().zip(&fields).map(|(m, f)| m * f[p]).sum();
            let noise = if cfg.noise > 0.0 {
                cfg.noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            pixels.push((signal + noise) as f32);
        }
    }
    let cube = HyperCube::new(
        h,
        w,
        cfg.resolution as f32,
        cfg.wavelengths.iter().map(|&l| l as f32).collect(),
        cfg.modalities.clone(),
        pixels,
    )?;
    Ok((cube, label))
}

/// Mean horizontal autocorrelation of one channel at the given pixel lag.
pub fn horizontal_autocorrelation(cube: &HyperCube, channel: usize, lag: usize) -> f64 {
    let (h, w) = (cube.height(), cube.width());
    let plane = cube.channel(channel);
    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64;
    let var = plane
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / plane.len() as f64;
    let mut cov = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w.saturating_sub(lag) {
            cov += (plane[y * w + x] as f64 - mean) * (plane[y * w + x + lag] as f64 - mean);
            n += 1;
        }
    }
    if n == 0 || var == 0.0 {
        return 0.0;
    }
    cov / n as f64 / var
}

/// Pearson correlation between two channels of one tile.
pub fn channel_correlation(cube: &HyperCube, a: usize, b: usize) -> f64 {
    let (x, y) = (cube.channel(a), cube.channel(b));
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&u, &v) in x.iter().zip(y) {
        let (du, dv) = (u as f64 - mx, v as f64 - my);
        sxy += du * dv;
        sxx += du * du;
        syy += dv * dv;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_preserves_unit_variance() {
        let k = gaussian_kernel(4.0);
        assert!((k.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.len(), 25);
    }

    #[test]
    fn groups_are_contiguous_in_wavelength() {
        let cfg = SynthConfig::sentinel2(16);
        let g = cfg.channel_groups();
        assert!(g.windows(2).all(|p| p[0] <= p[1]));
        assert_eq!(g[0], 0);
        assert_eq!(g[12], 3);
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut cfg = SynthConfig::sentinel2(16);
        cfg.mixing_rank = 14;
        assert!(generate_tile(&cfg, 0).is_err());
        let mut cfg = SynthConfig::sentinel2(16);
        cfg.correlation_length_m = 0.0;
        assert!(generate_tile(&cfg, 0).is_err());
    }

    #[test]
    fn evenly_spaced_bands() {
        let cfg = SynthConfig::evenly_spaced(20, 16);
        assert_eq!(cfg.channels(), 20);
        assert_eq!(cfg.wavelengths[19], 2400.0);
        assert!(generate_tile(&cfg, 3).unwrap().1.is_some());
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig::sentinel2(16);
        let a = generate_tile(&cfg, 11).unwrap();
        let b = generate_tile(&cfg, 11).unwrap();
        let c = generate_tile(&cfg, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }
}
