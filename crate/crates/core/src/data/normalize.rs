use super::cube::HyperCube;
use crate::error::{LessError, Result};

/// Lower and upper percentiles of the per-channel clip band.
pub const CLIP_PERCENTILES: (f64, f64) = (0.03, 0.97);

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub channels: Vec<ChannelStats>,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-channel statistics pooled over every pixel of `tiles`.
pub fn compute_stats<'a, I>(tiles: I) -> Result<DatasetStats>
where
    I: IntoIterator<Item = &'a HyperCube>,
    I::IntoIter: Clone,
{
    let tiles = tiles.into_iter();
    let first = tiles
        .clone()
        .next()
        .ok_or_else(|| LessError::Contract("statistics of an empty dataset".into()))?;
    let c = first.channels();
    if let Some(t) = tiles.clone().find(|t| t.channels() != c) {
        return Err(LessError::Dimension(format!(
            "mixed channel counts {c} and {}",
            t.channels()
        )));
    }
    let channels = (0..c)
        .map(|ch| {
            let mut values: Vec<f64> = tiles
                .clone()
                .flat_map(|t| t.channel(ch).iter().map(|&v| v as f64))
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            values.sort_by(f64::total_cmp);
            ChannelStats {
                mean,
                std,
                low: quantile(&values, CLIP_PERCENTILES.0),
                high: quantile(&values, CLIP_PERCENTILES.1),
            }
        })
        .collect();
    Ok(DatasetStats { channels })
}

/// Clip each channel to its band and map it affinely onto `[0, 255]`.
///
/// A channel whose band is degenerate is passed through unchanged.
pub fn normalize_tile(tile: &HyperCube, stats: &DatasetStats) -> Result<HyperCube> {
    if stats.channels.len() != tile.channels() {
        return Err(LessError::Dimension(format!(
            "stats for {} channels, tile has {}",
            stats.channels.len(),
            tile.channels()
        )));
    }
    let mut out = tile.clone();
    for (c, s) in stats.channels.iter().enumerate() {
        let span = s.high - s.low;
        if !(span > 0.0) {
            log::warn!("channel {c} is constant; leaving it unnormalized");
            continue;
        }
        for v in out.channel_mut(c) {
            let clipped = (*v as f64).clamp(s.low, s.high);
            *v = (255.0 * (clipped - s.low) / span) as f32;
        }
    }
    Ok(out)
}

pub fn normalize_dataset(tiles: &[HyperCube], stats: &DatasetStats) -> Result<Vec<HyperCube>> {
    tiles.iter().map(|t| normalize_tile(t, stats)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert!((quantile(&v, 0.03) - 0.12).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_is_identity() {
        let tile = HyperCube::optical(2, 2, 10.0, vec![500.0], vec![3.0; 4]).unwrap();
        let stats = compute_stats(std::slice::from_ref(&tile)).unwrap();
        assert_eq!(normalize_tile(&tile, &stats).unwrap(), tile);
    }
}
