//! Two-term masked pixel reconstruction loss.
//!
//! `L_spatial` averages the squared error over every pixel, in every
//! channel, that lies in a masked patch. `L_spectral` averages it over every
//! pixel of a masked channel. Pixels masked on both axes count in both.

use lessvit_tensor::{Tensor, Var};

use super::masking::MaskPlan;
use crate::error::{LessError, Result};

/// Per-pixel weights of one loss term, already divided by the pixel count.
#[derive(Clone, Debug)]
pub struct PixelWeights {
    pub weights: Tensor,
    pub count: usize,
}

fn geometry(shape: &[usize], plan: &MaskPlan, patch: usize) -> Result<(usize, usize, usize)> {
    let [c, h, w] = shape else {
        return Err(LessError::Dimension(format!("expected a C×H×W image, got {shape:?}")));
    };
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(LessError::Dimension(format!("{h}x{w} is not divisible by patch {patch}")));
    }
    if (h / patch) * (w / patch) != plan.positions || *c != plan.channels {
        return Err(LessError::Contract(format!(
            "plan for {}x{} does not match a {c}x{h}x{w} image at patch {patch}",
            plan.positions, plan.channels
        )));
    }
    Ok((*c, *h, *w))
}

/// Weights selecting pixels of masked patches.
pub fn spatial_weights(shape: &[usize], plan: &MaskPlan, patch: usize) -> Result<PixelWeights> {
    let (c, h, w) = geometry(shape, plan, patch)?;
    let cols = w / patch;
    let mut masked = vec![false; plan.positions];
    plan.masked_patches.iter().for_each(|&p| masked[p] = true);
    let count = plan.masked_patches.len() * patch * patch * c;
    let value = if count > 0 { 1.0 / count as f64 } else { 0.0 };
    let weights = Tensor::from_fn(&[c, h, w], |i| {
        let (y, x) = ((i / w) % h, i % w);
        if masked[(y / patch) * cols + x / patch] {
            value
        } else {
            0.0
        }
    });
    Ok(PixelWeights { weights, count })
}

/// Weights selecting pixels of masked channels.
pub fn spectral_weights(shape: &[usize], plan: &MaskPlan, patch: usize) -> Result<PixelWeights> {
    let (c, h, w) = geometry(shape, plan, patch)?;
    let mut masked = vec![false; c];
    plan.masked_channels.iter().for_each(|&m| masked[m] = true);
    let count = plan.masked_channels.len() * h * w;
    let value = if count > 0 { 1.0 / count as f64 } else { 0.0 };
    let weights = Tensor::from_fn(&[c, h, w], |i| if masked[i / (h * w)] { value } else { 0.0 });
    Ok(PixelWeights { weights, count })
}

fn weighted_sq_error(recon: &Tensor, target: &Tensor, w: &PixelWeights) -> Result<f64> {
    if recon.shape() != target.shape() {
        return Err(LessError::Dimension(format!(
            "reconstruction {:?} and target {:?} differ",
            recon.shape(),
            target.shape()
        )));
    }
    Ok(recon
        .data()
        .iter()
        .zip(target.data())
        .zip(w.weights.data())
        .map(|((r, t), w)| w * (r - t) * (r - t))
        .sum())
}

pub fn loss_spatial(recon: &Tensor, target: &Tensor, plan: &MaskPlan, patch: usize) -> Result<f64> {
    if plan.masked_patches.is_empty() {
        return Err(LessError::Contract("spatial loss over an empty patch set".into()));
    }
    weighted_sq_error(recon, target, &spatial_weights(recon.shape(), plan, patch)?)
}

pub fn loss_spectral(recon: &Tensor, target: &Tensor, plan: &MaskPlan, patch: usize) -> Result<f64> {
    if plan.masked_channels.is_empty() {
        return Err(LessError::Contract("spectral loss over an empty channel set".into()));
    }
    weighted_sq_error(recon, target, &spectral_weights(recon.shape(), plan, patch)?)
}

/// `L_spatial + L_spectral`; a term over an empty set counts as 0.
pub fn total_loss(recon: &Tensor, target: &Tensor, plan: &MaskPlan, patch: usize) -> Result<f64> {
    let s = weighted_sq_error(recon, target, &spatial_weights(recon.shape(), plan, patch)?)?;
    let c = weighted_sq_error(recon, target, &spectral_weights(recon.shape(), plan, patch)?)?;
    Ok(s + c)
}

/// Loss terms on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<'t> {
    pub spatial: Var<'t>,
    pub spectral: Var<'t>,
    pub total: Var<'t>,
}

impl LossTerms<'_> {
    pub fn values(&self) -> Result<(f64, f64, f64)> {
        Ok((
            self.spatial.value().item()?,
            self.spectral.value().item()?,
            self.total.value().item()?,
        ))
    }
}

pub fn loss_terms<'t>(recon: Var<'t>, target: &Tensor, plan: &MaskPlan, patch: usize) -> Result<LossTerms<'t>> {
    let shape = recon.shape();
    if shape != target.shape() {
        return Err(LessError::Dimension(format!(
            "reconstruction {shape:?} and target {:?} differ",
            target.shape()
        )));
    }
    let tape = recon.tape();
    let diff = recon.sub(tape.constant(target.clone()))?;
    let sq = diff.mul(diff)?;
    let ws = spatial_weights(&shape, plan, patch)?;
    let wc = spectral_weights(&shape, plan, patch)?;
    let spatial = sq.mul(tape.constant(ws.weights))?.sum();
    let spectral = sq.mul(tape.constant(wc.weights))?.sum();
    Ok(LossTerms {
        spatial,
        spectral,
        total: spatial.add(spectral)?,
    })
}

/// Standardize each (patch, channel) block of a `[C, H, W]` target.
pub fn patch_normalized_target(target: &Tensor, patch: usize) -> Result<Tensor> {
    let [c, h, w] = target.shape() else {
        return Err(LessError::Dimension(format!("expected C×H×W, got {:?}", target.shape())));
    };
    let (c, h, w) = (*c, *h, *w);
    let mut out = target.clone();
    let data = out.data_mut();
    for ch in 0..c {
        for py in 0..h / patch {
            for px in 0..w / patch {
                let idx: Vec<usize> = (0..patch * patch)
                    .map(|k| (ch * h + py * patch + k / patch) * w + px * patch + k % patch)
                    .collect();
                let n = idx.len() as f64;
                let mean = idx.iter().map(|&i| data[i]).sum::<f64>() / n;
                let var = idx.iter().map(|&i| (data[i] - mean).powi(2)).sum::<f64>() / n;
                let inv = 1.0 / (var + 1e-6).sqrt();
                idx.iter().for_each(|&i| data[i] = (data[i] - mean) * inv);
            }
        }
    }
    Ok(out)
}
