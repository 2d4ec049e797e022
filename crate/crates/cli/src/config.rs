//! TOML run configuration. Every key is optional; command-line flags win
//! over the file, and the file wins over built-in defaults.
//!
//! ```toml
//! seed = 0
//!
//! [model]
//! size = "desk"          # desk | small | base
//! ratio = 16             # d1 / d2
//! rank = 1
//! patch = 16
//! spatial_mask = 0.75
//! spectral_mask = 0.5
//! threshold_m = 320.0    # omit for two patch pitches
//! perception = true
//! norm_pix = false
//!
//! [data]
//! dir = "data/train"
//! bands = "sentinel2"    # sentinel2 | sentinel12 | a channel count
//! size = 64
//! count = 2000
//!
//! [pretrain]
//! epochs = 30
//! batch_size = 16
//! lr = 5e-4
//!
//! [probe]
//! epochs = 300
//! knn_k = 20
//! moe_k = 3
//! max_experts = 8
//! ```

use std::path::{Path, PathBuf};

use lessvit_core::attention::DistanceMetric;
use lessvit_core::data::{SplitFractions, SynthConfig};
use lessvit_core::heads::{MoeConfig, ProbeConfig, DEFAULT_KNN_K, DEFAULT_TOP_K};
use lessvit_core::hypermae::{HyperMaeConfig, MaskRatios, PretrainConfig};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Learning rate of the desk-scale pretraining runs.
pub const DESK_LR: f64 = 5e-4;

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    #[default]
    Desk,
    Small,
    Base,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub size: Option<ModelSize>,
    pub ratio: Option<usize>,
    pub rank: Option<usize>,
    pub patch: Option<usize>,
    pub spatial_mask: Option<f64>,
    pub spectral_mask: Option<f64>,
    pub threshold_m: Option<f64>,
    pub chebyshev: Option<bool>,
    pub perception: Option<bool>,
    pub norm_pix: Option<bool>,
    pub encoder_depth: Option<usize>,
    pub decoder_depth: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub bands: Option<String>,
    pub size: Option<usize>,
    pub count: Option<usize>,
    pub classes: Option<usize>,
    pub noise: Option<f64>,
    pub correlation_length_m: Option<f64>,
    pub mixing_rank: Option<usize>,
    pub class_margin: Option<f64>,
    pub train_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub weight_decay: Option<f64>,
    pub micro_batch: Option<usize>,
    pub crop: Option<usize>,
    pub hflip: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub standardize: Option<bool>,
    pub knn_k: Option<usize>,
    pub moe_k: Option<usize>,
    pub moe_epochs: Option<usize>,
    pub max_experts: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model: ModelSection,
    pub data: DataSection,
    pub pretrain: PretrainSection,
    pub probe: ProbeSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn hypermae(&self) -> Result<HyperMaeConfig> {
        let m = &self.model;
        let mut cfg = match m.size.unwrap_or_default() {
            ModelSize::Desk => HyperMaeConfig::desk(),
            ModelSize::Small => HyperMaeConfig::small(),
            ModelSize::Base => HyperMaeConfig::base(),
        };
        let defaults = MaskRatios::default();
        cfg.ratio = m.ratio.unwrap_or(cfg.ratio);
        cfg.rank = m.rank.unwrap_or(cfg.rank);
        cfg.patch = m.patch.unwrap_or(cfg.patch);
        cfg.mask = MaskRatios {
            spatial: m.spatial_mask.unwrap_or(defaults.spatial),
            spectral: m.spectral_mask.unwrap_or(defaults.spectral),
        };
        cfg.threshold_m = m.threshold_m.or(cfg.threshold_m);
        if m.chebyshev == Some(true) {
            cfg.metric = DistanceMetric::Chebyshev;
        }
        cfg.perception = m.perception.unwrap_or(cfg.perception);
        cfg.norm_pix = m.norm_pix.unwrap_or(cfg.norm_pix);
        cfg.encoder_depth = m.encoder_depth.unwrap_or(cfg.encoder_depth);
        cfg.decoder_depth = m.decoder_depth.unwrap_or(cfg.decoder_depth);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let d = &self.data;
        let size = d.size.unwrap_or(64);
        let mut cfg = match d.bands.as_deref().unwrap_or("sentinel2") {
            "sentinel2" => SynthConfig::sentinel2(size),
            "sentinel12" => SynthConfig::sentinel12(size),
            n => {
                let c: usize = n
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bands `{n}`: expected sentinel2, sentinel12 or a count")))?;
                SynthConfig::evenly_spaced(c, size)
            }
        };
        cfg.classes = d.classes.unwrap_or(cfg.classes);
        cfg.noise = d.noise.unwrap_or(cfg.noise);
        cfg.correlation_length_m = d.correlation_length_m.unwrap_or(cfg.correlation_length_m);
        cfg.mixing_rank = d.mixing_rank.unwrap_or(cfg.mixing_rank);
        cfg.class_margin = d.class_margin.unwrap_or(cfg.class_margin);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn splits(&self) -> SplitFractions {
        let default = SplitFractions::default();
        SplitFractions {
            train: self.data.train_fraction.unwrap_or(default.train),
            val: self.data.val_fraction.unwrap_or(default.val),
        }
    }

    pub fn pretrain(&self) -> PretrainConfig {
        let p = &self.pretrain;
        let d = PretrainConfig::default();
        PretrainConfig {
            epochs: p.epochs.unwrap_or(d.epochs),
            batch_size: p.batch_size.unwrap_or(d.batch_size),
            base_lr: p.lr.unwrap_or(DESK_LR),
            warmup_fraction: p.warmup_fraction.unwrap_or(d.warmup_fraction),
            weight_decay: p.weight_decay.unwrap_or(d.weight_decay),
            seed: self.seed(),
            micro_batch: p.micro_batch.unwrap_or(8),
            crop: p.crop.or(d.crop),
            hflip: p.hflip.unwrap_or(d.hflip),
        }
    }

    pub fn linear_probe(&self) -> ProbeConfig {
        let p = &self.probe;
        let d = ProbeConfig::default();
        ProbeConfig {
            epochs: p.epochs.unwrap_or(d.epochs),
            lr: p.lr.unwrap_or(d.lr),
            weight_decay: p.weight_decay.unwrap_or(d.weight_decay),
            standardize: p.standardize.unwrap_or(d.standardize),
            seed: self.seed(),
        }
    }

    pub fn moe(&self, experts: usize) -> MoeConfig {
        let p = &self.probe;
        let d = MoeConfig::default();
        MoeConfig {
            experts,
            k: p.moe_k.unwrap_or(DEFAULT_TOP_K),
            epochs: p.moe_epochs.unwrap_or(d.epochs),
            lr: p.lr.unwrap_or(d.lr),
            seed: self.seed(),
        }
    }

    pub fn knn_k(&self) -> usize {
        self.probe.knn_k.unwrap_or(DEFAULT_KNN_K)
    }

    pub fn max_experts(&self) -> usize {
        self.probe.max_experts.unwrap_or(8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.hypermae().unwrap(), HyperMaeConfig::desk());
        assert_eq!(cfg.synth().unwrap(), SynthConfig::sentinel2(64));
        assert_eq!(cfg.pretrain().epochs, 30);
    }

    #[test]
    fn sections_override() {
        let cfg = RunConfig::parse(
            "seed = 4\n[model]\nsize = \"base\"\nratio = 64\n[data]\nbands = \"20\"\nsize = 32\n[pretrain]\nepochs = 2\n",
        )
        .unwrap();
        let m = cfg.hypermae().unwrap();
        assert_eq!((m.dim, m.ratio), (768, 64));
        let s = cfg.synth().unwrap();
        assert_eq!((s.channels(), s.height), (20, 32));
        assert_eq!(cfg.pretrain().seed, 4);
        assert_eq!(cfg.pretrain().epochs, 2);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(RunConfig::parse("[model]\nsize = \"huge\"\n").is_err());
        assert!(RunConfig::parse("[model]\nunknown = 1\n").is_err());
        let cfg = RunConfig::parse("[model]\nratio = 8\n").unwrap();
        assert!(cfg.hypermae().is_err());
        let cfg = RunConfig::parse("[data]\nbands = \"many\"\n").unwrap();
        assert!(matches!(cfg.synth(), Err(CliError::Usage(_))));
    }
}
