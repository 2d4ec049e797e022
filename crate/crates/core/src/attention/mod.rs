//! Low-rank separable spatial/spectral attention, its full-attention
//! reference and MAC accounting for both.

mod less;
mod mask;
mod report;
mod vanilla;

use std::fmt;
use std::str::FromStr;

pub use less::{atten_pool, attention_maps, kron_combine, Axis, LessBlock};
pub use mask::{DistanceMetric, PerceptionMask};
pub use report::{flop_report, FlopReport};
pub use vanilla::VanillaBlock;

use crate::error::{LessError, Result};

/// How the `r` rank terms are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RankCombine {
    #[default]
    Mean,
    Sum,
}

impl FromStr for RankCombine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(format!("unknown rank combine `{other}`")),
        }
    }
}

impl fmt::Display for RankCombine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Sum => "sum",
        })
    }
}

/// Operand order of the Kronecker product.
///
/// `SpatialMajor` swaps the operands while keeping the spectral-major
/// reshape. It exists only as an injectable fault.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KronOrder {
    #[default]
    SpectralMajor,
    SpatialMajor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    pub dim: usize,
    pub heads: usize,
    /// `d1 / d2`.
    pub ratio: usize,
    pub rank: usize,
    pub mlp_ratio: usize,
    pub combine: RankCombine,
    pub kron_order: KronOrder,
}

impl AttentionConfig {
    pub fn new(dim: usize, heads: usize, ratio: usize, rank: usize) -> Self {
        Self {
            dim,
            heads,
            ratio,
            rank,
            mlp_ratio: 4,
            combine: RankCombine::Mean,
            kron_order: KronOrder::SpectralMajor,
        }
    }

    /// 768-wide, 12 heads, ratio 16, rank 1.
    pub fn vit_base() -> Self {
        Self::new(768, 12, 16, 1)
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads.max(1)
    }

    /// `(d1, d2)` with `d1·d2 = head_dim` and `d1 = ratio·d2`.
    pub fn factorization(&self) -> Result<(usize, usize)> {
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(LessError::Config(format!(
                "dimension {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.ratio == 0 || self.rank == 0 {
            return Err(LessError::Config("ratio and rank must be positive".into()));
        }
        let hd = self.head_dim();
        if hd % self.ratio != 0 {
            return Err(LessError::Config(format!(
                "head dimension {hd} is not divisible by ratio {}",
                self.ratio
            )));
        }
        let sq = hd / self.ratio;
        let d2 = (sq as f64).sqrt().round() as usize;
        if d2 == 0 || d2 * d2 != sq {
            return Err(LessError::Config(format!(
                "head dimension {hd} at ratio {} has no integer split d1·d2",
                self.ratio
            )));
        }
        Ok((self.ratio * d2, d2))
    }

    pub fn validate(&self) -> Result<()> {
        self.factorization().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorizations() {
        assert_eq!(AttentionConfig::vit_base().factorization().unwrap(), (32, 2));
        assert_eq!(AttentionConfig::new(768, 12, 64, 1).factorization().unwrap(), (64, 1));
        assert_eq!(AttentionConfig::new(8, 1, 2, 1).factorization().unwrap(), (4, 2));
        assert!(AttentionConfig::new(768, 12, 8, 1).factorization().is_err());
        assert!(AttentionConfig::new(768, 12, 16, 0).factorization().is_err());
    }
}
