use std::fmt;
use std::time::Instant;

use lessvit_tensor::{flops, Bound, ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AttentionConfig, LessBlock, VanillaBlock};
use crate::error::Result;
use crate::init;

/// Measured multiply-accumulate counts of one forward pass per block type.
#[derive(Clone, Debug, PartialEq)]
pub struct FlopReport {
    pub n: usize,
    pub c: usize,
    pub less_macs: u64,
    pub less_attention_macs: u64,
    pub vanilla_macs: u64,
    pub vanilla_attention_macs: u64,
    /// Wall-clock seconds of the measured forward passes.
    pub less_seconds: f64,
    pub vanilla_seconds: f64,
}

impl FlopReport {
    /// `vanilla_macs / less_macs`.
    pub fn ratio(&self) -> f64 {
        self.vanilla_macs as f64 / self.less_macs as f64
    }

    pub fn to_records(&self) -> String {
        format!(
            "n={} c={} less_macs={} less_attention_macs={} vanilla_macs={} vanilla_attention_macs={} ratio={:.4}",
            self.n,
            self.c,
            self.less_macs,
            self.less_attention_macs,
            self.vanilla_macs,
            self.vanilla_attention_macs,
            self.ratio()
        )
    }
}

impl fmt::Display for FlopReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>5} {:>5} {:>16} {:>16} {:>10.2}",
            self.n,
            self.c,
            self.less_macs,
            self.vanilla_macs,
            self.ratio()
        )
    }
}

/// Run one LESS block and one full-attention block on an `[N+1, C+1, D]`
/// random grid and count their MACs.
pub fn flop_report(cfg: &AttentionConfig, n: usize, c: usize, seed: u64) -> Result<FlopReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.dim;
    let x = init::normal(&mut rng, &[n + 1, c + 1, d], 1.0);

    let mut store = ParamStore::new();
    let block = LessBlock::new(&mut store, "block", cfg, &mut rng)?;
    let start = Instant::now();
    let (less, less_counter) = flops::measure(|| -> Result<()> {
        let tape = Tape::new();
        let bound = Bound::new(&tape, &store);
        block.forward(&bound, tape.constant(x.clone()), None)?;
        Ok(())
    });
    let less_seconds = start.elapsed().as_secs_f64();
    less?;

    let vanilla = VanillaBlock::random(d, cfg.heads, &mut rng)?;
    let flat: Tensor = x.reshape(&[(n + 1) * (c + 1), d])?;
    let start = Instant::now();
    let (out, vanilla_counter) = flops::measure(|| vanilla.forward(&flat));
    let vanilla_seconds = start.elapsed().as_secs_f64();
    out?;

    Ok(FlopReport {
        n,
        c,
        less_macs: less_counter.mac_count(),
        less_attention_macs: less_counter.tagged(flops::ATTENTION),
        vanilla_macs: vanilla_counter.mac_count(),
        vanilla_attention_macs: vanilla_counter.tagged(flops::ATTENTION),
        less_seconds,
        vanilla_seconds,
    })
}
