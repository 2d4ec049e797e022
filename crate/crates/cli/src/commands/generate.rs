use std::path::Path;

use lessvit_core::data::{generate_dataset, load_dataset, SplitFractions, SynthConfig};

use crate::error::Result;
use crate::record::Record;

/// Write `count` tiles and a manifest into `out`, then summarize what landed
/// on disk.
pub fn cmd_generate(out: &Path, synth: &SynthConfig, count: usize, seed: u64, splits: SplitFractions) -> Result<Vec<Record>> {
    let manifest = generate_dataset(out, synth, count, seed, splits)?;
    let samples = load_dataset(out)?;
    let first = &samples[0].cube;
    let mut records = vec![Record::new("generate")
        .with("tiles", samples.len())
        .with("manifest_lines", manifest.records.len())
        .with("channels", first.channels())
        .with("height", first.height())
        .with("width", first.width())
        .with("resolution", first.resolution())
        .with("payload_bytes", first.channels() * first.height() * first.width() * 4)
        .with("seed", seed)];
    if synth.label_seed.is_some() {
        let mut counts = vec![0usize; synth.classes];
        samples.iter().filter_map(|s| s.label).for_each(|l| counts[l] += 1);
        let mut r = Record::new("classes");
        for (k, n) in counts.iter().enumerate() {
            r = r.with(&format!("class_{k}"), n);
        }
        records.push(r);
    }
    for c in 0..first.channels() {
        let (mut sum, mut sq, mut n) = (0.0f64, 0.0f64, 0usize);
        for s in &samples {
            for &v in s.cube.channel(c) {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
                n += 1;
            }
        }
        let mean = sum / n as f64;
        records.push(
            Record::new("channel")
                .with("index", c)
                .with("wavelength_nm", first.wavelengths()[c])
                .with("mean", format!("{mean:.6}"))
                .with("std", format!("{:.6}", (sq / n as f64 - mean * mean).max(0.0).sqrt())),
        );
    }
    Ok(records)
}
