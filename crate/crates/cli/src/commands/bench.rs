use lessvit_core::attention::{flop_report, AttentionConfig, FlopReport};

use crate::error::{CliError, Result};
use crate::record::{Record, TIMING};

/// Per-head width of the benchmarked blocks; heads = D / 64.
pub const BENCH_HEAD_DIM: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchPlan {
    pub positions: Vec<usize>,
    pub channels: Vec<usize>,
    pub dims: Vec<usize>,
    pub ratio: usize,
    pub rank: usize,
    pub seed: u64,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            positions: vec![64],
            channels: vec![2, 4, 8, 13, 16, 20],
            dims: vec![768],
            ratio: 16,
            rank: 1,
            seed: 0,
        }
    }
}

/// Least-squares line through `(x, y)`: slope, intercept and R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

pub fn bench_config(dim: usize, ratio: usize, rank: usize) -> Result<AttentionConfig> {
    if dim % BENCH_HEAD_DIM != 0 {
        return Err(CliError::Usage(format!("bench width {dim} is not a multiple of {BENCH_HEAD_DIM}")));
    }
    let cfg = AttentionConfig::new(dim, dim / BENCH_HEAD_DIM, ratio, rank);
    cfg.validate()?;
    Ok(cfg)
}

/// MAC counts and wall-clock of a LESS block against a full-attention
/// block, both normalized to LESS = 1.
pub fn cmd_bench(plan: &BenchPlan) -> Result<(Vec<Record>, String)> {
    let mut records = Vec::new();
    let mut table = String::from("#     N     C     D        LESS MACs     vanilla MACs  MAC ratio  time ratio\n");
    for &d in &plan.dims {
        let cfg = bench_config(d, plan.ratio, plan.rank)?;
        for &n in &plan.positions {
            let mut reports: Vec<FlopReport> = Vec::new();
            for &c in &plan.channels {
                let r = flop_report(&cfg, n, c, plan.seed)?;
                let time_ratio = r.vanilla_seconds / r.less_seconds;
                table.push_str(&format!(
                    "# {:>5} {:>5} {:>5} {:>16} {:>16} {:>10.2} {:>11.2}\n",
                    n, c, d, r.less_macs, r.vanilla_macs, r.ratio(), time_ratio
                ));
                records.push(
                    Record::new("bench")
                        .with("n", n)
                        .with("c", c)
                        .with("d", d)
                        .with("less_macs", r.less_macs)
                        .with("vanilla_macs", r.vanilla_macs)
                        .with("less_attention_macs", r.less_attention_macs)
                        .with("vanilla_attention_macs", r.vanilla_attention_macs)
                        .with("less_rel", "1.0")
                        .with("vanilla_rel", format!("{:.4}", r.ratio())),
                );
                records.push(
                    Record::new(TIMING)
                        .with("n", n)
                        .with("c", c)
                        .with("d", d)
                        .with("less_ms", format!("{:.2}", r.less_seconds * 1e3))
                        .with("vanilla_ms", format!("{:.2}", r.vanilla_seconds * 1e3))
                        .with("less_rel", "1.0")
                        .with("vanilla_rel", format!("{time_ratio:.3}")),
                );
                reports.push(r);
            }
            if reports.len() >= 2 {
                let x: Vec<f64> = reports.iter().map(|r| r.c as f64).collect();
                let y: Vec<f64> = reports.iter().map(|r| r.less_macs as f64).collect();
                let (slope, intercept, r2) = linear_fit(&x, &y);
                let increasing = reports.windows(2).all(|w| w[1].ratio() > w[0].ratio());
                records.push(
                    Record::new("bench_fit")
                        .with("n", n)
                        .with("d", d)
                        .with("less_macs_per_channel", format!("{slope:.1}"))
                        .with("less_macs_intercept", format!("{intercept:.1}"))
                        .with("r2", format!("{r2:.6}"))
                        .with("ratio_increasing", increasing),
                );
            }
        }
    }
    Ok((records, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_a_line_is_exact() {
        let (s, i, r2) = linear_fit(&[1.0, 2.0, 3.0], &[5.0, 7.0, 9.0]);
        assert!((s - 2.0).abs() < 1e-12 && (i - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_widths_without_whole_heads() {
        assert!(bench_config(100, 16, 1).is_err());
        assert!(bench_config(768, 8, 1).is_err());
    }
}
