use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use lessvit_core::hypermae::{pretrain, save_checkpoint, HyperMae, HyperMaeConfig, PretrainConfig};

use crate::dataset::load_prepared;
use crate::error::Result;
use crate::record::{Record, TIMING};

/// Pretrain a fresh model on every tile of `data`, write the checkpoint to
/// `out` and the per-step loss curve to `loss_log`.
pub fn cmd_pretrain(
    data: &Path,
    out: &Path,
    loss_log: &Path,
    model_cfg: &HyperMaeConfig,
    train: &PretrainConfig,
) -> Result<Vec<Record>> {
    let start = Instant::now();
    let prepared = load_prepared(data)?;
    let mut model = HyperMae::new(model_cfg.clone(), train.seed)?;
    let outcome = pretrain(&mut model, &prepared.tiles, train, |r| {
        if r.step % 25 == 0 {
            log::info!("{r}");
        }
    })?;
    save_checkpoint(out, &model, &outcome.rng)?;

    let mut curve = String::new();
    for r in &outcome.records {
        writeln!(curve, "{r}").expect("writing to a string");
    }
    std::fs::write(loss_log, curve)?;

    let mut records = Vec::new();
    for (epoch, &loss) in outcome.epoch_losses.iter().enumerate() {
        let steps: Vec<_> = outcome.records.iter().filter(|r| r.epoch == epoch).collect();
        let mean = |f: fn(&lessvit_core::hypermae::LossRecord) -> f64| {
            steps.iter().map(|r| f(r)).sum::<f64>() / steps.len().max(1) as f64
        };
        records.push(
            Record::new("epoch")
                .with("epoch", epoch)
                .with("loss", format!("{loss:.9e}"))
                .with("l_spatial", format!("{:.9e}", mean(|r| r.l_spatial)))
                .with("l_spectral", format!("{:.9e}", mean(|r| r.l_spectral))),
        );
    }
    let first = outcome.epoch_losses.first().copied().unwrap_or(f64::NAN);
    let last = outcome.epoch_losses.last().copied().unwrap_or(f64::NAN);
    records.push(
        Record::new("pretrain")
            .with("tiles", prepared.len())
            .with("epochs", train.epochs)
            .with("steps", outcome.records.len())
            .with("parameters", model.store.num_scalars())
            .with("first_epoch_loss", format!("{first:.9e}"))
            .with("final_epoch_loss", format!("{last:.9e}"))
            .with("ratio", format!("{:.6}", last / first)),
    );
    records.push(Record::new(TIMING).with("command", "pretrain").with("seconds", format!("{:.1}", start.elapsed().as_secs_f64())));
    Ok(records)
}
