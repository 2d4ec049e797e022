use std::path::{Path, PathBuf};

use lessvit_core::data::{HyperCube, Split};
use lessvit_core::heads::{
    knn_probe, majority_baseline, moe_forward, pca_patch_features, scores_to_ppm, scores_to_text, train_linear_probe,
    train_moe,
};
use lessvit_core::hypermae::{load_checkpoint, HyperMae, HyperMaeConfig};
use lessvit_tensor::{precision, with_precision, Tensor};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::{load_prepared, Prepared};
use crate::error::{CliError, Result};
use crate::record::Record;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ProbeMode {
    Linear,
    Knn,
    Moe,
    Pca,
}

/// Where the encoder weights come from.
#[derive(Clone, Debug)]
pub enum ModelSource {
    Checkpoint(PathBuf),
    Random { cfg: HyperMaeConfig, seed: u64 },
}

impl ModelSource {
    pub fn load(&self) -> Result<HyperMae> {
        match self {
            Self::Checkpoint(path) => Ok(load_checkpoint(path)?.0),
            Self::Random { cfg, seed } => Ok(HyperMae::new(cfg.clone(), *seed)?),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Self::Checkpoint(_) => "pretrained",
            Self::Random { .. } => "random",
        }
    }
}

/// Map `f` over tiles on the rayon pool, keeping the caller's precision.
fn per_tile<T: Send>(tiles: &[&HyperCube], f: impl Fn(&HyperCube) -> Result<T> + Sync) -> Result<Vec<T>> {
    let p = precision();
    tiles.par_iter().map(|t| with_precision(p, || f(t))).collect()
}

fn stack(rows: Vec<Vec<f64>>, shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::new(shape, rows.into_iter().flatten().collect())?)
}

struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl Splits {
    fn of(data: &Prepared) -> Result<Self> {
        let s = Self {
            train: data.labelled(Split::Train),
            val: data.labelled(Split::Val),
            test: data.labelled(Split::Test),
        };
        if s.train.is_empty() || s.test.is_empty() || data.classes() < 2 {
            return Err(CliError::Usage(
                "probing needs labelled train and test samples of at least two classes".into(),
            ));
        }
        Ok(s)
    }
}

fn labels(data: &Prepared, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| data.labels[i].expect("labelled split")).collect()
}

fn tiles<'a>(data: &'a Prepared, idx: &[usize]) -> Vec<&'a HyperCube> {
    idx.iter().map(|&i| &data.tiles[i]).collect()
}

fn global(model: &HyperMae, data: &Prepared, idx: &[usize]) -> Result<Tensor> {
    let rows = per_tile(&tiles(data, idx), |t| Ok(model.global_features(t)?))?;
    stack(rows, &[idx.len(), model.cfg.dim])
}

/// Run one probe. Channel counts need not match the checkpoint.
pub fn cmd_probe(
    source: &ModelSource,
    data_dir: &Path,
    mode: ProbeMode,
    run: &RunConfig,
    pca_out: Option<&Path>,
    pca_tile: usize,
) -> Result<Vec<Record>> {
    let model = source.load()?;
    let data = load_prepared(data_dir)?;
    let base = Record::new("probe")
        .with("mode", format!("{mode:?}").to_lowercase())
        .with("features", source.label())
        .with("channels", data.channels())
        .with("dim", model.cfg.dim);
    match mode {
        ProbeMode::Linear => {
            let s = Splits::of(&data)?;
            let (ytr, yva, yte) = (labels(&data, &s.train), labels(&data, &s.val), labels(&data, &s.test));
            let xtr = global(&model, &data, &s.train)?;
            let xte = global(&model, &data, &s.test)?;
            let probe = train_linear_probe(&xtr, &ytr, data.classes(), &run.linear_probe())?;
            let mut r = base
                .with("classes", data.classes())
                .with("train", s.train.len())
                .with("test", s.test.len())
                .with("train_accuracy", format!("{:.6}", probe.accuracy(&xtr, &ytr)?));
            if !s.val.is_empty() {
                let xva = global(&model, &data, &s.val)?;
                r = r.with("val_accuracy", format!("{:.6}", probe.accuracy(&xva, &yva)?));
            }
            Ok(vec![r
                .with("accuracy", format!("{:.6}", probe.accuracy(&xte, &yte)?))
                .with("majority", format!("{:.6}", majority_baseline(&ytr, &yte)))])
        }
        ProbeMode::Knn => {
            let s = Splits::of(&data)?;
            let k = run.knn_k().min(s.train.len());
            let xtr = global(&model, &data, &s.train)?;
            let xte = global(&model, &data, &s.test)?;
            let acc = knn_probe(&xtr, &labels(&data, &s.train), &xte, &labels(&data, &s.test), k)?;
            Ok(vec![base.with("k", k).with("accuracy", format!("{acc:.6}"))])
        }
        ProbeMode::Moe => {
            let s = Splits::of(&data)?;
            let (c, d) = (data.channels(), model.cfg.dim);
            let channel = |idx: &[usize]| -> Result<Tensor> {
                let rows = per_tile(&tiles(&data, idx), |t| Ok(model.channel_features(t)?.data().to_vec()))?;
                stack(rows, &[idx.len(), c, d])
            };
            let (xtr, xte) = (channel(&s.train)?, channel(&s.test)?);
            let (ytr, yte) = (labels(&data, &s.train), labels(&data, &s.test));
            let mut records = Vec::new();
            for experts in 1..=run.max_experts() {
                let cfg = run.moe(experts);
                let head = train_moe(&xtr, &ytr, data.classes(), &cfg)?;
                let mut correct = 0usize;
                for (i, &y) in yte.iter().enumerate() {
                    let cls = Tensor::new(&[c, d], xte.data()[i * c * d..(i + 1) * c * d].to_vec())?;
                    correct += usize::from(moe_forward(&cls, &head)?.class == y);
                }
                records.push(
                    base.clone()
                        .with("experts", experts)
                        .with("k", cfg.k)
                        .with("accuracy", format!("{:.6}", correct as f64 / yte.len() as f64)),
                );
            }
            Ok(records)
        }
        ProbeMode::Pca => {
            let cube = data
                .tiles
                .get(pca_tile)
                .ok_or_else(|| CliError::Usage(format!("tile {pca_tile} of {} does not exist", data.len())))?;
            let (rows, cols) = cube.patch_grid(model.cfg.patch)?;
            let f = model.features(cube)?;
            let (q1, d) = (cube.channels() + 1, model.cfg.dim);
            let patches: Vec<f64> = (1..=rows * cols)
                .flat_map(|n| f.data()[n * q1 * d..n * q1 * d + d].to_vec())
                .collect();
            let pca = pca_patch_features(&Tensor::new(&[rows * cols, d], patches)?, 3)?;
            if let Some(path) = pca_out {
                std::fs::write(path, scores_to_ppm(&pca.scores, rows, cols)?)?;
                std::fs::write(path.with_extension("txt"), scores_to_text(&pca.scores, rows, cols)?)?;
            }
            let mut r = base.with("tile", pca_tile).with("grid", format!("{rows}x{cols}")).with("components", pca.components.len());
            for (k, e) in pca.eigenvalues.iter().enumerate() {
                r = r.with(&format!("eigenvalue_{k}"), format!("{e:.6e}"));
            }
            Ok(vec![r])
        }
    }
}
