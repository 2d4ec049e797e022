//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! `LESSVIT_ACCEPTANCE_ONLY=1,3,11` restricts the run to the listed criteria.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use lessvit_cli::commands::{cmd_bench, cmd_generate, cmd_pretrain, cmd_probe, BenchPlan, ModelSource, ProbeMode};
use lessvit_cli::config::{RunConfig, DESK_LR};
use lessvit_cli::record::{metric_lines, Record};
use lessvit_cli::verify::{checks, cmd_verify, VerifyOptions};
use lessvit_core::data::{load_dataset, SplitFractions, SynthConfig};
use lessvit_core::hypermae::{load_checkpoint, HyperMae, HyperMaeConfig, PretrainConfig};
use lessvit_tensor::{with_precision, Precision};
use tempfile::TempDir;

const PRETRAIN_TILES: usize = 2000;
const PRETRAIN_EPOCHS: usize = 30;
const MODEL_SEED: u64 = 1;
const PROBE_TILES: usize = 1000;
const PROBE_SEED: u64 = 1_000_000;
const WIDE_TILES: usize = 600;
const WIDE_SEED: u64 = 2_000_000;
const MARGIN: f64 = 0.15;

type Outcome = Result<String, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn field(records: &[Record], kind: &str, key: &str) -> Result<f64, String> {
    records
        .iter()
        .find(|r| r.kind() == kind)
        .and_then(|r| r.get_f64(key))
        .ok_or_else(|| format!("no {key} in a {kind} record"))
}

fn verify_checks(names: &[&str]) -> Outcome {
    let opts = VerifyOptions::default();
    let mut details = Vec::new();
    for name in names {
        let c = checks().into_iter().find(|c| c.name == *name).ok_or_else(|| format!("no check {name}"))?;
        let detail = with_precision(Precision::F64, || (c.run)(&opts)).map_err(|f| format!("{name}: {}", f.0))?;
        details.push(format!("{name}: {detail}"));
    }
    Ok(details.join("; "))
}

fn mac_sweep() -> Outcome {
    let detail = verify_checks(&["mac_scaling"])?;
    let plan = BenchPlan {
        positions: vec![64],
        channels: vec![4, 8, 16, 32],
        dims: vec![768],
        ..BenchPlan::default()
    };
    let (records, _) = cmd_bench(&plan).map_err(err)?;
    let bench: Vec<&Record> = records.iter().filter(|r| r.kind() == "bench").collect();
    check(bench.iter().all(|r| r.get("less_rel") == Some("1.0")), || "LESS column is not 1.0".into())?;
    let r2 = field(&records, "bench_fit", "r2")?;
    check(r2 > 0.99, || format!("fit R²={r2}"))?;
    check(records.iter().any(|r| r.get("ratio_increasing") == Some("true")), || "ratio not increasing".into())?;
    Ok(format!("{detail}; sweep C=4..32 R²={r2:.6}"))
}

fn dataset(dir: &Path, synth: SynthConfig, count: usize, seed: u64) -> Result<(), String> {
    cmd_generate(dir, &synth, count, seed, SplitFractions::default()).map_err(err)?;
    Ok(())
}

fn linear(source: &ModelSource, data: &Path) -> Result<(f64, f64), String> {
    let records = cmd_probe(source, data, ProbeMode::Linear, &RunConfig::default(), None, 0).map_err(err)?;
    Ok((field(&records, "probe", "accuracy")?, field(&records, "probe", "majority")?))
}

fn random_source(cfg: &HyperMaeConfig) -> ModelSource {
    ModelSource::Random { cfg: cfg.clone(), seed: MODEL_SEED }
}

/// State shared by the two learning criteria.
struct Pretrained {
    _dir: TempDir,
    checkpoint: std::path::PathBuf,
    cfg: HyperMaeConfig,
}

fn desk_pretrain() -> Result<(Pretrained, String), String> {
    let dir = TempDir::new().map_err(err)?;
    let data = dir.path().join("pretrain");
    dataset(&data, SynthConfig::sentinel2(64), PRETRAIN_TILES, 0)?;
    let cfg = HyperMaeConfig::desk();
    let train = PretrainConfig {
        epochs: PRETRAIN_EPOCHS,
        base_lr: DESK_LR,
        micro_batch: 8,
        seed: MODEL_SEED,
        ..PretrainConfig::default()
    };
    let checkpoint = dir.path().join("desk.lvck");
    let records = with_precision(Precision::F32, || {
        cmd_pretrain(&data, &checkpoint, &dir.path().join("loss.txt"), &cfg, &train)
    })
    .map_err(err)?;
    let first = field(&records, "pretrain", "first_epoch_loss")?;
    let last = field(&records, "pretrain", "final_epoch_loss")?;
    let detail = format!("epoch loss {first:.4} -> {last:.4} (x{:.3})", last / first);
    let state = Pretrained { _dir: dir, checkpoint, cfg };
    if !(last < 0.5 * first) {
        return Err(detail);
    }
    Ok((state, detail))
}

fn desk_learning(state: &mut Option<Pretrained>) -> Outcome {
    let (pretrained, loss) = desk_pretrain()?;
    let probe_dir = TempDir::new().map_err(err)?;
    dataset(probe_dir.path(), SynthConfig::sentinel2(64), PROBE_TILES, PROBE_SEED)?;
    let (acc, majority) = linear(&ModelSource::Checkpoint(pretrained.checkpoint.clone()), probe_dir.path())?;
    let (random, _) = linear(&random_source(&pretrained.cfg), probe_dir.path())?;
    *state = Some(pretrained);
    let detail = format!("{loss}; probe {acc:.3} vs random-init {random:.3} vs majority {majority:.3}");
    check(acc - random >= MARGIN && acc - majority >= MARGIN, || detail.clone())?;
    Ok(detail)
}

fn cross_channel(state: &Option<Pretrained>) -> Outcome {
    let p = state.as_ref().ok_or("criterion 9 produced no checkpoint")?;
    let (model, _) = load_checkpoint(&p.checkpoint).map_err(err)?;
    let shapes = |m: &HyperMae| m.store.iter().map(|(_, _, t)| t.shape().to_vec()).collect::<Vec<_>>();
    let before = shapes(&model);

    let dir = TempDir::new().map_err(err)?;
    dataset(dir.path(), SynthConfig::evenly_spaced(20, 64), WIDE_TILES, WIDE_SEED)?;
    let tile = &load_dataset(dir.path()).map_err(err)?[0].cube;
    check(tile.channels() == 20, || format!("{} channels", tile.channels()))?;
    let f = model.features(tile).map_err(err)?;
    check(f.shape()[1] == 21, || format!("features {:?}", f.shape()))?;
    check(shapes(&model) == before, || "parameter shapes changed".into())?;

    let (acc, _) = linear(&ModelSource::Checkpoint(p.checkpoint.clone()), dir.path())?;
    let (random, _) = linear(&random_source(&p.cfg), dir.path())?;
    let detail = format!("C=20 probe {acc:.3} vs random-init {random:.3}");
    check(acc > random, || detail.clone())?;
    Ok(detail)
}

fn same_bytes(a: &Path, b: &Path) -> Result<(), String> {
    let mut names: Vec<_> = std::fs::read_dir(a).map_err(err)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>().map_err(err)?;
    names.sort();
    for n in &names {
        let (x, y) = (std::fs::read(a.join(n)).map_err(err)?, std::fs::read(b.join(n)).map_err(err)?);
        check(x == y, || format!("{} differs", n.to_string_lossy()))?;
    }
    Ok(())
}

fn determinism() -> Outcome {
    with_precision(Precision::F64, || {
        let tmp = TempDir::new().map_err(err)?;
        let root = tmp.path();
        let synth = SynthConfig::sentinel2(32);
        let mut compared = 0usize;
        let mut same = |name: &str, a: Vec<Record>, b: Vec<Record>| -> Result<(), String> {
            let (a, b) = (metric_lines(&a), metric_lines(&b));
            check(!a.is_empty() && a == b, || format!("{name} records differ"))?;
            compared += a.lines().count();
            Ok(())
        };

        let gen = |d: &str| cmd_generate(&root.join(d), &synth, 40, 5, SplitFractions::default()).map_err(err);
        same("generate", gen("g1")?, gen("g2")?)?;
        same_bytes(&root.join("g1"), &root.join("g2"))?;

        let opts = VerifyOptions { fault: None, seed: 3 };
        same("verify", cmd_verify(&opts).records, cmd_verify(&opts).records)?;

        let plan = BenchPlan { positions: vec![16], channels: vec![2, 4], dims: vec![128], ..BenchPlan::default() };
        same("bench", cmd_bench(&plan).map_err(err)?.0, cmd_bench(&plan).map_err(err)?.0)?;

        let mut cfg = HyperMaeConfig::desk();
        cfg.dim = 64;
        cfg.heads = 1;
        cfg.encoder_depth = 1;
        cfg.decoder_dim = 64;
        cfg.decoder_heads = 1;
        cfg.decoder_depth = 1;
        let train = PretrainConfig { epochs: 2, batch_size: 8, micro_batch: 4, seed: 9, ..PretrainConfig::default() };
        let pre = |d: &str| {
            std::fs::create_dir_all(root.join(d)).map_err(err)?;
            let out = root.join(d).join("m.lvck");
            cmd_pretrain(&root.join("g1"), &out, &root.join(d).join("loss.txt"), &cfg, &train).map_err(err)
        };
        same("pretrain", pre("p1")?, pre("p2")?)?;
        same_bytes(&root.join("p1"), &root.join("p2"))?;

        let run = RunConfig::default();
        let source = ModelSource::Checkpoint(root.join("p1").join("m.lvck"));
        for mode in [ProbeMode::Linear, ProbeMode::Knn, ProbeMode::Moe, ProbeMode::Pca] {
            let probe = |name: &str| {
                let out = root.join(name);
                cmd_probe(&source, &root.join("g1"), mode, &run, Some(&out), 1).map_err(err)
            };
            same(&format!("{mode:?} probe"), probe("a.ppm")?, probe("b.ppm")?)?;
            if mode == ProbeMode::Pca {
                check(std::fs::read(root.join("a.ppm")).map_err(err)? == std::fs::read(root.join("b.ppm")).map_err(err)?, || {
                    "PCA images differ".into()
                })?;
            }
        }
        Ok(format!("{compared} metric records identical across generate, verify, bench, pretrain and probe"))
    })
}

fn selected() -> Option<Vec<usize>> {
    let only = std::env::var("LESSVIT_ACCEPTANCE_ONLY").ok()?;
    Some(only.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() -> ExitCode {
    let only = selected();
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut pretrained = None;
    let mut failures = 0;
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {n:>2} {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL {n:>2} {name} ({secs:.1} s): {d}");
            }
        }
    };
    run(1, "kronecker exactness", &mut || verify_checks(&["kron_exactness"]));
    run(2, "implied attention is row-stochastic", &mut || verify_checks(&["implied_attention_stochastic"]));
    run(3, "MAC scaling in channel count", &mut mac_sweep);
    run(4, "finite-difference gradients", &mut || verify_checks(&["gradients_less_block", "gradients_hypermae_loss"]));
    run(5, "perception mask invariance", &mut || verify_checks(&["mask_interior_counts", "mask_physical_footprint"]));
    run(6, "positional embedding physics", &mut || verify_checks(&["positional_physics"]));
    run(7, "masking accounting", &mut || verify_checks(&["masking_accounting"]));
    run(8, "loss decomposition", &mut || verify_checks(&["loss_decomposition"]));
    run(9, "desk-scale learning", &mut || desk_learning(&mut pretrained));
    run(10, "cross-channel-count generalization", &mut || cross_channel(&pretrained));
    run(11, "determinism", &mut determinism);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
