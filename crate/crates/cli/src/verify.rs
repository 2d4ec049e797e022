//! Self-checks of the model's structural invariants, run by `lessvit verify`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use lessvit_core::attention::{
    atten_pool, attention_maps, flop_report, kron_combine, AttentionConfig, Axis, DistanceMetric, KronOrder,
    LessBlock, PerceptionMask, RankCombine,
};
use lessvit_core::data::{
    decode_tile, encode_tile, generate_tile, horizontal_autocorrelation, HyperCube, Modality, SynthConfig,
    TileError, SENTINEL2_WAVELENGTHS_NM,
};
use lessvit_core::embedding::{channel_pe, spatial_pe, GridLayout, TokenGrid};
use lessvit_core::heads::{knn_predict, moe_forward, MoeExpert, MoeHead};
use lessvit_core::hypermae::{
    apply_masks, decode_checkpoint, encode_checkpoint, loss_spatial, loss_spectral, mask_count, sample_mask_plan,
    HyperMae, HyperMaeConfig, MaskPlan, MaskRatios,
};
use lessvit_core::LessError;
use lessvit_tensor::gradcheck::{check_param_gradients, GradCheckOptions};
use lessvit_tensor::{Bound, ParamStore, Tape, Tensor, TensorError};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::bench::linear_fit;
use crate::record::{Record, TIMING};

/// Deliberate defects for negative-control runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Swap the operands of every Kronecker product.
    KronOrder,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    pub fault: Option<Fault>,
    pub seed: u64,
}

impl Fault {
    pub fn name(self) -> &'static str {
        match self {
            Self::KronOrder => "kron-order",
        }
    }
}

impl VerifyOptions {
    fn kron_order(&self) -> KronOrder {
        match self.fault {
            Some(Fault::KronOrder) => KronOrder::SpatialMajor,
            None => KronOrder::SpectralMajor,
        }
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

#[derive(Debug)]
pub struct Failure(pub String);

impl From<LessError> for Failure {
    fn from(e: LessError) -> Self {
        Self(e.to_string())
    }
}

impl From<TileError> for Failure {
    fn from(e: TileError) -> Self {
        Self(e.to_string())
    }
}

impl From<TensorError> for Failure {
    fn from(e: TensorError) -> Self {
        Self(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), Failure> {
    if cond {
        Ok(())
    } else {
        Err(Failure(msg()))
    }
}

pub struct Check {
    pub name: &'static str,
    pub run: fn(&VerifyOptions) -> Outcome,
}

pub fn checks() -> Vec<Check> {
    vec![
        Check { name: "kron_exactness", run: kron_exactness },
        Check { name: "implied_attention_stochastic", run: implied_attention_stochastic },
        Check { name: "rank_terms_average", run: rank_terms_average },
        Check { name: "mask_interior_counts", run: mask_interior_counts },
        Check { name: "mask_physical_footprint", run: mask_physical_footprint },
        Check { name: "cls_never_masked", run: cls_never_masked },
        Check { name: "positional_physics", run: positional_physics },
        Check { name: "channel_count_agnostic", run: channel_count_agnostic },
        Check { name: "masking_accounting", run: masking_accounting },
        Check { name: "loss_decomposition", run: loss_decomposition },
        Check { name: "gradients_less_block", run: gradients_less_block },
        Check { name: "gradients_hypermae_loss", run: gradients_hypermae_loss },
        Check { name: "mac_scaling", run: mac_scaling },
        Check { name: "tile_format", run: tile_format },
        Check { name: "synthetic_autocorrelation", run: synthetic_autocorrelation },
        Check { name: "checkpoint_round_trip", run: checkpoint_round_trip },
        Check { name: "head_invariants", run: head_invariants },
    ]
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub records: Vec<Record>,
    pub passed: usize,
    pub failed: usize,
}

/// Run every check, catching panics, with one record per check.
pub fn cmd_verify(opts: &VerifyOptions) -> VerifyReport {
    let mut records = Vec::new();
    let (mut passed, mut failed) = (0, 0);
    for check in checks() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (check.run)(opts)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(Failure(msg))
            });
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let (status, detail) = match outcome {
            Ok(d) => {
                passed += 1;
                ("pass", d)
            }
            Err(Failure(d)) => {
                failed += 1;
                ("fail", d)
            }
        };
        log::info!("{} {status} in {ms:.0} ms", check.name);
        records.push(Record::new("check").with("name", check.name).with("status", status).with("detail", detail));
        records.push(Record::new(TIMING).with("check", check.name).with("ms", format!("{ms:.1}")));
    }
    records.push(
        Record::new("verify")
            .with("checks", passed + failed)
            .with("passed", passed)
            .with("failed", failed)
            .with("fault", opts.fault.map_or("none", |f| f.name())),
    );
    VerifyReport { records, passed, failed }
}

// ---------------------------------------------------------------------------

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn layout(rows: usize, cols: usize, resolution: f64, patch: usize) -> GridLayout {
    GridLayout {
        patch,
        grid_rows: rows,
        grid_cols: cols,
        resolution,
        positions: (0..rows * cols).collect(),
        channels: vec![0],
        wavelengths: vec![500.0],
    }
}

/// Columns `start..start+len` of a matrix.
fn columns(t: &Tensor, start: usize, len: usize) -> Result<Tensor, Failure> {
    let (rows, cols) = t.dims2()?;
    Ok(Tensor::from_fn(&[rows, len], |i| t.data()[(i / len) * cols + start + i % len]))
}

/// Head `h` of a `[H, k, k]` weight.
fn head(t: &Tensor, h: usize) -> Result<Tensor, Failure> {
    let k = t.shape()[1];
    Ok(Tensor::new(&[k, k], t.data()[h * k * k..(h + 1) * k * k].to_vec())?)
}

fn softmax_attention(x: &Tensor, wq: &Tensor, wk: &Tensor) -> Result<Tensor, Failure> {
    let d = x.shape()[1] as f64;
    let q = x.matmul(wq)?;
    let k = x.matmul(wk)?;
    Ok(q.matmul(&k.transpose()?)?.scale(1.0 / d.sqrt()).softmax(None)?)
}

fn kron_exactness(opts: &VerifyOptions) -> Outcome {
    let mut rng = opts.rng(1);
    // (d1/d2, head_dim) pairs with head_dim ≤ 16.
    let shapes = [(1, 4), (1, 9), (2, 8), (4, 16), (16, 16), (1, 16), (4, 4), (2, 2)];
    let mut worst: f64 = 0.0;
    for trial in 0..24 {
        let (ratio, hd) = shapes[trial % shapes.len()];
        let heads = 1 + trial % 2;
        let (n, c) = (rng.gen_range(1..=8), rng.gen_range(1..=4));
        let mut cfg = AttentionConfig::new(hd * heads, heads, ratio, 1);
        cfg.kron_order = opts.kron_order();
        let (d1, d2) = cfg.factorization()?;
        let mut store = ParamStore::new();
        let block = LessBlock::new(&mut store, "b", &cfg, &mut rng)?;
        let xn = uniform(&[n + 1, c + 1, cfg.dim], &mut rng);
        let tape = Tape::new();
        let bound = Bound::new(&tape, &store);
        let x = tape.constant(xn);
        let got = block.attention(&bound, x, None)?.value();
        let ps = atten_pool(x, Axis::Spatial, bound.var(block.pool_spatial))?.value();
        let pc = atten_pool(x, Axis::Spectral, bound.var(block.pool_spectral))?.value();
        let (p1, q1) = (n + 1, c + 1);
        for h in 0..heads {
            let xs = columns(&ps, h * d1, d1)?;
            let xc = columns(&pc, h * d2, d2)?;
            let a_s = softmax_attention(&xs, &head(store.get(block.q_spatial[0]), h)?, &head(store.get(block.k_spatial[0]), h)?)?;
            let a_c = softmax_attention(&xc, &head(store.get(block.q_spectral[0]), h)?, &head(store.get(block.k_spectral[0]), h)?)?;
            let v_s = xs.matmul(&head(store.get(block.v_spatial), h)?)?;
            let v_c = xc.matmul(&head(store.get(block.v_spectral), h)?)?;
            let full = a_c.kron(&a_s)?.matmul(&v_c.kron(&v_s)?)?;
            let scale = full.max_abs().max(f64::MIN_POSITIVE);
            for ni in 0..p1 {
                for ci in 0..q1 {
                    for j in 0..hd {
                        let g = got.at(&[ni, ci, h * hd + j]);
                        let w = full.at(&[ci * p1 + ni, j]);
                        worst = worst.max((g - w).abs() / scale);
                    }
                }
            }
        }
    }
    ensure(worst < 1e-9, || format!("max relative deviation {worst:.3e} from the materialized product"))?;
    Ok(format!("24 configs, max relative deviation {worst:.2e}"))
}

fn implied_attention_stochastic(opts: &VerifyOptions) -> Outcome {
    let mut rng = opts.rng(2);
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let (rows, cols) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let p1 = rows * cols + 1;
        let q1 = rng.gen_range(2..=6);
        let (heads, d1, d2, rank) = (rng.gen_range(1..=3), rng.gen_range(1..=6), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let mask = (t % 2 == 0).then(|| {
            let threshold = rng.gen_range(100.0..400.0);
            PerceptionMask::for_layout(&layout(rows, cols, 10.0, 16), threshold, DistanceMetric::Euclidean).with_cls()
        });
        let tape = Tape::new();
        let mut maps = |len: usize, d: usize, mask: Option<&[bool]>| -> Result<Vec<_>, Failure> {
            let pooled = tape.constant(uniform(&[heads, len, d], &mut rng));
            let qs: Vec<_> = (0..rank).map(|_| tape.constant(uniform(&[heads, d, d], &mut rng))).collect();
            let ks: Vec<_> = (0..rank).map(|_| tape.constant(uniform(&[heads, d, d], &mut rng))).collect();
            let v = tape.constant(uniform(&[heads, d, d], &mut rng));
            let (maps, _) = attention_maps(pooled, &qs, &ks, v, mask)?;
            let ones = tape.constant(Tensor::ones(&[heads, len, 1]));
            Ok(maps.into_iter().map(|a| a.bmm(ones, false)).collect::<Result<Vec<_>, _>>()?)
        };
        let ys = maps(p1, d1, mask.as_deref())?;
        let yc = maps(q1, d2, None)?;
        let y = kron_combine(&yc, &ys, RankCombine::Mean, opts.kron_order())?.value();
        worst = y.data().iter().fold(worst, |m, v| m.max((v - 1.0).abs()));
    }
    ensure(worst < 1e-8, || format!("row sums deviate from 1 by {worst:.3e}"))?;
    Ok(format!("100 configs, max |A·1 − 1| = {worst:.2e}"))
}

fn rank_terms_average(opts: &VerifyOptions) -> Outcome {
    let mut rng = opts.rng(3);
    let tape = Tape::new();
    let ys = tape.constant(uniform(&[2, 4, 4], &mut rng));
    let yc = tape.constant(uniform(&[2, 3, 2], &mut rng));
    let order = opts.kron_order();
    let one = kron_combine(&[yc], &[ys], RankCombine::Mean, order)?.value();
    let mean = kron_combine(&[yc, yc], &[ys, ys], RankCombine::Mean, order)?.value();
    let sum = kron_combine(&[yc, yc], &[ys, ys], RankCombine::Sum, order)?.value();
    ensure(one.max_abs_diff(&mean) < 1e-12, || "mean of equal terms differs from one term".into())?;
    ensure(one.scale(2.0).max_abs_diff(&sum) < 1e-12, || "sum of two equal terms is not twice one term".into())?;
    Ok("mean and sum combination".into())
}

fn interior(g: usize, reach: usize) -> Vec<usize> {
    (0..g * g)
        .filter(|&i| (reach..g - reach).contains(&(i / g)) && (reach..g - reach).contains(&(i % g)))
        .collect()
}

fn mask_interior_counts(_: &VerifyOptions) -> Outcome {
    let mut summary = Vec::new();
    // The 320 m reach leaves no interior on a 4×4 grid.
    for (threshold, sizes) in [(200.0, &[64, 128, 256][..]), (320.0, &[128, 256][..])] {
        let mut counts = Vec::new();
        for &size in sizes {
            let g = size / 16;
            let m = PerceptionMask::for_layout(&layout(g, g, 10.0, 16), threshold, DistanceMetric::Euclidean);
            let reach = (threshold / 160.0).floor() as usize;
            let cells = interior(g, reach);
            let c: Vec<usize> = cells.iter().map(|&i| m.neighbor_count(i)).collect();
            ensure(c.windows(2).all(|w| w[0] == w[1]), || format!("uneven interior counts at {size}px"))?;
            counts.push(c[0]);
        }
        ensure(counts.windows(2).all(|w| w[0] == w[1]), || format!("counts {counts:?} at {threshold} m"))?;
        summary.push(format!("{threshold}m:{}", counts[0]));
    }
    Ok(format!("neighbors per interior patch {}", summary.join(",")))
}

fn mask_physical_footprint(_: &VerifyOptions) -> Outcome {
    let threshold = 320.0;
    let coarse = PerceptionMask::for_layout(&layout(8, 8, 10.0, 16), threshold, DistanceMetric::Euclidean);
    let fine = PerceptionMask::for_layout(&layout(16, 16, 5.0, 16), threshold, DistanceMetric::Euclidean);
    let c_off = coarse.physical_offsets(3 * 8 + 3);
    let f_off = fine.physical_offsets(6 * 16 + 6);
    let radius = |o: &[(f64, f64)]| o.iter().map(|(y, x)| (y * y + x * x).sqrt()).fold(0.0, f64::max);
    ensure(radius(&c_off) <= threshold && radius(&f_off) <= threshold, || "footprint exceeds the threshold".into())?;
    ensure(c_off.iter().all(|o| f_off.contains(o)), || "coarse offsets missing at half resolution".into())?;
    let ratio = f_off.len() as f64 / c_off.len() as f64;
    ensure((3.0..5.0).contains(&ratio), || format!("fine/coarse neighbor ratio {ratio}"))?;
    Ok(format!("{} coarse and {} fine neighbors within {threshold} m", c_off.len(), f_off.len()))
}

fn cls_never_masked(_: &VerifyOptions) -> Outcome {
    let m = PerceptionMask::for_layout(&layout(3, 3, 10.0, 16), 1.0, DistanceMetric::Euclidean).with_cls();
    ensure((0..10).all(|k| m[k] && m[k * 10]), || "CLS row or column masked".into())?;
    let allowed = m.iter().filter(|&&a| a).count();
    ensure(allowed == 28, || format!("{allowed} allowed pairs, expected 28"))?;
    Ok("CLS row and column always open".into())
}

fn positional_physics(_: &VerifyOptions) -> Outcome {
    let d = 64;
    let a = spatial_pe(4.0, 10.0, 16.0, d);
    for (x, r, p) in [(8.0, 5.0, 16.0), (2.0, 10.0, 32.0), (16.0, 2.5, 16.0)] {
        let b = spatial_pe(x, r, p, d);
        ensure(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()), || format!("x·r·p = 640 differs at ({x}, {r}, {p})"))?;
    }
    ensure(spatial_pe(5.0, 10.0, 16.0, d) != a, || "distinct offsets collide".into())?;
    let pes: Vec<Vec<f64>> = SENTINEL2_WAVELENGTHS_NM.iter().map(|&l| channel_pe(l, d)).collect();
    let mut closest = f64::INFINITY;
    for i in 0..pes.len() {
        for j in i + 1..pes.len() {
            let dist = pes[i].iter().zip(&pes[j]).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            closest = closest.min(dist);
        }
    }
    ensure(closest > 1e-3, || format!("two band embeddings within {closest:e}"))?;
    Ok(format!("13 bands, closest pair {closest:.3}"))
}

fn tiny_config() -> HyperMaeConfig {
    HyperMaeConfig {
        patch: 2,
        dim: 8,
        heads: 1,
        ratio: 2,
        encoder_depth: 1,
        decoder_dim: 8,
        decoder_heads: 1,
        decoder_depth: 1,
        mask: MaskRatios {
            spatial: 0.5,
            spectral: 0.34,
        },
        ..HyperMaeConfig::desk()
    }
}

fn random_cube(h: usize, w: usize, wavelengths: &[f64], modalities: Vec<Modality>, rng: &mut ChaCha8Rng) -> Result<HyperCube, Failure> {
    let c = wavelengths.len();
    let px = (0..c * h * w).map(|_| rng.gen::<f32>()).collect();
    Ok(HyperCube::new(h, w, 10.0, wavelengths.iter().map(|&l| l as f32).collect(), modalities, px)?)
}

fn channel_count_agnostic(opts: &VerifyOptions) -> Outcome {
    let mut rng = opts.rng(8);
    let model = HyperMae::new(tiny_config(), 1)?;
    let params = model.store.num_scalars();
    let s2 = random_cube(4, 4, &SENTINEL2_WAVELENGTHS_NM, vec![Modality::Optical; 13], &mut rng)?;
    let wide: Vec<f64> = (0..20).map(|i| 400.0 + 100.0 * i as f64).collect();
    let hyper = random_cube(4, 6, &wide, vec![Modality::Optical; 20], &mut rng)?;
    for (cube, shape) in [(&s2, [5, 14, 8]), (&hyper, [7, 21, 8])] {
        let f = model.features(cube)?;
        ensure(f.shape() == shape, || format!("features {:?}, expected {shape:?}", f.shape()))?;
        ensure(f.data().iter().all(|v| v.is_finite()), || "non-finite features".into())?;
    }
    ensure(model.store.num_scalars() == params, || "parameter count changed".into())?;
    Ok(format!("C=13 and C=20 through {params} parameters"))
}

/// Grid whose token at `(n, c)` holds `[n, c, 0, 0]`.
fn labelled_grid<'t>(tape: &'t Tape, rows: usize, cols: usize, channels: usize) -> Result<TokenGrid<'t>, Failure> {
    let cube = HyperCube::optical(rows, cols, 10.0, vec![500.0; channels], vec![0.0; channels * rows * cols])?;
    let layout = GridLayout::full(&cube, 1)?;
    let (p1, q1) = layout.grid_shape();
    let t = Tensor::from_fn(&[p1, q1, 4], |i| match i % 4 {
        0 => (i / 4 / q1) as f64,
        1 => (i / 4 % q1) as f64,
        _ => 0.0,
    });
    Ok(TokenGrid {
        tokens: tape.constant(t),
        layout,
    })
}

fn masking_accounting(opts: &VerifyOptions) -> Outcome {
    let ratios = MaskRatios::default();
    let mut rng = opts.rng(9);
    let shapes = [(4, 4), (8, 8), (14, 14)];
    for k in 0..1000 {
        let (r, c) = shapes[k % 3];
        let n = r * c;
        let ch = [4, 13, 20][(k / 3) % 3];
        let plan = sample_mask_plan(n, ch, ratios, rng.next_u64())?;
        let (vp, vc) = (n - mask_count(ratios.spatial, n), ch - mask_count(ratios.spectral, ch));
        ensure(plan.visible_tokens() == (vp + 1) * (vc + 1), || format!("N={n} C={ch}: {} visible tokens", plan.visible_tokens()))?;
        let tape = Tape::new();
        let vis = apply_masks(&labelled_grid(&tape, r, c, ch)?, &plan)?.tokens.value();
        ensure(vis.shape() == [vp + 1, vc + 1, 4], || format!("visible grid {:?}", vis.shape()))?;
        let rows: Vec<usize> = std::iter::once(0).chain(plan.visible_patches().iter().map(|p| p + 1)).collect();
        let cols: Vec<usize> = std::iter::once(0).chain(plan.visible_channels().iter().map(|c| c + 1)).collect();
        for (i, &row) in rows.iter().enumerate() {
            for (j, &col) in cols.iter().enumerate() {
                ensure(vis.at(&[i, j, 0]) == row as f64 && vis.at(&[i, j, 1]) == col as f64, || {
                    format!("plan {k}: token ({i},{j}) is not ({row},{col})")
                })?;
            }
        }
    }
    Ok("1000 plans, exact counts and tubes".into())
}

fn loss_decomposition(_: &VerifyOptions) -> Outcome {
    // Two channels of 4×4 with 2×2 patches; patch 1 and channel 0 masked.
    let target = Tensor::from_fn(&[2, 4, 4], |i| i as f64);
    let recon = Tensor::zeros(&[2, 4, 4]);
    let plan = MaskPlan::new(4, 2, vec![1], vec![0])?;
    let spatial = [2.0f64, 3.0, 6.0, 7.0, 18.0, 19.0, 22.0, 23.0].iter().map(|v| v * v).sum::<f64>() / 8.0;
    let spectral = (0..16).map(|v| (v * v) as f64).sum::<f64>() / 16.0;
    let ls = loss_spatial(&recon, &target, &plan, 2)?;
    let lc = loss_spectral(&recon, &target, &plan, 2)?;
    ensure(ls == spatial && lc == spectral, || format!("({ls}, {lc}) vs ({spatial}, {spectral})"))?;
    let mut bumped = recon.clone();
    bumped.data_mut()[6] += 1.0;
    let moved = (
        loss_spatial(&bumped, &target, &plan, 2)? != ls,
        loss_spectral(&bumped, &target, &plan, 2)? != lc,
    );
    ensure(moved == (true, true), || "doubly masked pixel missing from a term".into())?;
    Ok(format!("L_spatial={ls} L_spectral={lc}"))
}

fn gradcheck_report(checks: &[lessvit_tensor::gradcheck::ParamCheck]) -> Outcome {
    let worst = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    if let Some(c) = checks.iter().find(|c| !(c.relative_error < 1e-4) || c.analytic_norm == 0.0) {
        return Err(Failure(format!("{}: relative error {:.3e}, gradient norm {:.3e}", c.name, c.relative_error, c.analytic_norm)));
    }
    Ok(format!("{} parameters, max relative error {worst:.2e}", checks.len()))
}

fn gradients_less_block(opts: &VerifyOptions) -> Outcome {
    let mut rng = opts.rng(11);
    let cfg = AttentionConfig::new(16, 2, 2, 2);
    let mut store = ParamStore::new();
    let block = LessBlock::new(&mut store, "blk", &cfg, &mut rng)?;
    for id in store.ids().collect::<Vec<_>>() {
        if store.get(id).rank() == 1 {
            let t = uniform(store.get(id).shape(), &mut rng).scale(0.3);
            let t = if store.name(id).ends_with("gamma") { t.map(|v| v + 1.0) } else { t };
            store.set(id, t)?;
        }
    }
    let mask = PerceptionMask::for_layout(&layout(2, 2, 10.0, 16), 170.0, DistanceMetric::Euclidean).with_cls();
    let x = uniform(&[5, 3, 16], &mut rng);
    let weights = uniform(&[5, 3, 16], &mut rng);
    let opts = GradCheckOptions {
        max_coords: 12,
        ..GradCheckOptions::default()
    };
    let checks = check_param_gradients(&store, opts, |bound| {
        let tape = bound.tape();
        let y = block
            .forward(bound, tape.constant(x.clone()), Some(&mask))
            .map_err(|e| TensorError::Invalid(e.to_string()))?;
        Ok(y.mul(tape.constant(weights.clone()))?.sum())
    })?;
    gradcheck_report(&checks)
}

fn gradients_hypermae_loss(opts: &VerifyOptions) -> Outcome {
    let mut rng = opts.rng(12);
    let model = HyperMae::new(tiny_config(), 3)?;
    let wl = [450.0, 560.0, 5000.0];
    let cube = random_cube(4, 4, &wl, vec![Modality::Optical, Modality::Optical, Modality::Radar], &mut rng)?;
    let plan = MaskPlan::new(4, 3, vec![1, 2], vec![0])?;
    let opts = GradCheckOptions {
        max_coords: 12,
        ..GradCheckOptions::default()
    };
    let checks = check_param_gradients(&model.store, opts, |bound| {
        Ok(model
            .loss(bound, &cube, &plan)
            .map_err(|e| TensorError::Invalid(e.to_string()))?
            .total)
    })?;
    gradcheck_report(&checks)
}

fn mac_scaling(_: &VerifyOptions) -> Outcome {
    let cfg = AttentionConfig::vit_base();
    let reports = [4, 8, 16, 32, 64]
        .iter()
        .map(|&c| flop_report(&cfg, 64, c, 0))
        .collect::<Result<Vec<_>, _>>()?;
    let last = &reports[4];
    let prev = &reports[3];
    let vanilla = last.vanilla_attention_macs as f64 / prev.vanilla_attention_macs as f64;
    let less = last.less_macs as f64 / prev.less_macs as f64;
    let x: Vec<f64> = reports[..4].iter().map(|r| r.c as f64).collect();
    let y: Vec<f64> = reports[..4].iter().map(|r| r.less_macs as f64).collect();
    let (_, _, r2) = linear_fit(&x, &y);
    ensure(vanilla >= 3.8, || format!("vanilla attention grows {vanilla:.3}x from C=32 to 64"))?;
    ensure(less <= 2.2, || format!("LESS grows {less:.3}x from C=32 to 64"))?;
    ensure(r2 > 0.99, || format!("LESS MACs against C fit R²={r2:.5}"))?;
    Ok(format!("vanilla {vanilla:.3}x, LESS {less:.3}x, R²={r2:.6}"))
}

fn tile_format(opts: &VerifyOptions) -> Outcome {
    let (cube, _) = generate_tile(&SynthConfig::sentinel12(16), opts.seed)?;
    let bytes = encode_tile(&cube);
    ensure(decode_tile(&bytes)? == cube, || "decode(encode(t)) differs".into())?;
    ensure(encode_tile(&decode_tile(&bytes)?) == bytes, || "re-encoding changed bytes".into())?;
    let truncated = decode_tile(&bytes[..bytes.len() - 1]);
    ensure(matches!(truncated, Err(TileError::LengthMismatch { .. })), || "truncation not reported".into())?;
    let mut bad = bytes.clone();
    bad[0] = b'X';
    ensure(matches!(decode_tile(&bad), Err(TileError::BadMagic(_))), || "bad magic not reported".into())?;
    let mut newer = bytes.clone();
    newer[4] = 9;
    ensure(matches!(decode_tile(&newer), Err(TileError::VersionMismatch { .. })), || "version not checked".into())?;
    Ok(format!("{} bytes round-trip", bytes.len()))
}

fn synthetic_autocorrelation(opts: &VerifyOptions) -> Outcome {
    let cfg = SynthConfig::sentinel2(64);
    let mut lags = [0.0; 5];
    for t in 0..3 {
        let (cube, _) = generate_tile(&cfg, opts.seed + t)?;
        for (k, lag) in lags.iter_mut().enumerate() {
            *lag += (0..cube.channels()).map(|c| horizontal_autocorrelation(&cube, c, k + 1)).sum::<f64>();
        }
    }
    ensure(lags.windows(2).all(|w| w[1] < w[0]), || format!("autocorrelation not decreasing: {lags:?}"))?;
    let norm = 3.0 * cfg.channels() as f64;
    Ok(format!("lag1 {:.3} lag5 {:.3}", lags[0] / norm, lags[4] / norm))
}

fn checkpoint_round_trip(opts: &VerifyOptions) -> Outcome {
    let model = HyperMae::new(tiny_config(), opts.seed)?;
    let rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bytes = encode_checkpoint(&model, &rng);
    let (back, back_rng) = decode_checkpoint(&bytes)?;
    ensure(encode_checkpoint(&back, &back_rng) == bytes, || "checkpoint bytes changed".into())?;
    ensure(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err(), || "truncated checkpoint accepted".into())?;
    Ok(format!("{} bytes", bytes.len()))
}

fn head_invariants(opts: &VerifyOptions) -> Outcome {
    let mut rng = opts.rng(17);
    let (c, d, k) = (6, 4, 3);
    let experts: Vec<MoeExpert> = (0..5)
        .map(|_| MoeExpert {
            gate: (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            weight: uniform(&[d, k], &mut rng),
            bias: vec![0.0; k],
        })
        .collect();
    let cls = uniform(&[c, d], &mut rng);
    let forward = moe_forward(&cls, &MoeHead { experts: experts.clone(), k: 3 })?.class;
    let mut reversed = experts;
    reversed.reverse();
    let backward = moe_forward(&cls, &MoeHead { experts: reversed, k: 3 })?.class;
    ensure(forward == backward, || "expert order changed the prediction".into())?;
    let train = uniform(&[9, 3], &mut rng);
    let labels = [0, 1, 1, 2, 1, 0, 2, 1, 0];
    let all = knn_predict(&train, &labels, &uniform(&[4, 3], &mut rng), 9)?;
    ensure(all.iter().all(|&p| p == 1), || format!("k = n predicted {all:?}"))?;
    Ok("expert permutation and global-majority kNN".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn census() {
        let names: Vec<_> = checks().iter().map(|c| c.name).collect();
        assert!(names.len() >= 12);
        let mut unique = names.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn kron_fault_is_caught() {
        let faulty = VerifyOptions {
            fault: Some(Fault::KronOrder),
            seed: 0,
        };
        assert!(kron_exactness(&faulty).is_err());
        assert!(kron_exactness(&VerifyOptions::default()).is_ok());
    }
}
