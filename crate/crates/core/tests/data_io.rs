use lessvit_core::data::{
    augment, channel_correlation, compute_stats, decode_tile, encode_tile, generate_dataset, generate_tile,
    hflip, horizontal_autocorrelation, load_dataset, normalize_tile, read_tile, write_tile, ChannelStats,
    CropFlip, DatasetStats, HyperCube, Modality, Split, SplitFractions, SynthConfig, TileError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rank_one_without_noise_is_perfectly_correlated() {
    let mut cfg = SynthConfig::sentinel2(32);
    cfg.mixing_rank = 1;
    cfg.noise = 0.0;
    cfg.label_seed = None;
    let (cube, label) = generate_tile(&cfg, 3).unwrap();
    assert!(label.is_none());
    for a in 0..13 {
        for b in 0..13 {
            assert!((channel_correlation(&cube, a, b).abs() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn vanishing_correlation_length_gives_white_noise() {
    let mut cfg = SynthConfig::sentinel2(64);
    cfg.correlation_length_m = 0.01;
    let mut total = 0.0;
    for seed in 0..4 {
        let (cube, _) = generate_tile(&cfg, seed).unwrap();
        total += horizontal_autocorrelation(&cube, 0, 1);
    }
    assert!((total / 4.0).abs() < 0.05);
}

#[test]
fn default_autocorrelation_decays_over_five_lags() {
    let cfg = SynthConfig::sentinel2(64);
    let mut acf = [0.0; 6];
    for seed in 0..8 {
        let (cube, _) = generate_tile(&cfg, seed).unwrap();
        for (lag, a) in acf.iter_mut().enumerate() {
            for c in 0..13 {
                *a += horizontal_autocorrelation(&cube, c, lag);
            }
        }
    }
    assert!(acf.windows(2).all(|w| w[1] < w[0]), "{acf:?}");
    assert!(acf[1] / acf[0] > 0.5);
}

#[test]
fn channels_correlate_within_groups_only() {
    let cfg = SynthConfig::sentinel2(64);
    let groups = cfg.channel_groups();
    let (mut within, mut across) = ((0.0, 0usize), (0.0, 0usize));
    for seed in 0..6 {
        let (cube, _) = generate_tile(&cfg, 100 + seed).unwrap();
        for a in 0..13 {
            for b in a + 1..13 {
                let r = channel_correlation(&cube, a, b);
                let slot = if groups[a] == groups[b] { &mut within } else { &mut across };
                slot.0 += r.abs();
                slot.1 += 1;
            }
        }
    }
    let within = within.0 / within.1 as f64;
    let across = across.0 / across.1 as f64;
    assert!(within > 0.8, "within {within}");
    assert!(across < 0.35, "across {across}");
    assert!(within > 3.0 * across);
}

#[test]
fn labels_cover_every_class() {
    let cfg = SynthConfig::sentinel2(32);
    let mut seen = [0usize; 4];
    for seed in 0..200 {
        seen[generate_tile(&cfg, seed).unwrap().1.unwrap()] += 1;
    }
    assert!(seen.iter().all(|&n| n >= 20), "{seen:?}");
}

#[test]
fn file_round_trip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, _) = generate_tile(&SynthConfig::sentinel12(32), 5).unwrap();
    let path = dir.path().join("t.ght");
    write_tile(&path, &cube).unwrap();
    let back = read_tile(&path).unwrap();
    assert_eq!(back, cube);
    assert_eq!(std::fs::read(&path).unwrap(), encode_tile(&back));
    assert_eq!(back.modalities()[13], Modality::Radar);
}

#[test]
fn truncation_and_corruption_are_rejected() {
    let (cube, _) = generate_tile(&SynthConfig::sentinel2(16), 6).unwrap();
    let bytes = encode_tile(&cube);
    assert!(matches!(
        decode_tile(&bytes[..bytes.len() - 4]),
        Err(TileError::LengthMismatch { .. })
    ));
    let mut bad = bytes.clone();
    bad[1] = b'X';
    assert!(matches!(decode_tile(&bad), Err(TileError::BadMagic(_))));
    let mut extra = bytes;
    extra.push(0);
    assert!(matches!(decode_tile(&extra), Err(TileError::LengthMismatch { .. })));
}

#[test]
fn payload_size_for_fifteen_channels() {
    let cube = HyperCube::optical(128, 128, 10.0, vec![500.0; 15], vec![0.0; 15 * 128 * 128]).unwrap();
    let bytes = encode_tile(&cube);
    let header = 20 + 5 * 15;
    assert_eq!(bytes.len() - header, 983_040);
}

fn stats_for(low: f64, high: f64) -> DatasetStats {
    DatasetStats {
        channels: vec![ChannelStats {
            mean: 0.0,
            std: 1.0,
            low,
            high,
        }],
    }
}

#[test]
fn values_inside_the_band_map_affinely() {
    let tile = HyperCube::optical(1, 4, 10.0, vec![500.0], vec![1.0, 2.0, 2.5, 3.0]).unwrap();
    let out = normalize_tile(&tile, &stats_for(1.0, 3.0)).unwrap();
    assert_eq!(out.pixels(), &[0.0, 127.5, 191.25, 255.0]);
}

#[test]
fn outliers_are_clipped_to_the_band_edge() {
    let mut values: Vec<f32> = (0..100).map(|i| i as f32 / 100.0).collect();
    values[50] = 1e6;
    let tile = HyperCube::optical(10, 10, 10.0, vec![500.0], values).unwrap();
    let stats = compute_stats(std::slice::from_ref(&tile)).unwrap();
    let out = normalize_tile(&tile, &stats).unwrap();
    assert_eq!(out.pixels()[50], 255.0);
    assert!(stats.channels[0].high < 1.0);
}

#[test]
fn uniform_samples_fill_the_output_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tiles: Vec<HyperCube> = (0..4)
        .map(|_| {
            let px = (0..2 * 64 * 64).map(|_| rng.gen::<f32>()).collect();
            HyperCube::optical(64, 64, 10.0, vec![500.0, 600.0], px).unwrap()
        })
        .collect();
    let stats = compute_stats(&tiles).unwrap();
    for s in &stats.channels {
        assert!((s.low - 0.03).abs() < 0.005 && (s.high - 0.97).abs() < 0.005, "{s:?}");
        assert!((s.mean - 0.5).abs() < 0.01);
    }
    let out: Vec<f32> = tiles
        .iter()
        .flat_map(|t| normalize_tile(t, &stats).unwrap().pixels().to_vec())
        .collect();
    let min = out.iter().copied().fold(f32::MAX, f32::min);
    let max = out.iter().copied().fold(f32::MIN, f32::max);
    assert!(min.abs() < 1e-3 && (max - 255.0).abs() < 1e-3);
}

#[test]
fn double_flip_is_the_identity() {
    let (cube, _) = generate_tile(&SynthConfig::sentinel2(16), 7).unwrap();
    assert_eq!(hflip(&hflip(&cube)), cube);
    assert_ne!(hflip(&cube), cube);
}

#[test]
fn crop_offsets_follow_the_seed() {
    let a = CropFlip::sample(64, 64, (32, 32), 9).unwrap();
    assert_eq!(a, CropFlip::sample(64, 64, (32, 32), 9).unwrap());
    let distinct = (0..20)
        .map(|s| CropFlip::sample(64, 64, (32, 32), s).unwrap())
        .filter(|c| *c != a)
        .count();
    assert!(distinct > 15);
}

#[test]
fn crop_window_is_shared_by_all_channels() {
    let mut pixels = vec![0.0f32; 3 * 48 * 48];
    for c in 0..3 {
        pixels[(c * 48 + 20) * 48 + 30] = 1.0 + c as f32;
    }
    let tile = HyperCube::optical(48, 48, 10.0, vec![500.0, 600.0, 700.0], pixels).unwrap();
    for seed in 0..16 {
        let t = CropFlip::sample(48, 48, (32, 32), seed).unwrap();
        let out = augment(&tile, (32, 32), seed).unwrap();
        assert_eq!(out.resolution(), tile.resolution());
        let inside = (t.top..t.top + 32).contains(&20) && (t.left..t.left + 32).contains(&30);
        let found: Vec<Option<(usize, usize)>> = (0..3)
            .map(|c| {
                let plane = out.channel(c);
                plane.iter().position(|&v| v != 0.0).map(|i| (i / 32, i % 32))
            })
            .collect();
        if inside {
            let y = 20 - t.top;
            let x = if t.flip { 31 - (30 - t.left) } else { 30 - t.left };
            for (c, f) in found.iter().enumerate() {
                assert_eq!(*f, Some((y, x)));
                assert_eq!(out.pixel(c, y, x), 1.0 + c as f32);
            }
        } else {
            assert!(found.iter().all(Option::is_none));
        }
    }
    assert!(augment(&tile, (64, 32), 0).is_err());
}

#[test]
fn generated_dataset_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::sentinel2(32);
    let manifest = generate_dataset(dir.path(), &cfg, 10, 40, SplitFractions::default()).unwrap();
    let samples = load_dataset(dir.path()).unwrap();
    assert_eq!(samples.len(), 10);
    assert_eq!(samples.iter().filter(|s| s.split == Split::Train).count(), 7);
    assert_eq!(samples.iter().filter(|s| s.split == Split::Val).count(), 1);
    for (i, s) in samples.iter().enumerate() {
        let (cube, label) = generate_tile(&cfg, 40 + i as u64).unwrap();
        assert_eq!(s.cube, cube);
        assert_eq!(s.label, label);
        assert_eq!(manifest.records[i].label, label);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_tile_round_trips(c in 1usize..5, h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px: Vec<f32> = (0..c * h * w).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let wl: Vec<f32> = (0..c).map(|_| rng.gen_range(1.0..6000.0)).collect();
        let mods: Vec<Modality> = (0..c).map(|_| if rng.gen_bool(0.5) { Modality::Optical } else { Modality::Radar }).collect();
        let cube = HyperCube::new(h, w, rng.gen_range(0.5..60.0), wl, mods, px).unwrap();
        let bytes = encode_tile(&cube);
        let back = decode_tile(&bytes).unwrap();
        prop_assert_eq!(encode_tile(&back), bytes);
    }
}
