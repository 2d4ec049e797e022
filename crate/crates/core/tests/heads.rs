use lessvit_core::heads::{
    covariance_matrix, knn_predict, knn_probe, linear_head, majority_baseline, moe_forward, pca_patch_features,
    scores_to_ppm, scores_to_text, top_k, train_linear_probe, train_moe, MoeConfig, MoeExpert, MoeHead, ProbeConfig,
};
use lessvit_core::LessError;
use lessvit_tensor::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(&[rows, cols], |_| StandardNormal.sample(rng))
}

fn two_clusters(n: usize, d: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Tensor::from_fn(&[n, d], |i| {
        let centre = if labels[i / d] == 0 { 5.0 } else { -5.0 };
        let noise: f64 = StandardNormal.sample(&mut rng);
        if i % d == 0 { centre + 0.3 * noise } else { 0.3 * noise }
    });
    (x, labels)
}

#[test]
fn linear_head_trivia() {
    let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
    let zero = linear_head(&x, &Tensor::zeros(&[3, 4]), &Tensor::zeros(&[4])).unwrap();
    assert!(zero.data().iter().all(|&v| v == 0.0));
    let mut w = Tensor::zeros(&[3, 2]);
    w.data_mut()[2 * 2 + 1] = 1.0;
    let out = linear_head(&x, &w, &Tensor::zeros(&[2])).unwrap();
    assert_eq!(out.data(), &[0.0, 3.0]);
}

#[test]
fn probe_separates_separable_features() {
    let (x, labels) = two_clusters(60, 5, 1);
    let probe = train_linear_probe(&x, &labels, 2, &ProbeConfig::default()).unwrap();
    assert_eq!(probe.accuracy(&x, &labels).unwrap(), 1.0);
    let raw = ProbeConfig {
        standardize: false,
        ..ProbeConfig::default()
    };
    assert_eq!(train_linear_probe(&x, &labels, 2, &raw).unwrap().accuracy(&x, &labels).unwrap(), 1.0);
    assert!(train_linear_probe(&x, &labels[1..], 2, &raw).is_err());
    assert!(train_linear_probe(&x, &labels, 1, &raw).is_err());
}

#[test]
fn majority_baseline_counts_training_labels() {
    assert_eq!(majority_baseline(&[1, 1, 0], &[1, 0, 1, 2]), 0.5);
    assert_eq!(majority_baseline(&[0, 1], &[1, 1]), 0.0);
}

fn expert(gate: Vec<f64>, weight: Vec<f64>, d: usize, classes: usize) -> MoeExpert {
    MoeExpert {
        gate,
        weight: Tensor::new(&[d, classes], weight).unwrap(),
        bias: vec![0.0; classes],
    }
}

#[test]
fn single_expert_is_a_gated_linear_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cls = gaussian(5, 3, &mut rng);
    let e = expert(vec![0.1, 2.0, -1.0, 1.0, 0.5], (0..6).map(|i| i as f64 - 2.5).collect(), 3, 2);
    let sel = top_k(&e.gate, 3);
    assert_eq!(sel, vec![1, 3, 4]);
    let z: f64 = sel.iter().map(|&i| e.gate[i].exp()).sum();
    let pooled: Vec<f64> = (0..3)
        .map(|j| sel.iter().map(|&i| e.gate[i].exp() / z * cls.at(&[i, j])).sum())
        .collect();
    let logits: Vec<f64> = (0..2)
        .map(|k| (0..3).map(|j| pooled[j] * e.weight.at(&[j, k])).sum())
        .collect();
    let want = if logits[1] > logits[0] { 1 } else { 0 };
    let head = MoeHead {
        experts: vec![e.clone()],
        k: 3,
    };
    let pred = moe_forward(&cls, &head).unwrap();
    assert_eq!(pred.class, want);
    assert_eq!(pred.votes, vec![want]);
    let copies = MoeHead {
        experts: vec![e; 4],
        k: 3,
    };
    assert_eq!(moe_forward(&cls, &copies).unwrap().class, want);
}

/// Channel tokens are one-hot in a 3-d space and every expert keeps one
/// channel, so each expert's logits are a row of its weight matrix.
#[test]
fn three_expert_toy_matches_hand_votes() {
    let cls = Tensor::eye(3);
    let gate_for = |ch: usize| (0..3).map(|i| if i == ch { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let w = |rows: [[f64; 3]; 3]| rows.iter().flatten().copied().collect::<Vec<f64>>();
    // Expert 0 reads channel 0 and votes class 2; expert 1 reads channel 1
    // and votes 0; expert 2 reads channel 2 and votes 2.
    let e0 = expert(gate_for(0), w([[0.0, 0.0, 1.0], [0.0; 3], [0.0; 3]]), 3, 3);
    let e1 = expert(gate_for(1), w([[0.0; 3], [2.0, 0.0, 0.0], [0.0; 3]]), 3, 3);
    let e2 = expert(gate_for(2), w([[0.0; 3], [0.0; 3], [0.0, 0.0, 0.5]]), 3, 3);
    let head = MoeHead {
        experts: vec![e0.clone(), e1.clone(), e2],
        k: 1,
    };
    let p = moe_forward(&cls, &head).unwrap();
    assert_eq!(p.votes, vec![2, 0, 2]);
    assert_eq!(p.class, 2);

    // One vote each for classes 2 and 0: expert 1 is more confident, so 0 wins.
    let tie = MoeHead {
        experts: vec![e0, e1],
        k: 1,
    };
    let p = moe_forward(&cls, &tie).unwrap();
    assert_eq!(p.votes, vec![2, 0]);
    assert!(p.summed_probs[0] > p.summed_probs[2]);
    assert_eq!(p.class, 0);

    // Identical confidence falls back to the smaller class.
    let flat = |ch: usize, class: usize| {
        let mut rows = [[0.0; 3]; 3];
        rows[ch][class] = 1.0;
        expert(gate_for(ch), w(rows), 3, 3)
    };
    let even = MoeHead {
        experts: vec![flat(0, 2), flat(1, 1)],
        k: 1,
    };
    assert_eq!(moe_forward(&cls, &even).unwrap().class, 1);
}

#[test]
fn too_few_channels_is_a_config_error() {
    let e = expert(vec![0.0; 2], vec![0.0; 6], 3, 2);
    let head = MoeHead { experts: vec![e], k: 3 };
    assert!(matches!(moe_forward(&Tensor::zeros(&[2, 3]), &head), Err(LessError::Config(_))));
}

#[test]
fn trained_mixture_finds_the_informative_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, c, d) = (120, 6, 4);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Tensor::from_fn(&[n, c, d], |i| {
        let (s, ch) = (i / (c * d), (i / d) % c);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let signal = if ch < 3 && i % d == 0 { 3.0 * (2.0 * labels[s] as f64 - 1.0) } else { 0.0 };
        signal + noise
    });
    let cfg = MoeConfig {
        experts: 3,
        epochs: 150,
        ..MoeConfig::default()
    };
    let head = train_moe(&x, &labels, 2, &cfg).unwrap();
    assert!(head.experts.iter().all(|e| top_k(&e.gate, 3).len() == 3));
    let correct = (0..n)
        .filter(|&s| {
            let cls = Tensor::new(&[c, d], x.data()[s * c * d..(s + 1) * c * d].to_vec()).unwrap();
            moe_forward(&cls, &head).unwrap().class == labels[s]
        })
        .count();
    assert!(correct as f64 / n as f64 > 0.9, "{correct}/{n}");
}

#[test]
fn knn_trivia() {
    let train = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.2], vec![0.3, -1.0]]).unwrap();
    let labels = [0, 1, 2, 1];
    let q = Tensor::from_rows(&[vec![-1.0, 0.2]]).unwrap();
    assert_eq!(knn_predict(&train, &labels, &q, 1).unwrap(), vec![2]);
    let many = Tensor::from_rows(&[vec![5.0, 5.0], vec![-3.0, 0.0]]).unwrap();
    assert_eq!(knn_predict(&train, &labels, &many, 4).unwrap(), vec![1, 1]);
    assert!(knn_predict(&Tensor::zeros(&[0, 2]), &[], &q, 1).is_err());
    assert!(knn_predict(&train, &labels, &q, 5).is_err());
}

#[test]
fn separated_clusters_are_perfectly_classified() {
    let (train, tl) = two_clusters(80, 6, 4);
    let (query, ql) = two_clusters(40, 6, 5);
    assert_eq!(knn_probe(&train, &tl, &query, &ql, 20).unwrap(), 1.0);
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let m = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let q = m.qr().q();
    Tensor::from_fn(&[d, d], |i| q[(i / d, i % d)])
}

#[test]
fn knn_is_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let train = gaussian(50, 5, &mut rng);
    let labels: Vec<usize> = (0..50).map(|_| rng.gen_range(0..3)).collect();
    let query = gaussian(30, 5, &mut rng);
    let q_labels: Vec<usize> = (0..30).map(|_| rng.gen_range(0..3)).collect();
    let rot = random_orthogonal(5, &mut rng);
    let before = knn_predict(&train, &labels, &query, 7).unwrap();
    let after = knn_predict(&train.matmul(&rot).unwrap(), &labels, &query.matmul(&rot).unwrap(), 7).unwrap();
    assert_eq!(before, after);
    assert_eq!(
        knn_probe(&train, &labels, &query, &q_labels, 7).unwrap(),
        knn_probe(&train.matmul(&rot).unwrap(), &labels, &query.matmul(&rot).unwrap(), &q_labels, 7).unwrap()
    );
}

#[test]
fn pca_matches_a_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = gaussian(50, 8, &mut rng);
    let pca = pca_patch_features(&x, 3).unwrap();
    let cov = covariance_matrix(&x).unwrap();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(8, 8, cov.data()));
    let mut oracle: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for k in 0..3 {
        assert!((pca.eigenvalues[k] - oracle[k]).abs() < 1e-6, "{k}: {} vs {}", pca.eigenvalues[k], oracle[k]);
    }
    for a in 0..3 {
        for b in 0..3 {
            let dot: f64 = pca.components[a].iter().zip(&pca.components[b]).map(|(u, v)| u * v).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-6);
        }
    }
    let s = &pca.scores;
    assert_eq!(s.shape(), &[50, 3]);
    for j in 0..3 {
        let col: Vec<f64> = (0..50).map(|r| s.at(&[r, j])).collect();
        assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(col.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }
}

#[test]
fn points_on_a_line_have_one_component() {
    let x = Tensor::from_fn(&[20, 4], |i| {
        let t = (i / 4) as f64;
        [1.0, 2.0, -1.0, 0.5][i % 4] * t + 3.0
    });
    let pca = pca_patch_features(&x, 3).unwrap();
    assert_eq!(pca.components.len(), 1);
    let total: f64 = covariance_matrix(&x).unwrap().data().iter().step_by(5).sum();
    assert!((pca.eigenvalues[0] / total - 1.0).abs() < 1e-9);
}

#[test]
fn isotropic_data_gives_finite_similar_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = gaussian(4000, 3, &mut rng);
    let pca = pca_patch_features(&x, 3).unwrap();
    assert_eq!(pca.components.len(), 3);
    assert!(pca.scores.data().iter().all(|v| v.is_finite()));
    assert!(pca.eigenvalues[0] / pca.eigenvalues[2] < 1.3, "{:?}", pca.eigenvalues);
}

#[test]
fn pca_exports() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pca = pca_patch_features(&gaussian(6, 4, &mut rng), 2).unwrap();
    let ppm = scores_to_ppm(&pca.scores, 2, 3).unwrap();
    assert!(ppm.starts_with(b"P6\n3 2\n255\n"));
    assert_eq!(ppm.len(), 11 + 6 * 3);
    let text = scores_to_text(&pca.scores, 2, 3).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap().split(' ').count(), 3);
    assert!(scores_to_ppm(&pca.scores, 3, 3).is_err());
    assert!(pca_patch_features(&gaussian(2, 4, &mut rng), 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn expert_order_does_not_change_the_prediction(seed in any::<u64>(), e in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, d, k) = (6, 4, 3);
        let experts: Vec<MoeExpert> = (0..e)
            .map(|_| MoeExpert {
                gate: (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                weight: gaussian(d, k, &mut rng),
                bias: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        let cls = gaussian(c, d, &mut rng);
        let head = MoeHead { experts: experts.clone(), k: 3 };
        let mut shuffled = experts;
        shuffled.shuffle(&mut rng);
        let other = MoeHead { experts: shuffled, k: 3 };
        prop_assert_eq!(moe_forward(&cls, &head).unwrap().class, moe_forward(&cls, &other).unwrap().class);
    }
}
