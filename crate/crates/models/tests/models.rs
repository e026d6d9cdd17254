//! Model-level contract tests on the tiny profile.

use avsr_autodiff::{grad_check, Tape, Tensor};
use avsr_layers::{all_tensors, Depth, ParamMap, ParamSet};
use avsr_models::{
    classify_sequence, AttentionFlags, ClipModel, FusedModel, Head, Modality, ModelConfig,
    StreamModel,
};
use avsr_oracles as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tiny_cfg() -> ModelConfig {
    ModelConfig::tiny()
}

fn video_batch(b: usize, cfg: &ModelConfig, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(&[b, 1, cfg.timesteps, cfg.spatial.0, cfg.spatial.1], 0.5, r).unwrap()
}

fn audio_batch(b: usize, cfg: &ModelConfig, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(&[b, 1, cfg.audio_len], 0.5, r).unwrap()
}

#[test]
fn stream_forward_shapes() {
    let cfg = tiny_cfg();
    let mut r = rng(1);
    let video = StreamModel::new(&cfg, Modality::Video, &mut r).unwrap();
    let audio = StreamModel::new(&cfg, Modality::Audio, &mut r).unwrap();
    let tape = Tape::no_grad();
    let v = video_batch(2, &cfg, &mut r);
    let a = audio_batch(2, &cfg, &mut r);
    let vp = video.forward_probs(&tape, &v, false).unwrap();
    let ap = audio.forward_probs(&tape, &a, false).unwrap();
    assert_eq!(vp.shape(), &[2, 7, cfg.classes]);
    assert_eq!(ap.shape(), &[2, 7, cfg.classes]);
    // Rows sum to one.
    for chunk in vp.to_vec().chunks(cfg.classes) {
        assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn stream_rejects_wrong_modality_shape() {
    let cfg = tiny_cfg();
    let mut r = rng(2);
    let video = StreamModel::new(&cfg, Modality::Video, &mut r).unwrap();
    let tape = Tape::no_grad();
    let a = audio_batch(1, &cfg, &mut r);
    assert!(video.forward_probs(&tape, &a, false).is_err());
}

#[test]
fn saturated_attention_equals_disabled_attention() {
    let mut with = tiny_cfg();
    with.attention = AttentionFlags::all(true);
    let mut without = tiny_cfg();
    without.attention = AttentionFlags::all(false);

    // Same seed: identical weights for the shared components.
    let m_with = StreamModel::new(&with, Modality::Audio, &mut rng(3)).unwrap();
    let m_without = StreamModel::new(&without, Modality::Audio, &mut rng(3)).unwrap();
    // Push the gate to saturation: sigmoid(+20) within 1e-8 of 1.
    m_with.attention.as_ref().unwrap().raw.update_data(|d| d.fill(20.0));

    let mut r = rng(4);
    let a = audio_batch(2, &with, &mut r);
    let tape = Tape::no_grad();
    let pw = m_with.forward_probs(&tape, &a, false).unwrap().to_vec();
    let po = m_without.forward_probs(&tape, &a, false).unwrap().to_vec();
    let max_d = pw.iter().zip(&po).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(max_d < 1e-8, "max diff {max_d}");
}

#[test]
fn stream_features_width_and_composition() {
    let cfg = tiny_cfg();
    let mut r = rng(5);
    let model = StreamModel::new(&cfg, Modality::Audio, &mut r).unwrap();
    let a = audio_batch(3, &cfg, &mut r);
    let tape = Tape::no_grad();
    let feats = model.stream_features(&tape, &a, false).unwrap();
    assert_eq!(feats.shape(), &[3, 7, 2 * cfg.gru_hidden]);

    // stream_forward == classifier over stream_features.
    let probs = model.forward_probs(&tape, &a, false).unwrap();
    let via_clf = model.classifier.probs(&tape, &feats).unwrap();
    let d = probs
        .to_vec()
        .iter()
        .zip(via_clf.to_vec())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(d < 1e-12);

    // Batch independence: row 1 of a batch of 3 equals a batch of 1.
    let av = a.to_vec();
    let one = Tensor::from_vec(&[1, 1, cfg.audio_len], av[cfg.audio_len..2 * cfg.audio_len].to_vec()).unwrap();
    let single = model.stream_features(&tape, &one, false).unwrap().to_vec();
    let row = &feats.to_vec()[7 * 64..2 * 7 * 64];
    let d = single.iter().zip(row).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d < 1e-10);
}

#[test]
fn fused_forward_contract() {
    let cfg = tiny_cfg();
    let mut r = rng(6);
    let model = FusedModel::new(&cfg, &mut r).unwrap();
    // Fusion BGRU consumes 4*gru_hidden features.
    assert_eq!(model.fusion.layers[0].fwd.input, 4 * cfg.gru_hidden);
    let v = video_batch(2, &cfg, &mut r);
    let a = audio_batch(2, &cfg, &mut r);
    let tape = Tape::no_grad();
    let probs = model.forward_probs(&tape, &v, &a, false).unwrap();
    assert_eq!(probs.shape(), &[2, 7, cfg.classes]);
    for chunk in probs.to_vec().chunks(cfg.classes) {
        assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    // Zeroed video still yields valid probability rows.
    let zero_v = Tensor::zeros(&[2, 1, 7, 24, 24]).unwrap();
    let probs = model.forward_probs(&tape, &zero_v, &a, false).unwrap();
    for chunk in probs.to_vec().chunks(cfg.classes) {
        assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    // Batch mismatch across modalities is an error.
    let a1 = audio_batch(1, &cfg, &mut r);
    assert!(model.forward_probs(&tape, &v, &a1, false).is_err());
}

#[test]
fn classify_sequence_matches_oracle_on_random_grids() {
    let mut r = rng(7);
    for _ in 0..100 {
        let steps = r.gen_range(1..6);
        let classes = r.gen_range(2..8);
        let mut probs = vec![0.0; steps * classes];
        for t in 0..steps {
            let row: Vec<f64> = (0..classes).map(|_| r.gen_range(0.01..1.0)).collect();
            let sum: f64 = row.iter().sum();
            for c in 0..classes {
                probs[t * classes + c] = row[c] / sum;
            }
        }
        let (label, conf) = classify_sequence(&probs, steps, classes).unwrap();
        let (olabel, oconf) = oracle::classify_by_average(&probs, steps, classes);
        assert_eq!(label, olabel);
        assert!((conf - oconf).abs() < 1e-12);
    }
}

#[test]
fn classify_sequence_permutation_and_duplication_invariance() {
    let mut r = rng(8);
    let (steps, classes) = (4usize, 5usize);
    let mut probs = vec![0.0; steps * classes];
    for t in 0..steps {
        let row: Vec<f64> = (0..classes).map(|_| r.gen_range(0.01..1.0)).collect();
        let sum: f64 = row.iter().sum();
        for c in 0..classes {
            probs[t * classes + c] = row[c] / sum;
        }
    }
    let (label, conf) = classify_sequence(&probs, steps, classes).unwrap();

    // Permute timesteps.
    let perm = [2usize, 0, 3, 1];
    let mut shuffled = vec![0.0; probs.len()];
    for (dst, &src) in perm.iter().enumerate() {
        shuffled[dst * classes..(dst + 1) * classes]
            .copy_from_slice(&probs[src * classes..(src + 1) * classes]);
    }
    let (l2, c2) = classify_sequence(&shuffled, steps, classes).unwrap();
    assert_eq!(label, l2);
    assert!((conf - c2).abs() < 1e-12);

    // Duplicate the full sequence.
    let mut doubled = probs.clone();
    doubled.extend_from_slice(&probs);
    let (l3, c3) = classify_sequence(&doubled, 2 * steps, classes).unwrap();
    assert_eq!(label, l3);
    assert!((conf - c3).abs() < 1e-12);
}

#[test]
fn fused_init_copies_stream_weights_verbatim() {
    let cfg = tiny_cfg();
    let mut r = rng(9);
    let video = StreamModel::new(&cfg, Modality::Video, &mut r).unwrap();
    let audio = StreamModel::new(&cfg, Modality::Audio, &mut r).unwrap();
    let video_snap = ParamMap::snapshot(&all_tensors(&video, ""));
    let audio_snap = ParamMap::snapshot(&all_tensors(&audio, ""));

    let mut init_rng = rng(10);
    let fused = FusedModel::from_stream_snapshots(&cfg, &audio_snap, &video_snap, &mut init_rng).unwrap();

    // The fused video branch reproduces the standalone video features.
    let mut r2 = rng(11);
    let v = video_batch(1, &cfg, &mut r2);
    let tape = Tape::no_grad();
    let standalone = video.stream_features(&tape, &v, false).unwrap().to_vec();
    let branch = fused.video.stream_features(&tape, &v, false).unwrap().to_vec();
    let d = standalone.iter().zip(&branch).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d < 1e-12, "max diff {d}");

    // Fresh fusion parameters differ across seeds.
    let fused_b = FusedModel::from_stream_snapshots(&cfg, &audio_snap, &video_snap, &mut rng(12)).unwrap();
    let pa = ParamMap::snapshot(&fused.fusion_params());
    let pb = ParamMap::snapshot(&fused_b.fusion_params());
    let (_, _, da) = &pa.entries()[0];
    let (_, _, db) = &pb.entries()[0];
    assert_ne!(da, db);
}

#[test]
fn fused_init_rejects_incompatible_snapshot() {
    let cfg = tiny_cfg();
    // Snapshot from a different GRU width cannot initialize this config.
    let mut other = ModelConfig::paper();
    other.classes = cfg.classes;
    let mut r = rng(13);
    let audio_small = StreamModel::new(&cfg, Modality::Audio, &mut r).unwrap();
    let video_small = StreamModel::new(&cfg, Modality::Video, &mut r).unwrap();
    let audio_snap = ParamMap::snapshot(&all_tensors(&audio_small, ""));
    let video_snap = ParamMap::snapshot(&all_tensors(&video_small, ""));
    // Sanity: the well-matched case works.
    assert!(FusedModel::from_stream_snapshots(&cfg, &audio_snap, &video_snap, &mut rng(14)).is_ok());
    // Truncated snapshot: drop entries.
    let truncated = ParamMap::from_entries(audio_snap.entries()[..3].to_vec());
    let err = FusedModel::from_stream_snapshots(&cfg, &truncated, &video_snap, &mut rng(15));
    assert!(err.is_err());
}

#[test]
fn ablation_grid_forward_backward_and_gradcheck() {
    // {attention on/off} x {depth 18/34} x {audio, video, fused}: a forward
    // and backward pass completes, and a sampled-parameter gradient check
    // passes on tiny random data.
    let mut seed = 100u64;
    for attention in [false, true] {
        for depth in [Depth::D18, Depth::D34] {
            let mut cfg = tiny_cfg();
            cfg.classes = 4;
            cfg.attention = AttentionFlags::all(attention);
            cfg.video_depth = depth;
            cfg.audio_depth = depth;
            for modality in ["audio", "video", "fused"] {
                seed += 1;
                let mut r = rng(seed);
                let labels = vec![0usize, 2];
                let v = video_batch(2, &cfg, &mut r);
                let a = audio_batch(2, &cfg, &mut r);

                let run = |f: &dyn Fn(&Tape) -> avsr_models::Result<(Tensor, usize)>,
                           params: Vec<(String, Tensor)>| {
                    // One full forward+backward pass.
                    let tape = Tape::new();
                    let (logits, rep) = f(&tape).unwrap();
                    let rep_labels: Vec<usize> =
                        labels.iter().flat_map(|&l| std::iter::repeat(l).take(rep)).collect();
                    let loss = tape.cross_entropy(&logits, &rep_labels).unwrap();
                    tape.backward(&loss).unwrap();
                    // Sampled gradient check over a parameter subset.
                    let subset: Vec<(String, Tensor)> = params
                        .into_iter()
                        .enumerate()
                        .filter(|(i, _)| i % 29 == 0)
                        .map(|(_, p)| p)
                        .collect();
                    let report = grad_check(
                        |t| {
                            let (logits, rep) = f(t).map_err(|_| avsr_autodiff::TensorError::NonFiniteEval)?;
                            let rep_labels: Vec<usize> = labels
                                .iter()
                                .flat_map(|&l| std::iter::repeat(l).take(rep))
                                .collect();
                            t.cross_entropy(&logits, &rep_labels)
                        },
                        &subset,
                        1e-4,
                        1e-4,
                        4,
                        seed,
                    )
                    .unwrap();
                    assert!(
                        report.pass,
                        "attention={attention} depth={depth:?} {modality}: worst {:?}",
                        report.worst()
                    );
                };

                match modality {
                    "audio" => {
                        let m = StreamModel::new(&cfg, Modality::Audio, &mut r).unwrap();
                        let params: Vec<(String, Tensor)> = {
                            let mut v2 = Vec::new();
                            m.collect_params("", &mut v2);
                            v2.into_iter().map(|p| (p.name, p.tensor)).collect()
                        };
                        run(&|t: &Tape| ClipModel::train_logits(&m, t, None, Some(&a), true), params);
                    }
                    "video" => {
                        let m = StreamModel::new(&cfg, Modality::Video, &mut r).unwrap();
                        let params: Vec<(String, Tensor)> = {
                            let mut v2 = Vec::new();
                            m.collect_params("", &mut v2);
                            v2.into_iter().map(|p| (p.name, p.tensor)).collect()
                        };
                        run(&|t: &Tape| ClipModel::train_logits(&m, t, Some(&v), None, true), params);
                    }
                    _ => {
                        let m = FusedModel::new(&cfg, &mut r).unwrap();
                        let params: Vec<(String, Tensor)> = {
                            let mut v2 = Vec::new();
                            m.collect_params("", &mut v2);
                            v2.into_iter().map(|p| (p.name, p.tensor)).collect()
                        };
                        run(&|t: &Tape| ClipModel::train_logits(&m, t, Some(&v), Some(&a), true), params);
                    }
                }
            }
        }
    }
}

#[test]
fn stage1_head_produces_sequence_logits() {
    let cfg = tiny_cfg();
    let mut r = rng(40);
    let mut m = StreamModel::new(&cfg, Modality::Audio, &mut r).unwrap();
    m.set_head(Head::TemporalConv);
    let a = audio_batch(3, &cfg, &mut r);
    let tape = Tape::no_grad();
    let (logits, rep) = StreamModel::train_logits(&m, &tape, &a, false).unwrap();
    assert_eq!(rep, 1);
    assert_eq!(logits.shape(), &[3, cfg.classes]);
    let probs = StreamModel::forward_probs(&m, &tape, &a, false).unwrap();
    assert_eq!(probs.shape(), &[3, 1, cfg.classes]);
}
