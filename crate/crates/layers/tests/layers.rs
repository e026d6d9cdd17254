//! Layer contract tests: hand oracles, symmetry checks and gradient checks.

use avsr_autodiff::{grad_check, Tape, Tensor};
use avsr_layers::{
    all_tensors, temporal, AttentionSite, BgruLayer, Classifier, Depth, ParamSet, ResNet1d,
    ResNet2d, SpatiotemporalFrontend, TemporalAttention, TemporalConvBackend,
};
use avsr_oracles as oracle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- front-end ------------------------------------------------------------

#[test]
fn frontend_paper_scale_shape() {
    let mut r = rng(1);
    let fe = SpatiotemporalFrontend::new(64, &mut r).unwrap();
    let x = Tensor::zeros(&[1, 1, 29, 96, 96]).unwrap();
    let tape = Tape::no_grad();
    let out = fe.forward(&tape, &x, false).unwrap();
    assert_eq!(out.shape(), &[1, 64, 29, 48, 48]);
}

#[test]
fn frontend_gradients_pass() {
    let mut r = rng(2);
    let fe = SpatiotemporalFrontend::new(2, &mut r).unwrap();
    let x = Tensor::randn(&[1, 1, 3, 9, 9], 1.0, &mut r).unwrap().requiring_grad();
    let w = Tensor::randn(&[1, 2, 3, 5, 5], 1.0, &mut r).unwrap();
    let mut params = vec![("input".to_string(), x.clone())];
    let mut named = Vec::new();
    fe.collect_params("frontend", &mut named);
    params.extend(named.into_iter().map(|p| (p.name, p.tensor)));
    let report = grad_check(
        |t| {
            let out = fe.forward(t, &x, true)?;
            let prod = t.mul(&out, &w)?;
            t.sum(&prod)
        },
        &params,
        1e-4,
        1e-4,
        24,
        3,
    )
    .unwrap();
    assert!(report.pass, "worst {:?}", report.worst());
}

// ---- 2D backbone ----------------------------------------------------------

#[test]
fn resnet2d_preserves_timesteps_and_shares_weights() {
    let mut r = rng(4);
    let net = ResNet2d::new(3, [4, 4, 8, 8], Depth::D18, &mut r).unwrap();
    let tape = Tape::no_grad();
    for steps in [1usize, 3, 5] {
        let x = Tensor::full(&[2, 3, steps, 12, 12], 0.37).unwrap();
        let out = net.forward_per_timestep(&tape, &x, false).unwrap();
        assert_eq!(out.shape(), &[2, steps, 8]);
        // Constant input: every timestep yields the same feature vector.
        let ov = out.to_vec();
        for b in 0..2 {
            for t in 1..steps {
                let t0 = &ov[b * steps * 8..b * steps * 8 + 8];
                let tt = &ov[(b * steps + t) * 8..(b * steps + t) * 8 + 8];
                assert!(max_abs_diff(t0, tt) < 1e-12);
            }
        }
    }
}

#[test]
fn resnet_depths_share_output_shape() {
    let mut r = rng(5);
    let d18 = ResNet2d::new(2, [4, 4, 4, 8], Depth::D18, &mut r).unwrap();
    let d34 = ResNet2d::new(2, [4, 4, 4, 8], Depth::D34, &mut r).unwrap();
    let x = Tensor::zeros(&[1, 2, 2, 12, 12]).unwrap();
    let tape = Tape::no_grad();
    let a = d18.forward_per_timestep(&tape, &x, false).unwrap();
    let b = d34.forward_per_timestep(&tape, &x, false).unwrap();
    assert_eq!(a.shape(), b.shape());
    // Depth shows up in parameter count.
    let mut p18 = Vec::new();
    let mut p34 = Vec::new();
    d18.collect_params("", &mut p18);
    d34.collect_params("", &mut p34);
    assert!(p34.len() > p18.len());
}

#[test]
fn residual_block_with_zeroed_branch_is_activation_of_shortcut() {
    use avsr_layers::BasicBlock2d;
    let mut r = rng(6);
    let block = BasicBlock2d::new(3, 3, 1, &mut r).unwrap();
    // Zero the branch conv weights; batchnorm then emits its beta (zero).
    let mut named = Vec::new();
    block.collect_params("", &mut named);
    for p in &named {
        if p.name.contains("weight") {
            p.tensor.update_data(|d| d.fill(0.0));
        }
    }
    let x = Tensor::randn(&[2, 3, 5, 5], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let out = block.forward(&tape, &x, false).unwrap();
    let want: Vec<f64> = x.to_vec().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    assert!(max_abs_diff(&out.to_vec(), &want) < 1e-12);
}

#[test]
fn resnet2d_batch_independence_in_eval() {
    let mut r = rng(7);
    let net = ResNet2d::new(2, [4, 4, 8, 8], Depth::D18, &mut r).unwrap();
    let x = Tensor::randn(&[3, 2, 10, 10], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let batched = net.forward(&tape, &x, false).unwrap();
    let xv = x.to_vec();
    for b in 0..3 {
        let item = Tensor::from_vec(&[1, 2, 10, 10], xv[b * 200..(b + 1) * 200].to_vec()).unwrap();
        let single = net.forward(&tape, &item, false).unwrap();
        let bb = &batched.to_vec()[b * 8..(b + 1) * 8];
        assert!(max_abs_diff(&single.to_vec(), bb) < 1e-10);
    }
}

// ---- 1D backbone ----------------------------------------------------------

#[test]
fn resnet1d_paper_and_tiny_window_counts() {
    let mut r = rng(8);
    let net = ResNet1d::new([4, 4, 4, 8], Depth::D18, &mut r).unwrap();
    let tape = Tape::no_grad();
    // 1.16 s at 16 kHz, 29 windows.
    let wav = Tensor::zeros(&[1, 1, 18560]).unwrap();
    let out = net.forward_to_steps(&tape, &wav, 29, false).unwrap();
    assert_eq!(out.shape(), &[1, 29, 8]);
    // Tiny profile.
    let wav = Tensor::zeros(&[2, 1, 1024]).unwrap();
    let out = net.forward_to_steps(&tape, &wav, 7, false).unwrap();
    assert_eq!(out.shape(), &[2, 7, 8]);
}

#[test]
fn resnet1d_constant_waveform_gives_identical_steps() {
    let mut r = rng(9);
    let net = ResNet1d::new([4, 4, 4, 8], Depth::D18, &mut r).unwrap();
    let wav = Tensor::full(&[1, 1, 1024], 0.23).unwrap();
    let tape = Tape::no_grad();
    let out = net.forward_to_steps(&tape, &wav, 7, false).unwrap();
    let ov = out.to_vec();
    for t in 1..7 {
        assert!(max_abs_diff(&ov[0..8], &ov[t * 8..(t + 1) * 8]) < 1e-10, "step {t}");
    }
}

#[test]
fn resnet1d_rejects_short_waveform() {
    let mut r = rng(10);
    let net = ResNet1d::new([4, 4, 4, 8], Depth::D18, &mut r).unwrap();
    let wav = Tensor::zeros(&[1, 1, 5]).unwrap();
    let tape = Tape::no_grad();
    assert!(net.forward_to_steps(&tape, &wav, 7, false).is_err());
}

// ---- BGRU -----------------------------------------------------------------

#[test]
fn bgru_single_step_width() {
    let mut r = rng(11);
    let layer = BgruLayer::new(5, 4, &mut r).unwrap();
    let x = Tensor::randn(&[2, 1, 5], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let out = layer.forward(&tape, &x).unwrap();
    assert_eq!(out.shape(), &[2, 1, 8]);
}

#[test]
fn bgru_matches_hand_unrolled_recurrence() {
    let mut r = rng(12);
    let (steps, feat, hidden) = (3usize, 4usize, 3usize);
    let layer = BgruLayer::new(feat, hidden, &mut r).unwrap();
    let x = Tensor::randn(&[1, steps, feat], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let out = layer.forward(&tape, &x).unwrap();

    let mut named = Vec::new();
    layer.collect_params("", &mut named);
    let pick = |name: &str| -> Vec<f64> {
        named.iter().find(|p| p.name == name).unwrap_or_else(|| panic!("{name}")).tensor.to_vec()
    };
    let xv = x.to_vec();
    for (dir, reversed) in [("fwd", false), ("bwd", true)] {
        let w = oracle::GruWeights {
            w_update: &pick(&format!("{dir}.w_update")),
            u_update: &pick(&format!("{dir}.u_update")),
            b_update: &pick(&format!("{dir}.b_update")),
            w_reset: &pick(&format!("{dir}.w_reset")),
            u_reset: &pick(&format!("{dir}.u_reset")),
            b_reset: &pick(&format!("{dir}.b_reset")),
            w_cand: &pick(&format!("{dir}.w_cand")),
            u_cand: &pick(&format!("{dir}.u_cand")),
            b_cand: &pick(&format!("{dir}.b_cand")),
        };
        // The backward direction consumes the sequence reversed.
        let seq: Vec<f64> = if reversed {
            (0..steps).rev().flat_map(|t| xv[t * feat..(t + 1) * feat].to_vec()).collect()
        } else {
            xv.clone()
        };
        let states = oracle::gru_unroll(&seq, steps, feat, hidden, &w);
        let ov = out.to_vec();
        for t in 0..steps {
            // Hand state for original position t.
            let hand_t = if reversed { steps - 1 - t } else { t };
            let hand = &states[hand_t * hidden..(hand_t + 1) * hidden];
            let offset = if reversed { hidden } else { 0 };
            let got = &ov[t * 2 * hidden + offset..t * 2 * hidden + offset + hidden];
            assert!(max_abs_diff(hand, got) < 1e-10, "{dir} step {t}");
        }
    }
}

#[test]
fn bgru_reversing_input_swaps_direction_halves() {
    let mut r = rng(13);
    let (steps, feat, hidden) = (4usize, 3usize, 2usize);
    let layer = BgruLayer::new(feat, hidden, &mut r).unwrap();
    // Make both directions share weights so the symmetry is exact.
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    layer.fwd.collect_params("", &mut fwd);
    layer.bwd.collect_params("", &mut bwd);
    for (f, b) in fwd.iter().zip(bwd.iter()) {
        b.tensor.set_data(&f.tensor.to_vec());
    }
    let x = Tensor::randn(&[1, steps, feat], 1.0, &mut r).unwrap();
    let xv = x.to_vec();
    let rev: Vec<f64> = (0..steps).rev().flat_map(|t| xv[t * feat..(t + 1) * feat].to_vec()).collect();
    let xr = Tensor::from_vec(&[1, steps, feat], rev).unwrap();
    let tape = Tape::no_grad();
    let a = layer.forward(&tape, &x).unwrap().to_vec();
    let b = layer.forward(&tape, &xr).unwrap().to_vec();
    // forward-half of x at step t == backward-half of reversed x at step T-1-t.
    for t in 0..steps {
        let fa = &a[t * 2 * hidden..t * 2 * hidden + hidden];
        let rb = &b[(steps - 1 - t) * 2 * hidden + hidden..(steps - 1 - t) * 2 * hidden + 2 * hidden];
        assert!(max_abs_diff(fa, rb) < 1e-12, "step {t}");
    }
}

#[test]
fn bgru_output_depends_on_full_sequence() {
    let mut r = rng(14);
    let layer = BgruLayer::new(2, 3, &mut r).unwrap();
    let base = Tensor::randn(&[1, 3, 2], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let out0 = layer.forward(&tape, &base).unwrap().to_vec();
    for perturb_t in 0..3 {
        let mut data = base.to_vec();
        data[perturb_t * 2] += 0.5;
        let x = Tensor::from_vec(&[1, 3, 2], data).unwrap();
        let out = layer.forward(&tape, &x).unwrap().to_vec();
        for t in 0..3 {
            let d = max_abs_diff(&out0[t * 6..(t + 1) * 6], &out[t * 6..(t + 1) * 6]);
            assert!(d > 1e-9, "perturbing step {perturb_t} left output step {t} unchanged");
        }
    }
}

#[test]
fn bgru_gradients_pass() {
    let mut r = rng(15);
    let layer = BgruLayer::new(3, 2, &mut r).unwrap();
    let x = Tensor::randn(&[2, 3, 3], 1.0, &mut r).unwrap().requiring_grad();
    let w = Tensor::randn(&[2, 3, 4], 1.0, &mut r).unwrap();
    let mut named = Vec::new();
    layer.collect_params("bgru", &mut named);
    let mut params = vec![("input".to_string(), x.clone())];
    params.extend(named.into_iter().map(|p| (p.name, p.tensor)));
    let report = grad_check(
        |t| {
            let out = layer.forward(t, &x)?;
            let prod = t.mul(&out, &w)?;
            t.sum(&prod)
        },
        &params,
        1e-5,
        1e-4,
        12,
        16,
    )
    .unwrap();
    assert!(report.pass, "worst {:?}", report.worst());
}

// ---- attention ------------------------------------------------------------

#[test]
fn attention_zero_raw_halves_features() {
    let attn = TemporalAttention::new(4, AttentionSite::Video).unwrap();
    let mut r = rng(17);
    let x = Tensor::randn(&[2, 4, 3], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let out = attn.apply(&tape, &x).unwrap();
    let want: Vec<f64> = x.to_vec().iter().map(|v| v / 2.0).collect();
    assert!(max_abs_diff(&out.to_vec(), &want) < 1e-12);
}

#[test]
fn attention_saturated_gates() {
    let attn = TemporalAttention::new(3, AttentionSite::Audio).unwrap();
    attn.raw.set_data(&[-1e6, 20.0, 20.0]);
    let mut r = rng(18);
    let x = Tensor::randn(&[1, 3, 5], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let out = attn.apply(&tape, &x).unwrap();
    let (ov, xv) = (out.to_vec(), x.to_vec());
    for f in 0..5 {
        assert!(ov[f].abs() < 1e-12, "closed gate leaks");
        assert!((ov[5 + f] - xv[5 + f]).abs() < 1e-8, "open gate is not identity");
        assert!((ov[10 + f] - xv[10 + f]).abs() < 1e-8);
    }
}

#[test]
fn attention_length_mismatch_errors() {
    let attn = TemporalAttention::new(3, AttentionSite::Video).unwrap();
    let x = Tensor::zeros(&[1, 4, 2]).unwrap();
    let tape = Tape::no_grad();
    assert!(attn.apply(&tape, &x).is_err());
}

#[test]
fn attention_gradients_pass() {
    let attn = TemporalAttention::new(4, AttentionSite::Combined).unwrap();
    let mut r = rng(19);
    attn.raw.set_data(&[0.3, -0.2, 0.5, 0.0]);
    let x = Tensor::randn(&[2, 4, 3], 1.0, &mut r).unwrap();
    let params = vec![("attention.raw".to_string(), attn.raw.clone())];
    let report = grad_check(
        |t| {
            let out = attn.apply(t, &x)?;
            t.sum(&out)
        },
        &params,
        1e-5,
        1e-4,
        4,
        20,
    )
    .unwrap();
    assert!(report.pass, "worst {:?}", report.worst());
}

// ---- temporal conv back-end ------------------------------------------------

#[test]
fn tconv_shape_contract() {
    let mut r = rng(21);
    let backend = TemporalConvBackend::new(6, 5, &mut r).unwrap();
    let x = Tensor::randn(&[3, 7, 6], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let out = backend.forward(&tape, &x, false).unwrap();
    assert_eq!(out.shape(), &[3, 5]);
    // Too-short sequences are rejected.
    let short = Tensor::zeros(&[1, 4, 6]).unwrap();
    assert!(backend.forward(&tape, &short, false).is_err());
}

#[test]
fn tconv_feature_permutation_equivariance() {
    let mut r = rng(22);
    let f = 4usize;
    let backend = TemporalConvBackend::new(f, 3, &mut r).unwrap();
    let x = Tensor::randn(&[1, 6, f], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let base = backend.forward(&tape, &x, false).unwrap().to_vec();

    // Permute input features and the first conv's input-channel axis by the
    // same permutation; logits must be unchanged.
    let perm = [2usize, 0, 3, 1];
    let xv = x.to_vec();
    let mut xp = vec![0.0; xv.len()];
    for t in 0..6 {
        for (new_c, &old_c) in perm.iter().enumerate() {
            xp[t * f + new_c] = xv[t * f + old_c];
        }
    }
    let xp = Tensor::from_vec(&[1, 6, f], xp).unwrap();
    let wv = backend.conv1.weight.to_vec(); // [f, f, k]
    let k = 5usize;
    let mut wp = vec![0.0; wv.len()];
    for co in 0..f {
        for (new_ci, &old_ci) in perm.iter().enumerate() {
            for kk in 0..k {
                wp[(co * f + new_ci) * k + kk] = wv[(co * f + old_ci) * k + kk];
            }
        }
    }
    backend.conv1.weight.set_data(&wp);
    let permuted = backend.forward(&tape, &xp, false).unwrap().to_vec();
    assert!(max_abs_diff(&base, &permuted) < 1e-10);
}

#[test]
fn tconv_gradients_pass() {
    let mut r = rng(23);
    let backend = TemporalConvBackend::new(3, 4, &mut r).unwrap();
    let x = Tensor::randn(&[2, 5, 3], 1.0, &mut r).unwrap().requiring_grad();
    let labels = vec![1usize, 3];
    let mut named = Vec::new();
    backend.collect_params("tconv", &mut named);
    let mut params = vec![("input".to_string(), x.clone())];
    params.extend(named.into_iter().map(|p| (p.name, p.tensor)));
    let report = grad_check(
        |t| {
            let logits = backend.forward(t, &x, true)?;
            t.cross_entropy(&logits, &labels)
        },
        &params,
        1e-5,
        1e-4,
        16,
        24,
    )
    .unwrap();
    assert!(report.pass, "worst {:?}", report.worst());
}

// ---- classifier -----------------------------------------------------------

#[test]
fn classifier_uniform_with_zero_weights() {
    let mut r = rng(25);
    let clf = Classifier::new(4, 5, &mut r).unwrap();
    clf.weight.update_data(|d| d.fill(0.0));
    clf.bias.update_data(|d| d.fill(0.0));
    let x = Tensor::randn(&[2, 3, 4], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let probs = clf.probs(&tape, &x).unwrap();
    for v in probs.to_vec() {
        assert!((v - 0.2).abs() < 1e-12);
    }
}

#[test]
fn classifier_identical_timesteps_identical_rows() {
    let mut r = rng(26);
    let clf = Classifier::new(3, 4, &mut r).unwrap();
    let row = [0.5, -1.0, 2.0];
    let mut data = Vec::new();
    for _ in 0..2 {
        data.extend_from_slice(&row);
    }
    let x = Tensor::from_vec(&[1, 2, 3], data).unwrap();
    let tape = Tape::no_grad();
    let probs = clf.probs(&tape, &x).unwrap().to_vec();
    assert!(max_abs_diff(&probs[0..4], &probs[4..8]) < 1e-15);
}

#[test]
fn classifier_matches_affine_softmax_oracle() {
    let mut r = rng(27);
    let clf = Classifier::new(3, 4, &mut r).unwrap();
    let x = Tensor::randn(&[1, 2, 3], 1.0, &mut r).unwrap();
    let tape = Tape::no_grad();
    let got = clf.probs(&tape, &x).unwrap().to_vec();
    let want = oracle::affine_softmax(&x.to_vec(), &clf.weight.to_vec(), &clf.bias.to_vec(), 2, 3, 4);
    assert!(max_abs_diff(&got, &want) < 1e-12);
}

// ---- segment pooling -------------------------------------------------------

#[test]
fn segment_mean_partition_oracle() {
    // Feature value = position index; segment means must equal span means.
    let len = 16usize;
    let data: Vec<f64> = (0..len).map(|i| i as f64).collect();
    let x = Tensor::from_vec(&[1, 1, len], data).unwrap();
    let tape = Tape::no_grad();
    let out = temporal::segment_mean(&tape, &x, 7).unwrap();
    assert_eq!(out.shape(), &[1, 7, 1]);
    let bounds = temporal::segment_bounds(len, 7);
    for (t, (lo, hi)) in bounds.iter().enumerate() {
        let want: f64 = (*lo..*hi).map(|i| i as f64).sum::<f64>() / (hi - lo) as f64;
        assert!((out.to_vec()[t] - want).abs() < 1e-12);
    }
}

// ---- cross-layer properties -------------------------------------------------

#[test]
fn layer_forwards_are_deterministic_across_constructions() {
    let build_and_run = |seed: u64| -> Vec<u64> {
        let mut r = rng(seed);
        let net = ResNet1d::new([4, 4, 4, 8], Depth::D18, &mut r).unwrap();
        let wav = Tensor::randn(&[1, 1, 512], 0.5, &mut r).unwrap();
        let tape = Tape::no_grad();
        let out = net.forward_to_steps(&tape, &wav, 7, false).unwrap();
        out.to_vec().iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(build_and_run(77), build_and_run(77));
}

#[test]
fn param_and_buffer_names_are_unique() {
    let mut r = rng(30);
    let net = ResNet2d::new(2, [4, 4, 8, 8], Depth::D34, &mut r).unwrap();
    let named = all_tensors(&net, "backbone");
    let mut names: Vec<&str> = named.iter().map(|p| p.name.as_str()).collect();
    let before = names.len();
    names.sort();
    names.dedup();
    assert_eq!(before, names.len());
}
