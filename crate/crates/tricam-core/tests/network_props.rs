//! Contract tests for the split network: fusion softmax behavior, the
//! undetected-channel gate, the joint-loss identity, optimizer determinism,
//! and gradient checking against central differences.

use tricam_core::network::{
    count_params, forward, grad_check, init_model, joint_loss, loss_and_grads, train_step,
    AdamState, BatchInput, ForwardOpts, TrainHyper, TriCamConfig,
};
use tricam_core::synth::{
    default_rig, render_eye, synth_dataset, synth_sample, ArtifactKind, EyeImage,
    EyeRenderParams, QualityArtifact, Sample, SceneConfig, NUM_CHANNELS,
};

fn small_batch(n: usize, seed: u64) -> (Vec<Sample>, tricam_core::geometry::Rig) {
    let rig = default_rig();
    let cfg = SceneConfig::desk_default(rig.clone());
    (synth_dataset(&cfg, n, seed), rig)
}

fn batch_of(samples: &[Sample], rig: &tricam_core::geometry::Rig) -> BatchInput {
    let refs: Vec<&Sample> = samples.iter().collect();
    BatchInput::from_samples(&refs, rig, None)
}

#[test]
fn identical_channels_get_uniform_weights() {
    let (mut data, rig) = small_batch(3, 5);
    // overwrite all six channels of each sample with one identical image
    for s in data.iter_mut() {
        let img = render_eye(&EyeRenderParams {
            yaw: 0.1,
            pitch: -0.05,
            openness: 1.0,
            artifact: QualityArtifact::NONE,
            noise_seed: 99,
        });
        for ch in s.channels.iter_mut() {
            ch.image = img.clone();
            ch.view = tricam_core::geometry::ViewCoord::at(900.0, 500.0);
        }
    }
    let model = init_model(&TriCamConfig::tiny(3)).unwrap();
    let out = forward(&model, &batch_of(&data, &rig), ForwardOpts::default()).unwrap();
    for s in 0..data.len() {
        for ch in 0..NUM_CHANNELS {
            assert!((out.fusion_weights[s * NUM_CHANNELS + ch] - 1.0 / 6.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn weights_sum_to_one_and_permute_with_channels() {
    let (data, rig) = small_batch(4, 11);
    let model = init_model(&TriCamConfig::tiny(7)).unwrap();
    let batch = batch_of(&data, &rig);
    let out = forward(&model, &batch, ForwardOpts::default()).unwrap();
    for s in 0..data.len() {
        let sum: f64 = out.fusion_weights[s * 6..(s + 1) * 6].iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        assert!(out.fusion_weights[s * 6..(s + 1) * 6].iter().all(|&w| w >= 0.0));
    }

    // permuting the six channels permutes the weights bit-exactly
    let perm = [3usize, 0, 5, 1, 4, 2];
    let mut permuted = batch.clone();
    for s in 0..batch.len {
        for (dst, &src) in perm.iter().enumerate() {
            for k in 0..3 {
                permuted.coords[(s * 6 + dst) * 3 + k] = batch.coords[(s * 6 + src) * 3 + k];
            }
            permuted.flags[s * 6 + dst] = batch.flags[s * 6 + src];
            let d = (s * 6 + dst) * 800;
            let o = (s * 6 + src) * 800;
            permuted.images[d..d + 800].copy_from_slice(&batch.images[o..o + 800]);
        }
    }
    let out_p = forward(&model, &permuted, ForwardOpts::default()).unwrap();
    for s in 0..batch.len {
        for (dst, &src) in perm.iter().enumerate() {
            let a = out_p.fusion_weights[s * 6 + dst];
            let b = out.fusion_weights[s * 6 + src];
            assert_eq!(a.to_bits(), b.to_bits(), "weight permutation mismatch");
        }
    }
}

#[test]
fn undetected_channel_is_invisible_to_outputs_and_gradients() {
    let (mut data, rig) = small_batch(2, 21);
    // force one channel undetected
    data[0].channels[2].view = tricam_core::geometry::ViewCoord::undetected();
    data[0].channels[2].image = EyeImage::black();
    let model = init_model(&TriCamConfig::tiny(5)).unwrap();

    let batch_a = batch_of(&data, &rig);
    let (loss_a, grads_a) = loss_and_grads(&model, &batch_a, ForwardOpts::default()).unwrap();
    let out_a = forward(&model, &batch_a, ForwardOpts::default()).unwrap();

    // scribble over the undetected channel's pixel content
    let mut batch_b = batch_a.clone();
    for (i, v) in batch_b.images[2 * 800..3 * 800].iter_mut().enumerate() {
        *v = (i % 7) as f64 / 7.0;
    }
    let (loss_b, grads_b) = loss_and_grads(&model, &batch_b, ForwardOpts::default()).unwrap();
    let out_b = forward(&model, &batch_b, ForwardOpts::default()).unwrap();

    assert_eq!(loss_a.joint.to_bits(), loss_b.joint.to_bits());
    for (a, b) in out_a.gaze_pred.iter().zip(&out_b.gaze_pred) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in grads_a.iter().zip(&grads_b) {
        assert_eq!(a.to_bits(), b.to_bits(), "gradient depends on masked pixels");
    }
}

#[test]
fn all_channels_undetected_still_finite_with_zero_image_gradients() {
    let (mut data, rig) = small_batch(1, 33);
    for ch in data[0].channels.iter_mut() {
        ch.view = tricam_core::geometry::ViewCoord::undetected();
        ch.image = EyeImage::black();
    }
    let model = init_model(&TriCamConfig::tiny(9)).unwrap();
    let batch = batch_of(&data, &rig);
    let out = forward(&model, &batch, ForwardOpts::default()).unwrap();
    assert!(out.gaze_pred.iter().all(|v| v.is_finite()));
    // weights still sum to 1 (all-equal constant logits)
    let sum: f64 = out.fusion_weights.iter().sum();
    assert!((sum - 1.0).abs() <= 1e-12);

    let (_, grads) = loss_and_grads(&model, &batch, ForwardOpts::default()).unwrap();
    for name in
        ["cnn.conv1.w", "cnn.conv2.w", "cnn.fc.w", "disc.conv1.w", "disc.conv2.w", "disc.fc1.w", "disc.fc2.w", "disc.fc2.b"]
    {
        let blk = model.block(name).unwrap();
        let g = &grads[blk.offset..blk.offset + blk.len()];
        assert!(g.iter().all(|&v| v == 0.0), "{name} received gradient from masked pixels");
    }
}

#[test]
fn joint_loss_identity_and_ratio_zero() {
    let (data, rig) = small_batch(6, 44);
    let model = init_model(&TriCamConfig::tiny(13)).unwrap();
    let batch = batch_of(&data, &rig);
    let out = forward(&model, &batch, ForwardOpts::default()).unwrap();
    for ratio in [0.0, 0.1, 0.37] {
        let lb = joint_loss(&out, &batch, ratio).unwrap();
        let recomputed = lb.main + ratio * lb.aux.iter().sum::<f64>();
        assert!((lb.joint - recomputed).abs() <= 1e-12);
        if ratio == 0.0 {
            assert_eq!(lb.joint, lb.main);
        }
    }
    // hand case: main 1.0, six aux 0.5 each, ratio 0.1 → joint 1.3
    let hand = 1.0 + 0.1 * (6.0 * 0.5);
    assert!((hand - 1.3f64).abs() < 1e-12);
}

#[test]
fn perfect_predictions_give_zero_loss() {
    let (data, rig) = small_batch(3, 55);
    let batch = batch_of(&data, &rig);
    let model = init_model(&TriCamConfig::tiny(1)).unwrap();
    let mut out = forward(&model, &batch, ForwardOpts::default()).unwrap();
    out.gaze_pred = batch.targets.clone();
    out.aux_preds = batch.aux_targets.clone();
    let lb = joint_loss(&out, &batch, 0.1).unwrap();
    assert_eq!(lb.main, 0.0);
    assert!(lb.aux.iter().all(|&a| a == 0.0));
    assert_eq!(lb.joint, 0.0);
}

#[test]
fn aux_head_gradients_scale_linearly_with_ratio() {
    let (data, rig) = small_batch(4, 66);
    let batch = batch_of(&data, &rig);
    let mut cfg = TriCamConfig::tiny(17);
    cfg.aux_ratio = 0.1;
    let model_a = init_model(&cfg).unwrap();
    cfg.aux_ratio = 0.2;
    let model_b = init_model(&cfg).unwrap();
    assert_eq!(model_a.params, model_b.params, "ratio must not affect init");
    let (_, g_a) = loss_and_grads(&model_a, &batch, ForwardOpts::default()).unwrap();
    let (_, g_b) = loss_and_grads(&model_b, &batch, ForwardOpts::default()).unwrap();
    for m in 0..3 {
        for part in ["fc1.w", "fc1.b", "fc2.w", "fc2.b"] {
            let blk = model_a.block(&format!("aux{m}.{part}")).unwrap();
            for i in blk.offset..blk.offset + blk.len() {
                assert_eq!((2.0 * g_a[i]).to_bits(), g_b[i].to_bits());
            }
        }
    }
}

#[test]
fn train_step_is_deterministic_and_lr_zero_is_identity() {
    let (data, rig) = small_batch(8, 77);
    let batch = batch_of(&data, &rig);
    let cfg = TriCamConfig::tiny(23);

    let run = |lr: f64| {
        let mut model = init_model(&cfg).unwrap();
        let mut adam = AdamState::new(count_params(&model));
        let hyper = TrainHyper { lr, ..TrainHyper::default() };
        let loss =
            train_step(&mut model, &batch, &mut adam, &hyper, ForwardOpts::default()).unwrap();
        (model, loss)
    };

    let before = init_model(&cfg).unwrap();
    let (after_zero, _) = run(0.0);
    assert_eq!(before.params, after_zero.params, "lr 0 must not move parameters");

    let (m1, l1) = run(1e-3);
    let (m2, l2) = run(1e-3);
    assert_eq!(m1.params, m2.params);
    assert_eq!(l1.joint.to_bits(), l2.joint.to_bits());
}

#[test]
fn one_small_step_decreases_the_loss_on_a_fixed_batch() {
    let (data, rig) = small_batch(16, 88);
    let batch = batch_of(&data, &rig);
    let mut model = init_model(&TriCamConfig::tiny(29)).unwrap();
    let mut adam = AdamState::new(count_params(&model));
    let hyper = TrainHyper { lr: 1e-4, ..TrainHyper::default() };
    let first =
        train_step(&mut model, &batch, &mut adam, &hyper, ForwardOpts::default()).unwrap();
    let second =
        train_step(&mut model, &batch, &mut adam, &hyper, ForwardOpts::default()).unwrap();
    assert!(
        second.joint < first.joint,
        "joint loss did not decrease: {} -> {}",
        first.joint,
        second.joint
    );
}

#[test]
fn grad_check_on_a_tiny_config() {
    let (data, rig) = small_batch(3, 99);
    let batch = batch_of(&data, &rig);
    let cfg = TriCamConfig::tiny(31);
    let n = tricam_core::network::count_params_for(&cfg).unwrap();
    assert!(n <= 5000, "tiny config grew too large: {n}");
    let err = grad_check(&cfg, &batch, 1e-6).unwrap();
    assert!(err < 1e-5, "gradient check failed: {err}");
}

#[test]
fn grad_check_truncation_grows_with_epsilon() {
    let (data, rig) = small_batch(2, 101);
    let batch = batch_of(&data, &rig);
    let cfg = TriCamConfig::tiny(37);
    let fine = grad_check(&cfg, &batch, 1e-6).unwrap();
    let coarse = grad_check(&cfg, &batch, 1e-2).unwrap();
    assert!(coarse > fine, "coarse eps {coarse} should beat fine eps {fine}");
}

#[test]
fn dropping_detected_flags_matches_black_images() {
    // a channel gated by drop_camera behaves exactly like one that was
    // never detected
    let rig = default_rig();
    let cfg = SceneConfig::desk_default(rig.clone());
    let s = synth_sample(&cfg, 4242);
    let mut undetected = s.clone();
    undetected.channels[2].view = tricam_core::geometry::ViewCoord::undetected();
    undetected.channels[2].image = EyeImage::black();
    undetected.channels[3].view = tricam_core::geometry::ViewCoord::undetected();
    undetected.channels[3].image = EyeImage::black();

    let dropped = BatchInput::from_samples(&[&s], &rig, Some(1));
    let blacked = BatchInput::from_samples(&[&undetected], &rig, None);
    assert_eq!(dropped, blacked);
}

#[test]
fn artifact_kinds_are_recorded_per_channel() {
    let rig = default_rig();
    let cfg = SceneConfig::artifact_rich(rig.clone());
    let data = synth_dataset(&cfg, 200, 7);
    let mut seen = std::collections::BTreeSet::new();
    for s in &data {
        for ch in &s.channels {
            seen.insert(format!("{:?}", ch.artifact.kind));
        }
    }
    for kind in [
        ArtifactKind::None,
        ArtifactKind::Blink,
        ArtifactKind::Closed,
        ArtifactKind::Reflection,
        ArtifactKind::Occlusion,
    ] {
        assert!(seen.contains(&format!("{kind:?}")), "never drew {kind:?}");
    }
}
