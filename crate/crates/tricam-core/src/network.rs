//! The split gaze network.
//!
//! Upper branch (camera–eye geometry): per-eye camera-pair features feed
//! both the three auxiliary "predict the masked camera" heads and, after
//! concatenation, the coordinate trunk. Each pair feature sees only its own
//! two cameras, so auxiliary supervision shapes layers the main path also
//! uses without leaking the masked camera's coordinates.
//!
//! Lower branch (eye–screen geometry): one shared CNN embeds each of the six
//! 40×20 crops; a shared discriminator (two conv and two dense layers, one
//! scalar out) scores them, the six scores pass through one joint softmax,
//! and the weighted features go through a reduction layer into the final
//! decision MLP together with the coordinate features.
//!
//! Undetected channels are multiplied by zero before the layer that merges
//! them, so their pixels influence neither the prediction nor any gradient.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Id, Tape};
use crate::error::NetworkError;
use crate::geometry::Rig;
use crate::synth::{Sample, EYE_IMG_H, EYE_IMG_LEN, EYE_IMG_W, NUM_CHANNELS};

/// Aux head index `m` predicts camera `m` from the other two, per eye.
pub const NUM_AUX_HEADS: usize = 3;

/// Fixed sub-batch size for gradient accumulation. Chunks are reduced in
/// index order, so training is bit-identical with any thread count.
pub const GRAD_CHUNK: usize = 32;

/// Learnable scalars in a dense layer with bias.
pub const fn dense_param_count(inputs: usize, outputs: usize) -> usize {
    inputs * outputs + outputs
}

/// Architecture and initialization knobs. The defaults are sized so the
/// total learnable parameter count lands next to 1,245,113.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriCamConfig {
    /// Shared image CNN: two conv layers then a dense feature layer.
    pub cnn_channels: [usize; 2],
    pub cnn_feature: usize,
    /// Shared discriminator: two conv layers, hidden dense, scalar out.
    pub disc_channels: [usize; 2],
    pub disc_hidden: usize,
    /// Per-eye camera-pair feature width.
    pub pair_feature: usize,
    /// Hidden width of each auxiliary head.
    pub aux_hidden: usize,
    /// Coordinate trunk widths.
    pub coord_trunk: [usize; 2],
    /// Reduction layer output (shrinks the 6·feature image block).
    pub reduction: usize,
    /// Final decision MLP hidden widths.
    pub final_mlp: [usize; 2],
    /// Convolution kernel size (square, valid padding).
    pub kernel: usize,
    /// Weight on each auxiliary loss inside the joint loss.
    pub aux_ratio: f64,
    pub init_seed: u64,
}

impl Default for TriCamConfig {
    fn default() -> Self {
        TriCamConfig {
            cnn_channels: [8, 16],
            cnn_feature: 256,
            disc_channels: [6, 8],
            disc_hidden: 64,
            pair_feature: 16,
            aux_hidden: 32,
            coord_trunk: [128, 128],
            reduction: 440,
            final_mlp: [512, 256],
            kernel: 3,
            aux_ratio: 0.1,
            init_seed: 1,
        }
    }
}

impl TriCamConfig {
    /// A deliberately tiny variant (a few thousand parameters) for gradient
    /// checking and fast unit tests.
    pub fn tiny(init_seed: u64) -> Self {
        TriCamConfig {
            cnn_channels: [2, 3],
            cnn_feature: 8,
            disc_channels: [2, 2],
            disc_hidden: 6,
            pair_feature: 5,
            aux_hidden: 6,
            coord_trunk: [10, 8],
            reduction: 10,
            final_mlp: [12, 8],
            kernel: 3,
            aux_ratio: 0.1,
            init_seed,
        }
    }

    /// A mid-sized variant for the reduced training protocols (ablations,
    /// sweeps) where the full-width model would be needlessly slow.
    pub fn small(init_seed: u64) -> Self {
        TriCamConfig {
            cnn_channels: [6, 12],
            cnn_feature: 48,
            disc_channels: [4, 8],
            disc_hidden: 24,
            pair_feature: 12,
            aux_hidden: 24,
            coord_trunk: [48, 48],
            reduction: 64,
            final_mlp: [96, 48],
            kernel: 3,
            aux_ratio: 0.1,
            init_seed,
        }
    }
}

/// One named parameter block inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    /// fan-in used for the uniform init bound
    pub fan_in: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Spatial dimensions through the strided-conv / conv / pool stack.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvDims {
    /// after the stride-2 first convolution
    ph1: usize,
    pw1: usize,
    /// after the second convolution
    h2: usize,
    w2: usize,
    /// after the final 2×2 pooling
    ph2: usize,
    pw2: usize,
    flat_per_chan: usize,
}

impl ConvDims {
    fn flat(&self, c2: usize) -> usize {
        self.flat_per_chan * c2
    }
}

fn conv_dims(kernel: usize) -> Result<ConvDims, NetworkError> {
    if kernel >= EYE_IMG_H || kernel >= EYE_IMG_W {
        return Err(NetworkError::BadArchitecture(format!(
            "kernel {kernel} does not fit a {EYE_IMG_W}x{EYE_IMG_H} input"
        )));
    }
    let (ph1, pw1) = ((EYE_IMG_H - kernel) / 2 + 1, (EYE_IMG_W - kernel) / 2 + 1);
    if kernel >= ph1 || kernel >= pw1 {
        return Err(NetworkError::BadArchitecture("second convolution does not fit".into()));
    }
    let (h2, w2) = (ph1 - kernel + 1, pw1 - kernel + 1);
    let (ph2, pw2) = (h2 / 2, w2 / 2);
    if ph2 == 0 || pw2 == 0 {
        return Err(NetworkError::BadArchitecture("pooling collapses the image".into()));
    }
    Ok(ConvDims { ph1, pw1, h2, w2, ph2, pw2, flat_per_chan: ph2 * pw2 })
}

fn build_layout(cfg: &TriCamConfig) -> Result<(Vec<ParamBlock>, usize), NetworkError> {
    if cfg.kernel > EYE_IMG_H || cfg.kernel > EYE_IMG_W {
        return Err(NetworkError::BadArchitecture(format!(
            "kernel {} exceeds the {}x{} input",
            cfg.kernel, EYE_IMG_W, EYE_IMG_H
        )));
    }
    if cfg.kernel != 3 {
        return Err(NetworkError::BadArchitecture("only 3x3 kernels are supported".into()));
    }
    let widths = [
        cfg.cnn_channels[0],
        cfg.cnn_channels[1],
        cfg.cnn_feature,
        cfg.disc_channels[0],
        cfg.disc_channels[1],
        cfg.disc_hidden,
        cfg.pair_feature,
        cfg.aux_hidden,
        cfg.coord_trunk[0],
        cfg.coord_trunk[1],
        cfg.reduction,
        cfg.final_mlp[0],
        cfg.final_mlp[1],
    ];
    if widths.iter().any(|&w| w == 0) {
        return Err(NetworkError::BadArchitecture("zero layer width".into()));
    }
    if cfg.aux_ratio < 0.0 || !cfg.aux_ratio.is_finite() {
        return Err(NetworkError::BadArchitecture("aux_ratio must be finite and >= 0".into()));
    }

    let dims = conv_dims(cfg.kernel)?;
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    let mut add = |name: String, shape: Vec<usize>, fan_in: usize| {
        let len: usize = shape.iter().product();
        blocks.push(ParamBlock { name, offset, shape, fan_in });
        offset += len;
    };

    let k2 = cfg.kernel * cfg.kernel;
    add("cnn.conv1.w".into(), vec![cfg.cnn_channels[0], 1, 3, 3], k2);
    add("cnn.conv1.b".into(), vec![cfg.cnn_channels[0]], k2);
    add(
        "cnn.conv2.w".into(),
        vec![cfg.cnn_channels[1], cfg.cnn_channels[0], 3, 3],
        cfg.cnn_channels[0] * k2,
    );
    add("cnn.conv2.b".into(), vec![cfg.cnn_channels[1]], cfg.cnn_channels[0] * k2);
    let cnn_flat = dims.flat(cfg.cnn_channels[1]);
    add("cnn.fc.w".into(), vec![cnn_flat, cfg.cnn_feature], cnn_flat);
    add("cnn.fc.b".into(), vec![cfg.cnn_feature], cnn_flat);

    add("disc.conv1.w".into(), vec![cfg.disc_channels[0], 1, 3, 3], k2);
    add("disc.conv1.b".into(), vec![cfg.disc_channels[0]], k2);
    add(
        "disc.conv2.w".into(),
        vec![cfg.disc_channels[1], cfg.disc_channels[0], 3, 3],
        cfg.disc_channels[0] * k2,
    );
    add("disc.conv2.b".into(), vec![cfg.disc_channels[1]], cfg.disc_channels[0] * k2);
    let disc_flat = dims.flat(cfg.disc_channels[1]);
    add("disc.fc1.w".into(), vec![disc_flat, cfg.disc_hidden], disc_flat);
    add("disc.fc1.b".into(), vec![cfg.disc_hidden], disc_flat);
    add("disc.fc2.w".into(), vec![cfg.disc_hidden, 1], cfg.disc_hidden);
    add("disc.fc2.b".into(), vec![1], cfg.disc_hidden);

    for m in 0..NUM_AUX_HEADS {
        add(format!("pair{m}.fc.w"), vec![6, cfg.pair_feature], 6);
        add(format!("pair{m}.fc.b"), vec![cfg.pair_feature], 6);
    }
    for m in 0..NUM_AUX_HEADS {
        add(format!("aux{m}.fc1.w"), vec![cfg.pair_feature, cfg.aux_hidden], cfg.pair_feature);
        add(format!("aux{m}.fc1.b"), vec![cfg.aux_hidden], cfg.pair_feature);
        add(format!("aux{m}.fc2.w"), vec![cfg.aux_hidden, 2], cfg.aux_hidden);
        add(format!("aux{m}.fc2.b"), vec![2], cfg.aux_hidden);
    }

    let trunk_in = 2 * NUM_AUX_HEADS * cfg.pair_feature;
    add("coord.fc1.w".into(), vec![trunk_in, cfg.coord_trunk[0]], trunk_in);
    add("coord.fc1.b".into(), vec![cfg.coord_trunk[0]], trunk_in);
    add("coord.fc2.w".into(), vec![cfg.coord_trunk[0], cfg.coord_trunk[1]], cfg.coord_trunk[0]);
    add("coord.fc2.b".into(), vec![cfg.coord_trunk[1]], cfg.coord_trunk[0]);

    let fused = NUM_CHANNELS * cfg.cnn_feature;
    add("reduce.fc.w".into(), vec![fused, cfg.reduction], fused);
    add("reduce.fc.b".into(), vec![cfg.reduction], fused);

    let dec_in = cfg.coord_trunk[1] + cfg.reduction;
    add("decision.fc1.w".into(), vec![dec_in, cfg.final_mlp[0]], dec_in);
    add("decision.fc1.b".into(), vec![cfg.final_mlp[0]], dec_in);
    add("decision.fc2.w".into(), vec![cfg.final_mlp[0], cfg.final_mlp[1]], cfg.final_mlp[0]);
    add("decision.fc2.b".into(), vec![cfg.final_mlp[1]], cfg.final_mlp[0]);
    add("decision.out.w".into(), vec![cfg.final_mlp[1], 2], cfg.final_mlp[1]);
    add("decision.out.b".into(), vec![2], cfg.final_mlp[1]);

    Ok((blocks, offset))
}

/// The network: a config, its named layout, and one flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriCamModel {
    pub config: TriCamConfig,
    pub blocks: Vec<ParamBlock>,
    pub params: Vec<f64>,
}

impl TriCamModel {
    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Parameter slice of a named block.
    pub fn block_params(&self, block: &ParamBlock) -> &[f64] {
        &self.params[block.offset..block.offset + block.len()]
    }
}

/// Deterministic fan-in-scaled initialization: weights from
/// U(−√(6/fan_in), +√(6/fan_in)), biases zero.
pub fn init_model(cfg: &TriCamConfig) -> Result<TriCamModel, NetworkError> {
    let (blocks, total) = build_layout(cfg)?;
    let mut params = vec![0.0; total];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    for block in &blocks {
        if block.name.ends_with(".b") {
            continue;
        }
        let bound = (6.0 / block.fan_in as f64).sqrt();
        for v in params[block.offset..block.offset + block.len()].iter_mut() {
            *v = (2.0 * rng.random::<f64>() - 1.0) * bound;
        }
    }
    Ok(TriCamModel { config: cfg.clone(), blocks, params })
}

/// Number of learnable scalars in the model.
pub fn count_params(model: &TriCamModel) -> usize {
    model.params.len()
}

/// Number of learnable scalars a config would produce, without allocating.
pub fn count_params_for(cfg: &TriCamConfig) -> Result<usize, NetworkError> {
    build_layout(cfg).map(|(_, total)| total)
}

/// Network inputs for a batch of samples, already normalized: coordinates
/// in [0,1] with detected flags (sentinel channels zeroed), images in [0,1],
/// targets in [0,1]².
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput {
    pub len: usize,
    /// (B, 6, 3): u, v, flag per channel (channel = camera·2 + eye).
    pub coords: Vec<f64>,
    /// (B·6, 800), channel-major within each sample.
    pub images: Vec<f64>,
    /// (B·6) detected flags, 0.0 or 1.0.
    pub flags: Vec<f64>,
    /// (B, 2) normalized gaze targets.
    pub targets: Vec<f64>,
    /// (B, 2 eyes, 3 heads, 2): normalized coordinates of each masked camera.
    pub aux_targets: Vec<f64>,
    /// (B, 2 eyes, 3 heads): validity of each aux target.
    pub aux_valid: Vec<f64>,
}

impl BatchInput {
    /// Assemble a batch. `rig` provides per-camera resolutions for
    /// coordinate normalization and the screen for target normalization.
    /// `drop_camera` forces that camera's channels into the undetected
    /// encoding (flag 0, zero coords, black image).
    pub fn from_samples(samples: &[&Sample], rig: &Rig, drop_camera: Option<usize>) -> Self {
        let b = samples.len();
        let mut coords = vec![0.0; b * NUM_CHANNELS * 3];
        let mut images = vec![0.0; b * NUM_CHANNELS * EYE_IMG_LEN];
        let mut flags = vec![0.0; b * NUM_CHANNELS];
        let mut targets = vec![0.0; b * 2];
        let mut aux_targets = vec![0.0; b * 2 * NUM_AUX_HEADS * 2];
        let mut aux_valid = vec![0.0; b * 2 * NUM_AUX_HEADS];

        for (s_idx, s) in samples.iter().enumerate() {
            targets[s_idx * 2] = s.target_px.0 / rig.screen.width_px as f64;
            targets[s_idx * 2 + 1] = s.target_px.1 / rig.screen.height_px as f64;
            for cam in 0..3 {
                let dropped = drop_camera == Some(cam);
                let res_w = rig.cameras[cam].res_w as f64;
                let res_h = rig.cameras[cam].res_h as f64;
                for eye in 0..2 {
                    let ch = cam * 2 + eye;
                    let obs = s.channel(cam, eye);
                    let detected = obs.view.detected && !dropped;
                    if detected {
                        let base = (s_idx * NUM_CHANNELS + ch) * 3;
                        coords[base] = obs.view.u / res_w;
                        coords[base + 1] = obs.view.v / res_h;
                        coords[base + 2] = 1.0;
                        flags[s_idx * NUM_CHANNELS + ch] = 1.0;
                        let dst = (s_idx * NUM_CHANNELS + ch) * EYE_IMG_LEN;
                        images[dst..dst + EYE_IMG_LEN].copy_from_slice(&obs.image.data);
                        let t_base = ((s_idx * 2 + eye) * NUM_AUX_HEADS + cam) * 2;
                        aux_targets[t_base] = obs.view.u / res_w;
                        aux_targets[t_base + 1] = obs.view.v / res_h;
                        aux_valid[(s_idx * 2 + eye) * NUM_AUX_HEADS + cam] = 1.0;
                    }
                }
            }
        }
        BatchInput { len: b, coords, images, flags, targets, aux_targets, aux_valid }
    }

    /// Valid aux-target counts over the whole batch, indexed `eye·3 + head`.
    pub fn aux_valid_counts(&self) -> [usize; 6] {
        let mut out = [0usize; 6];
        for s in 0..self.len {
            for eye in 0..2 {
                for head in 0..NUM_AUX_HEADS {
                    if self.aux_valid[(s * 2 + eye) * NUM_AUX_HEADS + head] != 0.0 {
                        out[eye * NUM_AUX_HEADS + head] += 1;
                    }
                }
            }
        }
        out
    }

    /// Copy rows `start..end` out as a sub-batch.
    pub fn slice(&self, start: usize, end: usize) -> BatchInput {
        BatchInput {
            len: end - start,
            coords: self.coords[start * NUM_CHANNELS * 3..end * NUM_CHANNELS * 3].to_vec(),
            images: self.images
                [start * NUM_CHANNELS * EYE_IMG_LEN..end * NUM_CHANNELS * EYE_IMG_LEN]
                .to_vec(),
            flags: self.flags[start * NUM_CHANNELS..end * NUM_CHANNELS].to_vec(),
            targets: self.targets[start * 2..end * 2].to_vec(),
            aux_targets: self.aux_targets
                [start * 2 * NUM_AUX_HEADS * 2..end * 2 * NUM_AUX_HEADS * 2]
                .to_vec(),
            aux_valid: self.aux_valid[start * 2 * NUM_AUX_HEADS..end * 2 * NUM_AUX_HEADS].to_vec(),
        }
    }
}

/// Behavior switches that change the forward graph without touching the
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForwardOpts {
    /// Replace the discriminator-softmax weights with uniform 1/6
    /// (the "no weighted fusion" ablation).
    pub uniform_fusion: bool,
}

/// Node handles after a taped forward pass. `aux_heads[eye·3 + m]` is the
/// (B, 2) prediction of masked camera `m` for that eye.
pub struct ForwardGraph {
    pub gaze_pred: Id,
    pub aux_heads: [Id; 6],
    pub fusion_weights: Id,
}

/// Plain-value outputs of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// (B, 2)
    pub gaze_pred: Vec<f64>,
    /// (B, 2 eyes, 3 heads, 2)
    pub aux_preds: Vec<f64>,
    /// (B, 6), non-negative, each row sums to 1
    pub fusion_weights: Vec<f64>,
}

/// Per-term loss values; `joint = main + aux_ratio · Σ aux` by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub main: f64,
    /// Indexed `eye·3 + head`.
    pub aux: [f64; 6],
    pub joint: f64,
}

impl LossBreakdown {
    pub const ZERO: LossBreakdown = LossBreakdown { main: 0.0, aux: [0.0; 6], joint: 0.0 };

    fn add(&mut self, other: &LossBreakdown) {
        self.main += other.main;
        for (a, b) in self.aux.iter_mut().zip(&other.aux) {
            *a += b;
        }
        self.joint += other.joint;
    }
}

/// Record the forward pass of `model` over `batch`.
pub fn forward_on_tape<'p>(
    tape: &mut Tape<'p>,
    model: &'p TriCamModel,
    batch: &BatchInput,
    opts: ForwardOpts,
) -> Result<ForwardGraph, NetworkError> {
    if batch.len == 0 {
        return Err(NetworkError::EmptyBatch);
    }
    let cfg = &model.config;
    let b = batch.len;
    let n6 = b * NUM_CHANNELS;
    if batch.images.len() != n6 * EYE_IMG_LEN
        || batch.coords.len() != n6 * 3
        || batch.flags.len() != n6
        || batch.targets.len() != b * 2
    {
        return Err(NetworkError::ShapeMismatch(format!("batch buffers disagree with len {b}")));
    }
    let dims = conv_dims(cfg.kernel)?;

    let block = |name: &str| -> Result<&ParamBlock, NetworkError> {
        model
            .block(name)
            .ok_or_else(|| NetworkError::ShapeMismatch(format!("missing parameter block {name}")))
    };
    macro_rules! p {
        ($name:expr) => {{
            let blk = block($name)?;
            tape.param(blk.offset, blk.len())
        }};
    }

    // ---- lower branch: shared CNN over all 6·B crops ----
    let images = tape.constant(batch.images.clone());
    let flags = tape.constant(batch.flags.clone());
    let (c1w, c1b) = (p!("cnn.conv1.w"), p!("cnn.conv1.b"));
    let (c2w, c2b) = (p!("cnn.conv2.w"), p!("cnn.conv2.b"));
    let (fcw, fcb) = (p!("cnn.fc.w"), p!("cnn.fc.b"));
    let c1 = tape.conv3x3_s2(images, c1w, c1b, n6, 1, cfg.cnn_channels[0], EYE_IMG_H, EYE_IMG_W);
    let a1 = tape.softsign(c1);
    let c2 =
        tape.conv3x3(a1, c2w, c2b, n6, cfg.cnn_channels[0], cfg.cnn_channels[1], dims.ph1, dims.pw1);
    let p2 = tape.avg_pool2(c2, n6 * cfg.cnn_channels[1], dims.h2, dims.w2);
    let a2 = tape.softsign(p2);
    let cnn_flat = dims.flat(cfg.cnn_channels[1]);
    let feat_lin = tape.dense(a2, fcw, fcb, n6, cnn_flat, cfg.cnn_feature);
    let feat = tape.softsign(feat_lin);
    // gate: zero out the whole feature row of undetected channels
    let feat_gated = tape.scale_rows(feat, flags, n6, cfg.cnn_feature);

    // ---- discriminator scores and joint softmax over the 6 channels ----
    let weights = if opts.uniform_fusion {
        tape.constant(vec![1.0 / NUM_CHANNELS as f64; n6])
    } else {
        let (d1w, d1b) = (p!("disc.conv1.w"), p!("disc.conv1.b"));
        let (d2w, d2b) = (p!("disc.conv2.w"), p!("disc.conv2.b"));
        let (f1w, f1b) = (p!("disc.fc1.w"), p!("disc.fc1.b"));
        let (f2w, f2b) = (p!("disc.fc2.w"), p!("disc.fc2.b"));
        let dc1 =
            tape.conv3x3_s2(images, d1w, d1b, n6, 1, cfg.disc_channels[0], EYE_IMG_H, EYE_IMG_W);
        let da1 = tape.softsign(dc1);
        let dc2 = tape.conv3x3(
            da1,
            d2w,
            d2b,
            n6,
            cfg.disc_channels[0],
            cfg.disc_channels[1],
            dims.ph1,
            dims.pw1,
        );
        let dp2 = tape.avg_pool2(dc2, n6 * cfg.disc_channels[1], dims.h2, dims.w2);
        let da2 = tape.softsign(dp2);
        let disc_flat = dims.flat(cfg.disc_channels[1]);
        let dh_lin = tape.dense(da2, f1w, f1b, n6, disc_flat, cfg.disc_hidden);
        let dh = tape.softsign(dh_lin);
        let logit = tape.dense(dh, f2w, f2b, n6, cfg.disc_hidden, 1);
        // gate: an undetected channel contributes a constant zero logit, so
        // its pixels can influence neither the weights nor any gradient
        let logit_gated = tape.scale_rows(logit, flags, n6, 1);
        tape.softmax_rows(logit_gated, b, NUM_CHANNELS)
    };
    // weights (B,6) scale the (B·6, F) feature rows
    let fused = tape.scale_rows(feat_gated, weights, n6, cfg.cnn_feature);
    // rows are channel-major per sample, so (B·6, F) re-reads as (B, 6F)
    let (rw, rb) = (p!("reduce.fc.w"), p!("reduce.fc.b"));
    let red_lin = tape.dense(fused, rw, rb, b, NUM_CHANNELS * cfg.cnn_feature, cfg.reduction);
    let reduced = tape.softsign(red_lin);

    // ---- upper branch: camera-pair features and aux heads ----
    // head m masks camera m; its pair input is the other two cameras
    let pair_cams: [[usize; 2]; NUM_AUX_HEADS] = [[1, 2], [0, 2], [0, 1]];
    let mut pair_feats: Vec<(Id, usize)> = Vec::with_capacity(2 * NUM_AUX_HEADS);
    let mut aux_heads: Vec<Id> = Vec::with_capacity(2 * NUM_AUX_HEADS);
    for eye in 0..2 {
        for (m, cams) in pair_cams.iter().enumerate() {
            let mut input = vec![0.0; b * 6];
            for s in 0..b {
                for (slot, &cam) in cams.iter().enumerate() {
                    let src = (s * NUM_CHANNELS + cam * 2 + eye) * 3;
                    input[s * 6 + slot * 3..s * 6 + slot * 3 + 3]
                        .copy_from_slice(&batch.coords[src..src + 3]);
                }
            }
            let input = tape.constant(input);
            let (pw, pb) = (p!(&format!("pair{m}.fc.w")), p!(&format!("pair{m}.fc.b")));
            let pf_lin = tape.dense(input, pw, pb, b, 6, cfg.pair_feature);
            let pf = tape.softsign(pf_lin);
            pair_feats.push((pf, cfg.pair_feature));

            let (a1w, a1b) = (p!(&format!("aux{m}.fc1.w")), p!(&format!("aux{m}.fc1.b")));
            let (a2w, a2b) = (p!(&format!("aux{m}.fc2.w")), p!(&format!("aux{m}.fc2.b")));
            let ah_lin = tape.dense(pf, a1w, a1b, b, cfg.pair_feature, cfg.aux_hidden);
            let ah = tape.softsign(ah_lin);
            aux_heads.push(tape.dense(ah, a2w, a2b, b, cfg.aux_hidden, 2));
        }
    }
    let trunk_in = tape.concat_cols(&pair_feats, b);
    let (t1w, t1b) = (p!("coord.fc1.w"), p!("coord.fc1.b"));
    let (t2w, t2b) = (p!("coord.fc2.w"), p!("coord.fc2.b"));
    let t1 =
        tape.dense(trunk_in, t1w, t1b, b, 2 * NUM_AUX_HEADS * cfg.pair_feature, cfg.coord_trunk[0]);
    let t1a = tape.softsign(t1);
    let t2 = tape.dense(t1a, t2w, t2b, b, cfg.coord_trunk[0], cfg.coord_trunk[1]);
    let coord_out = tape.softsign(t2);

    // ---- final decision MLP over both branches ----
    let dec_in = tape.concat_cols(&[(coord_out, cfg.coord_trunk[1]), (reduced, cfg.reduction)], b);
    let (m1w, m1b) = (p!("decision.fc1.w"), p!("decision.fc1.b"));
    let (m2w, m2b) = (p!("decision.fc2.w"), p!("decision.fc2.b"));
    let (ow, ob) = (p!("decision.out.w"), p!("decision.out.b"));
    let m1 = tape.dense(dec_in, m1w, m1b, b, cfg.coord_trunk[1] + cfg.reduction, cfg.final_mlp[0]);
    let m1a = tape.softsign(m1);
    let m2 = tape.dense(m1a, m2w, m2b, b, cfg.final_mlp[0], cfg.final_mlp[1]);
    let m2a = tape.softsign(m2);
    let gaze_pred = tape.dense(m2a, ow, ob, b, cfg.final_mlp[1], 2);

    let aux_heads: [Id; 6] = aux_heads.try_into().expect("exactly 6 aux heads");
    Ok(ForwardGraph { gaze_pred, aux_heads, fusion_weights: weights })
}

/// Plain-value forward pass.
pub fn forward(
    model: &TriCamModel,
    batch: &BatchInput,
    opts: ForwardOpts,
) -> Result<ForwardOutput, NetworkError> {
    let mut tape = Tape::new(&model.params);
    let graph = forward_on_tape(&mut tape, model, batch, opts)?;
    let b = batch.len;
    let mut aux_preds = vec![0.0; b * 2 * NUM_AUX_HEADS * 2];
    for (idx, &head) in graph.aux_heads.iter().enumerate() {
        let rows = tape.value(head);
        for s in 0..b {
            let dst = (s * 2 * NUM_AUX_HEADS + idx) * 2;
            aux_preds[dst] = rows[s * 2];
            aux_preds[dst + 1] = rows[s * 2 + 1];
        }
    }
    Ok(ForwardOutput {
        gaze_pred: tape.value(graph.gaze_pred).to_vec(),
        aux_preds,
        fusion_weights: tape.value(graph.fusion_weights).to_vec(),
    })
}

/// Batch-global loss denominators, so chunked evaluation normalizes
/// identically to a single pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossDenoms {
    pub main_rows: usize,
    pub aux_rows: [usize; 6],
}

impl LossDenoms {
    pub fn from_batch(batch: &BatchInput) -> Self {
        LossDenoms { main_rows: batch.len, aux_rows: batch.aux_valid_counts() }
    }
}

/// Taped forward plus joint-loss construction.
pub struct ForwardLoss {
    pub graph: ForwardGraph,
    pub loss: LossBreakdown,
    pub joint_node: Id,
}

/// Record forward pass and joint loss on one tape. Aux terms whose global
/// valid count is zero are excluded (no ground truth exists for them).
pub fn forward_with_loss<'p>(
    tape: &mut Tape<'p>,
    model: &'p TriCamModel,
    batch: &BatchInput,
    opts: ForwardOpts,
    denoms: &LossDenoms,
) -> Result<ForwardLoss, NetworkError> {
    let graph = forward_on_tape(tape, model, batch, opts)?;
    let b = batch.len;

    let targets = tape.constant(batch.targets.clone());
    let main_scale = 1.0 / (2.0 * denoms.main_rows as f64);
    let main_node = tape.sq_err_sum(graph.gaze_pred, targets, None, b, 2, main_scale);

    let mut aux_nodes: [Option<Id>; 6] = [None; 6];
    for eye in 0..2 {
        for m in 0..NUM_AUX_HEADS {
            let idx = eye * NUM_AUX_HEADS + m;
            if denoms.aux_rows[idx] == 0 {
                continue;
            }
            let mut target = vec![0.0; b * 2];
            let mut mask = vec![0.0; b];
            for s in 0..b {
                let t_base = ((s * 2 + eye) * NUM_AUX_HEADS + m) * 2;
                target[s * 2] = batch.aux_targets[t_base];
                target[s * 2 + 1] = batch.aux_targets[t_base + 1];
                mask[s] = batch.aux_valid[(s * 2 + eye) * NUM_AUX_HEADS + m];
            }
            let target = tape.constant(target);
            let mask = tape.constant(mask);
            let scale = 1.0 / (2.0 * denoms.aux_rows[idx] as f64);
            aux_nodes[idx] =
                Some(tape.sq_err_sum(graph.aux_heads[idx], target, Some(mask), b, 2, scale));
        }
    }

    let mut terms: Vec<(Id, f64)> = vec![(main_node, 1.0)];
    for node in aux_nodes.iter().flatten() {
        terms.push((*node, model.config.aux_ratio));
    }
    let joint_node = tape.lincomb(&terms);

    let mut aux = [0.0; 6];
    for (dst, node) in aux.iter_mut().zip(aux_nodes.iter()) {
        if let Some(n) = node {
            *dst = tape.scalar(*n);
        }
    }
    let loss = LossBreakdown { main: tape.scalar(main_node), aux, joint: tape.scalar(joint_node) };
    Ok(ForwardLoss { graph, loss, joint_node })
}

/// Value-level joint loss from forward outputs: main is the MSE over the
/// normalized gaze, each aux term the MSE over its valid entries, and
/// `joint = main + aux_ratio · Σ aux`.
pub fn joint_loss(
    out: &ForwardOutput,
    batch: &BatchInput,
    aux_ratio: f64,
) -> Result<LossBreakdown, NetworkError> {
    if batch.len == 0 {
        return Err(NetworkError::EmptyBatch);
    }
    let b = batch.len;
    let mut main = 0.0;
    for (p, t) in out.gaze_pred.iter().zip(&batch.targets) {
        main += (p - t) * (p - t);
    }
    main /= 2.0 * b as f64;

    let mut aux = [0.0; 6];
    let counts = batch.aux_valid_counts();
    for eye in 0..2 {
        for m in 0..NUM_AUX_HEADS {
            let idx = eye * NUM_AUX_HEADS + m;
            if counts[idx] == 0 {
                continue;
            }
            let mut acc = 0.0;
            for s in 0..b {
                let base = ((s * 2 + eye) * NUM_AUX_HEADS + m) * 2;
                if batch.aux_valid[(s * 2 + eye) * NUM_AUX_HEADS + m] == 0.0 {
                    continue;
                }
                let du = out.aux_preds[base] - batch.aux_targets[base];
                let dv = out.aux_preds[base + 1] - batch.aux_targets[base + 1];
                acc += du * du + dv * dv;
            }
            aux[idx] = acc / (2.0 * counts[idx] as f64);
        }
    }
    let joint = main + aux_ratio * aux.iter().sum::<f64>();
    Ok(LossBreakdown { main, aux, joint })
}

/// Fixed stripe count for parallel gradient evaluation. Stripe `k` owns
/// chunks `k, k+2, k+4, …` and accumulates them in that order into its own
/// buffer; the buffers are then reduced in stripe order. The grouping is a
/// constant of the algorithm, so results never depend on thread timing or
/// core count.
const GRAD_STRIPES: usize = 2;

/// Loss and flat parameter gradients over a (possibly large) batch,
/// accumulated over [`GRAD_CHUNK`]-sized chunks in a fixed order.
pub fn loss_and_grads(
    model: &TriCamModel,
    batch: &BatchInput,
    opts: ForwardOpts,
) -> Result<(LossBreakdown, Vec<f64>), NetworkError> {
    if batch.len == 0 {
        return Err(NetworkError::EmptyBatch);
    }
    let denoms = LossDenoms::from_batch(batch);
    let n_chunks = batch.len.div_ceil(GRAD_CHUNK);
    let ranges: Vec<(usize, usize)> = (0..n_chunks)
        .map(|c| (c * GRAD_CHUNK, ((c + 1) * GRAD_CHUNK).min(batch.len)))
        .collect();

    let eval_stripe = |stripe: usize| -> Result<(LossBreakdown, Vec<f64>), NetworkError> {
        let mut loss = LossBreakdown::ZERO;
        let mut grads = vec![0.0; model.params.len()];
        for &(start, end) in ranges.iter().skip(stripe).step_by(GRAD_STRIPES) {
            let sub = batch.slice(start, end);
            let mut tape = Tape::new(&model.params);
            let fl = forward_with_loss(&mut tape, model, &sub, opts, &denoms)?;
            tape.backward_param_grads(fl.joint_node, &mut grads);
            loss.add(&fl.loss);
        }
        Ok((loss, grads))
    };

    let n_stripes = GRAD_STRIPES.min(n_chunks);
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(LossBreakdown, Vec<f64>), NetworkError>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            (0..n_stripes).map(|k| scope.spawn(move || eval_stripe(k))).collect();
        handles.into_iter().map(|h| h.join().expect("stripe worker panicked")).collect()
    });
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(LossBreakdown, Vec<f64>), NetworkError>> =
        (0..n_stripes).map(eval_stripe).collect();

    let mut total = LossBreakdown::ZERO;
    let mut grads = vec![0.0; model.params.len()];
    for part in parts {
        let (loss, g) = part?;
        total.add(&loss);
        for (dst, src) in grads.iter_mut().zip(&g) {
            *dst += src;
        }
    }
    Ok((total, grads))
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One Adam update over `batch`. Deterministic in its inputs; errors with
/// `Diverged` when the joint loss stops being finite.
pub fn train_step(
    model: &mut TriCamModel,
    batch: &BatchInput,
    state: &mut AdamState,
    hyper: &TrainHyper,
    opts: ForwardOpts,
) -> Result<LossBreakdown, NetworkError> {
    let (loss, grads) = loss_and_grads(model, batch, opts)?;
    if !loss.joint.is_finite() {
        return Err(NetworkError::Diverged(format!("step {}", state.step + 1)));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let kernel = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            p[i] -= hyper.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + hyper.eps);
        }
    };
    // elementwise, so the parallel split cannot change any result
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        const CH: usize = 1 << 16;
        model
            .params
            .par_chunks_mut(CH)
            .zip(state.m.par_chunks_mut(CH))
            .zip(state.v.par_chunks_mut(CH))
            .zip(grads.par_chunks(CH))
            .for_each(|(((p, m), v), g)| kernel(p, m, v, g));
    }
    #[cfg(not(feature = "parallel"))]
    kernel(&mut model.params, &mut state.m, &mut state.v, &grads);
    Ok(loss)
}

/// Compare every parameter's analytic gradient against central differences
/// of the joint loss and return the largest relative error,
/// `|a − n| / max(|a| + |n|, 1e-3)`. Meant for tiny configs.
pub fn grad_check(cfg: &TriCamConfig, batch: &BatchInput, eps: f64) -> Result<f64, NetworkError> {
    let mut model = init_model(cfg)?;
    let denoms = LossDenoms::from_batch(batch);
    let opts = ForwardOpts::default();

    let (_, analytic) = loss_and_grads(&model, batch, opts)?;

    let eval = |model: &TriCamModel| -> Result<f64, NetworkError> {
        let mut tape = Tape::new(&model.params);
        let fl = forward_with_loss(&mut tape, model, batch, opts, &denoms)?;
        Ok(fl.loss.joint)
    };

    let mut worst = 0.0f64;
    for i in 0..model.params.len() {
        let orig = model.params[i];
        model.params[i] = orig + eps;
        let hi = eval(&model)?;
        model.params[i] = orig - eps;
        let lo = eval(&model)?;
        model.params[i] = orig;
        let numeric = (hi - lo) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_rig, synth_dataset, SceneConfig};

    #[test]
    fn default_config_parameter_budget() {
        let n = count_params_for(&TriCamConfig::default()).unwrap();
        let target = 1_245_113.0;
        let ratio = n as f64 / target;
        assert!((0.9..=1.1).contains(&ratio), "count {n} is {ratio:.4} of target");
    }

    #[test]
    fn dense_layer_arithmetic() {
        assert_eq!(dense_param_count(10, 5), 55);
    }

    #[test]
    fn widening_final_mlp_changes_count_by_the_analytic_delta() {
        let base = TriCamConfig::default();
        let mut wide = base.clone();
        wide.final_mlp[0] *= 2;
        let n_base = count_params_for(&base).unwrap();
        let n_wide = count_params_for(&wide).unwrap();
        let dec_in = base.coord_trunk[1] + base.reduction;
        let delta = (dense_param_count(dec_in, 2 * base.final_mlp[0])
            + dense_param_count(2 * base.final_mlp[0], base.final_mlp[1]))
            - (dense_param_count(dec_in, base.final_mlp[0])
                + dense_param_count(base.final_mlp[0], base.final_mlp[1]));
        assert_eq!(n_wide, n_base + delta);
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let cfg = TriCamConfig::tiny(11);
        let a = init_model(&cfg).unwrap();
        let b = init_model(&cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.params.iter().all(|v| v.is_finite()));
        let c = init_model(&TriCamConfig::tiny(12)).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let mut cfg = TriCamConfig::tiny(0);
        cfg.kernel = 21;
        assert!(matches!(init_model(&cfg), Err(NetworkError::BadArchitecture(_))));
        cfg.kernel = 41;
        assert!(matches!(init_model(&cfg), Err(NetworkError::BadArchitecture(_))));
    }

    #[test]
    fn forward_shapes_match_the_contract() {
        let rig = default_rig();
        let cfg_scene = SceneConfig::desk_default(rig.clone());
        let data = synth_dataset(&cfg_scene, 5, 3);
        let refs: alloc::vec::Vec<&Sample> = data.iter().collect();
        let batch = BatchInput::from_samples(&refs, &rig, None);
        let model = init_model(&TriCamConfig::tiny(1)).unwrap();
        let out = forward(&model, &batch, ForwardOpts::default()).unwrap();
        assert_eq!(out.gaze_pred.len(), 5 * 2);
        assert_eq!(out.aux_preds.len(), 5 * 2 * 3 * 2);
        assert_eq!(out.fusion_weights.len(), 5 * 6);
        for s in 0..5 {
            let sum: f64 = out.fusion_weights[s * 6..(s + 1) * 6].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!(out.gaze_pred.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let rig = default_rig();
        let batch = BatchInput::from_samples(&[], &rig, None);
        let model = init_model(&TriCamConfig::tiny(1)).unwrap();
        assert!(matches!(
            forward(&model, &batch, ForwardOpts::default()),
            Err(NetworkError::EmptyBatch)
        ));
    }
}
