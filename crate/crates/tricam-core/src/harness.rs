//! Experiment orchestration: dataset splits, training with validation
//! selection, centimeter-error evaluation, gaze-angle sweeps, spatial error
//! heatmaps, component ablations, auxiliary-ratio sweeps, and
//! explicit/implicit label mixing.
//!
//! Every operation is deterministic under its seed. Independent runs can be
//! executed in parallel by the caller; a single run is sequential.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::geometry::{Axis, Rig, ScreenModel};
use crate::network::{
    forward, init_model, train_step, AdamState, BatchInput, ForwardOpts, TrainHyper, TriCamConfig,
    TriCamModel,
};
use crate::synth::{synth_dataset, Sample, SceneConfig};

/// Shuffle-then-slice dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_frac: 0.7, val_frac: 0.1, test_frac: 0.2, seed: 0 }
    }
}

/// Index-level split: shuffle `0..n` with the spec's seed, then slice.
/// Train and validation sizes are floors of their fractions; the remainder
/// is the test set.
pub fn split_indices(
    n: usize,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), HarnessError> {
    if n < 10 {
        return Err(HarnessError::DatasetTooSmall { need: 10, got: n });
    }
    let total = spec.train_frac + spec.val_frac + spec.test_frac;
    if (total - 1.0).abs() > 1e-9
        || spec.train_frac < 0.0
        || spec.val_frac < 0.0
        || spec.test_frac < 0.0
    {
        return Err(HarnessError::BadSplit("fractions must be non-negative and sum to 1"));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let n_train = (n as f64 * spec.train_frac).floor() as usize;
    let n_val = (n as f64 * spec.val_frac).floor() as usize;
    let test = indices.split_off(n_train + n_val);
    let val = indices.split_off(n_train);
    Ok((indices, val, test))
}

/// Disjoint, exhaustive, seed-deterministic split over the samples.
pub fn split_dataset<'a>(
    data: &'a [Sample],
    spec: &SplitSpec,
) -> Result<(Vec<&'a Sample>, Vec<&'a Sample>, Vec<&'a Sample>), HarnessError> {
    let (ti, vi, tei) = split_indices(data.len(), spec)?;
    let pick = |idx: Vec<usize>| -> Vec<&Sample> { idx.into_iter().map(|i| &data[i]).collect() };
    Ok((pick(ti), pick(vi), pick(tei)))
}

/// Component switches for the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Force the auxiliary ratio to zero (cuts intra-validation).
    pub no_intra_validation: bool,
    /// Force uniform 1/6 fusion weights (cuts the discriminator).
    pub no_weighted_fusion: bool,
    /// Force this camera's channels to undetected in every batch.
    pub drop_camera: Option<usize>,
}

/// One training run's knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hyper: TrainHyper,
    pub aux_ratio: f64,
    pub ablation: AblationFlags,
    pub seed: u64,
    pub net: TriCamConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            epochs: 150,
            batch_size: 64,
            hyper: TrainHyper::default(),
            aux_ratio: 0.1,
            ablation: AblationFlags::default(),
            seed: 0,
            net: TriCamConfig::default(),
        }
    }
}

impl TrainRunConfig {
    /// The network config this run actually trains: run seed drives the
    /// initialization, and the intra-validation ablation is exactly
    /// `aux_ratio = 0` (same code path, identical trajectories).
    pub fn resolved_net(&self) -> TriCamConfig {
        let mut net = self.net.clone();
        net.init_seed = self.seed;
        net.aux_ratio = if self.ablation.no_intra_validation { 0.0 } else { self.aux_ratio };
        net
    }

    pub fn forward_opts(&self) -> ForwardOpts {
        ForwardOpts { uniform_fusion: self.ablation.no_weighted_fusion }
    }
}

/// Per-epoch curve entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_joint: f64,
    pub train_main: f64,
    pub val_error_cm: f64,
}

/// A finished training run: the parameters that minimized validation error,
/// and the per-epoch curves.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TriCamModel,
    pub curves: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_error_cm: f64,
}

/// Evaluation-time switches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub drop_camera: Option<usize>,
    pub uniform_fusion: bool,
    /// Exponential moving average over consecutive test predictions;
    /// None (the default) evaluates raw predictions.
    pub smoothing_alpha: Option<f64>,
}

impl EvalOptions {
    pub fn from_flags(flags: &AblationFlags) -> Self {
        EvalOptions {
            drop_camera: flags.drop_camera,
            uniform_fusion: flags.no_weighted_fusion,
            smoothing_alpha: None,
        }
    }
}

/// Per-sample evaluation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerSampleEval {
    pub target_px: (f64, f64),
    pub pred_px: (f64, f64),
    pub error_cm: f64,
}

/// Evaluation summary over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_error_cm: f64,
    pub median_error_cm: f64,
    pub per_sample: Vec<PerSampleEval>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Mean/median centimeter error between predicted and true gaze pixels.
pub fn error_stats(screen: &ScreenModel, pairs: &[((f64, f64), (f64, f64))]) -> (f64, f64) {
    let mut errs: Vec<f64> =
        pairs.iter().map(|&(p, t)| screen.pixel_dist_cm(p, t)).collect();
    let mean = if errs.is_empty() { 0.0 } else { errs.iter().sum::<f64>() / errs.len() as f64 };
    (mean, median(&mut errs))
}

/// Forward the test set (in fixed-size chunks) and report centimeter errors.
pub fn evaluate(
    model: &TriCamModel,
    test: &[&Sample],
    rig: &Rig,
    opts: &EvalOptions,
) -> Result<EvalReport, HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let screen = &rig.screen;
    let fwd_opts = ForwardOpts { uniform_fusion: opts.uniform_fusion };
    let chunk_preds = |chunk: &[&Sample]| -> Result<Vec<(f64, f64)>, HarnessError> {
        let batch = BatchInput::from_samples(chunk, rig, opts.drop_camera);
        let out = forward(model, &batch, fwd_opts)?;
        Ok((0..chunk.len())
            .map(|s| {
                (
                    out.gaze_pred[s * 2] * screen.width_px as f64,
                    out.gaze_pred[s * 2 + 1] * screen.height_px as f64,
                )
            })
            .collect())
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<(f64, f64)>, HarnessError>> = {
        use rayon::prelude::*;
        test.par_chunks(64).map(chunk_preds).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<(f64, f64)>, HarnessError>> =
        test.chunks(64).map(chunk_preds).collect();
    let mut preds: Vec<(f64, f64)> = Vec::with_capacity(test.len());
    for part in parts {
        preds.extend(part?);
    }
    if let Some(alpha) = opts.smoothing_alpha {
        let mut prev: Option<(f64, f64)> = None;
        for p in preds.iter_mut() {
            if let Some(q) = prev {
                p.0 = alpha * p.0 + (1.0 - alpha) * q.0;
                p.1 = alpha * p.1 + (1.0 - alpha) * q.1;
            }
            prev = Some(*p);
        }
    }
    let per_sample: Vec<PerSampleEval> = test
        .iter()
        .zip(&preds)
        .map(|(s, &pred_px)| PerSampleEval {
            target_px: s.target_px,
            pred_px,
            error_cm: screen.pixel_dist_cm(pred_px, s.target_px),
        })
        .collect();
    let mut errs: Vec<f64> = per_sample.iter().map(|p| p.error_cm).collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok(EvalReport { mean_error_cm: mean, median_error_cm: median(&mut errs), per_sample })
}

/// Train on `train`, select the epoch with minimum validation error, and
/// return that model plus the curves.
pub fn train_model(
    train: &[&Sample],
    val: &[&Sample],
    rig: &Rig,
    run: &TrainRunConfig,
) -> Result<TrainOutcome, HarnessError> {
    if train.is_empty() || val.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let net = run.resolved_net();
    let opts = run.forward_opts();
    let mut model = init_model(&net)?;
    let mut adam = AdamState::new(model.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed ^ 0x5EED_BA7C);
    let eval_opts = EvalOptions::from_flags(&run.ablation);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curves = Vec::with_capacity(run.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    for epoch in 0..run.epochs {
        order.shuffle(&mut rng);
        let mut joint_sum = 0.0;
        let mut main_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(run.batch_size) {
            let refs: Vec<&Sample> = chunk.iter().map(|&i| train[i]).collect();
            let batch = BatchInput::from_samples(&refs, rig, run.ablation.drop_camera);
            let loss = train_step(&mut model, &batch, &mut adam, &run.hyper, opts)
                .map_err(|_| HarnessError::DivergedAt { epoch })?;
            joint_sum += loss.joint * refs.len() as f64;
            main_sum += loss.main * refs.len() as f64;
            seen += refs.len();
        }
        let val_report = evaluate(&model, val, rig, &eval_opts)?;
        let stats = EpochStats {
            epoch,
            train_joint: joint_sum / seen as f64,
            train_main: main_sum / seen as f64,
            val_error_cm: val_report.mean_error_cm,
        };
        curves.push(stats);
        let improved = best.as_ref().map_or(true, |(_, e, _)| stats.val_error_cm < *e);
        if improved {
            best = Some((epoch, stats.val_error_cm, model.params.clone()));
        }
    }

    let (best_epoch, best_val_error_cm, best_params) = best.expect("epochs >= 1");
    model.params = best_params;
    Ok(TrainOutcome { model, curves, best_epoch, best_val_error_cm })
}

/// One seat offset of the gaze-angle protocol: at distance `L`, a view angle
/// θ displaces the user laterally by Δx = L·tan θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleScenario {
    pub theta_deg: f64,
    pub distance_cm: f64,
    pub offset_cm: f64,
}

impl AngleScenario {
    pub fn new(theta_deg: f64, distance_cm: f64) -> Self {
        AngleScenario {
            theta_deg,
            distance_cm,
            offset_cm: distance_cm * theta_deg.to_radians().tan(),
        }
    }

    /// The nine standard seat angles at 50 cm.
    pub fn standard_set() -> Vec<AngleScenario> {
        [-30.0, -20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0, 30.0]
            .iter()
            .map(|&t| AngleScenario::new(t, 50.0))
            .collect()
    }

    /// Internal consistency of the stored offset.
    pub fn is_consistent(&self) -> bool {
        (self.offset_cm - self.distance_cm * self.theta_deg.to_radians().tan()).abs() <= 1e-9
    }
}

/// Per-angle evaluation row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub theta_deg: f64,
    pub offset_cm: f64,
    pub mean_error_cm: f64,
    /// Fraction of camera channels that still saw the eye.
    pub detected_rate: f64,
}

/// Evaluate a model on freshly generated per-angle test sets: the pose
/// distribution is pinned to the scenario's distance and lateral offset.
pub fn angle_sweep(
    model: &TriCamModel,
    scenarios: &[AngleScenario],
    base_cfg: &SceneConfig,
    n_per_angle: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<AngleRow>, HarnessError> {
    let mut rows = Vec::with_capacity(scenarios.len());
    for (idx, sc) in scenarios.iter().enumerate() {
        let mut cfg = base_cfg.clone();
        cfg.distance_cm = (sc.distance_cm, sc.distance_cm);
        cfg.lateral_cm = (sc.offset_cm - 2.0, sc.offset_cm + 2.0);
        let data = synth_dataset(&cfg, n_per_angle, seed.wrapping_add(idx as u64));
        let refs: Vec<&Sample> = data.iter().collect();
        let report = evaluate(model, &refs, &base_cfg.rig, opts)?;
        let detected: usize = data
            .iter()
            .map(|s| s.channels.iter().filter(|c| c.view.detected).count())
            .sum();
        rows.push(AngleRow {
            theta_deg: sc.theta_deg,
            offset_cm: sc.offset_cm,
            mean_error_cm: report.mean_error_cm,
            detected_rate: detected as f64 / (data.len() * 6) as f64,
        });
    }
    Ok(rows)
}

/// Mean error per screen-pixel bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub bin_px: u32,
    pub cols: usize,
    pub rows: usize,
    /// Row-major means; bins with no samples hold 0.
    pub mean_error_cm: Vec<f64>,
    pub counts: Vec<usize>,
    pub global_mean_cm: f64,
}

impl HeatmapGrid {
    /// Count-weighted mean over bins; equals the global mean by definition.
    pub fn weighted_mean_cm(&self) -> f64 {
        let total: usize = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .mean_error_cm
            .iter()
            .zip(&self.counts)
            .map(|(&m, &c)| m * c as f64)
            .sum();
        sum / total as f64
    }
}

/// Bin per-sample errors by true target pixel. Bins tile the screen; the
/// last row/column is truncated when `bin_px` does not divide the
/// resolution.
pub fn spatial_heatmap(report: &EvalReport, screen: &ScreenModel, bin_px: u32) -> HeatmapGrid {
    let cols = (screen.width_px as usize).div_ceil(bin_px as usize);
    let rows = (screen.height_px as usize).div_ceil(bin_px as usize);
    let mut sums = vec![0.0; cols * rows];
    let mut counts = vec![0usize; cols * rows];
    let mut total = 0.0;
    for s in &report.per_sample {
        let cx = ((s.target_px.0 / bin_px as f64) as usize).min(cols - 1);
        let cy = ((s.target_px.1 / bin_px as f64) as usize).min(rows - 1);
        sums[cy * cols + cx] += s.error_cm;
        counts[cy * cols + cx] += 1;
        total += s.error_cm;
    }
    let mean_error_cm = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let n: usize = counts.iter().sum();
    HeatmapGrid {
        bin_px,
        cols,
        rows,
        mean_error_cm,
        counts,
        global_mean_cm: if n > 0 { total / n as f64 } else { 0.0 },
    }
}

/// The six ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoIntraValidation,
    NoWeightedFusion,
    DropCamera1,
    DropCamera2,
    DropCamera3,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 6] = [
        AblationVariant::Full,
        AblationVariant::NoIntraValidation,
        AblationVariant::NoWeightedFusion,
        AblationVariant::DropCamera1,
        AblationVariant::DropCamera2,
        AblationVariant::DropCamera3,
    ];

    pub fn flags(&self) -> AblationFlags {
        match self {
            AblationVariant::Full => AblationFlags::default(),
            AblationVariant::NoIntraValidation => {
                AblationFlags { no_intra_validation: true, ..Default::default() }
            }
            AblationVariant::NoWeightedFusion => {
                AblationFlags { no_weighted_fusion: true, ..Default::default() }
            }
            AblationVariant::DropCamera1 => {
                AblationFlags { drop_camera: Some(0), ..Default::default() }
            }
            AblationVariant::DropCamera2 => {
                AblationFlags { drop_camera: Some(1), ..Default::default() }
            }
            AblationVariant::DropCamera3 => {
                AblationFlags { drop_camera: Some(2), ..Default::default() }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoIntraValidation => "no_intra_validation",
            AblationVariant::NoWeightedFusion => "no_weighted_fusion",
            AblationVariant::DropCamera1 => "drop_camera_1",
            AblationVariant::DropCamera2 => "drop_camera_2",
            AblationVariant::DropCamera3 => "drop_camera_3",
        }
    }
}

/// Median test error of one ablation variant over the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: AblationVariant,
    pub per_seed_error_cm: Vec<f64>,
    pub median_error_cm: f64,
    /// Relative change vs. the full model's median, in percent.
    pub delta_vs_full_pct: f64,
}

fn run_once(
    data: &[Sample],
    split: &SplitSpec,
    run: &TrainRunConfig,
    rig: &Rig,
) -> Result<f64, HarnessError> {
    let (train, val, test) = split_dataset(data, split)?;
    let outcome = train_model(&train, &val, rig, run)?;
    let report = evaluate(&outcome.model, &test, rig, &EvalOptions::from_flags(&run.ablation))?;
    Ok(report.mean_error_cm)
}

/// Train {full, no-intra-validation, no-weighted-fusion, drop-camera-1/2/3}
/// per seed and compare medians.
pub fn ablation_suite(
    data: &[Sample],
    base_run: &TrainRunConfig,
    seeds: &[u64],
    rig: &Rig,
) -> Result<Vec<VariantResult>, HarnessError> {
    if seeds.len() < 3 {
        return Err(HarnessError::BadSplit("ablation needs at least 3 seeds"));
    }
    let mut per_variant: Vec<Vec<f64>> = vec![Vec::new(); AblationVariant::ALL.len()];
    for &seed in seeds {
        let split = SplitSpec { seed, ..SplitSpec::default() };
        for (v_idx, variant) in AblationVariant::ALL.iter().enumerate() {
            let mut run = base_run.clone();
            run.seed = seed;
            run.ablation = variant.flags();
            per_variant[v_idx].push(run_once(data, &split, &run, rig)?);
        }
    }
    let full_median = {
        let mut v = per_variant[0].clone();
        median(&mut v)
    };
    Ok(AblationVariant::ALL
        .iter()
        .zip(per_variant)
        .map(|(&variant, per_seed)| {
            let mut sorted = per_seed.clone();
            let med = median(&mut sorted);
            VariantResult {
                variant,
                per_seed_error_cm: per_seed,
                median_error_cm: med,
                delta_vs_full_pct: if full_median > 0.0 {
                    (med - full_median) / full_median * 100.0
                } else {
                    0.0
                },
            }
        })
        .collect())
}

/// One auxiliary-ratio sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub aux_ratio: f64,
    pub per_seed_error_cm: Vec<f64>,
    pub median_error_cm: f64,
}

/// Median test error per auxiliary ratio. A ratio of 0 runs exactly the
/// no-intra-validation ablation.
pub fn aux_ratio_sweep(
    data: &[Sample],
    ratios: &[f64],
    seeds: &[u64],
    base_run: &TrainRunConfig,
    rig: &Rig,
) -> Result<Vec<RatioRow>, HarnessError> {
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let split = SplitSpec { seed, ..SplitSpec::default() };
            let mut run = base_run.clone();
            run.seed = seed;
            run.aux_ratio = ratio;
            per_seed.push(run_once(data, &split, &run, rig)?);
        }
        let mut sorted = per_seed.clone();
        let med = median(&mut sorted);
        rows.push(RatioRow { aux_ratio: ratio, per_seed_error_cm: per_seed, median_error_cm: med });
    }
    Ok(rows)
}

/// Replace each sample's gaze label with a cursor-style label: the true
/// target plus isotropic Gaussian noise whose mean radial offset is
/// `mean_offset_cm`. The physical scene (images, eye poses) is untouched —
/// only the label degrades, as in implicit collection.
pub fn make_implicit_labels(
    samples: &[Sample],
    mean_offset_cm: f64,
    seed: u64,
    screen: &ScreenModel,
) -> Vec<Sample> {
    // mean radial distance of an isotropic 2-D Gaussian is σ·√(π/2)
    let sigma_cm = mean_offset_cm / (core::f64::consts::PI / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma_cm).expect("sigma is finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|s| {
            let dx_cm: f64 = normal.sample(&mut rng);
            let dy_cm: f64 = normal.sample(&mut rng);
            let mut out = s.clone();
            out.target_px = (
                (s.target_px.0 + screen.cm_to_px(dx_cm, Axis::Horizontal))
                    .clamp(0.0, screen.width_px as f64 - 1.0),
                (s.target_px.1 + screen.cm_to_px(dy_cm, Axis::Vertical))
                    .clamp(0.0, screen.height_px as f64 - 1.0),
            );
            out
        })
        .collect()
}

/// One row of the explicit/implicit mixing experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixRow {
    pub implicit_pct: f64,
    pub mean_error_cm: f64,
}

/// For each percentage, swap that fraction of the training labels for their
/// implicit (noisy) counterparts, train, and evaluate on the clean test
/// split. `implicit` must parallel `explicit` index-by-index.
pub fn mix_experiment(
    explicit: &[Sample],
    implicit: &[Sample],
    pct_list: &[f64],
    base_run: &TrainRunConfig,
    split: &SplitSpec,
    rig: &Rig,
) -> Result<Vec<MixRow>, HarnessError> {
    if explicit.len() != implicit.len() {
        return Err(HarnessError::BadSplit("explicit and implicit sets must align"));
    }
    let mut rows = Vec::with_capacity(pct_list.len());
    for &pct in pct_list {
        // swap labels on the training portion only: the first k entries of
        // the shuffled training slice take their implicit counterparts
        let (ti, vi, tei) = split_indices(explicit.len(), split)?;
        let k = ((pct / 100.0) * ti.len() as f64).round() as usize;
        let train_mixed: Vec<&Sample> = ti
            .iter()
            .enumerate()
            .map(|(pos, &i)| if pos < k { &implicit[i] } else { &explicit[i] })
            .collect();
        let val: Vec<&Sample> = vi.into_iter().map(|i| &explicit[i]).collect();
        let test: Vec<&Sample> = tei.into_iter().map(|i| &explicit[i]).collect();
        let outcome = train_model(&train_mixed, &val, rig, base_run)?;
        let report =
            evaluate(&outcome.model, &test, rig, &EvalOptions::from_flags(&base_run.ablation))?;
        rows.push(MixRow { implicit_pct: pct, mean_error_cm: report.mean_error_cm });
    }
    Ok(rows)
}

/// Mean fusion weight granted to channels of each artifact kind over a
/// sample set; used to check that the discriminator learns to downweight
/// degraded channels.
pub fn mean_weight_by_artifact(
    model: &TriCamModel,
    samples: &[&Sample],
    rig: &Rig,
) -> Result<Vec<(crate::synth::ArtifactKind, f64, usize)>, HarnessError> {
    use crate::synth::ArtifactKind;
    let kinds = [
        ArtifactKind::None,
        ArtifactKind::Blink,
        ArtifactKind::Closed,
        ArtifactKind::Reflection,
        ArtifactKind::Occlusion,
    ];
    let mut sums = [0.0f64; 5];
    let mut counts = [0usize; 5];
    for chunk in samples.chunks(64) {
        let batch = BatchInput::from_samples(chunk, rig, None);
        let out = forward(model, &batch, ForwardOpts::default())?;
        for (s_idx, s) in chunk.iter().enumerate() {
            for ch in 0..6 {
                if !s.channels[ch].view.detected {
                    continue;
                }
                let kind = s.channels[ch].artifact.kind;
                let k_idx = kinds.iter().position(|&k| k == kind).unwrap();
                sums[k_idx] += out.fusion_weights[s_idx * 6 + ch];
                counts[k_idx] += 1;
            }
        }
    }
    Ok(kinds
        .iter()
        .zip(sums.iter().zip(&counts))
        .filter(|(_, (_, &c))| c > 0)
        .map(|(&k, (&s, &c))| (k, s / c as f64, c))
        .collect())
}

/// Seeded helper for tests and the CLI: a dataset plus its standard split.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw `n` distinct seeds from a master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.random::<u64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::default_rig;

    #[test]
    fn split_sizes_match_the_protocol() {
        let rig = default_rig();
        let cfg = SceneConfig::desk_default(rig);
        let data = synth_dataset(&cfg, 10, 1);
        let (train, val, test) = split_dataset(&data, &SplitSpec::default()).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (7, 1, 2));
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_deterministic() {
        let rig = default_rig();
        let cfg = SceneConfig::desk_default(rig);
        let data = synth_dataset(&cfg, 57, 2);
        let spec = SplitSpec { seed: 9, ..SplitSpec::default() };
        let (a1, b1, c1) = split_dataset(&data, &spec).unwrap();
        let (a2, b2, c2) = split_dataset(&data, &spec).unwrap();
        let ids = |v: &Vec<&Sample>| -> Vec<u64> { v.iter().map(|s| s.scene_seed).collect() };
        assert_eq!(ids(&a1), ids(&a2));
        assert_eq!(ids(&b1), ids(&b2));
        assert_eq!(ids(&c1), ids(&c2));
        let mut all: Vec<u64> = ids(&a1).into_iter().chain(ids(&b1)).chain(ids(&c1)).collect();
        all.sort_unstable();
        let mut want: Vec<u64> = data.iter().map(|s| s.scene_seed).collect();
        want.sort_unstable();
        assert_eq!(all, want);
    }

    #[test]
    fn tiny_dataset_is_rejected() {
        let rig = default_rig();
        let cfg = SceneConfig::desk_default(rig);
        let data = synth_dataset(&cfg, 5, 1);
        assert!(matches!(
            split_dataset(&data, &SplitSpec::default()),
            Err(HarnessError::DatasetTooSmall { .. })
        ));
    }

    #[test]
    fn angle_scenarios_are_internally_consistent() {
        for sc in AngleScenario::standard_set() {
            assert!(sc.is_consistent());
        }
        let sc = AngleScenario::new(30.0, 50.0);
        assert!((sc.offset_cm - 28.8675).abs() < 1e-3);
        assert_eq!(AngleScenario::new(0.0, 50.0).offset_cm, 0.0);
    }

    #[test]
    fn heatmap_dimensions_and_weighted_mean() {
        let screen = crate::synth::default_screen();
        let per_sample: Vec<PerSampleEval> = (0..100)
            .map(|i| {
                let x = (i % 10) as f64 * 190.0 + 10.0;
                let y = (i / 10) as f64 * 105.0 + 10.0;
                PerSampleEval {
                    target_px: (x, y),
                    pred_px: (x + 32.0, y),
                    error_cm: 1.0 + (i % 7) as f64,
                }
            })
            .collect();
        let mean = per_sample.iter().map(|p| p.error_cm).sum::<f64>() / 100.0;
        let report =
            EvalReport { mean_error_cm: mean, median_error_cm: 0.0, per_sample };
        let grid = spatial_heatmap(&report, &screen, 120);
        assert_eq!((grid.cols, grid.rows), (16, 9));
        assert!((grid.weighted_mean_cm() - grid.global_mean_cm).abs() < 1e-9);
        assert!((grid.global_mean_cm - mean).abs() < 1e-9);
    }

    #[test]
    fn implicit_labels_have_the_requested_mean_offset() {
        let rig = default_rig();
        let screen = rig.screen;
        let cfg = SceneConfig::desk_default(rig);
        let data = synth_dataset(&cfg, 400, 5);
        let noisy = make_implicit_labels(&data, 3.28, 11, &screen);
        let mean_offset: f64 = data
            .iter()
            .zip(&noisy)
            .map(|(a, b)| screen.pixel_dist_cm(a.target_px, b.target_px))
            .sum::<f64>()
            / data.len() as f64;
        assert!((mean_offset - 3.28).abs() < 0.4, "mean offset {mean_offset}");
        // labels stay inside the screen
        for s in &noisy {
            assert!(s.target_px.0 >= 0.0 && s.target_px.0 <= 1919.0);
            assert!(s.target_px.1 >= 0.0 && s.target_px.1 <= 1079.0);
        }
    }
}
