//! Synthetic desk scenes: procedural 40×20 eye images plus per-camera
//! observations with exact ground-truth gaze pixels.
//!
//! The renderer is not photorealistic. It only has to guarantee that the
//! information the network is supposed to extract is actually present: the
//! iris offset is a monotone function of the gaze direction relative to the
//! camera's viewing ray, and quality artifacts (blink, closed lid,
//! reflection, occlusion) degrade that signal the way real capture does.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    gaze_from_target, project_eye, CameraModel, Mat3, Rig, ScreenModel, Vec3, ViewCoord,
};

/// Image width in pixels.
pub const EYE_IMG_W: usize = 40;
/// Image height in pixels.
pub const EYE_IMG_H: usize = 20;
/// Pixels per image.
pub const EYE_IMG_LEN: usize = EYE_IMG_W * EYE_IMG_H;
/// Camera channels per sample: 3 cameras × 2 eyes.
pub const NUM_CHANNELS: usize = 6;
/// Cameras in a rig.
pub const NUM_CAMERAS: usize = 3;

// Iris offset per radian of relative gaze. Chosen so the iris stays inside
// the sclera over the pose ranges the generator draws.
const IRIS_PX_PER_RAD_X: f64 = 14.0;
const IRIS_PX_PER_RAD_Y: f64 = 7.0;

/// Kind of quality degradation composited onto a rendered eye.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ArtifactKind {
    None,
    Blink,
    Closed,
    Reflection,
    Occlusion,
}

/// A quality artifact with a strength in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityArtifact {
    pub kind: ArtifactKind,
    pub intensity: f64,
}

impl QualityArtifact {
    pub const NONE: QualityArtifact = QualityArtifact { kind: ArtifactKind::None, intensity: 0.0 };
}

/// Inputs to the renderer. `yaw`/`pitch` are the gaze direction relative to
/// the camera's viewing ray, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeRenderParams {
    pub yaw: f64,
    pub pitch: f64,
    pub openness: f64,
    pub artifact: QualityArtifact,
    pub noise_seed: u64,
}

/// A 40×20 grayscale image with intensities in [0, 1], row-major.
/// All-black is reserved for "the eye was not detected".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeImage {
    pub data: Vec<f64>,
}

impl EyeImage {
    pub fn black() -> Self {
        EyeImage { data: vec![0.0; EYE_IMG_LEN] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * EYE_IMG_W + x]
    }

    pub fn is_all_black(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / EYE_IMG_LEN as f64
    }

    /// Coordinates of the darkest pixel (first in scan order on ties).
    pub fn argmin_intensity(&self) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_v = f64::INFINITY;
        for y in 0..EYE_IMG_H {
            for x in 0..EYE_IMG_W {
                let v = self.get(x, y);
                if v < best_v {
                    best_v = v;
                    best = (x, y);
                }
            }
        }
        best
    }
}

/// One camera channel of a sample: the observation, its cropped image, and
/// the artifact that was drawn for it (kept so experiments can stratify by
/// image quality).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelObs {
    pub view: ViewCoord,
    pub image: EyeImage,
    pub artifact: QualityArtifact,
}

/// One aligned training record: 6 channel observations (channel index =
/// camera·2 + eye, eye 0 = left), the ground-truth gaze pixel, and the true
/// eye centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub channels: Vec<ChannelObs>,
    pub target_px: (f64, f64),
    pub eye_centers: [Vec3; 2],
    pub scene_seed: u64,
}

impl Sample {
    pub fn channel(&self, cam: usize, eye: usize) -> &ChannelObs {
        &self.channels[cam * 2 + eye]
    }
}

/// Probabilities for the artifact draw on each channel. The remainder up to
/// 1 is the probability of a clean image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactProbs {
    pub blink: f64,
    pub reflection: f64,
    pub occlusion: f64,
    pub closed: f64,
}

impl ArtifactProbs {
    pub fn sum(&self) -> f64 {
        self.blink + self.reflection + self.occlusion + self.closed
    }
}

impl Default for ArtifactProbs {
    fn default() -> Self {
        ArtifactProbs { blink: 0.1, reflection: 0.1, occlusion: 0.05, closed: 0.05 }
    }
}

/// Scene distribution the sampler draws poses from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub rig: Rig,
    /// Eye distance from the screen plane, cm.
    pub distance_cm: (f64, f64),
    /// Head-center lateral offset from the screen's vertical midline, cm.
    pub lateral_cm: (f64, f64),
    /// Eye height below the screen top edge, cm.
    pub vertical_cm: (f64, f64),
    /// Head yaw around the vertical axis, radians.
    pub head_turn_rad: (f64, f64),
    pub artifact_probs: ArtifactProbs,
    pub interpupillary_cm: f64,
}

impl SceneConfig {
    /// Desk-scale defaults over the given rig: 45–60 cm viewing distance,
    /// eyes roaming around the screen center, adult-average 6.3 cm IPD.
    pub fn desk_default(rig: Rig) -> Self {
        SceneConfig {
            rig,
            distance_cm: (45.0, 60.0),
            lateral_cm: (-12.0, 12.0),
            vertical_cm: (8.0, 26.0),
            head_turn_rad: ((-11.5f64).to_radians(), 11.5f64.to_radians()),
            artifact_probs: ArtifactProbs::default(),
            interpupillary_cm: 6.3,
        }
    }

    /// Same pose distribution but with heavy quality degradation; used by
    /// the fusion/ablation experiments.
    pub fn artifact_rich(rig: Rig) -> Self {
        let mut cfg = Self::desk_default(rig);
        cfg.artifact_probs =
            ArtifactProbs { blink: 0.15, reflection: 0.15, occlusion: 0.15, closed: 0.15 };
        cfg
    }
}

/// The 27-inch monitor the experiments assume: 1920×1080 over
/// 59.789×33.631 cm.
pub fn default_screen() -> ScreenModel {
    ScreenModel::new(1920, 1080, 59.789, 33.631).expect("static dims are valid")
}

/// Three cameras evenly spread along the top screen edge (x = w/4, w/2,
/// 3w/4), optical axes facing the user with a 10° downward pitch so the
/// 45–60 cm pose range stays in view.
pub fn default_rig() -> Rig {
    let screen = default_screen();
    let pitch = 10.0f64.to_radians();
    let cameras = [0.25, 0.5, 0.75]
        .iter()
        .map(|&frac| {
            CameraModel::new(
                Vec3::new(screen.width_cm * frac, 0.0, 0.0),
                Mat3::pitch_down(pitch),
                1200.0,
                (960.0, 540.0),
                1920,
                1080,
            )
            .expect("static rig is valid")
        })
        .collect();
    Rig { screen, cameras }
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Render one eye crop. Deterministic in `params`: the same inputs give a
/// bit-identical image.
///
/// Layers, back to front: skin background with seeded noise, sclera ellipse
/// opened to `openness`, iris disc offset by (yaw, pitch), pupil with a
/// slight radial ramp so the darkest pixel sits at the iris center, then the
/// artifact composite.
pub fn render_eye(params: &EyeRenderParams) -> EyeImage {
    let mut rng = ChaCha8Rng::seed_from_u64(params.noise_seed);
    let mut img = EyeImage::black();

    let openness = match params.artifact.kind {
        ArtifactKind::Closed => 0.0,
        ArtifactKind::Blink => params.openness * (1.0 - 0.8 * params.artifact.intensity),
        _ => params.openness,
    }
    .clamp(0.0, 1.0);

    let cx = EYE_IMG_W as f64 / 2.0;
    let cy = EYE_IMG_H as f64 / 2.0;
    let sclera_rx = 13.0;
    let sclera_ry = 6.0 * openness;
    let iris_cx = cx + IRIS_PX_PER_RAD_X * params.yaw;
    let iris_cy = cy + IRIS_PX_PER_RAD_Y * params.pitch;
    let iris_r = 4.5;
    let pupil_r = 2.2;

    for y in 0..EYE_IMG_H {
        for x in 0..EYE_IMG_W {
            let fx = x as f64 + 0.5;
            let fy = y as f64 + 0.5;
            // skin
            let mut v = 0.35;
            // sclera ellipse with a soft lid edge
            if sclera_ry > 0.05 {
                let e = ((fx - cx) / sclera_rx).powi(2) + ((fy - cy) / sclera_ry).powi(2);
                let inside = 1.0 - smoothstep(0.85, 1.1, e);
                v = v * (1.0 - inside) + 0.85 * inside;
                if inside > 0.5 {
                    // iris and pupil only visible through the aperture
                    let dx = fx - iris_cx;
                    let dy = fy - iris_cy;
                    let r = (dx * dx + dy * dy).sqrt();
                    if r < iris_r {
                        v = 0.18 + 0.02 * (r / iris_r);
                    }
                    if r < pupil_r {
                        v = 0.05 + 0.002 * (r / pupil_r) * (r / pupil_r);
                    }
                }
            }
            img.data[y * EYE_IMG_W + x] = v;
        }
    }

    match params.artifact.kind {
        ArtifactKind::Reflection => {
            // bright specular blob, position drawn from the seed
            let bx = rng.random::<f64>() * (EYE_IMG_W as f64 - 10.0) + 5.0;
            let by = rng.random::<f64>() * (EYE_IMG_H as f64 - 6.0) + 3.0;
            let radius = 3.0 + 3.0 * params.artifact.intensity;
            for y in 0..EYE_IMG_H {
                for x in 0..EYE_IMG_W {
                    let d2 = ((x as f64 + 0.5 - bx).powi(2) + (y as f64 + 0.5 - by).powi(2))
                        / (radius * radius);
                    let w = (0.4 + 0.6 * params.artifact.intensity) * (-2.0 * d2).exp();
                    let px = &mut img.data[y * EYE_IMG_W + x];
                    *px += (1.0 - *px) * w;
                }
            }
        }
        ArtifactKind::Occlusion => {
            // dark bar (frame edge / finger) crossing the crop
            let x0 = (rng.random::<f64>() * (EYE_IMG_W as f64 - 8.0)) as usize;
            let width = 4 + (3.0 * params.artifact.intensity) as usize;
            let depth = 0.1 + 0.5 * (1.0 - params.artifact.intensity);
            for y in 0..EYE_IMG_H {
                for x in x0..(x0 + width).min(EYE_IMG_W) {
                    img.data[y * EYE_IMG_W + x] = depth;
                }
            }
        }
        _ => {
            // keep the rng call pattern independent of the artifact so the
            // base noise below stays comparable between variants
            let _ = rng.random::<f64>();
            let _ = rng.random::<f64>();
        }
    }

    // sensor noise
    for v in img.data.iter_mut() {
        *v = (*v + (rng.random::<f64>() - 0.5) * 0.04).clamp(0.003, 1.0);
    }
    img
}

/// Gaze direction relative to a camera's viewing ray, as (yaw, pitch)
/// radians. Zero means the eye is looking straight back at the camera.
pub fn relative_gaze_angles(cam: &CameraModel, eye_center: Vec3, gaze_dir: Vec3) -> (f64, f64) {
    // camera-frame viewing ray toward the eye, and the reversed gaze
    let to_eye = cam.orientation.mul_vec(eye_center - cam.position);
    let back = cam.orientation.mul_vec(-gaze_dir);
    let axis_z = to_eye.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    // orthonormal basis with axis_z as "straight at the camera"
    let mut axis_x = Vec3::new(1.0, 0.0, 0.0);
    axis_x = (axis_x - axis_z * axis_x.dot(axis_z)).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
    let axis_y = axis_z.cross(axis_x);
    let gx = back.dot(axis_x);
    let gy = back.dot(axis_y);
    let gz = back.dot(axis_z);
    (gx.atan2(gz), gy.atan2(gz))
}

fn draw_artifact(rng: &mut ChaCha8Rng, probs: &ArtifactProbs) -> QualityArtifact {
    let roll = rng.random::<f64>();
    let intensity = 0.4 + 0.6 * rng.random::<f64>();
    let mut acc = probs.blink;
    if roll < acc {
        return QualityArtifact { kind: ArtifactKind::Blink, intensity };
    }
    acc += probs.reflection;
    if roll < acc {
        return QualityArtifact { kind: ArtifactKind::Reflection, intensity };
    }
    acc += probs.occlusion;
    if roll < acc {
        return QualityArtifact { kind: ArtifactKind::Occlusion, intensity };
    }
    acc += probs.closed;
    if roll < acc {
        return QualityArtifact { kind: ArtifactKind::Closed, intensity };
    }
    QualityArtifact::NONE
}

/// Mix a master seed and a sample index into an independent per-sample seed
/// (splitmix64 finalizer).
pub fn derive_scene_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw one aligned sample: a target pixel, a converged eye pair looking at
/// it, per-camera observations via the pinhole oracle, and six rendered
/// crops. Bit-deterministic in `scene_seed`.
pub fn synth_sample(cfg: &SceneConfig, scene_seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    let screen = &cfg.rig.screen;

    let uniform = |rng: &mut ChaCha8Rng, range: (f64, f64)| -> f64 {
        range.0 + (range.1 - range.0) * rng.random::<f64>()
    };

    // keep the target an interior pixel so extreme poses stay meaningful
    let target_px = (
        uniform(&mut rng, (10.0, screen.width_px as f64 - 10.0)),
        uniform(&mut rng, (10.0, screen.height_px as f64 - 10.0)),
    );

    let head = Vec3::new(
        screen.width_cm / 2.0 + uniform(&mut rng, cfg.lateral_cm),
        uniform(&mut rng, cfg.vertical_cm),
        uniform(&mut rng, cfg.distance_cm),
    );
    let turn = uniform(&mut rng, cfg.head_turn_rad);
    let right_axis = Vec3::new(turn.cos(), 0.0, turn.sin());
    let half_ipd = cfg.interpupillary_cm / 2.0;
    let eye_centers = [head - right_axis * half_ipd, head + right_axis * half_ipd];

    let base_openness = 0.75 + 0.25 * rng.random::<f64>();

    let mut channels = Vec::with_capacity(NUM_CHANNELS);
    for cam_idx in 0..NUM_CAMERAS {
        let cam = &cfg.rig.cameras[cam_idx];
        for &center in &eye_centers {
            // both eyes converge on the target (vergence assumption)
            let gaze = gaze_from_target(center, target_px, screen)
                .expect("generator keeps eyes in front of the screen");
            let view = project_eye(cam, center);
            let artifact = draw_artifact(&mut rng, &cfg.artifact_probs);
            let noise_seed = rng.random::<u64>();
            let (obs_view, image) = if view.detected {
                let (yaw, pitch) = relative_gaze_angles(cam, center, gaze);
                let params = EyeRenderParams {
                    yaw,
                    pitch,
                    openness: base_openness,
                    artifact,
                    noise_seed,
                };
                (view, render_eye(&params))
            } else {
                (ViewCoord::undetected(), EyeImage::black())
            };
            channels.push(ChannelObs { view: obs_view, image, artifact });
        }
    }

    Sample { channels, target_px, eye_centers, scene_seed }
}

/// Generate `n` samples from `(cfg, seed)`. Pure: the same inputs always
/// produce the same records. Sample `i` uses [`derive_scene_seed`]`(seed, i)`
/// so generation is parallel-safe by index.
pub fn synth_dataset(cfg: &SceneConfig, n: usize, seed: u64) -> Vec<Sample> {
    (0..n as u64).map(|i| synth_sample(cfg, derive_scene_seed(seed, i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gaze_intersect, EyePose};

    fn clean_params(yaw: f64, pitch: f64) -> EyeRenderParams {
        EyeRenderParams {
            yaw,
            pitch,
            openness: 1.0,
            artifact: QualityArtifact::NONE,
            noise_seed: 42,
        }
    }

    #[test]
    fn centered_gaze_puts_iris_at_image_center() {
        let img = render_eye(&clean_params(0.0, 0.0));
        let (x, y) = img.argmin_intensity();
        assert!((x as i64 - 20).unsigned_abs() <= 1, "x={x}");
        assert!((y as i64 - 10).unsigned_abs() <= 1, "y={y}");
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render_eye(&clean_params(0.2, -0.1));
        let b = render_eye(&clean_params(0.2, -0.1));
        assert_eq!(a, b);
        let c = render_eye(&EyeRenderParams { noise_seed: 43, ..clean_params(0.2, -0.1) });
        assert_ne!(a, c);
    }

    #[test]
    fn closed_eye_is_darker_than_open() {
        let open = render_eye(&clean_params(0.0, 0.0));
        let closed = render_eye(&EyeRenderParams {
            artifact: QualityArtifact { kind: ArtifactKind::Closed, intensity: 1.0 },
            ..clean_params(0.0, 0.0)
        });
        assert!(closed.mean() < open.mean(), "closed {} open {}", closed.mean(), open.mean());
        assert!(!closed.is_all_black(), "closed eye must stay distinguishable from undetected");
    }

    #[test]
    fn iris_column_moves_monotonically_with_yaw() {
        let mut last_col = None;
        let mut yaw = -0.45;
        while yaw <= 0.45 {
            let img = render_eye(&clean_params(yaw, 0.0));
            let (x, _) = img.argmin_intensity();
            if let Some(prev) = last_col {
                assert!(x > prev, "col {x} did not advance past {prev} at yaw {yaw}");
            }
            last_col = Some(x);
            yaw += 0.15;
        }
    }

    #[test]
    fn sample_generation_is_deterministic() {
        let cfg = SceneConfig::desk_default(default_rig());
        let a = synth_sample(&cfg, 7);
        let b = synth_sample(&cfg, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_is_self_consistent_with_the_oracle() {
        let cfg = SceneConfig::desk_default(default_rig());
        for i in 0..50 {
            let s = synth_sample(&cfg, derive_scene_seed(99, i));
            // each eye's gaze ray re-intersects the screen at the target
            for &center in &s.eye_centers {
                let dir = gaze_from_target(center, s.target_px, &cfg.rig.screen).unwrap();
                let (px, py) =
                    gaze_intersect(&EyePose { center, gaze_dir: dir }, &cfg.rig.screen).unwrap();
                assert!((px - s.target_px.0).abs() < 1e-6);
                assert!((py - s.target_px.1).abs() < 1e-6);
            }
            // undetected ⇔ all-black, and coordinates match the oracle
            for cam_idx in 0..NUM_CAMERAS {
                for eye_idx in 0..2 {
                    let obs = s.channel(cam_idx, eye_idx);
                    let expect = project_eye(&cfg.rig.cameras[cam_idx], s.eye_centers[eye_idx]);
                    assert_eq!(obs.view, expect);
                    assert_eq!(obs.view.detected, !obs.image.is_all_black());
                }
            }
            // target stays inside the screen
            assert!(s.target_px.0 >= 0.0 && s.target_px.0 < 1920.0);
            assert!(s.target_px.1 >= 0.0 && s.target_px.1 < 1080.0);
        }
    }

    #[test]
    fn middle_camera_sees_centered_pose_near_axis() {
        let rig = default_rig();
        let mut cfg = SceneConfig::desk_default(rig);
        cfg.lateral_cm = (0.0, 0.0);
        cfg.vertical_cm = (16.8, 16.8);
        cfg.distance_cm = (50.0, 50.0);
        cfg.head_turn_rad = (0.0, 0.0);
        let s = synth_sample(&cfg, 1);
        let cam = &cfg.rig.cameras[1];
        for eye_idx in 0..2 {
            let obs = s.channel(1, eye_idx);
            assert!(obs.view.detected);
            let expect = project_eye(cam, s.eye_centers[eye_idx]);
            assert!((obs.view.u - expect.u).abs() < 1.0);
        }
    }

    #[test]
    fn dataset_is_a_pure_function_of_inputs() {
        let cfg = SceneConfig::desk_default(default_rig());
        let a = synth_dataset(&cfg, 10, 7);
        let b = synth_dataset(&cfg, 10, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
    }
}
