//! Plain-text (TOML) configuration: one rig (screen + cameras), optional
//! scene-distribution, training, and click-filter sections. The same file
//! feeds dataset generation, training, and evaluation.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use tricam_core::clickcalib::FilterCriteria;
use tricam_core::geometry::{CameraModel, Mat3, Rig, ScreenModel, Vec3};
use tricam_core::harness::{AblationFlags, TrainRunConfig};
use tricam_core::network::{TrainHyper, TriCamConfig};
use tricam_core::synth::{ArtifactProbs, SceneConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenSection {
    pub width_px: u32,
    pub height_px: u32,
    pub width_cm: f64,
    pub height_cm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSection {
    /// World position in cm (screen top-left origin, +y down, +z toward user).
    pub position_cm: [f64; 3],
    /// Downward pitch of the optical axis, degrees.
    #[serde(default)]
    pub pitch_deg: f64,
    /// Yaw of the optical axis, degrees.
    #[serde(default)]
    pub yaw_deg: f64,
    pub focal_px: f64,
    pub principal_point: [f64; 2],
    pub resolution: [u32; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSection {
    #[serde(default = "default_distance")]
    pub distance_cm: [f64; 2],
    #[serde(default = "default_lateral")]
    pub lateral_cm: [f64; 2],
    #[serde(default = "default_vertical")]
    pub vertical_cm: [f64; 2],
    #[serde(default = "default_head_turn")]
    pub head_turn_deg: [f64; 2],
    #[serde(default = "default_ipd")]
    pub interpupillary_cm: f64,
    #[serde(default)]
    pub artifacts: ArtifactSection,
}

fn default_distance() -> [f64; 2] {
    [45.0, 60.0]
}
fn default_lateral() -> [f64; 2] {
    [-12.0, 12.0]
}
fn default_vertical() -> [f64; 2] {
    [8.0, 26.0]
}
fn default_head_turn() -> [f64; 2] {
    [-11.5, 11.5]
}
fn default_ipd() -> f64 {
    6.3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactSection {
    pub blink: f64,
    pub reflection: f64,
    pub occlusion: f64,
    pub closed: f64,
}

impl Default for ArtifactSection {
    fn default() -> Self {
        let p = ArtifactProbs::default();
        ArtifactSection {
            blink: p.blink,
            reflection: p.reflection,
            occlusion: p.occlusion,
            closed: p.closed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_aux_ratio")]
    pub aux_ratio: f64,
    #[serde(default)]
    pub no_intra_validation: bool,
    #[serde(default)]
    pub no_weighted_fusion: bool,
    #[serde(default)]
    pub drop_camera: Option<usize>,
    /// Network width preset: "default", "small", or "tiny".
    #[serde(default = "default_net")]
    pub net: String,
}

fn default_epochs() -> usize {
    150
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_aux_ratio() -> f64 {
    0.1
}
fn default_net() -> String {
    "default".into()
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section uses defaults")
    }
}

/// The whole config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    pub screen: ScreenSection,
    pub cameras: Vec<CameraSection>,
    #[serde(default)]
    pub scene: Option<SceneSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub criteria: Option<FilterCriteria>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ConfigFile = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.cameras.is_empty() {
            bail!("config {} declares no cameras", path.display());
        }
        Ok(cfg)
    }

    pub fn rig(&self) -> Result<Rig> {
        let screen = ScreenModel::new(
            self.screen.width_px,
            self.screen.height_px,
            self.screen.width_cm,
            self.screen.height_cm,
        )?;
        let cameras = self
            .cameras
            .iter()
            .map(|c| {
                let orientation = Mat3::pitch_down(c.pitch_deg.to_radians())
                    .mul_mat(&Mat3::yaw(c.yaw_deg.to_radians()));
                CameraModel::new(
                    Vec3::new(c.position_cm[0], c.position_cm[1], c.position_cm[2]),
                    orientation,
                    c.focal_px,
                    (c.principal_point[0], c.principal_point[1]),
                    c.resolution[0],
                    c.resolution[1],
                )
                .map_err(anyhow::Error::from)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Rig { screen, cameras })
    }

    pub fn scene_config(&self) -> Result<SceneConfig> {
        let rig = self.rig()?;
        let mut cfg = SceneConfig::desk_default(rig);
        if let Some(s) = &self.scene {
            cfg.distance_cm = (s.distance_cm[0], s.distance_cm[1]);
            cfg.lateral_cm = (s.lateral_cm[0], s.lateral_cm[1]);
            cfg.vertical_cm = (s.vertical_cm[0], s.vertical_cm[1]);
            cfg.head_turn_rad = (s.head_turn_deg[0].to_radians(), s.head_turn_deg[1].to_radians());
            cfg.interpupillary_cm = s.interpupillary_cm;
            cfg.artifact_probs = ArtifactProbs {
                blink: s.artifacts.blink,
                reflection: s.artifacts.reflection,
                occlusion: s.artifacts.occlusion,
                closed: s.artifacts.closed,
            };
            if cfg.artifact_probs.sum() > 1.0 {
                bail!("artifact probabilities sum above 1");
            }
        }
        Ok(cfg)
    }

    pub fn train_run(&self, seed: u64, epochs_override: Option<usize>) -> Result<TrainRunConfig> {
        let section = self.train.clone().unwrap_or_default();
        let net = match section.net.as_str() {
            "default" => TriCamConfig::default(),
            "small" => TriCamConfig::small(0),
            "tiny" => TriCamConfig::tiny(0),
            other => bail!("unknown net preset {other:?} (expected default/small/tiny)"),
        };
        Ok(TrainRunConfig {
            epochs: epochs_override.unwrap_or(section.epochs),
            batch_size: section.batch_size,
            hyper: TrainHyper { lr: section.lr, ..TrainHyper::default() },
            aux_ratio: section.aux_ratio,
            ablation: AblationFlags {
                no_intra_validation: section.no_intra_validation,
                no_weighted_fusion: section.no_weighted_fusion,
                drop_camera: section.drop_camera,
            },
            seed,
            net,
        })
    }

    /// The config that describes the built-in desk rig.
    pub fn desk_default() -> Self {
        ConfigFile {
            screen: ScreenSection {
                width_px: 1920,
                height_px: 1080,
                width_cm: 59.789,
                height_cm: 33.631,
            },
            cameras: [0.25f64, 0.5, 0.75]
                .iter()
                .map(|f| CameraSection {
                    position_cm: [59.789 * f, 0.0, 0.0],
                    pitch_deg: 10.0,
                    yaw_deg: 0.0,
                    focal_px: 1200.0,
                    principal_point: [960.0, 540.0],
                    resolution: [1920, 1080],
                })
                .collect(),
            scene: None,
            train: None,
            criteria: None,
        }
    }
}

pub fn load_criteria(path: Option<&Path>, config: &Option<ConfigFile>) -> Result<FilterCriteria> {
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading criteria {}", p.display()))?;
        return toml::from_str(&text).with_context(|| format!("parsing criteria {}", p.display()));
    }
    if let Some(cfg) = config {
        if let Some(c) = &cfg.criteria {
            return Ok(c.clone());
        }
    }
    Ok(FilterCriteria::default())
}
