//! On-disk dataset container: a JSON manifest plus one fixed-width binary
//! record per sample.
//!
//! `samples.bin` layout, little-endian, per record:
//!
//! | field                | type        | bytes |
//! |----------------------|-------------|-------|
//! | scene_seed           | u64         | 8     |
//! | target_px            | 2 × f64     | 16    |
//! | eye_centers          | 6 × f64     | 48    |
//! | per channel (×6):    |             |       |
//! |   detected           | u8          | 1     |
//! |   artifact_kind      | u8          | 1     |
//! |   artifact_intensity | f64         | 8     |
//! |   u, v               | 2 × f64     | 16    |
//! |   image              | 800 × u16   | 1600  |
//!
//! Channel order is camera-major (camera·2 + eye); images are row-major
//! 40×20 grayscale quantized to 16 bits (`round(v·65535)`). Undetected
//! channels store the −1/−1 sentinel and an all-zero image. The manifest
//! records the generator inputs and the SHA-256 of `samples.bin`, so a
//! dataset is reproducible and verifiable bit-for-bit.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use tricam_core::geometry::{Rig, Vec3, ViewCoord};
use tricam_core::synth::{
    synth_sample, ArtifactKind, ChannelObs, EyeImage, QualityArtifact, Sample, SceneConfig,
    EYE_IMG_LEN, NUM_CHANNELS,
};

use crate::config::{ConfigFile, SceneSection};
use crate::manifest::sha256_file;

pub const FORMAT_VERSION: u32 = 1;
pub const RECORD_BYTES: usize = 8 + 16 + 48 + NUM_CHANNELS * (1 + 1 + 8 + 16 + 2 * EYE_IMG_LEN);

/// Manifest stored next to the records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub count: usize,
    pub seed: u64,
    pub sample_hash: String,
    pub screen: crate::config::ScreenSection,
    pub cameras: Vec<crate::config::CameraSection>,
    pub scene: SceneSection,
}

fn artifact_kind_code(kind: ArtifactKind) -> u8 {
    match kind {
        ArtifactKind::None => 0,
        ArtifactKind::Blink => 1,
        ArtifactKind::Closed => 2,
        ArtifactKind::Reflection => 3,
        ArtifactKind::Occlusion => 4,
    }
}

fn artifact_kind_from(code: u8) -> Result<ArtifactKind> {
    Ok(match code {
        0 => ArtifactKind::None,
        1 => ArtifactKind::Blink,
        2 => ArtifactKind::Closed,
        3 => ArtifactKind::Reflection,
        4 => ArtifactKind::Occlusion,
        other => bail!("unknown artifact code {other}"),
    })
}

fn encode_record(out: &mut Vec<u8>, s: &Sample) {
    out.extend_from_slice(&s.scene_seed.to_le_bytes());
    out.extend_from_slice(&s.target_px.0.to_le_bytes());
    out.extend_from_slice(&s.target_px.1.to_le_bytes());
    for c in &s.eye_centers {
        out.extend_from_slice(&c.x.to_le_bytes());
        out.extend_from_slice(&c.y.to_le_bytes());
        out.extend_from_slice(&c.z.to_le_bytes());
    }
    for ch in &s.channels {
        out.push(u8::from(ch.view.detected));
        out.push(artifact_kind_code(ch.artifact.kind));
        out.extend_from_slice(&ch.artifact.intensity.to_le_bytes());
        out.extend_from_slice(&ch.view.u.to_le_bytes());
        out.extend_from_slice(&ch.view.v.to_le_bytes());
        for &v in &ch.image.data {
            let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
}

fn decode_record(buf: &[u8]) -> Result<Sample> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> &[u8] {
        let s = &buf[pos..pos + n];
        pos += n;
        s
    };
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));

    let scene_seed = u64::from_le_bytes(take(8).try_into().expect("8 bytes"));
    let target_px = (f64_at(take(8)), f64_at(take(8)));
    let mut eye_centers = [Vec3::ZERO; 2];
    for c in eye_centers.iter_mut() {
        *c = Vec3::new(f64_at(take(8)), f64_at(take(8)), f64_at(take(8)));
    }
    let mut channels = Vec::with_capacity(NUM_CHANNELS);
    for _ in 0..NUM_CHANNELS {
        let detected = take(1)[0] != 0;
        let kind = artifact_kind_from(take(1)[0])?;
        let intensity = f64_at(take(8));
        let u = f64_at(take(8));
        let v = f64_at(take(8));
        let mut image = EyeImage::black();
        for (i, px) in image.data.iter_mut().enumerate() {
            let b = &buf[pos + 2 * i..pos + 2 * i + 2];
            *px = u16::from_le_bytes(b.try_into().expect("2 bytes")) as f64 / 65535.0;
        }
        pos += 2 * EYE_IMG_LEN;
        channels.push(ChannelObs {
            view: if detected { ViewCoord::at(u, v) } else { ViewCoord::undetected() },
            image,
            artifact: QualityArtifact { kind, intensity },
        });
    }
    Ok(Sample { channels, target_px, eye_centers, scene_seed })
}

/// Generate `n` samples and write the container. Returns the manifest.
pub fn generate(
    config: &ConfigFile,
    cfg: &SceneConfig,
    n: usize,
    seed: u64,
    dir: &Path,
) -> Result<DatasetManifest> {
    if n == 0 {
        bail!("empty-dataset: n must be at least 1");
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let bin_path = dir.join("samples.bin");
    {
        let file = std::fs::File::create(&bin_path)
            .with_context(|| format!("creating {}", bin_path.display()))?;
        let mut w = BufWriter::new(file);
        let mut record = Vec::with_capacity(RECORD_BYTES);
        for i in 0..n as u64 {
            let s = synth_sample(cfg, tricam_core::synth::derive_scene_seed(seed, i));
            record.clear();
            encode_record(&mut record, &s);
            debug_assert_eq!(record.len(), RECORD_BYTES);
            w.write_all(&record)
                .with_context(|| format!("writing {}", bin_path.display()))?;
        }
        w.flush().with_context(|| format!("flushing {}", bin_path.display()))?;
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        count: n,
        seed,
        sample_hash: sha256_file(&bin_path)?,
        screen: config.screen.clone(),
        cameras: config.cameras.clone(),
        scene: scene_section_of(cfg),
    };
    let manifest_path = dir.join("manifest.json");
    crate::manifest::write_json_atomic(&manifest_path, &manifest)?;
    Ok(manifest)
}

fn scene_section_of(cfg: &SceneConfig) -> SceneSection {
    SceneSection {
        distance_cm: [cfg.distance_cm.0, cfg.distance_cm.1],
        lateral_cm: [cfg.lateral_cm.0, cfg.lateral_cm.1],
        vertical_cm: [cfg.vertical_cm.0, cfg.vertical_cm.1],
        head_turn_deg: [cfg.head_turn_rad.0.to_degrees(), cfg.head_turn_rad.1.to_degrees()],
        interpupillary_cm: cfg.interpupillary_cm,
        artifacts: crate::config::ArtifactSection {
            blink: cfg.artifact_probs.blink,
            reflection: cfg.artifact_probs.reflection,
            occlusion: cfg.artifact_probs.occlusion,
            closed: cfg.artifact_probs.closed,
        },
    }
}

/// A dataset loaded back into memory.
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
    pub rig: Rig,
}

pub fn load(dir: &Path) -> Result<LoadedDataset> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    if manifest.format_version != FORMAT_VERSION {
        bail!("dataset format version {} is not supported", manifest.format_version);
    }

    let bin_path = dir.join("samples.bin");
    let hash = sha256_file(&bin_path)?;
    if hash != manifest.sample_hash {
        bail!("dataset {} is corrupted: sample hash mismatch", dir.display());
    }

    let file = std::fs::File::open(&bin_path)
        .with_context(|| format!("opening {}", bin_path.display()))?;
    let mut r = BufReader::new(file);
    let mut samples = Vec::with_capacity(manifest.count);
    let mut buf = vec![0u8; RECORD_BYTES];
    for i in 0..manifest.count {
        r.read_exact(&mut buf)
            .with_context(|| format!("record {i} of {}", bin_path.display()))?;
        samples.push(decode_record(&buf)?);
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        bail!("dataset {} has trailing bytes beyond {} records", dir.display(), manifest.count);
    }

    let config = ConfigFile {
        screen: manifest.screen.clone(),
        cameras: manifest.cameras.clone(),
        scene: Some(manifest.scene.clone()),
        train: None,
        criteria: None,
    };
    let rig = config.rig()?;
    Ok(LoadedDataset { manifest, samples, rig })
}
