//! Model checkpoint container.
//!
//! Layout: magic `TCMK`, format version (u32 LE), header length (u32 LE),
//! a JSON header (network config, named parameter blocks, the rig the model
//! was trained against), then every parameter as f64 little-endian in block
//! order. Loading verifies magic, version, and length, and refuses a
//! checkpoint whose stored layout disagrees with its own config.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use tricam_core::geometry::Rig;
use tricam_core::network::{count_params_for, init_model, ParamBlock, TriCamConfig, TriCamModel};

const MAGIC: &[u8; 4] = b"TCMK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: TriCamConfig,
    blocks: Vec<ParamBlock>,
    rig: Rig,
}

pub fn save(path: &Path, model: &TriCamModel, rig: &Rig) -> Result<()> {
    let header = Header { config: model.config.clone(), blocks: model.blocks.clone(), rig: rig.clone() };
    let header_bytes = serde_json::to_vec(&header)?;
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp)
            .with_context(|| format!("creating {}", tmp.display()))?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for v in &model.params {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(TriCamModel, Rig)> {
    let file =
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).context("reading checkpoint magic")?;
    if &magic != MAGIC {
        bail!("{} is not a model checkpoint", path.display());
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        bail!("checkpoint version {version} is not supported");
    }
    r.read_exact(&mut word)?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).context("reading checkpoint header")?;
    let header: Header = serde_json::from_slice(&header_bytes).context("parsing checkpoint header")?;

    // the stored layout must be exactly what the config reproduces
    let expect = init_model(&header.config).context("checkpoint config is invalid")?;
    if expect.blocks != header.blocks {
        bail!("checkpoint layout disagrees with its config (mismatched build?)");
    }
    let n = count_params_for(&header.config)?;
    let mut params = vec![0.0f64; n];
    let mut buf = [0u8; 8];
    for p in params.iter_mut() {
        r.read_exact(&mut buf).context("reading parameters")?;
        *p = f64::from_le_bytes(buf);
    }
    if r.read(&mut buf)? != 0 {
        bail!("checkpoint {} has trailing bytes", path.display());
    }
    if params.iter().any(|v| !v.is_finite()) {
        bail!("checkpoint {} holds non-finite parameters", path.display());
    }
    Ok((TriCamModel { config: header.config, blocks: header.blocks, params }, header.rig))
}
