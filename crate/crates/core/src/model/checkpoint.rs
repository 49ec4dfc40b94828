//! Self-describing binary checkpoints: magic, version, a JSON header with the
//! model configuration and run metadata, then the flat f64 parameter data in
//! little-endian order. The parameter layout is reconstructed from the
//! configuration, which the loader re-derives and length-checks.

use super::{Layout, ModelConfig, ModelError, Parameters};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

const MAGIC: &[u8; 8] = b"RIGFORGE";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub stage: u8,
    pub seed: u64,
    pub step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: CheckpointMeta,
    param_count: usize,
}

pub fn save_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    params: &Parameters,
    meta: &CheckpointMeta,
) -> Result<(), ModelError> {
    let header = Header { config: *cfg, meta: meta.clone(), param_count: params.data.len() };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for v in &params.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, Parameters, CheckpointMeta), ModelError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(ModelError::Checkpoint("unsupported version".into()));
    }
    r.read_exact(&mut u32buf)?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;

    let layout = Arc::new(Layout::for_config(&header.config));
    if layout.total() != header.param_count {
        return Err(ModelError::Checkpoint(format!(
            "parameter count {} does not match the configuration layout ({})",
            header.param_count,
            layout.total()
        )));
    }
    let mut data = vec![0.0f64; header.param_count];
    let mut f64buf = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut f64buf)?;
        *v = f64::from_le_bytes(f64buf);
    }
    Ok((header.config, Parameters { layout, data }, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("rigforge_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");

        let cfg = ModelConfig::tiny(260);
        let params = Parameters::init(&cfg, 77).unwrap();
        let meta = CheckpointMeta { stage: 1, seed: 77, step: 123 };
        save_checkpoint(&path, &cfg, &params, &meta).unwrap();
        let (cfg2, params2, meta2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(meta, meta2);
        assert_eq!(params.data, params2.data);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = std::env::temp_dir().join("rigforge_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        std::fs::write(&path, b"NOTRIGFORGE").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
