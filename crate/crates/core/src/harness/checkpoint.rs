//! Gzipped checkpoints: a 16-byte magic, a little-endian `u32` format
//! version, then a JSON body. Floats are written in shortest round-trip
//! form so a reloaded learner continues bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::learners::Learner;

pub const MAGIC: &[u8; 16] = b"CLSER-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Tasks fully trained so far.
    pub tasks_done: usize,
    pub learner: Learner,
    /// Per component (working, plastic, stable), one evaluation row per
    /// finished task when the cadence asks for it.
    pub snapshots: Vec<Vec<Option<Vec<f64>>>>,
    pub elapsed_secs: f64,
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.ckpt.gz"))
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let file = fs::File::create(&tmp)?;
        let mut enc = GzEncoder::new(std::io::BufWriter::new(file), Compression::fast());
        enc.write_all(MAGIC)?;
        enc.write_all(&FORMAT_VERSION.to_le_bytes())?;
        serde_json::to_writer(&mut enc, ckpt)?;
        enc.finish()?.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = fs::File::open(path)?;
    let mut dec = GzDecoder::new(std::io::BufReader::new(file));
    let mut header = [0u8; 20];
    dec.read_exact(&mut header)
        .map_err(|e| Error::Checkpoint(format!("{}: truncated header ({e})", path.display())))?;
    if &header[..16] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(header[16..20].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("{}: unsupported version {version}", path.display())));
    }
    Ok(serde_json::from_reader(dec)?)
}
