//! Step-numbered checkpoint directories.
//!
//! ```text
//! root/step-000500/
//!     generator.json    opaque generator blob
//!     manifest.json     backend, step, vocabulary size, config hash
//!     optimizer.json    optimizer moments
//!     state.json        trainer bookkeeping
//!     reports.jsonl     one step report per line
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::policy::{ConditionalGenerator, PolicyError};
use crate::scalar::Scalar;
use crate::toy::ToyGenerator;

pub const GENERATOR_FILE: &str = "generator.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed {file}: {message}")]
    Malformed { file: String, message: String },
    #[error("checkpoint holds backend {found:?}, expected {expected:?}")]
    BackendMismatch { expected: String, found: String },
    #[error("no checkpoint under {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    Generator(#[from] PolicyError),
}

/// A generator that can be written to and restored from an opaque blob.
pub trait Checkpointable: Sized {
    /// Backend identifier recorded in the manifest.
    fn backend(&self) -> &'static str;
    fn to_blob(&self) -> Vec<u8>;
    fn from_blob(bytes: &[u8]) -> Result<Self, PolicyError>;
}

impl<F: Scalar> Checkpointable for ToyGenerator<F> {
    fn backend(&self) -> &'static str {
        "toy"
    }

    fn to_blob(&self) -> Vec<u8> {
        ToyGenerator::to_blob(self)
    }

    fn from_blob(bytes: &[u8]) -> Result<Self, PolicyError> {
        ToyGenerator::from_blob(bytes)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub backend: String,
    pub step: usize,
    pub vocab_size: usize,
    /// Hex SHA-256 of the run configuration text.
    pub config_hash: String,
    pub version: String,
}

pub fn config_hash(config_text: &str) -> String {
    Sha256::digest(config_text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn step_dir_name(step: usize) -> String {
    format!("step-{step:06}")
}

fn parse_step_dir(name: &str) -> Option<usize> {
    name.strip_prefix("step-")?.parse().ok()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CheckpointError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| CheckpointError::Malformed {
        file: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CheckpointError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CheckpointError::Malformed {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CheckpointError> {
    let mut out = String::new();
    for r in rows {
        let line = serde_json::to_string(r).map_err(|e| CheckpointError::Malformed {
            file: path.display().to_string(),
            message: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CheckpointError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| CheckpointError::Malformed {
                file: path.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// A directory of step checkpoints.
#[derive(Clone, Debug)]
pub struct CheckpointDir {
    root: PathBuf,
}

impl CheckpointDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CheckpointDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn step_path(&self, step: usize) -> PathBuf {
        self.root.join(step_dir_name(step))
    }

    /// Writes generator, manifest and any extra files into a fresh step
    /// directory. Files land in a temporary sibling first and are renamed
    /// into place, replacing an older directory for the same step.
    pub fn save<F: Scalar, G>(
        &self,
        step: usize,
        gen: &G,
        config_text: &str,
        extra: impl FnOnce(&Path) -> Result<(), CheckpointError>,
    ) -> Result<PathBuf, CheckpointError>
    where
        G: ConditionalGenerator<F> + Checkpointable,
    {
        fs::create_dir_all(&self.root)?;
        let final_dir = self.step_path(step);
        let tmp = self.root.join(format!(".{}.tmp", step_dir_name(step)));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        fs::write(tmp.join(GENERATOR_FILE), gen.to_blob())?;
        let manifest = Manifest {
            backend: gen.backend().to_string(),
            step,
            vocab_size: gen.vocabulary().len(),
            config_hash: config_hash(config_text),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        write_json(&tmp.join(MANIFEST_FILE), &manifest)?;
        extra(&tmp)?;
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir)?;
        }
        fs::rename(&tmp, &final_dir)?;
        Ok(final_dir)
    }

    /// Steps present on disk, ascending.
    pub fn steps(&self) -> Result<Vec<usize>, CheckpointError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut steps = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                if let Some(s) = entry.file_name().to_str().and_then(parse_step_dir) {
                    steps.push(s);
                }
            }
        }
        steps.sort_unstable();
        Ok(steps)
    }

    pub fn latest(&self) -> Result<Option<PathBuf>, CheckpointError> {
        Ok(self.steps()?.last().map(|&s| self.step_path(s)))
    }
}

/// Resolves a path that is either a step directory or a checkpoint root
/// (then the latest step is used).
pub fn resolve_step_dir(path: &Path) -> Result<PathBuf, CheckpointError> {
    if path.join(MANIFEST_FILE).exists() {
        return Ok(path.to_path_buf());
    }
    CheckpointDir::new(path)
        .latest()?
        .ok_or_else(|| CheckpointError::Missing(path.to_path_buf()))
}

pub fn load_manifest(step_dir: &Path) -> Result<Manifest, CheckpointError> {
    read_json(&step_dir.join(MANIFEST_FILE))
}

pub fn load_generator<G: Checkpointable>(step_dir: &Path) -> Result<(G, Manifest), CheckpointError> {
    let manifest = load_manifest(step_dir)?;
    let gen = G::from_blob(&fs::read(step_dir.join(GENERATOR_FILE))?)?;
    if gen.backend() != manifest.backend {
        return Err(CheckpointError::BackendMismatch {
            expected: gen.backend().to_string(),
            found: manifest.backend,
        });
    }
    Ok((gen, manifest))
}
