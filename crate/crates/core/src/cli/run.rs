use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{AblationTable, EvalReport, PlotRow};
use crate::training::CHECKPOINT_VERSION;

pub const MANIFEST_NAME: &str = "manifest.json";

/// `<output_dir>/<timestamp>-<confighash>` with `checkpoints`, `logs` and
/// `reports` inside.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(output_dir: &Path, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("{stamp}-{config_hash}");
        let mut n = 1;
        let root = loop {
            let name = if n == 1 {
                base.clone()
            } else {
                format!("{base}-{n}")
            };
            let candidate = output_dir.join(name);
            match fs::create_dir(&candidate) {
                Ok(()) => break candidate,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(Error::io(&candidate, e)),
            }
        };
        let dir = RunDir { root };
        for sub in [dir.checkpoints(), dir.logs(), dir.reports()] {
            fs::create_dir(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        Ok(dir)
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_NAME)
    }
}

/// What a command was asked to do beyond its config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Train { evaluate: bool },
    Eval { checkpoint: PathBuf },
    Ablate { variants: Vec<String> },
    Sweep { parameter: String, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub invocation: Invocation,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub version: String,
    pub checkpoint_version: u32,
    pub started_at: String,
    pub wall_clock_secs: f64,
    pub report: Option<EvalReport>,
    pub ablation: Option<AblationTable>,
    pub sweep: Option<Vec<PlotRow>>,
}

impl RunManifest {
    pub fn new(
        invocation: Invocation,
        config: &RunConfig,
        dataset_hash: String,
        started_at: String,
    ) -> Self {
        RunManifest {
            invocation,
            config: config.clone(),
            config_hash: config.hash(),
            seed: config.train.seed,
            dataset_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_version: CHECKPOINT_VERSION,
            started_at,
            wall_clock_secs: 0.0,
            report: None,
            ablation: None,
            sweep: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
