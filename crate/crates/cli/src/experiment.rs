//! The experiment directory: manifest, lock and stage markers.

use std::fmt;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
const STAGES_DIR: &str = "stages";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Gen,
    TrainLm,
    Embed,
    TrainProbe,
    TrainCcs,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Gen,
        Stage::TrainLm,
        Stage::Embed,
        Stage::TrainProbe,
        Stage::TrainCcs,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::TrainLm => "train-lm",
            Stage::Embed => "embed",
            Stage::TrainProbe => "train-probe",
            Stage::TrainCcs => "train-ccs",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    /// Stages whose artifacts this one reads.
    pub fn needs(self) -> &'static [Stage] {
        match self {
            Stage::Gen => &[],
            Stage::TrainLm => &[Stage::Gen],
            Stage::Embed => &[Stage::TrainLm],
            Stage::TrainProbe | Stage::TrainCcs => &[Stage::Embed],
            Stage::Eval => &[Stage::TrainProbe, Stage::TrainCcs],
            Stage::Report => &[Stage::Eval],
        }
    }

    /// Every stage that reads this one's artifacts, directly or not.
    pub fn downstream(self) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        for s in Stage::ALL {
            if s.needs().iter().any(|d| *d == self || out.contains(d)) {
                out.push(s);
            }
        }
        out
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
}

/// Removes the lock file when dropped.
#[derive(Debug)]
struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

/// An experiment directory owned by this process.
#[derive(Debug)]
pub struct Experiment {
    pub root: PathBuf,
    pub config: ExperimentConfig,
    _lock: Lock,
}

impl Experiment {
    /// Opens `<out>/<id>`, taking its lock. A manifest recorded for a
    /// different config invalidates every completed stage.
    pub fn open(out: &Path, config: ExperimentConfig) -> Result<Self> {
        let root = out.join(&config.id);
        fs::create_dir_all(root.join(STAGES_DIR)).with_context(|| format!("creating {}", root.display()))?;
        let lock_path = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(_) => {}
            Err(e) if e.kind() == ErrorKind::AlreadyExists => bail!(
                "{} is locked by another run; remove {} if no run is active",
                root.display(),
                lock_path.display()
            ),
            Err(e) => return Err(e).with_context(|| format!("creating {}", lock_path.display())),
        }
        let exp = Self {
            root,
            config,
            _lock: Lock(lock_path),
        };

        let manifest = Manifest {
            id: exp.config.id.clone(),
            config_hash: exp.config.hash(),
            config: exp.config.clone(),
        };
        let path = exp.root.join(MANIFEST_FILE);
        let previous = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v.get("config_hash")?.as_str().map(str::to_string)),
            Err(e) if e.kind() == ErrorKind::NotFound => None,
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        if previous.as_deref() != Some(manifest.config_hash.as_str()) {
            if previous.is_some() {
                eprintln!("config changed since the last run; every stage will rerun");
            }
            for s in Stage::ALL {
                exp.clear_markers(s)?;
            }
            fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        }
        Ok(exp)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn marker(&self, stage: Stage, ext: &str) -> PathBuf {
        self.root.join(STAGES_DIR).join(format!("{}.{ext}", stage.name()))
    }

    pub fn is_done(&self, stage: Stage) -> bool {
        self.marker(stage, "done").exists()
    }

    fn clear_markers(&self, stage: Stage) -> Result<()> {
        for ext in ["done", "failed"] {
            match fs::remove_file(self.marker(stage, ext)) {
                Err(e) if e.kind() != ErrorKind::NotFound => return Err(e.into()),
                _ => {}
            }
        }
        Ok(())
    }

    /// Runs `stage` unless it already completed (and `force` is off).
    /// Running a stage invalidates everything downstream of it. A failure
    /// leaves its partial artifacts in place next to a `.failed` marker.
    pub fn run(&self, stage: Stage, force: bool, body: impl FnOnce(&Self) -> Result<()>) -> Result<Outcome> {
        if self.is_done(stage) && !force {
            return Ok(Outcome::Skipped);
        }
        for need in stage.needs() {
            if !self.is_done(*need) {
                bail!("stage {stage} needs {need}, which has not completed");
            }
        }
        self.clear_markers(stage)?;
        for s in stage.downstream() {
            self.clear_markers(s)?;
        }
        match body(self) {
            Ok(()) => {
                fs::write(self.marker(stage, "done"), "")?;
                Ok(Outcome::Ran)
            }
            Err(e) => {
                let _ = fs::write(self.marker(stage, "failed"), format!("{e:#}\n"));
                Err(e.context(format!("stage {stage} failed")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downstream_closure() {
        assert_eq!(Stage::Report.downstream(), []);
        assert_eq!(Stage::TrainCcs.downstream(), [Stage::Eval, Stage::Report]);
        assert_eq!(Stage::Gen.downstream(), &Stage::ALL[1..]);
    }
}
