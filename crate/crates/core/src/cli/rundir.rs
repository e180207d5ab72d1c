//! Run directory layout `<runs>/<name>/{config, checkpoints/, metrics,
//! figures/}`, guarded by a lock file while a command writes to it.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".lock";

/// An exclusively held run directory; the lock is released on drop.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    /// Creates the layout if needed and takes the lock.
    pub fn open(root: &Path) -> Result<Self> {
        for dir in [root.to_path_buf(), root.join("checkpoints"), root.join("figures")] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let lock = root.join(LOCK_FILE);
        let mut file = OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::invalid(format!(
                    "run directory `{}` is in use by another command (remove `{}` if it is stale)",
                    root.display(),
                    lock.display()
                ))
            } else {
                Error::io(&lock, e)
            }
        })?;
        let _ = writeln!(file, "{}", std::process::id());
        Ok(Self {
            root: root.to_path_buf(),
            lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics")
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.root.join("figures")
    }

    pub fn checkpoint_path(&self, round: usize) -> PathBuf {
        checkpoint_path(&self.root, round)
    }

    pub fn write(&self, path: &Path, contents: &str) -> Result<()> {
        fs::write(path, contents).map_err(|e| Error::io(path, e))
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

pub fn checkpoint_path(run_root: &Path, round: usize) -> PathBuf {
    run_root.join("checkpoints").join(format!("round{round}.ckpt"))
}

/// Thresholds live next to their checkpoint.
pub fn thresholds_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("thresholds")
}

/// `class,threshold` lines.
pub fn thresholds_to_text(classes: &[String], thresholds: &[f64]) -> String {
    let mut out = String::from("class,threshold\n");
    for (c, t) in classes.iter().zip(thresholds) {
        out.push_str(&format!("{c},{t}\n"));
    }
    out
}

pub fn thresholds_from_text(text: &str, source: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.rsplit_once(',')
                .and_then(|(_, t)| t.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    file: source.to_string(),
                    msg: format!("line {}: expected `class,threshold`", i + 1),
                })
        })
        .collect()
}
