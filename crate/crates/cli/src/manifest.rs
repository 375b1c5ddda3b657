//! Run directories, atomic artifact writes, and the run manifest.
//!
//! Every command writes its artifacts into one output directory through a
//! [`RunDir`]: files land under a temporary name first and are renamed into
//! place, and if the command fails before [`RunDir::commit`], every file it
//! wrote — the manifest included — is removed again. A half-finished run
//! therefore leaves no artifacts behind to be mistaken for results.
//!
//! The manifest is written first, before any artifact, and lists the
//! effective configuration (after flag/file/default resolution), the seeds,
//! the tool version, and the relative path of every artifact the run will
//! produce. It reuses the `key=value` config syntax so a manifest can be
//! diffed against the config file that produced it.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sparseproj::io::FileError;

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Accumulates the manifest's `key=value` lines.
#[derive(Debug)]
pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    /// Starts a manifest for one command, stamping tool identity and time.
    /// The timestamp records when the run happened; it is the one field two
    /// otherwise identical runs do not share.
    pub fn new(command: &str) -> Manifest {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut m = Manifest { lines: Vec::new() };
        m.set("tool", format!("sparseproj {}", env!("CARGO_PKG_VERSION")));
        m.set("command", command);
        m.set("created_unix", unix);
        m
    }

    /// Records one effective-config entry.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.lines.push(format!("{key}={value}"));
    }

    /// Records an artifact path relative to the run directory.
    pub fn artifact(&mut self, name: &str) {
        self.lines.push(format!("artifact={name}"));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// One command's output directory, with rollback on failure.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl RunDir {
    /// Creates (or reuses) the directory. Existing files are left alone —
    /// only files this run writes are rolled back on failure.
    pub fn create(root: &Path) -> Result<RunDir, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Data(format!("{}: cannot create: {e}", root.display())))?;
        Ok(RunDir { root: root.to_path_buf(), written: Vec::new(), committed: false })
    }

    /// Writes `bytes` to `name` atomically: a temporary file renamed into
    /// place, so no reader ever sees a half-written artifact.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let final_path = self.root.join(name);
        let tmp_path = self.root.join(format!(".{name}.tmp"));
        let io_err =
            |path: &Path, e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
        fs::write(&tmp_path, bytes).map_err(|e| io_err(&tmp_path, e))?;
        if let Err(e) = fs::rename(&tmp_path, &final_path) {
            let _ = fs::remove_file(&tmp_path);
            return Err(io_err(&final_path, e));
        }
        self.written.push(final_path);
        Ok(())
    }

    /// Writes an artifact through one of the core `save_*` functions, with
    /// the same rename-into-place discipline.
    pub fn save_with(
        &mut self,
        name: &str,
        save: impl FnOnce(&Path) -> Result<(), FileError>,
    ) -> Result<(), CliError> {
        let final_path = self.root.join(name);
        let tmp_path = self.root.join(format!(".{name}.tmp"));
        if let Err(e) = save(&tmp_path) {
            let _ = fs::remove_file(&tmp_path);
            return Err(CliError::in_file(&final_path, e));
        }
        if let Err(e) = fs::rename(&tmp_path, &final_path) {
            let _ = fs::remove_file(&tmp_path);
            return Err(CliError::Data(format!("{}: {e}", final_path.display())));
        }
        self.written.push(final_path);
        Ok(())
    }

    /// Writes the manifest itself. Called first, per the run contract.
    pub fn write_manifest(&mut self, manifest: &Manifest) -> Result<(), CliError> {
        self.write_bytes(MANIFEST_NAME, manifest.to_text().as_bytes())
    }

    /// Marks the run successful; the files stay.
    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        // Remove the directory too if the rollback emptied it.
        let _ = fs::remove_dir(&self.root);
    }
}
