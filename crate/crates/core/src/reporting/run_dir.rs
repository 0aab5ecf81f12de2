use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::training::{EpochRecord, HISTORY_CSV_HEADER};

/// File layout of a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("history.csv")
    }

    pub fn report_text(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn report_struct(&self) -> PathBuf {
        self.root.join("report.struct")
    }

    pub fn warnings(&self) -> PathBuf {
        self.root.join("warnings.log")
    }

    pub fn train_index(&self) -> PathBuf {
        self.root.join("train.index")
    }

    pub fn val_index(&self) -> PathBuf {
        self.root.join("val.index")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint(&self, epoch: usize) -> PathBuf {
        self.checkpoints().join(format!("epoch_{epoch}"))
    }

    pub fn create(&self) -> Result<()> {
        std::fs::create_dir_all(self.checkpoints()).map_err(|e| Error::io(self.checkpoints(), e))
    }

    /// Appends one row to `history.csv`, writing the header first if the
    /// file is new.
    pub fn append_history(&self, record: &EpochRecord) -> Result<()> {
        let path = self.history();
        let fresh = !path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut text = String::new();
        if fresh {
            text.push_str(HISTORY_CSV_HEADER);
            text.push('\n');
        }
        text.push_str(&record.csv_row());
        text.push('\n');
        file.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    pub fn append_warnings(&self, lines: &[String]) -> Result<()> {
        if lines.is_empty() {
            return Ok(());
        }
        let path = self.warnings();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut text = lines.join("\n");
        text.push('\n');
        file.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
    }
}
