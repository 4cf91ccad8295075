use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Output directory plus the file-name stem of the current command.
pub struct Output {
    dir: PathBuf,
    stem: String,
}

impl Output {
    pub fn new(dir: &Path, stem: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
        })
    }

    pub fn path(&self, suffix: &str, ext: &str) -> PathBuf {
        let name = if suffix.is_empty() {
            format!("{}.{ext}", self.stem)
        } else {
            format!("{}_{suffix}.{ext}", self.stem)
        };
        self.dir.join(name)
    }

    pub fn create(&self, suffix: &str, ext: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(suffix, ext);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }

    /// Serialize rows with a header taken from the field names.
    pub fn rows<T: Serialize>(&self, suffix: &str, rows: &[T]) -> Result<PathBuf> {
        let (path, file) = self.create(suffix, "csv")?;
        let mut w = csv::Writer::from_writer(file);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, suffix: &str, value: &T) -> Result<PathBuf> {
        let (path, file) = self.create(suffix, "json")?;
        serde_json::to_writer_pretty(file, value)?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

/// JSON sidecar: the command, its resolved arguments, and results.
#[derive(Serialize)]
pub struct Metadata<'a, A: Serialize, R: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub args: &'a A,
    #[serde(flatten)]
    pub results: R,
}

pub fn metadata<'a, A: Serialize, R: Serialize>(
    command: &'a str,
    args: &'a A,
    results: R,
) -> Metadata<'a, A, R> {
    Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
        results,
    }
}
