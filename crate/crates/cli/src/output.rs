use std::fs;
use std::path::{Path, PathBuf};

use dtsnn::data::ExperimentConfig;
use dtsnn::{Error, Result};
use serde::Serialize;

/// Schema version of every CSV this tool writes.
pub const CSV_SCHEMA: u32 = 1;

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    csv_schema: u32,
    command: &'a str,
    args: Vec<String>,
    seed: u64,
    config: &'a ExperimentConfig,
    outputs: &'a [String],
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::Io {
            path: root.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        fs::write(&tmp, contents)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| Error::Io { path, source: e })?;
        self.record(name);
        Ok(())
    }

    pub fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> Result<()> {
        self.written.sort();
        let outputs = self.written.clone();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            csv_schema: CSV_SCHEMA,
            command,
            args: std::env::args().skip(1).collect(),
            seed: cfg.train.seed,
            config: cfg,
            outputs: &outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        self.write("manifest.json", &(text + "\n"))
    }
}
