//! End-to-end orchestration: ingest, select, label, train, score,
//! evaluate and report, with per-command manifests.

mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

pub use commands::*;
pub use config::{DataSources, EvaluationConfig, RunConfig, StatsConfig};
pub use manifest::{InputDigest, RunManifest, Versions, MANIFEST_FILE};

use crate::error::{Error, Result};
use crate::tle::fetch::FetchError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Fetch(FetchError::Config(_)) => EXIT_CONFIG,
        Error::Parse(_)
        | Error::Io { .. }
        | Error::NoValidRecords(_)
        | Error::Catalog(_)
        | Error::Fetch(_)
        | Error::InvalidInput(_)
        | Error::InsufficientData { .. }
        | Error::Csv(_) => EXIT_DATA,
        Error::Shape { .. } | Error::Model(_) | Error::Training(_) | Error::Serde(_) => EXIT_INTERNAL,
    }
}

/// A validated configuration with its worker pool.
#[derive(Debug)]
pub struct Pipeline {
    config: RunConfig,
    config_hash: String,
    workers: usize,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let workers = match config.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Pipeline {
            config_hash: config.hash(),
            config,
            workers,
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    fn stage_dir(&self, parts: &[&str]) -> Result<PathBuf> {
        let mut dir = self.config.out_dir.clone();
        for p in parts {
            dir.push(p);
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, &self.config_hash, self.config.seed, self.workers)
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        self.pool.install(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NoValidRecords("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Model("x".into())), EXIT_INTERNAL);
    }
}
