use std::path::PathBuf;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Artifact sink; every file starts with the config hash.
pub struct Output {
    dir: PathBuf,
    hash: String,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    data: &'a T,
}

impl Output {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Output {
            dir: PathBuf::from(&cfg.out),
            hash: cfg.hash(),
        })
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Config(format!("`out`: cannot create {}: {e}", self.dir.display())))?;
        Ok(self.dir.join(name))
    }

    /// Writes `body` (with its own column header) after a `# config-hash:` line.
    pub fn csv(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name)?;
        std::fs::write(&path, format!("# config-hash: {}\n{body}", self.hash))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, data: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name)?;
        let text = serde_json::to_string_pretty(&Stamped {
            config_hash: &self.hash,
            data,
        })?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
