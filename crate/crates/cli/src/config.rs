//! Run configuration: a flat `key=value` file plus command-line overrides.
//! Flags override file values; the backend auth token never lives in either
//! (only the name of the environment variable that holds it does).

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use confdbg_core::reasoner::PromptStrategy;

/// Which chat/embedding backend the pipeline talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend kind `{other}` (mock|remote)")),
        }
    }
}

/// Everything the pipeline commands need to wire themselves up.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub registry: Option<PathBuf>,
    pub corpus: Vec<PathBuf>,
    pub index: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub telemetry_dir: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub backend: BackendKind,
    pub base_url: Option<String>,
    pub embed_url: Option<String>,
    pub model: String,
    pub token_env: String,
    pub timeout_secs: u64,
    pub parallelism: usize,
    pub transcript: Option<PathBuf>,
    pub retrieval_k: usize,
    pub telemetry_top_k: usize,
    pub tau: f64,
    pub alpha: f64,
    pub max_anomalies: Option<usize>,
    pub percentile: f64,
    pub seed: u64,
    pub strategy: PromptStrategy,
    pub dim: usize,
    pub layers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            registry: None,
            corpus: Vec::new(),
            index: None,
            checkpoint: None,
            telemetry_dir: None,
            catalog: None,
            backend: BackendKind::Mock,
            base_url: None,
            embed_url: None,
            model: "mock".to_string(),
            token_env: "CONFDBG_API_TOKEN".to_string(),
            timeout_secs: 60,
            parallelism: 4,
            transcript: None,
            retrieval_k: 5,
            telemetry_top_k: 3,
            tau: 0.1,
            alpha: 0.05,
            max_anomalies: None,
            percentile: 5.0,
            seed: 42,
            strategy: PromptStrategy::Rag,
            dim: 768,
            layers: 2,
        }
    }
}

impl RunConfig {
    /// Load a config file. Blank lines and `#` comments are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config = RunConfig::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key=value`", path.display(), idx + 1);
            };
            config
                .set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "registry" => self.registry = Some(PathBuf::from(value)),
            "corpus" => {
                self.corpus = value
                    .split(',')
                    .map(|p| PathBuf::from(p.trim()))
                    .filter(|p| !p.as_os_str().is_empty())
                    .collect();
            }
            "index" => self.index = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "telemetry_dir" => self.telemetry_dir = Some(PathBuf::from(value)),
            "catalog" => self.catalog = Some(PathBuf::from(value)),
            "backend" => self.backend = value.parse().map_err(anyhow::Error::msg)?,
            "base_url" => self.base_url = Some(value.to_string()),
            "embed_url" => self.embed_url = Some(value.to_string()),
            "model" => self.model = value.to_string(),
            "token_env" => self.token_env = value.to_string(),
            "timeout_secs" => self.timeout_secs = value.parse()?,
            "parallelism" => self.parallelism = value.parse()?,
            "transcript" => self.transcript = Some(PathBuf::from(value)),
            "retrieval_k" => self.retrieval_k = value.parse()?,
            "telemetry_top_k" => self.telemetry_top_k = value.parse()?,
            "tau" => self.tau = value.parse()?,
            "alpha" => self.alpha = value.parse()?,
            "max_anomalies" => self.max_anomalies = Some(value.parse()?),
            "percentile" => self.percentile = value.parse()?,
            "seed" => self.seed = value.parse()?,
            "strategy" => self.strategy = value.parse().map_err(anyhow::Error::msg)?,
            "dim" => self.dim = value.parse()?,
            "layers" => self.layers = value.parse()?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Apply `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for entry in overrides {
            let Some((key, value)) = entry.split_once('=') else {
                bail!("override `{entry}` is not `key=value`");
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nregistry=reg.txt\nretrieval_k=7\nbackend=mock\n",
        )
        .unwrap();
        let mut config = RunConfig::from_file(&path).unwrap();
        assert_eq!(config.retrieval_k, 7);
        config
            .apply_overrides(&["retrieval_k=3".to_string()])
            .unwrap();
        assert_eq!(config.retrieval_k, 3);
        assert_eq!(
            config.registry.as_ref().unwrap().to_str().unwrap(),
            "reg.txt"
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut config = RunConfig::default();
        assert!(config.set("not_a_key", "1").is_err());
    }
}
