use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tcrag::engine::EngineConfig;
use tcrag::harness::{DEFAULT_SUITE_SEED, DEFAULT_SUITE_SIZE};
use tcrag::retrieval::RegistryConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub size: usize,
    /// JSON suite file; overrides the synthetic generator.
    pub path: Option<PathBuf>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seed: DEFAULT_SUITE_SEED, size: DEFAULT_SUITE_SIZE, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub engine: EngineConfig,
    pub tools: RegistryConfig,
    pub suite: SuiteConfig,
    /// Directory that relative fixture paths in `tools` resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Config {
    /// `.toml` files are read as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Config = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Replaces the tool registry with the one in a standalone JSON file.
    pub fn load_tools(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.tools = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        self.base_dir = path.parent().map(Path::to_path_buf);
        if self.tools.tools.is_empty() {
            bail!("{} defines no tools", path.display());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tcrag::monitor::Metric;

    #[test]
    fn toml_and_json_configs() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        fs::write(&t, "[engine]\nmax_loop = 7\n[engine.monitor]\nmetric = \"uct\"\nsigma = 20.0\nlarge_value = 1e9\n[suite]\nseed = 9\n").unwrap();
        let cfg = Config::load(&t).unwrap();
        assert_eq!(cfg.engine.max_loop, 7);
        assert_eq!(cfg.engine.monitor.metric, Metric::Uct);
        assert_eq!(cfg.engine.max_tokens, 500);
        assert_eq!((cfg.suite.seed, cfg.suite.size), (9, 50));

        let j = dir.path().join("c.json");
        fs::write(&j, r#"{"tools": {"tools": [{"name": "KG", "kind": "kg_rag", "fixture": "x"}]}}"#).unwrap();
        let cfg = Config::load(&j).unwrap();
        assert_eq!(cfg.tools.k, 3);
        assert_eq!(cfg.tools.tools[0].name, "KG");
        assert_eq!(cfg.engine, EngineConfig::default());

        fs::write(&j, "{\"engine\": {\"max_loop\": \"x\"}}").unwrap();
        assert!(Config::load(&j).is_err());
    }
}
