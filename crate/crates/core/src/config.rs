//! `reviewlens.toml` loading.
//!
//! Precedence is flag > environment > file > default. This module resolves
//! the last three; front ends apply their flags on top of the result.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, BackboneKind};
use crate::clustering::ClusterConfig;
use crate::detection::DetectorConfig;
use crate::error::{Error, Result};
use crate::head::TrainConfig;
use crate::store::rasterize::{DEFAULT_DPI, RASTERIZER_ENV};

pub const CONFIG_FILE: &str = "reviewlens.toml";
pub const DEFAULT_PORT: u16 = 8710;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterizeSettings {
    pub dpi: u32,
    pub command: Option<String>,
}

impl Default for RasterizeSettings {
    fn default() -> Self {
        Self {
            dpi: DEFAULT_DPI,
            command: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("reviewlens-data"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub cluster: ClusterConfig,
    pub detector: DetectorConfig,
    pub rasterize: RasterizeSettings,
    pub service: ServiceSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::mock(0),
            train: TrainConfig::default(),
            cluster: ClusterConfig::default(),
            detector: DetectorConfig::mock(0),
            rasterize: RasterizeSettings::default(),
            service: ServiceSettings::default(),
        }
    }
}

fn parse_env<T: std::str::FromStr>(name: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{name}={value}: {e}")))
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{CONFIG_FILE}: {e}")))
    }

    /// Reads `path`, or returns defaults when `path` is `None` and no
    /// `reviewlens.toml` exists in the working directory.
    pub fn load_file(path: Option<&Path>) -> Result<Self> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if Path::new(CONFIG_FILE).is_file() => PathBuf::from(CONFIG_FILE),
            None => return Ok(Self::default()),
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_toml(&text)
    }

    /// Applies `REVIEWLENS_*` overrides read through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = var(RASTERIZER_ENV) {
            self.rasterize.command = Some(v);
        }
        if let Some(v) = var("REVIEWLENS_BACKBONE_KIND") {
            self.backbone.kind = parse_env::<BackboneKind>("REVIEWLENS_BACKBONE_KIND", &v)?;
        }
        if let Some(v) = var("REVIEWLENS_BACKBONE_MODEL_PATH") {
            self.backbone.model_path = Some(PathBuf::from(v));
        }
        if let Some(v) = var("REVIEWLENS_BACKBONE_BATCH_SIZE") {
            self.backbone.batch_size = parse_env("REVIEWLENS_BACKBONE_BATCH_SIZE", &v)?;
        }
        if let Some(v) = var("REVIEWLENS_DATA_DIR") {
            self.service.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("REVIEWLENS_PORT") {
            self.service.port = parse_env("REVIEWLENS_PORT", &v)?;
        }
        Ok(())
    }

    /// File (or defaults) with process environment applied.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::load_file(path)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(AppConfig::from_toml("").unwrap(), AppConfig::default());
    }

    #[test]
    fn file_keys() {
        let cfg = AppConfig::from_toml(
            r#"
[backbone]
kind = "pretrained"
model_path = "vgg16.onnx"
batch_size = 4
means = [1.0, 2.0, 3.0]

[cluster]
restarts = 3
"#,
        )
        .unwrap();
        assert_eq!(cfg.backbone.kind, BackboneKind::Pretrained);
        assert_eq!(cfg.backbone.batch_size, 4);
        assert_eq!(cfg.backbone.means, [1.0, 2.0, 3.0]);
        assert_eq!(cfg.cluster.restarts, 3);
        assert_eq!(cfg.cluster.max_iterations, 300);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(AppConfig::from_toml("[service]\nprot = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn env_beats_file() {
        let mut cfg = AppConfig::from_toml("[backbone]\nkind = \"mock\"\nbatch_size = 4\n[service]\nport = 9000\n").unwrap();
        let env: HashMap<&str, &str> = [("REVIEWLENS_BACKBONE_BATCH_SIZE", "32"), (RASTERIZER_ENV, "pdftoppm {input}")].into();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.backbone.batch_size, 32);
        assert_eq!(cfg.service.port, 9000);
        assert_eq!(cfg.rasterize.command.as_deref(), Some("pdftoppm {input}"));
    }

    #[test]
    fn bad_env_value() {
        let mut cfg = AppConfig::default();
        let r = cfg.apply_env(|k| (k == "REVIEWLENS_PORT").then(|| "eighty".to_string()));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
