//! TOML configuration files.
//!
//! A fit config has optional `[fit]` and `[loss]` tables whose keys are the
//! fields of [`FitConfig`] and [`LossWeights`]; omitted keys keep their
//! defaults. A synthetic-scene spec has a `[scene]` table plus `[train]` and
//! `[eval]` view tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::objective::LossWeights;
use crate::scene::{SceneSpec, ViewSpec};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub loss: LossWeights,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.loss.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default = "default_train")]
    pub train: ViewSpec,
    #[serde(default = "default_eval")]
    pub eval: ViewSpec,
}

fn default_train() -> ViewSpec {
    ViewSpec::new(72, 2.4, 128)
}

fn default_eval() -> ViewSpec {
    ViewSpec::new(24, 1.6, 128)
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            scene: SceneSpec::default(),
            train: default_train(),
            eval: default_eval(),
        }
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.message().to_string();
        let field = e
            .span()
            .map(|s| {
                let line = text[..s.start].lines().count().max(1);
                format!("line {line}")
            })
            .unwrap_or_else(|| "document".into());
        Error::parse(path, field, msg)
    })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let cfg: RunConfig = read_toml(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_synthetic_spec(path: &Path) -> Result<SyntheticSpec> {
    let spec: SyntheticSpec = read_toml(path)?;
    spec.scene.validate()?;
    Ok(spec)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("[fit]\niterations = 10\n[loss]\nlambda_l1 = 0.5\n").unwrap();
        assert_eq!(cfg.fit.iterations, 10);
        assert_eq!(cfg.fit.lr_color, FitConfig::default().lr_color);
        assert_eq!(cfg.loss.lambda_l1, 0.5);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(toml::from_str::<RunConfig>("[fit]\nitertions = 10\n").is_err());
    }

    #[test]
    fn config_roundtrips_through_text() {
        let cfg = RunConfig::default();
        let text = to_toml(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
        let spec = SyntheticSpec::default();
        assert_eq!(toml::from_str::<SyntheticSpec>(&to_toml(&spec).unwrap()).unwrap(), spec);
    }
}
