//! Pipeline configuration file (TOML).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::IntersectConfig;
use crate::joint::OptimConfig;
use crate::phantom::PhantomSpec;
use crate::profiles::InitConfig;
use crate::segment::SegmentConfig;

fn separate_default() -> OptimConfig {
    OptimConfig::separate_default()
}

/// Every section is optional; absent keys take their defaults, unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub init: InitConfig,
    pub joint: OptimConfig,
    #[serde(default = "separate_default")]
    pub separate: OptimConfig,
    pub segment: SegmentConfig,
    pub intersect: IntersectConfig,
    pub phantom: PhantomSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            init: InitConfig::default(),
            joint: OptimConfig::default(),
            separate: OptimConfig::separate_default(),
            segment: SegmentConfig::default(),
            intersect: IntersectConfig::default(),
            phantom: PhantomSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        self.joint.validate()?;
        self.separate.validate()?;
        self.phantom.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Extracts the key name from a serde "missing field `x`" message.
fn missing_field(message: &str) -> Option<String> {
    let rest = message.split("missing field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

pub fn parse_config(path: &Path, text: &str) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = toml::from_str(text).map_err(|e| match missing_field(e.message()) {
        Some(key) => Error::MissingKey(format!("{}: {key}", path.display())),
        None => Error::format(path, e.to_string()),
    })?;
    cfg.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::InitialGuess;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config(Path::new("c.toml"), "").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(parse_config(Path::new("c.toml"), &cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn sections_override() {
        let text = "[joint]\nstride = 2\nmomentum = 0.5\n[init.initial_guess]\nrule = \"fixed\"\nscaling = 1.0\nspacing = 4.0\noffset_z = -18.0\n";
        let cfg = parse_config(Path::new("c.toml"), text).unwrap();
        assert_eq!(cfg.joint.stride, 2);
        assert_eq!(cfg.joint.momentum, 0.5);
        assert_eq!(cfg.init.initial_guess, InitialGuess::Fixed { scaling: 1.0, spacing: 4.0, offset_z: -18.0 });
    }

    #[test]
    fn missing_and_unknown_keys() {
        let missing = "[init.initial_guess]\nrule = \"fixed\"\nscaling = 1.0\noffset_z = 0.0\n";
        match parse_config(Path::new("c.toml"), missing) {
            Err(Error::MissingKey(k)) => assert!(k.contains("spacing") && k.contains("c.toml"), "{k}"),
            other => panic!("{other:?}"),
        }
        let unknown = "[joint]\nstrid = 2\n";
        let err = parse_config(Path::new("c.toml"), unknown).unwrap_err().to_string();
        assert!(err.contains("strid"), "{err}");
    }
}
