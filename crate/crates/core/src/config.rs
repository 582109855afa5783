//! TOML experiment configuration files.
//!
//! Top-level keys configure the experiment (`trials`, `seed_base`,
//! `p_max_dbm`, `arms`, `output_dir`, `threads`); the `[scene]`, `[ao]` and
//! `[ao.pso]` tables map onto `SceneConfig`, `AoConfig` and `PsoParams`.
//! Every key is optional and unknown keys are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// The default configuration rendered as TOML.
pub fn default_config_toml() -> Result<String> {
    toml::to_string_pretty(&ExperimentConfig::default())
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ao::DeltaMethod;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = parse_config(
            r#"
trials = 3
arms = ["fixed", "exhaustive"]

[scene]
num_users = 6
noise_dbm = -170.0

[ao]
grid_points = 90

[ao.pso]
particles = 8
"#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.arms, vec![DeltaMethod::Fixed, DeltaMethod::Exhaustive]);
        assert_eq!(cfg.scene.num_users, 6);
        assert_eq!(cfg.scene.num_groups, 2);
        assert_eq!(cfg.ao.grid_points, 90);
        assert_eq!(cfg.ao.pso.particles, 8);
        assert_eq!(cfg.ao.pso.t_max, 50);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(parse_config("trails = 3").is_err());
        assert!(parse_config("[scene]\nusers = 3").is_err());
        assert!(parse_config("trials = 0").is_err());
    }

    #[test]
    fn default_round_trip() {
        let text = default_config_toml().unwrap();
        assert_eq!(parse_config(&text).unwrap(), ExperimentConfig::default());
    }
}
