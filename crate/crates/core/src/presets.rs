//! Built-in scenario configurations.

use crate::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub file: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: [Preset; 6] = [
    Preset { name: "hover", file: "hover.toml", toml: include_str!("../presets/hover.toml") },
    Preset { name: "mass-step", file: "mass-step.toml", toml: include_str!("../presets/mass-step.toml") },
    Preset { name: "mass-offset", file: "mass-offset.toml", toml: include_str!("../presets/mass-offset.toml") },
    Preset {
        name: "noise-comparison",
        file: "noise-comparison.toml",
        toml: include_str!("../presets/noise-comparison.toml"),
    },
    Preset { name: "fan-survey", file: "fan-survey.toml", toml: include_str!("../presets/fan-survey.toml") },
    Preset { name: "fan-track", file: "fan-track.toml", toml: include_str!("../presets/fan-track.toml") },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::Config(format!("unknown preset '{name}' (available: {})", names.join(", ")))
    })
}

impl Preset {
    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_toml(self.toml)
    }

    pub fn description(&self) -> String {
        self.config().map(|c| c.scenario.description).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_parse_and_resolve() {
        for p in &PRESETS {
            let cfg = p.config().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(cfg.scenario.name, p.name);
            assert!(!cfg.scenario.description.is_empty());
            cfg.resolve().unwrap();
        }
    }

    #[test]
    fn survey_grid_matches_procedure() {
        let cfg = find("fan-survey").unwrap().config().unwrap();
        assert_eq!(cfg.trajectory.spacing_m, 0.5);
        assert_eq!(cfg.trajectory.dwell_s, 5.0);
        let grid = cfg.grid_survey();
        assert_eq!(grid.waypoints().len(), 25);
        assert!(grid.total_duration_s() <= cfg.scenario.duration_s);
    }
}
