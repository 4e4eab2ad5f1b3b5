//! Experiment configuration. Unknown keys are rejected everywhere.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use planlab_core::agents::AgentConfig;
use planlab_core::sokoban::GeneratorConfig;
use serde::{Deserialize, Serialize};

use crate::bounds_grid::BoundsGrid;
use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fig1bCurve,
    ErrorTable,
    BudgetSweep,
    MSensitivity,
    AblationGrid,
    BoundsGrid,
    BestofnCompare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedMaps {
    /// Maps per T* value.
    pub count: u32,
    pub t_star: Vec<u32>,
    /// `target_optimal` and `slack` are overridden per cell.
    #[serde(default)]
    pub generator: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    Generate(GeneratedMaps),
    /// Instance JSON files, grouped by their stored optimal length.
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkEntry {
    pub label: String,
    pub agent: AgentConfig,
}

fn default_slack() -> Vec<u32> {
    vec![2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub maps: Option<MapSource>,
    /// Budget = T* + slack, one cell per value.
    #[serde(default = "default_slack")]
    pub slack: Vec<u32>,
    #[serde(default)]
    pub frameworks: Vec<FrameworkEntry>,
    #[serde(default = "default_trials")]
    pub trials_per_cell: u32,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub bounds: Option<BoundsGrid>,
}

fn default_trials() -> u32 {
    100
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg = Self::from_json(&text, &path.display().to_string())?;
        cfg.check_files_exist(&path.display().to_string())?;
        Ok(cfg)
    }

    /// Parses and validates; `origin` names the source in error messages.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            HarnessError::config(origin, format!("at `{at}`: {}", e.inner()))
        })?;
        cfg.validate().map_err(|m| HarnessError::config(origin, m))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.trials_per_cell == 0 {
            return Err("trials_per_cell must be at least 1".into());
        }
        if self.experiment == ExperimentKind::BoundsGrid {
            let grid = self.bounds.as_ref().ok_or("bounds_grid needs a `bounds` section")?;
            return grid.validate();
        }
        match &self.maps {
            None => return Err("`maps` is required".into()),
            Some(MapSource::Generate(g)) => {
                if g.count == 0 || g.t_star.is_empty() {
                    return Err("maps.generate needs count >= 1 and a non-empty t_star list".into());
                }
                if g.t_star.contains(&0) {
                    return Err("t_star values must be at least 1".into());
                }
            }
            Some(MapSource::Files(files)) => {
                if files.is_empty() {
                    return Err("maps.files is empty".into());
                }
            }
        }
        if self.slack.is_empty() {
            return Err("slack list is empty".into());
        }
        if self.frameworks.is_empty() {
            return Err("at least one framework entry is required".into());
        }
        let mut labels = BTreeSet::new();
        for (i, f) in self.frameworks.iter().enumerate() {
            let safe = !f.label.is_empty()
                && f.label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !safe {
                return Err(format!("frameworks[{i}].label {:?} must be non-empty [A-Za-z0-9._-]", f.label));
            }
            if !labels.insert(&f.label) {
                return Err(format!("duplicate framework label {:?}", f.label));
            }
            f.agent
                .validate()
                .map_err(|e| format!("frameworks[{i}].agent: {e}"))?;
        }
        Ok(())
    }

    fn check_files_exist(&self, origin: &str) -> Result<(), HarnessError> {
        if let Some(MapSource::Files(files)) = &self.maps {
            if let Some(missing) = files.iter().find(|f| !f.exists()) {
                return Err(HarnessError::config(origin, format!("map file {} does not exist", missing.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "experiment": "fig1b_curve",
        "maps": {"generate": {"count": 2, "t_star": [2, 4]}},
        "frameworks": [{"label": "ReAct", "agent": {"framework": "ReAct", "error_params": {"eps_p": 0.25, "eps_s": 0.2}}}],
        "output_dir": "out"
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL, "mem").unwrap();
        assert_eq!(cfg.slack, vec![2]);
        assert_eq!(cfg.trials_per_cell, 100);
        assert_eq!(cfg.frameworks[0].agent.error_params.p_follow, 0.9);
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = MINIMAL.replace("\"eps_s\"", "\"eps_x\"");
        let err = ExperimentConfig::from_json(&text, "mem").unwrap_err();
        assert!(err.is_config());
        let msg = err.to_string();
        assert!(msg.contains("frameworks[0].agent.error_params"), "{msg}");
        assert!(msg.contains("eps_x"), "{msg}");
    }

    #[test]
    fn semantic_errors() {
        for (from, to) in [
            ("\"count\": 2", "\"count\": 0"),
            ("\"label\": \"ReAct\"", "\"label\": \"a b\""),
            ("\"eps_p\": 0.25", "\"eps_p\": 2.5"),
        ] {
            let err = ExperimentConfig::from_json(&MINIMAL.replace(from, to), "mem").unwrap_err();
            assert!(err.is_config(), "{from} -> {to}");
        }
        let text = MINIMAL.replace("\"output_dir\"", "\"trials_per_cell\": 0, \"output_dir\"");
        assert!(ExperimentConfig::from_json(&text, "mem").is_err());
    }

    #[test]
    fn bounds_grid_needs_bounds_section() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "bounds_grid", "output_dir": "o"}"#, "mem").unwrap_err();
        assert!(err.to_string().contains("bounds"));
    }
}
