//! Run configuration: every model, training, data and pruning setting as a
//! flat `key = value` list.

use std::fs;
use std::path::{Path, PathBuf};

use crate::compress::PruneScope;
use crate::data::{LeadSelection, Normalization};
use crate::error::{Error, Result};
use crate::model::config::parse_pairs;
use crate::model::{BackboneConfig, ModelConfig, Task};
use crate::training::TrainConfig;

/// Named starting points for a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Preset {
    /// Full-size backbones and the full training schedule.
    #[default]
    Full,
    /// Narrow backbones and the shortened single-split schedule.
    Desk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Lead selection; `None` uses the manifest's leads.
    pub leads: Option<LeadSelection>,
    pub normalization: Normalization,
    pub manifest: Option<PathBuf>,
    pub run_name: String,
    pub runs_dir: PathBuf,
    pub prune_sparsity: f64,
    pub prune_scope: PruneScope,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (backbone, train) = match preset {
            Preset::Full => (BackboneConfig::default(), TrainConfig::default()),
            Preset::Desk => (BackboneConfig::desk(), TrainConfig::desk()),
        };
        Self {
            model: ModelConfig::new(backbone, 4, Task::MultiClass),
            train,
            leads: None,
            normalization: Normalization::default(),
            manifest: None,
            run_name: "default".into(),
            runs_dir: PathBuf::from("runs"),
            prune_sparsity: 0.8,
            prune_scope: PruneScope::Global,
        }
    }

    /// Applies one setting; unknown keys are rejected by name.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.apply(key, value)? || self.train.apply(key, value)? {
            // The attention width follows the feature width; files apply
            // stages first so an explicit width still wins.
            if key == "backbone.stages" {
                self.model.attention_hidden = self.model.feature_dim();
            }
            return Ok(());
        }
        let bad = || Error::Config(format!("invalid value `{value}` for {key}"));
        match key {
            "data.manifest" => self.manifest = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.leads" => self.leads = if value.is_empty() { None } else { Some(value.parse()?) },
            "data.normalization" => self.normalization = value.parse()?,
            "run.name" => {
                if value.is_empty() || value.contains(['/', '\\']) {
                    return Err(bad());
                }
                self.run_name = value.to_string();
            }
            "run.dir" => self.runs_dir = PathBuf::from(value),
            "prune.sparsity" => self.prune_sparsity = value.parse().map_err(|_| bad())?,
            "prune.scope" => self.prune_scope = value.parse()?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let pairs = parse_pairs(text)?;
        if let Some(v) = pairs.get("backbone.stages") {
            self.apply("backbone.stages", v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k.as_str() != "backbone.stages") {
            self.apply(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            self.apply(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.prune_sparsity > 0.0 && self.prune_sparsity < 1.0) {
            return Err(Error::Config(format!(
                "prune.sparsity must lie strictly between 0 and 1, got {}",
                self.prune_sparsity
            )));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .model
            .to_pairs()
            .into_iter()
            .chain(self.train.to_pairs())
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let manifest = self.manifest.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        out.extend([
            ("data.manifest".into(), manifest),
            ("data.leads".into(), self.leads.as_ref().map(ToString::to_string).unwrap_or_default()),
            ("data.normalization".into(), self.normalization.to_string()),
            ("run.name".into(), self.run_name.clone()),
            ("run.dir".into(), self.runs_dir.display().to_string()),
            ("prune.sparsity".into(), self.prune_sparsity.to_string()),
            ("prune.scope".into(), self.prune_scope.to_string()),
        ]);
        out
    }

    /// The effective configuration; parsing it back reproduces `self`.
    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::preset(Preset::Full);
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.runs_dir.join(&self.run_name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echoed_config_reproduces_itself() {
        let mut cfg = RunConfig::preset(Preset::Desk);
        cfg.apply_overrides(&["train.seed=9".into(), "data.leads=I,II,V2".into(), "model.attention_hidden=7".into()])
            .unwrap();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.model.attention_hidden, 7);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut cfg = RunConfig::preset(Preset::Full);
        let err = cfg.apply_text("train.epochs_total = 3\ntrain.epohcs = 2\n").unwrap_err();
        assert!(err.to_string().contains("train.epohcs"));
    }

    #[test]
    fn stages_override_moves_attention_width() {
        let mut cfg = RunConfig::preset(Preset::Full);
        cfg.apply("backbone.stages", "1:8:7:1,1:12:7:2").unwrap();
        assert_eq!(cfg.model.attention_hidden, cfg.model.feature_dim());
    }

    #[test]
    fn sparsity_range_is_checked() {
        let mut cfg = RunConfig::preset(Preset::Full);
        cfg.apply("prune.sparsity", "1.0").unwrap();
        assert!(cfg.validate().is_err());
    }
}
