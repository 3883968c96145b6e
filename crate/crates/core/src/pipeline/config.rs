use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::SelectionCriteria;
use crate::error::{Error, Result};
use crate::eval::{PeriodWindow, RegimeThresholds, TemporalConfig};
use crate::iforest::IForestConfig;
use crate::nn::ModelConfig;
use crate::tle::fetch::ClientConfig;
use crate::util::sha256_hex;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSources {
    pub tle: Option<PathBuf>,
    pub fetch: Option<ClientConfig>,
    pub satcat: Option<PathBuf>,
    pub missions_primary: Option<PathBuf>,
    pub missions_secondary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Objects used by the hyperparameter search.
    pub grid_objects: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { grid_objects: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub baseline: String,
    pub leadup: String,
    pub regimes: RegimeThresholds,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            baseline: "baseline".into(),
            leadup: "leadup".into(),
            regimes: RegimeThresholds::default(),
        }
    }
}

/// Everything a run depends on. Relative paths in a config file are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub data: DataSources,
    pub selection: SelectionCriteria,
    pub model: ModelConfig,
    pub iforest: IForestConfig,
    pub windows: Vec<PeriodWindow>,
    /// Window whose models `train` writes and `score`/`stats` read.
    pub train_window: String,
    pub label_window: String,
    pub temporal: TemporalConfig,
    pub evaluation: EvaluationConfig,
    pub stats: StatsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 0,
            out_dir: PathBuf::from("out"),
            data: DataSources::default(),
            selection: SelectionCriteria::default(),
            model: ModelConfig::default(),
            iforest: IForestConfig::default(),
            windows: PeriodWindow::standard(),
            train_window: "train".into(),
            label_window: "train".into(),
            temporal: TemporalConfig::default(),
            evaluation: EvaluationConfig::default(),
            stats: StatsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        let d = &mut self.data;
        for p in [&mut d.tle, &mut d.satcat, &mut d.missions_primary, &mut d.missions_secondary]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(f) = &mut d.fetch {
            fix(&mut f.cache_dir);
        }
    }

    /// Hash of the canonical JSON form; identical configs hash equally
    /// regardless of file layout. The worker count is excluded.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            workers: 0,
            ..self.clone()
        };
        sha256_hex(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }

    pub fn window(&self, name: &str) -> Result<&PeriodWindow> {
        self.windows
            .iter()
            .find(|w| w.name == name)
            .ok_or_else(|| Error::Config(format!("no window named {name:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for w in &self.windows {
            w.validate()?;
            if !names.insert(w.name.as_str()) {
                return Err(Error::Config(format!("window {:?} defined twice", w.name)));
            }
        }
        self.window(&self.train_window)?;
        self.window(&self.label_window)?;
        let baseline = self.window(&self.stats.baseline)?;
        let leadup = self.window(&self.stats.leadup)?;
        if baseline.overlaps(leadup) {
            return Err(Error::Config(format!(
                "windows {:?} and {:?} overlap",
                baseline.name, leadup.name
            )));
        }
        self.selection.validate()?;
        self.model.validate()?;
        self.iforest.validate()?;
        if self.temporal.years.is_empty() || self.temporal.years.contains(&0) {
            return Err(Error::Config("temporal windows must be positive year counts".into()));
        }
        if self.evaluation.grid_objects == 0 {
            return Err(Error::Config("grid_objects must be positive".into()));
        }
        let d = &self.data;
        for p in [&d.tle, &d.satcat, &d.missions_primary, &d.missions_secondary]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if let Some(f) = &d.fetch {
            f.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn reversed_window_is_a_config_error() {
        let mut cfg = RunConfig::default();
        cfg.windows[0].start = Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn overlapping_hypothesis_windows_rejected() {
        let mut cfg = RunConfig::default();
        cfg.stats.leadup = "train".into();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn worker_count_does_not_change_hash() {
        let a = RunConfig::default();
        let b = RunConfig { workers: 8, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn missing_input_file_is_a_config_error() {
        let mut cfg = RunConfig::default();
        cfg.data.satcat = Some("/nonexistent/satcat.csv".into());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
