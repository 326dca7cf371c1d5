//! Declarative experiment configuration: a flat TOML file plus
//! `key=value` overrides from the command line.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use laekit::eval::{IpsEstimator, RecallDenominator};
use laekit::interactions::InputFormat;
use laekit::solvers::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Strong,
    Weak,
}

impl std::str::FromStr for Protocol {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strong" => Ok(Protocol::Strong),
            "weak" => Ok(Protocol::Weak),
            other => bail!("unknown protocol `{other}` (expected `strong` or `weak`)"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub format: InputFormat,
    pub min_rating: Option<f64>,
    pub protocol: Protocol,
    pub seed: u64,
    pub models: Vec<Model>,
    pub lambda_grid: Vec<f64>,
    pub dropout_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub ks: Vec<usize>,
    pub gamma: f64,
    pub head_fraction: f64,
    pub heldout_user_fraction: f64,
    pub foldin_fraction: f64,
    pub test_fraction: f64,
    /// Cutoff of the NDCG used for model selection; defaults to 100 under
    /// the strong protocol and 20 under the weak protocol.
    pub selection_k: Option<usize>,
    pub recall_denominator: RecallDenominator,
    pub ips_estimator: IpsEstimator,
    /// Grid workers; 0 uses the default thread pool.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Output subdirectory name; derived from the config contents when
    /// absent.
    pub run_id: Option<String>,
    /// Re-fit and save the best weight matrix per model.
    pub save_weights: bool,
    pub max_memory_gib: f64,
}

fn tenths(from: usize, to: usize) -> Vec<f64> {
    (from..=to).map(|i| i as f64 / 10.0).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            format: InputFormat::Pairs,
            min_rating: None,
            protocol: Protocol::Strong,
            seed: 0,
            models: Model::ALL.to_vec(),
            // The default search grids: λ over 1..10 plus 20, p and ξ over
            // 0.1..0.9 in steps of 0.1.
            lambda_grid: (1..=10).map(f64::from).chain([20.0]).collect(),
            dropout_grid: tenths(1, 9),
            xi_grid: tenths(1, 9),
            ks: vec![20, 100],
            gamma: 2.0,
            head_fraction: 0.2,
            heldout_user_fraction: 0.2,
            foldin_fraction: 0.8,
            test_fraction: 0.2,
            selection_k: None,
            recall_denominator: RecallDenominator::Truncated,
            ips_estimator: IpsEstimator::SelfNormalized,
            workers: 0,
            out_dir: PathBuf::from("runs"),
            run_id: None,
            save_weights: false,
            max_memory_gib: 16.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text, overrides)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().context("parsing config file")?;
        for entry in overrides {
            let fragment: toml::Table = entry
                .parse()
                .with_context(|| format!("parsing override `{entry}` (expected key=value)"))?;
            for (key, value) in fragment {
                table.insert(key, value);
            }
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn selection_k(&self) -> usize {
        self.selection_k.unwrap_or(match self.protocol {
            Protocol::Strong => 100,
            Protocol::Weak => 20,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.as_os_str().is_empty() {
            bail!("config needs a `data` path");
        }
        if self.models.is_empty() {
            bail!("no models selected");
        }
        if self.lambda_grid.is_empty() {
            bail!("lambda grid is empty");
        }
        if self.lambda_grid.iter().any(|&l| l.is_nan() || l <= 0.0) {
            bail!("lambda grid entries must be positive");
        }
        if self.models.iter().any(|m| m.uses_dropout()) {
            if self.dropout_grid.is_empty() {
                bail!("dropout grid is empty but a denoising model is selected");
            }
            if self.dropout_grid.iter().any(|&p| !(0.0..1.0).contains(&p)) {
                bail!("dropout grid entries must be in [0, 1)");
            }
        }
        if self.models.iter().any(|m| m.uses_xi()) {
            if self.xi_grid.is_empty() {
                bail!("xi grid is empty but a relaxed model is selected");
            }
            if self.xi_grid.iter().any(|&x| x.is_nan() || x < 0.0) {
                bail!("xi grid entries must be nonnegative");
            }
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            bail!("ks must be nonempty positive cutoffs");
        }
        let selection_k = self.selection_k();
        if !self.ks.contains(&selection_k) {
            bail!("selection cutoff {selection_k} is not among ks {:?}", self.ks);
        }
        for (name, value) in [
            ("head_fraction", self.head_fraction),
            ("heldout_user_fraction", self.heldout_user_fraction),
            ("foldin_fraction", self.foldin_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                bail!("{name} must be in [0, 1], got {value}");
            }
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            bail!("test_fraction must be in [0, 1], got {}", self.test_fraction);
        }
        if self.gamma < 0.0 {
            bail!("gamma must be nonnegative, got {}", self.gamma);
        }
        if self.max_memory_gib.is_nan() || self.max_memory_gib <= 0.0 {
            bail!("max_memory_gib must be positive");
        }
        Ok(())
    }

    /// Deterministic directory name derived from the configuration.
    pub fn derived_run_id(&self) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let serialized = toml::to_string(self).unwrap_or_default();
        let mut hasher = DefaultHasher::new();
        serialized.hash(&mut hasher);
        format!("run-{:016x}", hasher.finish())
    }
}
