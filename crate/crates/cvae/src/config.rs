//! Run configuration, read from TOML. Every field has a default; see the
//! README for the full schema.

use std::path::{Path, PathBuf};

use cvae_core::adam::AdamConfig;
use cvae_core::data::SplitSpec;
use cvae_core::eval::ProtocolKind;
use cvae_core::model::{InputOrder, ModelConfig, ModelDims};
use cvae_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overrides the configured artifact root when set.
pub const ARTIFACT_ROOT_ENV: &str = "CVAE_ARTIFACT_ROOT";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub analyze: AnalyzeSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub ratings: PathBuf,
    pub categories: PathBuf,
    pub delimiter: String,
    pub category_delimiter: String,
    pub rating_threshold: f64,
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub n_heldout_val: usize,
    pub n_heldout_test: usize,
    pub foldin_fraction: f64,
    pub drop_categories: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            ratings: PathBuf::from("ratings.csv"),
            categories: PathBuf::from("item_categories.csv"),
            delimiter: ",".into(),
            category_delimiter: ",".into(),
            rating_threshold: 3.0,
            min_user_interactions: 4,
            min_item_interactions: 10,
            n_heldout_val: 100,
            n_heldout_test: 100,
            foldin_fraction: 0.8,
            drop_categories: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputOrderName {
    NormalizeThenDropout,
    DropoutThenNormalize,
}

impl From<InputOrderName> for InputOrder {
    fn from(o: InputOrderName) -> Self {
        match o {
            InputOrderName::NormalizeThenDropout => InputOrder::NormalizeThenDropout,
            InputOrderName::DropoutThenNormalize => InputOrder::DropoutThenNormalize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub latent: usize,
    pub dropout: f64,
    pub input_order: InputOrderName,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: ModelDims::DEFAULT_HIDDEN,
            latent: ModelDims::DEFAULT_LATENT,
            dropout: 0.5,
            input_order: InputOrderName::NormalizeThenDropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    /// β cap for `--phase 2` when no phase-1 selection is on disk.
    pub anneal_cap: f64,
    pub anneal_total_steps: Option<u64>,
    pub patience: usize,
    pub validation_protocol: String,
    pub validation_k: usize,
    /// Write a resumable snapshot after every epoch.
    pub snapshot_every_epoch: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 500,
            max_epochs: 100,
            lr: 0.001,
            anneal_cap: 1.0,
            anneal_total_steps: None,
            patience: 5,
            validation_protocol: "conditioned".into(),
            validation_k: 100,
            snapshot_every_epoch: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub protocols: Vec<String>,
    pub ks_recall: Vec<usize>,
    pub ks_ndcg: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            protocols: vec!["total".into(), "normal".into(), "conditioned".into()],
            ks_recall: vec![20, 50],
            ks_ndcg: vec![100],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Users sampled from the training pool for the latent export.
    pub sample_users: usize,
    pub max_rank: usize,
    pub purity_k: usize,
    pub pca_components: usize,
    /// Component pairs for the centroid report, numbered from 1 counting
    /// any dropped leading components.
    pub pca_pairs: Vec<[usize; 2]>,
    /// Category labels (or `none` for the unconditioned rows) removed
    /// before PCA.
    pub pca_exclude: Vec<String>,
    pub pca_drop_leading: usize,
    pub pca_recompute: bool,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            sample_users: 2000,
            max_rank: 100,
            purity_k: 100,
            pca_components: 5,
            pca_pairs: vec![[2, 5], [3, 5]],
            pca_exclude: Vec::new(),
            pca_drop_leading: 0,
            pca_recompute: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub root: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            root: PathBuf::from("artifacts"),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.ratings, &mut cfg.data.categories, &mut cfg.output.root] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.foldin_fraction > 0.0 && d.foldin_fraction < 1.0) {
            return Err(Error::Config("data.foldin_fraction must lie in (0, 1)".into()));
        }
        crate::io::parse_delimiter(&d.delimiter)?;
        crate::io::parse_delimiter(&d.category_delimiter)?;
        let m = &self.model;
        if m.hidden == 0 || m.latent == 0 {
            return Err(Error::Config("model.hidden and model.latent must be positive".into()));
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return Err(Error::Config("model.dropout must lie in [0, 1)".into()));
        }
        self.train_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.validation_protocol()?;
        self.eval_protocols()?;
        if self.train.validation_k == 0
            || self.eval.ks_recall.contains(&0)
            || self.eval.ks_ndcg.contains(&0)
            || self.analyze.max_rank == 0
            || self.analyze.purity_k == 0
        {
            return Err(Error::Config("cutoffs must be at least 1".into()));
        }
        let a = &self.analyze;
        if a.pca_pairs.iter().flatten().any(|&c| c <= a.pca_drop_leading || c > a.pca_drop_leading + a.pca_components) {
            return Err(Error::Config(
                "analyze.pca_pairs are 1-based component numbers within the reported components".into(),
            ));
        }
        Ok(())
    }

    /// The artifact root, honouring [`ARTIFACT_ROOT_ENV`].
    pub fn artifact_root(&self) -> PathBuf {
        match std::env::var_os(ARTIFACT_ROOT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output.root.clone(),
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            n_heldout_val: self.data.n_heldout_val,
            n_heldout_test: self.data.n_heldout_test,
            foldin_fraction: self.data.foldin_fraction,
            min_user_interactions: self.data.min_user_interactions,
            min_item_interactions: self.data.min_item_interactions,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, items: usize, categories: usize) -> ModelConfig {
        ModelConfig {
            dims: ModelDims {
                items,
                categories,
                hidden: self.model.hidden,
                latent: self.model.latent,
            },
            dropout: self.model.dropout,
            input_order: self.model.input_order.into(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            adam: AdamConfig {
                lr: self.train.lr,
                ..AdamConfig::default()
            },
            anneal_cap: self.train.anneal_cap,
            anneal_total_steps: self.train.anneal_total_steps,
            patience: self.train.patience,
            seed: self.seed,
        }
    }

    pub fn validation_protocol(&self) -> Result<ProtocolKind> {
        parse_protocol(&self.train.validation_protocol)
    }

    pub fn eval_protocols(&self) -> Result<Vec<ProtocolKind>> {
        self.eval.protocols.iter().map(|p| parse_protocol(p)).collect()
    }
}

pub fn parse_protocol(name: &str) -> Result<ProtocolKind> {
    ProtocolKind::parse(name)
        .ok_or_else(|| Error::Config(format!("unknown protocol {name:?} (expected total, normal or conditioned)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_full_scale() {
        let c = Config::default();
        assert_eq!(c.model.hidden, 600);
        assert_eq!(c.model.latent, 200);
        assert_eq!(c.model.dropout, 0.5);
        assert_eq!(c.train.lr, 0.001);
        assert_eq!(c.train.patience, 5);
        assert_eq!(c.train.validation_k, 100);
        assert_eq!(c.eval.ks_recall, vec![20, 50]);
        c.validate().unwrap();
    }

    #[test]
    fn partial_toml_and_roundtrip() {
        let c = Config::from_toml("seed = 9\n[model]\nhidden = 50\n[train]\nmax_epochs = 3\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.hidden, 50);
        assert_eq!(c.model.latent, 200);
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("[data]\nfoldin_fraction = 1.0\n").is_err());
        assert!(Config::from_toml("[train]\nanneal_cap = 2.0\n").is_err());
        assert!(Config::from_toml("[train]\nvalidation_protocol = \"weird\"\n").is_err());
        assert!(Config::from_toml("[model]\nhiden = 3\n").is_err());
        assert!(Config::from_toml("[analyze]\npca_pairs = [[0, 2]]\n").is_err());
    }
}
