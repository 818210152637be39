use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::VocabOptions;
use crate::model::{BetaMode, BranchMode, HyperParams, ResidualStyle};
use crate::train::TrainConfig;
use crate::{Error, Result};

/// `beta` in the config file: a number in [0, 1] or the string "learnable".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSetting {
    Fixed(f64),
    Named(BetaName),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaName {
    Learnable,
}

impl BetaSetting {
    pub fn mode(self) -> BetaMode {
        match self {
            BetaSetting::Fixed(b) => BetaMode::Fixed(b),
            BetaSetting::Named(BetaName::Learnable) => BetaMode::Learnable,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchSetting {
    Both,
    DnnOnly,
    AttentionOnly,
}

impl From<BranchSetting> for BranchMode {
    fn from(b: BranchSetting) -> Self {
        match b {
            BranchSetting::Both => BranchMode::Both,
            BranchSetting::DnnOnly => BranchMode::DnnOnly,
            BranchSetting::AttentionOnly => BranchMode::AttentionOnly,
        }
    }
}

/// Every key of the JSON config file. Keys not listed here are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Canonical input file, read by `prepare`.
    pub input: Option<PathBuf>,
    /// Directory holding `vocab.tsv` and the split files; defaults to `out`.
    pub data_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub user_field: usize,
    pub item_field: usize,
    pub negatives: usize,
    pub reserve_unknown: bool,
    /// Seed for negative sampling and the split.
    pub data_seed: u64,

    pub embedding_dim: usize,
    /// Defaults to `embedding_dim`.
    pub output_dim: Option<usize>,
    pub heads: usize,
    pub dnn_layers: usize,
    pub leaky_slope: f64,
    pub dropout: f64,
    pub l2_lambda: f64,
    pub beta: BetaSetting,
    pub rezero: bool,
    pub residual_style: ResidualStyle,
    pub branches: BranchSetting,
    pub identity_projection: bool,

    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub deterministic: bool,

    /// `ablate --mode arch`.
    pub layer_grid: Vec<usize>,
    pub head_grid: Vec<usize>,

    /// `gridsearch` axes; an absent axis uses its default range endpoints.
    pub grid_embedding_dim: Option<Vec<usize>>,
    pub grid_learning_rate: Option<Vec<f64>>,
    pub grid_l2_lambda: Option<Vec<f64>>,
    pub grid_dropout: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            data_dir: None,
            out: PathBuf::from("out"),
            user_field: 0,
            item_field: 1,
            negatives: 2,
            reserve_unknown: false,
            data_seed: 0,
            embedding_dim: 16,
            output_dim: None,
            heads: 2,
            dnn_layers: 2,
            leaky_slope: 0.01,
            dropout: 0.0,
            l2_lambda: 0.0,
            beta: BetaSetting::Fixed(0.5),
            rezero: true,
            residual_style: ResidualStyle::Multiplicative,
            branches: BranchSetting::Both,
            identity_projection: false,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 1024,
            patience: 5,
            seeds: vec![1, 2, 3, 4, 5],
            deterministic: false,
            layer_grid: vec![1, 2, 3],
            head_grid: vec![1, 2, 4],
            grid_embedding_dim: None,
            grid_learning_rate: None,
            grid_l2_lambda: None,
            grid_dropout: None,
        }
    }
}

pub const DEFAULT_GRID_EMBEDDING_DIM: [usize; 2] = [30, 600];
pub const DEFAULT_GRID_LEARNING_RATE: [f64; 2] = [5e-6, 1e-4];
pub const DEFAULT_GRID_L2_LAMBDA: [f64; 2] = [1e-4, 0.2];
pub const DEFAULT_GRID_DROPOUT: [f64; 2] = [0.01, 0.9];

/// One point of the gridsearch cross product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub dropout: f64,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn data_dir(&self) -> &Path {
        self.data_dir.as_deref().unwrap_or(&self.out)
    }

    pub fn vocab_options(&self) -> VocabOptions {
        VocabOptions {
            user_field: self.user_field,
            item_field: self.item_field,
            reserve_unknown: self.reserve_unknown,
        }
    }

    pub fn hyper_params(&self, cardinalities: Vec<usize>) -> HyperParams {
        HyperParams {
            cardinalities,
            embedding_dim: self.embedding_dim,
            output_dim: self.output_dim.unwrap_or(self.embedding_dim),
            heads: self.heads,
            dnn_layers: self.dnn_layers,
            leaky_slope: self.leaky_slope,
            dropout: self.dropout,
            l2_lambda: self.l2_lambda,
            beta: self.beta.mode(),
            rezero: self.rezero,
            residual: self.residual_style,
            branches: self.branches.into(),
            identity_projection: self.identity_projection,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
            seeds: self.seeds.clone(),
            deterministic: self.deterministic,
            threads: threads_from_env(),
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(Error::InvalidHyperParams(p)) = self.hyper_params(vec![1, 1]).validate() {
            problems.extend(p);
        }
        if let Err(Error::InvalidHyperParams(p)) = self.train_config().validate() {
            problems.extend(p);
        }
        if self.user_field == self.item_field {
            problems.push("user_field and item_field must differ".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            problems.push("seeds must be distinct".into());
        }
        if self.layer_grid.is_empty() || self.head_grid.is_empty() {
            problems.push("layer_grid and head_grid must be non-empty".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidHyperParams(problems))
        }
    }

    pub fn grid_points(&self) -> Result<Vec<GridPoint>> {
        fn axis<T: Copy>(name: &str, given: &Option<Vec<T>>, default: &[T]) -> Result<Vec<T>> {
            match given {
                Some(v) if v.is_empty() => Err(Error::Config(format!("grid axis {name} is empty"))),
                Some(v) => Ok(v.clone()),
                None => Ok(default.to_vec()),
            }
        }
        let dims = axis("grid_embedding_dim", &self.grid_embedding_dim, &DEFAULT_GRID_EMBEDDING_DIM)?;
        let lrs = axis("grid_learning_rate", &self.grid_learning_rate, &DEFAULT_GRID_LEARNING_RATE)?;
        let l2s = axis("grid_l2_lambda", &self.grid_l2_lambda, &DEFAULT_GRID_L2_LAMBDA)?;
        let drops = axis("grid_dropout", &self.grid_dropout, &DEFAULT_GRID_DROPOUT)?;
        let mut points = Vec::new();
        for &embedding_dim in &dims {
            for &learning_rate in &lrs {
                for &l2_lambda in &l2s {
                    for &dropout in &drops {
                        points.push(GridPoint {
                            embedding_dim,
                            learning_rate,
                            l2_lambda,
                            dropout,
                        });
                    }
                }
            }
        }
        Ok(points)
    }

    /// Applies a grid point; `output_dim` follows the embedding width.
    pub fn with_point(&self, p: GridPoint) -> Self {
        let mut c = self.clone();
        c.embedding_dim = p.embedding_dim;
        c.output_dim = None;
        c.learning_rate = p.learning_rate;
        c.l2_lambda = p.l2_lambda;
        c.dropout = p.dropout;
        c
    }

    /// First 16 hex digits of the SHA-256 of the config's JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `DEEPMR_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("DEEPMR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}
