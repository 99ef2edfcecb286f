//! Experiment configuration: one JSON document drives a whole run.
//!
//! The file mirrors [`ExperimentConfig`] field for field, so every value the
//! summary echoes can be fed back in unchanged. Overrides address fields by
//! dotted path (`reg.lambda=75000`) and must name keys that already exist —
//! typos are rejected, not ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchMode, LayerSpec};
use crate::strategies::{RegConfig, Strategy};
use crate::sync::{ObjectiveMode, SyncParams};

/// Whether episodes run a fixed iteration count or optimize it via the
/// scalarized objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Fixed,
    Optimized,
}

/// Network and optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    #[serde(default)]
    pub batch: BatchMode,
}

/// Scalarization settings; `t_ref = None` derives the reference time per
/// episode as the cost of running all `iterations`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSettings {
    pub alpha: f64,
    #[serde(default)]
    pub normalization: ObjectiveMode,
    #[serde(default)]
    pub t_ref: Option<f64>,
}

/// Where the base data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Gaussian-cluster fixture; no files needed.
    Synthetic {
        dim: usize,
        classes: usize,
        train_count: usize,
        test_count: usize,
    },
    /// IDX image/label file pairs (gzip accepted by suffix).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of episodes `K`.
    pub episodes: usize,
    /// Samples collected per episode `I_k`.
    pub episode_size: usize,
    pub strategies: Vec<Strategy>,
    pub nn: NetworkConfig,
    /// Iterations per episode (`n_max` in optimized mode).
    pub iterations: usize,
    pub mode: RunMode,
    pub objective: ObjectiveSettings,
    pub reg: RegConfig,
    pub sync: SyncParams,
    pub seed: u64,
    pub dataset: DatasetSource,
    /// Test accuracy is evaluated every this many iterations.
    pub eval_every: usize,
    /// Combined test-set size, split evenly across episode permutations.
    pub test_images_total: usize,
    /// Name of the preset this config came from, if any.
    #[serde(default)]
    pub preset: Option<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.episode_size == 0 {
            return Err(Error::Config("episode_size must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(Error::Config(format!("duplicate strategy {s}")));
            }
        }
        LayerSpec::new(self.nn.layer_sizes.clone())?;
        if !(self.nn.learning_rate > 0.0 && self.nn.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.nn.learning_rate
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.test_images_total < self.episodes {
            return Err(Error::Config(format!(
                "test_images_total ({}) must cover at least one image per episode ({})",
                self.test_images_total, self.episodes
            )));
        }
        if !(0.0..=1.0).contains(&self.objective.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.objective.alpha
            )));
        }
        if let Some(t_ref) = self.objective.t_ref {
            if !(t_ref > 0.0 && t_ref.is_finite()) {
                return Err(Error::Config(format!("t_ref must be positive, got {t_ref}")));
            }
        }
        self.reg.validate()?;
        self.sync.validate()?;
        match &self.dataset {
            DatasetSource::Synthetic {
                dim,
                classes,
                train_count,
                test_count,
            } => {
                if *classes < 2 || *dim == 0 {
                    return Err(Error::Config(
                        "synthetic dataset needs dim ≥ 1 and classes ≥ 2".into(),
                    ));
                }
                if *train_count < self.episode_size {
                    return Err(Error::Config(format!(
                        "synthetic train_count ({train_count}) smaller than episode_size ({})",
                        self.episode_size
                    )));
                }
                if *test_count * self.episodes == 0 {
                    return Err(Error::Config("synthetic test_count must be positive".into()));
                }
            }
            DatasetSource::Idx { .. } => {}
        }
        Ok(())
    }

    /// Desk-scale preset: synthetic 64-dimensional data, four episodes of
    /// 2000 samples, 100 fixed iterations each. Finishes in minutes.
    pub fn desk(seed: u64) -> Self {
        Self {
            episodes: 4,
            episode_size: 2000,
            strategies: Strategy::ALL.to_vec(),
            nn: NetworkConfig {
                layer_sizes: vec![64, 100, 100, 10],
                learning_rate: 0.5,
                batch: BatchMode::Full,
            },
            iterations: 100,
            mode: RunMode::Fixed,
            objective: ObjectiveSettings {
                alpha: 0.5,
                normalization: ObjectiveMode::Normalized,
                t_ref: None,
            },
            reg: RegConfig {
                lambda: 75_000.0,
                gamma: 0.5,
            },
            sync: SyncParams {
                cycles_per_sample: 125_440.0,
                cpu_frequency_hz: 4.0e9,
            },
            seed,
            dataset: DatasetSource::Synthetic {
                dim: 64,
                classes: 10,
                train_count: 8000,
                test_count: 2000,
            },
            eval_every: 10,
            test_images_total: 1000,
            preset: Some("desk".into()),
        }
    }

    /// Paper-scale preset: permuted MNIST, MLP 784-256-256-10, η = 0.01,
    /// λ = 75000, γ = 0.5, four episodes of 15000 samples, 100 fixed
    /// iterations each. Needs the MNIST IDX files on disk.
    pub fn paper(seed: u64) -> Self {
        Self {
            episodes: 4,
            episode_size: 15_000,
            strategies: Strategy::ALL.to_vec(),
            nn: NetworkConfig {
                layer_sizes: vec![784, 256, 256, 10],
                learning_rate: 0.01,
                batch: BatchMode::Full,
            },
            iterations: 100,
            mode: RunMode::Fixed,
            objective: ObjectiveSettings {
                alpha: 0.5,
                normalization: ObjectiveMode::Normalized,
                t_ref: None,
            },
            reg: RegConfig {
                lambda: 75_000.0,
                gamma: 0.5,
            },
            sync: SyncParams {
                cycles_per_sample: 125_440.0,
                cpu_frequency_hz: 4.0e9,
            },
            seed,
            dataset: DatasetSource::Idx {
                train_images: "train-images-idx3-ubyte".into(),
                train_labels: "train-labels-idx1-ubyte".into(),
                test_images: "t10k-images-idx3-ubyte".into(),
                test_labels: "t10k-labels-idx1-ubyte".into(),
            },
            eval_every: 10,
            test_images_total: 1000,
            preset: Some("paper".into()),
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(seed)),
            "paper" => Ok(Self::paper(seed)),
            other => Err(Error::Config(format!(
                "unknown preset '{other}', expected 'desk' or 'paper'"
            ))),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves IDX dataset paths that do not exist as written by trying a
    /// `.gz` twin and the data directory (usually `$TWINSYNC_DATA_DIR`).
    pub fn resolve_dataset_paths(&mut self, data_dir: Option<&Path>) {
        if let DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } = &mut self.dataset
        {
            for path in [train_images, train_labels, test_images, test_labels] {
                if let Some(found) = locate(path, data_dir) {
                    *path = found;
                }
            }
        }
    }
}

fn locate(path: &Path, data_dir: Option<&Path>) -> Option<PathBuf> {
    let mut candidates = vec![path.to_path_buf(), gz_twin(path)];
    if let Some(dir) = data_dir {
        candidates.push(dir.join(path));
        candidates.push(gz_twin(&dir.join(path)));
    }
    candidates.into_iter().find(|c| c.is_file())
}

fn gz_twin(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".gz");
    PathBuf::from(s)
}

/// Applies one `key=value` override onto a config JSON document. The dotted
/// path must lead to a key that already exists; the value is parsed as JSON
/// when possible and falls back to a string.
pub fn apply_override(doc: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!("override '{assignment}' is not of the form key=value"))
    })?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));

    let mut cursor = doc;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let map = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override '{path}': '{}' is not an object",
                segments[..i].join(".")
            ))
        })?;
        let entry = map.get_mut(*segment).ok_or_else(|| {
            Error::Config(format!("override '{path}': unknown config key '{segment}'"))
        })?;
        if i + 1 == segments.len() {
            *entry = value;
            return Ok(());
        }
        cursor = entry;
    }
    unreachable!("split produces at least one segment")
}

/// Parses a config document, applies overrides, and revalidates.
pub fn config_with_overrides(json: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut doc: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::Config(format!("config: {e}")))?;
    for assignment in overrides {
        apply_override(&mut doc, assignment)?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
