//! Multi-episode experiment driver.
//!
//! `run_experiment` plays every configured strategy through the same
//! episode sequence (same data, same initial weights), recording loss
//! trajectories, test accuracy at a fixed cadence, per-episode retention,
//! and de-synchronization time. Strategies run concurrently; each run is
//! internally deterministic, so the merged record is reproducible byte for
//! byte under one seed.

mod config;
pub mod output;

pub use config::{
    apply_override, config_with_overrides, DatasetSource, ExperimentConfig, NetworkConfig,
    ObjectiveSettings, RunMode,
};

use rayon::prelude::*;

use crate::episodes::{self, EpisodeDataset};
use crate::error::{Error, Result};
use crate::nn::{self, LayerSpec, ModelWeights, Sample, TrainConfig};
use crate::seeding::{derive_seed, Stream};
use crate::strategies::{
    self, history_summary, initial_history, HistorySummary, Strategy,
};
use crate::sync::{
    self, desync_time, EpisodeSetup, IterationPoint, ObjectiveConfig, SelectionMode, TrainReport,
};

/// Accuracy measurements taken while an episode trains.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub iteration: usize,
    /// Accuracy on the combined test set (all episode permutations).
    pub combined_accuracy: f64,
    /// Accuracy on each per-episode test split seen so far (indices 0..=k).
    pub split_accuracies: Vec<f64>,
}

/// Everything recorded about one (strategy, episode) pair.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub chosen_iterations: usize,
    pub desync_seconds: f64,
    pub objective: f64,
    pub points: Vec<IterationPoint>,
    pub evals: Vec<EvalPoint>,
}

/// One strategy's full trajectory through the experiment.
#[derive(Debug, Clone)]
pub struct StrategyRecord {
    pub strategy: Strategy,
    pub episodes: Vec<EpisodeRecord>,
    /// `retention_matrix[j][e]`: accuracy on episode `e`'s test split after
    /// episode `j` finished (lower-triangular coverage, `e ≤ j`).
    pub retention_matrix: Vec<Vec<f64>>,
    pub cumulative_desync_seconds: f64,
    pub final_combined_accuracy: f64,
    pub history: HistorySummary,
}

/// Result of a full experiment run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub strategies: Vec<StrategyRecord>,
}

/// The episode datasets and test splits shared by every strategy in a run.
pub struct PreparedData {
    pub episodes: Vec<EpisodeDataset>,
    pub test_splits: Vec<Vec<Sample>>,
    pub combined_test: Vec<Sample>,
}

/// Builds the base pools, episode datasets, and test splits for a config.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (train_pool, test_pool) = match &cfg.dataset {
        DatasetSource::Synthetic {
            dim,
            classes,
            train_count,
            test_count,
        } => {
            // One generator call so train and test share the class means;
            // the tail of the pool is the held-out split.
            let mut pool = episodes::make_synthetic(
                derive_seed(cfg.seed, Stream::SyntheticTrain, 0),
                *classes,
                *dim,
                *train_count + *test_count,
            )?;
            let test = pool.split_off(*train_count);
            (pool, test)
        }
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => (
            episodes::load_idx(train_images, train_labels)?,
            episodes::load_idx(test_images, test_labels)?,
        ),
    };

    let input_dim = cfg.nn.layer_sizes[0];
    if train_pool.first().map(|s| s.features.len()) != Some(input_dim) {
        return Err(Error::Config(format!(
            "dataset feature dimension {} does not match network input width {}",
            train_pool.first().map_or(0, |s| s.features.len()),
            input_dim
        )));
    }

    let mut eps = Vec::with_capacity(cfg.episodes);
    let mut test_splits = Vec::with_capacity(cfg.episodes);
    let per_episode_test = cfg.test_images_total / cfg.episodes;
    for k in 0..cfg.episodes {
        let episode = episodes::make_episode(&train_pool, k, cfg.seed, cfg.episode_size)?;
        test_splits.push(episodes::make_test_split(
            &test_pool,
            &episode,
            per_episode_test,
            cfg.seed,
        )?);
        eps.push(episode);
    }
    let combined_test: Vec<Sample> = test_splits.iter().flatten().cloned().collect();
    Ok(PreparedData {
        episodes: eps,
        test_splits,
        combined_test,
    })
}

/// Runs every configured strategy through the episode sequence.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let spec = LayerSpec::new(cfg.nn.layer_sizes.clone())?;
    let init_seed = derive_seed(cfg.seed, Stream::WeightInit, 0);

    let strategies: Vec<StrategyRecord> = cfg
        .strategies
        .par_iter()
        .map(|&strategy| run_strategy(cfg, &data, strategy, &spec, init_seed))
        .collect::<Result<_>>()?;

    Ok(RunRecord {
        run_id: output::run_id(cfg),
        config: cfg.clone(),
        strategies,
    })
}

fn run_strategy(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    strategy: Strategy,
    spec: &LayerSpec,
    init_seed: u64,
) -> Result<StrategyRecord> {
    let mut weights = ModelWeights::init(spec.clone(), init_seed);
    let mut history = initial_history(strategy);
    let train_cfg = TrainConfig {
        learning_rate: cfg.nn.learning_rate,
        max_iterations: cfg.iterations,
        seed: cfg.seed,
        batch: cfg.nn.batch,
    };
    let selection = match cfg.mode {
        RunMode::Fixed => SelectionMode::FixedFinal,
        RunMode::Optimized => SelectionMode::Optimize,
    };

    let mut episode_records = Vec::with_capacity(cfg.episodes);
    let mut retention_matrix = Vec::with_capacity(cfg.episodes);
    let mut cumulative_desync = 0.0;

    for episode in &data.episodes {
        let k = episode.episode_index;
        let effective = strategies::effective_training_size(strategy, episode, &history);
        let t_ref = match cfg.objective.t_ref {
            Some(t) => t,
            // Reference time: the outage of running every allowed iteration.
            None => desync_time(effective, &cfg.sync, cfg.iterations.max(1)),
        };
        let objective = ObjectiveConfig::new(
            cfg.objective.alpha,
            cfg.iterations,
            t_ref,
            cfg.objective.normalization,
        )?;
        let setup = EpisodeSetup {
            strategy,
            reg: &cfg.reg,
            train: &train_cfg,
            objective,
            sync: &cfg.sync,
            selection,
        };

        let mut evals: Vec<EvalPoint> = Vec::new();
        let eval_every = cfg.eval_every;
        let n_max = cfg.iterations;
        let splits_seen = &data.test_splits[..=k];
        let report: TrainReport = sync::train_episode_observed(
            &setup,
            &weights,
            episode,
            &history,
            |n, w, _point| {
                if n % eval_every == 0 || n == n_max {
                    evals.push(evaluate(w, &data.combined_test, splits_seen, n)?);
                }
                Ok(())
            },
        )?;

        weights = report.final_weights.clone();
        strategies::end_of_episode(strategy, &weights, episode, &mut history, &cfg.reg)?;

        // Retention row at the episode's selected weights.
        let row = splits_seen
            .iter()
            .map(|split| nn::evaluate_accuracy(&weights, split))
            .collect::<Result<Vec<_>>>()?;
        retention_matrix.push(row);

        cumulative_desync += report.desync_seconds;
        episode_records.push(EpisodeRecord {
            episode: k,
            chosen_iterations: report.chosen_iterations,
            desync_seconds: report.desync_seconds,
            objective: report.objective,
            points: report.points,
            evals,
        });
    }

    let final_combined_accuracy = nn::evaluate_accuracy(&weights, &data.combined_test)?;
    if !final_combined_accuracy.is_finite() {
        return Err(Error::Numeric {
            context: format!("final combined accuracy for strategy {strategy}"),
        });
    }

    Ok(StrategyRecord {
        strategy,
        episodes: episode_records,
        retention_matrix,
        cumulative_desync_seconds: cumulative_desync,
        final_combined_accuracy,
        history: history_summary(&history),
    })
}

fn evaluate(
    w: &ModelWeights,
    combined: &[Sample],
    splits: &[Vec<Sample>],
    iteration: usize,
) -> Result<EvalPoint> {
    let (correct, total) = nn::evaluate_counts(w, combined)?;
    let split_accuracies = splits
        .iter()
        .map(|split| nn::evaluate_accuracy(w, split))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalPoint {
        iteration,
        combined_accuracy: correct as f64 / total as f64,
        split_accuracies,
    })
}

/// One measurement of how well an earlier episode is still remembered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetentionPoint {
    pub episode: usize,
    pub iteration: usize,
    pub accuracy: f64,
}

/// Accuracy on episode `e`'s test split at every evaluation point from
/// episode `e` onward — the forgetting curve for that episode.
pub fn retention_curve(
    record: &RunRecord,
    strategy: Strategy,
    episode: usize,
) -> Result<Vec<RetentionPoint>> {
    if episode >= record.config.episodes {
        return Err(Error::Config(format!(
            "episode {episode} out of range (run has {})",
            record.config.episodes
        )));
    }
    let strat = record
        .strategies
        .iter()
        .find(|s| s.strategy == strategy)
        .ok_or_else(|| Error::Config(format!("strategy {strategy} not part of this run")))?;
    let mut curve = Vec::new();
    for ep in &strat.episodes {
        if ep.episode < episode {
            continue;
        }
        for eval in &ep.evals {
            curve.push(RetentionPoint {
                episode: ep.episode,
                iteration: eval.iteration,
                accuracy: eval.split_accuracies[episode],
            });
        }
    }
    Ok(curve)
}

/// One α setting's outcome in a tradeoff sweep.
#[derive(Debug, Clone)]
pub struct AlphaRow {
    pub alpha: f64,
    pub chosen_iterations: usize,
    /// Total training loss at the chosen iteration.
    pub loss: f64,
    pub desync_seconds: f64,
    pub objective: f64,
    /// Full loss/ΔT trajectory, for the tradeoff figure.
    pub points: Vec<IterationPoint>,
}

/// Runs the first episode once per α with optimized iteration selection.
/// Rows come back sorted by α.
pub fn sweep_alpha(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<AlphaRow>> {
    cfg.validate()?;
    for &alpha in alphas {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "sweep alpha must lie in [0, 1], got {alpha}"
            )));
        }
    }
    let data = prepare_data(cfg)?;
    let episode = &data.episodes[0];
    let spec = LayerSpec::new(cfg.nn.layer_sizes.clone())?;
    let init_seed = derive_seed(cfg.seed, Stream::WeightInit, 0);
    let train_cfg = TrainConfig {
        learning_rate: cfg.nn.learning_rate,
        max_iterations: cfg.iterations,
        seed: cfg.seed,
        batch: cfg.nn.batch,
    };
    let t_ref = match cfg.objective.t_ref {
        Some(t) => t,
        None => desync_time(episode.len(), &cfg.sync, cfg.iterations.max(1)),
    };

    let mut rows: Vec<AlphaRow> = alphas
        .par_iter()
        .map(|&alpha| {
            // Episode 0 has no history, so every strategy behaves alike;
            // single-task is the cheapest stand-in.
            let strategy = Strategy::SingleTask;
            let history = initial_history(strategy);
            let setup = EpisodeSetup {
                strategy,
                reg: &cfg.reg,
                train: &train_cfg,
                objective: ObjectiveConfig::new(
                    alpha,
                    cfg.iterations,
                    t_ref,
                    cfg.objective.normalization,
                )?,
                sync: &cfg.sync,
                selection: SelectionMode::Optimize,
            };
            let w0 = ModelWeights::init(spec.clone(), init_seed);
            let report = sync::train_episode(&setup, &w0, episode, &history)?;
            Ok(AlphaRow {
                alpha,
                chosen_iterations: report.chosen_iterations,
                loss: report.points[report.chosen_iterations].total_loss,
                desync_seconds: report.desync_seconds,
                objective: report.objective,
                points: report.points,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(rows)
}
