//! The de-synchronization model and the per-episode iteration choice.
//!
//! While the twin retrains it is out of service. That outage is modeled as
//! compute time: `ΔT = size · Λ · n / f` seconds for `n` full-batch
//! iterations over `size` samples, with `Λ` CPU cycles per trained sample
//! on a processor running at `f` cycles per second. Picking the iteration
//! count `n_k` for an episode then trades the final loss against the
//! outage: minimize `α·loss(n) + (1−α)·ΔT(n)` over `n ∈ 0..=n_max`.
//!
//! Loss is dimensionless and ΔT is seconds, so by default ΔT is normalized
//! by a reference time (the cost of running all `n_max` iterations) to make
//! `α` meaningful across dataset sizes; a raw mode keeps the literal sum.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::episodes::EpisodeDataset;
use crate::error::{Error, Result};
use crate::nn::{self, BatchMode, ModelWeights, TrainConfig};
use crate::strategies::{self, History, RegConfig, Strategy};

/// Compute model of the edge host: cycles per trained sample and CPU
/// frequency.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyncParams {
    pub cycles_per_sample: f64,
    pub cpu_frequency_hz: f64,
}

impl SyncParams {
    pub fn new(cycles_per_sample: f64, cpu_frequency_hz: f64) -> Result<Self> {
        let params = Self {
            cycles_per_sample,
            cpu_frequency_hz,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cycles_per_sample > 0.0 && self.cycles_per_sample.is_finite()) {
            return Err(Error::Config(format!(
                "cycles per sample must be positive, got {}",
                self.cycles_per_sample
            )));
        }
        if !(self.cpu_frequency_hz > 0.0 && self.cpu_frequency_hz.is_finite()) {
            return Err(Error::Config(format!(
                "cpu frequency must be positive, got {}",
                self.cpu_frequency_hz
            )));
        }
        Ok(())
    }
}

/// Out-of-service seconds for `iterations` full passes over a training set:
/// `size · Λ · n / f`, exactly linear in both `size` and `n`.
pub fn desync_time(training_set_size: usize, params: &SyncParams, iterations: usize) -> f64 {
    training_set_size as f64 * params.cycles_per_sample * iterations as f64
        / params.cpu_frequency_hz
}

/// Whether ΔT enters the objective normalized by `t_ref` or in raw seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    #[default]
    Normalized,
    Raw,
}

/// Resolved scalarization settings for one episode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Bias toward accuracy: 1 = loss only, 0 = synchronization only.
    pub alpha: f64,
    pub n_max: usize,
    /// Reference time dividing ΔT in normalized mode.
    pub t_ref: f64,
    pub mode: ObjectiveMode,
}

impl ObjectiveConfig {
    pub fn new(alpha: f64, n_max: usize, t_ref: f64, mode: ObjectiveMode) -> Result<Self> {
        let cfg = Self {
            alpha,
            n_max,
            t_ref,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.t_ref > 0.0 && self.t_ref.is_finite()) {
            return Err(Error::Config(format!(
                "t_ref must be positive, got {}",
                self.t_ref
            )));
        }
        Ok(())
    }
}

/// The scalarized episode objective `α·loss + (1−α)·ΔT`, with ΔT divided by
/// `t_ref` in normalized mode.
pub fn scalarized_objective(loss: f64, delta_t: f64, cfg: &ObjectiveConfig) -> f64 {
    let time_term = match cfg.mode {
        ObjectiveMode::Normalized => delta_t / cfg.t_ref,
        ObjectiveMode::Raw => delta_t,
    };
    cfg.alpha * loss + (1.0 - cfg.alpha) * time_term
}

/// Streaming argmin over the objective trajectory; ties keep the smallest
/// iteration count. This is the selection rule `train_episode` uses, kept
/// standalone so it can be checked against a brute-force scan.
#[derive(Debug, Clone)]
pub struct ObjectiveScan {
    best: Option<(usize, f64)>,
}

impl ObjectiveScan {
    pub fn new() -> Self {
        Self { best: None }
    }

    /// Feeds the objective value at iteration `n`; returns true when this
    /// point strictly improves on everything seen before.
    pub fn observe(&mut self, n: usize, objective: f64) -> bool {
        match self.best {
            Some((_, best)) if objective >= best => false,
            _ => {
                self.best = Some((n, objective));
                true
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

impl Default for ObjectiveScan {
    fn default() -> Self {
        Self::new()
    }
}

/// How the reported weights are chosen from the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Argmin of the scalarized objective over `0..=n_max`.
    Optimize,
    /// Always the final iterate (the fixed-`n` protocol).
    FixedFinal,
}

/// One point of the recorded trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationPoint {
    pub iteration: usize,
    pub total_loss: f64,
    pub data_loss: f64,
    pub penalty_loss: f64,
    pub desync_seconds: f64,
    pub objective: f64,
}

/// Outcome of one episode of training.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Selected iteration count `n_k*`.
    pub chosen_iterations: usize,
    /// Weights at the selected iteration; the episode's `w*_k`.
    pub final_weights: ModelWeights,
    /// Loss/objective after each iteration `0..=n_max`.
    pub points: Vec<IterationPoint>,
    /// ΔT at the selected iteration count, in seconds.
    pub desync_seconds: f64,
    /// Objective value at the selected iteration.
    pub objective: f64,
    /// Wall time per iteration; diagnostic only, never part of ΔT.
    pub iteration_wall_secs: Vec<f64>,
    /// Total wall time spent on regularizer computation; diagnostic only.
    pub penalty_wall_secs: f64,
}

/// Everything fixed for one episode of training.
#[derive(Debug, Clone)]
pub struct EpisodeSetup<'a> {
    pub strategy: Strategy,
    pub reg: &'a RegConfig,
    pub train: &'a TrainConfig,
    pub objective: ObjectiveConfig,
    pub sync: &'a SyncParams,
    pub selection: SelectionMode,
}

/// Runs gradient descent for `n = 0..=n_max`, scoring the scalarized
/// objective after every iteration, and returns the weights at the selected
/// iteration (argmin, ties to the smallest `n`; or the final iterate in
/// fixed mode). The observer sees the weights after every iteration.
pub fn train_episode_observed<F>(
    setup: &EpisodeSetup,
    initial: &ModelWeights,
    episode: &EpisodeDataset,
    history: &History,
    mut observer: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, &ModelWeights, &IterationPoint) -> Result<()>,
{
    setup.train.validate()?;
    setup.objective.validate()?;
    setup.sync.validate()?;
    let effective_size = strategies::effective_training_size(setup.strategy, episode, history);
    let n_max = setup.objective.n_max;

    let mut mini_batches = MiniBatches::new(setup.strategy, setup.train, episode, history);
    let mut weights = initial.clone();
    let mut scan = ObjectiveScan::new();
    let mut best_weights = initial.clone();
    let mut points = Vec::with_capacity(n_max + 1);
    let mut wall = Vec::with_capacity(n_max + 1);
    let mut penalty_wall = 0.0;

    for n in 0..=n_max {
        let started = Instant::now();
        let loss = strategies::episode_loss(setup.strategy, &weights, episode, history, setup.reg)?;
        penalty_wall += loss.penalty_secs;
        if !loss.total.is_finite() {
            return Err(Error::Numeric {
                context: format!(
                    "loss for strategy {} in episode {} at iteration {n}",
                    setup.strategy, episode.episode_index
                ),
            });
        }
        let delta_t = desync_time(effective_size, setup.sync, n);
        let objective = scalarized_objective(loss.total, delta_t, &setup.objective);
        let point = IterationPoint {
            iteration: n,
            total_loss: loss.total,
            data_loss: loss.data,
            penalty_loss: loss.penalty,
            desync_seconds: delta_t,
            objective,
        };
        if scan.observe(n, objective) {
            best_weights = weights.clone();
        }
        observer(n, &weights, &point)?;
        points.push(point);

        if n < n_max {
            // The descent step itself; its gradient came with the loss.
            weights = match mini_batches.next_batch() {
                None => nn::gd_step(&weights, &loss.grad, setup.train.learning_rate)?,
                Some(batch) => {
                    let (_, mut grad) = nn::loss_and_grad(&weights, batch)?;
                    // Mini-batches approximate only the data term; the anchor
                    // penalty gradient stays exact.
                    if let History::Anchors(anchors) = history {
                        if setup.reg.lambda > 0.0 && !anchors.is_empty() {
                            let (_, pgrad) =
                                strategies::ewc_penalty(&weights, anchors, setup.reg.lambda)?;
                            for (g, p) in grad.iter_mut().zip(&pgrad) {
                                *g += *p;
                            }
                        }
                    }
                    nn::gd_step(&weights, &grad, setup.train.learning_rate)?
                }
            };
        }
        wall.push(started.elapsed().as_secs_f64());
    }

    let (chosen, final_weights) = match setup.selection {
        SelectionMode::Optimize => {
            let (n, _) = scan.best().expect("at least one point was observed");
            (n, best_weights)
        }
        SelectionMode::FixedFinal => (n_max, weights),
    };
    let desync_seconds = points[chosen].desync_seconds;
    let objective = points[chosen].objective;
    Ok(TrainReport {
        chosen_iterations: chosen,
        final_weights,
        points,
        desync_seconds,
        objective,
        iteration_wall_secs: wall,
        penalty_wall_secs: penalty_wall,
    })
}

/// [`train_episode_observed`] without an observer.
pub fn train_episode(
    setup: &EpisodeSetup,
    initial: &ModelWeights,
    episode: &EpisodeDataset,
    history: &History,
) -> Result<TrainReport> {
    train_episode_observed(setup, initial, episode, history, |_, _, _| Ok(()))
}

/// Deterministic cyclic mini-batches over the strategy's training pool
/// (accumulated data for exhaustive, the current episode otherwise). In
/// full-batch mode (`next_batch` returns `None`) the strategy loss gradient
/// is used directly; mini-batch mode replaces only the descent direction,
/// while the recorded trajectory still scores the full strategy loss.
struct MiniBatches {
    order: Vec<usize>,
    samples: Vec<nn::Sample>,
    size: usize,
    cursor: usize,
    scratch: Vec<nn::Sample>,
}

impl MiniBatches {
    fn new(
        strategy: Strategy,
        train: &TrainConfig,
        episode: &EpisodeDataset,
        history: &History,
    ) -> Self {
        match train.batch {
            BatchMode::Full => Self {
                order: Vec::new(),
                samples: Vec::new(),
                size: 0,
                cursor: 0,
                scratch: Vec::new(),
            },
            BatchMode::Mini { size } => {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut samples = Vec::new();
                if let (Strategy::Exhaustive, History::Accumulated(acc)) = (strategy, history) {
                    for past in acc.episodes() {
                        samples.extend(past.samples.iter().cloned());
                    }
                }
                samples.extend(episode.samples.iter().cloned());
                let mut order: Vec<usize> = (0..samples.len()).collect();
                order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(train.seed));
                Self {
                    size: size.min(samples.len()),
                    order,
                    samples,
                    cursor: 0,
                    scratch: Vec::new(),
                }
            }
        }
    }

    fn next_batch(&mut self) -> Option<&[nn::Sample]> {
        if self.size == 0 {
            return None;
        }
        self.scratch.clear();
        for _ in 0..self.size {
            self.scratch.push(self.samples[self.order[self.cursor]].clone());
            self.cursor = (self.cursor + 1) % self.order.len();
        }
        Some(&self.scratch)
    }
}
