//! The four twin-update strategies and their supporting math.
//!
//! - **Exhaustive**: retrain on every episode seen so far. Accurate and
//!   history-faithful, but the training set (and with it the out-of-service
//!   time) grows linearly with the episode count.
//! - **Single-task**: train on the current episode only. Constant cost,
//!   catastrophic forgetting.
//! - **EWC**: train on the current episode plus one quadratic penalty per
//!   past episode, each anchored at that episode's final weights and scaled
//!   by its Fisher diagonal:
//!   `L(w, D_k) + Σ_{j<k} Σ_d (λ/2)·F_{j,d}·(w_d − w*_{j,d})²`.
//! - **EWC++**: like EWC but with a single anchor carrying a moving-average
//!   Fisher, `F̃_k = γ·F_k + (1−γ)·F̃_{k−1}`, so history stays O(n) and the
//!   penalty does not accumulate terms.
//!
//! Between episodes, [`end_of_episode`] folds the finished episode into the
//! strategy's history; during an episode, [`episode_loss`] produces the
//! strategy's total loss and gradient for the optimizer.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::episodes::{AccumulatedDataset, EpisodeDataset};
use crate::error::{Error, Result};
use crate::nn::{self, ModelWeights, MultiSlice};

/// Twin-update strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Exhaustive,
    SingleTask,
    Ewc,
    EwcPlusPlus,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Exhaustive,
        Strategy::SingleTask,
        Strategy::Ewc,
        Strategy::EwcPlusPlus,
    ];

    /// Stable token used in CSV output and config files.
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Exhaustive => "exhaustive",
            Strategy::SingleTask => "single_task",
            Strategy::Ewc => "ewc",
            Strategy::EwcPlusPlus => "ewc_plus_plus",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which estimate a Fisher diagonal holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherKind {
    /// `F_k`, estimated on one episode's data.
    PerEpisode,
    /// `F̃_k`, the EWC++ moving average.
    MovingAverage,
}

/// Per-parameter nonnegative importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherDiagonal {
    values: Vec<f64>,
    pub episode_index: usize,
    pub kind: FisherKind,
}

impl FisherDiagonal {
    pub fn new(values: Vec<f64>, episode_index: usize, kind: FisherKind) -> Result<Self> {
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Numeric {
                context: "fisher diagonal entries must be finite and nonnegative".into(),
            });
        }
        Ok(Self {
            values,
            episode_index,
            kind,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One stored reference point: an episode's final weights plus their
/// importance.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub weights: ModelWeights,
    pub fisher: FisherDiagonal,
}

/// The quadratic-penalty history: the full anchor list for EWC, at most one
/// anchor for EWC++.
#[derive(Debug, Clone, Default)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn push(&mut self, anchor: Anchor) {
        self.anchors.push(anchor);
    }

    /// Drops everything but `anchor` (the EWC++ update).
    pub fn replace(&mut self, anchor: Anchor) {
        self.anchors.clear();
        self.anchors.push(anchor);
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Regularization hyperparameters: penalty strength λ and moving-average
/// rate γ.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegConfig {
    pub lambda: f64,
    pub gamma: f64,
}

impl RegConfig {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        let cfg = Self { lambda, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be nonnegative and finite, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// What a strategy remembers between episodes.
#[derive(Debug, Clone)]
pub enum History {
    /// Every past episode's data (exhaustive).
    Accumulated(AccumulatedDataset),
    /// Weight/Fisher anchors (EWC: one per episode; EWC++: at most one).
    Anchors(AnchorSet),
    /// Nothing (single-task).
    Stateless,
}

/// The empty history a strategy starts from.
pub fn initial_history(strategy: Strategy) -> History {
    match strategy {
        Strategy::Exhaustive => History::Accumulated(AccumulatedDataset::new()),
        Strategy::Ewc | Strategy::EwcPlusPlus => History::Anchors(AnchorSet::new()),
        Strategy::SingleTask => History::Stateless,
    }
}

fn history_mismatch(strategy: Strategy, history: &History) -> Error {
    let held = match history {
        History::Accumulated(_) => "accumulated data",
        History::Anchors(_) => "anchors",
        History::Stateless => "no history",
    };
    Error::Config(format!(
        "strategy {strategy} cannot use a history holding {held}"
    ))
}

/// Empirical Fisher diagonal at `w` over the episode's data:
/// `F_d = (1/I_k) Σ_i (∂ log p(y_i | x_i, w) / ∂w_d)²`.
///
/// Squared gradients of the log-likelihood stand in for the negative
/// expected Hessian diagonal; they are nonnegative by construction and need
/// only first-order machinery.
pub fn fisher_diagonal(w: &ModelWeights, data: &EpisodeDataset) -> Result<FisherDiagonal> {
    if data.is_empty() {
        return Err(Error::EmptyInput("fisher estimation episode"));
    }
    // ∂logp/∂w = −∂CE/∂w per sample, so the squares coincide.
    let values = nn::mean_squared_grad_set(w, &data.samples[..])?;
    FisherDiagonal::new(values, data.episode_index, FisherKind::PerEpisode)
}

/// Quadratic anchor penalty `Σ_j Σ_d (λ/2)·F_{j,d}·(w_d − w*_{j,d})²` and
/// its gradient `λ·Σ_j F_j ⊙ (w − w*_j)`.
pub fn ewc_penalty(
    w: &ModelWeights,
    anchors: &AnchorSet,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = w.len();
    let mut grad = vec![0.0; n];
    if lambda == 0.0 || anchors.is_empty() {
        return Ok((0.0, grad));
    }
    let mut penalty = 0.0;
    for anchor in anchors.anchors() {
        if anchor.weights.len() != n || anchor.fisher.len() != n {
            return Err(Error::ShapeMismatch {
                what: "anchor",
                expected: n,
                got: anchor.weights.len().min(anchor.fisher.len()),
            });
        }
        for (d, ((&wv, &av), &f)) in w
            .values()
            .iter()
            .zip(anchor.weights.values())
            .zip(anchor.fisher.values())
            .enumerate()
        {
            let diff = wv - av;
            penalty += 0.5 * lambda * f * diff * diff;
            grad[d] += lambda * f * diff;
        }
    }
    Ok((penalty, grad))
}

/// Moving-average Fisher update `F̃_k = γ·F_k + (1−γ)·F̃_{k−1}`.
pub fn ewcpp_fisher_update(
    current: &FisherDiagonal,
    previous: &FisherDiagonal,
    gamma: f64,
) -> Result<FisherDiagonal> {
    if current.len() != previous.len() {
        return Err(Error::ShapeMismatch {
            what: "fisher diagonals",
            expected: current.len(),
            got: previous.len(),
        });
    }
    let values = current
        .values()
        .iter()
        .zip(previous.values())
        .map(|(&c, &p)| gamma * c + (1.0 - gamma) * p)
        .collect();
    FisherDiagonal::new(values, current.episode_index, FisherKind::MovingAverage)
}

/// Loss of one training step, split into its data and penalty parts.
#[derive(Debug, Clone)]
pub struct EpisodeLoss {
    pub total: f64,
    pub data: f64,
    pub penalty: f64,
    pub grad: Vec<f64>,
    /// Wall time spent in the penalty term; diagnostic only, excluded from
    /// the de-synchronization model.
    pub penalty_secs: f64,
}

/// The strategy's objective on the current episode: data term over `D_k`
/// (or over the accumulated set for exhaustive) plus any anchor penalty.
pub fn episode_loss(
    strategy: Strategy,
    w: &ModelWeights,
    current: &EpisodeDataset,
    history: &History,
    reg: &RegConfig,
) -> Result<EpisodeLoss> {
    reg.validate()?;
    match (strategy, history) {
        (Strategy::Exhaustive, History::Accumulated(acc)) => {
            let mut parts: Vec<&[Sample]> = acc
                .episodes()
                .iter()
                .map(|e| &e.samples[..])
                .collect();
            parts.push(&current.samples[..]);
            let set = MultiSlice::new(parts);
            let (loss, grad) = nn::loss_and_grad_set(w, &set)?;
            Ok(EpisodeLoss {
                total: loss,
                data: loss,
                penalty: 0.0,
                grad,
                penalty_secs: 0.0,
            })
        }
        (Strategy::SingleTask, History::Stateless) => {
            let (loss, grad) = nn::loss_and_grad(w, &current.samples)?;
            Ok(EpisodeLoss {
                total: loss,
                data: loss,
                penalty: 0.0,
                grad,
                penalty_secs: 0.0,
            })
        }
        (Strategy::Ewc | Strategy::EwcPlusPlus, History::Anchors(anchors)) => {
            let (data, mut grad) = nn::loss_and_grad(w, &current.samples)?;
            if reg.lambda == 0.0 || anchors.is_empty() {
                // Skip the zero penalty entirely so the gradient stays
                // bit-identical to the single-task path.
                return Ok(EpisodeLoss {
                    total: data,
                    data,
                    penalty: 0.0,
                    grad,
                    penalty_secs: 0.0,
                });
            }
            let start = Instant::now();
            let (penalty, pgrad) = ewc_penalty(w, anchors, reg.lambda)?;
            for (g, p) in grad.iter_mut().zip(&pgrad) {
                *g += *p;
            }
            let penalty_secs = start.elapsed().as_secs_f64();
            Ok(EpisodeLoss {
                total: data + penalty,
                data,
                penalty,
                grad,
                penalty_secs,
            })
        }
        (s, h) => Err(history_mismatch(s, h)),
    }
}

use crate::nn::Sample;

/// Folds the finished episode into the history.
///
/// Exhaustive appends the episode's data; EWC appends an anchor
/// `(w*_k, F_k)`; EWC++ replaces its single anchor with
/// `(w*_k, γ·F_k + (1−γ)·F̃_{k−1})`, seeding the average with `F_0` on the
/// first episode; single-task keeps nothing.
pub fn end_of_episode(
    strategy: Strategy,
    w_star: &ModelWeights,
    current: &EpisodeDataset,
    history: &mut History,
    reg: &RegConfig,
) -> Result<()> {
    match (strategy, history) {
        (Strategy::Exhaustive, History::Accumulated(acc)) => acc.push(current.clone()),
        (Strategy::SingleTask, History::Stateless) => Ok(()),
        (Strategy::Ewc, History::Anchors(anchors)) => {
            let fisher = fisher_diagonal(w_star, current)?;
            anchors.push(Anchor {
                weights: w_star.clone(),
                fisher,
            });
            Ok(())
        }
        (Strategy::EwcPlusPlus, History::Anchors(anchors)) => {
            let fisher = fisher_diagonal(w_star, current)?;
            let averaged = match anchors.anchors().last() {
                Some(prev) => ewcpp_fisher_update(&fisher, &prev.fisher, reg.gamma)?,
                None => FisherDiagonal::new(
                    fisher.values().to_vec(),
                    current.episode_index,
                    FisherKind::MovingAverage,
                )?,
            };
            anchors.replace(Anchor {
                weights: w_star.clone(),
                fisher: averaged,
            });
            Ok(())
        }
        (s, h) => Err(history_mismatch(s, h)),
    }
}

/// Samples visited per gradient step: the accumulated size for exhaustive,
/// the current episode's size otherwise. This is the `size` that enters the
/// de-synchronization formula.
pub fn effective_training_size(
    strategy: Strategy,
    current: &EpisodeDataset,
    history: &History,
) -> usize {
    match (strategy, history) {
        (Strategy::Exhaustive, History::Accumulated(acc)) => acc.total_samples() + current.len(),
        _ => current.len(),
    }
}

/// Compact, serializable view of a history for run reports: sizes and
/// norms, never full vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistorySummary {
    Accumulated {
        episodes: usize,
        total_samples: usize,
    },
    Anchors {
        anchors: Vec<AnchorSummary>,
    },
    Stateless,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorSummary {
    pub episode_index: usize,
    pub kind: FisherKind,
    pub weight_l2_norm: f64,
    pub fisher_mean: f64,
    pub fisher_max: f64,
}

pub fn history_summary(history: &History) -> HistorySummary {
    match history {
        History::Accumulated(acc) => HistorySummary::Accumulated {
            episodes: acc.episodes().len(),
            total_samples: acc.total_samples(),
        },
        History::Anchors(set) => HistorySummary::Anchors {
            anchors: set
                .anchors()
                .iter()
                .map(|a| AnchorSummary {
                    episode_index: a.fisher.episode_index,
                    kind: a.fisher.kind,
                    weight_l2_norm: a
                        .weights
                        .values()
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt(),
                    fisher_mean: a.fisher.values().iter().sum::<f64>()
                        / a.fisher.len().max(1) as f64,
                    fisher_max: a.fisher.values().iter().cloned().fold(0.0, f64::max),
                })
                .collect(),
        },
        History::Stateless => HistorySummary::Stateless,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::make_synthetic;
    use crate::nn::LayerSpec;

    fn toy_episode(k: usize, count: usize, seed: u64) -> EpisodeDataset {
        let base = make_synthetic(seed, 3, 4, count * 2).unwrap();
        crate::episodes::make_episode(&base, k, seed, count).unwrap()
    }

    fn toy_weights(seed: u64) -> ModelWeights {
        ModelWeights::init(LayerSpec::new(vec![4, 5, 3]).unwrap(), seed)
    }

    #[test]
    fn fisher_entries_are_nonnegative() {
        let w = toy_weights(1);
        let ep = toy_episode(0, 12, 2);
        let f = fisher_diagonal(&w, &ep).unwrap();
        assert_eq!(f.len(), w.len());
        assert!(f.values().iter().all(|&v| v >= 0.0));
        assert_eq!(f.kind, FisherKind::PerEpisode);
    }

    #[test]
    fn fisher_is_mean_invariant_under_duplication() {
        let w = toy_weights(3);
        let mut ep = toy_episode(0, 10, 4);
        let f1 = fisher_diagonal(&w, &ep).unwrap();
        let doubled = ep.samples.clone();
        ep.samples.extend(doubled);
        let f2 = fisher_diagonal(&w, &ep).unwrap();
        for (a, b) in f1.values().iter().zip(f2.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn fisher_matches_finite_differences_of_log_likelihood() {
        // Single sample, tiny softmax-regression-like net: F_d should equal
        // (∂ log p / ∂w_d)², estimated here by central differences.
        let spec = LayerSpec::new(vec![2, 2, 2]).unwrap();
        let w = ModelWeights::init(spec.clone(), 5);
        let base = make_synthetic(6, 2, 2, 4).unwrap();
        let ep = crate::episodes::make_episode(&base, 0, 6, 1).unwrap();
        let fisher = fisher_diagonal(&w, &ep).unwrap();
        let sample = &ep.samples[0];
        let h = 1e-5;
        for d in 0..w.len() {
            let log_p = |values: Vec<f64>| {
                let model = ModelWeights::from_values(spec.clone(), values).unwrap();
                let probs = nn::forward(&model, &sample.features).unwrap();
                probs[sample.label].ln()
            };
            let mut plus = w.values().to_vec();
            plus[d] += h;
            let mut minus = w.values().to_vec();
            minus[d] -= h;
            let fd = (log_p(plus) - log_p(minus)) / (2.0 * h);
            let expect = fd * fd;
            let got = fisher.values()[d];
            assert!(
                (got - expect).abs() <= 1e-5 * expect.abs().max(1e-8),
                "coord {d}: fisher {got}, fd² {expect}"
            );
        }
    }

    #[test]
    fn penalty_zero_when_lambda_zero_or_at_anchor() {
        let w = toy_weights(7);
        let mut anchors = AnchorSet::new();
        anchors.push(Anchor {
            weights: w.clone(),
            fisher: FisherDiagonal::new(vec![1.0; w.len()], 0, FisherKind::PerEpisode).unwrap(),
        });
        let (p, g) = ewc_penalty(&w, &anchors, 0.0).unwrap();
        assert_eq!(p, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (p, g) = ewc_penalty(&w, &anchors, 4.0).unwrap();
        assert_eq!(p, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn penalty_matches_hand_computed_quadratic() {
        // One anchor, one effective parameter: F=2, λ=4, w−w* = 3
        // penalty = (4/2)·2·9 = 36, gradient = 4·2·3 = 24.
        let spec = LayerSpec::new(vec![1, 1, 1]).unwrap(); // 4 params
        let mut anchor_vals = vec![0.0; spec.param_count()];
        let mut w_vals = vec![0.0; spec.param_count()];
        anchor_vals[0] = 1.0;
        w_vals[0] = 4.0;
        let mut fisher = vec![0.0; spec.param_count()];
        fisher[0] = 2.0;
        let mut anchors = AnchorSet::new();
        anchors.push(Anchor {
            weights: ModelWeights::from_values(spec.clone(), anchor_vals).unwrap(),
            fisher: FisherDiagonal::new(fisher, 0, FisherKind::PerEpisode).unwrap(),
        });
        let w = ModelWeights::from_values(spec, w_vals).unwrap();
        let (p, g) = ewc_penalty(&w, &anchors, 4.0).unwrap();
        assert_eq!(p, 36.0);
        assert_eq!(g[0], 24.0);
        assert!(g[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let spec = LayerSpec::new(vec![3, 4, 2]).unwrap();
        let w = ModelWeights::init(spec.clone(), 11);
        let anchor_w = ModelWeights::init(spec.clone(), 12);
        let ep = toy_episode(0, 8, 13);
        let spec_sized = crate::episodes::make_episode(
            &make_synthetic(13, 2, 3, 20).unwrap(),
            0,
            13,
            8,
        )
        .unwrap();
        let _ = ep;
        let fisher = fisher_diagonal(&anchor_w, &spec_sized).unwrap();
        let mut anchors = AnchorSet::new();
        anchors.push(Anchor {
            weights: anchor_w,
            fisher,
        });
        let lambda = 75.0;
        let (_, grad) = ewc_penalty(&w, &anchors, lambda).unwrap();
        let h = 1e-4;
        for d in 0..w.len() {
            let eval = |delta: f64| {
                let mut vals = w.values().to_vec();
                vals[d] += delta;
                let m = ModelWeights::from_values(spec.clone(), vals).unwrap();
                ewc_penalty(&m, &anchors, lambda).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (grad[d] - fd).abs() / (grad[d].abs() + fd.abs()).max(1e-6);
            assert!(rel < 1e-6, "coord {d}: analytic {}, fd {fd}", grad[d]);
        }
    }

    #[test]
    fn moving_average_endpoints_and_midpoint() {
        let f_k = FisherDiagonal::new(vec![2.0, 4.0], 1, FisherKind::PerEpisode).unwrap();
        let f_prev = FisherDiagonal::new(vec![0.0, 2.0], 0, FisherKind::MovingAverage).unwrap();
        assert_eq!(
            ewcpp_fisher_update(&f_k, &f_prev, 1.0).unwrap().values(),
            f_k.values()
        );
        assert_eq!(
            ewcpp_fisher_update(&f_k, &f_prev, 0.0).unwrap().values(),
            f_prev.values()
        );
        assert_eq!(
            ewcpp_fisher_update(&f_k, &f_prev, 0.5).unwrap().values(),
            &[1.0, 3.0]
        );
    }

    #[test]
    fn moving_average_stays_between_inputs() {
        let f_k = FisherDiagonal::new(vec![3.0, 0.5, 7.0], 1, FisherKind::PerEpisode).unwrap();
        let f_prev =
            FisherDiagonal::new(vec![1.0, 2.0, 7.0], 0, FisherKind::MovingAverage).unwrap();
        for gamma in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let avg = ewcpp_fisher_update(&f_k, &f_prev, gamma).unwrap();
            for ((&a, &c), &p) in avg.values().iter().zip(f_k.values()).zip(f_prev.values()) {
                assert!(a >= c.min(p) - 1e-15 && a <= c.max(p) + 1e-15);
            }
        }
    }

    #[test]
    fn mismatched_fisher_lengths_are_rejected() {
        let a = FisherDiagonal::new(vec![1.0, 2.0], 0, FisherKind::PerEpisode).unwrap();
        let b = FisherDiagonal::new(vec![1.0], 0, FisherKind::PerEpisode).unwrap();
        assert!(matches!(
            ewcpp_fisher_update(&a, &b, 0.5),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn episode_zero_losses_coincide_across_strategies() {
        let w = toy_weights(20);
        let ep = toy_episode(0, 16, 21);
        let reg = RegConfig::new(100.0, 0.5).unwrap();
        let losses: Vec<EpisodeLoss> = Strategy::ALL
            .iter()
            .map(|&s| episode_loss(s, &w, &ep, &initial_history(s), &reg).unwrap())
            .collect();
        for l in &losses[1..] {
            assert_eq!(l.total, losses[0].total);
            assert_eq!(l.grad, losses[0].grad);
        }
    }

    #[test]
    fn ewc_with_zero_lambda_equals_single_task() {
        let w = toy_weights(22);
        let ep = toy_episode(1, 10, 23);
        let reg = RegConfig::new(0.0, 0.5).unwrap();
        let mut hist = initial_history(Strategy::Ewc);
        // put a real anchor in place; the zero λ must still null it out
        if let History::Anchors(set) = &mut hist {
            set.push(Anchor {
                weights: toy_weights(24),
                fisher: FisherDiagonal::new(vec![1.0; w.len()], 0, FisherKind::PerEpisode)
                    .unwrap(),
            });
        }
        let ewc = episode_loss(Strategy::Ewc, &w, &ep, &hist, &reg).unwrap();
        let single = episode_loss(
            Strategy::SingleTask,
            &w,
            &ep,
            &History::Stateless,
            &reg,
        )
        .unwrap();
        assert_eq!(ewc.total, single.total);
        assert_eq!(ewc.grad, single.grad);
        assert_eq!(ewc.penalty, 0.0);
    }

    #[test]
    fn exhaustive_loss_over_two_equal_episodes_is_mean_of_halves() {
        let w = toy_weights(30);
        let e0 = toy_episode(0, 10, 31);
        let e1 = toy_episode(1, 10, 31);
        let mut acc = AccumulatedDataset::new();
        acc.push(e0.clone()).unwrap();
        let combined = episode_loss(
            Strategy::Exhaustive,
            &w,
            &e1,
            &History::Accumulated(acc),
            &RegConfig::new(0.0, 0.5).unwrap(),
        )
        .unwrap();
        let l0 = nn::batch_loss(&w, &e0.samples).unwrap();
        let l1 = nn::batch_loss(&w, &e1.samples).unwrap();
        let expect = 0.5 * (l0 + l1);
        assert!((combined.total - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn strategy_history_mismatch_is_a_config_error() {
        let w = toy_weights(40);
        let ep = toy_episode(0, 6, 41);
        let reg = RegConfig::new(1.0, 0.5).unwrap();
        let err = episode_loss(
            Strategy::Exhaustive,
            &w,
            &ep,
            &History::Stateless,
            &reg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn histories_grow_per_strategy() {
        let reg = RegConfig::new(10.0, 0.5).unwrap();
        let mut ewc_hist = initial_history(Strategy::Ewc);
        let mut ewcpp_hist = initial_history(Strategy::EwcPlusPlus);
        let mut exhaustive_hist = initial_history(Strategy::Exhaustive);
        let w = toy_weights(50);
        for k in 0..3 {
            let ep = toy_episode(k, 8, 51);
            end_of_episode(Strategy::Ewc, &w, &ep, &mut ewc_hist, &reg).unwrap();
            end_of_episode(Strategy::EwcPlusPlus, &w, &ep, &mut ewcpp_hist, &reg).unwrap();
            end_of_episode(Strategy::Exhaustive, &w, &ep, &mut exhaustive_hist, &reg).unwrap();
        }
        match &ewc_hist {
            History::Anchors(set) => assert_eq!(set.len(), 3),
            _ => panic!("wrong history"),
        }
        match &ewcpp_hist {
            History::Anchors(set) => {
                assert_eq!(set.len(), 1);
                assert_eq!(set.anchors()[0].fisher.kind, FisherKind::MovingAverage);
            }
            _ => panic!("wrong history"),
        }
        match &exhaustive_hist {
            History::Accumulated(acc) => assert_eq!(acc.total_samples(), 24),
            _ => panic!("wrong history"),
        }
    }

    #[test]
    fn gamma_one_moving_average_equals_latest_per_episode_fisher() {
        let reg = RegConfig::new(5.0, 1.0).unwrap();
        let w = toy_weights(60);
        let mut ewc_hist = initial_history(Strategy::Ewc);
        let mut ewcpp_hist = initial_history(Strategy::EwcPlusPlus);
        for k in 0..3 {
            let ep = toy_episode(k, 8, 61);
            end_of_episode(Strategy::Ewc, &w, &ep, &mut ewc_hist, &reg).unwrap();
            end_of_episode(Strategy::EwcPlusPlus, &w, &ep, &mut ewcpp_hist, &reg).unwrap();
        }
        let probe = toy_weights(62);
        let latest_only = {
            let History::Anchors(set) = &ewc_hist else {
                panic!()
            };
            let mut latest = AnchorSet::new();
            latest.push(set.anchors().last().unwrap().clone());
            ewc_penalty(&probe, &latest, reg.lambda).unwrap().0
        };
        let ewcpp = {
            let History::Anchors(set) = &ewcpp_hist else {
                panic!()
            };
            ewc_penalty(&probe, set, reg.lambda).unwrap().0
        };
        let rel = (latest_only - ewcpp).abs() / latest_only.abs().max(1e-300);
        assert!(rel <= 1e-12, "penalties differ: {latest_only} vs {ewcpp}");
    }

    #[test]
    fn effective_size_grows_only_for_exhaustive() {
        let e0 = toy_episode(0, 10, 70);
        let e1 = toy_episode(1, 10, 70);
        let mut acc_hist = initial_history(Strategy::Exhaustive);
        let reg = RegConfig::new(1.0, 0.5).unwrap();
        let w = toy_weights(71);
        assert_eq!(
            effective_training_size(Strategy::Exhaustive, &e0, &acc_hist),
            10
        );
        end_of_episode(Strategy::Exhaustive, &w, &e0, &mut acc_hist, &reg).unwrap();
        assert_eq!(
            effective_training_size(Strategy::Exhaustive, &e1, &acc_hist),
            20
        );
        assert_eq!(
            effective_training_size(Strategy::EwcPlusPlus, &e1, &initial_history(Strategy::EwcPlusPlus)),
            10
        );
    }
}
