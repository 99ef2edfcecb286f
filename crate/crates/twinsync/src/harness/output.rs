//! Run artifacts: the per-iteration CSV, the JSON summary, and the four
//! figure data files.
//!
//! Emission is deterministic — identical config and seed produce
//! byte-identical files — and atomic: content goes to a temp file in the
//! target directory first, then is renamed into place, so an interrupted
//! run never leaves a truncated artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::strategies::HistorySummary;
use crate::sync::SelectionMode;

use super::{AlphaRow, EpisodeRecord, ExperimentConfig, RunMode, RunRecord};

/// Stable run identifier derived from the configuration alone.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Writes `content` to `path` via a sibling temp file plus rename.
pub fn atomic_write(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(io_err)?;
    std::io::Write::write_all(&mut tmp, content).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn eval_lookup(ep: &EpisodeRecord) -> BTreeMap<usize, (f64, f64)> {
    ep.evals
        .iter()
        .map(|e| (e.iteration, (e.combined_accuracy, e.split_accuracies[0])))
        .collect()
}

/// The main per-iteration table: one row per (strategy, episode, iteration).
/// `test_acc` and `retention_acc_ep0` are filled at evaluation points and
/// empty elsewhere.
pub fn render_run_csv(record: &RunRecord) -> String {
    let mut out = String::from(
        "run_id,strategy,episode,iteration,train_loss,data_loss,penalty_loss,test_acc,retention_acc_ep0,delta_t_s,objective\n",
    );
    for strat in &record.strategies {
        for ep in &strat.episodes {
            let evals = eval_lookup(ep);
            for p in &ep.points {
                let (acc, ret) = match evals.get(&p.iteration) {
                    Some(&(a, r)) => (Some(a), Some(r)),
                    None => (None, None),
                };
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    record.run_id,
                    strat.strategy,
                    ep.episode,
                    p.iteration,
                    p.total_loss,
                    p.data_loss,
                    p.penalty_loss,
                    fmt_opt(acc),
                    fmt_opt(ret),
                    p.desync_seconds,
                    p.objective
                )
                .expect("string write");
            }
        }
    }
    out
}

pub fn write_run_csv(record: &RunRecord, path: &Path) -> Result<()> {
    atomic_write(path, render_run_csv(record).as_bytes())
}

#[derive(Serialize)]
struct Summary<'a> {
    run_id: &'a str,
    provenance: Provenance<'a>,
    config: &'a ExperimentConfig,
    strategies: Vec<StrategySummary<'a>>,
}

#[derive(Serialize)]
struct Provenance<'a> {
    seed: u64,
    preset: Option<&'a str>,
    mode: RunMode,
    selection: SelectionMode,
}

#[derive(Serialize)]
struct StrategySummary<'a> {
    strategy: &'a str,
    final_combined_accuracy: f64,
    cumulative_desync_seconds: f64,
    episodes: Vec<EpisodeSummary>,
    retention_matrix: &'a [Vec<f64>],
    history: &'a HistorySummary,
}

#[derive(Serialize)]
struct EpisodeSummary {
    episode: usize,
    chosen_iterations: usize,
    desync_seconds: f64,
    objective: f64,
    final_total_loss: f64,
    final_data_loss: f64,
    final_penalty_loss: f64,
}

pub fn render_summary_json(record: &RunRecord) -> String {
    let summary = Summary {
        run_id: &record.run_id,
        provenance: Provenance {
            seed: record.config.seed,
            preset: record.config.preset.as_deref(),
            mode: record.config.mode,
            selection: match record.config.mode {
                RunMode::Fixed => SelectionMode::FixedFinal,
                RunMode::Optimized => SelectionMode::Optimize,
            },
        },
        config: &record.config,
        strategies: record
            .strategies
            .iter()
            .map(|s| StrategySummary {
                strategy: s.strategy.name(),
                final_combined_accuracy: s.final_combined_accuracy,
                cumulative_desync_seconds: s.cumulative_desync_seconds,
                episodes: s
                    .episodes
                    .iter()
                    .map(|ep| {
                        let chosen = &ep.points[ep.chosen_iterations];
                        EpisodeSummary {
                            episode: ep.episode,
                            chosen_iterations: ep.chosen_iterations,
                            desync_seconds: ep.desync_seconds,
                            objective: ep.objective,
                            final_total_loss: chosen.total_loss,
                            final_data_loss: chosen.data_loss,
                            final_penalty_loss: chosen.penalty_loss,
                        }
                    })
                    .collect(),
                retention_matrix: &s.retention_matrix,
                history: &s.history,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    json
}

pub fn write_summary_json(record: &RunRecord, path: &Path) -> Result<()> {
    atomic_write(path, render_summary_json(record).as_bytes())
}

/// Accuracy over training iterations, combined test set (figure 2a data).
pub fn render_fig2a(record: &RunRecord) -> String {
    let mut out = String::from("strategy,episode,iteration,global_iteration,test_acc\n");
    let n_per_episode = record.config.iterations;
    for strat in &record.strategies {
        for ep in &strat.episodes {
            for eval in &ep.evals {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    strat.strategy,
                    ep.episode,
                    eval.iteration,
                    ep.episode * n_per_episode + eval.iteration,
                    eval.combined_accuracy
                )
                .expect("string write");
            }
        }
    }
    out
}

/// Per-episode de-synchronization time (figure 2b data).
pub fn render_fig2b(record: &RunRecord) -> String {
    let mut out = String::from("strategy,episode,delta_t_s\n");
    for strat in &record.strategies {
        for ep in &strat.episodes {
            writeln!(out, "{},{},{}", strat.strategy, ep.episode, ep.desync_seconds)
                .expect("string write");
        }
    }
    out
}

/// First-episode retention over training iterations (figure 3 data).
pub fn render_fig3(record: &RunRecord) -> String {
    let mut out = String::from("strategy,episode,iteration,global_iteration,retention_acc_ep0\n");
    let n_per_episode = record.config.iterations;
    for strat in &record.strategies {
        for ep in &strat.episodes {
            for eval in &ep.evals {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    strat.strategy,
                    ep.episode,
                    eval.iteration,
                    ep.episode * n_per_episode + eval.iteration,
                    eval.split_accuracies[0]
                )
                .expect("string write");
            }
        }
    }
    out
}

/// Loss/ΔT tradeoff during a single episode (figure 4 data). Each α block
/// lists the full trajectory; `chosen` marks the selected iteration.
pub fn render_fig4(rows: &[AlphaRow]) -> String {
    let mut out = String::from("alpha,iteration,train_loss,delta_t_s,objective,chosen\n");
    for row in rows {
        for p in &row.points {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.alpha,
                p.iteration,
                p.total_loss,
                p.desync_seconds,
                p.objective,
                u8::from(p.iteration == row.chosen_iterations)
            )
            .expect("string write");
        }
    }
    out
}

/// Writes fig2a/fig2b/fig3 from the run record plus fig4 from the first
/// strategy's first episode (trajectories are strategy-independent there).
pub fn write_figure_files(record: &RunRecord, out_dir: &Path) -> Result<()> {
    atomic_write(&out_dir.join("fig2a_accuracy.csv"), render_fig2a(record).as_bytes())?;
    atomic_write(&out_dir.join("fig2b_desync.csv"), render_fig2b(record).as_bytes())?;
    atomic_write(&out_dir.join("fig3_retention.csv"), render_fig3(record).as_bytes())?;
    let first = &record.strategies[0];
    let ep0 = &first.episodes[0];
    let fig4 = vec![AlphaRow {
        alpha: record.config.objective.alpha,
        chosen_iterations: ep0.chosen_iterations,
        loss: ep0.points[ep0.chosen_iterations].total_loss,
        desync_seconds: ep0.desync_seconds,
        objective: ep0.objective,
        points: ep0.points.clone(),
    }];
    atomic_write(&out_dir.join("fig4_tradeoff.csv"), render_fig4(&fig4).as_bytes())
}

/// Writes an α sweep as the figure-4 tradeoff file.
pub fn write_alpha_sweep(rows: &[AlphaRow], out_dir: &Path) -> Result<()> {
    atomic_write(&out_dir.join("fig4_tradeoff.csv"), render_fig4(rows).as_bytes())
}

/// Writes everything `run` emits: run.csv and summary.json.
pub fn write_outputs(record: &RunRecord, out_dir: &Path) -> Result<()> {
    write_run_csv(record, &out_dir.join("run.csv"))?;
    write_summary_json(record, &out_dir.join("summary.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tests::mini_config;
    use crate::harness::run_experiment;

    #[test]
    fn run_id_depends_on_config() {
        let a = run_id(&mini_config(1));
        let b = run_id(&mini_config(1));
        let c = run_id(&mini_config(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn atomic_write_creates_parent_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out/file.csv");
        atomic_write(&path, b"hello").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"hello");
    }

    #[test]
    fn csv_has_expected_header_and_rows() {
        let cfg = mini_config(3);
        let record = run_experiment(&cfg).unwrap();
        let csv = render_run_csv(&record);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "run_id,strategy,episode,iteration,train_loss,data_loss,penalty_loss,test_acc,retention_acc_ep0,delta_t_s,objective"
        );
        // 4 strategies × 3 episodes × 21 iteration rows
        assert_eq!(csv.lines().count(), 1 + 4 * 3 * 21);
        // eval columns populated on cadence rows
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert!(!row[7].is_empty());
        let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
        assert!(row[7].is_empty());
    }

    #[test]
    fn summary_json_echoes_config() {
        let cfg = mini_config(4);
        let record = run_experiment(&cfg).unwrap();
        let json = render_summary_json(&record);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["run_id"], record.run_id.as_str());
        assert_eq!(value["config"]["episodes"], 3);
        assert_eq!(value["provenance"]["preset"], "mini");
        let echoed: ExperimentConfig =
            serde_json::from_value(value["config"].clone()).unwrap();
        assert_eq!(echoed.to_json_pretty(), cfg.to_json_pretty());
    }

    #[test]
    fn emission_is_byte_deterministic() {
        let cfg = mini_config(5);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(render_run_csv(&a), render_run_csv(&b));
        assert_eq!(render_summary_json(&a), render_summary_json(&b));
        assert_eq!(render_fig2a(&a), render_fig2a(&b));
    }
}
