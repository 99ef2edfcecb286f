// Scratch probe for desk-preset calibration; prints per-strategy metrics.
use twinsync::harness::{self, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lambda: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(75_000.0);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let gamma: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.5);

    let mut cfg = ExperimentConfig::desk(seed);
    cfg.reg.lambda = lambda;
    cfg.reg.gamma = gamma;
    cfg.nn.learning_rate = lr;

    let started = std::time::Instant::now();
    match harness::run_experiment(&cfg) {
        Ok(record) => {
            println!(
                "lambda={lambda} lr={lr} gamma={gamma} seed={seed}  ({:.1}s)",
                started.elapsed().as_secs_f64()
            );
            for s in &record.strategies {
                let last_row = s.retention_matrix.last().unwrap();
                let ep0_final = s.episodes[0].evals.last().unwrap().split_accuracies[0];
                println!(
                    "  {:<14} combined={:.3} retention_ep0={:.3} (initial {:.3}) losses={:?}",
                    s.strategy.name(),
                    s.final_combined_accuracy,
                    last_row[0],
                    ep0_final,
                    s.episodes
                        .iter()
                        .map(|e| (e.points.last().unwrap().total_loss * 1000.0).round() / 1000.0)
                        .collect::<Vec<_>>()
                );
            }
        }
        Err(e) => println!("lambda={lambda} lr={lr} seed={seed} FAILED: {e}"),
    }
}
