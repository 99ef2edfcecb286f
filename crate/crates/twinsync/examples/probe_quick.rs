// Scratch probe: single-strategy, few-episode run for fast calibration.
use twinsync::harness::{self, DatasetSource, ExperimentConfig};
use twinsync::strategies::Strategy;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let episodes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let strategy = match args.get(4).map(String::as_str) {
        Some("exhaustive") => Strategy::Exhaustive,
        Some("ewc") => Strategy::Ewc,
        Some("ewcpp") => Strategy::EwcPlusPlus,
        _ => Strategy::SingleTask,
    };
    let hidden: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(100);
    let lambda: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let mut cfg = ExperimentConfig::desk(seed);
    cfg.strategies = vec![strategy];
    cfg.episodes = episodes;
    cfg.nn.learning_rate = lr;
    cfg.nn.layer_sizes = vec![64, hidden, hidden, 10];
    cfg.reg.lambda = lambda;
    cfg.iterations = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(100);
    cfg.eval_every = cfg.iterations / 10;
    let classes: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(10);
    let dim: usize = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(64);
    cfg.reg.gamma = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    cfg.nn.layer_sizes = vec![dim, hidden, hidden, classes];
    cfg.dataset = DatasetSource::Synthetic {
        dim,
        classes,
        train_count: 8000,
        test_count: 2000,
    };

    let started = std::time::Instant::now();
    match harness::run_experiment(&cfg) {
        Ok(record) => {
            let s = &record.strategies[0];
            println!(
                "{} lr={lr} K={episodes} seed={seed} hidden={hidden} lambda={lambda} combined={:.3} ({:.1}s)",
                s.strategy.name(),
                s.final_combined_accuracy,
                started.elapsed().as_secs_f64()
            );
            for ep in &s.episodes {
                let losses: Vec<f64> = ep
                    .points
                    .iter()
                    .step_by(25)
                    .map(|p| (p.total_loss * 1000.0).round() / 1000.0)
                    .collect();
                let own: Vec<f64> = ep
                    .evals
                    .iter()
                    .map(|e| (e.split_accuracies[ep.episode] * 100.0).round() / 100.0)
                    .collect();
                let ep0: Vec<f64> = ep
                    .evals
                    .iter()
                    .map(|e| (e.split_accuracies[0] * 100.0).round() / 100.0)
                    .collect();
                println!(
                    "  ep{} loss(every25)={losses:?} own={own:?} ep0={ep0:?}",
                    ep.episode
                );
            }
        }
        Err(e) => println!("lr={lr} FAILED: {e}"),
    }
}
