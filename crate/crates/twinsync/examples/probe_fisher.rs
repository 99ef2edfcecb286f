// Scratch probe: Fisher-diagonal magnitudes after fitting one episode.
use twinsync::episodes::{make_episode, make_synthetic};
use twinsync::nn::{self, LayerSpec, ModelWeights};
use twinsync::strategies::fisher_diagonal;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let classes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let dim: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);
    let iters: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(100);

    let pool = make_synthetic(11, classes, dim, 10_000).unwrap();
    let episode = make_episode(&pool, 0, 11, 2000).unwrap();
    let spec = LayerSpec::new(vec![dim, 100, 100, classes]).unwrap();
    let mut w = ModelWeights::init(spec, 7);
    let mut loss = f64::NAN;
    for _ in 0..iters {
        let (l, grad) = nn::loss_and_grad(&w, &episode.samples).unwrap();
        loss = l;
        w = nn::gd_step(&w, &grad, lr).unwrap();
    }
    let fisher = fisher_diagonal(&w, &episode).unwrap();
    let mut vals: Vec<f64> = fisher.values().to_vec();
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    let q = |p: f64| vals[((n as f64 - 1.0) * p) as usize];
    println!(
        "lr={lr} C={classes} dim={dim} iters={iters}: final loss {loss:.4}, fisher max {:.3e} p99.9 {:.3e} p99 {:.3e} p90 {:.3e} mean {:.3e}",
        vals[n - 1],
        q(0.999),
        q(0.99),
        q(0.90),
        vals.iter().sum::<f64>() / n as f64
    );
    println!(
        "  stability ceiling lambda < 2/(lr*Fmax) = {:.1}",
        2.0 / (lr * vals[n - 1])
    );
}
