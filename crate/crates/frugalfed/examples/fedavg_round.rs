//! Anatomy of federated averaging rounds: sampling, payloads, aggregation,
//! and the pooled validation curve.
//!
//! Run with: cargo run --example fedavg_round

use frugalfed::config::{ExperimentConfig, Strategy};
use frugalfed::fed::Federation;

fn main() {
    let mut cfg = ExperimentConfig::for_strategy(Strategy::FedavgFull);
    cfg.rounds = 8;
    cfg.client_count = 10;
    cfg.client_fraction = 0.3; // 3 of 10 clients per round
    cfg.task.samples_per_domain = 400;
    cfg.optimizer.learning_rate = 0.2;
    cfg.optimizer.epochs = 2;
    let cfg = cfg.resolved(None).unwrap();

    let mut fed = Federation::new(&cfg).unwrap();
    println!(
        "10 clients, 3 sampled per round, {} parameters per payload\n",
        fed.server().params.param_count()
    );
    println!("round  selected   up+down KB   train loss   val acc   val F1");
    while !fed.finished() {
        let r = fed.run_round().unwrap();
        let kb: u64 = r
            .download_bytes
            .iter()
            .chain(&r.upload_bytes)
            .map(|t| t.bytes)
            .sum::<u64>()
            / 1000;
        println!(
            "{:>5}  {:<9}  {:>9}    {:>8.4}    {:>6.3}   {:>6.3}",
            r.round,
            format!("{:?}", r.selected),
            kb,
            r.mean_train_loss,
            r.val.accuracy,
            r.val.f1,
        );
    }

    let (pooled, per_client) = fed.evaluate_clients().unwrap();
    println!("\nfinal pooled accuracy {:.3} over {} rows", pooled.accuracy, pooled.sample_count);
    let spread = per_client
        .iter()
        .map(|m| m.accuracy)
        .fold((1.0f64, 0.0f64), |(lo, hi), a| (lo.min(a), hi.max(a)));
    println!("per-client accuracy ranges {:.3}..{:.3}", spread.0, spread.1);
}
