//! All four strategies on one task, side by side: quality bought per joule,
//! gram, and byte.
//!
//! Run with: cargo run --example strategy_comparison

use frugalfed::config::{ExperimentConfig, Strategy};
use frugalfed::fed::run_experiment;
use frugalfed::report::compare;

fn main() {
    let strategies = [
        Strategy::Centralized,
        Strategy::FedavgFull,
        Strategy::FedavgLora,
        Strategy::PflDecoupled,
    ];

    let mut reports = Vec::new();
    for strategy in strategies {
        let mut cfg = ExperimentConfig::for_strategy(strategy);
        cfg.rounds = 10;
        cfg.client_count = 10;
        cfg.task.samples_per_domain = 400;
        cfg.optimizer.learning_rate = 0.15;
        cfg.optimizer.epochs = 2;
        cfg.energy.comm_j_per_byte = 1e-5;
        if strategy == Strategy::Centralized {
            // Domain partitioning is meaningless for pooled training.
            cfg.partition.mode = frugalfed::config::PartitionMode::Dirichlet;
        }
        let report = run_experiment(&cfg).unwrap();
        println!(
            "{:<14} ran {:>2} rounds{}",
            strategy.as_str(),
            report.rounds_executed,
            if report.stopped_early { " (stopped early)" } else { "" }
        );
        reports.push(report);
    }

    let table = compare(&reports, Strategy::PflDecoupled).unwrap();
    println!("\nnormalized against {}:\n", table.baseline);
    println!("{}", table.to_csv());

    for row in &table.rows {
        if row.strategy == table.baseline {
            continue;
        }
        println!(
            "{:<14} uses {:>7.3}x the energy and {:>7.3}x the upload bytes of the baseline",
            row.strategy,
            row.energy_ratio.unwrap_or(f64::NAN),
            row.payload_ratio.unwrap_or(f64::NAN),
        );
    }
}
