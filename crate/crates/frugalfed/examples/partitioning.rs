//! How client shards are carved out of a dataset, and how the Dirichlet
//! concentration parameter controls label skew.
//!
//! Run with: cargo run --example partitioning

use frugalfed::data::{generate_synthetic, LabelRule, SyntheticTaskSpec};
use frugalfed::partition::{
    dirichlet_label_skew, domain_dirichlet_partition, domain_partition, partition_stats,
    DirichletScope, PartitionPlan,
};

fn describe(name: &str, plan: &PartitionPlan) {
    let stats = partition_stats(plan);
    println!("\n{name}");
    println!("  client  rows  labels[0/1]  domains[A/B]  purity  entropy");
    for c in &stats.clients {
        println!(
            "  {:>6}  {:>4}  {:>5}/{:<5}  {:>6}/{:<5}  {:>6.2}  {:>7.3}",
            c.client_id,
            c.sample_count,
            c.label_counts[0],
            c.label_counts[1],
            c.domain_counts[0],
            c.domain_counts[1],
            c.domain_purity,
            c.label_entropy_bits,
        );
    }
    println!(
        "  sizes {}..{}, mean label distance from global {:.3}",
        stats.min_client_size, stats.max_client_size, stats.mean_label_emd
    );
}

fn main() {
    let data = generate_synthetic(&SyntheticTaskSpec {
        samples_per_domain: 300,
        feature_dim: 3,
        domain_separation: 1.0,
        label_rule: LabelRule::Aligned,
        noise_sigma: 0.25,
        seed: 11,
    })
    .unwrap();

    describe(
        "domain split (clients see one domain each)",
        &domain_partition(&data, 6).unwrap(),
    );
    describe(
        "dirichlet label skew, alpha = 0.3 (strong skew)",
        &dirichlet_label_skew(&data, 6, 0.3, 42).unwrap(),
    );
    describe(
        "dirichlet label skew, alpha = 100 (near uniform)",
        &dirichlet_label_skew(&data, 6, 100.0, 42).unwrap(),
    );
    describe(
        "domain split + dirichlet inside each domain",
        &domain_dirichlet_partition(&data, 6, 0.5, DirichletScope::WithinDomain, 42).unwrap(),
    );

    // Skew is monotone in alpha: smaller concentration, purer clients.
    println!("\nmean majority-label share by alpha (10 clients, 20 seeds):");
    for alpha in [0.05, 0.5, 5.0, 500.0] {
        let mut total = 0.0;
        for seed in 0..20 {
            let plan = dirichlet_label_skew(&data, 10, alpha, seed).unwrap();
            total += (0..10)
                .map(|c| {
                    let [n0, n1] = plan.label_histogram(c);
                    n0.max(n1) as f64 / (n0 + n1) as f64
                })
                .sum::<f64>()
                / 10.0;
        }
        println!("  alpha {alpha:>6}: {:.3}", total / 20.0);
    }

    // Plans serialize, so a partition can be pinned and audited.
    let plan = dirichlet_label_skew(&data, 4, 1.0, 7).unwrap();
    let json = plan.to_json();
    let restored = PartitionPlan::from_json(&json, &data).unwrap();
    assert_eq!(plan.client_sizes(), restored.client_sizes());
    println!("\nplans round-trip through JSON ({} bytes)", json.len());
}
