//! A tour of the two-domain synthetic classification task.
//!
//! Run with: cargo run --example synthetic_data

use frugalfed::data::{generate_synthetic, stratified_split, Domain, LabelRule, SyntheticTaskSpec};

fn main() {
    let spec = SyntheticTaskSpec {
        samples_per_domain: 200,
        feature_dim: 4,
        domain_separation: 1.0,
        label_rule: LabelRule::Aligned,
        noise_sigma: 0.25,
        seed: 7,
    };
    let data = generate_synthetic(&spec).unwrap();

    println!("{} rows, {} features", data.len(), data.feature_dim());
    println!("labels [neg, pos]: {:?}", data.label_counts());
    println!("domains [A, B]:    {:?}", data.domain_counts());

    // Feature 0 carries the signal: its sign decides the label (before noise).
    let mut sign_agrees = 0usize;
    for i in 0..data.len() {
        let predicted = u8::from(data.features()[[i, 0]] > 0.0);
        if predicted == data.labels()[i] {
            sign_agrees += 1;
        }
    }
    println!(
        "sign(feature 0) predicts the label on {:.1}% of rows (noise explains the rest)",
        100.0 * sign_agrees as f64 / data.len() as f64
    );

    // Feature 1 separates the domains when domain_separation > 0.
    let mean_f1 = |domain: Domain| {
        let idx = data.domain_indices(domain);
        idx.iter().map(|&i| data.features()[[i, 1]]).sum::<f64>() / idx.len() as f64
    };
    println!(
        "mean feature 1: domain A {:+.3}, domain B {:+.3}",
        mean_f1(Domain::A),
        mean_f1(Domain::B)
    );

    // The inverted-head variant keeps the features and flips domain B labels:
    // the raw material for personalization experiments.
    let inverted = generate_synthetic(&SyntheticTaskSpec {
        label_rule: LabelRule::InvertedHead,
        ..spec
    })
    .unwrap();
    let flipped = (0..data.len())
        .filter(|&i| inverted.labels()[i] != data.labels()[i])
        .count();
    println!(
        "inverted-head flips {flipped} labels, all in domain B ({} rows there)",
        data.domain_counts()[1]
    );

    // Label-stratified split: both sides keep the class balance.
    let (train, val) = stratified_split(&data, 0.8, 99).unwrap();
    println!(
        "80/20 split -> train {:?} / val {:?}",
        train.label_counts(),
        val.label_counts()
    );
}
