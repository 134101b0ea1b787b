//! Low-rank adapters on a frozen base: what trains, what ships, what it costs.
//!
//! Run with: cargo run --example lora_adapters

use frugalfed::model::{
    forward, gradient, init_lora, merged_weight, sgd_step, Activation, ModelSpec, RoleLayout,
};
use frugalfed::rng::SeedTree;
use ndarray::Array2;

fn main() {
    let spec = ModelSpec::new(
        vec![6, 32, 16, 1],
        Activation::Tanh,
        2,
        vec!["dense1.weight".into()],
    )
    .unwrap();
    let tree = SeedTree::new(5);
    let base = spec
        .init_params(RoleLayout::Frozen, &mut tree.branch("init").rng())
        .unwrap();
    let mut adapters = init_lora(&spec, 8, 32.0, &mut tree.branch("init-lora").rng()).unwrap();

    let base_params = base.param_count();
    let adapter_params: usize = adapters.iter().map(|a| a.param_count()).sum();
    println!("base parameters:    {base_params}");
    println!(
        "adapter parameters: {adapter_params} ({:.1}% of the base)",
        100.0 * adapter_params as f64 / base_params as f64
    );

    // Factor B starts at zero, so a fresh adapter is invisible: the merged
    // weight equals the frozen one bit for bit.
    let w = base.layer("dense1.weight").unwrap().values.as_matrix().unwrap();
    let merged = merged_weight(&base, &adapters, "dense1.weight").unwrap();
    assert_eq!(w, &merged);
    println!("fresh adapter leaves the merged weight untouched (B = 0)");

    // A few steps on random data move only the factors.
    let x = Array2::from_shape_fn((32, 6), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.5 - 1.0);
    let y: Vec<u8> = (0..32).map(|i| (i % 2) as u8).collect();
    let before = forward(&spec, &base, &adapters, &x).unwrap();
    for _ in 0..25 {
        let (_, g) = gradient(&spec, &base, &adapters, &x, &y).unwrap();
        let mut frozen = base.clone();
        sgd_step(&mut frozen, &mut adapters, &g, 0.05).unwrap();
        assert!(frozen.bitwise_eq(&base), "base never moves");
    }
    let after = forward(&spec, &base, &adapters, &x).unwrap();
    let moved = before
        .iter()
        .zip(after.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("25 steps later the output moved by up to {moved:.3}, base still frozen");

    let delta = adapters[0].delta();
    let delta_norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!(
        "learned update (alpha/r)·B·A for dense1.weight: {}x{}, Frobenius norm {:.4}",
        delta.nrows(),
        delta.ncols(),
        delta_norm
    );

    // What actually crosses the network per participating client, per round.
    println!(
        "upload per client per round: {} bytes vs {} for the full model",
        4 * adapter_params,
        4 * base_params
    );
}
