//! The energy and carbon ledger, from single conversions to a full run.
//!
//! Run with: cargo run --example energy_accounting

use frugalfed::config::{ExperimentConfig, Strategy};
use frugalfed::energy::{
    amortized_pretraining_share, comm_energy_wh, linear_extrapolate, operational_emissions,
    EnergyLedger, GridProfile, HardwareProfile, Phase,
};
use frugalfed::fed::run_experiment;

fn main() {
    // One conversion at a time. A 150 W device at full tilt for an hour:
    let grid = GridProfile::default(); // 42 gCO2e/kWh, PUE 1
    for wh in [570.0, 240.0, 200.0] {
        println!(
            "{wh:>5} Wh on a {} g/kWh grid -> {:.2} gCO2e",
            grid.carbon_intensity,
            operational_emissions(wh, grid.carbon_intensity, grid.pue).unwrap()
        );
    }
    println!(
        "114 Wh measured at 400 units of work -> {:.0} Wh extrapolated to 2000",
        linear_extrapolate(114.0, 400, 2000).unwrap()
    );
    println!(
        "moving 1 GB at 1e-5 J/byte costs {:.3} Wh",
        comm_energy_wh(1_000_000_000, 1e-5).unwrap()
    );
    println!(
        "a 5000 gCO2e pretraining bill amortized at 2% -> {:.0} g attributed",
        amortized_pretraining_share(5000.0, 0.02).unwrap()
    );

    // The same arithmetic, ledger-style: every event becomes a row.
    let hardware = HardwareProfile {
        embodied_gco2e: 12000.0, // manufacturing footprint, amortized per hour
        ..HardwareProfile::default()
    };
    let mut ledger = EnergyLedger::new(hardware, grid).unwrap();
    ledger
        .record_compute(Phase::Training, Some(1), "one hour of training", 3600.0)
        .unwrap();
    ledger
        .record_compute(Phase::Inference, Some(1), "ten minutes of eval", 600.0)
        .unwrap();
    ledger
        .record_comm(Some(1), "shipping updates", 50_000_000, 1e-5)
        .unwrap();
    ledger
        .record_emission(Phase::Pretraining, None, "upstream share", 100.0)
        .unwrap();
    let s = ledger.summarize();
    println!(
        "\nledger: {:.1} Wh total ({:.1} train / {:.1} eval / {:.2} comm)",
        s.total_wh, s.training_wh, s.inference_wh, s.communication_wh
    );
    println!(
        "operational {:.2} g + embodied {:.2} g = {:.2} gCO2e",
        s.operational_gco2e, s.embodied_gco2e, s.total_gco2e
    );
    println!(
        "pretraining share tracked separately, outside the total: {:.0} g",
        s.pretraining_gco2e
    );
    print!("\nCSV view:\n{}", ledger.to_csv());

    // And attached to a real run: the report carries the summary, the
    // federation keeps the full event log.
    let mut cfg = ExperimentConfig::for_strategy(Strategy::FedavgLora);
    cfg.rounds = 4;
    cfg.task.samples_per_domain = 150;
    cfg.energy.comm_j_per_byte = 1e-4;
    cfg.energy.pretraining_gco2e = 800.0;
    cfg.energy.pretraining_fraction = 0.05;
    cfg.energy.quantized_base_broadcast = true;
    let report = run_experiment(&cfg).unwrap();
    println!(
        "\n4-round adapter run: {:.4} Wh, {:.5} gCO2e operational, {} upload bytes,",
        report.energy.total_wh, report.energy.total_gco2e, report.payload.upload_bytes
    );
    println!(
        "frozen base shipped once at 4-bit precision: {} bytes; pretraining share {} g",
        report.payload.initial_broadcast_bytes, report.energy.pretraining_gco2e
    );
}
