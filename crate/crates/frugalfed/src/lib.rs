//! Deterministic simulator for frugal federated learning strategies.
//!
//! The crate trains small dense models over partitioned synthetic data under
//! four strategies — pooled (centralized) training, federated averaging of
//! full models, federated low-rank adapters over a frozen base, and
//! parameter-decoupled personalization — while a ledger accounts every joule,
//! gram of CO₂e, and byte the run would have cost. Everything derives from a
//! single seed: same config, same seed, byte-identical report.
//!
//! ```
//! use frugalfed::config::{ExperimentConfig, Strategy};
//! use frugalfed::fed::run_experiment;
//!
//! let mut cfg = ExperimentConfig::for_strategy(Strategy::FedavgFull);
//! cfg.rounds = 2;
//! cfg.client_count = 2;
//! cfg.task.samples_per_domain = 40;
//! cfg.task.feature_dim = 3;
//! cfg.model.hidden = vec![4];
//! cfg.model.head_boundary = 1;
//! let report = run_experiment(&cfg).unwrap();
//! assert_eq!(report.rounds_executed, 2);
//! ```

pub mod config;
pub mod data;
pub mod energy;
pub mod error;
pub mod fed;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod report;
pub mod rng;

pub use error::{Result, SimError};
