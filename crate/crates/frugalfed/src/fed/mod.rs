//! Federated protocol: payloads, client/server state, round records, client
//! sampling, aggregation, and the round loop.

mod aggregate;
mod run;

pub use aggregate::{
    adapter_average_gap, aggregate_adapters, aggregate_decoupled, fedavg_aggregate, sample_clients,
};
pub use run::{CentralizedTrainer, Federation, run_experiment};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::metrics::MetricReport;
use crate::model::{LoraAdapter, ParameterSet, Role};

/// Bytes used to ship one parameter in round payloads (f32 wire format).
pub const BYTES_PER_PARAM: u64 = 4;

/// What the server and clients exchange each round.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationRule {
    /// Every model parameter is trained and averaged.
    FedavgFull,
    /// Only adapter factors move; the base stays frozen everywhere.
    FedavgAdapters,
    /// Only shared-role layers move; personal layers never leave the client.
    Decoupled,
}

/// A parameter payload in flight between server and client.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Full(ParameterSet),
    Adapters(Vec<LoraAdapter>),
    Shared(ParameterSet),
}

impl Payload {
    pub fn param_count(&self) -> usize {
        match self {
            Payload::Full(p) | Payload::Shared(p) => p.param_count(),
            Payload::Adapters(a) => a.iter().map(|x| x.param_count()).sum(),
        }
    }

    /// Wire size at [`BYTES_PER_PARAM`].
    pub fn byte_size(&self) -> u64 {
        self.param_count() as u64 * BYTES_PER_PARAM
    }

    /// Shape manifest of this payload (one entry per tensor).
    pub fn entries(&self) -> Vec<PayloadEntry> {
        match self {
            Payload::Full(p) | Payload::Shared(p) => p
                .layers()
                .iter()
                .map(|l| PayloadEntry {
                    name: l.name.clone(),
                    role: l.role,
                    params: l.values.len(),
                })
                .collect(),
            Payload::Adapters(adapters) => adapters
                .iter()
                .flat_map(|a| {
                    [
                        PayloadEntry {
                            name: format!("{}.lora_a", a.target_layer),
                            role: Role::Adapter,
                            params: a.a.len(),
                        },
                        PayloadEntry {
                            name: format!("{}.lora_b", a.target_layer),
                            role: Role::Adapter,
                            params: a.b.len(),
                        },
                    ]
                })
                .collect(),
        }
    }

    /// Error if the payload contains anything a server must never hold.
    pub fn check_server_safe(&self) -> Result<()> {
        if let Payload::Full(p) | Payload::Shared(p) = self {
            for layer in p.layers() {
                if layer.role == Role::Personal {
                    return Err(SimError::protocol(format!(
                        "personal layer `{}` in a server-bound payload",
                        layer.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One tensor's name, role, and scalar count inside a payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub name: String,
    pub role: Role,
    pub params: usize,
}

/// Bytes moved for one client in one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientTransfer {
    pub client: usize,
    pub bytes: u64,
}

/// Everything recorded about one federated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub selected: Vec<usize>,
    pub download_bytes: Vec<ClientTransfer>,
    pub upload_bytes: Vec<ClientTransfer>,
    /// Shape manifest of the per-client payload this round.
    pub payload: Vec<PayloadEntry>,
    /// Sample-weighted mean local training loss over selected clients.
    pub mean_train_loss: f64,
    /// Pooled validation metrics after the server update.
    pub val: MetricReport,
    /// ‖weighted mean of adapter products − product of averaged factors‖_F;
    /// only meaningful when adapters are aggregated.
    pub adapter_average_gap: Option<f64>,
    /// Simulated wall time: slowest client's training plus evaluation.
    pub duration_s: f64,
    /// Energy accounted to this round across all ledger records.
    pub energy_wh: f64,
    /// Indices into the run's energy ledger.
    pub energy_records: Vec<usize>,
}

/// Server-side view of the federation.
#[derive(Debug, Clone)]
pub struct ServerState {
    /// Globally aggregated parameters (shared subset under decoupling).
    pub params: ParameterSet,
    /// Globally aggregated adapters, when the strategy uses them.
    pub adapters: Option<Vec<LoraAdapter>>,
    /// Frozen base distributed once; never updated.
    pub frozen_base: Option<ParameterSet>,
    /// Rounds completed.
    pub round: usize,
    pub stopper: EarlyStopper,
}

/// One client's local state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub train: Dataset,
    pub val: Dataset,
    /// Row indices of the shards inside the experiment's train/val datasets.
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    /// Personal-role layers (decoupling); never serialized into payloads.
    pub personal: Option<ParameterSet>,
    /// Most recent shared/full parameters this client holds.
    pub last_shared: Option<ParameterSet>,
    /// Most recent adapters this client holds.
    pub adapters: Option<Vec<LoraAdapter>>,
}

impl ClientState {
    pub fn sample_count(&self) -> usize {
        self.train.len()
    }
}

/// Patience-based early stopping on a score where higher is better.
///
/// A round counts as an improvement only if its score strictly exceeds the
/// best seen so far. After `patience` consecutive non-improving rounds,
/// [`EarlyStopper::should_stop`] turns true.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<f64>,
    rounds_since_improvement: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(SimError::usage("patience must be at least 1"));
        }
        Ok(EarlyStopper {
            patience,
            best: None,
            rounds_since_improvement: 0,
        })
    }

    /// Record a round's score; returns `true` if it improved on the best.
    pub fn observe(&mut self, score: f64) -> bool {
        match self.best {
            Some(best) if score <= best => {
                self.rounds_since_improvement += 1;
                false
            }
            _ => {
                self.best = Some(score);
                self.rounds_since_improvement = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.rounds_since_improvement >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn rounds_since_improvement(&self) -> usize {
        self.rounds_since_improvement
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, ModelSpec, RoleLayout};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stopper_halts_after_patience_flat_rounds() {
        let mut stopper = EarlyStopper::new(5).unwrap();
        let schedule = [0.5, 0.6, 0.6, 0.55, 0.6, 0.58, 0.6];
        let mut stopped_after = None;
        for (i, &f1) in schedule.iter().enumerate() {
            stopper.observe(f1);
            if stopper.should_stop() {
                stopped_after = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_after, Some(7));
        assert_eq!(stopper.best(), Some(0.6));
    }

    #[test]
    fn strict_improvement_resets_the_counter() {
        let mut stopper = EarlyStopper::new(2).unwrap();
        assert!(stopper.observe(0.3));
        assert!(!stopper.observe(0.3)); // ties don't count
        assert!(stopper.observe(0.4));
        assert_eq!(stopper.rounds_since_improvement(), 0);
        assert!(!stopper.observe(0.1));
        assert!(!stopper.observe(0.2));
        assert!(stopper.should_stop());
        assert!(EarlyStopper::new(0).is_err());
    }

    #[test]
    fn payload_sizes_and_safety() {
        let spec = ModelSpec::new(vec![4, 8, 1], Activation::Tanh, 1, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = spec.init_params(RoleLayout::Decoupled, &mut rng).unwrap();

        let full = Payload::Full(params.clone());
        assert_eq!(full.param_count(), 4 * 8 + 8 + 8 + 1);
        assert_eq!(full.byte_size(), 49 * 4);
        assert!(full.check_server_safe().is_err()); // personal head inside

        let shared = Payload::Shared(params.subset(&[Role::Shared]));
        assert_eq!(shared.param_count(), 40);
        shared.check_server_safe().unwrap();
        assert_eq!(shared.entries().len(), 2);
    }

    #[test]
    fn adapter_payload_entries_cover_both_factors() {
        let spec = ModelSpec::new(
            vec![4, 8, 1],
            Activation::Tanh,
            1,
            vec!["dense0.weight".into()],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let adapters = crate::model::init_lora(&spec, 2, 4.0, &mut rng).unwrap();
        let payload = Payload::Adapters(adapters);
        // 2*(4+8) = 24 scalars
        assert_eq!(payload.param_count(), 24);
        let entries = payload.entries();
        assert_eq!(entries.len(), 2);
        assert!(entries.iter().all(|e| e.role == Role::Adapter));
        payload.check_server_safe().unwrap();
    }
}
