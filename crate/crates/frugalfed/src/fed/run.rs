//! Executing experiments: local training, the federated round loop, and the
//! centralized reference strategy.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, OptimizerSettings, PartitionMode, Strategy};
use crate::data::{generate_synthetic, stratified_split, Dataset};
use crate::energy::{CostModel, EnergyLedger, Phase};
use crate::error::{Result, SimError};
use crate::fed::{
    adapter_average_gap, aggregate_adapters, aggregate_decoupled, fedavg_aggregate,
    sample_clients, ClientState, ClientTransfer, EarlyStopper, Payload, RoundRecord, ServerState,
};
use crate::metrics::{report_from_scores, MetricReport};
use crate::model::{
    forward, gradient, init_lora, sgd_step, LoraAdapter, ModelSpec, ParameterSet, Role, RoleLayout,
};
use crate::partition::{
    dirichlet_label_skew, domain_dirichlet_partition, domain_partition, PartitionPlan,
};
use crate::report::{ClientMetrics, ExperimentReport, FinalMetrics, PayloadTotals};
use crate::rng::SeedTree;

/// Result of one client's local pass.
#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub upload: Payload,
    pub sample_count: usize,
    pub mean_loss: f64,
}

/// Epoch/mini-batch SGD over one dataset. `batch_size == 0` (or at least the
/// row count) means full-batch; otherwise each epoch shuffles row order with
/// `rng` and steps per chunk. Returns the sample-weighted mean training loss.
pub(crate) fn train_epochs(
    spec: &ModelSpec,
    params: &mut ParameterSet,
    adapters: &mut Vec<LoraAdapter>,
    features: &Array2<f64>,
    labels: &[u8],
    opt: &OptimizerSettings,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = features.nrows();
    if n == 0 {
        return Err(SimError::usage("cannot train on an empty shard"));
    }
    let full_batch = opt.batch_size == 0 || opt.batch_size >= n;
    let mut weighted_loss = 0.0;
    for _ in 0..opt.epochs {
        if full_batch {
            let (loss, grads) = gradient(spec, params, adapters, features, labels)?;
            sgd_step(params, adapters, &grads, opt.learning_rate)?;
            weighted_loss += loss * n as f64;
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            for chunk in order.chunks(opt.batch_size) {
                let batch_x = features.select(Axis(0), chunk);
                let batch_y: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
                let (loss, grads) = gradient(spec, params, adapters, &batch_x, &batch_y)?;
                sgd_step(params, adapters, &grads, opt.learning_rate)?;
                weighted_loss += loss * chunk.len() as f64;
            }
        }
    }
    Ok(weighted_loss / (opt.epochs * n) as f64)
}

/// Train one client on the payload it received and produce its upload.
///
/// * `Full` payloads train every layer and upload the whole model.
/// * `Shared` payloads are joined with the client's personal layers; only the
///   shared subset is uploaded, personal layers stay local.
/// * `Adapters` train on top of `frozen_base`, which is required and never
///   modified.
pub fn local_train(
    spec: &ModelSpec,
    client: &mut ClientState,
    payload: &Payload,
    frozen_base: Option<&ParameterSet>,
    opt: &OptimizerSettings,
    rng: &mut ChaCha8Rng,
) -> Result<LocalOutcome> {
    let features = client.train.features().clone();
    let labels = client.train.labels().to_vec();
    let sample_count = client.train.len();

    let (upload, mean_loss) = match payload {
        Payload::Full(incoming) => {
            let mut working = incoming.clone();
            let mut no_adapters = Vec::new();
            let loss = train_epochs(spec, &mut working, &mut no_adapters, &features, &labels, opt, rng)?;
            client.last_shared = Some(working.clone());
            (Payload::Full(working), loss)
        }
        Payload::Shared(incoming) => {
            let personal = client.personal.as_ref().ok_or_else(|| {
                SimError::usage(format!(
                    "client {} holds no personal layers for a shared payload",
                    client.client_id
                ))
            })?;
            let mut working = ParameterSet::union(incoming, personal)?;
            let mut no_adapters = Vec::new();
            let loss = train_epochs(spec, &mut working, &mut no_adapters, &features, &labels, opt, rng)?;
            client.personal = Some(working.subset(&[Role::Personal]));
            let trained_shared = working.subset(&[Role::Shared]);
            client.last_shared = Some(trained_shared.clone());
            (Payload::Shared(trained_shared), loss)
        }
        Payload::Adapters(incoming) => {
            let base = frozen_base.ok_or_else(|| {
                SimError::usage("adapter payload without a frozen base model")
            })?;
            let mut frozen = base.clone();
            let mut working = incoming.clone();
            let loss = train_epochs(spec, &mut frozen, &mut working, &features, &labels, opt, rng)?;
            if !frozen.bitwise_eq(base) {
                return Err(SimError::protocol(
                    "frozen base changed during adapter training",
                ));
            }
            client.adapters = Some(working.clone());
            (Payload::Adapters(working), loss)
        }
    };
    Ok(LocalOutcome {
        upload,
        sample_count,
        mean_loss,
    })
}

fn build_plan(config: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<PartitionPlan> {
    match config.partition.mode {
        PartitionMode::Domain => domain_partition(data, config.client_count),
        PartitionMode::Dirichlet => {
            dirichlet_label_skew(data, config.client_count, config.partition.alpha, seed)
        }
        PartitionMode::Both => domain_dirichlet_partition(
            data,
            config.client_count,
            config.partition.alpha,
            config.partition.scope,
            seed,
        ),
    }
}

/// A federated run: server, clients, ledger, and the round loop.
pub struct Federation {
    spec: ModelSpec,
    strategy: Strategy,
    server: ServerState,
    clients: Vec<ClientState>,
    opt: OptimizerSettings,
    client_fraction: f64,
    refresh_unselected: bool,
    rounds_target: usize,
    tree: SeedTree,
    ledger: EnergyLedger,
    cost: CostModel,
    comm_j_per_byte: f64,
    /// Scalars swept per forward/backward pass (base + adapters), used by the
    /// duration model.
    total_model_params: usize,
    records: Vec<RoundRecord>,
    train: Dataset,
    val: Dataset,
    initial_broadcast_bytes: u64,
}

impl Federation {
    /// Build the full starting state for a federated strategy. The config
    /// must be resolved (see [`ExperimentConfig::resolved`]).
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        if config.strategy == Strategy::Centralized {
            return Err(SimError::usage(
                "centralized runs use CentralizedTrainer, not Federation",
            ));
        }
        let spec = config.model_spec()?;
        let data = generate_synthetic(&config.task_spec()?)?;
        let tree = SeedTree::new(config.seed);
        let (train, val) =
            stratified_split(&data, config.task.train_fraction, tree.branch("split").state())?;
        let plan_train = build_plan(config, &train, tree.branch("partition-train").state())?;
        let plan_val = build_plan(config, &val, tree.branch("partition-val").state())?;

        let layout = match config.strategy {
            Strategy::FedavgFull => RoleLayout::AllShared,
            Strategy::FedavgLora => RoleLayout::Frozen,
            Strategy::PflDecoupled => RoleLayout::Decoupled,
            Strategy::Centralized => unreachable!(),
        };
        let init = spec.init_params(layout, &mut tree.branch("init").rng())?;
        let init_adapters = if config.strategy == Strategy::FedavgLora {
            Some(init_lora(
                &spec,
                config.lora.rank,
                config.lora.scaling,
                &mut tree.branch("init-lora").rng(),
            )?)
        } else {
            None
        };
        let adapter_params: usize = init_adapters
            .as_ref()
            .map(|a| a.iter().map(|x| x.param_count()).sum())
            .unwrap_or(0);
        let total_model_params = init.param_count() + adapter_params;

        let mut clients = Vec::with_capacity(config.client_count);
        for c in 0..config.client_count {
            let train_indices = plan_train.client_rows(c).to_vec();
            let val_indices = plan_val.client_rows(c).to_vec();
            clients.push(ClientState {
                client_id: c,
                train: train.subset(&train_indices)?,
                val: val.subset(&val_indices)?,
                train_indices,
                val_indices,
                personal: (config.strategy == Strategy::PflDecoupled)
                    .then(|| init.subset(&[Role::Personal])),
                last_shared: match config.strategy {
                    Strategy::FedavgFull => Some(init.clone()),
                    Strategy::PflDecoupled => Some(init.subset(&[Role::Shared])),
                    _ => None,
                },
                adapters: init_adapters.clone(),
            });
        }

        let server = ServerState {
            params: match config.strategy {
                Strategy::FedavgFull => init.clone(),
                Strategy::PflDecoupled => init.subset(&[Role::Shared]),
                _ => ParameterSet::default(),
            },
            adapters: init_adapters,
            frozen_base: (config.strategy == Strategy::FedavgLora).then(|| init.clone()),
            round: 0,
            stopper: EarlyStopper::new(config.patience)?,
        };

        let mut ledger = EnergyLedger::new(config.hardware.clone(), config.grid.clone())?;
        if config.energy.pretraining_gco2e > 0.0 && config.energy.pretraining_fraction > 0.0 {
            let share = crate::energy::amortized_pretraining_share(
                config.energy.pretraining_gco2e,
                config.energy.pretraining_fraction,
            )?;
            ledger.record_emission(Phase::Pretraining, None, "amortized pretraining share", share)?;
        }

        // A frozen base must reach every client once before training starts.
        let mut initial_broadcast_bytes = 0;
        if let Some(base) = &server.frozen_base {
            let per_client = if config.energy.quantized_base_broadcast {
                (base.param_count() as u64).div_ceil(2) // 4-bit: half a byte per parameter
            } else {
                base.param_count() as u64 * 4
            };
            initial_broadcast_bytes = per_client * config.client_count as u64;
            ledger.record_comm(
                None,
                format!("frozen base broadcast to {} clients", config.client_count),
                initial_broadcast_bytes,
                config.energy.comm_j_per_byte,
            )?;
        }

        Ok(Federation {
            spec,
            strategy: config.strategy,
            server,
            clients,
            opt: config.optimizer.clone(),
            client_fraction: config.client_fraction,
            refresh_unselected: config.refresh_unselected,
            rounds_target: config.rounds,
            tree,
            ledger,
            cost: CostModel {
                seconds_per_kparam_sample: config.energy.seconds_per_kparam_sample,
            },
            comm_j_per_byte: config.energy.comm_j_per_byte,
            total_model_params,
            records: Vec::new(),
            train,
            val,
            initial_broadcast_bytes,
        })
    }

    /// Payload the server would broadcast right now.
    pub fn server_payload(&self) -> Result<Payload> {
        match self.strategy {
            Strategy::FedavgFull => Ok(Payload::Full(self.server.params.clone())),
            Strategy::PflDecoupled => Ok(Payload::Shared(self.server.params.clone())),
            Strategy::FedavgLora => Ok(Payload::Adapters(
                self.server
                    .adapters
                    .clone()
                    .ok_or_else(|| SimError::usage("no adapters on the server"))?,
            )),
            Strategy::Centralized => unreachable!(),
        }
    }

    fn apply_payload_to_client(&mut self, client: usize, payload: &Payload) {
        match payload {
            Payload::Full(p) | Payload::Shared(p) => {
                self.clients[client].last_shared = Some(p.clone());
            }
            Payload::Adapters(a) => self.clients[client].adapters = Some(a.clone()),
        }
    }

    /// Execute one round: sample clients, broadcast, train locally, upload,
    /// aggregate, evaluate, account energy, and update the early stopper.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let round = self.server.round + 1;
        let ledger_start = self.ledger.len();
        let selected = sample_clients(
            self.clients.len(),
            self.client_fraction,
            &mut self.tree.branch("select").index(round as u64).rng(),
        )?;

        let payload = self.server_payload()?;
        payload.check_server_safe()?;
        let payload_entries = payload.entries();

        let mut download_bytes = Vec::new();
        let mut upload_bytes = Vec::new();
        let mut param_updates: Vec<(ParameterSet, usize)> = Vec::new();
        let mut adapter_updates: Vec<(Vec<LoraAdapter>, usize)> = Vec::new();
        let mut weighted_loss = 0.0;
        let mut total_samples = 0usize;
        let mut slowest_training_s: f64 = 0.0;

        for &c in &selected {
            let bytes = payload.byte_size();
            download_bytes.push(ClientTransfer { client: c, bytes });
            self.ledger.record_comm(
                Some(round),
                format!("round {round} download to client {c}"),
                bytes,
                self.comm_j_per_byte,
            )?;

            let mut rng = self
                .tree
                .branch("local-train")
                .index(round as u64)
                .index(c as u64)
                .rng();
            let frozen = self.server.frozen_base.clone();
            let outcome = local_train(
                &self.spec,
                &mut self.clients[c],
                &payload,
                frozen.as_ref(),
                &self.opt,
                &mut rng,
            )?;
            outcome.upload.check_server_safe()?;

            let duration = self.cost.duration_s(
                self.total_model_params,
                outcome.sample_count * self.opt.epochs,
            );
            slowest_training_s = slowest_training_s.max(duration);
            self.ledger.record_compute(
                Phase::Training,
                Some(round),
                format!("round {round} client {c} local training"),
                duration,
            )?;

            let up = outcome.upload.byte_size();
            upload_bytes.push(ClientTransfer {
                client: c,
                bytes: up,
            });
            self.ledger.record_comm(
                Some(round),
                format!("round {round} upload from client {c}"),
                up,
                self.comm_j_per_byte,
            )?;

            weighted_loss += outcome.mean_loss * outcome.sample_count as f64;
            total_samples += outcome.sample_count;
            match outcome.upload {
                Payload::Full(p) | Payload::Shared(p) => param_updates.push((p, outcome.sample_count)),
                Payload::Adapters(a) => adapter_updates.push((a, outcome.sample_count)),
            }
        }

        let mut adapter_gap = None;
        match self.strategy {
            Strategy::FedavgFull => {
                self.server.params = fedavg_aggregate(&param_updates)?;
            }
            Strategy::PflDecoupled => {
                self.server.params = aggregate_decoupled(&param_updates)?;
            }
            Strategy::FedavgLora => {
                let aggregated = aggregate_adapters(&adapter_updates)?;
                adapter_gap = Some(adapter_average_gap(&adapter_updates, &aggregated)?);
                self.server.adapters = Some(aggregated);
            }
            Strategy::Centralized => unreachable!(),
        }

        if self.refresh_unselected {
            let refresh = self.server_payload()?;
            for c in 0..self.clients.len() {
                if selected.contains(&c) {
                    continue;
                }
                self.apply_payload_to_client(c, &refresh);
                let bytes = refresh.byte_size();
                download_bytes.push(ClientTransfer { client: c, bytes });
                self.ledger.record_comm(
                    Some(round),
                    format!("round {round} refresh to client {c}"),
                    bytes,
                    self.comm_j_per_byte,
                )?;
            }
        }

        let (pooled, _per_client) = self.evaluate_clients()?;
        let eval_duration = self
            .cost
            .duration_s(self.total_model_params, self.val.len());
        self.ledger.record_compute(
            Phase::Inference,
            Some(round),
            format!("round {round} validation"),
            eval_duration,
        )?;

        let energy_records: Vec<usize> = (ledger_start..self.ledger.len()).collect();
        let energy_wh = energy_records
            .iter()
            .map(|&i| self.ledger.records()[i].energy_wh)
            .sum();

        self.server.stopper.observe(pooled.f1);
        self.server.round = round;

        let record = RoundRecord {
            round,
            selected,
            download_bytes,
            upload_bytes,
            payload: payload_entries,
            mean_train_loss: weighted_loss / total_samples as f64,
            val: pooled,
            adapter_average_gap: adapter_gap,
            duration_s: slowest_training_s + eval_duration,
            energy_wh,
            energy_records,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    /// Evaluate every client's current model on its validation shard.
    /// Returns the pooled report (scores concatenated in client order) and
    /// the per-client reports.
    pub fn evaluate_clients(&self) -> Result<(MetricReport, Vec<MetricReport>)> {
        let mut pooled_scores = Vec::with_capacity(self.val.len());
        let mut pooled_labels = Vec::with_capacity(self.val.len());
        let mut per_client = Vec::with_capacity(self.clients.len());
        for client in &self.clients {
            let scores = match self.strategy {
                Strategy::FedavgFull => {
                    forward(&self.spec, &self.server.params, &[], client.val.features())?
                }
                Strategy::FedavgLora => forward(
                    &self.spec,
                    self.server.frozen_base.as_ref().expect("lora has a base"),
                    self.server.adapters.as_deref().expect("lora has adapters"),
                    client.val.features(),
                )?,
                Strategy::PflDecoupled => {
                    let shared = client.last_shared.as_ref().expect("initialized shared");
                    let personal = client.personal.as_ref().expect("initialized personal");
                    let model = ParameterSet::union(shared, personal)?;
                    forward(&self.spec, &model, &[], client.val.features())?
                }
                Strategy::Centralized => unreachable!(),
            };
            let scores = scores.to_vec();
            per_client.push(report_from_scores(&scores, client.val.labels())?);
            pooled_scores.extend_from_slice(&scores);
            pooled_labels.extend_from_slice(client.val.labels());
        }
        Ok((
            report_from_scores(&pooled_scores, &pooled_labels)?,
            per_client,
        ))
    }

    pub fn finished(&self) -> bool {
        self.server.round >= self.rounds_target || self.server.stopper.should_stop()
    }

    /// Run rounds until the target count or the early stopper ends the run.
    pub fn run_to_completion(&mut self) -> Result<()> {
        while !self.finished() {
            self.run_round()?;
        }
        Ok(())
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn model_spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn train_dataset(&self) -> &Dataset {
        &self.train
    }

    pub fn val_dataset(&self) -> &Dataset {
        &self.val
    }

    pub fn initial_broadcast_bytes(&self) -> u64 {
        self.initial_broadcast_bytes
    }

    fn into_parts(self) -> (Vec<RoundRecord>, EnergyLedger) {
        (self.records, self.ledger)
    }
}

/// The pooled-data reference: same task, model, optimizer, and seed
/// derivations as the federated paths, but no clients, no sampling, no
/// payloads — one machine training on all data.
pub struct CentralizedTrainer {
    spec: ModelSpec,
    params: ParameterSet,
    train: Dataset,
    val: Dataset,
    opt: OptimizerSettings,
    rounds_target: usize,
    round: usize,
    stopper: EarlyStopper,
    tree: SeedTree,
    ledger: EnergyLedger,
    cost: CostModel,
    records: Vec<RoundRecord>,
    dataset_upload_bytes: u64,
}

impl CentralizedTrainer {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.model_spec()?;
        let data = generate_synthetic(&config.task_spec()?)?;
        let tree = SeedTree::new(config.seed);
        let (train, val) =
            stratified_split(&data, config.task.train_fraction, tree.branch("split").state())?;
        let params = spec.init_params(RoleLayout::AllShared, &mut tree.branch("init").rng())?;

        let mut ledger = EnergyLedger::new(config.hardware.clone(), config.grid.clone())?;
        if config.energy.pretraining_gco2e > 0.0 && config.energy.pretraining_fraction > 0.0 {
            let share = crate::energy::amortized_pretraining_share(
                config.energy.pretraining_gco2e,
                config.energy.pretraining_fraction,
            )?;
            ledger.record_emission(Phase::Pretraining, None, "amortized pretraining share", share)?;
        }
        // Pooling the corpus is itself a transfer: every training row
        // (features plus label, 4 bytes each) moves to the trainer once.
        let dataset_upload_bytes =
            (train.len() as u64) * (train.feature_dim() as u64 + 1) * 4;
        ledger.record_comm(
            None,
            "training data upload",
            dataset_upload_bytes,
            config.energy.comm_j_per_byte,
        )?;

        Ok(CentralizedTrainer {
            spec,
            params,
            train,
            val,
            opt: config.optimizer.clone(),
            rounds_target: config.rounds,
            round: 0,
            stopper: EarlyStopper::new(config.patience)?,
            tree,
            ledger,
            cost: CostModel {
                seconds_per_kparam_sample: config.energy.seconds_per_kparam_sample,
            },
            records: Vec::new(),
            dataset_upload_bytes,
        })
    }

    /// One optimization pass over the pooled training data (epochs × batches),
    /// followed by evaluation.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let round = self.round + 1;
        let ledger_start = self.ledger.len();
        // Same derivation as federated client 0, so a single-client
        // federation and this trainer consume identical random streams.
        let mut rng = self
            .tree
            .branch("local-train")
            .index(round as u64)
            .index(0)
            .rng();
        let features = self.train.features().clone();
        let labels = self.train.labels().to_vec();
        let mut no_adapters = Vec::new();
        let mean_loss = train_epochs(
            &self.spec,
            &mut self.params,
            &mut no_adapters,
            &features,
            &labels,
            &self.opt,
            &mut rng,
        )?;
        let train_duration = self
            .cost
            .duration_s(self.params.param_count(), self.train.len() * self.opt.epochs);
        self.ledger.record_compute(
            Phase::Training,
            Some(round),
            format!("round {round} pooled training"),
            train_duration,
        )?;

        let val = self.evaluate()?;
        let eval_duration = self.cost.duration_s(self.params.param_count(), self.val.len());
        self.ledger.record_compute(
            Phase::Inference,
            Some(round),
            format!("round {round} validation"),
            eval_duration,
        )?;

        let energy_records: Vec<usize> = (ledger_start..self.ledger.len()).collect();
        let energy_wh = energy_records
            .iter()
            .map(|&i| self.ledger.records()[i].energy_wh)
            .sum();

        self.stopper.observe(val.f1);
        self.round = round;
        let record = RoundRecord {
            round,
            selected: Vec::new(),
            download_bytes: Vec::new(),
            upload_bytes: Vec::new(),
            payload: Vec::new(),
            mean_train_loss: mean_loss,
            val,
            adapter_average_gap: None,
            duration_s: train_duration + eval_duration,
            energy_wh,
            energy_records,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    pub fn evaluate(&self) -> Result<MetricReport> {
        let scores = forward(&self.spec, &self.params, &[], self.val.features())?;
        report_from_scores(scores.as_slice().unwrap(), self.val.labels())
    }

    pub fn finished(&self) -> bool {
        self.round >= self.rounds_target || self.stopper.should_stop()
    }

    pub fn run_to_completion(&mut self) -> Result<()> {
        while !self.finished() {
            self.run_round()?;
        }
        Ok(())
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn train_dataset(&self) -> &Dataset {
        &self.train
    }

    pub fn val_dataset(&self) -> &Dataset {
        &self.val
    }

    pub fn dataset_upload_bytes(&self) -> u64 {
        self.dataset_upload_bytes
    }

    fn into_parts(self) -> (Vec<RoundRecord>, EnergyLedger) {
        (self.records, self.ledger)
    }
}

/// Run the experiment a config describes, end to end, and assemble the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = std::time::Instant::now();
    let config = config.clone().resolved(None)?;

    let (records, ledger, final_metrics, payload) = match config.strategy {
        Strategy::Centralized => {
            let mut trainer = CentralizedTrainer::new(&config)?;
            trainer.run_to_completion()?;
            let global = trainer.evaluate()?;
            let payload = PayloadTotals {
                upload_bytes: 0,
                download_bytes: 0,
                initial_broadcast_bytes: 0,
                dataset_upload_bytes: trainer.dataset_upload_bytes(),
            };
            let final_metrics = FinalMetrics {
                global,
                per_client: Vec::new(),
                mean_client_accuracy: None,
                mean_client_f1: None,
            };
            let (records, ledger) = trainer.into_parts();
            (records, ledger, final_metrics, payload)
        }
        _ => {
            let mut federation = Federation::new(&config)?;
            federation.run_to_completion()?;
            let (global, per) = federation.evaluate_clients()?;
            let mean_client_accuracy =
                per.iter().map(|m| m.accuracy).sum::<f64>() / per.len() as f64;
            let mean_client_f1 = per.iter().map(|m| m.f1).sum::<f64>() / per.len() as f64;
            let per_client: Vec<ClientMetrics> = per
                .into_iter()
                .enumerate()
                .map(|(client, metrics)| ClientMetrics { client, metrics })
                .collect();
            let payload = PayloadTotals {
                upload_bytes: federation
                    .records()
                    .iter()
                    .flat_map(|r| &r.upload_bytes)
                    .map(|t| t.bytes)
                    .sum(),
                download_bytes: federation
                    .records()
                    .iter()
                    .flat_map(|r| &r.download_bytes)
                    .map(|t| t.bytes)
                    .sum(),
                initial_broadcast_bytes: federation.initial_broadcast_bytes(),
                dataset_upload_bytes: 0,
            };
            let final_metrics = FinalMetrics {
                global,
                per_client,
                mean_client_accuracy: Some(mean_client_accuracy),
                mean_client_f1: Some(mean_client_f1),
            };
            let (records, ledger) = federation.into_parts();
            (records, ledger, final_metrics, payload)
        }
    };

    Ok(ExperimentReport {
        schema_version: 1,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        rounds_executed: records.len(),
        stopped_early: records.len() < config.rounds,
        config,
        final_metrics,
        payload,
        energy: ledger.summarize(),
        simulated_duration_s: records.iter().map(|r| r.duration_s).sum(),
        rounds: records,
        wall_clock_s: Some(started.elapsed().as_secs_f64()),
        ledger: Some(ledger),
    })
}
