//! Energy and carbon accounting.
//!
//! Every compute or communication event lands in an [`EnergyLedger`] as an
//! [`EnergyRecord`]. Conversions follow the usual operational/embodied split:
//!
//! * energy (Wh) = TDP (W) × utilization × duration (h) × overhead factor;
//! * operational emissions (g) = Wh × carbon intensity (g/kWh) / 1000 × PUE;
//! * embodied emissions are amortized linearly over hardware lifetime;
//! * communication energy = bytes × J/byte, expressed in Wh.
//!
//! Amortized pretraining emissions are tracked as a separate line item and
//! deliberately excluded from run totals, so the cost of reusing a frozen
//! base model stays visible but never silently inflates a run.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Power and lifecycle characteristics of the device doing the work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareProfile {
    pub name: String,
    /// Thermal design power, watts.
    pub tdp_w: f64,
    /// Average utilization during the event, in (0, 1].
    pub utilization: f64,
    /// Multiplier for host-side overhead (CPU, RAM, fans); ≥ 1.
    pub overhead: f64,
    /// Cradle-to-gate manufacturing emissions, gCO₂e.
    pub embodied_gco2e: f64,
    /// Expected service life, hours.
    pub lifetime_hours: f64,
}

impl Default for HardwareProfile {
    /// A 150 W accelerator at full utilization with no host overhead and no
    /// embodied attribution.
    fn default() -> Self {
        HardwareProfile {
            name: "sim-accelerator-150w".into(),
            tdp_w: 150.0,
            utilization: 1.0,
            overhead: 1.0,
            embodied_gco2e: 0.0,
            lifetime_hours: 30_000.0,
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        if !self.tdp_w.is_finite() || self.tdp_w <= 0.0 {
            return Err(SimError::usage("tdp_w must be a positive real"));
        }
        if !self.utilization.is_finite() || self.utilization <= 0.0 || self.utilization > 1.0 {
            return Err(SimError::usage("utilization must lie in (0, 1]"));
        }
        if !self.overhead.is_finite() || self.overhead < 1.0 {
            return Err(SimError::usage("overhead must be at least 1"));
        }
        if !self.embodied_gco2e.is_finite() || self.embodied_gco2e < 0.0 {
            return Err(SimError::usage("embodied_gco2e must be non-negative"));
        }
        if !self.lifetime_hours.is_finite() || self.lifetime_hours <= 0.0 {
            return Err(SimError::usage("lifetime_hours must be positive"));
        }
        Ok(())
    }
}

/// Where the electricity comes from and how efficiently it is delivered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridProfile {
    pub name: String,
    /// Carbon intensity of delivered electricity, gCO₂e per kWh.
    pub carbon_intensity: f64,
    /// Power usage effectiveness of the site; ≥ 1.
    pub pue: f64,
}

impl Default for GridProfile {
    /// A low-carbon grid (42 g/kWh) with ideal power delivery.
    fn default() -> Self {
        GridProfile {
            name: "low-carbon-grid".into(),
            carbon_intensity: 42.0,
            pue: 1.0,
        }
    }
}

impl GridProfile {
    pub fn validate(&self) -> Result<()> {
        if !self.carbon_intensity.is_finite() || self.carbon_intensity < 0.0 {
            return Err(SimError::usage("carbon_intensity must be non-negative"));
        }
        if !self.pue.is_finite() || self.pue < 1.0 {
            return Err(SimError::usage("pue must be at least 1"));
        }
        Ok(())
    }
}

/// What kind of work an [`EnergyRecord`] accounts for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Training,
    Inference,
    Communication,
    /// Amortized share of upstream pretraining; excluded from totals.
    Pretraining,
}

/// One accounted event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub phase: Phase,
    /// Federated round the event belongs to; `None` for one-off events.
    pub round: Option<usize>,
    pub detail: String,
    pub duration_s: f64,
    pub energy_wh: f64,
    pub operational_gco2e: f64,
    pub embodied_gco2e: f64,
    /// Payload size for communication events.
    pub bytes: Option<u64>,
}

/// Totals over a ledger. `total_gco2e` covers operational plus embodied;
/// `pretraining_gco2e` is reported alongside but never added in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergySummary {
    pub training_wh: f64,
    pub inference_wh: f64,
    pub communication_wh: f64,
    pub total_wh: f64,
    pub operational_gco2e: f64,
    pub embodied_gco2e: f64,
    pub total_gco2e: f64,
    pub pretraining_gco2e: f64,
}

/// Energy drawn by a device over an interval.
pub fn operational_energy(
    tdp_w: f64,
    utilization: f64,
    duration_s: f64,
    overhead: f64,
) -> Result<f64> {
    if !duration_s.is_finite() || duration_s < 0.0 {
        return Err(SimError::usage("duration_s must be non-negative"));
    }
    Ok(tdp_w * utilization * (duration_s / 3600.0) * overhead)
}

/// Grams of CO₂e from `energy_wh` of electricity.
pub fn operational_emissions(energy_wh: f64, carbon_intensity: f64, pue: f64) -> Result<f64> {
    if !energy_wh.is_finite() || energy_wh < 0.0 {
        return Err(SimError::usage("energy_wh must be non-negative"));
    }
    Ok(energy_wh * (carbon_intensity / 1000.0) * pue)
}

/// Share of manufacturing emissions attributable to `usage_hours`.
pub fn embodied_amortized(
    embodied_gco2e: f64,
    usage_hours: f64,
    lifetime_hours: f64,
) -> Result<f64> {
    if !usage_hours.is_finite() || usage_hours < 0.0 {
        return Err(SimError::usage("usage_hours must be non-negative"));
    }
    if !lifetime_hours.is_finite() || lifetime_hours <= 0.0 {
        return Err(SimError::usage("lifetime_hours must be positive"));
    }
    Ok(embodied_gco2e * usage_hours / lifetime_hours)
}

/// Wh needed to move `bytes` at `j_per_byte` joules per byte.
pub fn comm_energy_wh(bytes: u64, j_per_byte: f64) -> Result<f64> {
    if !j_per_byte.is_finite() || j_per_byte < 0.0 {
        return Err(SimError::usage("j_per_byte must be non-negative"));
    }
    Ok(bytes as f64 * j_per_byte / 3600.0)
}

/// Scale a measurement taken at `measured_n` units of work to `target_n`
/// units, assuming energy grows linearly with work.
pub fn linear_extrapolate(measured_wh: f64, measured_n: u64, target_n: u64) -> Result<f64> {
    if measured_n == 0 {
        return Err(SimError::usage("measured_n must be positive"));
    }
    if !measured_wh.is_finite() || measured_wh < 0.0 {
        return Err(SimError::usage("measured_wh must be non-negative"));
    }
    Ok(measured_wh * target_n as f64 / measured_n as f64)
}

/// Portion of upstream pretraining emissions assigned to this use case.
pub fn amortized_pretraining_share(pretraining_gco2e: f64, fraction: f64) -> Result<f64> {
    if !pretraining_gco2e.is_finite() || pretraining_gco2e < 0.0 {
        return Err(SimError::usage("pretraining_gco2e must be non-negative"));
    }
    if !fraction.is_finite() || fraction < 0.0 || fraction > 1.0 {
        return Err(SimError::usage("fraction must lie in [0, 1]"));
    }
    Ok(pretraining_gco2e * fraction)
}

/// Linear cost model turning simulated work into seconds: processing one
/// sample through one thousand parameters takes `seconds_per_kparam_sample`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub seconds_per_kparam_sample: f64,
}

impl CostModel {
    /// Simulated duration of sweeping `samples` rows through a model of
    /// `params` scalars.
    pub fn duration_s(&self, params: usize, samples: usize) -> f64 {
        self.seconds_per_kparam_sample * (params as f64 / 1000.0) * samples as f64
    }
}

/// Append-only event log with fixed hardware and grid profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    hardware: HardwareProfile,
    grid: GridProfile,
    records: Vec<EnergyRecord>,
}

impl EnergyLedger {
    pub fn new(hardware: HardwareProfile, grid: GridProfile) -> Result<Self> {
        hardware.validate()?;
        grid.validate()?;
        Ok(EnergyLedger {
            hardware,
            grid,
            records: Vec::new(),
        })
    }

    pub fn hardware(&self) -> &HardwareProfile {
        &self.hardware
    }

    pub fn grid(&self) -> &GridProfile {
        &self.grid
    }

    pub fn records(&self) -> &[EnergyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Account a compute event of `duration_s` on the ledger's hardware.
    /// Returns the record's index.
    pub fn record_compute(
        &mut self,
        phase: Phase,
        round: Option<usize>,
        detail: impl Into<String>,
        duration_s: f64,
    ) -> Result<usize> {
        if phase == Phase::Communication {
            return Err(SimError::usage(
                "communication events go through record_comm",
            ));
        }
        let energy_wh = operational_energy(
            self.hardware.tdp_w,
            self.hardware.utilization,
            duration_s,
            self.hardware.overhead,
        )?;
        let operational =
            operational_emissions(energy_wh, self.grid.carbon_intensity, self.grid.pue)?;
        let embodied = embodied_amortized(
            self.hardware.embodied_gco2e,
            duration_s / 3600.0,
            self.hardware.lifetime_hours,
        )?;
        self.records.push(EnergyRecord {
            phase,
            round,
            detail: detail.into(),
            duration_s,
            energy_wh,
            operational_gco2e: operational,
            embodied_gco2e: embodied,
            bytes: None,
        });
        Ok(self.records.len() - 1)
    }

    /// Account a transfer of `bytes`. Returns the record's index.
    pub fn record_comm(
        &mut self,
        round: Option<usize>,
        detail: impl Into<String>,
        bytes: u64,
        j_per_byte: f64,
    ) -> Result<usize> {
        let energy_wh = comm_energy_wh(bytes, j_per_byte)?;
        let operational =
            operational_emissions(energy_wh, self.grid.carbon_intensity, self.grid.pue)?;
        self.records.push(EnergyRecord {
            phase: Phase::Communication,
            round,
            detail: detail.into(),
            duration_s: 0.0,
            energy_wh,
            operational_gco2e: operational,
            embodied_gco2e: 0.0,
            bytes: Some(bytes),
        });
        Ok(self.records.len() - 1)
    }

    /// Account an externally computed emission amount (e.g. an amortized
    /// pretraining share). Returns the record's index.
    pub fn record_emission(
        &mut self,
        phase: Phase,
        round: Option<usize>,
        detail: impl Into<String>,
        gco2e: f64,
    ) -> Result<usize> {
        if !gco2e.is_finite() || gco2e < 0.0 {
            return Err(SimError::usage("gco2e must be non-negative"));
        }
        self.records.push(EnergyRecord {
            phase,
            round,
            detail: detail.into(),
            duration_s: 0.0,
            energy_wh: 0.0,
            operational_gco2e: gco2e,
            embodied_gco2e: 0.0,
            bytes: None,
        });
        Ok(self.records.len() - 1)
    }

    /// Totals per phase and overall. Pretraining records are surfaced in
    /// `pretraining_gco2e` only.
    pub fn summarize(&self) -> EnergySummary {
        let mut s = EnergySummary::default();
        for r in &self.records {
            match r.phase {
                Phase::Training => s.training_wh += r.energy_wh,
                Phase::Inference => s.inference_wh += r.energy_wh,
                Phase::Communication => s.communication_wh += r.energy_wh,
                Phase::Pretraining => {
                    s.pretraining_gco2e += r.operational_gco2e + r.embodied_gco2e;
                    continue;
                }
            }
            s.operational_gco2e += r.operational_gco2e;
            s.embodied_gco2e += r.embodied_gco2e;
        }
        s.total_wh = s.training_wh + s.inference_wh + s.communication_wh;
        s.total_gco2e = s.operational_gco2e + s.embodied_gco2e;
        s
    }

    /// Summary restricted to records of one round.
    pub fn summarize_round(&self, round: usize) -> EnergySummary {
        let mut filtered = EnergyLedger {
            hardware: self.hardware.clone(),
            grid: self.grid.clone(),
            records: self
                .records
                .iter()
                .filter(|r| r.round == Some(round))
                .cloned()
                .collect(),
        };
        let s = filtered.summarize();
        filtered.records.clear();
        s
    }

    /// Render all records as CSV.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("phase,round,detail,duration_s,energy_wh,operational_gco2e,embodied_gco2e,bytes\n");
        for r in &self.records {
            let phase = match r.phase {
                Phase::Training => "training",
                Phase::Inference => "inference",
                Phase::Communication => "communication",
                Phase::Pretraining => "pretraining",
            };
            let round = r.round.map(|x| x.to_string()).unwrap_or_default();
            let bytes = r.bytes.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{phase},{round},{},{},{},{},{},{bytes}\n",
                r.detail, r.duration_s, r.energy_wh, r.operational_gco2e, r.embodied_gco2e
            ));
        }
        out
    }
}
