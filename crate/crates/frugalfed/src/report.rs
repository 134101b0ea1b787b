//! Run reports: a serializable record of everything one experiment produced,
//! plus cross-run comparison tables.
//!
//! JSON output rounds every float to six significant figures through a custom
//! formatter, so logically identical runs emit byte-identical documents
//! regardless of when or where they ran. Wall-clock time is the one
//! non-deterministic field and is excluded from [`ExperimentReport::body_json`].

use std::fmt::Write as _;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::config::{ExperimentConfig, Strategy};
use crate::energy::{EnergyLedger, EnergySummary};
use crate::error::{Result, SimError};
use crate::fed::RoundRecord;
use crate::metrics::MetricReport;

/// Validation metrics for a single client at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub client: usize,
    pub metrics: MetricReport,
}

/// End-of-run quality, both pooled and per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    /// Pooled over every client's validation shard (the whole validation set).
    pub global: MetricReport,
    /// Per-client reports; empty for centralized runs.
    pub per_client: Vec<ClientMetrics>,
    /// Unweighted mean of per-client accuracy; `None` for centralized runs.
    pub mean_client_accuracy: Option<f64>,
    pub mean_client_f1: Option<f64>,
}

/// Byte totals for everything that crossed the (simulated) network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadTotals {
    /// Client→server bytes across all rounds.
    pub upload_bytes: u64,
    /// Server→client bytes across all rounds (broadcasts and refreshes).
    pub download_bytes: u64,
    /// One-time frozen-base distribution, when the strategy uses one.
    pub initial_broadcast_bytes: u64,
    /// One-time raw-data transfer for pooled (centralized) training.
    pub dataset_upload_bytes: u64,
}

impl PayloadTotals {
    /// Everything moved, in bytes.
    pub fn total_bytes(&self) -> u64 {
        self.upload_bytes
            + self.download_bytes
            + self.initial_broadcast_bytes
            + self.dataset_upload_bytes
    }
}

/// Complete record of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Bumped when the report layout changes incompatibly.
    pub schema_version: u32,
    /// Version of the package that produced the report.
    pub artifact_version: String,
    pub seed: u64,
    /// Fully resolved configuration; parsing this back reproduces the run.
    pub config: ExperimentConfig,
    pub rounds_executed: usize,
    /// True when the early stopper ended the run before the round budget.
    pub stopped_early: bool,
    pub final_metrics: FinalMetrics,
    pub payload: PayloadTotals,
    pub energy: EnergySummary,
    /// Sum of simulated per-round durations.
    pub simulated_duration_s: f64,
    pub rounds: Vec<RoundRecord>,
    /// Real elapsed time; excluded from deterministic comparisons.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_s: Option<f64>,
    /// Full event log backing `energy`; kept in memory, not serialized.
    #[serde(skip)]
    pub ledger: Option<EnergyLedger>,
}

impl ExperimentReport {
    /// Pretty JSON with floats at six significant figures.
    pub fn to_json(&self) -> Result<String> {
        to_sig6_json(self)
    }

    /// Like [`to_json`](Self::to_json) but with wall-clock time removed:
    /// two runs of the same config produce byte-identical bodies.
    pub fn body_json(&self) -> Result<String> {
        let mut body = self.clone();
        body.wall_clock_s = None;
        body.ledger = None;
        to_sig6_json(&body)
    }

    pub fn from_json(text: &str) -> Result<ExperimentReport> {
        serde_json::from_str(text).map_err(|e| SimError::parse(format!("reading report: {e}")))
    }

    /// One CSV row per round.
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from(
            "round,selected,download_bytes,upload_bytes,duration_s,energy_wh,\
             train_loss,val_accuracy,val_f1,val_roc_auc,val_log_loss\n",
        );
        for r in &self.rounds {
            let selected = r
                .selected
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let down: u64 = r.download_bytes.iter().map(|t| t.bytes).sum();
            let up: u64 = r.upload_bytes.iter().map(|t| t.bytes).sum();
            let auc = r
                .val
                .roc_auc
                .map(|v| format!("{:?}", round_sig6(v)))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{},{:?}",
                r.round,
                selected,
                down,
                up,
                round_sig6(r.duration_s),
                round_sig6(r.energy_wh),
                round_sig6(r.mean_train_loss),
                round_sig6(r.val.accuracy),
                round_sig6(r.val.f1),
                auc,
                round_sig6(r.val.log_loss),
            );
        }
        out
    }

    /// Render in the requested output format.
    pub fn emit(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => Ok(self.rounds_csv()),
        }
    }
}

/// Output formats for a run report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(SimError::usage(format!(
                "unknown format '{other}' (expected json or csv)"
            ))),
        }
    }
}

/// Round to six significant figures. Zero and non-finite values pass through.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor();
    let factor = 10f64.powf(5.0 - magnitude);
    (x * factor).round() / factor
}

fn write_indent<W: ?Sized + io::Write>(writer: &mut W, depth: usize) -> io::Result<()> {
    for _ in 0..depth {
        writer.write_all(b"  ")?;
    }
    Ok(())
}

/// Two-space pretty printer that rounds every float to six significant
/// figures on the way out. Integers are untouched, so byte counts and
/// sample counts stay exact.
struct Sig6Pretty {
    depth: usize,
    has_value: bool,
}

impl Sig6Pretty {
    fn new() -> Self {
        Sig6Pretty {
            depth: 0,
            has_value: false,
        }
    }
}

impl Formatter for Sig6Pretty {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{:?}", round_sig6(value))
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.depth += 1;
        self.has_value = false;
        writer.write_all(b"[")
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.depth -= 1;
        if self.has_value {
            writer.write_all(b"\n")?;
            write_indent(writer, self.depth)?;
        }
        writer.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        writer.write_all(if first { b"\n" } else { b",\n" })?;
        write_indent(writer, self.depth)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, _writer: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.depth += 1;
        self.has_value = false;
        writer.write_all(b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.depth -= 1;
        if self.has_value {
            writer.write_all(b"\n")?;
            write_indent(writer, self.depth)?;
        }
        writer.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        writer.write_all(if first { b"\n" } else { b",\n" })?;
        write_indent(writer, self.depth)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, _writer: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Serialize any value as pretty JSON with floats at six significant figures.
pub fn to_sig6_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig6Pretty::new());
    value
        .serialize(&mut ser)
        .map_err(|e| SimError::parse(format!("writing json: {e}")))?;
    String::from_utf8(out).map_err(|e| SimError::parse(format!("non-utf8 json: {e}")))
}

/// One strategy's line in a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub accuracy: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub log_loss: f64,
    pub energy_wh: f64,
    pub gco2e: f64,
    /// Total client→server upload in megabytes (10^6 bytes).
    pub payload_mb: f64,
    /// Raw upload bytes, kept exact for ratio computation.
    pub upload_bytes: u64,
    /// This row's energy over the baseline's; `None` when the baseline is 0.
    pub energy_ratio: Option<f64>,
    pub co2_ratio: Option<f64>,
    pub payload_ratio: Option<f64>,
}

/// Side-by-side strategy comparison, each row normalized against a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,accuracy,f1,roc_auc,log_loss,energy_wh,gco2e,payload_mb,\
             energy_ratio,co2_ratio,payload_ratio\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{:?}", round_sig6(x))).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{},{:?},{:?},{:?},{:?},{},{},{}",
                r.strategy,
                round_sig6(r.accuracy),
                round_sig6(r.f1),
                opt(r.roc_auc),
                round_sig6(r.log_loss),
                round_sig6(r.energy_wh),
                round_sig6(r.gco2e),
                round_sig6(r.payload_mb),
                opt(r.energy_ratio),
                opt(r.co2_ratio),
                opt(r.payload_ratio),
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_sig6_json(self)
    }
}

fn ratio(value: f64, base: f64) -> Option<f64> {
    (base != 0.0 && base.is_finite()).then(|| value / base)
}

/// Build a comparison table from finished runs, normalizing energy, carbon,
/// and payload against the `baseline` strategy's run. Falls back to the
/// first report (with a warning) when no run used the baseline strategy.
pub fn compare(reports: &[ExperimentReport], baseline: Strategy) -> Result<ComparisonTable> {
    if reports.is_empty() {
        return Err(SimError::usage("no reports to compare"));
    }
    let mut warnings = Vec::new();
    let base_idx = match reports
        .iter()
        .position(|r| r.config.strategy == baseline)
    {
        Some(i) => i,
        None => {
            warnings.push(format!(
                "no report uses baseline strategy '{}'; using '{}' instead",
                baseline.as_str(),
                reports[0].config.strategy.as_str()
            ));
            0
        }
    };
    let base = &reports[base_idx];
    for r in reports {
        if r.config.task != base.config.task {
            warnings.push(format!(
                "'{}' ran a different task than the baseline; quality numbers are not comparable",
                r.config.strategy.as_str()
            ));
        }
    }

    let rows = reports
        .iter()
        .map(|r| {
            let g = &r.final_metrics.global;
            ComparisonRow {
                strategy: r.config.strategy.as_str().to_string(),
                accuracy: g.accuracy,
                f1: g.f1,
                roc_auc: g.roc_auc,
                log_loss: g.log_loss,
                energy_wh: r.energy.total_wh,
                gco2e: r.energy.total_gco2e,
                payload_mb: r.payload.upload_bytes as f64 / 1e6,
                upload_bytes: r.payload.upload_bytes,
                energy_ratio: ratio(r.energy.total_wh, base.energy.total_wh),
                co2_ratio: ratio(r.energy.total_gco2e, base.energy.total_gco2e),
                payload_ratio: ratio(
                    r.payload.upload_bytes as f64,
                    base.payload.upload_bytes as f64,
                ),
            }
        })
        .collect();

    Ok(ComparisonTable {
        baseline: base.config.strategy.as_str().to_string(),
        rows,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fed::run_experiment;

    fn tiny_config(strategy: Strategy) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_strategy(strategy);
        cfg.rounds = 2;
        cfg.client_count = 2;
        cfg.client_fraction = 1.0;
        cfg.task.samples_per_domain = 30;
        cfg.task.feature_dim = 3;
        cfg.model.hidden = vec![4];
        cfg.model.head_boundary = 1;
        cfg.lora.rank = 1;
        cfg.lora.targets = vec!["dense0.weight".into()];
        cfg.resolved(None).unwrap()
    }

    #[test]
    fn sig6_rounding() {
        assert_eq!(round_sig6(1234567.0), 1234570.0);
        assert_eq!(round_sig6(0.0001234567), 0.000123457);
        assert_eq!(round_sig6(-98765.432), -98765.4);
        assert_eq!(round_sig6(0.0), 0.0);
        assert_eq!(round_sig6(2.5), 2.5);
        // Idempotent.
        let x = 0.12345678;
        assert_eq!(round_sig6(round_sig6(x)), round_sig6(x));
    }

    #[test]
    fn sig6_json_rounds_floats_and_keeps_integers() {
        let doc = serde_json::json!({
            "bytes": 123456789u64,
            "loss": 0.6931471805599453,
            "values": [1.0, 0.333333333333]
        });
        let text = to_sig6_json(&doc).unwrap();
        assert!(text.contains("123456789"), "{text}");
        assert!(text.contains("0.693147"), "{text}");
        assert!(text.contains("0.333333"), "{text}");
        assert!(!text.contains("0.6931471805"), "{text}");
    }

    #[test]
    fn report_round_trips_and_body_is_stable() {
        let report = run_experiment(&tiny_config(Strategy::FedavgFull)).unwrap();
        let text = report.to_json().unwrap();
        let back = ExperimentReport::from_json(&text).unwrap();
        assert_eq!(back.seed, report.seed);
        assert_eq!(back.rounds.len(), report.rounds.len());
        assert_eq!(back.payload, report.payload);

        let again = run_experiment(&tiny_config(Strategy::FedavgFull)).unwrap();
        assert_eq!(report.body_json().unwrap(), again.body_json().unwrap());
        // Full JSON differs only by wall clock, which body_json drops.
        assert!(report.body_json().unwrap().len() < text.len());
    }

    #[test]
    fn rounds_csv_has_one_line_per_round() {
        let report = run_experiment(&tiny_config(Strategy::FedavgFull)).unwrap();
        let csv = report.rounds_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + report.rounds_executed);
        assert!(lines[0].starts_with("round,selected,download_bytes"));
        assert!(lines[1].starts_with("1,0;1,"));
    }

    #[test]
    fn comparison_ratios_are_exact_divisions() {
        let full = run_experiment(&tiny_config(Strategy::FedavgFull)).unwrap();
        let lora = run_experiment(&tiny_config(Strategy::FedavgLora)).unwrap();
        let table = compare(&[full.clone(), lora.clone()], Strategy::FedavgFull).unwrap();
        assert_eq!(table.baseline, "fedavg-full");
        assert_eq!(table.rows.len(), 2);
        let expected = lora.payload.upload_bytes as f64 / full.payload.upload_bytes as f64;
        assert_eq!(table.rows[1].payload_ratio, Some(expected));
        assert!(table.warnings.is_empty());

        let missing = compare(&[lora], Strategy::FedavgFull).unwrap();
        assert_eq!(missing.baseline, "fedavg-lora");
        assert_eq!(missing.warnings.len(), 1);
    }

    #[test]
    fn comparison_csv_shape() {
        let full = run_experiment(&tiny_config(Strategy::FedavgFull)).unwrap();
        let table = compare(&[full], Strategy::FedavgFull).unwrap();
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strategy,accuracy,f1,roc_auc,log_loss,energy_wh,gco2e,payload_mb,energy_ratio,co2_ratio,payload_ratio"
        );
        assert_eq!(lines.count(), 1);
    }
}
