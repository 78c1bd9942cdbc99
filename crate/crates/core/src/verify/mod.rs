//! Numerical audits that turn the qualitative statements about fillings,
//! norms and traces into reproducible measurements with stated bands.
//!
//! "Comparable with constants" is operationalized as: the measured ratio band
//! may not widen by more than a factor 2 between the coarsest and the finest
//! resolution of a run.

mod audits;
mod random;

pub use audits::{
    audit_density54, audit_equiv_26, audit_lemma53, audit_porosity_qindependence, audit_prop52,
    audit_theorem_suite,
};
pub use random::{
    eval_tents, random_edge_sequence, random_lipschitz, random_noise, random_tents, rng_for, Tent,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{SmoothnessParams, Theorem};
use crate::space::SpaceDescriptor;

fn default_trials() -> usize {
    20
}

/// Input of every audit. Fields an audit does not use are ignored by it;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The space, with the subset `F` where the audit needs one.
    pub space: SpaceDescriptor,
    #[serde(default)]
    pub n_min: i32,
    /// The `n_max` values to run at, coarsest first.
    #[serde(default)]
    pub resolutions: Vec<i32>,
    /// Parameter grid; single-parameter audits use the first entry.
    #[serde(default)]
    pub params: Vec<SmoothnessParams>,
    #[serde(default, with = "crate::json::extended_vec")]
    pub q_list: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
    /// Dilation factors tried in the local `L^1` embedding.
    #[serde(default)]
    pub sigma_grid: Vec<f64>,
    /// Largest allowed `err(finest) / err(coarsest)` of the round trip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_trip_factor: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(space: SpaceDescriptor, resolutions: Vec<i32>) -> Self {
        Self {
            space,
            n_min: 0,
            resolutions,
            params: Vec::new(),
            q_list: Vec::new(),
            trials: default_trials(),
            seed: 0,
            theorem: None,
            sigma_grid: Vec::new(),
            round_trip_factor: None,
        }
    }

    pub(crate) fn require_resolutions(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::invalid("the experiment needs at least one resolution"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("the experiment needs at least one trial"));
        }
        if let Some(n) = self.resolutions.iter().find(|&&n| n <= self.n_min) {
            return Err(Error::invalid(format!(
                "resolution {n} does not exceed n_min = {}",
                self.n_min
            )));
        }
        Ok(())
    }

    pub(crate) fn first_params(&self, default: SmoothnessParams) -> SmoothnessParams {
        self.params.first().copied().unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Measured,
    SkippedByGate,
    /// Run and reported without a verdict.
    Recorded,
}

impl CellStatus {
    fn as_str(self) -> &'static str {
        match self {
            CellStatus::Measured => "measured",
            CellStatus::SkippedByGate => "skipped_by_gate",
            CellStatus::Recorded => "recorded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<i32>,
    pub status: CellStatus,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Cell {
    pub fn measured(label: impl Into<String>, resolution: Option<i32>) -> Self {
        Self {
            label: label.into(),
            resolution,
            status: CellStatus::Measured,
            metrics: BTreeMap::new(),
            diagnostic: None,
        }
    }

    pub fn with_status(mut self, status: CellStatus, diagnostic: Option<String>) -> Self {
        self.status = status;
        self.diagnostic = diagnostic;
        self
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "<=")]
    LessEq,
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = ">=")]
    GreaterEq,
}

impl Comparison {
    fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Comparison::Less => measured < threshold,
            Comparison::LessEq => measured <= threshold,
            Comparison::Greater => measured > threshold,
            Comparison::GreaterEq => measured >= threshold,
        }
    }
}

/// `passed` is `measured <comparison> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub description: String,
}

impl Verdict {
    pub fn new(
        name: impl Into<String>,
        measured: f64,
        comparison: Comparison,
        threshold: f64,
        description: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: comparison.holds(measured, threshold),
            measured,
            comparison,
            threshold,
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub config: ExperimentConfig,
    pub resolutions: Vec<i32>,
    pub cells: Vec<Cell>,
    pub verdicts: Vec<Verdict>,
    pub rng_seed: u64,
}

impl ExperimentReport {
    pub(crate) fn new(audit: AuditName, config: &ExperimentConfig) -> Self {
        Self {
            experiment_id: audit.to_string(),
            config: config.clone(),
            resolutions: config.resolutions.clone(),
            cells: Vec::new(),
            verdicts: Vec::new(),
            rng_seed: config.seed,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn cell(&self, label: &str, resolution: Option<i32>) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.label == label && c.resolution == resolution)
    }

    /// Long-format CSV with columns
    /// `experiment_id,label,resolution,status,metric,value`. Verdicts appear
    /// as rows with status `pass`/`fail` and metrics `measured`, `threshold`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(format!("csv output failed: {e}"));
        w.write_record(["experiment_id", "label", "resolution", "status", "metric", "value"])
            .map_err(io)?;
        for cell in &self.cells {
            let res = cell.resolution.map(|r| r.to_string()).unwrap_or_default();
            if cell.metrics.is_empty() {
                w.write_record([&self.experiment_id, &cell.label, &res, cell.status.as_str(), "", ""])
                    .map_err(io)?;
            }
            for (name, value) in &cell.metrics {
                w.write_record([
                    self.experiment_id.as_str(),
                    &cell.label,
                    &res,
                    cell.status.as_str(),
                    name,
                    &format_real(*value),
                ])
                .map_err(io)?;
            }
        }
        for v in &self.verdicts {
            let status = if v.passed { "pass" } else { "fail" };
            for (metric, value) in [("measured", v.measured), ("threshold", v.threshold)] {
                w.write_record([self.experiment_id.as_str(), &v.name, "", status, metric, &format_real(value)])
                    .map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv output failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv output failed: {e}")))
    }
}

fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// The available audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditName {
    PorosityQindependence,
    Prop52,
    Lemma53,
    Density54,
    Equiv26,
    TheoremSuite,
}

impl AuditName {
    pub const ALL: [AuditName; 6] = [
        AuditName::PorosityQindependence,
        AuditName::Prop52,
        AuditName::Lemma53,
        AuditName::Density54,
        AuditName::Equiv26,
        AuditName::TheoremSuite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditName::PorosityQindependence => "porosity_qindependence",
            AuditName::Prop52 => "prop52",
            AuditName::Lemma53 => "lemma53",
            AuditName::Density54 => "density54",
            AuditName::Equiv26 => "equiv_26",
            AuditName::TheoremSuite => "theorem_suite",
        }
    }
}

impl fmt::Display for AuditName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuditName {
    type Err = Error;

    /// Accepts the bare name or the name prefixed with `audit_`.
    fn from_str(s: &str) -> Result<Self> {
        let bare = s.strip_prefix("audit_").unwrap_or(s);
        AuditName::ALL
            .into_iter()
            .find(|a| a.as_str() == bare)
            .ok_or_else(|| {
                let names: Vec<&str> = AuditName::ALL.iter().map(|a| a.as_str()).collect();
                Error::invalid(format!("unknown audit {s:?}; expected one of {names:?}"))
            })
    }
}

/// Runs the named audit.
pub fn run_audit(audit: AuditName, config: &ExperimentConfig) -> Result<ExperimentReport> {
    match audit {
        AuditName::PorosityQindependence => audit_porosity_qindependence(config),
        AuditName::Prop52 => audit_prop52(config),
        AuditName::Lemma53 => audit_lemma53(config),
        AuditName::Density54 => audit_density54(config),
        AuditName::Equiv26 => audit_equiv_26(config),
        AuditName::TheoremSuite => audit_theorem_suite(config),
    }
}

/// `(lo, hi)` of finite values, `None` when there are none.
pub(crate) fn band(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

/// Symmetric growth factor `max(b/a, a/b)`.
pub(crate) fn spread(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        (b / a).max(a / b)
    }
}
