//! The per-trajectory `report.json` and its table renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fading::{FitResult, HeightFit};
use crate::metrics::{CorrelationReport, SubbandCheck};
use crate::stationarity::{SpanSummary, WindowPlan};

pub const SCHEMA_VERSION: u64 = 1;

/// JSON schema that `report.json` validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Section<T> {
    Ok(T),
    Skipped { reason: String },
}

impl<T> Section<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Self::Ok(v) => Some(v),
            Self::Skipped { .. } => None,
        }
    }
}

/// Every tunable, echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Defaults {
    pub gamma: f64,
    pub ls_window_lambda: f64,
    pub coherence_level: f64,
    pub snr_db: f64,
    pub n_bands: usize,
    pub noise_gate_db: f64,
    pub corr_window: usize,
    pub anchor_stride: usize,
    pub h_min_m: f64,
    pub delay_window: String,
    pub fit_max_samples: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub n_snapshots: usize,
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub snapshot_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometrySummary {
    pub mean_step_m: f64,
    pub mean_velocity_mps: f64,
    pub total_path_m: f64,
    pub height_min_m: f64,
    pub height_max_m: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub d3d_min_m: f64,
    pub d3d_max_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSummary {
    pub ls_window_m: f64,
    pub ls_window_samples: usize,
    pub n_despiked: usize,
}

/// Linear-interpolation quantiles at 5, 25, 50, 75 and 95 %.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub mean: f64,
}

impl Quantiles {
    /// `None` when no finite values remain.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            p05: q(0.05),
            p25: q(0.25),
            p50: q(0.50),
            p75: q(0.75),
            p95: q(0.95),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceSummary {
    pub b_coh_hz: Quantiles,
    pub saturated_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaritySummary {
    pub n_regions: usize,
    pub d_stat_m: Quantiles,
    pub window_plan: WindowPlan,
    pub spans: SpanSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaySummary {
    pub n_windows: usize,
    pub s_tau_ns: Quantiles,
    pub t_m_ns: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FadingSummary {
    pub n_samples: usize,
    pub fits: Vec<FitResult>,
    pub best_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KfactorSummary {
    pub n_windows: usize,
    pub n_valid: usize,
    pub n_degenerate: usize,
    pub n_moment_mismatch: usize,
    pub k_db: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeSummary {
    pub n_windows: usize,
    pub eta_bps_hz: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub schema_version: u64,
    pub dataset: DatasetSummary,
    pub defaults: Defaults,
    pub geometry: GeometrySummary,
    pub envelope: EnvelopeSummary,
    pub coherence: Section<CoherenceSummary>,
    pub stationarity: Section<StationaritySummary>,
    pub delay_spread: Section<DelaySummary>,
    pub fading: Section<FadingSummary>,
    pub kfactor: Section<KfactorSummary>,
    pub k_height: Section<HeightFit>,
    pub spectral_efficiency: Section<SeSummary>,
    pub correlations: Section<CorrelationReport>,
    pub subband: Section<SubbandCheck>,
}

/// Stage outputs gathered by the pipeline. A `None` must be explained by an
/// entry in `skipped`.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub dataset: Option<DatasetSummary>,
    pub defaults: Option<Defaults>,
    pub geometry: Option<GeometrySummary>,
    pub envelope: Option<EnvelopeSummary>,
    pub coherence: Option<CoherenceSummary>,
    pub stationarity: Option<StationaritySummary>,
    pub delay_spread: Option<DelaySummary>,
    pub fading: Option<FadingSummary>,
    pub kfactor: Option<KfactorSummary>,
    pub k_height: Option<HeightFit>,
    pub spectral_efficiency: Option<SeSummary>,
    pub correlations: Option<CorrelationReport>,
    pub subband: Option<SubbandCheck>,
    /// Section name → reason it was not produced.
    pub skipped: BTreeMap<String, String>,
}

pub fn build_report(inputs: ReportInputs) -> Result<TrajectoryReport> {
    let mut missing = Vec::new();
    fn required<T>(v: Option<T>, name: &str, missing: &mut Vec<String>) -> Option<T> {
        if v.is_none() {
            missing.push(name.to_string());
        }
        v
    }
    fn section<T>(
        v: Option<T>,
        name: &str,
        skipped: &BTreeMap<String, String>,
        missing: &mut Vec<String>,
    ) -> Section<T> {
        match (v, skipped.get(name)) {
            (Some(v), _) => Section::Ok(v),
            (None, Some(reason)) => Section::Skipped {
                reason: reason.clone(),
            },
            (None, None) => {
                missing.push(name.to_string());
                Section::Skipped {
                    reason: String::new(),
                }
            }
        }
    }
    let sk = &inputs.skipped;
    let dataset = required(inputs.dataset, "dataset", &mut missing);
    let defaults = required(inputs.defaults, "defaults", &mut missing);
    let geometry = required(inputs.geometry, "geometry", &mut missing);
    let envelope = required(inputs.envelope, "envelope", &mut missing);
    let coherence = section(inputs.coherence, "coherence", sk, &mut missing);
    let stationarity = section(inputs.stationarity, "stationarity", sk, &mut missing);
    let delay_spread = section(inputs.delay_spread, "delay_spread", sk, &mut missing);
    let fading = section(inputs.fading, "fading", sk, &mut missing);
    let kfactor = section(inputs.kfactor, "kfactor", sk, &mut missing);
    let k_height = section(inputs.k_height, "k_height", sk, &mut missing);
    let spectral_efficiency = section(inputs.spectral_efficiency, "spectral_efficiency", sk, &mut missing);
    let correlations = section(inputs.correlations, "correlations", sk, &mut missing);
    let subband = section(inputs.subband, "subband", sk, &mut missing);
    if !missing.is_empty() {
        return Err(Error::MissingStage(missing));
    }
    Ok(TrajectoryReport {
        schema_version: SCHEMA_VERSION,
        dataset: dataset.unwrap(),
        defaults: defaults.unwrap(),
        geometry: geometry.unwrap(),
        envelope: envelope.unwrap(),
        coherence,
        stationarity,
        delay_spread,
        fading,
        kfactor,
        k_height,
        spectral_efficiency,
        correlations,
        subband,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json(report: &TrajectoryReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<Value> {
    let v: Value = serde_json::from_str(text)?;
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => Ok(v),
        Some(other) => Err(Error::UnsupportedSchema(other)),
        None => Err(Error::UnsupportedSchema(0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(Error::ConfigInvalid(format!("unknown format {other:?}"))),
        }
    }
}

struct Table {
    title: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

fn tables(report: &Value) -> Vec<Table> {
    let mut out = Vec::new();
    let st = &report["stationarity"];
    if st["status"] == "ok" {
        let spans = &st["spans"];
        let rows = [("elevation", "elevation"), ("azimuth", "azimuth"), ("distance", "distance")]
            .iter()
            .map(|(label, key)| {
                let s = &spans[key];
                vec![
                    label.to_string(),
                    num(&s["min"]),
                    num(&s["max"]),
                    num(&s["mean"]),
                    num(&s["std"]),
                ]
            })
            .collect();
        out.push(Table {
            title: "Stationarity summary (normalized spans)",
            header: ["span", "min", "max", "mean", "std"].map(String::from).to_vec(),
            rows,
        });
    }
    let fd = &report["fading"];
    if fd["status"] == "ok" {
        let fits = fd["fits"].as_array().cloned().unwrap_or_default();
        let mut header = vec!["metric".to_string()];
        let mut row = vec!["ks_distance".to_string()];
        for f in &fits {
            header.push(f["model"].as_str().unwrap_or("?").to_string());
            row.push(num(&f["ks_distance"]));
        }
        out.push(Table {
            title: "KS distances for fading models",
            header,
            rows: vec![row],
        });
    }
    out
}

/// Stationarity-summary and KS tables.
pub fn render_tables(report: &Value, format: TableFormat) -> String {
    let mut s = String::new();
    for t in tables(report) {
        match format {
            TableFormat::Markdown => {
                let _ = writeln!(s, "### {}\n", t.title);
                let _ = writeln!(s, "| {} |", t.header.join(" | "));
                let _ = writeln!(s, "|{}", "---|".repeat(t.header.len()));
                for r in &t.rows {
                    let _ = writeln!(s, "| {} |", r.join(" | "));
                }
                s.push('\n');
            }
            TableFormat::Csv => {
                let _ = writeln!(s, "# {}", t.title);
                let _ = writeln!(s, "{}", t.header.join(","));
                for r in &t.rows {
                    let _ = writeln!(s, "{}", r.join(","));
                }
            }
        }
    }
    s
}
