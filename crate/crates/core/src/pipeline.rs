//! End-to-end analysis of one trajectory: geometry → envelope → stationarity
//! → delay line → fading → metrics → report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{load_dataset, Dataset};
use crate::delayline::{delay_series, write_delay_csv, DelaySample, DelayWindow, DEFAULT_NOISE_GATE_DB};
use crate::envelope::{decompose, write_power_csv, LsWindowSpec, PowerSeries};
use crate::error::{Error, Result};
use crate::fading::{
    cdf_table, fit_all, fit_k_height, FitResult, HeightFit, KStatus, KfactorSample, DEFAULT_H_MIN_M,
};
use crate::geometry::{geometry_series, write_geometry_csv, GeometrySeries};
use crate::metrics::{
    pearson_finite, se_series, subband_check, write_se_csv, CorrelationReport, SeSample, DEFAULT_N_BANDS,
    DEFAULT_SNR_DB,
};
use crate::report::{
    build_report, to_json, CoherenceSummary, DatasetSummary, DelaySummary, Defaults, EnvelopeSummary,
    FadingSummary, GeometrySummary, KfactorSummary, Quantiles, ReportInputs, SeSummary, StationaritySummary,
    TrajectoryReport,
};
use crate::stationarity::{
    coherence_series, scan_regions, span_summary, window_plan, write_coherence_csv, write_regions_csv,
    CoherenceResult, RegionScanConfig, StationarityRegion, WindowPlan, COHERENCE_LEVEL, DEFAULT_CORR_WINDOW,
    DEFAULT_GAMMA,
};

pub const DEFAULT_LS_WINDOW_LAMBDA: f64 = 60.0;
pub const REPORT_FILE: &str = "report.json";
const CDF_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Dataset,
    Geometry,
    Envelope,
    Coherence,
    Stationarity,
    Delayline,
    Fading,
    Metrics,
    Report,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dataset => "dataset",
            Self::Geometry => "geometry",
            Self::Envelope => "envelope",
            Self::Coherence => "coherence",
            Self::Stationarity => "stationarity",
            Self::Delayline => "delayline",
            Self::Fading => "fading",
            Self::Metrics => "metrics",
            Self::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    /// Only the optional stages can be named.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationarity" => Ok(Self::Stationarity),
            "delayline" => Ok(Self::Delayline),
            "fading" => Ok(Self::Fading),
            "metrics" => Ok(Self::Metrics),
            other => Err(Error::ConfigInvalid(format!(
                "stage {other:?} cannot be skipped (choose stationarity, delayline, fading or metrics)"
            ))),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub ls_window_lambda: f64,
    pub corr_window: usize,
    pub snr_db: f64,
    pub noise_gate_db: f64,
    pub n_bands: usize,
    pub anchor_stride: usize,
    pub h_min_m: f64,
    pub delay_window: DelayWindow,
    /// Caps the envelope samples used for distribution fitting; the subset
    /// is drawn with `seed`.
    pub fit_max_samples: Option<usize>,
    pub seed: u64,
    pub skip: BTreeSet<Stage>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            ls_window_lambda: DEFAULT_LS_WINDOW_LAMBDA,
            corr_window: DEFAULT_CORR_WINDOW,
            snr_db: DEFAULT_SNR_DB,
            noise_gate_db: DEFAULT_NOISE_GATE_DB,
            n_bands: DEFAULT_N_BANDS,
            anchor_stride: 1,
            h_min_m: DEFAULT_H_MIN_M,
            delay_window: DelayWindow::Rectangular,
            fit_max_samples: None,
            seed: 0,
            skip: BTreeSet::new(),
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::ConfigInvalid(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.ls_window_lambda > 0.0 && self.ls_window_lambda.is_finite()) {
            return bad("ls window multiple must be > 0");
        }
        if self.corr_window == 0 {
            return bad("correlation window must be >= 1");
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite");
        }
        if !(self.noise_gate_db > 0.0 && self.noise_gate_db.is_finite()) {
            return bad("noise gate must be > 0 dB");
        }
        if self.n_bands == 0 {
            return bad("n_bands must be >= 1");
        }
        if self.anchor_stride == 0 {
            return bad("anchor stride must be >= 1");
        }
        if !(self.h_min_m >= 0.0 && self.h_min_m.is_finite()) {
            return bad("h_min must be >= 0");
        }
        if self.fit_max_samples == Some(0) {
            return bad("fit_max_samples must be >= 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1");
        }
        Ok(())
    }

    pub fn defaults_block(&self) -> Defaults {
        Defaults {
            gamma: self.gamma,
            ls_window_lambda: self.ls_window_lambda,
            coherence_level: COHERENCE_LEVEL,
            snr_db: self.snr_db,
            n_bands: self.n_bands,
            noise_gate_db: self.noise_gate_db,
            corr_window: self.corr_window,
            anchor_stride: self.anchor_stride,
            h_min_m: self.h_min_m,
            delay_window: match self.delay_window {
                DelayWindow::Rectangular => "rectangular".into(),
                DelayWindow::Hann => "hann".into(),
            },
            fit_max_samples: self.fit_max_samples,
            seed: self.seed,
        }
    }
}

/// Everything the pipeline computed, alongside the report.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: TrajectoryReport,
    pub geometry: GeometrySeries,
    pub power: PowerSeries,
    pub ls_window: LsWindowSpec,
    pub coherence: Vec<CoherenceResult>,
    pub regions: Vec<StationarityRegion>,
    pub plan: Option<WindowPlan>,
    pub delay: Vec<DelaySample>,
    pub fits: Vec<FitResult>,
    pub kfactor: Vec<KfactorSample>,
    pub height_fit: Option<HeightFit>,
    pub se: Vec<SeSample>,
}

struct Timer {
    stage: Stage,
    start: Instant,
}

impl Timer {
    fn start(stage: Stage) -> Self {
        log::debug!("{stage}: start");
        Self {
            stage,
            start: Instant::now(),
        }
    }
}

impl Drop for Timer {
    fn drop(&mut self) {
        log::info!("{}: {:.3?}", self.stage, self.start.elapsed());
    }
}

fn csv_out(out: Option<&Path>, name: &str, stage: Stage, f: impl FnOnce(&Path) -> Result<()>) -> std::result::Result<(), StageError> {
    match out {
        Some(dir) => f(&dir.join(name)).at(stage),
        None => Ok(()),
    }
}

/// Loads a dataset directory and analyzes it, writing CSVs and `report.json`
/// into `out_dir` as each stage completes.
pub fn run_analysis(dataset_dir: &Path, out_dir: &Path, cfg: &RunConfig) -> std::result::Result<Analysis, StageError> {
    cfg.validate().at(Stage::Dataset)?;
    let ds = {
        let _t = Timer::start(Stage::Dataset);
        load_dataset(dataset_dir).at(Stage::Dataset)?
    };
    std::fs::create_dir_all(out_dir).map_err(Error::from).at(Stage::Report)?;
    analyze(&ds, Some(out_dir), cfg)
}

/// Analyzes an in-memory dataset; with `out_dir` the stage outputs are
/// written as they complete.
pub fn analyze(ds: &Dataset, out_dir: Option<&Path>, cfg: &RunConfig) -> std::result::Result<Analysis, StageError> {
    cfg.validate().at(Stage::Dataset)?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))
            .at(Stage::Dataset)?
            .install(|| analyze_inner(ds, out_dir, cfg)),
        None => analyze_inner(ds, out_dir, cfg),
    }
}

fn analyze_inner(ds: &Dataset, out: Option<&Path>, cfg: &RunConfig) -> std::result::Result<Analysis, StageError> {
    let meta = &ds.meta;
    let csi = &ds.csi;
    let n = csi.n_snapshots();
    let mut inputs = ReportInputs {
        dataset: Some(DatasetSummary {
            n_snapshots: n,
            n_antennas: meta.n_antennas,
            n_subcarriers: meta.n_subcarriers,
            carrier_freq_hz: meta.carrier_freq_hz,
            bandwidth_hz: meta.bandwidth_hz,
            snapshot_rate_hz: meta.snapshot_rate_hz,
        }),
        defaults: Some(cfg.defaults_block()),
        ..Default::default()
    };
    let mut skipped: BTreeMap<String, String> = BTreeMap::new();

    let geo = {
        let _t = Timer::start(Stage::Geometry);
        geometry_series(&ds.trajectory, meta.bs_position, meta.snapshot_rate_hz).at(Stage::Geometry)?
    };
    csv_out(out, "geometry.csv", Stage::Geometry, |p| write_geometry_csv(p, &geo))?;
    let heights: Vec<f64> = ds.trajectory.positions.iter().map(|p| p[2]).collect();
    let geometry_summary = summarize_geometry(&geo, &heights);

    let (power, ls_window) = {
        let _t = Timer::start(Stage::Envelope);
        decompose(csi, meta, &geo, cfg.ls_window_lambda).at(Stage::Envelope)?
    };
    csv_out(out, "power.csv", Stage::Envelope, |p| write_power_csv(p, &power))?;
    csv_out(out, "power_vs_angle.csv", Stage::Envelope, |p| write_power_vs_angle(p, &geo, &power))?;
    let envelope_summary = EnvelopeSummary {
        ls_window_m: ls_window.physical_length_m,
        ls_window_samples: ls_window.samples,
        n_despiked: power.p.iter().zip(&power.p_clean).filter(|(a, b)| a != b).count(),
    };

    let coherence = {
        let _t = Timer::start(Stage::Coherence);
        coherence_series(csi, meta).at(Stage::Coherence)?
    };
    csv_out(out, "coherence.csv", Stage::Coherence, |p| write_coherence_csv(p, &coherence))?;
    let b: Vec<f64> = coherence.iter().map(|c| c.b_coh_hz).collect();
    let coherence_summary = Quantiles::of(&b).map(|q| CoherenceSummary {
        b_coh_hz: q,
        saturated_fraction: coherence.iter().filter(|c| c.saturated).count() as f64 / n as f64,
    });

    let mut regions = Vec::new();
    let mut plan = None;
    let mut stationarity_summary = None;
    if cfg.skip.contains(&Stage::Stationarity) {
        skipped.insert("stationarity".into(), "skipped by request".into());
    } else {
        let _t = Timer::start(Stage::Stationarity);
        let scan_cfg = RegionScanConfig {
            gamma: cfg.gamma,
            window: cfg.corr_window,
            anchor_stride: cfg.anchor_stride,
        };
        regions = scan_regions(csi, &geo, &coherence, meta, &scan_cfg).at(Stage::Stationarity)?;
        csv_out(out, "regions.csv", Stage::Stationarity, |p| write_regions_csv(p, &regions))?;
        match window_plan(&regions, &geo) {
            Ok(p) => {
                let spans = span_summary(&regions, &geo).at(Stage::Stationarity)?;
                let d: Vec<f64> = regions.iter().map(|r| r.d_stat_m).collect();
                stationarity_summary = Some(StationaritySummary {
                    n_regions: regions.len(),
                    d_stat_m: Quantiles::of(&d).expect("regions are non-empty"),
                    window_plan: p,
                    spans,
                });
                plan = Some(p);
            }
            Err(e @ (Error::InsufficientRegions { .. } | Error::ZeroMeanStep)) => {
                skipped.insert("stationarity".into(), e.to_string());
            }
            Err(e) => return Err(StageError { stage: Stage::Stationarity, source: e }),
        }
    }
    let starts: Vec<usize> = plan.map(|p| p.starts(n)).unwrap_or_default();
    let n_w = plan.map_or(0, |p| p.n_w);
    let windowed_reason = match (&plan, skipped.get("stationarity")) {
        (_, Some(r)) => Some(format!("no analysis window: stationarity {r}")),
        (Some(p), None) if starts.is_empty() => Some(format!(
            "analysis window of {} samples exceeds {n} snapshots",
            p.n_w
        )),
        _ => None,
    };

    let mut delay = Vec::new();
    if cfg.skip.contains(&Stage::Delayline) {
        skipped.insert("delay_spread".into(), "skipped by request".into());
    } else if let Some(r) = &windowed_reason {
        skipped.insert("delay_spread".into(), r.clone());
    } else {
        let _t = Timer::start(Stage::Delayline);
        delay = delay_series(csi, meta, &starts, n_w, cfg.noise_gate_db, cfg.delay_window).at(Stage::Delayline)?;
        csv_out(out, "delay_spread.csv", Stage::Delayline, |p| write_delay_csv(p, &delay))?;
        let s: Vec<f64> = delay.iter().map(|d| d.rms_delay_spread_s * 1e9).collect();
        let t: Vec<f64> = delay.iter().map(|d| d.mean_delay_s * 1e9).collect();
        inputs.delay_spread = Some(DelaySummary {
            n_windows: delay.len(),
            s_tau_ns: Quantiles::of(&s).expect("windows are non-empty"),
            t_m_ns: Quantiles::of(&t).expect("windows are non-empty"),
        });
    }

    let mut fits = Vec::new();
    let mut kfactor = Vec::new();
    let mut height_fit = None;
    if cfg.skip.contains(&Stage::Fading) {
        for s in ["fading", "kfactor", "k_height"] {
            skipped.insert(s.into(), "skipped by request".into());
        }
    } else {
        let _t = Timer::start(Stage::Fading);
        let samples = fit_samples(&power.a_ssf, cfg.fit_max_samples, cfg.seed);
        match fit_all(&samples) {
            Ok(f) => {
                fits = f;
                csv_out(out, "envelope_cdf.csv", Stage::Fading, |p| write_cdf_csv(p, &samples, &fits))?;
                let best = fits
                    .iter()
                    .min_by(|a, b| a.ks_distance.total_cmp(&b.ks_distance))
                    .expect("four fits");
                inputs.fading = Some(FadingSummary {
                    n_samples: samples.len(),
                    fits: fits.clone(),
                    best_model: best.model.name().to_string(),
                });
            }
            Err(e @ (Error::TooFewSamples { .. } | Error::DegenerateVariance | Error::NonPositiveSample(_))) => {
                skipped.insert("fading".into(), e.to_string());
            }
            Err(e) => return Err(StageError { stage: Stage::Fading, source: e }),
        }
        if let Some(r) = &windowed_reason {
            skipped.insert("kfactor".into(), r.clone());
            skipped.insert("k_height".into(), r.clone());
        } else {
            let ratio: Vec<f64> = power.p.iter().zip(&power.p_ls).map(|(p, l)| p / l).collect();
            kfactor = starts
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let c = t + n_w / 2;
                    let g = &geo.samples[c];
                    KfactorSample::from_window(i, c, &ratio[t..t + n_w], heights[c], g.elevation_rad, g.azimuth_rad)
                })
                .collect();
            csv_out(out, "kfactor.csv", Stage::Fading, |p| write_kfactor_csv(p, &kfactor))?;
            let count = |s: KStatus| kfactor.iter().filter(|k| k.status == s).count();
            let valid_db: Vec<f64> = kfactor
                .iter()
                .filter(|k| k.status == KStatus::Valid)
                .map(|k| k.k_db)
                .collect();
            inputs.kfactor = Some(KfactorSummary {
                n_windows: kfactor.len(),
                n_valid: count(KStatus::Valid),
                n_degenerate: count(KStatus::Degenerate),
                n_moment_mismatch: count(KStatus::MomentMismatch),
                k_db: Quantiles::of(&valid_db),
            });
            match fit_k_height(&kfactor, cfg.h_min_m) {
                Ok(h) => height_fit = Some(h),
                Err(e @ (Error::TooFewSamples { .. } | Error::IllConditioned(_))) => {
                    skipped.insert("k_height".into(), e.to_string());
                }
                Err(e) => return Err(StageError { stage: Stage::Fading, source: e }),
            }
            csv_out(out, "k_vs_height.csv", Stage::Fading, |p| {
                write_k_height_csv(p, &kfactor, cfg.h_min_m, height_fit.as_ref())
            })?;
            inputs.k_height = height_fit;
        }
    }

    let mut se = Vec::new();
    if cfg.skip.contains(&Stage::Metrics) {
        for s in ["spectral_efficiency", "correlations", "subband"] {
            skipped.insert(s.into(), "skipped by request".into());
        }
    } else {
        let _t = Timer::start(Stage::Metrics);
        if let Some(r) = &windowed_reason {
            skipped.insert("spectral_efficiency".into(), r.clone());
        } else {
            se = se_series(csi, &starts, n_w, cfg.snr_db).at(Stage::Metrics)?;
            csv_out(out, "se.csv", Stage::Metrics, |p| write_se_csv(p, &se))?;
            let eta: Vec<f64> = se.iter().map(|s| s.eta_bits_per_s_per_hz).collect();
            inputs.spectral_efficiency = Some(SeSummary {
                n_windows: se.len(),
                eta_bps_hz: Quantiles::of(&eta).expect("windows are non-empty"),
            });
        }
        let power_db: Vec<f64> = power.p_clean.iter().map(|p| 10.0 * p.log10()).collect();
        let eta: Vec<f64> = se.iter().map(|s| s.eta_bits_per_s_per_hz).collect();
        let k_db: Vec<f64> = kfactor.iter().map(|k| k.k_db).collect();
        let s_tau: Vec<f64> = delay.iter().map(|d| d.rms_delay_spread_s).collect();
        inputs.correlations = Some(CorrelationReport {
            elevation_power: pearson_finite(&geo.elevations(), &power_db),
            azimuth_power: pearson_finite(&geo.azimuths(), &power_db),
            distance_power: pearson_finite(&geo.distances(), &power_db),
            k_se: if k_db.len() == eta.len() { pearson_finite(&k_db, &eta) } else { None },
            s_tau_se: if s_tau.len() == eta.len() { pearson_finite(&s_tau, &eta) } else { None },
        });
        match subband_check(csi, cfg.n_bands) {
            Ok(s) => inputs.subband = Some(s),
            Err(e @ Error::BandTooNarrow { .. }) => {
                skipped.insert("subband".into(), e.to_string());
            }
            Err(e) => return Err(StageError { stage: Stage::Metrics, source: e }),
        }
    }

    inputs.skipped.extend(skipped);
    inputs.geometry = Some(geometry_summary);
    inputs.envelope = Some(envelope_summary);
    match coherence_summary {
        Some(c) => inputs.coherence = Some(c),
        None => {
            inputs.skipped.insert("coherence".into(), "no finite coherence bandwidth".into());
        }
    }
    inputs.stationarity = stationarity_summary;
    let report = build_report(inputs).at(Stage::Report)?;
    if let Some(dir) = out {
        let json = to_json(&report).at(Stage::Report)?;
        std::fs::write(dir.join(REPORT_FILE), json).map_err(Error::from).at(Stage::Report)?;
    }
    Ok(Analysis {
        report,
        geometry: geo,
        power,
        ls_window,
        coherence,
        regions,
        plan,
        delay,
        fits,
        kfactor,
        height_fit,
        se,
    })
}

fn summarize_geometry(geo: &GeometrySeries, heights: &[f64]) -> GeometrySummary {
    let range = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
    };
    let (h_lo, h_hi) = range(heights);
    let (e_lo, e_hi) = range(&geo.elevations());
    let (d_lo, d_hi) = range(&geo.distances());
    GeometrySummary {
        mean_step_m: geo.mean_step_m,
        mean_velocity_mps: geo.mean_velocity_mps,
        total_path_m: geo.total_path_length(),
        height_min_m: h_lo,
        height_max_m: h_hi,
        elevation_min_deg: e_lo.to_degrees(),
        elevation_max_deg: e_hi.to_degrees(),
        d3d_min_m: d_lo,
        d3d_max_m: d_hi,
    }
}

fn fit_samples(a_ssf: &[f64], cap: Option<usize>, seed: u64) -> Vec<f64> {
    match cap {
        Some(k) if k < a_ssf.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, a_ssf.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| a_ssf[i]).collect()
        }
        _ => a_ssf.to_vec(),
    }
}

fn write_power_vs_angle(path: &Path, geo: &GeometrySeries, power: &PowerSeries) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,elevation_deg,azimuth_deg,d3d_m,power_db")?;
    for (n, (g, p)) in geo.samples.iter().zip(&power.p_clean).enumerate() {
        writeln!(
            w,
            "{n},{},{},{},{}",
            g.elevation_rad.to_degrees(),
            g.azimuth_rad.to_degrees(),
            g.d3d_m,
            10.0 * p.log10()
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_cdf_csv(path: &Path, samples: &[f64], fits: &[FitResult]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let names: Vec<&str> = fits.iter().map(|f| f.model.name()).collect();
    writeln!(w, "x,empirical,{}", names.join(","))?;
    for (x, emp, models) in cdf_table(samples, fits, CDF_POINTS) {
        let cols: Vec<String> = models.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{x},{emp},{}", cols.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_kfactor_csv(path: &Path, k: &[KfactorSample]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "window_index,t_center,k_linear,k_db,height_m,elevation_deg,azimuth_deg,status")?;
    for s in k {
        let status = match s.status {
            KStatus::Valid => "valid",
            KStatus::Degenerate => "degenerate",
            KStatus::MomentMismatch => "moment_mismatch",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{status}",
            s.window_index,
            s.t_center,
            s.k_linear,
            s.k_db,
            s.height_m,
            s.elevation_rad.to_degrees(),
            s.azimuth_rad.to_degrees()
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_k_height_csv(path: &Path, k: &[KfactorSample], h_min: f64, fit: Option<&HeightFit>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "height_m,k_db,k_db_fit")?;
    for s in k.iter().filter(|s| s.status == KStatus::Valid && s.height_m >= h_min) {
        let fitted = fit.map(|f| f.k_db(s.height_m).to_string()).unwrap_or_default();
        writeln!(w, "{},{},{fitted}", s.height_m, s.k_db)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig {
            gamma: 1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::ConfigInvalid(_))));
        assert!("fading".parse::<Stage>().is_ok());
        assert!("geometry".parse::<Stage>().is_err());
    }

    #[test]
    fn fit_subsample_is_seeded() {
        let a: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let s1 = fit_samples(&a, Some(100), 4);
        assert_eq!(s1, fit_samples(&a, Some(100), 4));
        assert_ne!(s1, fit_samples(&a, Some(100), 5));
        assert_eq!(fit_samples(&a, None, 0), a);
    }
}
