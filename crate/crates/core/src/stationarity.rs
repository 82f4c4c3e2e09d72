//! Frequency stationarity (coherence bandwidth) and spatial stationarity
//! regions from the correlation matrix distance.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::dataset::{CsiTensor, RadioMeta};
use crate::error::{Error, Result};
use crate::geometry::{unwrap_angles, GeometrySeries};
use crate::metrics::check_window;

pub const DEFAULT_GAMMA: f64 = 0.20;
/// Snapshots per receive correlation matrix.
pub const DEFAULT_CORR_WINDOW: usize = 50;
pub const COHERENCE_LEVEL: f64 = 1.0 / std::f64::consts::E;
pub const MIN_REGIONS: usize = 10;
/// D_stat values below this percentile are discarded before taking L_min.
pub const OUTLIER_PERCENTILE: f64 = 5.0;

/// Complex frequency correlation over offsets −(F−1)..=F−1.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqCorrelation {
    values: Vec<Complex64>,
}

impl FreqCorrelation {
    pub fn n_subcarriers(&self) -> usize {
        self.values.len().div_ceil(2)
    }

    /// Correlation at subcarrier offset `delta`.
    pub fn at(&self, delta: isize) -> Complex64 {
        self.values[(self.n_subcarriers() as isize - 1 + delta) as usize]
    }

    pub fn offsets(&self) -> impl Iterator<Item = isize> {
        let f = self.n_subcarriers() as isize;
        -(f - 1)..f
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

struct CorrelationPlan {
    f: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CorrelationPlan {
    fn new(f: usize) -> Self {
        let len = (2 * f - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            f,
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    fn correlate(&self, h: &[Complex32], m: usize) -> Result<FreqCorrelation> {
        let (f, len) = (self.f, self.len);
        let mut spectrum = vec![0.0f64; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let mut power = vec![0.0f64; f];
        for a in 0..m {
            let row = &h[a * f..(a + 1) * f];
            for (k, c) in row.iter().enumerate() {
                let c = Complex64::new(c.re as f64, c.im as f64);
                buf[k] = c;
                power[k] += c.norm_sqr();
            }
            buf[f..].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            self.forward.process(&mut buf);
            for (s, c) in spectrum.iter_mut().zip(&buf) {
                *s += c.norm_sqr();
            }
        }
        let mut prefix = vec![0.0f64; f + 1];
        for k in 0..f {
            prefix[k + 1] = prefix[k] + power[k];
        }
        if !(prefix[f] > 0.0) {
            return Err(Error::ZeroPower);
        }
        for (c, s) in buf.iter_mut().zip(&spectrum) {
            *c = Complex64::new(*s, 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / len as f64;
        let mut values = vec![Complex64::new(0.0, 0.0); 2 * f - 1];
        values[f - 1] = Complex64::new(1.0, 0.0);
        for d in 1..f {
            // Σ_f H(f) H*(f+Δ) over the overlap, normalized by the power of
            // both overlapping segments.
            let lag = buf[d].conj() * scale;
            let lower = prefix[f - d];
            let upper = prefix[f] - prefix[d];
            let r = if lower > 0.0 && upper > 0.0 {
                lag / (lower * upper).sqrt()
            } else {
                Complex64::new(0.0, 0.0)
            };
            values[f - 1 + d] = r;
            values[f - 1 - d] = r.conj();
        }
        Ok(FreqCorrelation { values })
    }
}

/// Frequency correlation of one M×F snapshot, pooled over antennas.
pub fn freq_correlation(h: &[Complex32], n_antennas: usize) -> Result<FreqCorrelation> {
    if n_antennas == 0 || !h.len().is_multiple_of(n_antennas) {
        return Err(Error::DimensionMismatch(format!(
            "{} samples do not split into {n_antennas} antennas",
            h.len()
        )));
    }
    let f = h.len() / n_antennas;
    if f < 2 {
        return Err(Error::DimensionMismatch("need at least 2 subcarriers".into()));
    }
    CorrelationPlan::new(f).correlate(h, n_antennas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceResult {
    pub b_coh_hz: f64,
    /// First positive offset where |R| reaches 1/e.
    pub crossing_pos_hz: f64,
    /// First negative offset where |R| reaches 1/e (a negative number).
    pub crossing_neg_hz: f64,
    pub saturated: bool,
}

/// First crossing of `level` along `mags[0..]`, in fractional steps.
fn first_crossing(mags: impl Iterator<Item = f64>, level: f64) -> Option<f64> {
    let mut prev: Option<f64> = None;
    for (i, m) in mags.enumerate() {
        if m <= level {
            return Some(match prev {
                Some(p) if p > m => (i - 1) as f64 + (p - level) / (p - m),
                _ => i as f64,
            });
        }
        prev = Some(m);
    }
    None
}

pub fn coherence_bandwidth(r: &FreqCorrelation, meta: &RadioMeta) -> CoherenceResult {
    let f = r.n_subcarriers() as isize;
    let spacing = meta.subcarrier_spacing_hz();
    let limit = (f - 1) as f64;
    let pos = first_crossing((0..f).map(|d| r.at(d).norm()), COHERENCE_LEVEL);
    let neg = first_crossing((0..f).map(|d| r.at(-d).norm()), COHERENCE_LEVEL);
    let saturated = pos.is_none() || neg.is_none();
    let pos = pos.unwrap_or(limit) * spacing;
    let neg = -neg.unwrap_or(limit) * spacing;
    CoherenceResult {
        b_coh_hz: 0.5 * (pos - neg),
        crossing_pos_hz: pos,
        crossing_neg_hz: neg,
        saturated,
    }
}

/// Coherence bandwidth of every snapshot.
pub fn coherence_series(csi: &CsiTensor, meta: &RadioMeta) -> Result<Vec<CoherenceResult>> {
    let (n, m, f) = csi.shape();
    if f < 2 {
        return Err(Error::DimensionMismatch("need at least 2 subcarriers".into()));
    }
    let plan = CorrelationPlan::new(f);
    (0..n)
        .into_par_iter()
        .map(|t| {
            let r = plan.correlate(csi.snapshot(t), m)?;
            Ok(coherence_bandwidth(&r, meta))
        })
        .collect()
}

pub fn write_coherence_csv(path: &Path, coh: &[CoherenceResult]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,b_coh_hz,crossing_pos_hz,crossing_neg_hz,saturated")?;
    for (n, c) in coh.iter().enumerate() {
        writeln!(
            w,
            "{n},{},{},{},{}",
            c.b_coh_hz, c.crossing_pos_hz, c.crossing_neg_hz, c.saturated as u8
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Hermitian M×M matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    m: usize,
    data: Vec<Complex64>,
}

impl CorrMatrix {
    pub fn new(m: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {m}x{m} matrix",
                data.len()
            )));
        }
        Ok(Self { m, data })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.m + j]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.m).map(|i| self.get(i, i).re).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            m: self.m,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn is_hermitian(&self, eps: f64) -> bool {
        (0..self.m).all(|i| (0..self.m).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= eps))
    }
}

/// First subcarrier of a band of `b` subcarriers centered in a grid of `f`.
fn band_start(f: usize, b: usize) -> usize {
    (f - b) / 2
}

/// Receive correlation over snapshots `t_i..t_i+w` and `b` centered subcarriers.
pub fn receive_corr_matrix(csi: &CsiTensor, t_i: usize, w: usize, b: usize) -> Result<CorrMatrix> {
    let (n, m, f) = csi.shape();
    check_window(n, t_i, w)?;
    if b == 0 || b > f {
        return Err(Error::WindowOutOfRange(format!("band of {b} subcarriers in a grid of {f}")));
    }
    let lo = band_start(f, b);
    let mut acc = vec![Complex64::new(0.0, 0.0); m * m];
    let mut h = vec![Complex64::new(0.0, 0.0); m];
    for t in t_i..t_i + w {
        let snap = csi.snapshot(t);
        for k in lo..lo + b {
            for (a, v) in h.iter_mut().enumerate() {
                let c = snap[a * f + k];
                *v = Complex64::new(c.re as f64, c.im as f64);
            }
            for i in 0..m {
                let hi = h[i];
                for j in i..m {
                    acc[i * m + j] += hi * h[j].conj();
                }
            }
        }
    }
    let scale = 1.0 / (b * w) as f64;
    for i in 0..m {
        for j in i..m {
            let v = acc[i * m + j] * scale;
            acc[i * m + j] = v;
            acc[j * m + i] = v.conj();
        }
        acc[i * m + i].im = 0.0;
    }
    Ok(CorrMatrix { m, data: acc })
}

/// Correlation matrix distance, 1 − Tr(R₁R₂)/(‖R₁‖‖R₂‖), in [0, 1].
pub fn cmd(r1: &CorrMatrix, r2: &CorrMatrix) -> Result<f64> {
    if r1.m != r2.m {
        return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", r1.m, r1.m, r2.m, r2.m)));
    }
    let energy = |r: &CorrMatrix| r.data.iter().map(|c| c.re * c.re + c.im * c.im).sum::<f64>();
    let (e1, e2) = (energy(r1), energy(r2));
    if !(e1 > 0.0 && e2 > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    // For Hermitian matrices Tr(R₁R₂) = Σ R₁_ij conj(R₂_ij).
    let tr: f64 = r1
        .data
        .iter()
        .zip(&r2.data)
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum();
    // sqrt(e·e) == e exactly, so d(R, R) = 0 without rounding residue.
    Ok((1.0 - tr / (e1 * e2).sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityRegion {
    pub anchor: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub d_stat_m: f64,
    pub a_az_rad: f64,
    pub a_el_rad: f64,
    /// Subcarriers used for the correlation matrices.
    pub band: usize,
    /// The scan reached the first (last) window without crossing γ.
    pub open_start: bool,
    pub open_end: bool,
}

fn angular_spans(geo: &GeometrySeries, t_min: usize, t_max: usize) -> (f64, f64) {
    let seg = &geo.samples[t_min..=t_max];
    let az: Vec<f64> = seg.iter().filter(|s| !s.zenith).map(|s| s.azimuth_rad).collect();
    (span(&unwrap_angles(&az)), span(&seg.iter().map(|s| s.elevation_rad).collect::<Vec<_>>()))
}

fn span(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    hi - lo
}

/// Walks away from the anchor in strides of `w` until the CMD to the anchor
/// matrix reaches `gamma`. `matrix(start)` returns the window at `start`.
fn scan(
    n: usize,
    t_i: usize,
    w: usize,
    gamma: f64,
    matrix: impl Fn(usize) -> Result<CorrMatrix>,
) -> Result<(usize, usize, bool, bool)> {
    let anchor = matrix(t_i)?;
    let mut last_fwd = t_i;
    let mut open_end = true;
    let mut j = t_i + w;
    while j + w <= n {
        if cmd(&anchor, &matrix(j)?)? >= gamma {
            open_end = false;
            break;
        }
        last_fwd = j;
        j += w;
    }
    let mut first_bwd = t_i;
    let mut open_start = true;
    let mut j = t_i;
    while j >= w {
        j -= w;
        if cmd(&anchor, &matrix(j)?)? >= gamma {
            open_start = false;
            break;
        }
        first_bwd = j;
    }
    Ok((first_bwd, last_fwd + w - 1, open_start, open_end))
}

fn region_from_bounds(
    geo: &GeometrySeries,
    anchor: usize,
    band: usize,
    (t_min, t_max, open_start, open_end): (usize, usize, bool, bool),
) -> StationarityRegion {
    let (a_az, a_el) = angular_spans(geo, t_min, t_max);
    StationarityRegion {
        anchor,
        t_min,
        t_max,
        d_stat_m: geo.path_length(t_min, t_max),
        a_az_rad: a_az,
        a_el_rad: a_el,
        band,
        open_start,
        open_end,
    }
}

/// Stationarity region around the window starting at `t_i`.
pub fn stationarity_region(
    csi: &CsiTensor,
    geo: &GeometrySeries,
    t_i: usize,
    gamma: f64,
    w: usize,
    b: usize,
) -> Result<StationarityRegion> {
    check_gamma(gamma)?;
    if geo.len() != csi.n_snapshots() {
        return Err(Error::DimensionMismatch(format!(
            "{} geometry samples for {} snapshots",
            geo.len(),
            csi.n_snapshots()
        )));
    }
    let bounds = scan(csi.n_snapshots(), t_i, w, gamma, |j| receive_corr_matrix(csi, j, w, b))?;
    Ok(region_from_bounds(geo, t_i, b, bounds))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::ConfigInvalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Band size in subcarriers matching a coherence bandwidth.
pub fn band_for(b_coh_hz: f64, meta: &RadioMeta) -> usize {
    let f = meta.n_subcarriers;
    let b = (b_coh_hz / meta.subcarrier_spacing_hz()).round();
    if b.is_finite() {
        (b as usize).clamp(1, f)
    } else {
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionScanConfig {
    pub gamma: f64,
    pub window: usize,
    /// Anchors are placed every `anchor_stride` correlation windows.
    pub anchor_stride: usize,
}

impl Default for RegionScanConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            window: DEFAULT_CORR_WINDOW,
            anchor_stride: 1,
        }
    }
}

/// Regions for anchors on the window grid. Each anchor uses the band
/// implied by the coherence bandwidth at its first snapshot.
pub fn scan_regions(
    csi: &CsiTensor,
    geo: &GeometrySeries,
    coherence: &[CoherenceResult],
    meta: &RadioMeta,
    cfg: &RegionScanConfig,
) -> Result<Vec<StationarityRegion>> {
    check_gamma(cfg.gamma)?;
    let n = csi.n_snapshots();
    let w = cfg.window;
    if w == 0 || cfg.anchor_stride == 0 {
        return Err(Error::ConfigInvalid("window and anchor stride must be >= 1".into()));
    }
    if coherence.len() != n || geo.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} snapshots, {} coherence values, {} geometry samples",
            coherence.len(),
            geo.len()
        )));
    }
    let n_grid = n / w;
    if n_grid == 0 {
        return Err(Error::WindowExceedsSeries { window: w, len: n });
    }
    let anchors: Vec<(usize, usize)> = (0..n_grid)
        .step_by(cfg.anchor_stride)
        .map(|g| (g * w, band_for(coherence[g * w].b_coh_hz, meta)))
        .collect();
    let mut cache: BTreeMap<usize, Vec<OnceLock<CorrMatrix>>> = BTreeMap::new();
    for &(_, b) in &anchors {
        cache.entry(b).or_insert_with(|| (0..n_grid).map(|_| OnceLock::new()).collect());
    }
    anchors
        .par_iter()
        .map(|&(t_i, b)| {
            let slots = &cache[&b];
            let bounds = scan(n, t_i, w, cfg.gamma, |j| {
                let slot = &slots[j / w];
                if let Some(r) = slot.get() {
                    return Ok(r.clone());
                }
                let r = receive_corr_matrix(csi, j, w, b)?;
                Ok(slot.get_or_init(|| r).clone())
            })?;
            Ok(region_from_bounds(geo, t_i, b, bounds))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowPlan {
    pub l_min_m: f64,
    pub n_w: usize,
    pub hop: usize,
    pub n_regions: usize,
    pub n_discarded: usize,
}

impl WindowPlan {
    /// Window starts on the hop grid that fit inside `n` snapshots.
    pub fn starts(&self, n: usize) -> Vec<usize> {
        if self.n_w > n {
            return Vec::new();
        }
        (0..=n - self.n_w).step_by(self.hop).collect()
    }
}

/// Linear-interpolation percentile of a sorted slice.
fn percentile_sorted(x: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    x[lo] + (x[hi] - x[lo]) * (pos - lo as f64)
}

pub fn window_plan(regions: &[StationarityRegion], geo: &GeometrySeries) -> Result<WindowPlan> {
    if regions.len() < MIN_REGIONS {
        return Err(Error::InsufficientRegions {
            needed: MIN_REGIONS,
            got: regions.len(),
        });
    }
    if !(geo.mean_step_m > 0.0) {
        return Err(Error::ZeroMeanStep);
    }
    let mut d: Vec<f64> = regions.iter().map(|r| r.d_stat_m).collect();
    d.sort_by(f64::total_cmp);
    let cut = percentile_sorted(&d, OUTLIER_PERCENTILE);
    let kept: Vec<f64> = d.iter().copied().filter(|v| *v >= cut).collect();
    let l_min = kept[0];
    let n_w = ((l_min / geo.mean_step_m).round() as usize).max(2);
    Ok(WindowPlan {
        l_min_m: l_min,
        n_w,
        hop: n_w / 2,
        n_regions: regions.len(),
        n_discarded: regions.len() - kept.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpanStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl SpanStats {
    fn of(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            min: x.iter().copied().fold(f64::INFINITY, f64::min),
            max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std,
        }
    }
}

/// Region spans normalized by the range each quantity covers over the
/// whole trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpanSummary {
    pub elevation: SpanStats,
    pub azimuth: SpanStats,
    pub distance: SpanStats,
    pub total_elevation_range_rad: f64,
    pub total_azimuth_range_rad: f64,
    pub total_path_m: f64,
}

fn normalized(v: f64, total: f64) -> f64 {
    if total > 0.0 {
        (v / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn span_summary(regions: &[StationarityRegion], geo: &GeometrySeries) -> Result<SpanSummary> {
    if regions.is_empty() || geo.is_empty() {
        return Err(Error::InsufficientRegions { needed: 1, got: 0 });
    }
    let (az_total, el_total) = angular_spans(geo, 0, geo.len() - 1);
    let path_total = geo.total_path_length();
    let el: Vec<f64> = regions.iter().map(|r| normalized(r.a_el_rad, el_total)).collect();
    let az: Vec<f64> = regions.iter().map(|r| normalized(r.a_az_rad, az_total)).collect();
    let d: Vec<f64> = regions.iter().map(|r| normalized(r.d_stat_m, path_total)).collect();
    Ok(SpanSummary {
        elevation: SpanStats::of(&el),
        azimuth: SpanStats::of(&az),
        distance: SpanStats::of(&d),
        total_elevation_range_rad: el_total,
        total_azimuth_range_rad: az_total,
        total_path_m: path_total,
    })
}

pub fn write_regions_csv(path: &Path, regions: &[StationarityRegion]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "anchor,t_min,t_max,d_stat_m,a_az_deg,a_el_deg,band")?;
    for r in regions {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.anchor,
            r.t_min,
            r.t_max,
            r.d_stat_m,
            r.a_az_rad.to_degrees(),
            r.a_el_rad.to_degrees(),
            r.band
        )?;
    }
    w.flush()?;
    Ok(())
}
