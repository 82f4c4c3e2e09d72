//! Synthetic trajectory-aware Rician multipath CSI with known ground truth.
//!
//! Each snapshot is a deterministic line-of-sight term (phase from the 3D
//! range and the array element offsets) plus i.i.d. complex Gaussian diffuse
//! taps and additive noise. Snapshot `n` draws from its own ChaCha stream, so
//! serial and parallel generation agree bit for bit.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CsiTensor, Dataset, RadioMeta, TrajectorySeries};
use crate::error::{Error, Result};
use crate::geometry::{relative_geometry, GeometrySample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryPattern {
    HorizontalZigzag,
    VerticalAscent,
    Custom,
}

impl FromStr for TrajectoryPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal-zigzag" => Ok(Self::HorizontalZigzag),
            "vertical-ascent" => Ok(Self::VerticalAscent),
            "custom" => Ok(Self::Custom),
            other => Err(Error::UnsupportedPattern(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltitudeSpec {
    Fixed(f64),
    Ramp { from: f64, to: f64 },
}

fn default_lane_spacing() -> f64 {
    5.0
}

fn default_start() -> [f64; 2] {
    [10.0, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// `horizontal-zigzag`, `vertical-ascent` or `custom`.
    pub pattern: String,
    /// Length of one scanning leg.
    pub extent_m: f64,
    /// Lateral offset between horizontal legs.
    #[serde(default = "default_lane_spacing")]
    pub lane_spacing_m: f64,
    pub altitude: AltitudeSpec,
    pub speed_mps: f64,
    /// Horizontal starting point (x, y).
    #[serde(default = "default_start")]
    pub start_xy: [f64; 2],
    #[serde(default)]
    pub waypoints: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KFactorProfile {
    ConstantDb(f64),
    /// K_dB(h) = a·ln(h) + b with h the terminal height in meters.
    HeightLog { a: f64, b: f64 },
    /// No line-of-sight power (K = 0).
    Rayleigh,
    /// Deterministic channel: no diffuse power.
    LosOnly,
}

impl KFactorProfile {
    pub fn k_linear(&self, height_m: f64) -> f64 {
        match *self {
            Self::ConstantDb(db) => 10f64.powf(db / 10.0),
            Self::HeightLog { a, b } => 10f64.powf((a * height_m.max(1.0).ln() + b) / 10.0),
            Self::Rayleigh => 0.0,
            Self::LosOnly => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapSpec {
    pub delay_s: f64,
    pub power_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_wavelengths: f64,
}

fn default_noise() -> Option<f64> {
    Some(-37.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub meta: RadioMeta,
    pub n_snapshots: usize,
    pub trajectory: TrajectorySpec,
    pub k_factor: KFactorProfile,
    pub taps: Vec<TapSpec>,
    /// Planar array in the horizontal plane; defaults to a half-wavelength
    /// linear array when absent.
    #[serde(default)]
    pub array: Option<ArraySpec>,
    /// Noise power relative to the unit mean channel power, dB; `null` disables.
    #[serde(default = "default_noise")]
    pub noise_floor_db: Option<f64>,
    /// Amplitude scales as (d3D / 1 m)^(−n/2); 0 disables path loss.
    #[serde(default)]
    pub path_loss_exponent: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::ConfigInvalid(format!("synth config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.n_snapshots < 2 {
            return Err(Error::ConfigInvalid("n_snapshots must be >= 2".into()));
        }
        if self.taps.is_empty() {
            return Err(Error::ConfigInvalid("at least one tap is required".into()));
        }
        let max_delay = self.meta.n_subcarriers as f64 / self.meta.bandwidth_hz;
        for (i, tap) in self.taps.iter().enumerate() {
            if !(tap.delay_s >= 0.0 && tap.delay_s < max_delay) {
                return Err(Error::ConfigInvalid(format!(
                    "tap {i}: delay {} s outside [0, {max_delay})",
                    tap.delay_s
                )));
            }
            if !(tap.power_db <= 0.0) {
                return Err(Error::ConfigInvalid(format!(
                    "tap {i}: relative power {} dB must be <= 0",
                    tap.power_db
                )));
            }
        }
        if let Some(a) = &self.array {
            if a.rows * a.cols != self.meta.n_antennas {
                return Err(Error::ConfigInvalid(format!(
                    "array {}x{} does not match n_antennas {}",
                    a.rows, a.cols, self.meta.n_antennas
                )));
            }
            if !(a.spacing_wavelengths > 0.0) {
                return Err(Error::ConfigInvalid("array spacing must be > 0".into()));
            }
        }
        if let KFactorProfile::ConstantDb(db) = self.k_factor {
            if !db.is_finite() {
                return Err(Error::ConfigInvalid("constant K must be finite".into()));
            }
        }
        if !(self.path_loss_exponent >= 0.0) {
            return Err(Error::ConfigInvalid("path_loss_exponent must be >= 0".into()));
        }
        if !(self.trajectory.speed_mps > 0.0) {
            return Err(Error::ConfigInvalid("speed_mps must be > 0".into()));
        }
        TrajectoryPattern::from_str(&self.trajectory.pattern)?;
        Ok(())
    }

    fn array(&self) -> ArraySpec {
        self.array.unwrap_or(ArraySpec {
            rows: 1,
            cols: self.meta.n_antennas,
            spacing_wavelengths: 0.5,
        })
    }

    /// Tap powers normalized to sum to one.
    fn tap_powers(&self) -> Vec<f64> {
        let raw: Vec<f64> = self
            .taps
            .iter()
            .map(|t| 10f64.powf(t.power_db / 10.0))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

/// Per-snapshot truth recorded while generating.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    /// LoS-to-diffuse power ratio; infinite for LoS-only channels.
    pub k_linear: Vec<f64>,
    pub rms_delay_spread_s: Vec<f64>,
    pub geometry: Vec<GeometrySample>,
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let mut json = serde_json::to_vec(truth)?;
    json.push(b'\n');
    std::fs::write(path, json)?;
    Ok(())
}

struct Polyline {
    points: Vec<[f64; 3]>,
}

impl Polyline {
    fn sample(&self, n: usize, step: f64) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(n);
        let mut seg = 0usize;
        let mut seg_start = 0.0;
        for i in 0..n {
            let s = i as f64 * step;
            loop {
                if seg + 1 >= self.points.len() {
                    out.push(*self.points.last().unwrap());
                    break;
                }
                let (a, b) = (self.points[seg], self.points[seg + 1]);
                let len = dist(a, b);
                if s <= seg_start + len || seg + 2 == self.points.len() {
                    let w = if len > 0.0 {
                        ((s - seg_start) / len).min(1.0)
                    } else {
                        1.0
                    };
                    out.push([
                        a[0] + w * (b[0] - a[0]),
                        a[1] + w * (b[1] - a[1]),
                        a[2] + w * (b[2] - a[2]),
                    ]);
                    break;
                }
                seg_start += len;
                seg += 1;
            }
        }
        out
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Block-wave scanning path sampled every `speed / rate` meters of arc length.
///
/// Horizontal zig-zags repeat legs of `extent_m` along ±x with lane changes
/// along +y at fixed height. Vertical ascents alternate climbs and ±x legs in
/// the x–z plane, using the whole number of legs that makes the path end at
/// the top altitude. Custom paths follow `waypoints` and hover at the end.
pub fn generate_trajectory(spec: &TrajectorySpec, n: usize, rate_hz: f64) -> Result<TrajectorySeries> {
    let pattern = TrajectoryPattern::from_str(&spec.pattern)?;
    if n < 2 {
        return Err(Error::ConfigInvalid("trajectory needs at least 2 samples".into()));
    }
    if !(spec.speed_mps > 0.0) || !(rate_hz > 0.0) {
        return Err(Error::ConfigInvalid("speed and rate must be > 0".into()));
    }
    let step = spec.speed_mps / rate_hz;
    let total = step * (n - 1) as f64;
    let [x0, y0] = spec.start_xy;
    let points = match pattern {
        TrajectoryPattern::HorizontalZigzag => {
            let h = match spec.altitude {
                AltitudeSpec::Fixed(h) => h,
                AltitudeSpec::Ramp { from, .. } => from,
            };
            if !(spec.extent_m > 0.0) {
                return Err(Error::ConfigInvalid("extent_m must be > 0".into()));
            }
            let mut pts = vec![[x0, y0, h]];
            let (mut x, mut y, mut len, mut dir) = (x0, y0, 0.0, 1.0);
            while len < total + spec.extent_m {
                x += dir * spec.extent_m;
                pts.push([x, y, h]);
                y += spec.lane_spacing_m;
                pts.push([x, y, h]);
                len += spec.extent_m + spec.lane_spacing_m;
                dir = -dir;
            }
            pts
        }
        TrajectoryPattern::VerticalAscent => {
            let (from, to) = match spec.altitude {
                AltitudeSpec::Ramp { from, to } => (from, to),
                AltitudeSpec::Fixed(h) => (h, h),
            };
            let climb = to - from;
            if climb < 0.0 {
                return Err(Error::ConfigInvalid("ascent must not descend".into()));
            }
            if total <= climb || spec.extent_m <= 0.0 {
                vec![[x0, y0, from], [x0, y0, from + total.max(climb)]]
            } else {
                let legs = ((total - climb) / spec.extent_m).round().max(1.0);
                let leg = (total - climb) / legs;
                let rise = climb / legs;
                let mut pts = vec![[x0, y0, from]];
                let (mut x, mut z, mut dir) = (x0, from, 1.0);
                for _ in 0..legs as usize {
                    z += rise;
                    pts.push([x, y0, z]);
                    x += dir * leg;
                    pts.push([x, y0, z]);
                    dir = -dir;
                }
                pts
            }
        }
        TrajectoryPattern::Custom => match &spec.waypoints {
            Some(w) if !w.is_empty() => w.clone(),
            _ => return Err(Error::ConfigInvalid("custom pattern needs waypoints".into())),
        },
    };
    let positions = Polyline { points }.sample(n, step);
    let timestamps = (0..n).map(|i| i as f64 / rate_hz).collect();
    TrajectorySeries::new(timestamps, positions)
}

fn snapshot_rng(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

fn complex_normal(rng: &mut ChaCha8Rng, power: f64) -> Complex64 {
    let scale = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// RMS delay spread of a discrete power delay profile.
pub fn pdp_rms_delay_spread(delays_s: &[f64], powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mean: f64 = delays_s.iter().zip(powers).map(|(t, p)| t * p).sum::<f64>() / total;
    let second: f64 = delays_s.iter().zip(powers).map(|(t, p)| t * t * p).sum::<f64>() / total;
    (second - mean * mean).max(0.0).sqrt()
}

pub fn generate_csi(cfg: &SynthConfig, traj: &TrajectorySeries) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let meta = &cfg.meta;
    let (m_count, f_count) = (meta.n_antennas, meta.n_subcarriers);
    let n_count = traj.len();
    let lambda = meta.wavelength_m();
    let spacing = meta.subcarrier_spacing_hz();
    let array = cfg.array();
    let tap_powers = cfg.tap_powers();
    let tap_delays: Vec<f64> = cfg.taps.iter().map(|t| t.delay_s).collect();
    let noise_power = cfg.noise_floor_db.map(|db| 10f64.powf(db / 10.0));

    // Frequency responses of the diffuse taps, shared by every snapshot.
    let tap_response: Vec<Vec<Complex64>> = tap_delays
        .iter()
        .map(|&tau| {
            (0..f_count)
                .map(|f| Complex64::from_polar(1.0, -2.0 * PI * f as f64 * spacing * tau))
                .collect()
        })
        .collect();
    let element_offsets: Vec<(f64, f64)> = (0..m_count)
        .map(|m| {
            let (r, c) = (m / array.cols, m % array.cols);
            (
                (r as f64 - (array.rows as f64 - 1.0) / 2.0) * array.spacing_wavelengths,
                (c as f64 - (array.cols as f64 - 1.0) / 2.0) * array.spacing_wavelengths,
            )
        })
        .collect();

    let geometry: Vec<GeometrySample> = traj
        .positions
        .iter()
        .map(|p| relative_geometry(*p, meta.bs_position))
        .collect::<Result<_>>()?;

    let per_snapshot = m_count * f_count;
    let mut data = vec![Complex32::new(0.0, 0.0); n_count * per_snapshot];
    let mut truth_k = vec![0.0; n_count];
    let mut truth_s = vec![0.0; n_count];

    data.par_chunks_mut(per_snapshot)
        .zip(truth_k.par_iter_mut())
        .zip(truth_s.par_iter_mut())
        .enumerate()
        .for_each(|(n, ((out, k_out), s_out))| {
            let mut rng = snapshot_rng(cfg.seed, n);
            let geo = &geometry[n];
            let height = traj.positions[n][2];
            let k = cfg.k_factor.k_linear(height);
            let (los_power, diffuse_power) = if k.is_infinite() {
                (1.0, 0.0)
            } else {
                (k / (k + 1.0), 1.0 / (k + 1.0))
            };
            let amplitude = if cfg.path_loss_exponent > 0.0 {
                geo.d3d_m.powf(-cfg.path_loss_exponent / 2.0)
            } else {
                1.0
            };
            let (cos_el, sin_az, cos_az) = (
                geo.elevation_rad.cos(),
                geo.azimuth_rad.sin(),
                geo.azimuth_rad.cos(),
            );
            let (ux, uy) = (cos_el * cos_az, cos_el * sin_az);
            let range_phase = -2.0 * PI * (geo.d3d_m / lambda).fract();

            for (m, &(ox, oy)) in element_offsets.iter().enumerate() {
                let los = Complex64::from_polar(
                    los_power.sqrt(),
                    range_phase + 2.0 * PI * (ux * ox + uy * oy),
                );
                let coeffs: Vec<Complex64> = tap_powers
                    .iter()
                    .map(|&p| complex_normal(&mut rng, p * diffuse_power))
                    .collect();
                for f in 0..f_count {
                    let mut h = los;
                    for (c, resp) in coeffs.iter().zip(&tap_response) {
                        h += c * resp[f];
                    }
                    h *= amplitude;
                    if let Some(np) = noise_power {
                        h += complex_normal(&mut rng, np);
                    }
                    out[m * f_count + f] = Complex32::new(h.re as f32, h.im as f32);
                }
            }

            *k_out = k;
            let mut delays = Vec::with_capacity(tap_delays.len() + 1);
            let mut powers = Vec::with_capacity(tap_delays.len() + 1);
            delays.push(0.0);
            powers.push(los_power);
            for (tau, p) in tap_delays.iter().zip(&tap_powers) {
                delays.push(*tau);
                powers.push(p * diffuse_power);
            }
            *s_out = pdp_rms_delay_spread(&delays, &powers);
        });

    let csi = CsiTensor::new(n_count, m_count, f_count, data)?;
    let dataset = Dataset::new(meta.clone(), csi, traj.clone())?;
    Ok((
        dataset,
        GroundTruth {
            k_linear: truth_k,
            rms_delay_spread_s: truth_s,
            geometry,
        },
    ))
}

/// Trajectory plus CSI from one configuration.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let traj = generate_trajectory(&cfg.trajectory, cfg.n_snapshots, cfg.meta.snapshot_rate_hz)?;
    generate_csi(cfg, &traj)
}
