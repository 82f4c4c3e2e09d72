//! Measured (or synthetic) CSI datasets and their on-disk directory format.
//!
//! A dataset directory holds three files:
//!
//! - `header.json`: dimensions and radio parameters,
//! - `channel.bin`: little-endian `f32` (re, im) pairs in n → m → f order,
//! - `trajectory.csv`: GPS fixes with header `t,x,y,z` (seconds, meters).
//!
//! GPS timestamps share the snapshot clock, which starts at `t = 0` for the
//! first CSI snapshot and ticks at `snapshot_rate_hz`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Only layout currently defined for `channel.bin`.
pub const LAYOUT_F32LE: &str = "n_m_f_interleaved_f32le";

pub const HEADER_FILE: &str = "header.json";
pub const CHANNEL_FILE: &str = "channel.bin";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioMeta {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub n_antennas: usize,
    pub snapshot_rate_hz: f64,
    pub bs_position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
}

impl RadioMeta {
    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers < 2 {
            return Err(Error::ConfigInvalid(format!(
                "n_subcarriers must be >= 2, got {}",
                self.n_subcarriers
            )));
        }
        if self.n_antennas < 1 {
            return Err(Error::ConfigInvalid("n_antennas must be >= 1".into()));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::ConfigInvalid("bandwidth_hz must be > 0".into()));
        }
        if !(self.snapshot_rate_hz > 0.0 && self.snapshot_rate_hz.is_finite()) {
            return Err(Error::ConfigInvalid("snapshot_rate_hz must be > 0".into()));
        }
        if !(self.carrier_freq_hz > 0.0 && self.carrier_freq_hz.is_finite()) {
            return Err(Error::ConfigInvalid("carrier_freq_hz must be > 0".into()));
        }
        if self.bs_position.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigInvalid("bs_position must be finite".into()));
        }
        Ok(())
    }

    /// Carrier wavelength in meters.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_subcarriers as f64
    }

    /// Delay-bin width of the inverse DFT over subcarriers.
    pub fn tap_spacing_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }
}

/// N×M×F complex channel gains, stored snapshot-major as on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    n_snapshots: usize,
    n_antennas: usize,
    n_subcarriers: usize,
    data: Vec<Complex32>,
}

impl CsiTensor {
    pub fn new(
        n_snapshots: usize,
        n_antennas: usize,
        n_subcarriers: usize,
        data: Vec<Complex32>,
    ) -> Result<Self> {
        let expected = n_snapshots * n_antennas * n_subcarriers;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} complex samples ({n_snapshots}x{n_antennas}x{n_subcarriers}), got {}",
                data.len()
            )));
        }
        Ok(Self {
            n_snapshots,
            n_antennas,
            n_subcarriers,
            data,
        })
    }

    pub fn zeros(n_snapshots: usize, n_antennas: usize, n_subcarriers: usize) -> Self {
        Self {
            n_snapshots,
            n_antennas,
            n_subcarriers,
            data: vec![Complex32::new(0.0, 0.0); n_snapshots * n_antennas * n_subcarriers],
        }
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_snapshots
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_snapshots, self.n_antennas, self.n_subcarriers)
    }

    pub fn data(&self) -> &[Complex32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex32] {
        &mut self.data
    }

    /// The M×F matrix of snapshot `n`, antenna-major (`m * F + f`).
    pub fn snapshot(&self, n: usize) -> &[Complex32] {
        let len = self.n_antennas * self.n_subcarriers;
        &self.data[n * len..(n + 1) * len]
    }

    pub fn snapshot_mut(&mut self, n: usize) -> &mut [Complex32] {
        let len = self.n_antennas * self.n_subcarriers;
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Snapshot `n` widened to double precision.
    pub fn snapshot_f64(&self, n: usize) -> Vec<Complex64> {
        self.snapshot(n)
            .iter()
            .map(|c| Complex64::new(c.re as f64, c.im as f64))
            .collect()
    }

    pub fn get(&self, n: usize, m: usize, f: usize) -> Complex32 {
        self.data[(n * self.n_antennas + m) * self.n_subcarriers + f]
    }

    /// Fails on the first NaN/Inf entry, reporting its position.
    pub fn validate_finite(&self) -> Result<()> {
        let per_snapshot = self.n_antennas * self.n_subcarriers;
        match self
            .data
            .iter()
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            None => Ok(()),
            Some(idx) => Err(Error::NonFiniteSample {
                snapshot: idx / per_snapshot,
                antenna: (idx % per_snapshot) / self.n_subcarriers,
                subcarrier: idx % self.n_subcarriers,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySeries {
    pub timestamps: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
}

impl TrajectorySeries {
    pub fn new(timestamps: Vec<f64>, positions: Vec<[f64; 3]>) -> Result<Self> {
        let traj = Self {
            timestamps,
            positions,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.positions.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} timestamps for {} positions",
                self.timestamps.len(),
                self.positions.len()
            )));
        }
        if let Some(i) = self
            .timestamps
            .windows(2)
            .position(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::NonMonotonicTimestamps(i + 1));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTrajectory(format!(
                    "non-finite position at row {i}"
                )));
            }
            if p[2] < 0.0 {
                return Err(Error::InvalidTrajectory(format!(
                    "negative height {} at row {i}",
                    p[2]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: RadioMeta,
    pub csi: CsiTensor,
    pub trajectory: TrajectorySeries,
}

impl Dataset {
    pub fn new(meta: RadioMeta, csi: CsiTensor, trajectory: TrajectorySeries) -> Result<Self> {
        let ds = Self {
            meta,
            csi,
            trajectory,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_snapshots(&self) -> usize {
        self.csi.n_snapshots()
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.csi.n_antennas() != self.meta.n_antennas
            || self.csi.n_subcarriers() != self.meta.n_subcarriers
        {
            return Err(Error::DimensionMismatch(format!(
                "CSI is {}x{} per snapshot but metadata declares {}x{}",
                self.csi.n_antennas(),
                self.csi.n_subcarriers(),
                self.meta.n_antennas,
                self.meta.n_subcarriers
            )));
        }
        if self.trajectory.len() != self.csi.n_snapshots() {
            return Err(Error::DimensionMismatch(format!(
                "{} trajectory positions for {} snapshots",
                self.trajectory.len(),
                self.csi.n_snapshots()
            )));
        }
        self.trajectory.validate()?;
        self.csi.validate_finite()
    }
}

/// Contents of `header.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub n_snapshots: usize,
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub snapshot_rate_hz: f64,
    pub bs_position: [f64; 3],
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
}

impl Header {
    pub fn from_meta(meta: &RadioMeta, n_snapshots: usize) -> Self {
        Self {
            n_snapshots,
            n_antennas: meta.n_antennas,
            n_subcarriers: meta.n_subcarriers,
            carrier_freq_hz: meta.carrier_freq_hz,
            bandwidth_hz: meta.bandwidth_hz,
            snapshot_rate_hz: meta.snapshot_rate_hz,
            bs_position: meta.bs_position,
            layout: LAYOUT_F32LE.to_string(),
            tx_power_dbm: meta.tx_power_dbm,
        }
    }

    pub fn meta(&self) -> RadioMeta {
        RadioMeta {
            carrier_freq_hz: self.carrier_freq_hz,
            bandwidth_hz: self.bandwidth_hz,
            n_subcarriers: self.n_subcarriers,
            n_antennas: self.n_antennas,
            snapshot_rate_hz: self.snapshot_rate_hz,
            bs_position: self.bs_position,
            tx_power_dbm: self.tx_power_dbm,
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

pub fn read_header(dir: &Path) -> Result<Header> {
    let path = dir.join(HEADER_FILE);
    require(&path)?;
    let header: Header = serde_json::from_slice(&fs::read(&path)?)?;
    if header.layout != LAYOUT_F32LE {
        return Err(Error::ConfigInvalid(format!(
            "unsupported layout {:?}",
            header.layout
        )));
    }
    header.meta().validate()?;
    Ok(header)
}

pub fn decode_channel(bytes: &[u8], n: usize, m: usize, f: usize) -> Result<CsiTensor> {
    let expected = n * m * f * 8;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "header declares {n}x{m}x{f} ({expected} bytes) but channel.bin holds {} bytes",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    CsiTensor::new(n, m, f, data)
}

pub fn encode_channel(csi: &CsiTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(csi.data().len() * 8);
    for c in csi.data() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
}

/// Reads GPS fixes without resampling.
pub fn read_trajectory_csv(path: &Path) -> Result<TrajectorySeries> {
    require(path)?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["t", "x", "y", "z"] {
        return Err(Error::InvalidTrajectory(format!(
            "expected header t,x,y,z, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut timestamps = Vec::new();
    let mut positions = Vec::new();
    for row in reader.deserialize() {
        let row: TrajectoryRow = row?;
        timestamps.push(row.t);
        positions.push([row.x, row.y, row.z]);
    }
    if positions.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    TrajectorySeries::new(timestamps, positions)
}

pub fn write_trajectory_csv(path: &Path, traj: &TrajectorySeries) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for (t, p) in traj.timestamps.iter().zip(&traj.positions) {
        writer.serialize(TrajectoryRow {
            t: *t,
            x: p[0],
            y: p[1],
            z: p[2],
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Piecewise-linear interpolation of GPS fixes onto the snapshot clock
/// `t_n = n / snapshot_rate_hz`; times outside the GPS span clamp to the
/// first/last fix.
pub fn align_trajectory(
    raw_gps: &TrajectorySeries,
    meta: &RadioMeta,
    n: usize,
) -> Result<TrajectorySeries> {
    if raw_gps.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    raw_gps.validate()?;
    let ts = &raw_gps.timestamps;
    let ps = &raw_gps.positions;
    let mut timestamps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    // Snapshot times are increasing, so the segment cursor only moves forward.
    let mut seg = 0usize;
    for i in 0..n {
        let t = i as f64 / meta.snapshot_rate_hz;
        let p = if t <= ts[0] {
            ps[0]
        } else if t >= ts[ts.len() - 1] {
            ps[ps.len() - 1]
        } else {
            while ts[seg + 1] < t {
                seg += 1;
            }
            let (t0, t1) = (ts[seg], ts[seg + 1]);
            let w = (t - t0) / (t1 - t0);
            let (a, b) = (ps[seg], ps[seg + 1]);
            [
                a[0] + w * (b[0] - a[0]),
                a[1] + w * (b[1] - a[1]),
                a[2] + w * (b[2] - a[2]),
            ]
        };
        timestamps.push(t);
        positions.push(p);
    }
    Ok(TrajectorySeries {
        timestamps,
        positions,
    })
}

/// Loads and validates a dataset directory, aligning GPS to the snapshot clock.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let header = read_header(dir)?;
    let channel_path = dir.join(CHANNEL_FILE);
    let traj_path = dir.join(TRAJECTORY_FILE);
    require(&channel_path)?;
    require(&traj_path)?;
    let csi = decode_channel(
        &fs::read(&channel_path)?,
        header.n_snapshots,
        header.n_antennas,
        header.n_subcarriers,
    )?;
    csi.validate_finite()?;
    let meta = header.meta();
    let raw = read_trajectory_csv(&traj_path)?;
    let trajectory = align_trajectory(&raw, &meta, header.n_snapshots)?;
    Dataset::new(meta, csi, trajectory)
}

/// Writes the directory format; the trajectory is written one row per snapshot.
pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let header = Header::from_meta(&ds.meta, ds.n_snapshots());
    let mut json = serde_json::to_vec_pretty(&header)?;
    json.push(b'\n');
    fs::write(dir.join(HEADER_FILE), json)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(CHANNEL_FILE))?);
    w.write_all(&encode_channel(&ds.csi))?;
    w.flush()?;
    write_trajectory_csv(&dir.join(TRAJECTORY_FILE), &ds.trajectory)
}
