//! Propagation geometry between the aerial terminal and the ground station.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dataset::TrajectorySeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometrySample {
    pub d2d_m: f64,
    pub d3d_m: f64,
    /// Elevation, `atan2(Δz, d2D)`, in [−π/2, π/2].
    pub elevation_rad: f64,
    /// Four-quadrant azimuth in (−π, π]; zero at zenith.
    pub azimuth_rad: f64,
    /// Path increment from the previous sample (0 for the first).
    pub step_m: f64,
    /// Set when d2D = 0 and the azimuth is undefined.
    pub zenith: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometrySeries {
    pub samples: Vec<GeometrySample>,
    pub mean_step_m: f64,
    pub mean_velocity_mps: f64,
}

impl GeometrySeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn elevations(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.elevation_rad).collect()
    }

    pub fn azimuths(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.azimuth_rad).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.d3d_m).collect()
    }

    /// Path length traveled between samples `from` and `to` (inclusive bounds).
    pub fn path_length(&self, from: usize, to: usize) -> f64 {
        if to <= from {
            return 0.0;
        }
        self.samples[from + 1..=to].iter().map(|s| s.step_m).sum()
    }

    pub fn total_path_length(&self) -> f64 {
        self.samples.iter().map(|s| s.step_m).sum()
    }
}

pub fn relative_geometry(p: [f64; 3], p_bs: [f64; 3]) -> Result<GeometrySample> {
    let dx = p[0] - p_bs[0];
    let dy = p[1] - p_bs[1];
    let dz = p[2] - p_bs[2];
    let d2d = dx.hypot(dy);
    let d3d = d2d.hypot(dz);
    if d3d == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let zenith = d2d == 0.0;
    let mut azimuth = if zenith { 0.0 } else { dy.atan2(dx) };
    // atan2 returns −π for (−x, −0.0); fold onto the half-open range.
    if azimuth == -std::f64::consts::PI {
        azimuth = std::f64::consts::PI;
    }
    Ok(GeometrySample {
        d2d_m: d2d,
        d3d_m: d3d,
        elevation_rad: dz.atan2(d2d),
        azimuth_rad: azimuth,
        step_m: 0.0,
        zenith,
    })
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Per-sample geometry plus the mean step over the N−1 increments.
pub fn geometry_series(
    traj: &TrajectorySeries,
    p_bs: [f64; 3],
    rate_hz: f64,
) -> Result<GeometrySeries> {
    let mut samples = Vec::with_capacity(traj.len());
    for (i, p) in traj.positions.iter().enumerate() {
        let mut s = relative_geometry(*p, p_bs)?;
        if i > 0 {
            s.step_m = distance(*p, traj.positions[i - 1]);
        }
        samples.push(s);
    }
    let mean_step_m = if samples.len() > 1 {
        samples.iter().map(|s| s.step_m).sum::<f64>() / (samples.len() - 1) as f64
    } else {
        0.0
    };
    Ok(GeometrySeries {
        samples,
        mean_step_m,
        mean_velocity_mps: mean_step_m * rate_hz,
    })
}

pub fn write_geometry_csv(path: &Path, geo: &GeometrySeries) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,d2d,d3d,theta_deg,phi_deg,step_m")?;
    for (n, s) in geo.samples.iter().enumerate() {
        writeln!(
            w,
            "{n},{},{},{},{},{}",
            s.d2d_m,
            s.d3d_m,
            s.elevation_rad.to_degrees(),
            s.azimuth_rad.to_degrees(),
            s.step_m
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Unwraps an angle sequence so consecutive differences stay within ±π.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let d = a - angles[i - 1];
            if d > PI {
                offset -= TAU;
            } else if d < -PI {
                offset += TAU;
            }
        }
        out.push(a + offset);
    }
    out
}
