//! Delay-domain view of the CSI: impulse responses, windowed power delay
//! profiles and RMS delay spread.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset::{CsiTensor, RadioMeta};
use crate::error::{Error, Result};
use crate::metrics::check_window;

/// PDP bins more than this far below the peak are zeroed.
pub const DEFAULT_NOISE_GATE_DB: f64 = 25.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayWindow {
    #[default]
    Rectangular,
    Hann,
}

impl FromStr for DelayWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" => Ok(Self::Rectangular),
            "hann" => Ok(Self::Hann),
            other => Err(Error::ConfigInvalid(format!("unknown delay window {other:?}"))),
        }
    }
}

impl DelayWindow {
    /// Weights normalized to unit mean power so Parseval still holds on
    /// average.
    fn weights(&self, f: usize) -> Option<Vec<f64>> {
        match self {
            Self::Rectangular => None,
            Self::Hann => {
                let raw: Vec<f64> = (0..f)
                    .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / f as f64).sin().powi(2))
                    .collect();
                let rms = (raw.iter().map(|w| w * w).sum::<f64>() / f as f64).sqrt();
                Some(raw.into_iter().map(|w| w / rms).collect())
            }
        }
    }
}

/// Per-antenna impulse responses of one snapshot, M×F row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    pub n_antennas: usize,
    pub taps: Vec<Complex64>,
    pub tap_spacing_s: f64,
}

impl Cir {
    pub fn n_taps(&self) -> usize {
        self.taps.len() / self.n_antennas
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|c| c.norm_sqr()).sum()
    }
}

pub struct CirPlan {
    f: usize,
    inverse: Arc<dyn Fft<f64>>,
    window: Option<Vec<f64>>,
}

impl CirPlan {
    pub fn new(f: usize, window: DelayWindow) -> Self {
        Self {
            f,
            inverse: FftPlanner::new().plan_fft_inverse(f),
            window: window.weights(f),
        }
    }

    /// Accumulates Σ_m |h_m(τ)|² for one snapshot into `pdp`.
    fn accumulate(&self, h: &[Complex32], m: usize, buf: &mut [Complex64], pdp: &mut [f64]) {
        let f = self.f;
        let scale = 1.0 / (f as f64).sqrt();
        for a in 0..m {
            self.transform(&h[a * f..(a + 1) * f], buf);
            for (p, c) in pdp.iter_mut().zip(buf.iter()) {
                *p += c.norm_sqr() * scale * scale;
            }
        }
    }

    fn transform(&self, row: &[Complex32], buf: &mut [Complex64]) {
        for (k, (b, c)) in buf.iter_mut().zip(row).enumerate() {
            let w = self.window.as_ref().map_or(1.0, |w| w[k]);
            *b = Complex64::new(c.re as f64 * w, c.im as f64 * w);
        }
        self.inverse.process(buf);
    }
}

/// Unitary inverse DFT over subcarriers for every antenna.
pub fn cir(h: &[Complex32], n_antennas: usize, meta: &RadioMeta, window: DelayWindow) -> Result<Cir> {
    let f = meta.n_subcarriers;
    if h.len() != n_antennas * f || f < 2 {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for {n_antennas} antennas x {f} subcarriers",
            h.len()
        )));
    }
    let plan = CirPlan::new(f, window);
    let scale = 1.0 / (f as f64).sqrt();
    let mut taps = vec![Complex64::new(0.0, 0.0); n_antennas * f];
    for a in 0..n_antennas {
        let out = &mut taps[a * f..(a + 1) * f];
        plan.transform(&h[a * f..(a + 1) * f], out);
        out.iter_mut().for_each(|c| *c *= scale);
    }
    Ok(Cir {
        n_antennas,
        taps,
        tap_spacing_s: meta.tap_spacing_s(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pdp {
    pub power: Vec<f64>,
    pub tap_spacing_s: f64,
}

impl Pdp {
    pub fn delays_s(&self) -> Vec<f64> {
        (0..self.power.len()).map(|k| k as f64 * self.tap_spacing_s).collect()
    }

    /// Zeroes bins more than `gate_db` below the peak.
    pub fn gated(mut self, gate_db: f64) -> Self {
        let peak = self.power.iter().copied().fold(0.0, f64::max);
        let floor = peak * 10f64.powf(-gate_db / 10.0);
        self.power.iter_mut().for_each(|p| {
            if *p < floor {
                *p = 0.0
            }
        });
        self
    }
}

fn window_pdp(csi: &CsiTensor, plan: &CirPlan, t_i: usize, w: usize) -> Vec<f64> {
    let (_, m, f) = csi.shape();
    let mut buf = vec![Complex64::new(0.0, 0.0); f];
    let mut pdp = vec![0.0; f];
    for t in t_i..t_i + w {
        plan.accumulate(csi.snapshot(t), m, &mut buf, &mut pdp);
    }
    let norm = 1.0 / (m * w) as f64;
    pdp.iter_mut().for_each(|p| *p *= norm);
    pdp
}

/// PDP averaged over antennas and the snapshots `t_i..t_i+w`, noise gated.
pub fn averaged_pdp(
    csi: &CsiTensor,
    meta: &RadioMeta,
    t_i: usize,
    w: usize,
    gate_db: f64,
    window: DelayWindow,
) -> Result<Pdp> {
    check_window(csi.n_snapshots(), t_i, w)?;
    let plan = CirPlan::new(csi.n_subcarriers(), window);
    Ok(Pdp {
        power: window_pdp(csi, &plan, t_i, w),
        tap_spacing_s: meta.tap_spacing_s(),
    }
    .gated(gate_db))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayMoments {
    pub mean_delay_s: f64,
    pub rms_delay_spread_s: f64,
}

pub fn delay_moments(pdp: &Pdp) -> Result<DelayMoments> {
    let total: f64 = pdp.power.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyPdp);
    }
    let (mut m1, mut m2) = (0.0, 0.0);
    for (k, p) in pdp.power.iter().enumerate() {
        let tau = k as f64;
        m1 += p * tau;
        m2 += p * tau * tau;
    }
    let mean = m1 / total;
    let var = (m2 / total - mean * mean).max(0.0);
    Ok(DelayMoments {
        mean_delay_s: mean * pdp.tap_spacing_s,
        rms_delay_spread_s: var.sqrt() * pdp.tap_spacing_s,
    })
}

pub fn rms_delay_spread(pdp: &Pdp) -> Result<f64> {
    Ok(delay_moments(pdp)?.rms_delay_spread_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelaySample {
    pub window_index: usize,
    pub t_center: usize,
    pub mean_delay_s: f64,
    pub rms_delay_spread_s: f64,
}

/// Delay moments for every window start.
pub fn delay_series(
    csi: &CsiTensor,
    meta: &RadioMeta,
    starts: &[usize],
    w: usize,
    gate_db: f64,
    window: DelayWindow,
) -> Result<Vec<DelaySample>> {
    let plan = CirPlan::new(csi.n_subcarriers(), window);
    starts
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            check_window(csi.n_snapshots(), t, w)?;
            let pdp = Pdp {
                power: window_pdp(csi, &plan, t, w),
                tap_spacing_s: meta.tap_spacing_s(),
            }
            .gated(gate_db);
            let mom = delay_moments(&pdp)?;
            Ok(DelaySample {
                window_index: i,
                t_center: t + w / 2,
                mean_delay_s: mom.mean_delay_s,
                rms_delay_spread_s: mom.rms_delay_spread_s,
            })
        })
        .collect()
}

pub fn write_delay_csv(path: &Path, samples: &[DelaySample]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "window_index,t_center,S_tau_ns,T_m_ns")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{}",
            s.window_index,
            s.t_center,
            s.rms_delay_spread_s * 1e9,
            s.mean_delay_s * 1e9
        )?;
    }
    w.flush()?;
    Ok(())
}
