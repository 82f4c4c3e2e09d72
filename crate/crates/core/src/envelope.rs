//! Large-scale / small-scale decomposition of the received power.

use std::io::Write;
use std::path::Path;

use num_complex::Complex32;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{CsiTensor, RadioMeta};
use crate::error::{Error, Result};
use crate::geometry::GeometrySeries;

/// Running-median length used by [`despike`].
pub const DESPIKE_MEDIAN_LEN: usize = 5;
/// Neighborhood over which the MAD scale for [`despike`] is measured.
pub const DESPIKE_MAD_LEN: usize = 101;
/// Gate, in units of the normalized MAD.
pub const DESPIKE_GATE: f64 = 3.0;
/// MAD to standard deviation for Gaussian data.
const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSeries {
    pub p: Vec<f64>,
    pub p_clean: Vec<f64>,
    pub p_ls: Vec<f64>,
    pub a_ssf: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LsWindowSpec {
    pub physical_length_m: f64,
    pub samples: usize,
}

/// Mean |H|² over all antennas and subcarriers of one snapshot.
pub fn instantaneous_power(snapshot: &[Complex32]) -> f64 {
    if snapshot.is_empty() {
        return 0.0;
    }
    snapshot
        .iter()
        .map(|c| (c.re as f64).powi(2) + (c.im as f64).powi(2))
        .sum::<f64>() / snapshot.len() as f64
}

pub fn power_series(csi: &CsiTensor) -> Vec<f64> {
    (0..csi.n_snapshots())
        .into_par_iter()
        .map(|n| instantaneous_power(csi.snapshot(n)))
        .collect()
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let mid = buf.len() / 2;
    let (_, m, _) = buf.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if buf.len() % 2 == 1 {
        upper
    } else {
        let lower = buf[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Start of a length-`len` window centered on `i`, shifted to stay in range.
fn window_start(i: usize, len: usize, total: usize) -> usize {
    let half = len / 2;
    i.saturating_sub(half).min(total - len)
}

/// Replaces isolated spikes by the 5-sample running median.
///
/// A sample is replaced when it deviates from its running median by more
/// than three normalized MADs of the raw samples in the surrounding
/// 101-sample neighborhood. Everything else passes through unchanged.
pub fn despike(p: &[f64]) -> Result<Vec<f64>> {
    if p.len() < DESPIKE_MEDIAN_LEN {
        return Err(Error::SeriesTooShort {
            needed: DESPIKE_MEDIAN_LEN,
            got: p.len(),
        });
    }
    let n = p.len();
    let mad_len = DESPIKE_MAD_LEN.min(n);
    let out = (0..n)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(DESPIKE_MEDIAN_LEN), Vec::with_capacity(mad_len)),
            |(short, wide), i| {
                let s = window_start(i, DESPIKE_MEDIAN_LEN, n);
                short.clear();
                short.extend_from_slice(&p[s..s + DESPIKE_MEDIAN_LEN]);
                let med = median_in_place(short);

                let w = window_start(i, mad_len, n);
                wide.clear();
                wide.extend_from_slice(&p[w..w + mad_len]);
                let center = median_in_place(wide);
                for v in wide.iter_mut() {
                    *v = (*v - center).abs();
                }
                let scale = MAD_TO_SIGMA * median_in_place(wide);
                if (p[i] - med).abs() > DESPIKE_GATE * scale {
                    med
                } else {
                    p[i]
                }
            },
        )
        .collect();
    Ok(out)
}

/// Maps a physical averaging length onto an odd number of samples.
pub fn ls_window(geo: &GeometrySeries, length_m: f64) -> Result<LsWindowSpec> {
    if !(geo.mean_step_m > 0.0) {
        return Err(Error::ZeroMeanStep);
    }
    let mut samples = (length_m / geo.mean_step_m).round().max(1.0) as usize;
    if samples.is_multiple_of(2) {
        samples += 1;
    }
    Ok(LsWindowSpec {
        physical_length_m: length_m,
        samples,
    })
}

/// Window length for an averaging distance expressed in carrier wavelengths.
pub fn ls_window_lambda(meta: &RadioMeta, geo: &GeometrySeries, multiple: f64) -> Result<LsWindowSpec> {
    ls_window(geo, multiple * meta.wavelength_m())
}

/// Centered moving mean; windows shrink at the series edges.
pub fn large_scale(p_clean: &[f64], spec: &LsWindowSpec) -> Result<Vec<f64>> {
    let n = p_clean.len();
    if spec.samples > n || spec.samples == 0 {
        return Err(Error::WindowExceedsSeries {
            window: spec.samples,
            len: n,
        });
    }
    let half = spec.samples / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in p_clean {
        acc += v;
        prefix.push(acc);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect())
}

pub fn ssf_envelope(p_clean: &[f64], p_ls: &[f64]) -> Result<Vec<f64>> {
    if p_clean.len() != p_ls.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} power samples vs {} large-scale samples",
            p_clean.len(),
            p_ls.len()
        )));
    }
    p_clean
        .iter()
        .zip(p_ls)
        .enumerate()
        .map(|(i, (p, ls))| {
            if *ls > 0.0 {
                Ok((p / ls).sqrt())
            } else {
                Err(Error::NonPositiveLsPower(i))
            }
        })
        .collect()
}

/// Full chain: power → despike → large-scale trend → small-scale envelope.
pub fn decompose(
    csi: &CsiTensor,
    meta: &RadioMeta,
    geo: &GeometrySeries,
    ls_lambda: f64,
) -> Result<(PowerSeries, LsWindowSpec)> {
    let spec = ls_window_lambda(meta, geo, ls_lambda)?;
    let p = power_series(csi);
    let p_clean = despike(&p)?;
    let p_ls = large_scale(&p_clean, &spec)?;
    let a_ssf = ssf_envelope(&p_clean, &p_ls)?;
    Ok((
        PowerSeries {
            p,
            p_clean,
            p_ls,
            a_ssf,
        },
        spec,
    ))
}

pub fn write_power_csv(path: &Path, ps: &PowerSeries) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,p,p_clean,p_ls,a_ssf")?;
    for i in 0..ps.p.len() {
        writeln!(
            w,
            "{i},{},{},{},{}",
            ps.p[i], ps.p_clean[i], ps.p_ls[i], ps.a_ssf[i]
        )?;
    }
    w.flush()?;
    Ok(())
}
