//! Spectral efficiency, correlations and the subband statistics check.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::CsiTensor;
use crate::error::{Error, Result};

/// Default per-subcarrier SNR for spectral efficiency, dB.
pub const DEFAULT_SNR_DB: f64 = 20.0;
pub const DEFAULT_N_BANDS: usize = 5;
const MIN_BAND_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeSample {
    pub window_index: usize,
    pub t_center: usize,
    pub eta_bits_per_s_per_hz: f64,
    pub snr_db: f64,
}

pub(crate) fn check_window(n: usize, t_i: usize, w: usize) -> Result<()> {
    if w == 0 || t_i.checked_add(w).is_none_or(|end| end > n) {
        return Err(Error::WindowOutOfRange(format!(
            "window [{t_i}, {t_i}+{w}) exceeds {n} snapshots"
        )));
    }
    Ok(())
}

/// MRC capacity of one snapshot averaged over subcarriers.
fn snapshot_se(csi: &CsiTensor, n: usize, xi: f64) -> f64 {
    let (_, m, f) = csi.shape();
    let snap = csi.snapshot(n);
    let mut acc = 0.0;
    for k in 0..f {
        let gain: f64 = (0..m).map(|a| snap[a * f + k].norm_sqr() as f64).sum();
        acc += (xi * gain).ln_1p();
    }
    acc / (f as f64 * std::f64::consts::LN_2)
}

/// Mean MRC spectral efficiency over the snapshots `t_i..t_i+w`.
pub fn spectral_efficiency(csi: &CsiTensor, t_i: usize, w: usize, snr_db: f64) -> Result<f64> {
    check_window(csi.n_snapshots(), t_i, w)?;
    if !snr_db.is_finite() {
        return Err(Error::ConfigInvalid("SNR must be finite".into()));
    }
    let xi = 10f64.powf(snr_db / 10.0);
    let total: f64 = (t_i..t_i + w).map(|n| snapshot_se(csi, n, xi)).sum();
    Ok(total / w as f64)
}

/// Windowed spectral efficiency along a hop grid of window starts.
pub fn se_series(csi: &CsiTensor, starts: &[usize], w: usize, snr_db: f64) -> Result<Vec<SeSample>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            Ok(SeSample {
                window_index: i,
                t_center: t + w / 2,
                eta_bits_per_s_per_hz: spectral_efficiency(csi, t, w, snr_db)?,
                snr_db,
            })
        })
        .collect()
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "series lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson over the finite pairs only; `None` when undefined.
pub fn pearson_finite(x: &[f64], y: &[f64]) -> Option<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    pearson(&a, &b).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationReport {
    /// Received power in dB against elevation, azimuth and 3D distance.
    pub elevation_power: Option<f64>,
    pub azimuth_power: Option<f64>,
    pub distance_power: Option<f64>,
    pub k_se: Option<f64>,
    pub s_tau_se: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandStats {
    pub first_subcarrier: usize,
    pub n_subcarriers: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubbandCheck {
    pub n_bands: usize,
    pub full_mean: f64,
    pub full_std: f64,
    pub bands: Vec<BandStats>,
    pub rmse_mean_pct: f64,
    pub rmse_std_pct: f64,
    /// Band whose statistics deviate most from the full band.
    pub worst_band: usize,
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn relative(dev: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        dev / reference
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Splits the band into `n_bands` equal subbands (remainder dropped) and
/// compares the time statistics of each subband's power to the full band.
pub fn subband_check(csi: &CsiTensor, n_bands: usize) -> Result<SubbandCheck> {
    let (n, m, f) = csi.shape();
    if n_bands == 0 {
        return Err(Error::ConfigInvalid("n_bands must be >= 1".into()));
    }
    let per_band = f / n_bands;
    if per_band < MIN_BAND_WIDTH {
        return Err(Error::BandTooNarrow { per_band });
    }
    if n == 0 {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    // Per-snapshot power of every subcarrier, summed over antennas.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|t| {
            let snap = csi.snapshot(t);
            let mut p = vec![0.0; f];
            for a in 0..m {
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk += snap[a * f + k].norm_sqr() as f64;
                }
            }
            p
        })
        .collect();
    let band_power = |lo: usize, width: usize| -> Vec<f64> {
        rows.iter()
            .map(|r| r[lo..lo + width].iter().sum::<f64>() / (width * m) as f64)
            .collect()
    };
    let (full_mean, full_std) = mean_std(&band_power(0, f));
    let bands: Vec<BandStats> = (0..n_bands)
        .map(|b| {
            let (mean, std) = mean_std(&band_power(b * per_band, per_band));
            BandStats {
                first_subcarrier: b * per_band,
                n_subcarriers: per_band,
                mean,
                std,
            }
        })
        .collect();
    let nb = n_bands as f64;
    let rmse_mean = (bands.iter().map(|b| (b.mean - full_mean).powi(2)).sum::<f64>() / nb).sqrt();
    let rmse_std = (bands.iter().map(|b| (b.std - full_std).powi(2)).sum::<f64>() / nb).sqrt();
    let score = |b: &BandStats| {
        relative((b.mean - full_mean).abs(), full_mean).hypot(relative((b.std - full_std).abs(), full_std))
    };
    let worst_band = bands
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, b)| {
            let s = score(b);
            if s > acc.1 {
                (i, s)
            } else {
                acc
            }
        })
        .0;
    Ok(SubbandCheck {
        n_bands,
        full_mean,
        full_std,
        rmse_mean_pct: 100.0 * relative(rmse_mean, full_mean),
        rmse_std_pct: 100.0 * relative(rmse_std, full_std),
        worst_band,
        bands,
    })
}

pub fn write_se_csv(path: &Path, se: &[SeSample]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "window_index,t_center,eta_bps_hz,snr_db")?;
    for s in se {
        writeln!(
            w,
            "{},{},{},{}",
            s.window_index, s.t_center, s.eta_bits_per_s_per_hz, s.snr_db
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex32;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_csi(n: usize, m: usize, f: usize, seed: u64) -> CsiTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * m * f)
            .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        CsiTensor::new(n, m, f, data).unwrap()
    }

    #[test]
    fn se_unit_example() {
        let csi = CsiTensor::new(1, 1, 1, vec![Complex32::new(1.0, 0.0)]).unwrap();
        assert_relative_eq!(spectral_efficiency(&csi, 0, 1, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        let zero = CsiTensor::zeros(3, 2, 4);
        assert_eq!(spectral_efficiency(&zero, 0, 3, 20.0).unwrap(), 0.0);
        assert!(matches!(
            spectral_efficiency(&zero, 1, 3, 20.0),
            Err(Error::WindowOutOfRange(_))
        ));
    }

    #[test]
    fn se_matches_triple_loop() {
        let csi = random_csi(6, 3, 8, 1);
        let xi = 10f64.powf(1.3);
        let mut brute = 0.0;
        for n in 1..5 {
            let mut per = 0.0;
            for f in 0..8 {
                let mut g = 0.0;
                for m in 0..3 {
                    g += csi.get(n, m, f).norm_sqr() as f64;
                }
                per += (1.0 + xi * g).log2();
            }
            brute += per / 8.0;
        }
        brute /= 4.0;
        assert_relative_eq!(spectral_efficiency(&csi, 1, 4, 13.0).unwrap(), brute, max_relative = 1e-12);
    }

    #[test]
    fn se_increases_with_snr() {
        let csi = random_csi(4, 2, 6, 2);
        let lo = spectral_efficiency(&csi, 0, 4, 10.0).unwrap();
        let hi = spectral_efficiency(&csi, 0, 4, 10.5).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_relative_eq!(pearson(&x, &y).unwrap(), 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&x, &neg).unwrap(), -1.0, epsilon = 1e-15);
        assert!(matches!(pearson(&x, &[1.0; 10]), Err(Error::DegenerateVariance)));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random::<f64>()).collect();
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
        assert!((pearson(&x, &y).unwrap() - cov / (sx * sy)).abs() < 1e-12);
    }

    #[test]
    fn flat_channel_subbands_agree() {
        let mut csi = CsiTensor::zeros(50, 2, 100);
        for n in 0..50 {
            let g = 1.0 + 0.1 * n as f32;
            csi.snapshot_mut(n).iter_mut().for_each(|c| *c = Complex32::new(g, 0.0));
        }
        let chk = subband_check(&csi, 5).unwrap();
        assert_eq!(chk.bands.len(), 5);
        assert!(chk.bands.iter().all(|b| b.n_subcarriers == 20));
        assert!(chk.rmse_mean_pct < 1e-9);
        assert!(chk.rmse_std_pct < 1e-9);
    }

    #[test]
    fn distorted_band_is_flagged() {
        let mut csi = random_csi(200, 2, 100, 4);
        for n in 0..200 {
            let snap = csi.snapshot_mut(n);
            for m in 0..2 {
                for f in 60..80 {
                    snap[m * 100 + f] *= 1.8;
                }
            }
        }
        let chk = subband_check(&csi, 5).unwrap();
        assert_eq!(chk.worst_band, 3);
        assert!(chk.rmse_mean_pct > 10.0);
    }

    #[test]
    fn narrow_bands_rejected() {
        let csi = CsiTensor::zeros(2, 1, 15);
        assert!(matches!(
            subband_check(&csi, 5),
            Err(Error::BandTooNarrow { per_band: 3 })
        ));
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            xs in prop::collection::vec(-10.0..10.0f64, 5..40),
            noise in prop::collection::vec(-1.0..1.0f64, 40),
            a in 0.1..5.0f64, b in -3.0..3.0f64,
        ) {
            let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| x * x + e).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                let xs2: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let r2 = pearson(&xs2, &ys).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
                let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
                prop_assert!((pearson(&neg, &ys).unwrap() + r).abs() < 1e-9);
            }
        }
    }
}
