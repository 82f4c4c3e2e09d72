//! Small-scale fading: distribution fits, KS distances, moment-based Rician
//! K-factor and the log-linear K(h) height model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::special::{normal_cdf, rician_cdf, rician_mean_over_sigma};

pub const MIN_FIT_SAMPLES: usize = 100;
pub const MIN_HEIGHT_SAMPLES: usize = 10;
/// Default lower height bound of the K(h) regression, meters.
pub const DEFAULT_H_MIN_M: f64 = 10.0;
const RICIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingModel {
    Rayleigh,
    Rician,
    Nakagami,
    Lognormal,
}

impl FadingModel {
    pub const ALL: [FadingModel; 4] = [
        FadingModel::Rayleigh,
        FadingModel::Rician,
        FadingModel::Nakagami,
        FadingModel::Lognormal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rayleigh => "rayleigh",
            Self::Rician => "rician",
            Self::Nakagami => "nakagami",
            Self::Lognormal => "lognormal",
        }
    }
}

impl fmt::Display for FadingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FadingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown fading model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum FadingParams {
    Rayleigh { sigma: f64 },
    Rician { nu: f64, sigma: f64 },
    Nakagami { m: f64, omega: f64 },
    Lognormal { mu: f64, sigma_ln: f64 },
}

impl FadingParams {
    pub fn model(&self) -> FadingModel {
        match self {
            Self::Rayleigh { .. } => FadingModel::Rayleigh,
            Self::Rician { .. } => FadingModel::Rician,
            Self::Nakagami { .. } => FadingModel::Nakagami,
            Self::Lognormal { .. } => FadingModel::Lognormal,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Rayleigh { sigma } => -(-x * x / (2.0 * sigma * sigma)).exp_m1(),
            Self::Rician { nu, sigma } => rician_cdf(x, nu, sigma),
            Self::Nakagami { m, omega } => gamma_p(m, m * x * x / omega),
            Self::Lognormal { mu, sigma_ln } => normal_cdf((x.ln() - mu) / sigma_ln),
        }
    }
}

/// Above this shape the regularized gamma uses the Wilson–Hilferty cube-root
/// normal approximation; the series cost grows with the shape.
const GAMMA_SERIES_MAX_SHAPE: f64 = 1e4;

fn gamma_p(a: f64, y: f64) -> f64 {
    if a > GAMMA_SERIES_MAX_SHAPE {
        let v = 1.0 / (9.0 * a);
        normal_cdf(((y / a).cbrt() - (1.0 - v)) / v.sqrt())
    } else {
        gamma_lr(a, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub model: FadingModel,
    pub params: FadingParams,
    pub ks_distance: f64,
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some(i) = samples.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::NonPositiveSample(i));
    }
    let first = samples[0];
    if samples.iter().all(|x| *x == first) {
        return Err(Error::DegenerateVariance);
    }
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0;
    for x in xs {
        acc += x;
        n += 1;
    }
    acc / n as f64
}

/// Solves E[x]²/E[x²] = ratio for k = ν²/(2σ²) by bisection.
fn invert_rician_ratio(ratio: f64) -> f64 {
    let f = |k: f64| {
        let m1 = rician_mean_over_sigma(k);
        m1 * m1 / (2.0 * (1.0 + k)) - ratio
    };
    if f(0.0) >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut lo = 0.0;
    while hi - lo > RICIAN_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Parameter estimates only; see [`fit_distribution`] for the KS distance.
pub fn estimate_params(samples: &[f64], model: FadingModel) -> Result<FadingParams> {
    check_samples(samples)?;
    let m2 = mean(samples.iter().map(|x| x * x));
    Ok(match model {
        FadingModel::Rayleigh => FadingParams::Rayleigh {
            sigma: (m2 / 2.0).sqrt(),
        },
        FadingModel::Lognormal => {
            let mu = mean(samples.iter().map(|x| x.ln()));
            let var = mean(samples.iter().map(|x| (x.ln() - mu).powi(2)));
            if var <= 0.0 {
                return Err(Error::DegenerateVariance);
            }
            FadingParams::Lognormal {
                mu,
                sigma_ln: var.sqrt(),
            }
        }
        FadingModel::Nakagami => {
            let var2 = mean(samples.iter().map(|x| (x * x - m2).powi(2)));
            if var2 <= 0.0 {
                return Err(Error::DegenerateVariance);
            }
            FadingParams::Nakagami {
                m: (m2 * m2 / var2).max(0.5),
                omega: m2,
            }
        }
        FadingModel::Rician => {
            let m1 = mean(samples.iter().copied());
            let k = invert_rician_ratio(m1 * m1 / m2);
            let sigma = (m2 / (2.0 * (1.0 + k))).sqrt();
            FadingParams::Rician {
                nu: (2.0 * k).sqrt() * sigma,
                sigma,
            }
        }
    })
}

pub fn fit_distribution(samples: &[f64], model: FadingModel) -> Result<FitResult> {
    let params = estimate_params(samples, model)?;
    Ok(FitResult {
        model,
        params,
        ks_distance: ks_distance(samples, &params),
    })
}

/// Fits all four models.
pub fn fit_all(samples: &[f64]) -> Result<Vec<FitResult>> {
    FadingModel::ALL
        .iter()
        .map(|m| fit_distribution(samples, *m))
        .collect()
}

/// Supremum distance between the empirical CDF and `cdf`, checking both
/// sides of every step.
pub fn ks_distance_with(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

pub fn ks_distance(samples: &[f64], params: &FadingParams) -> f64 {
    ks_distance_with(samples, |x| params.cdf(x))
}

/// Empirical CDF together with every fitted model CDF at the sorted samples.
pub fn cdf_table(samples: &[f64], fits: &[FitResult], max_points: usize) -> Vec<(f64, f64, Vec<f64>)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let stride = n.div_ceil(max_points.max(1)).max(1);
    (0..n)
        .step_by(stride)
        .map(|i| {
            let x = sorted[i];
            (
                x,
                (i + 1) as f64 / n as f64,
                fits.iter().map(|f| f.params.cdf(x)).collect(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KStatus {
    Valid,
    /// Zero power fluctuation: K unbounded, reported as +∞.
    Degenerate,
    /// Fluctuation exceeds the mean; no real solution.
    MomentMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KEstimate {
    pub k_linear: f64,
    pub k_db: f64,
}

/// Moment-based Rician K from a window of power samples.
///
/// The window is normalized to unit mean; with `G_a` the mean and `G_v` the
/// RMS fluctuation, the LoS power is `sqrt(G_a² − G_v²)` and the diffuse
/// power is the remainder of `G_a`.
pub fn kfactor_moment(power_window: &[f64]) -> Result<KEstimate> {
    if power_window.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: power_window.len(),
        });
    }
    let raw_mean = mean(power_window.iter().copied());
    if !(raw_mean > 0.0) {
        return Err(Error::ZeroPower);
    }
    let g: Vec<f64> = power_window.iter().map(|p| p / raw_mean).collect();
    let ga = mean(g.iter().copied());
    let gv = mean(g.iter().map(|x| (x - ga).powi(2))).sqrt();
    if gv == 0.0 {
        return Err(Error::DegenerateWindow);
    }
    if gv > ga {
        return Err(Error::MomentMismatch);
    }
    let los = (ga * ga - gv * gv).sqrt();
    let diffuse = ga - los;
    let k = los / diffuse;
    Ok(KEstimate {
        k_linear: k,
        k_db: 10.0 * k.log10(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KfactorSample {
    pub window_index: usize,
    pub t_center: usize,
    pub k_linear: f64,
    pub k_db: f64,
    pub height_m: f64,
    pub elevation_rad: f64,
    pub azimuth_rad: f64,
    pub status: KStatus,
}

impl KfactorSample {
    /// Classifies a window; invalid windows carry NaN (mismatch) or +∞ (degenerate).
    pub fn from_window(
        window_index: usize,
        t_center: usize,
        power_window: &[f64],
        height_m: f64,
        elevation_rad: f64,
        azimuth_rad: f64,
    ) -> Self {
        let (k_linear, k_db, status) = match kfactor_moment(power_window) {
            Ok(k) => (k.k_linear, k.k_db, KStatus::Valid),
            Err(Error::DegenerateWindow) => (f64::INFINITY, f64::INFINITY, KStatus::Degenerate),
            Err(_) => (f64::NAN, f64::NAN, KStatus::MomentMismatch),
        };
        Self {
            window_index,
            t_center,
            k_linear,
            k_db,
            height_m,
            elevation_rad,
            azimuth_rad,
            status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeightFit {
    /// Slope of K_dB against ln(h).
    pub a: f64,
    pub b: f64,
    pub residual_rms_db: f64,
    pub h_min_m: f64,
    pub n_used: usize,
}

impl HeightFit {
    pub fn k_db(&self, height_m: f64) -> f64 {
        self.a * height_m.ln() + self.b
    }
}

/// Least squares of K_dB on ln(h) over valid, finite windows with h ≥ h_min.
pub fn fit_k_height(samples: &[KfactorSample], h_min: f64) -> Result<HeightFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.status == KStatus::Valid && s.k_db.is_finite() && s.height_m >= h_min)
        .map(|s| (s.height_m.ln(), s.k_db))
        .collect();
    if pts.len() < MIN_HEIGHT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_HEIGHT_SAMPLES,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-12 * n * (1.0 + mx * mx) {
        return Err(Error::IllConditioned(
            "all samples share one height".into(),
        ));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let rms = (pts.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum::<f64>() / n).sqrt();
    Ok(HeightFit {
        a,
        b,
        residual_rms_db: rms,
        h_min_m: h_min,
        n_used: pts.len(),
    })
}

/// Rician power draws with unit mean and LoS-to-diffuse ratio `k`.
#[cfg(test)]
pub(crate) fn rician_power_draws(k: f64, n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let los = (k / (k + 1.0)).sqrt();
    let s = (1.0 / (2.0 * (k + 1.0))).sqrt();
    (0..n)
        .map(|_| {
            let re = los + s * rng.sample::<f64, _>(StandardNormal);
            let im = s * rng.sample::<f64, _>(StandardNormal);
            re * re + im * im
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn large_shape_gamma_is_continuous() {
        let a = GAMMA_SERIES_MAX_SHAPE;
        for z in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            let y = a + z * a.sqrt();
            assert!((gamma_lr(a, y) - gamma_p(a * (1.0 + 1e-12), y)).abs() < 1e-4, "z={z}");
        }
        let big = FadingParams::Nakagami { m: 1e30, omega: 1.0 };
        assert_eq!(big.cdf(0.999), 0.0);
        assert_eq!(big.cdf(1.001), 1.0);
    }
    use rand_distr::{Distribution, Gamma};

    #[test]
    fn rayleigh_scale_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random();
                (-2.0 * (1.0 - u).ln()).sqrt()
            })
            .collect();
        let fit = fit_distribution(&x, FadingModel::Rayleigh).unwrap();
        let FadingParams::Rayleigh { sigma } = fit.params else { unreachable!() };
        assert!((0.99..=1.01).contains(&sigma), "sigma = {sigma}");
    }

    #[test]
    fn nakagami_shape_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let gamma = Gamma::new(2.0, 0.5).unwrap();
        let x: Vec<f64> = (0..100_000).map(|_| { let g: f64 = gamma.sample(&mut rng); g.sqrt() }).collect();
        let fit = fit_distribution(&x, FadingModel::Nakagami).unwrap();
        let FadingParams::Nakagami { m, omega } = fit.params else { unreachable!() };
        assert!((m - 2.0).abs() <= 0.1, "m = {m}");
        assert_relative_eq!(omega, 1.0, max_relative = 0.02);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_distribution(&[1.0; 50], FadingModel::Rayleigh),
            Err(Error::TooFewSamples { .. })
        ));
        for m in FadingModel::ALL {
            assert!(matches!(fit_distribution(&[0.7; 200], m), Err(Error::DegenerateVariance)));
        }
        let mut bad = vec![1.0; 200];
        bad[3] = -1.0;
        bad[4] = 2.0;
        assert!(matches!(
            fit_distribution(&bad, FadingModel::Nakagami),
            Err(Error::NonPositiveSample(3))
        ));
    }

    #[test]
    fn ks_at_model_quantiles() {
        let params = FadingParams::Rayleigh { sigma: 1.3 };
        let n = 999;
        // Inverse CDF at i/(n+1).
        let x: Vec<f64> = (1..=n)
            .map(|i| {
                let u = i as f64 / (n + 1) as f64;
                1.3 * (-2.0 * (1.0 - u).ln()).sqrt()
            })
            .collect();
        let d = ks_distance(&x, &params);
        assert!(d <= 1.0 / (n + 1) as f64 + 1e-12, "{d}");
    }

    #[test]
    fn ks_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(0.05..3.0)).collect();
        let params = FadingParams::Nakagami { m: 1.7, omega: 1.1 };
        // Brute force: empirical CDF by counting, evaluated just at and just below each point.
        let n = x.len() as f64;
        let mut brute: f64 = 0.0;
        for &xi in &x {
            let le = x.iter().filter(|&&v| v <= xi).count() as f64 / n;
            let lt = x.iter().filter(|&&v| v < xi).count() as f64 / n;
            let f = params.cdf(xi);
            brute = brute.max((le - f).abs()).max((f - lt).abs());
        }
        assert!((ks_distance(&x, &params) - brute).abs() < 1e-12);
    }

    #[test]
    fn kfactor_examples() {
        assert!(matches!(kfactor_moment(&[2.0; 50]), Err(Error::DegenerateWindow)));
        // Exponential power has G_v = G_a exactly when the sample std equals the mean.
        let exp_like = [0.0, 2.0];
        let k = kfactor_moment(&exp_like).unwrap();
        assert_eq!(k.k_linear, 0.0);
        assert!(matches!(kfactor_moment(&[0.0, 0.0, 3.0]), Err(Error::MomentMismatch)));
    }

    #[test]
    fn kfactor_ten_db_windows() {
        let k_true = 10.0;
        let p = rician_power_draws(k_true, 500 * 200, 31);
        let mut est: Vec<f64> = p
            .chunks(500)
            .filter_map(|w| kfactor_moment(w).ok())
            .map(|k| k.k_db)
            .collect();
        est.sort_by(|a, b| a.total_cmp(b));
        let median = est[est.len() / 2];
        assert!((median - 10.0).abs() <= 1.0, "median = {median}");
    }

    #[test]
    fn height_fit_exact_and_degenerate() {
        let make = |h: f64, k_db: f64| KfactorSample {
            window_index: 0,
            t_center: 0,
            k_linear: 10f64.powf(k_db / 10.0),
            k_db,
            height_m: h,
            elevation_rad: 0.0,
            azimuth_rad: 0.0,
            status: KStatus::Valid,
        };
        let samples: Vec<_> = (0..20)
            .map(|i| {
                let h = 10.0 + 2.5 * i as f64;
                make(h, 5.414 * h.ln() - 6.639)
            })
            .collect();
        let fit = fit_k_height(&samples, 10.0).unwrap();
        assert!((fit.a - 5.414).abs() < 1e-9 && (fit.b + 6.639).abs() < 1e-9);
        let flat: Vec<_> = (0..20).map(|_| make(49.0, 8.0)).collect();
        assert!(matches!(fit_k_height(&flat, 10.0), Err(Error::IllConditioned(_))));
        assert!(matches!(
            fit_k_height(&samples[..5], 10.0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn kfactor_scale_invariant(seed in 0u64..1000, scale in 1e-3..1e3f64) {
            let p = rician_power_draws(4.0, 400, seed);
            let scaled: Vec<f64> = p.iter().map(|v| v * scale).collect();
            match (kfactor_moment(&p), kfactor_moment(&scaled)) {
                (Ok(a), Ok(b)) => prop_assert!((a.k_db - b.k_db).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn ks_monotone_reparameterization(seed in 0u64..500) {
            // Squaring Rayleigh samples gives exponential ones.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..200).map(|_| rng.random_range(0.01..4.0)).collect();
            let params = FadingParams::Rayleigh { sigma: 1.0 };
            let d1 = ks_distance(&x, &params);
            let y: Vec<f64> = x.iter().map(|v| v * v).collect();
            let d2 = ks_distance_with(&y, |v| params.cdf(v.sqrt()));
            prop_assert!((d1 - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn rician_fit_recovers_parameters() {
        let p = rician_power_draws(3.0, 100_000, 8);
        let x: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
        let FadingParams::Rician { nu, sigma } = estimate_params(&x, FadingModel::Rician).unwrap()
        else {
            unreachable!()
        };
        let k = nu * nu / (2.0 * sigma * sigma);
        assert!((k - 3.0).abs() < 0.15, "k = {k}");
    }
}
