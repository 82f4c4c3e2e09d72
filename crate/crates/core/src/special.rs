//! Special functions needed by the fading models.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// Exponentially scaled modified Bessel function `e^{-z} I_ν(z)` for ν ∈ {0, 1}, z ≥ 0.
fn bessel_ie(nu: u32, z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z <= 30.0 {
        let q = 0.25 * z * z;
        let mut term = if nu == 0 { 1.0 } else { 0.5 * z };
        let mut sum = term;
        let mut k: f64 = 1.0;
        loop {
            term *= q / (k * (k + nu as f64));
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * (-z).exp()
    } else {
        let mu = 4.0 * (nu * nu) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k: f64 = 1.0;
        loop {
            let next = -term * (mu - (2.0 * k - 1.0).powi(2)) / (k * 8.0 * z);
            if next.abs() >= term.abs() || next.abs() < 1e-17 {
                break;
            }
            sum += next;
            term = next;
            k += 1.0;
        }
        sum / (2.0 * std::f64::consts::PI * z).sqrt()
    }
}

pub fn bessel_i0e(z: f64) -> f64 {
    bessel_ie(0, z.abs())
}

pub fn bessel_i1e(z: f64) -> f64 {
    let v = bessel_ie(1, z.abs());
    if z < 0.0 {
        -v
    } else {
        v
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Above this LoS-to-diffuse ratio the Rician CDF uses a Gaussian approximation.
const RICIAN_SERIES_MAX_K: f64 = 400.0;

/// CDF of the Rician distribution with LoS amplitude `nu` and per-dimension
/// diffuse deviation `sigma`, as a Poisson mixture of central chi-square CDFs.
pub fn rician_cdf(x: f64, nu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = nu * nu / (2.0 * sigma * sigma);
    let t = x * x / (2.0 * sigma * sigma);
    if k > RICIAN_SERIES_MAX_K {
        let mean = (nu * nu + sigma * sigma).sqrt();
        return normal_cdf((x - mean) / sigma);
    }
    let ln_k = k.ln();
    let ln_t = t.ln();
    let terms = (k + 12.0 * k.sqrt() + 40.0).ceil() as usize;
    // P(j+1, t) = P(j, t) − t^j e^{−t} / j!, starting from P(1, t) = 1 − e^{−t}.
    let mut lower = -(-t).exp_m1();
    let mut sum = 0.0;
    for j in 0..=terms {
        let ln_fact = ln_gamma(j as f64 + 1.0);
        let weight = if k > 0.0 {
            (-k + j as f64 * ln_k - ln_fact).exp()
        } else if j == 0 {
            1.0
        } else {
            0.0
        };
        sum += weight * lower.max(0.0);
        let next = j as f64 + 1.0;
        lower -= (-t + next * ln_t - ln_fact - next.ln()).exp();
        if k == 0.0 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Mean of a Rician variable in units of `sigma`, as a function of
/// `k = nu² / (2 sigma²)`.
pub fn rician_mean_over_sigma(k: f64) -> f64 {
    let laguerre = (1.0 + k) * bessel_i0e(k / 2.0) + k * bessel_i1e(k / 2.0);
    (std::f64::consts::PI / 2.0).sqrt() * laguerre
}
