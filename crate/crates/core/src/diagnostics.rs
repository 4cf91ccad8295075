//! Autocorrelation, effective sample size and cross-correlation of scalar
//! chains.
//!
//! Autocovariances are the biased estimates (divisor `n`), computed by FFT.
//! The effective sample size uses Geyer's initial positive sequence: the
//! autocorrelation sum is truncated at the first pair `rho(2m) + rho(2m+1)`
//! that is not positive.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample autocorrelation at lags `0..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
}

/// Sample cross-correlation at lags `-L..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub lags: Vec<i64>,
    pub values: Vec<f64>,
}

impl CrossCorrelation {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn centered(series: &[f64]) -> Result<(Vec<f64>, f64)> {
    if series.len() < 2 {
        return Err(Error::Series("need at least two values".into()));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::Series("series contains non-finite values".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let var = dev.iter().map(|d| d * d).sum::<f64>() / n;
    // relative threshold so that constant series with rounding noise count as constant
    let scale = series.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if var <= (scale * 1e-14).powi(2) {
        return Err(Error::Series("series has zero variance".into()));
    }
    Ok((dev, var))
}

/// Biased autocovariances `gamma(0..=max_lag)` of an already centered series.
fn autocovariance_fft(dev: &[f64], max_lag: usize) -> Vec<f64> {
    let n = dev.len();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = dev
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let norm = (size * n) as f64;
    buf[..=max_lag.min(n - 1)]
        .iter()
        .map(|z| z.re / norm)
        .collect()
}

/// Biased sample autocovariances at lags `0..=max_lag`.
pub fn autocovariance(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::Series(format!(
            "series of length {} is too short for lag {max_lag}",
            series.len()
        )));
    }
    let (dev, _) = centered(series)?;
    Ok(autocovariance_fft(&dev, max_lag))
}

/// Sample autocorrelation at lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfResult> {
    let gamma = autocovariance(series, max_lag)?;
    let g0 = gamma[0];
    Ok(AcfResult {
        lags: (0..=max_lag).collect(),
        values: gamma.iter().map(|g| (g / g0).clamp(-1.0, 1.0)).collect(),
    })
}

/// Lag-wise average of the autocorrelations of several series.
pub fn mean_acf(series: &[Vec<f64>], max_lag: usize) -> Result<AcfResult> {
    if series.is_empty() {
        return Err(Error::Series("no series given".into()));
    }
    let mut values = vec![0.0; max_lag + 1];
    for s in series {
        for (v, a) in values.iter_mut().zip(acf(s, max_lag)?.values) {
            *v += a;
        }
    }
    let m = series.len() as f64;
    Ok(AcfResult {
        lags: (0..=max_lag).collect(),
        values: values.into_iter().map(|v| v / m).collect(),
    })
}

/// Integrated autocorrelation time `1 + 2 sum rho(l)`, truncated by the
/// initial positive sequence rule.
pub fn integrated_autocorrelation_time(series: &[f64]) -> Result<f64> {
    let (dev, _) = centered(series)?;
    let n = dev.len();
    let gamma = autocovariance_fft(&dev, n - 1);
    let g0 = gamma[0];
    let rho = |l: usize| if l < n { gamma[l] / g0 } else { 0.0 };
    // tau = -1 + 2 sum_m (rho(2m) + rho(2m+1)), summed while positive
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    Ok(tau)
}

/// Effective sample size `n / (1 + 2 sum rho(l))`.
pub fn ess(series: &[f64]) -> Result<f64> {
    let tau = integrated_autocorrelation_time(series)?;
    Ok(series.len() as f64 / tau)
}

/// `corr(a(t), b(t + l))` for `l` in `-max_lag..=max_lag`, each normalised
/// by the lag-0 standard deviations and divisor `n`.
pub fn cross_correlation(a: &[f64], b: &[f64], max_lag: usize) -> Result<CrossCorrelation> {
    if a.len() != b.len() {
        return Err(Error::Series(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() <= max_lag {
        return Err(Error::Series(format!(
            "series of length {} is too short for lag {max_lag}",
            a.len()
        )));
    }
    let (da, va) = centered(a)?;
    let (db, vb) = centered(b)?;
    let n = a.len();
    let norm = n as f64 * (va * vb).sqrt();
    let at = |l: i64| -> f64 {
        let s: f64 = if l >= 0 {
            let l = l as usize;
            da[..n - l].iter().zip(&db[l..]).map(|(x, y)| x * y).sum()
        } else {
            let l = (-l) as usize;
            da[l..].iter().zip(&db[..n - l]).map(|(x, y)| x * y).sum()
        };
        s / norm
    };
    let m = max_lag as i64;
    let lags: Vec<i64> = (-m..=m).collect();
    let values = lags.iter().map(|&l| at(l)).collect();
    Ok(CrossCorrelation { lags, values })
}

/// Mean, sample standard deviation and ESS of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    /// `sd / sqrt(ess)`.
    pub mcse: f64,
}

pub fn series_stats(series: &[f64]) -> Result<SeriesStats> {
    let (dev, _) = centered(series)?;
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let sd = (dev.iter().map(|d| d * d).sum::<f64>() / (n - 1.0)).sqrt();
    let e = ess(series)?;
    Ok(SeriesStats {
        mean,
        sd,
        ess: e,
        mcse: sd / e.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
        (0..n)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    fn direct_autocov(x: &[f64], l: usize) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        x[..x.len() - l]
            .iter()
            .zip(&x[l..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / n
    }

    #[test]
    fn fft_matches_direct_sum() {
        let x = ar1(777, 0.6, 1);
        let g = autocovariance(&x, 20).unwrap();
        for (l, v) in g.iter().enumerate() {
            assert!((v - direct_autocov(&x, l)).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_acf_and_ess() {
        let x = white(100_000, 2);
        let a = acf(&x, 30).unwrap();
        assert_eq!(a.values[0], 1.0);
        assert!(a.values[1..].iter().all(|v| v.abs() < 0.01));
        let e = ess(&x).unwrap();
        assert!((e / 1e5 - 1.0).abs() < 0.05, "{e}");
    }

    #[test]
    fn ar1_acf_and_ess() {
        let x = ar1(200_000, 0.9, 3);
        let a = acf(&x, 10).unwrap();
        for l in 1..=10 {
            assert!((a.values[l] - 0.9f64.powi(l as i32)).abs() < 0.02);
        }
        let y = ar1(200_000, 0.5, 4);
        let e = ess(&y).unwrap();
        assert!((e / (2e5 / 3.0) - 1.0).abs() < 0.1, "{e}");
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert!(acf(&[2.0; 10], 3).is_err());
        assert!(ess(&[1.5; 50]).is_err());
        assert!(acf(&[1.0, 2.0], 2).is_err());
        assert!(cross_correlation(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], 1).is_err());
    }

    #[test]
    fn cross_correlation_of_shifted_copy() {
        let x = white(5000, 5);
        let y: Vec<f64> = (0..x.len())
            .map(|t| if t >= 3 { x[t - 3] } else { 0.0 })
            .collect();
        let c = cross_correlation(&x, &y, 5).unwrap();
        let at3 = c.values[c.lags.iter().position(|&l| l == 3).unwrap()];
        assert!(at3 > 0.95);
        let c0 = cross_correlation(&x, &x, 0).unwrap();
        assert!((c0.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stats_of_iid() {
        let x = white(50_000, 6);
        let s = series_stats(&x).unwrap();
        assert!(s.mean.abs() < 4.0 * s.mcse);
        assert!((s.sd - 1.0).abs() < 0.02);
    }
}
