//! Interval estimates, distribution distances, log-log regression and
//! correlation tests. All functions are deterministic in their inputs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Two-sided standard normal quantile for confidence `level`.
pub fn z_for_level(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0)
}

/// Bernoulli Monte Carlo estimate with its Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitEstimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Samples excluded from `trials` because they hit the step cap.
    pub censored: u64,
}

impl HitEstimate {
    pub fn new(successes: u64, trials: u64, censored: u64) -> Result<Self> {
        Self::with_level(successes, trials, censored, DEFAULT_LEVEL)
    }

    pub fn with_level(successes: u64, trials: u64, censored: u64, level: f64) -> Result<Self> {
        let (ci_lo, ci_hi) = wilson_ci(successes, trials, level)?;
        let p_hat = successes as f64 / trials as f64;
        Ok(Self { successes, trials, p_hat, ci_lo: ci_lo.min(p_hat), ci_hi: ci_hi.max(p_hat), censored })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_lo <= p && p <= self.ci_hi
    }

    pub fn width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }

    pub fn overlaps(&self, other: &HitEstimate) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / (self.trials + self.censored) as f64
    }
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_ci(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::invalid("Wilson interval needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::invalid(format!("{successes} successes out of {trials} trials")));
    }
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::invalid(format!("confidence level {level} not in (0, 1)")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z_for_level(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::invalid("log-log fit needs at least three points"));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid("log-log fit needs positive coordinates"));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("log-log abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit { slope, intercept, r_squared })
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// `cdf`. Atoms in the sample are handled exactly.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("KS statistic of an empty sample"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in KS sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let f = cdf(v);
        // Just below v the ECDF is i/n, at v it is j/n.
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS statistic of an empty sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic critical value of the one-sample KS statistic.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    // c(α) = sqrt(-ln(α/2) / 2)
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl Correlation {
    pub fn contains(&self, rho: f64) -> bool {
        self.ci_lo <= rho && rho <= self.ci_hi
    }
}

/// Pearson correlation with a 95% normal-approximation interval
/// `ρ̂ ± z (1 - ρ̂²) / √n`.
pub fn correlation_test(pairs: &[(f64, f64)]) -> Result<Correlation> {
    correlation_test_at(pairs, DEFAULT_LEVEL)
}

pub fn correlation_test_at(pairs: &[(f64, f64)], level: f64) -> Result<Correlation> {
    if pairs.len() < 3 {
        return Err(Error::invalid("correlation needs at least three pairs"));
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for &(a, b) in pairs {
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
        sab += (a - ma) * (b - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance("correlation observable"));
    }
    let rho = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let half = z_for_level(level) * (1.0 - rho * rho) / n.sqrt();
    Ok(Correlation { rho_hat: rho, ci_lo: (rho - half).max(-1.0), ci_hi: (rho + half).min(1.0), n: pairs.len() })
}

/// Distribution-free confidence interval for the median: indices into the
/// sorted sample from the normal approximation to Binomial(n, 1/2).
pub fn median_ci(samples: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    if samples.len() < 10 {
        return Err(Error::invalid("median interval needs at least ten samples"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let half = z_for_level(level) * n.sqrt() / 2.0;
    let lo = ((n / 2.0 - half).floor().max(0.0)) as usize;
    let hi = ((n / 2.0 + half).ceil() as usize).min(s.len() - 1);
    let median = if s.len() % 2 == 1 { s[s.len() / 2] } else { 0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2]) };
    Ok((median, s[lo], s[hi]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_edges() {
        let (lo, _) = wilson_ci(0, 40, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        let (_, hi) = wilson_ci(40, 40, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        assert!(wilson_ci(5, 4, 0.95).is_err());
        assert!(wilson_ci(0, 0, 0.95).is_err());
    }

    #[test]
    fn wilson_fifty_of_hundred() {
        // Wilson formula with z = 1.959964: centre 0.5, half-width 0.096170.
        let (lo, hi) = wilson_ci(50, 100, 0.95).unwrap();
        assert!((lo - 0.4038).abs() < 1e-3, "{lo}");
        assert!((hi - 0.5962).abs() < 1e-3, "{hi}");
    }

    #[test]
    fn wilson_width_shrinks_like_root_n() {
        for &(k, n) in &[(30u64, 100u64), (500, 1000), (2, 10), (700, 2000)] {
            let (a, b) = wilson_ci(k, n, 0.95).unwrap();
            let (c, d) = wilson_ci(4 * k, 4 * n, 0.95).unwrap();
            assert!(d - c <= 0.6 * (b - a), "k={k} n={n}");
        }
    }

    #[test]
    fn loglog_exact_lines() {
        let line: Vec<_> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, x)).collect();
        assert!((loglog_slope(&line).unwrap().slope - 1.0).abs() < 1e-12);
        let flat: Vec<_> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 3.5)).collect();
        assert!(loglog_slope(&flat).unwrap().slope.abs() < 1e-12);
        assert!(loglog_slope(&[(1.0, 1.0), (0.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn ks_point_mass_is_far_from_continuous() {
        let s = vec![0.0; 200];
        let d = ks_statistic(&s, |x| 1.0 / (1.0 + (-x).exp())).unwrap();
        assert!(d >= 0.5);
        assert!(ks_statistic(&[], |x| x).is_err());
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = (50..150).map(f64::from).collect();
        assert!((ks_two_sample(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn correlation_extremes() {
        let same: Vec<_> = (0..1000).map(|i| ((i % 7) as f64, (i % 7) as f64)).collect();
        assert!((correlation_test(&same).unwrap().rho_hat - 1.0).abs() < 1e-12);
        let anti: Vec<_> = (0..1000).map(|i| ((i % 7) as f64, -((i % 7) as f64))).collect();
        assert!((correlation_test(&anti).unwrap().rho_hat + 1.0).abs() < 1e-12);
        let flat: Vec<_> = (0..1000).map(|i| (1.0, i as f64)).collect();
        assert!(matches!(correlation_test(&flat), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn median_ci_brackets_median() {
        let s: Vec<f64> = (0..1001).map(f64::from).collect();
        let (m, lo, hi) = median_ci(&s, 0.95).unwrap();
        assert_eq!(m, 500.0);
        assert!(lo < 500.0 && hi > 500.0);
    }
}
