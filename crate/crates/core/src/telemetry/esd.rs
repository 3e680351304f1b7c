//! Robust iterative outlier detection on decomposition residuals.
//!
//! Deviation scores use the median and the median absolute deviation instead
//! of mean and standard deviation; the per-iteration critical value comes
//! from the generalized extreme studentized deviate test, so no fixed
//! threshold has to be chosen per metric.

use crate::mathx::{median_lower, student_t_quantile};

use super::stl::stl_decompose;
use super::{AnomalyPoint, TelemetryError, TelemetrySeries};

/// Scale factor turning the MAD of a normal sample into a standard-deviation
/// estimate: 1 / Phi^-1(3/4). Deviation scores are put on this sigma scale
/// before they are compared against the t-based critical value, which is
/// derived for studentized (sigma-unit) statistics.
pub const MAD_CONSISTENCY: f64 = 1.482_602_218_505_602;

/// Median absolute deviation from the median. Medians use the lower middle
/// element on even lengths, so both are members of the sample.
pub fn mad(xs: &[f64]) -> Result<f64, TelemetryError> {
    let med = median_lower(xs).ok_or(TelemetryError::EmptyInput)?;
    let deviations: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    Ok(median_lower(&deviations).expect("nonempty by construction"))
}

/// Elementwise `|residual - median| / MAD`.
///
/// Callers must take the MAD-zero path themselves (a constant-residual series
/// has no statistically meaningful deviations), so a zero MAD is an error
/// here rather than a silent division.
pub fn deviation_scores(residuals: &[f64]) -> Result<Vec<f64>, TelemetryError> {
    let med = median_lower(residuals).ok_or(TelemetryError::EmptyInput)?;
    let m = mad(residuals)?;
    if m == 0.0 {
        return Err(TelemetryError::ZeroMad);
    }
    Ok(residuals.iter().map(|r| (r - med).abs() / m).collect())
}

/// Critical value of iteration `k` of the generalized ESD test on `n`
/// samples:
///
/// ```text
/// lambda_k = (n - k) * t / sqrt((n - k - 1 + t^2) * (n - k + 1))
/// ```
///
/// where `t` is the Student-t quantile at `p = 1 - alpha / (2 (n - k + 1))`
/// with `n - k - 1` degrees of freedom (the one-sided-per-tail convention).
pub fn esd_critical_value(n: usize, k: usize, alpha: f64) -> Result<f64, TelemetryError> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(TelemetryError::BadAlpha { alpha });
    }
    if n < k + 3 {
        // Needs n - k - 1 >= 2 degrees of freedom.
        return Err(TelemetryError::DegenerateSample { n, k });
    }
    let nk = (n - k) as f64;
    let dof = (n - k - 1) as f64;
    let p = 1.0 - alpha / (2.0 * (nk + 1.0));
    let t = student_t_quantile(p, dof);
    Ok(nk * t / ((dof + t * t) * (nk + 1.0)).sqrt())
}

/// Default cap on the number of anomalies per series: 5% of its length
/// rounded up, at least one.
pub fn default_max_anomalies(len: usize) -> usize {
    len.div_ceil(20).max(1)
}

/// Decompose `series` and iteratively remove the most deviant residual while
/// its sigma-scale score exceeds the ESD critical value, up to
/// `max_anomalies` removals. Returned points are sorted by index.
pub fn detect_anomalies(
    series: &TelemetrySeries,
    alpha: f64,
    max_anomalies: usize,
) -> Result<Vec<AnomalyPoint>, TelemetryError> {
    let decomposition = stl_decompose(series)?;
    let n = series.values.len();
    // A MAD at rounding-noise level relative to the data is the degenerate
    // path: such a series has no statistically meaningful deviations.
    let scale = series
        .values
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let mad_floor = 1e-12 * scale;

    // (original index, residual) pairs still in the sample.
    let mut active: Vec<(usize, f64)> =
        decomposition.residual.iter().copied().enumerate().collect();
    let mut points = Vec::new();

    for k in 1..=max_anomalies {
        if active.len() < 2 || n < k + 3 {
            break;
        }
        let residuals: Vec<f64> = active.iter().map(|&(_, r)| r).collect();
        let med = median_lower(&residuals).expect("active set is nonempty");
        let m = mad(&residuals)?;
        if m <= mad_floor {
            break;
        }
        let sigma = MAD_CONSISTENCY * m;

        let (pos, score) = active
            .iter()
            .enumerate()
            .map(|(pos, &(_, r))| (pos, (r - med).abs() / sigma))
            .fold((0, f64::NEG_INFINITY), |best, cand| {
                if cand.1 > best.1 {
                    cand
                } else {
                    best
                }
            });
        let lambda = esd_critical_value(n, k, alpha)?;
        if score <= lambda {
            break;
        }
        let (index, _) = active.remove(pos);
        points.push(AnomalyPoint {
            metric: series.metric.clone(),
            index,
            timestamp: series.timestamps[index],
            observed: series.values[index],
            score,
            iteration: k,
            critical_value: lambda,
        });
    }

    points.sort_by_key(|p| p.index);
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn mad_of_constant_sample_is_zero() {
        assert_eq!(mad(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn mad_direct_evaluation() {
        // median 3; absolute deviations [2,1,0,1,97]; median 1.
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap(), 1.0);
        assert_eq!(mad(&[-1.0, 0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn mad_of_empty_input_errors() {
        assert!(matches!(mad(&[]), Err(TelemetryError::EmptyInput)));
    }

    #[test]
    fn mad_scale_and_translation() {
        // Odd length: the lower-median convention coincides with the true
        // median, so scale equivariance holds exactly even for negative
        // factors.
        let xs = [0.4, -1.2, 5.0, 2.2, 0.0, 3.1, -0.7];
        let base = mad(&xs).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + 17.5).collect();
        assert!((mad(&shifted).unwrap() - base).abs() < 1e-12);
        let scaled: Vec<f64> = xs.iter().map(|x| -2.5 * x).collect();
        assert!((mad(&scaled).unwrap() - 2.5 * base).abs() < 1e-12);
    }

    #[test]
    fn deviation_scores_direct_evaluation() {
        let scores = deviation_scores(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(scores[4], 97.0);
    }

    #[test]
    fn deviation_scores_zero_mad_path() {
        assert!(matches!(
            deviation_scores(&[0.0, 0.0, 0.0, 10.0]),
            Err(TelemetryError::ZeroMad)
        ));
    }

    #[test]
    fn deviation_score_five_mads_out() {
        // Spread sample whose median is 0 and MAD is 1, with one point at 5 MADs.
        let xs = [-2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 5.0];
        let scores = deviation_scores(&xs).unwrap();
        assert!((scores[7] - 5.0).abs() < 1e-12);
    }

    /// Student-t CDF by adaptive Simpson quadrature of the density, with the
    /// normalization constant built from the half-integer gamma recurrence.
    /// Shares no code with the production quantile path.
    fn t_cdf_quadrature(t: f64, dof: u32) -> f64 {
        let v = f64::from(dof);
        let norm = (ln_gamma_half_recurrence(dof + 1)
            - 0.5 * (v * std::f64::consts::PI).ln()
            - ln_gamma_half_recurrence(dof))
        .exp();
        let pdf = |x: f64| norm * (1.0 + x * x / v).powf(-(v + 1.0) / 2.0);
        0.5 + simpson_adaptive(&pdf, 0.0, t.abs(), 1e-12, 30) * t.signum()
    }

    /// ln Gamma(half/2) for integer `half`, via Gamma(x+1) = x Gamma(x) down
    /// to Gamma(1) = 1 or Gamma(1/2) = sqrt(pi).
    fn ln_gamma_half_recurrence(half: u32) -> f64 {
        let mut x = f64::from(half) / 2.0;
        let mut acc = 0.0;
        while x > 1.0 {
            x -= 1.0;
            acc += x.ln();
        }
        if (x - 0.5).abs() < 1e-12 {
            acc + 0.5 * std::f64::consts::PI.ln()
        } else {
            acc // Gamma(1) = 1
        }
    }

    fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
        }
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            whole: f64,
            eps: f64,
            depth: u32,
        ) -> f64 {
            let m = (a + b) / 2.0;
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, m, left, eps / 2.0, depth - 1)
                    + recurse(f, m, b, right, eps / 2.0, depth - 1)
            }
        }
        if a == b {
            return 0.0;
        }
        recurse(f, a, b, simpson(f, a, b), eps, depth)
    }

    /// Independent oracle for the critical value: invert the quadrature CDF
    /// by bisection, then apply the lambda formula directly.
    fn lambda_oracle(n: usize, k: usize, alpha: f64) -> f64 {
        let nk = (n - k) as f64;
        let dof = (n - k - 1) as u32;
        let p = 1.0 - alpha / (2.0 * (nk + 1.0));
        let (mut lo, mut hi) = (0.0_f64, 1000.0_f64);
        for _ in 0..200 {
            let mid = (lo + hi) / 2.0;
            if t_cdf_quadrature(mid, dof) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (lo + hi) / 2.0;
        nk * t / ((f64::from(dof) + t * t) * (nk + 1.0)).sqrt()
    }

    #[test]
    fn critical_value_matches_quadrature_oracle() {
        for &(n, k, alpha) in &[
            (25usize, 0usize, 0.05),
            (25, 3, 0.05),
            (1000, 0, 0.05),
            (1000, 50, 0.05),
            (200, 2, 0.01),
        ] {
            let got = esd_critical_value(n, k, alpha).unwrap();
            let expected = lambda_oracle(n, k, alpha);
            assert!(
                (got - expected).abs() < 1e-6,
                "n={n} k={k} alpha={alpha}: got {got}, oracle {expected}"
            );
        }
    }

    #[test]
    fn critical_value_is_positive_over_a_grid() {
        for n in [10usize, 25, 100, 600] {
            for k in 0..5usize {
                for alpha in [0.01, 0.05, 0.1] {
                    assert!(esd_critical_value(n, k, alpha).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn degenerate_sample_is_rejected() {
        assert!(matches!(
            esd_critical_value(4, 2, 0.05),
            Err(TelemetryError::DegenerateSample { .. })
        ));
        assert!(matches!(
            esd_critical_value(10, 0, 0.0),
            Err(TelemetryError::BadAlpha { .. })
        ));
    }

    fn make_series(values: Vec<f64>, period: Option<usize>) -> TelemetrySeries {
        TelemetrySeries::new("m", (0..values.len() as i64).collect(), values, period).unwrap()
    }

    #[test]
    fn constant_series_has_no_anomalies() {
        let s = make_series(vec![5.0; 64], Some(8));
        assert!(detect_anomalies(&s, 0.05, 10).unwrap().is_empty());
    }

    #[test]
    fn single_huge_spike_is_found_at_its_injection_site() {
        let n = 200;
        let spike_at = 133;
        let mut values: Vec<f64> = (0..n)
            .map(|i| 20.0 * (TAU * i as f64 / 24.0).sin())
            .collect();
        // Deterministic small ripple so the MAD is nonzero.
        for (i, v) in values.iter_mut().enumerate() {
            *v += 0.05 * (TAU * i as f64 / 7.0).cos();
        }
        let std = stddev(&values);
        values[spike_at] += 50.0 * std;
        let s = make_series(values, Some(24));
        let points = detect_anomalies(&s, 0.05, 1).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].index, spike_at);
        assert!(points[0].score > points[0].critical_value);
    }

    #[test]
    fn emits_at_most_the_requested_limit() {
        let mut values: Vec<f64> = (0..120)
            .map(|i| (TAU * i as f64 / 12.0).sin() + 0.02 * (i as f64 * 0.71).cos())
            .collect();
        for idx in [10, 40, 80, 100] {
            values[idx] += 400.0;
        }
        let s = make_series(values, Some(12));
        let points = detect_anomalies(&s, 0.05, 2).unwrap();
        assert_eq!(points.len(), 2);
        // Report order is by index even though removal order is by severity.
        assert!(points.windows(2).all(|w| w[0].index < w[1].index));
    }

    #[test]
    fn stops_after_the_three_injected_spikes_with_headroom() {
        // Three spikes, a cap of 10: the loop must remove exactly the
        // injected points and then stop on its own when the next candidate
        // falls below the critical value.
        let injected = [31usize, 77, 142];
        let mut values: Vec<f64> = (0..216)
            .map(|i| 6.0 * (TAU * i as f64 / 24.0).sin() + 0.12 * (TAU * i as f64 / 7.0).cos())
            .collect();
        for (j, &idx) in injected.iter().enumerate() {
            values[idx] += 30.0 + 10.0 * j as f64;
        }
        let s = make_series(values, Some(24));
        let points = detect_anomalies(&s, 0.05, 10).unwrap();
        let got: Vec<usize> = points.iter().map(|p| p.index).collect();
        assert_eq!(got, injected);
        assert!(points.iter().all(|p| p.score > p.critical_value));
    }

    fn stddev(xs: &[f64]) -> f64 {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    }
}
