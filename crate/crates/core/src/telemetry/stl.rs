//! Seasonal-trend decomposition via LOESS.
//!
//! Classic inner loop: the seasonal component comes from per-phase LOESS
//! smoothing of the cycle subseries followed by a low-pass correction, the
//! trend from a LOESS smooth of the deseasonalized series. Robustness comes
//! from outlier replacement: points whose first-pass residual is grossly
//! deviant are patched with their fitted values and the loop reruns, so a
//! large spike cannot drag the seasonal fit of its phase neighbors with it.
//! The residual is always the remainder against the original values, so the
//! reconstruction identity holds by construction.

use crate::mathx::median_lower;

use super::loess::{loess_at, loess_smooth, next_odd};
use super::{Decomposition, TelemetryError, TelemetrySeries};

/// Span (in cycle-subseries points) of the seasonal smoother.
const SEASONAL_SPAN: usize = 7;
/// Minimum ACF peak for an inferred period to be trusted.
const ACF_ACCEPT: f64 = 0.3;
/// Robust z-score beyond which a point is patched out of the smoothing
/// input.
const PATCH_Z: f64 = 4.0;
/// Replacement passes; each one shrinks outlier leakage geometrically.
const PATCH_PASSES: usize = 3;

/// Decompose a series into seasonal + trend + residual.
///
/// The period is taken from the series when present, otherwise inferred from
/// the autocorrelation peak over lags `[4, n/2]`. Without a usable period
/// (none found, or fewer than two full cycles of data) the seasonal part is
/// identically zero and the trend is a LOESS smooth of the raw series.
pub fn stl_decompose(series: &TelemetrySeries) -> Result<Decomposition, TelemetryError> {
    let values = &series.values;
    let n = values.len();
    if n < 4 {
        return Err(TelemetryError::SeriesTooShort { len: n, min: 4 });
    }
    let period = series.period.or_else(|| infer_period(values));
    let usable = period.filter(|&p| p >= 2 && n >= 2 * p);

    let (mut seasonal, mut trend) = components(values, usable);
    let mut current: Vec<f64> = values.clone();
    for _ in 0..PATCH_PASSES {
        let residual = remainder(&current, &seasonal, &trend);
        let Some(outliers) = gross_outliers(&residual, values) else {
            break;
        };
        // Replace gross outliers with a robust stand-in and refit. The
        // stand-in is the median of the point's detrended cycle subseries
        // (its own phase), plus the trend back: immune to the outlier itself
        // and to any fit error the outlier caused, so neither spikes nor
        // their smoothing victims get locked in.
        for &j in &outliers {
            current[j] = match usable {
                Some(p) => phase_median_detrended(&current, &trend, p, j) + trend[j],
                None => trend[j],
            };
        }
        let (s, t) = components(&current, usable);
        seasonal = s;
        trend = t;
    }

    let residual = remainder(values, &seasonal, &trend);
    Ok(Decomposition {
        seasonal,
        trend,
        residual,
    })
}

fn components(values: &[f64], usable_period: Option<usize>) -> (Vec<f64>, Vec<f64>) {
    match usable_period {
        Some(p) => seasonal_trend(values, p),
        None => {
            let n = values.len();
            let span = next_odd((n / 2).max(7));
            (vec![0.0; n], loess_smooth(values, span))
        }
    }
}

fn remainder(values: &[f64], seasonal: &[f64], trend: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(seasonal.iter().zip(trend.iter()))
        .map(|(v, (s, t))| v - (s + t))
        .collect()
}

/// Indices whose residual deviates grossly (robust z above [`PATCH_Z`]).
/// `None` when there are no such points, or when the residual scale is
/// negligible relative to the data and patching would chase rounding noise.
fn gross_outliers(residual: &[f64], values: &[f64]) -> Option<Vec<usize>> {
    let med = median_lower(residual).expect("residual is nonempty");
    let deviations: Vec<f64> = residual.iter().map(|r| (r - med).abs()).collect();
    let mad = median_lower(&deviations).expect("nonempty");
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if mad <= 1e-12 * scale {
        return None;
    }
    let sigma = super::esd::MAD_CONSISTENCY * mad;
    let outliers: Vec<usize> = residual
        .iter()
        .enumerate()
        .filter(|(_, r)| (**r - med).abs() / sigma > PATCH_Z)
        .map(|(j, _)| j)
        .collect();
    if outliers.is_empty() {
        None
    } else {
        Some(outliers)
    }
}

/// Median of `current[phase], current[phase + p], ...` after subtracting the
/// running trend estimate, for the phase of index `j`.
fn phase_median_detrended(current: &[f64], trend: &[f64], p: usize, j: usize) -> f64 {
    let phase = j % p;
    let detrended: Vec<f64> = (phase..current.len())
        .step_by(p)
        .map(|i| current[i] - trend[i])
        .collect();
    median_lower(&detrended).expect("phase subseries is nonempty")
}

fn seasonal_trend(values: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();

    // Cycle-subseries smoothing, extended one cycle before and after so the
    // moving-average chain below comes back centered at length n.
    // `cext[j]` holds the smoothed value for original position `j - p`.
    let mut cext = vec![0.0; n + 2 * p];
    let mut sub = Vec::with_capacity(n / p + 1);
    for phase in 0..p {
        sub.clear();
        let mut idx = phase;
        while idx < n {
            sub.push(values[idx]);
            idx += p;
        }
        let m = sub.len() as isize;
        for cycle in -1..=m {
            // Real cycles are fitted leave-one-out: a point's seasonal value
            // is predicted from its phase neighbors, never from itself, so a
            // single extreme sample cannot absorb itself into the seasonal.
            let exclude = (cycle >= 0 && cycle < m).then_some(cycle as usize);
            let fitted = loess_at(&sub, cycle as f64, SEASONAL_SPAN, exclude);
            let j = (cycle + 1) as usize * p + phase;
            cext[j] = fitted;
        }
    }

    // Low-pass filter: moving averages of length p, p, 3, then a LOESS
    // polish; subtracting it recenters the seasonal around zero.
    let l1 = moving_average(&cext, p);
    let l2 = moving_average(&l1, p);
    let l3 = moving_average(&l2, 3);
    debug_assert_eq!(l3.len(), n);
    let low = loess_smooth(&l3, next_odd(p));

    let seasonal: Vec<f64> = (0..n).map(|j| cext[j + p] - low[j]).collect();

    let deseason: Vec<f64> = values
        .iter()
        .zip(seasonal.iter())
        .map(|(v, s)| v - s)
        .collect();
    let trend_span = next_odd((3 * p).div_ceil(2));
    let trend = loess_smooth(&deseason, trend_span);
    (seasonal, trend)
}

fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    debug_assert!(window >= 1 && xs.len() >= window);
    let mut out = Vec::with_capacity(xs.len() - window + 1);
    let mut sum: f64 = xs[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..xs.len() {
        sum += xs[i] - xs[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Infer the dominant period from the autocorrelation function: the argmax
/// over lags `[4, n/2]`, accepted only when the peak exceeds 0.3.
pub fn infer_period(values: &[f64]) -> Option<usize> {
    let n = values.len();
    if n < 8 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    if var <= f64::EPSILON * n as f64 {
        return None;
    }
    let mut best_lag = 0;
    let mut best_acf = f64::NEG_INFINITY;
    for lag in 4..=n / 2 {
        let mut num = 0.0;
        for t in 0..n - lag {
            num += (values[t] - mean) * (values[t + lag] - mean);
        }
        let acf = num / var;
        if acf > best_acf {
            best_acf = acf;
            best_lag = lag;
        }
    }
    (best_acf > ACF_ACCEPT).then_some(best_lag)
}
