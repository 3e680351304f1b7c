//! Telemetry analysis: seasonal-trend decomposition, robust anomaly
//! detection over per-metric time series, telemetry-to-text narration, and
//! question-relevance selection.
//!
//! Per-metric analysis is independent and runs in parallel across metrics
//! (see [`analyze_dir`]); a single-series analysis is sequential and
//! deterministic.

mod esd;
mod io;
mod loess;
mod narrate;
mod stl;

pub use esd::{
    default_max_anomalies, detect_anomalies, deviation_scores, esd_critical_value, mad,
    MAD_CONSISTENCY,
};
pub use io::{analyze_dir, load_series_csv, save_series_csv, AnalysisConfig, MetricFailure};
pub use narrate::{format_value, narrate, parse_catalog, select_relevant, MetricCatalog};
pub use stl::{infer_period, stl_decompose};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Timestamped values of one performance metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySeries {
    pub metric: String,
    /// Strictly increasing integer seconds.
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    /// Samples per season, when known; inferred otherwise.
    pub period: Option<usize>,
}

impl TelemetrySeries {
    pub fn new(
        metric: impl Into<String>,
        timestamps: Vec<i64>,
        values: Vec<f64>,
        period: Option<usize>,
    ) -> Result<Self, TelemetryError> {
        let metric = metric.into();
        if timestamps.len() != values.len() {
            return Err(TelemetryError::MalformedSeries {
                metric,
                line: 0,
                message: format!("{} timestamps vs {} values", timestamps.len(), values.len()),
            });
        }
        if let Some(pos) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(TelemetryError::MalformedSeries {
                metric,
                line: pos + 2,
                message: "timestamps must be strictly increasing".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TelemetryError::MalformedSeries {
                metric,
                line: 0,
                message: "non-finite value".into(),
            });
        }
        Ok(TelemetrySeries {
            metric,
            timestamps,
            values,
            period,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Additive decomposition of a series. The residual is defined as
/// `value - (seasonal + trend)`, so reconstruction is exact by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub seasonal: Vec<f64>,
    pub trend: Vec<f64>,
    pub residual: Vec<f64>,
}

/// One removed point from the iterative outlier test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPoint {
    pub metric: String,
    pub index: usize,
    pub timestamp: i64,
    pub observed: f64,
    /// Robust deviation score on the sigma scale (MAD-based, consistency
    /// scaled); always exceeds `critical_value`.
    pub score: f64,
    /// Iteration at which the point was removed (1-based).
    pub iteration: usize,
    /// The ESD critical value of that iteration.
    pub critical_value: f64,
}

/// A detected deviation rendered as a sentence, with the knobs that can
/// influence the metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyNarrative {
    pub metric: String,
    pub explanation: String,
    pub normal_value: f64,
    pub anomalous_value: f64,
    pub related_knobs: Vec<String>,
    pub text: String,
}

/// Catalog record mapping a metric to its explanation and related knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCatalogEntry {
    pub metric: String,
    pub explanation: String,
    pub related_knobs: Vec<String>,
}

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("series has {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("median absolute deviation is zero; no meaningful deviations")]
    ZeroMad,
    #[error("degenerate sample for the outlier test: n={n}, k={k}")]
    DegenerateSample { n: usize, k: usize },
    #[error("alpha {alpha} outside (0, 1)")]
    BadAlpha { alpha: f64 },
    #[error("malformed series `{metric}` at line {line}: {message}")]
    MalformedSeries {
        metric: String,
        line: usize,
        message: String,
    },
    #[error("malformed catalog at line {line}: {message}")]
    MalformedCatalog { line: usize, message: String },
    #[error("no catalog entry for metric `{metric}`")]
    MissingCatalogEntry { metric: String },
}

/// Linear-interpolated percentile of the raw values; the conventional
/// "normal point" is the 5th percentile.
pub fn normal_value(values: &[f64], percentile: f64) -> Result<f64, TelemetryError> {
    crate::mathx::percentile_linear(values, percentile).ok_or(TelemetryError::EmptyInput)
}
