//! Telemetry ingestion: per-metric CSV files and the directory-level
//! analysis pass.

use std::path::Path;

use rayon::prelude::*;

use super::esd::{default_max_anomalies, detect_anomalies};
use super::narrate::MetricCatalog;
use super::{AnomalyNarrative, TelemetryError, TelemetrySeries};
use crate::mathx::percentile_linear;

/// Load one exported metric: a CSV of `timestamp,value` rows (integer
/// seconds, decimal value). The metric name is the file stem. An optional
/// header row is skipped.
pub fn load_series_csv(path: &Path) -> Result<TelemetrySeries, TelemetryError> {
    let metric = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text = std::fs::read_to_string(path)?;
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (ts_str, val_str) =
            line.split_once(',')
                .ok_or_else(|| TelemetryError::MalformedSeries {
                    metric: metric.clone(),
                    line: line_no,
                    message: "expected `timestamp,value`".into(),
                })?;
        if line_no == 1 && ts_str.trim().parse::<i64>().is_err() {
            continue; // header row
        }
        let ts: i64 = ts_str
            .trim()
            .parse()
            .map_err(|_| TelemetryError::MalformedSeries {
                metric: metric.clone(),
                line: line_no,
                message: format!("bad timestamp `{ts_str}`"),
            })?;
        let val: f64 = val_str
            .trim()
            .parse()
            .map_err(|_| TelemetryError::MalformedSeries {
                metric: metric.clone(),
                line: line_no,
                message: format!("bad value `{val_str}`"),
            })?;
        timestamps.push(ts);
        values.push(val);
    }
    TelemetrySeries::new(metric, timestamps, values, None)
}

/// Write a series in the CSV format read by [`load_series_csv`].
pub fn save_series_csv(series: &TelemetrySeries, path: &Path) -> Result<(), TelemetryError> {
    let mut out = String::new();
    for (ts, val) in series.timestamps.iter().zip(series.values.iter()) {
        out.push_str(&format!("{ts},{val}\n"));
    }
    crate::write_atomic(path, out.as_bytes())?;
    Ok(())
}

/// Tuning for the directory analysis pass.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisConfig {
    /// ESD significance level.
    pub alpha: f64,
    /// Cap on anomalies per metric; `None` uses 5% of the series length.
    pub max_anomalies: Option<usize>,
    /// Percentile representing the normal value, e.g. 5.0.
    pub normal_percentile: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.05,
            max_anomalies: None,
            normal_percentile: 5.0,
        }
    }
}

/// Per-metric failure from a directory analysis; analysis of the other
/// metrics proceeds regardless.
#[derive(Debug)]
pub struct MetricFailure {
    pub metric: String,
    pub error: TelemetryError,
}

/// Analyze every `*.csv` metric under `dir`: decompose, detect anomalies,
/// and narrate the most severe deviation of each anomalous metric.
///
/// Metrics are independent, so the pass runs in parallel; results come back
/// sorted by metric name for determinism.
pub fn analyze_dir(
    dir: &Path,
    catalog: &MetricCatalog,
    config: &AnalysisConfig,
) -> Result<(Vec<AnomalyNarrative>, Vec<MetricFailure>), TelemetryError> {
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();

    let results: Vec<Result<Option<AnomalyNarrative>, MetricFailure>> = paths
        .par_iter()
        .map(|path| analyze_one(path, catalog, config))
        .collect();

    let mut narratives = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(Some(n)) => narratives.push(n),
            Ok(None) => {}
            Err(f) => failures.push(f),
        }
    }
    narratives.sort_by(|a, b| a.metric.cmp(&b.metric));
    Ok((narratives, failures))
}

fn analyze_one(
    path: &Path,
    catalog: &MetricCatalog,
    config: &AnalysisConfig,
) -> Result<Option<AnomalyNarrative>, MetricFailure> {
    let wrap = |metric: &str, error: TelemetryError| MetricFailure {
        metric: metric.to_string(),
        error,
    };
    let metric_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = load_series_csv(path).map_err(|e| wrap(&metric_name, e))?;
    let cap = config
        .max_anomalies
        .unwrap_or_else(|| default_max_anomalies(series.values.len()));
    let points =
        detect_anomalies(&series, config.alpha, cap).map_err(|e| wrap(&series.metric, e))?;
    let Some(worst) = points.iter().max_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.index.cmp(&a.index))
    }) else {
        return Ok(None);
    };
    let normal =
        percentile_linear(&series.values, config.normal_percentile).expect("series is nonempty");
    let narrative = catalog
        .narrate(worst, normal)
        .map_err(|e| wrap(&series.metric, e))?;
    Ok(Some(narrative))
}
