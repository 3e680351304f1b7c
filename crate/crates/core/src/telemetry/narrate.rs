//! Telemetry-to-text: turn detected deviations into sentences a language
//! model can use, and rank them against the user's question.

use std::collections::BTreeMap;

use crate::embed::{BaseEmbedder, SourceKind};
use crate::knobspace::KnobRegistry;

use super::{AnomalyNarrative, AnomalyPoint, MetricCatalogEntry, TelemetryError};

/// Metric-keyed catalog of explanations and related knobs.
#[derive(Debug, Clone, Default)]
pub struct MetricCatalog {
    entries: BTreeMap<String, MetricCatalogEntry>,
}

impl MetricCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: MetricCatalogEntry) {
        self.entries.insert(entry.metric.clone(), entry);
    }

    pub fn get(&self, metric: &str) -> Option<&MetricCatalogEntry> {
        self.entries.get(metric)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Render the narrative for a detected anomaly, failing when the metric
    /// has no catalog entry.
    pub fn narrate(
        &self,
        anomaly: &AnomalyPoint,
        normal: f64,
    ) -> Result<AnomalyNarrative, TelemetryError> {
        let entry =
            self.get(&anomaly.metric)
                .ok_or_else(|| TelemetryError::MissingCatalogEntry {
                    metric: anomaly.metric.clone(),
                })?;
        Ok(narrate(anomaly, entry, normal))
    }
}

/// Parse a catalog file: one metric per line, `metric | explanation | knobs`
/// with comma-separated knob names, validated against the registry.
pub fn parse_catalog(text: &str, registry: &KnobRegistry) -> Result<MetricCatalog, TelemetryError> {
    let mut catalog = MetricCatalog::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 3 {
            return Err(TelemetryError::MalformedCatalog {
                line: line_no,
                message: format!("expected 3 `|`-separated fields, found {}", fields.len()),
            });
        }
        let metric = fields[0].trim().to_string();
        if metric.is_empty() {
            return Err(TelemetryError::MalformedCatalog {
                line: line_no,
                message: "empty metric name".into(),
            });
        }
        let related_knobs: Vec<String> = fields[2]
            .split(',')
            .map(|k| k.trim().to_string())
            .filter(|k| !k.is_empty())
            .collect();
        for knob in &related_knobs {
            if !registry.contains(knob) {
                return Err(TelemetryError::MalformedCatalog {
                    line: line_no,
                    message: format!("unknown related knob `{knob}` for metric `{metric}`"),
                });
            }
        }
        catalog.insert(MetricCatalogEntry {
            metric,
            explanation: fields[1].trim().to_string(),
            related_knobs,
        });
    }
    Ok(catalog)
}

/// Render the narrative sentence for one anomaly:
///
/// ```text
/// the value of <metric> changed from <normal> to <observed>
///   [and the related knob(s) is/are <knobs>][; <explanation>]
/// ```
pub fn narrate(
    anomaly: &AnomalyPoint,
    entry: &MetricCatalogEntry,
    normal: f64,
) -> AnomalyNarrative {
    let normal_text = format_value(normal);
    let observed_text = format_value(anomaly.observed);
    let mut text = format!(
        "the value of {} changed from {} to {}",
        anomaly.metric, normal_text, observed_text
    );
    match entry.related_knobs.len() {
        0 => {}
        1 => {
            text.push_str(&format!(
                " and the related knob is {}",
                entry.related_knobs[0]
            ));
        }
        _ => {
            text.push_str(&format!(
                " and the related knobs are {}",
                entry.related_knobs.join(", ")
            ));
        }
    }
    if !entry.explanation.is_empty() {
        text.push_str("; ");
        text.push_str(&entry.explanation);
    }
    AnomalyNarrative {
        metric: anomaly.metric.clone(),
        explanation: entry.explanation.clone(),
        normal_value: normal,
        anomalous_value: anomaly.observed,
        related_knobs: entry.related_knobs.clone(),
        text,
    }
}

/// Format a metric value without an exponent for |x| < 10^7; integral values
/// drop the decimal point entirely.
pub fn format_value(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x.abs() < 1e7 {
        if x == x.trunc() {
            format!("{x:.0}")
        } else {
            format!("{x}")
        }
    } else {
        format!("{x:e}")
    }
}

/// Rank narratives by cosine similarity between their text and the question
/// text under the base embedder, ties broken by metric name, and keep the
/// top `k`.
pub fn select_relevant(
    narratives: &[AnomalyNarrative],
    question_text: &str,
    k: usize,
    embedder: &dyn BaseEmbedder,
) -> Vec<AnomalyNarrative> {
    if k == 0 || narratives.is_empty() {
        return Vec::new();
    }
    let question = match embedder.embed(question_text, SourceKind::Question) {
        Ok(v) => v,
        Err(_) => return narratives.iter().take(k).cloned().collect(),
    };
    let mut scored: Vec<(f64, &AnomalyNarrative)> = narratives
        .iter()
        .map(|n| {
            let sim = embedder
                .embed(&n.text, SourceKind::Question)
                .map(|v| question.cosine(&v))
                .unwrap_or(f64::NEG_INFINITY);
            (sim, n)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.metric.cmp(&b.1.metric))
    });
    scored.into_iter().take(k).map(|(_, n)| n.clone()).collect()
}
