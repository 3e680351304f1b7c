//! Canonical registry of configurable knobs.
//!
//! A knob is a named DBMS configuration parameter with a typed value domain
//! (boolean, integer, real, or enumeration). The registry is loaded once from
//! a line-delimited file and is immutable afterwards, so shared concurrent
//! reads are safe. On top of the registry this module provides:
//!
//! - [`extract_knobs`]: whole-token, case-insensitive extraction of knob
//!   mentions from free text,
//! - [`parse_recommendations`]: parsing of `{knob: value, ...}` dictionary
//!   blocks emitted by a model, with per-entry validation,
//! - [`KnobSpec::validate_value`]: domain membership checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textutil::tokens;

/// Value kind of a knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnobKind {
    Boolean,
    Integer,
    Real,
    Enumeration,
}

impl fmt::Display for KnobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KnobKind::Boolean => "boolean",
            KnobKind::Integer => "integer",
            KnobKind::Real => "real",
            KnobKind::Enumeration => "enumeration",
        };
        f.write_str(s)
    }
}

/// Kind-specific value domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KnobDomain {
    /// `{0, 1}` plus the usual on/off spellings.
    Boolean,
    /// Inclusive integer range. Bounds are wide enough for 64-bit unsigned
    /// DBMS limits such as `2^64 - 1`.
    Integer { min: i128, max: i128 },
    /// Inclusive real range.
    Real { min: f64, max: f64 },
    /// Closed set of literals; membership is case-insensitive and values are
    /// canonicalized to the registry spelling.
    Enumeration { literals: Vec<String> },
}

impl KnobDomain {
    pub fn kind(&self) -> KnobKind {
        match self {
            KnobDomain::Boolean => KnobKind::Boolean,
            KnobDomain::Integer { .. } => KnobKind::Integer,
            KnobDomain::Real { .. } => KnobKind::Real,
            KnobDomain::Enumeration { .. } => KnobKind::Enumeration,
        }
    }
}

/// Parsed scalar form of a knob value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParsedValue {
    Bool(bool),
    /// Integers carry byte-unit suffixes K/M/G multiplied out
    /// (2^10 / 2^20 / 2^30; suffixes are case-insensitive).
    Integer(i128),
    Real(f64),
    Enum(String),
}

/// A value as written plus its deterministic parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobValue {
    pub raw: String,
    pub parsed: ParsedValue,
}

impl fmt::Display for KnobValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// A knob/value assignment proposed as a fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub knob: String,
    pub value: KnobValue,
}

/// One configurable knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobSpec {
    /// Exact DBMS spelling, e.g. `innodb_buffer_pool_size`.
    pub name: String,
    pub domain: KnobDomain,
    pub default: Option<KnobValue>,
    pub description: String,
    /// Telemetry metric names this knob can influence.
    pub related_metrics: Vec<String>,
}

/// Result of a domain check. A violation is a value, not a fault.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueCheck {
    Ok,
    Violation(String),
}

impl ValueCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValueCheck::Ok)
    }
}

impl KnobSpec {
    pub fn kind(&self) -> KnobKind {
        self.domain.kind()
    }

    /// Parse a raw string into a value of this knob's kind.
    ///
    /// Returns a violation description when the string does not parse at all
    /// (an out-of-range but well-formed value parses fine and is rejected by
    /// [`KnobSpec::validate_value`] instead).
    pub fn parse_value(&self, raw: &str) -> Result<KnobValue, String> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err("empty value".to_string());
        }
        let parsed = match &self.domain {
            KnobDomain::Boolean => match trimmed.to_ascii_lowercase().as_str() {
                "0" | "off" | "false" => ParsedValue::Bool(false),
                "1" | "on" | "true" => ParsedValue::Bool(true),
                other => return Err(format!("`{other}` is not a boolean (0/1/on/off)")),
            },
            KnobDomain::Integer { .. } => ParsedValue::Integer(parse_integer(trimmed)?),
            KnobDomain::Real { .. } => ParsedValue::Real(
                trimmed
                    .parse::<f64>()
                    .map_err(|_| format!("`{trimmed}` is not a real number"))?,
            ),
            KnobDomain::Enumeration { literals } => {
                match literals.iter().find(|l| l.eq_ignore_ascii_case(trimmed)) {
                    Some(canon) => ParsedValue::Enum(canon.clone()),
                    None => {
                        return Err(format!(
                            "`{trimmed}` is not one of {{{}}}",
                            literals.join(", ")
                        ))
                    }
                }
            }
        };
        Ok(KnobValue {
            raw: trimmed.to_string(),
            parsed,
        })
    }

    /// Check that a parsed value lies in this knob's domain.
    pub fn validate_value(&self, value: &KnobValue) -> ValueCheck {
        match (&self.domain, &value.parsed) {
            (KnobDomain::Boolean, ParsedValue::Bool(_)) => ValueCheck::Ok,
            (KnobDomain::Integer { min, max }, ParsedValue::Integer(v)) => {
                if v < min || v > max {
                    ValueCheck::Violation(format!(
                        "{} = {} outside integer domain [{min}, {max}]",
                        self.name, value.raw
                    ))
                } else {
                    ValueCheck::Ok
                }
            }
            (KnobDomain::Real { min, max }, ParsedValue::Real(v)) => {
                if *v < *min || *v > *max || !v.is_finite() {
                    ValueCheck::Violation(format!(
                        "{} = {} outside real domain [{min}, {max}]",
                        self.name, value.raw
                    ))
                } else {
                    ValueCheck::Ok
                }
            }
            (KnobDomain::Enumeration { literals }, ParsedValue::Enum(v)) => {
                if literals.iter().any(|l| l == v) {
                    ValueCheck::Ok
                } else {
                    ValueCheck::Violation(format!(
                        "{} = {} not in {{{}}}",
                        self.name,
                        value.raw,
                        literals.join(", ")
                    ))
                }
            }
            (domain, _) => ValueCheck::Violation(format!(
                "{} = {} has the wrong kind for a {} knob",
                self.name,
                value.raw,
                domain.kind()
            )),
        }
    }
}

fn parse_integer(s: &str) -> Result<i128, String> {
    let lower = s.to_ascii_lowercase();
    let (digits, multiplier) = match lower.strip_suffix(['k', 'm', 'g']) {
        Some(stem) => {
            let mult: i128 = match lower.as_bytes()[lower.len() - 1] {
                b'k' => 1 << 10,
                b'm' => 1 << 20,
                _ => 1 << 30,
            };
            (stem, mult)
        }
        None => (lower.as_str(), 1),
    };
    let base: i128 = digits
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not an integer"))?;
    base.checked_mul(multiplier)
        .ok_or_else(|| format!("`{s}` overflows the integer range"))
}

/// Errors raised while loading a registry file.
#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("failed to read registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed registry at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate knob `{name}` at line {line}")]
    DuplicateKnob { name: String, line: usize },
}

/// Name-keyed, immutable collection of knobs.
///
/// Lookup by name is exact; iteration is lexicographic by name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KnobRegistry {
    knobs: BTreeMap<String, KnobSpec>,
    dbms_label: String,
    /// Lowercased name -> canonical name, for case-insensitive extraction.
    #[serde(skip)]
    lower_index: HashMap<String, String>,
}

impl KnobRegistry {
    pub fn new(dbms_label: impl Into<String>) -> Self {
        KnobRegistry {
            knobs: BTreeMap::new(),
            dbms_label: dbms_label.into(),
            lower_index: HashMap::new(),
        }
    }

    pub fn dbms_label(&self) -> &str {
        &self.dbms_label
    }

    /// Insert a knob, rejecting duplicates. `line` is used for reporting only.
    fn insert(&mut self, spec: KnobSpec, line: usize) -> Result<(), RegistryError> {
        if spec.name.is_empty() {
            return Err(RegistryError::Malformed {
                line,
                message: "empty knob name".into(),
            });
        }
        if self.knobs.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateKnob {
                name: spec.name,
                line,
            });
        }
        self.lower_index
            .insert(spec.name.to_ascii_lowercase(), spec.name.clone());
        self.knobs.insert(spec.name.clone(), spec);
        Ok(())
    }

    /// Build a registry from already-validated specs (used by generators and
    /// tests). Duplicates are rejected.
    pub fn from_specs(
        dbms_label: impl Into<String>,
        specs: impl IntoIterator<Item = KnobSpec>,
    ) -> Result<Self, RegistryError> {
        let mut reg = KnobRegistry::new(dbms_label);
        for (i, spec) in specs.into_iter().enumerate() {
            validate_spec(&spec, i + 1)?;
            reg.insert(spec, i + 1)?;
        }
        Ok(reg)
    }

    pub fn get(&self, name: &str) -> Option<&KnobSpec> {
        self.knobs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.knobs.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.knobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knobs.is_empty()
    }

    /// Knobs in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = &KnobSpec> {
        self.knobs.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.knobs.keys().map(String::as_str)
    }

    fn canonical_for_token(&self, lower_token: &str) -> Option<&str> {
        self.lower_index.get(lower_token).map(String::as_str)
    }
}

fn validate_spec(spec: &KnobSpec, line: usize) -> Result<(), RegistryError> {
    match &spec.domain {
        KnobDomain::Integer { min, max } if min > max => {
            return Err(RegistryError::Malformed {
                line,
                message: format!("{}: integer domain min {min} > max {max}", spec.name),
            });
        }
        KnobDomain::Real { min, max } if min > max => {
            return Err(RegistryError::Malformed {
                line,
                message: format!("{}: real domain min {min} > max {max}", spec.name),
            });
        }
        KnobDomain::Enumeration { literals } if literals.is_empty() => {
            return Err(RegistryError::Malformed {
                line,
                message: format!("{}: enumeration without literals", spec.name),
            });
        }
        _ => {}
    }
    if let Some(default) = &spec.default {
        if let ValueCheck::Violation(v) = spec.validate_value(default) {
            return Err(RegistryError::Malformed {
                line,
                message: format!("default violates domain: {v}"),
            });
        }
    }
    Ok(())
}

/// Load a registry from its line-delimited file format.
///
/// One knob per line, fields separated by `|` with `\` as the escape
/// character:
///
/// ```text
/// name | kind | domain | default | description | related_metrics
/// ```
///
/// `domain` is `min..max` for integer/real kinds (integer bounds may carry
/// K/M/G suffixes), a comma-separated literal list for enumerations, and
/// empty (or `0,1`) for booleans. `default` and `related_metrics`
/// (comma-separated) may be empty. Blank lines are ignored.
pub fn load_registry(path: &Path) -> Result<KnobRegistry, RegistryError> {
    let text = std::fs::read_to_string(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_registry(&text, &label)
}

/// Parse registry file content. `dbms_label` tags the registry (e.g.
/// "mysql-5.7").
pub fn parse_registry(text: &str, dbms_label: &str) -> Result<KnobRegistry, RegistryError> {
    let mut reg = KnobRegistry::new(dbms_label);
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let fields = split_escaped(raw_line, '|');
        if fields.len() != 6 {
            return Err(RegistryError::Malformed {
                line: line_no,
                message: format!("expected 6 `|`-separated fields, found {}", fields.len()),
            });
        }
        let name = fields[0].trim().to_string();
        let kind_str = fields[1].trim().to_ascii_lowercase();
        let domain_str = fields[2].trim();
        let default_str = fields[3].trim();
        let description = fields[4].trim().to_string();
        let metrics_str = fields[5].trim();

        let domain =
            parse_domain(&kind_str, domain_str).map_err(|message| RegistryError::Malformed {
                line: line_no,
                message,
            })?;
        let related_metrics: Vec<String> = if metrics_str.is_empty() {
            Vec::new()
        } else {
            metrics_str
                .split(',')
                .map(|m| m.trim().to_string())
                .filter(|m| !m.is_empty())
                .collect()
        };
        let mut spec = KnobSpec {
            name,
            domain,
            default: None,
            description,
            related_metrics,
        };
        if !default_str.is_empty() {
            let value =
                spec.parse_value(default_str)
                    .map_err(|message| RegistryError::Malformed {
                        line: line_no,
                        message,
                    })?;
            spec.default = Some(value);
        }
        validate_spec(&spec, line_no)?;
        reg.insert(spec, line_no)?;
    }
    Ok(reg)
}

fn parse_domain(kind: &str, domain: &str) -> Result<KnobDomain, String> {
    match kind {
        "boolean" => {
            if domain.is_empty() || domain == "0,1" {
                Ok(KnobDomain::Boolean)
            } else {
                Err(format!(
                    "boolean domain must be empty or `0,1`, got `{domain}`"
                ))
            }
        }
        "integer" => {
            let (min, max) = split_range(domain)?;
            Ok(KnobDomain::Integer {
                min: parse_integer(min)?,
                max: parse_integer(max)?,
            })
        }
        "real" => {
            let (min, max) = split_range(domain)?;
            Ok(KnobDomain::Real {
                min: min.parse().map_err(|_| format!("bad real bound `{min}`"))?,
                max: max.parse().map_err(|_| format!("bad real bound `{max}`"))?,
            })
        }
        "enumeration" => {
            let literals: Vec<String> = domain
                .split(',')
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            if literals.is_empty() {
                return Err("enumeration domain needs at least one literal".into());
            }
            Ok(KnobDomain::Enumeration { literals })
        }
        other => Err(format!("unknown kind `{other}`")),
    }
}

fn split_range(domain: &str) -> Result<(&str, &str), String> {
    domain
        .split_once("..")
        .map(|(a, b)| (a.trim(), b.trim()))
        .ok_or_else(|| format!("expected `min..max`, got `{domain}`"))
}

/// Split on `sep`, honoring `\` escapes (`\|` keeps a literal separator,
/// `\\` a literal backslash).
fn split_escaped(line: &str, sep: char) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some(next) => current.push(next),
                None => current.push('\\'),
            }
        } else if c == sep {
            fields.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    fields.push(current);
    fields
}

/// Extract every registry knob mentioned in `text` as a whole token.
///
/// Matching is case-insensitive and word-boundary: `autocommit` matches in
/// `autocommit;` but not inside `autocommit_mode`. Returns canonical registry
/// spellings; the empty set when nothing matches.
pub fn extract_knobs(text: &str, registry: &KnobRegistry) -> BTreeSet<String> {
    let mut found = BTreeSet::new();
    for token in tokens(text) {
        if let Some(name) = registry.canonical_for_token(&token) {
            found.insert(name.to_string());
        }
    }
    found
}

/// Why a dictionary entry was rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RejectReason {
    UnknownKnob,
    ValueOutOfDomain(String),
}

/// A `{knob: value}` entry that failed validation, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedEntry {
    pub knob: String,
    pub value: String,
    pub reason: RejectReason,
}

/// Outcome of parsing a recommendation dictionary: validated entries plus
/// per-entry rejections (unknown knobs and out-of-domain values are reported,
/// not silently dropped).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedRecommendations {
    pub accepted: Vec<Recommendation>,
    pub rejected: Vec<RejectedEntry>,
}

/// Raised when a model response carries no dictionary block at all; callers
/// count it as a failed case.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("no `{{knob: value}}` dictionary block found in response")]
pub struct FormatFailure;

/// Parse the first `{knob: value, ...}` dictionary block out of `text`.
///
/// Entries are validated against the registry. `{}` parses to the empty
/// outcome; text without braces is a [`FormatFailure`].
pub fn parse_recommendations(
    text: &str,
    registry: &KnobRegistry,
) -> Result<ParsedRecommendations, FormatFailure> {
    let open = text.find('{').ok_or(FormatFailure)?;
    let close = text[open..].find('}').ok_or(FormatFailure)? + open;
    let body = &text[open + 1..close];

    let mut out = ParsedRecommendations::default();
    for entry in body.split(',') {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        let (key, value) = match entry.split_once(':').or_else(|| entry.split_once('=')) {
            Some(pair) => pair,
            None => {
                out.rejected.push(RejectedEntry {
                    knob: entry.to_string(),
                    value: String::new(),
                    reason: RejectReason::ValueOutOfDomain("missing `:` separator".into()),
                });
                continue;
            }
        };
        let knob = strip_quotes(key.trim()).to_string();
        let raw_value = strip_quotes(value.trim()).to_string();
        let Some(spec) = registry.get(&knob) else {
            out.rejected.push(RejectedEntry {
                knob,
                value: raw_value,
                reason: RejectReason::UnknownKnob,
            });
            continue;
        };
        match spec.parse_value(&raw_value) {
            Ok(parsed) => match spec.validate_value(&parsed) {
                ValueCheck::Ok => out.accepted.push(Recommendation {
                    knob,
                    value: parsed,
                }),
                ValueCheck::Violation(v) => out.rejected.push(RejectedEntry {
                    knob,
                    value: raw_value,
                    reason: RejectReason::ValueOutOfDomain(v),
                }),
            },
            Err(e) => out.rejected.push(RejectedEntry {
                knob,
                value: raw_value,
                reason: RejectReason::ValueOutOfDomain(e),
            }),
        }
    }
    Ok(out)
}

fn strip_quotes(s: &str) -> &str {
    s.trim_matches(|c| c == '"' || c == '\'' || c == '`')
}

/// Render recommendations back into the `{knob: value, ...}` dictionary form
/// accepted by [`parse_recommendations`].
pub fn render_recommendations(recs: &[Recommendation]) -> String {
    let body: Vec<String> = recs
        .iter()
        .map(|r| format!("{}: {}", r.knob, r.value.raw))
        .collect();
    format!("{{{}}}", body.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mini_registry() -> KnobRegistry {
        parse_registry(
            "\
autocommit | boolean | | 1 | enable autocommit mode | \n\
foreign_key_checks | boolean | | 1 | check foreign keys on write | \n\
unique_checks | boolean | | 1 | check uniqueness on insert | \n\
innodb_buffer_pool_size | integer | 5M..4G | 128M | buffer pool bytes | innodb_buffer_pool_reads\n\
wait_timeout | integer | 1..31536000 | 28800 | seconds before closing idle connections | threads_connected\n\
innodb_flush_method | enumeration | fsync,O_DSYNC,O_DIRECT | fsync | how logs and data are flushed | \n\
long_query_ratio | real | 0.0..1.0 | 0.1 | slow query fraction threshold | slow_queries\n",
            "mysql-test",
        )
        .unwrap()
    }

    #[test]
    fn registry_counts_records() {
        assert_eq!(mini_registry().len(), 7);
    }

    #[test]
    fn empty_file_is_empty_registry() {
        let reg = parse_registry("", "empty").unwrap();
        assert_eq!(reg.len(), 0);
    }

    #[test]
    fn duplicate_name_is_rejected() {
        let err =
            parse_registry("a | boolean | | | x | \na | boolean | | | y | \n", "dup").unwrap_err();
        match err {
            RegistryError::DuplicateKnob { name, line } => {
                assert_eq!(name, "a");
                assert_eq!(line, 2);
            }
            other => panic!("expected DuplicateKnob, got {other:?}"),
        }
    }

    #[test]
    fn escaped_pipe_stays_in_field() {
        let reg =
            parse_registry("weird | boolean | | | uses a literal \\| pipe | \n", "esc").unwrap();
        assert_eq!(
            reg.get("weird").unwrap().description,
            "uses a literal | pipe"
        );
    }

    #[test]
    fn registry_iteration_is_lexicographic() {
        let reg = mini_registry();
        let names: Vec<&str> = reg.names().collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
    }

    #[test]
    fn extracts_mentions_from_answer_text() {
        let reg = mini_registry();
        let found = extract_knobs(
            "Disabling foreign_key_checks = 0 and unique_checks = 0 sped things up.",
            &reg,
        );
        let expected: BTreeSet<String> = ["foreign_key_checks", "unique_checks"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(found, expected);
    }

    #[test]
    fn extract_from_empty_text_is_empty() {
        assert!(extract_knobs("", &mini_registry()).is_empty());
    }

    #[test]
    fn extract_rejects_partial_tokens() {
        let reg = mini_registry();
        let text = "set innodb_buffer_pool_size=2G; autocommit off; innodb_buffer_pool_sizes";
        let found = extract_knobs(text, &reg);
        // Independent oracle: per-name character-boundary scan.
        let oracle = whole_token_oracle(text, &reg);
        assert_eq!(found, oracle);
        let expected: BTreeSet<String> = ["innodb_buffer_pool_size", "autocommit"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(found, expected);
    }

    /// Scan for each registry name with explicit word-boundary checks; an
    /// independent route to the same contract as `extract_knobs`.
    fn whole_token_oracle(text: &str, registry: &KnobRegistry) -> BTreeSet<String> {
        let lower_text = text.to_ascii_lowercase();
        let is_word = |c: char| c.is_ascii_alphanumeric() || c == '_';
        let mut found = BTreeSet::new();
        for name in registry.names() {
            let needle = name.to_ascii_lowercase();
            let mut start = 0;
            while let Some(pos) = lower_text[start..].find(&needle) {
                let begin = start + pos;
                let end = begin + needle.len();
                let left_ok =
                    begin == 0 || !lower_text[..begin].chars().next_back().is_some_and(is_word);
                let right_ok = end == lower_text.len()
                    || !lower_text[end..].chars().next().is_some_and(is_word);
                if left_ok && right_ok {
                    found.insert(name.to_string());
                    break;
                }
                start = begin + 1;
            }
        }
        found
    }

    #[test]
    fn parses_recommendation_dictionary() {
        let reg = mini_registry();
        let out =
            parse_recommendations("{autocommit: 0, innodb_buffer_pool_size: 2G}", &reg).unwrap();
        assert!(out.rejected.is_empty());
        assert_eq!(out.accepted.len(), 2);
        assert_eq!(out.accepted[0].knob, "autocommit");
        assert_eq!(out.accepted[0].value.parsed, ParsedValue::Bool(false));
        assert_eq!(out.accepted[1].knob, "innodb_buffer_pool_size");
        assert_eq!(
            out.accepted[1].value.parsed,
            ParsedValue::Integer(2 * (1 << 30))
        );
    }

    #[test]
    fn empty_dictionary_parses_to_nothing() {
        let out = parse_recommendations("{}", &mini_registry()).unwrap();
        assert!(out.accepted.is_empty());
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn prose_without_braces_is_a_format_failure() {
        let err = parse_recommendations(
            "You should consider tuning your buffer pool and checking indexes.",
            &mini_registry(),
        )
        .unwrap_err();
        assert_eq!(err, FormatFailure);
    }

    #[test]
    fn unknown_and_out_of_domain_entries_are_reported_not_dropped() {
        let reg = mini_registry();
        let out = parse_recommendations(
            "{made_up_knob: 3, wait_timeout: 999999999999, autocommit: 0}",
            &reg,
        )
        .unwrap();
        assert_eq!(out.accepted.len(), 1);
        assert_eq!(out.rejected.len(), 2);
        assert_eq!(out.rejected[0].reason, RejectReason::UnknownKnob);
        assert!(matches!(
            out.rejected[1].reason,
            RejectReason::ValueOutOfDomain(_)
        ));
    }

    #[test]
    fn validate_boolean_zero_ok() {
        let reg = mini_registry();
        let spec = reg.get("autocommit").unwrap();
        let v = spec.parse_value("0").unwrap();
        assert!(spec.validate_value(&v).is_ok());
    }

    #[test]
    fn five_gigabytes_exceeds_a_4g_domain() {
        // Direct domain comparison: 5 * 2^30 > 4 * 2^30.
        let reg = mini_registry();
        let spec = reg.get("innodb_buffer_pool_size").unwrap();
        let v = spec.parse_value("5G").unwrap();
        assert_eq!(v.parsed, ParsedValue::Integer(5 * (1 << 30)));
        assert!(!spec.validate_value(&v).is_ok());
    }

    #[test]
    fn enumeration_literal_is_member_case_insensitively() {
        let reg = mini_registry();
        let spec = reg.get("innodb_flush_method").unwrap();
        let v = spec.parse_value("o_direct").unwrap();
        assert_eq!(v.parsed, ParsedValue::Enum("O_DIRECT".to_string()));
        assert!(spec.validate_value(&v).is_ok());
    }

    #[test]
    fn unit_suffixes_are_case_insensitive() {
        let reg = mini_registry();
        let spec = reg.get("innodb_buffer_pool_size").unwrap();
        let lower = spec.parse_value("2g").unwrap();
        let upper = spec.parse_value("2G").unwrap();
        assert_eq!(lower.parsed, upper.parsed);
    }

    #[test]
    fn defaults_validate_for_every_registry_knob() {
        for spec in mini_registry().iter() {
            if let Some(default) = &spec.default {
                assert!(
                    spec.validate_value(default).is_ok(),
                    "default of {} violates its own domain",
                    spec.name
                );
            }
        }
    }

    #[test]
    fn large_registry_preserves_record_count() {
        // 582 records, the size of the MySQL knob space this was built around.
        let mut text = String::new();
        for i in 0..582 {
            text.push_str(&format!(
                "knob_{i:03}_setting | integer | 0..1048576 | {} | synthetic registry record | \n",
                i % 1024
            ));
        }
        let reg = parse_registry(&text, "mysql-5.7").unwrap();
        assert_eq!(reg.len(), 582);
    }

    proptest! {
        #[test]
        fn extraction_is_subset_of_registry(text in ".{0,200}") {
            let reg = mini_registry();
            let found = extract_knobs(&text, &reg);
            for name in &found {
                prop_assert!(reg.contains(name));
            }
        }

        #[test]
        fn extraction_is_idempotent_under_duplication(text in ".{0,120}") {
            let reg = mini_registry();
            let doubled = format!("{text} {text}");
            prop_assert_eq!(extract_knobs(&text, &reg), extract_knobs(&doubled, &reg));
        }

        #[test]
        fn recommendations_round_trip(
            bufpool in 5u32..4096,
            timeout in 1u32..31536000,
            auto in 0u8..2,
        ) {
            let reg = mini_registry();
            let text = format!(
                "{{autocommit: {auto}, innodb_buffer_pool_size: {bufpool}M, wait_timeout: {timeout}}}"
            );
            let first = parse_recommendations(&text, &reg).unwrap();
            prop_assert!(first.rejected.is_empty());
            let rendered = render_recommendations(&first.accepted);
            let second = parse_recommendations(&rendered, &reg).unwrap();
            prop_assert_eq!(first.accepted, second.accepted);
        }
    }
}
