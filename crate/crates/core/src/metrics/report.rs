//! The `metrics.json` document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bootstrap::ConfidenceInterval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub point: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_upper: Option<f64>,
}

impl MetricEntry {
    pub fn point(point: f64) -> Self {
        MetricEntry { point, ci_lower: None, ci_upper: None }
    }
}

impl From<ConfidenceInterval> for MetricEntry {
    fn from(ci: ConfidenceInterval) -> Self {
        MetricEntry { point: ci.point, ci_lower: Some(ci.lower), ci_upper: Some(ci.upper) }
    }
}

/// Top-level metric names map to entries; per-category breakdowns live
/// under `by_category` and run parameters under `metadata`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub metrics: BTreeMap<String, MetricEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_category: BTreeMap<String, BTreeMap<String, MetricEntry>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl MetricReport {
    pub fn insert(&mut self, name: impl Into<String>, entry: impl Into<MetricEntry>) {
        self.metrics.insert(name.into(), entry.into());
    }

    pub fn insert_category(&mut self, metric: &str, category: impl Into<String>, entry: impl Into<MetricEntry>) {
        self.by_category.entry(metric.to_string()).or_default().insert(category.into(), entry.into());
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Serialize) {
        self.metadata.insert(key.into(), serde_json::to_value(value).expect("metadata serializes"));
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
