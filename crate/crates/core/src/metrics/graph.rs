//! Overlap F1 between pre-extracted entity/relation graphs.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphEntity {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// `src` and `dst` index into the graph's entity list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphRelation {
    pub src: usize,
    pub dst: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationGraph {
    pub report_id: String,
    #[serde(default)]
    pub entities: Vec<GraphEntity>,
    #[serde(default)]
    pub relations: Vec<GraphRelation>,
}

type RelationKey<'a> = (&'a GraphEntity, &'a GraphEntity, &'a str);

impl AnnotationGraph {
    pub fn validate(&self) -> Result<(), MetricError> {
        let malformed = |message: String| MetricError::MalformedGraph { report_id: self.report_id.clone(), message };
        for e in &self.entities {
            if e.start >= e.end {
                return Err(malformed(format!("entity span {}..{} is empty", e.start, e.end)));
            }
        }
        for r in &self.relations {
            if r.src >= self.entities.len() || r.dst >= self.entities.len() {
                return Err(malformed(format!("dangling relation {} -> {}", r.src, r.dst)));
            }
        }
        Ok(())
    }

    fn entity_set(&self) -> HashSet<&GraphEntity> {
        self.entities.iter().collect()
    }

    fn relation_set(&self) -> HashSet<RelationKey<'_>> {
        self.relations
            .iter()
            .map(|r| (&self.entities[r.src], &self.entities[r.dst], r.label.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphF1 {
    pub entity_f1: f64,
    pub relation_f1: f64,
}

fn set_f1<T: Eq + std::hash::Hash>(pred: &HashSet<T>, refr: &HashSet<T>) -> f64 {
    if pred.is_empty() && refr.is_empty() {
        return 1.0;
    }
    let common = pred.intersection(refr).count();
    2.0 * common as f64 / (pred.len() + refr.len()) as f64
}

/// Exact-match F1 over entity tuples and over relation triples. Two empty
/// sets agree perfectly.
pub fn graph_f1(predicted: &AnnotationGraph, reference: &AnnotationGraph) -> Result<GraphF1, MetricError> {
    predicted.validate()?;
    reference.validate()?;
    Ok(GraphF1 {
        entity_f1: set_f1(&predicted.entity_set(), &reference.entity_set()),
        relation_f1: set_f1(&predicted.relation_set(), &reference.relation_set()),
    })
}

/// Per-pair scores for graphs matched by `report_id`, in reference order.
pub fn graph_f1_scores(predicted: &[AnnotationGraph], reference: &[AnnotationGraph]) -> Result<Vec<GraphF1>, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let by_id: BTreeMap<&str, &AnnotationGraph> = predicted.iter().map(|g| (g.report_id.as_str(), g)).collect();
    reference
        .iter()
        .map(|r| {
            let p = by_id.get(r.report_id.as_str()).ok_or_else(|| MetricError::MalformedGraph {
                report_id: r.report_id.clone(),
                message: "no predicted graph".into(),
            })?;
            graph_f1(p, r)
        })
        .collect()
}

/// Mean entity and relation F1 over pairs.
pub fn graph_f1_corpus(predicted: &[AnnotationGraph], reference: &[AnnotationGraph]) -> Result<GraphF1, MetricError> {
    let scores = graph_f1_scores(predicted, reference)?;
    let n = scores.len() as f64;
    Ok(GraphF1 {
        entity_f1: scores.iter().map(|s| s.entity_f1).sum::<f64>() / n,
        relation_f1: scores.iter().map(|s| s.relation_f1).sum::<f64>() / n,
    })
}

/// One graph per non-blank line.
pub fn read_graphs_jsonl(reader: impl BufRead) -> Result<Vec<AnnotationGraph>, MetricError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MetricError::InvalidArgument(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: AnnotationGraph = serde_json::from_str(&line)
            .map_err(|e| MetricError::InvalidArgument(format!("line {}: {e}", i + 1)))?;
        g.validate()?;
        out.push(g);
    }
    Ok(out)
}
