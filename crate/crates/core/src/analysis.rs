//! Distance statistics over frame embeddings and generated frame features.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::encoder::StoryEncoder;
use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, PromptSet};

pub const SINGLE_PROMPT: &str = "single-prompt";
pub const MULTI_PROMPT: &str = "multi-prompt";

/// Mean Euclidean distance over all unordered pairs.
pub fn pairwise_mean_distance<V: AsRef<[f64]>>(features: &[V]) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::TooFewVectors(features.len()));
    }
    let dim = features[0].as_ref().len();
    if let Some(bad) = features.iter().find(|v| v.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.as_ref().len(),
        });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in features.iter().enumerate() {
        for b in &features[i + 1..] {
            total += euclidean(a.as_ref(), b.as_ref());
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// How a frame's token rows become points for distance statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One mean-pooled vector per frame.
    #[default]
    Mean,
    /// Every frame token is its own point.
    Tokens,
}

/// Mean of the rows of frame `i` (1-based).
pub fn frame_span_features(c: &EmbeddingMatrix, i: usize) -> Result<Vec<f64>> {
    let span = c.layout().frame(i)?;
    if span.is_empty() {
        return Err(Error::SpanError(format!("frame {i} has no tokens")));
    }
    let rows = c.rows(span);
    Ok(rows.sum_axis(ndarray::Axis(0)).mapv(|v| v / span.len() as f64).to_vec())
}

fn frame_points(c: &EmbeddingMatrix, i: usize, pooling: Pooling) -> Result<Vec<Vec<f64>>> {
    match pooling {
        Pooling::Mean => Ok(vec![frame_span_features(c, i)?]),
        Pooling::Tokens => Ok(c.rows(c.layout().frame(i)?).rows().into_iter().map(|r| r.to_vec()).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub set_id: String,
    pub method: String,
    pub mean_pairwise_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_distance: f64,
    pub sets: usize,
}

/// Fraction of sets on which `method` has a strictly smaller distance than `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub method: String,
    pub baseline: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// Per-set distances in input order.
    pub rows: Vec<DistanceRow>,
    /// Per-method means, smallest distance first.
    pub ranking: Vec<MethodSummary>,
    pub win_rate: Option<WinRate>,
}

impl DistanceReport {
    fn from_rows(rows: Vec<DistanceRow>, pair: Option<(&str, &str)>) -> Result<Self> {
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for r in &rows {
            let e = acc.entry(r.method.as_str()).or_default();
            e.0 += r.mean_pairwise_distance;
            e.1 += 1;
        }
        let mut ranking: Vec<MethodSummary> = acc
            .into_iter()
            .map(|(method, (sum, n))| MethodSummary {
                method: method.to_string(),
                mean_distance: sum / n as f64,
                sets: n,
            })
            .collect();
        ranking.sort_by(|a, b| a.mean_distance.total_cmp(&b.mean_distance).then_with(|| a.method.cmp(&b.method)));

        let pair = pair.map(|(a, b)| (a.to_string(), b.to_string())).or_else(|| {
            (ranking.len() >= 2).then(|| {
                (
                    ranking[0].method.clone(),
                    ranking[ranking.len() - 1].method.clone(),
                )
            })
        });
        let mut report = Self {
            rows,
            ranking,
            win_rate: None,
        };
        if let Some((method, baseline)) = pair {
            let rate = report.win_rate_between(&method, &baseline, false)?;
            report.win_rate = Some(WinRate { method, baseline, rate });
        }
        Ok(report)
    }

    /// Fraction of sets having both methods where `method` beats `baseline`
    /// (strictly, or with ties counting as wins when `ties_win`).
    pub fn win_rate_between(&self, method: &str, baseline: &str, ties_win: bool) -> Result<f64> {
        let lookup = |m: &str| -> BTreeMap<&str, f64> {
            self.rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.set_id.as_str(), r.mean_pairwise_distance))
                .collect()
        };
        let a = lookup(method);
        let b = lookup(baseline);
        let shared: Vec<(f64, f64)> = a.iter().filter_map(|(k, &x)| b.get(k).map(|&y| (x, y))).collect();
        if shared.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no set has distances for both {method:?} and {baseline:?}"
            )));
        }
        let wins = shared.iter().filter(|(x, y)| if ties_win { x <= y } else { x < y }).count();
        Ok(wins as f64 / shared.len() as f64)
    }

    pub fn method_mean(&self, method: &str) -> Option<f64> {
        self.ranking.iter().find(|m| m.method == method).map(|m| m.mean_distance)
    }

    /// `set_id,method,mean_pairwise_distance` with six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("set_id,method,mean_pairwise_distance\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6}", csv_field(&r.set_id), csv_field(&r.method), r.mean_pairwise_distance);
        }
        out
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Frame-embedding spread with all frames in one prompt versus one prompt per frame.
pub fn single_vs_multi_report<E: StoryEncoder + ?Sized>(
    corpus: &[PromptSet],
    encoder: &E,
    pooling: Pooling,
) -> Result<DistanceReport> {
    let mut rows = Vec::with_capacity(corpus.len() * 2);
    for set in corpus {
        if set.len() < 2 {
            return Err(Error::TooFewVectors(set.len()));
        }
        let single = encoder.encode(set)?;
        let mut single_points = Vec::new();
        let mut multi_points = Vec::new();
        for i in 1..=set.len() {
            single_points.extend(frame_points(&single, i, pooling)?);
            let pair = set.with_frames(vec![set.frame(i)?.to_string()])?;
            multi_points.extend(frame_points(&encoder.encode(&pair)?, 1, pooling)?);
        }
        rows.push(DistanceRow {
            set_id: set.id().to_string(),
            method: SINGLE_PROMPT.into(),
            mean_pairwise_distance: pairwise_mean_distance(&single_points)?,
        });
        rows.push(DistanceRow {
            set_id: set.id().to_string(),
            method: MULTI_PROMPT.into(),
            mean_pairwise_distance: pairwise_mean_distance(&multi_points)?,
        });
    }
    DistanceReport::from_rows(rows, Some((SINGLE_PROMPT, MULTI_PROMPT)))
}

/// Frame features of one story under one method.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGroup {
    pub set_id: String,
    pub method: String,
    pub frames: Vec<Vec<f64>>,
}

/// Mean pairwise frame distance per (set, method), with methods ranked.
pub fn frame_feature_distance_report(groups: &[FeatureGroup]) -> Result<DistanceReport> {
    let rows = groups
        .iter()
        .map(|g| {
            Ok(DistanceRow {
                set_id: g.set_id.clone(),
                method: g.method.clone(),
                mean_pairwise_distance: pairwise_mean_distance(&g.frames)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DistanceReport::from_rows(rows, None)
}
