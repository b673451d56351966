//! Per-scene metric reports with deterministic JSON and text renderings.

use serde::{Deserialize, Serialize};

use crate::objective::Histogram;
use crate::{Error, Result};

/// Metrics for one evaluated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub scene_id: String,
    /// Percentage of predictions counted correct, in [0, 100].
    pub acc: f64,
    /// Mean prediction-to-ground-truth distance in meters.
    pub cd_pt: f64,
    pub histogram: Histogram,
    pub n_pred: usize,
    pub n_gt: usize,
}

/// A collection of scene metrics, ordered by scene id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenes: Vec<SceneMetrics>,
}

/// Sorts the rows by scene id and validates their invariants: every row must
/// use the same histogram edges, percentages must sum to 100, and scene ids
/// must be unique.
pub fn assemble_report(mut rows: Vec<SceneMetrics>) -> Result<MetricReport> {
    rows.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    for w in rows.windows(2) {
        if w[0].scene_id == w[1].scene_id {
            return Err(Error::Validation(format!("duplicate scene id {:?}", w[0].scene_id)));
        }
        if w[0].histogram.edges != w[1].histogram.edges {
            return Err(Error::Validation("histogram edges differ between scenes".into()));
        }
    }
    for row in &rows {
        if !(0.0..=100.0).contains(&row.acc) {
            return Err(Error::Validation(format!(
                "scene {:?}: accuracy {} outside [0, 100]",
                row.scene_id, row.acc
            )));
        }
        if !row.cd_pt.is_finite() || row.cd_pt < 0.0 {
            return Err(Error::Validation(format!(
                "scene {:?}: invalid cd_pt {}",
                row.scene_id, row.cd_pt
            )));
        }
        if row.histogram.percentages.len() != row.histogram.edges.len() + 1 {
            return Err(Error::Validation(format!(
                "scene {:?}: histogram has {} bins for {} edges",
                row.scene_id,
                row.histogram.percentages.len(),
                row.histogram.edges.len()
            )));
        }
        let sum: f64 = row.histogram.percentages.iter().sum();
        if (sum - 100.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "scene {:?}: histogram percentages sum to {sum}, not 100",
                row.scene_id
            )));
        }
    }
    Ok(MetricReport { scenes: rows })
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<MetricReport> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report parse: {e}")))
    }

    /// Renders two aligned tables: accuracy and mean distance per scene,
    /// then the coverage histogram per scene.
    pub fn render_text(&self) -> String {
        let id_width = self
            .scenes
            .iter()
            .map(|s| s.scene_id.len())
            .chain(std::iter::once("scene".len()))
            .max()
            .unwrap_or(5);

        let mut out = String::new();
        out.push_str(&format!("{:<id_width$}  {:>8}  {:>8}\n", "scene", "acc", "cd_pt"));
        for s in &self.scenes {
            out.push_str(&format!(
                "{:<id_width$}  {:>8.2}  {:>8.3}\n",
                s.scene_id, s.acc, s.cd_pt
            ));
        }
        if let Some(first) = self.scenes.first() {
            out.push('\n');
            out.push_str(&format!("{:<id_width$}", "scene"));
            for e in &first.histogram.edges {
                out.push_str(&format!("  {:>8}", format!("<{e}")));
            }
            out.push_str(&format!(
                "  {:>8}\n",
                format!(">={}", first.histogram.edges.last().unwrap())
            ));
            for s in &self.scenes {
                out.push_str(&format!("{:<id_width$}", s.scene_id));
                for p in &s.histogram.percentages {
                    out.push_str(&format!("  {:>8.2}", p));
                }
                out.push('\n');
            }
        }
        out
    }
}
