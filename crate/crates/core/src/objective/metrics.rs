//! Evaluation metrics: prediction accuracy, directed chamfer error, and the
//! ground-truth coverage histogram.

use serde::{Deserialize, Serialize};

use crate::dataset::BevMaskSet;
use crate::sampling::KdIndex;
use crate::{Error, Result};

/// Default proximity radius in meters for counting a prediction as correct.
pub const DEFAULT_PROXIMITY_RHO: f64 = 0.2;

/// Default distance-bin edges in meters for the coverage histogram.
pub const DEFAULT_HISTOGRAM_EDGES: [f64; 5] = [0.4, 0.8, 1.2, 1.6, 2.0];

/// Rule deciding whether a single prediction counts as correct.
#[derive(Debug, Clone, Copy)]
pub enum Membership<'a> {
    /// Correct when within `rho` meters of some ground-truth point.
    Proximity { gt: &'a [[f64; 3]], rho: f64 },
    /// Correct when its xy position falls inside the masks.
    Mask(&'a BevMaskSet),
    /// Correct when either rule accepts it.
    Either { gt: &'a [[f64; 3]], rho: f64, masks: &'a BevMaskSet },
}

/// Percentage of predictions that count as correct under `rule`, in [0, 100].
pub fn metric_accuracy(p: &[[f64; 3]], rule: &Membership) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty("accuracy prediction set"));
    }
    let gt_index = match rule {
        Membership::Proximity { gt, .. } | Membership::Either { gt, .. } => {
            if gt.is_empty() {
                return Err(Error::Empty("accuracy reference set"));
            }
            Some(KdIndex::from_points(gt))
        }
        Membership::Mask(_) => None,
    };
    let mut hits = 0usize;
    for &q in p {
        let near = |rho: f64| -> Result<bool> {
            Ok(gt_index.as_ref().unwrap().nearest(q)?.distance <= rho)
        };
        let ok = match rule {
            Membership::Proximity { rho, .. } => near(*rho)?,
            Membership::Mask(masks) => masks.contains_xy(q[0], q[1]),
            Membership::Either { rho, masks, .. } => {
                masks.contains_xy(q[0], q[1]) || near(*rho)?
            }
        };
        if ok {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / p.len() as f64)
}

/// Mean distance from each prediction to its nearest ground-truth point —
/// the forward half of the chamfer distance, reported in meters.
pub fn metric_cd_pt(p: &[[f64; 3]], g: &[[f64; 3]]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty("cd_pt prediction set"));
    }
    if g.is_empty() {
        return Err(Error::Empty("cd_pt reference set"));
    }
    let index = KdIndex::from_points(g);
    let mut sum = 0.0;
    for &q in p {
        sum += index.nearest(q)?.distance;
    }
    Ok(sum / p.len() as f64)
}

/// Distribution of ground-truth-to-prediction distances over distance bins.
///
/// Bin `i < edges.len()` covers `[prev_edge, edges[i])` starting from zero;
/// the final entry counts distances at or beyond the last edge. Percentages
/// are relative to the ground-truth count and sum to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub percentages: Vec<f64>,
}

impl Histogram {
    /// Percentage of ground-truth points strictly below `edge`, which must
    /// be one of the bin edges.
    pub fn coverage_below(&self, edge: f64) -> Result<f64> {
        let pos = self
            .edges
            .iter()
            .position(|&e| e == edge)
            .ok_or_else(|| Error::Config(format!("{edge} is not a histogram edge")))?;
        Ok(self.percentages[..=pos].iter().sum())
    }
}

/// Bins the distance from each ground-truth point to its nearest prediction.
/// `edges` must be finite, positive, and strictly increasing.
pub fn metric_cd_histogram(g: &[[f64; 3]], p: &[[f64; 3]], edges: &[f64]) -> Result<Histogram> {
    if g.is_empty() {
        return Err(Error::Empty("histogram reference set"));
    }
    if p.is_empty() {
        return Err(Error::Empty("histogram prediction set"));
    }
    if edges.is_empty() {
        return Err(Error::Config("histogram needs at least one bin edge".into()));
    }
    for w in edges.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Config(format!(
                "histogram edges must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if !edges[0].is_finite() || edges[0] <= 0.0 || !edges[edges.len() - 1].is_finite() {
        return Err(Error::Config("histogram edges must be finite and positive".into()));
    }
    let index = KdIndex::from_points(p);
    let mut counts = vec![0usize; edges.len() + 1];
    for &q in g {
        let d = index.nearest(q)?.distance;
        let bin = edges.iter().position(|&e| d < e).unwrap_or(edges.len());
        counts[bin] += 1;
    }
    let scale = 100.0 / g.len() as f64;
    Ok(Histogram {
        edges: edges.to_vec(),
        percentages: counts.into_iter().map(|c| c as f64 * scale).collect(),
    })
}
