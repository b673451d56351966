//! Losses and evaluation metrics over predicted and target point sets.
//!
//! The training loss is a symmetric chamfer distance with a per-prediction
//! penalty: predictions falling outside the target-region masks have their
//! distance term multiplied by a configurable factor, and an optional spread
//! term penalizes predictions that bunch up. All values and gradients are
//! computed in f64 with nearest-neighbor assignments frozen per evaluation,
//! which makes the loss piecewise smooth and the gradients exact between
//! assignment changes.

mod metrics;
mod report;

pub use metrics::{
    metric_accuracy, metric_cd_histogram, metric_cd_pt, Histogram, Membership,
    DEFAULT_HISTOGRAM_EDGES, DEFAULT_PROXIMITY_RHO,
};
pub use report::{assemble_report, MetricReport, SceneMetrics};

use serde::{Deserialize, Serialize};

use crate::dataset::BevMaskSet;
use crate::sampling::{KdIndex, Neighbor};
use crate::{Error, Result};

/// Loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Multiplier applied to the distance term of predictions outside the
    /// masks; 1 disables the penalty.
    pub delta: f64,
    /// Weight on the prediction-to-target term.
    pub alpha: f64,
    /// Weight on the target-to-prediction term.
    pub beta: f64,
    /// Weight on the spread term; 0 disables it.
    pub spread_weight: f64,
    /// Number of nearest other predictions each prediction is compared to.
    pub spread_k: usize,
    /// Predictions closer than this to a neighbor are penalized.
    pub spread_margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            delta: 5.0,
            alpha: 1.0,
            beta: 1.0,
            spread_weight: 0.0,
            spread_k: 4,
            spread_margin: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 1.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("penalty multiplier must be >= 1, got {}", self.delta)));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("spread_weight", self.spread_weight),
            ("spread_margin", self.spread_margin),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Symmetric chamfer distance plus the per-point nearest-neighbor terms that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferParts {
    pub value: f64,
    /// Per prediction: its nearest target and the distance.
    pub forward: Vec<Neighbor>,
    /// Per target: its nearest prediction and the distance.
    pub backward: Vec<Neighbor>,
}

/// Mean nearest-neighbor distance from each point of `from` into `index`.
fn directed_terms(from: &[[f64; 3]], index: &KdIndex) -> Result<Vec<Neighbor>> {
    from.iter().map(|&p| index.nearest(p)).collect()
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Symmetric chamfer distance between predictions `p` and targets `g`:
/// the mean distance from each prediction to its nearest target plus the
/// mean distance from each target to its nearest prediction. Distances are
/// unsquared Euclidean.
pub fn chamfer(p: &[[f64; 3]], g: &[[f64; 3]]) -> Result<ChamferParts> {
    if p.is_empty() {
        return Err(Error::Empty("chamfer prediction set"));
    }
    if g.is_empty() {
        return Err(Error::Empty("chamfer target set"));
    }
    let forward = directed_terms(p, &KdIndex::from_points(g))?;
    let backward = directed_terms(g, &KdIndex::from_points(p))?;
    let value = mean(forward.iter().map(|n| n.distance), p.len())
        + mean(backward.iter().map(|n| n.distance), g.len());
    Ok(ChamferParts { value, forward, backward })
}

/// Chamfer distance with the outside-mask penalty and per-term weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedChamfer {
    pub value: f64,
    /// Per-prediction multiplier: `delta` outside the masks, 1 inside.
    pub weights: Vec<f64>,
    pub forward: Vec<Neighbor>,
    pub backward: Vec<Neighbor>,
}

/// Weighted chamfer distance: the prediction-to-target term of each
/// prediction outside the masks is multiplied by `cfg.delta`. Only the first
/// term carries the penalty — the target-to-prediction term has no single
/// prediction to blame.
pub fn masked_chamfer(
    p: &[[f64; 3]],
    y: &[[f64; 3]],
    masks: &BevMaskSet,
    cfg: &LossConfig,
) -> Result<MaskedChamfer> {
    cfg.validate()?;
    let parts = chamfer(p, y)?;
    let weights: Vec<f64> = p
        .iter()
        .map(|q| if masks.contains_xy(q[0], q[1]) { 1.0 } else { cfg.delta })
        .collect();
    let first = mean(
        parts.forward.iter().zip(&weights).map(|(n, w)| w * n.distance),
        p.len(),
    );
    let second = mean(parts.backward.iter().map(|n| n.distance), y.len());
    Ok(MaskedChamfer {
        value: cfg.alpha * first + cfg.beta * second,
        weights,
        forward: parts.forward,
        backward: parts.backward,
    })
}

/// Active closeness hinges: ordered pairs (i, j, distance) where prediction
/// j is among i's nearest others. Shared by the value and gradient paths so
/// the assignment is identical.
fn spread_hinges(p: &[[f64; 3]], cfg: &LossConfig) -> Result<(f64, Vec<(usize, usize, f64)>, usize)> {
    if cfg.spread_weight == 0.0 || p.len() < 2 || cfg.spread_k == 0 {
        return Ok((0.0, Vec::new(), 0));
    }
    let k = cfg.spread_k.min(p.len() - 1);
    let index = KdIndex::from_points(p);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (i, &q) in p.iter().enumerate() {
        // Ask for one extra neighbor and drop the query point itself; with
        // duplicate points the query may not even appear, in which case all
        // returned neighbors are legitimate distance-zero others.
        let mut neighbors = index.knn(q, k + 1)?;
        if let Some(pos) = neighbors.iter().position(|n| n.index == i) {
            neighbors.remove(pos);
        }
        neighbors.truncate(k);
        for n in neighbors {
            let hinge = cfg.spread_margin - n.distance;
            if hinge > 0.0 {
                total += hinge;
                pairs.push((i, n.index, n.distance));
            }
        }
    }
    let value = cfg.spread_weight * total / (p.len() * k) as f64;
    Ok((value, pairs, k))
}

/// Mean closeness penalty: each prediction's nearest other predictions
/// contribute `max(0, margin - distance)`, averaged and scaled by
/// `spread_weight`. Zero when disabled or with fewer than two predictions.
pub fn spread_penalty(p: &[[f64; 3]], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(spread_hinges(p, cfg)?.0)
}

/// The full training objective: masked chamfer plus the spread penalty.
pub fn loss(p: &[[f64; 3]], y: &[[f64; 3]], masks: &BevMaskSet, cfg: &LossConfig) -> Result<f64> {
    Ok(masked_chamfer(p, y, masks, cfg)?.value + spread_penalty(p, cfg)?)
}

/// Loss value plus its exact gradient with respect to every prediction
/// coordinate.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub d_pred: Vec<[f64; 3]>,
}

/// Evaluates the loss and differentiates it with respect to the predictions,
/// holding nearest-neighbor assignments and mask membership fixed. At the
/// (measure-zero) points where a distance is exactly zero the corresponding
/// direction is undefined; the zero subgradient is used.
pub fn loss_with_grad(
    p: &[[f64; 3]],
    y: &[[f64; 3]],
    masks: &BevMaskSet,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    let mc = masked_chamfer(p, y, masks, cfg)?;
    let (spread_value, hinges, k) = spread_hinges(p, cfg)?;
    let mut d_pred = vec![[0.0f64; 3]; p.len()];

    let npi = 1.0 / p.len() as f64;
    for (i, nb) in mc.forward.iter().enumerate() {
        if nb.distance > 0.0 {
            let t = y[nb.index];
            let c = cfg.alpha * mc.weights[i] * npi / nb.distance;
            for a in 0..3 {
                d_pred[i][a] += c * (p[i][a] - t[a]);
            }
        }
    }
    let nyi = 1.0 / y.len() as f64;
    for (j, nb) in mc.backward.iter().enumerate() {
        if nb.distance > 0.0 {
            let c = cfg.beta * nyi / nb.distance;
            for a in 0..3 {
                d_pred[nb.index][a] += c * (p[nb.index][a] - y[j][a]);
            }
        }
    }
    if !hinges.is_empty() {
        let c0 = cfg.spread_weight / (p.len() * k) as f64;
        for (i, j, d) in hinges {
            if d > 0.0 {
                let c = c0 / d;
                for a in 0..3 {
                    let dir = p[i][a] - p[j][a];
                    d_pred[i][a] -= c * dir;
                    d_pred[j][a] += c * dir;
                }
            }
        }
    }
    let value = mc.value + spread_value;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss value {value}")));
    }
    Ok(LossGrad { value, d_pred })
}
