//! Bird's-eye-view mask regions.
//!
//! Masks mark where target terrain may exist, as polygons in a top-down
//! pixel grid. World points are tested by projecting (x, y) into pixel space
//! and running the even–odd rule; the boundary counts as inside so grazing
//! points are never penalized. The on-disk form is a small JSON document
//! (see [`read_masks`]).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::Point3;
use crate::{Error, Result};

/// World-to-pixel projection for the top-down grid: pixel (0,0)'s corner sits
/// at `origin_xy` and one pixel spans `meters_per_pixel` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevProjection {
    pub origin_xy: [f64; 2],
    pub meters_per_pixel: f64,
    pub width: u32,
    pub height: u32,
}

impl BevProjection {
    pub fn validate(&self) -> Result<()> {
        if !(self.meters_per_pixel > 0.0) || !self.meters_per_pixel.is_finite() {
            return Err(Error::Validation(format!(
                "meters_per_pixel must be positive, got {}",
                self.meters_per_pixel
            )));
        }
        if !self.origin_xy.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("projection origin must be finite".into()));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::Validation(format!(
                "projection must span at least one pixel, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// World (x, y) in meters to continuous pixel coordinates (u, v).
    pub fn to_pixel(&self, x: f64, y: f64) -> [f64; 2] {
        [
            (x - self.origin_xy[0]) / self.meters_per_pixel,
            (y - self.origin_xy[1]) / self.meters_per_pixel,
        ]
    }
}

/// Projection plus one or more closed pixel-space polygons. A point belongs
/// to the mask set when it falls inside (or on the boundary of) any polygon
/// under the even–odd rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevMaskSet {
    pub projection: BevProjection,
    pub polygons: Vec<Vec<[f64; 2]>>,
}

/// Distance from `p` to the segment `a`–`b`, all in pixel coordinates.
fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return (ap[0] * ap[0] + ap[1] * ap[1]).sqrt();
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

/// Twice the signed shoelace area of a closed polygon.
fn shoelace2(poly: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc
}

impl BevMaskSet {
    pub fn new(projection: BevProjection, polygons: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let set = BevMaskSet { projection, polygons };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        for (i, poly) in self.polygons.iter().enumerate() {
            if poly.len() < 3 {
                return Err(Error::Validation(format!(
                    "polygon {i} has {} vertices, need at least 3",
                    poly.len()
                )));
            }
            if poly.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
                return Err(Error::Validation(format!("polygon {i} has non-finite vertices")));
            }
            if shoelace2(poly) == 0.0 {
                return Err(Error::Validation(format!("polygon {i} has zero area")));
            }
        }
        Ok(())
    }

    /// Even–odd membership of the world point (x, y); z is ignored. Points
    /// within 1e-9 pixels of a polygon boundary count as inside.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let p = self.projection.to_pixel(x, y);
        self.polygons.iter().any(|poly| polygon_contains(poly, p))
    }

    pub fn contains(&self, p: Point3) -> bool {
        self.contains_xy(p.x as f64, p.y as f64)
    }
}

/// Even–odd rule with boundary-counts-as-inside.
fn polygon_contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if point_segment_distance(p, a, b) <= 1e-9 {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Reads a mask file: `{"projection": {"origin_xy": [x, y],
/// "meters_per_pixel": m, "width": w, "height": h}, "polygons":
/// [[[u, v], ...], ...]}`. This is also the ingestion format for externally
/// generated masks.
pub fn read_masks(path: &Path) -> Result<BevMaskSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read mask file {}: {e}", path.display())))?;
    let set: BevMaskSet =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("malformed mask file: {e}")))?;
    set.validate()?;
    Ok(set)
}

/// Writes the mask file format; see [`read_masks`]. Output is deterministic.
pub fn write_masks(path: &Path, masks: &BevMaskSet) -> Result<()> {
    let mut text = serde_json::to_string_pretty(masks)
        .map_err(|e| Error::Format(format!("mask serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
