//! Training-sample construction.
//!
//! A sample pairs what the sensor saw (the road portion of a scan, X) with
//! what it should have seen (ground-truth road centroids that are missing
//! from the scan, Y), plus top-down masks bounding where Y lives. The target
//! is the buffered set difference Y = G \ X: every ground-truth point closer
//! than the buffer distance to some input point is excluded, so targets
//! never hug the input boundary.

mod bev;
mod cluster;
mod store;
mod synth;

pub use bev::{read_masks, write_masks, BevMaskSet, BevProjection};
pub use cluster::fallback_cluster_masks;
pub use store::{read_sample, write_sample};
pub use synth::{synth_scene, SceneKind, SceneParams, ROAD_LABEL, WALL_LABEL};

use std::collections::BTreeSet;

use crate::cloud::{crop, filter_by_label, voxel_centroids, Aabb, PointCloud, VoxelGrid};
use crate::sampling::KdIndex;
use crate::{Error, Result};

/// The unit of training and evaluation: input cloud, target cloud, masks,
/// and the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: PointCloud,
    pub target: PointCloud,
    pub masks: BevMaskSet,
    pub d_y: f64,
    pub seed: u64,
    pub source_id: String,
}

/// Where masks come from when building samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    /// Masks must be supplied externally (e.g. from an image segmenter);
    /// building without them is an error.
    Precomputed,
    /// Derive masks from the target cloud by grid clustering.
    GridCluster,
}

/// Knobs for sample construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// Buffer distance: targets must lie at least this far from every input
    /// road point.
    pub d_y: f64,
    /// Semantic codes treated as road.
    pub road_labels: BTreeSet<u32>,
    /// Crop applied to the road input; `None` uses the voxel grid's extent.
    pub crop: Option<Aabb>,
    pub mask_source: MaskSource,
    /// Cell size for the grid-cluster mask fallback.
    pub cluster_cell: f64,
    /// Resolution of the top-down mask projection.
    pub bev_meters_per_pixel: f64,
    /// Measure the buffer in the ground plane (x, y) only instead of 3D.
    pub planar_buffer: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            d_y: 1.0,
            road_labels: [ROAD_LABEL].into_iter().collect(),
            crop: None,
            mask_source: MaskSource::Precomputed,
            cluster_cell: 0.5,
            bev_meters_per_pixel: 0.1,
            planar_buffer: false,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_y >= 0.0) || !self.d_y.is_finite() {
            return Err(Error::Config(format!("buffer distance must be >= 0, got {}", self.d_y)));
        }
        if !(self.cluster_cell > 0.0) || !self.cluster_cell.is_finite() {
            return Err(Error::Config(format!(
                "cluster cell must be positive, got {}",
                self.cluster_cell
            )));
        }
        if !(self.bev_meters_per_pixel > 0.0) || !self.bev_meters_per_pixel.is_finite() {
            return Err(Error::Config(format!(
                "mask resolution must be positive, got {}",
                self.bev_meters_per_pixel
            )));
        }
        Ok(())
    }
}

/// The buffered set difference G \ X.
///
/// Keeps exactly the points of `g` whose distance to the nearest point of
/// `x` is at least `d_y` — and strictly positive, so points coincident with
/// an input point are removed even at `d_y` = 0. An empty `x` keeps all of
/// `g`. Labels on `g` are preserved.
pub fn buffered_difference(g: &PointCloud, x: &PointCloud, d_y: f64) -> Result<PointCloud> {
    buffered_difference_with(g, x, d_y, false)
}

/// [`buffered_difference`] with a choice of metric: `planar` measures
/// distances in the ground plane (x, y) only.
pub fn buffered_difference_with(
    g: &PointCloud,
    x: &PointCloud,
    d_y: f64,
    planar: bool,
) -> Result<PointCloud> {
    if !(d_y >= 0.0) || !d_y.is_finite() {
        return Err(Error::Config(format!("buffer distance must be >= 0, got {d_y}")));
    }
    if x.is_empty() {
        return Ok(g.clone());
    }
    let flatten = |p: [f64; 3]| if planar { [p[0], p[1], 0.0] } else { p };
    let xs: Vec<[f64; 3]> = x.to_f64_points().into_iter().map(flatten).collect();
    let index = KdIndex::from_points(&xs);

    let mut keep_points = Vec::new();
    let mut keep_labels = g.labels().map(|_| Vec::new());
    for (i, p) in g.points().iter().enumerate() {
        let d = index.nearest_distance(flatten(p.to_f64()))?;
        if d > 0.0 && d >= d_y {
            keep_points.push(*p);
            if let (Some(ls), Some(gl)) = (&mut keep_labels, g.labels()) {
                ls.push(gl[i]);
            }
        }
    }
    match keep_labels {
        Some(ls) => PointCloud::with_labels(keep_points, ls),
        None => PointCloud::new(keep_points),
    }
}

/// Why a scan produced no usable sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// No road-labeled input points survived filtering and cropping.
    NoRoadInput,
    /// Every ground-truth point fell inside the buffer: nothing to predict.
    EmptyTarget,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::NoRoadInput => "no road points in input",
            RejectReason::EmptyTarget => "empty target after buffering",
        })
    }
}

/// Result of [`build_sample`]: either a usable sample or a benign rejection
/// the caller should skip (many scans legitimately have no occluded road).
#[derive(Debug, Clone, PartialEq)]
pub enum BuildOutcome {
    Accepted(Box<TrainingSample>),
    Rejected(RejectReason),
}

/// Builds one training sample from a labeled scan and a labeled ground-truth
/// grid.
///
/// X is the road portion of the scan cropped to the region of interest; G is
/// the road centroids of the grid; Y = G \ X with the configured buffer.
/// Masks come from `masks` when given, otherwise from grid clustering over Y
/// (unless the config insists on precomputed masks, which is then an error).
pub fn build_sample(
    scan: &PointCloud,
    grid: &VoxelGrid,
    cfg: &DatasetConfig,
    masks: Option<BevMaskSet>,
    source_id: &str,
    seed: u64,
) -> Result<BuildOutcome> {
    cfg.validate()?;
    if !grid.has_labels() {
        return Err(Error::Config("sample construction requires a labeled voxel grid".into()));
    }
    let crop_box = match cfg.crop {
        Some(b) => b,
        None => grid.geometry().extent(),
    };
    let g = voxel_centroids(grid, Some(&cfg.road_labels))?;
    assemble_sample(scan, &g, cfg, masks, Some(crop_box), source_id, seed)
}

/// [`build_sample`] for ground truth that is already a point set rather than
/// a voxel grid (synthetic pairs, or centroids produced elsewhere).
///
/// A labeled ground-truth cloud is filtered to the road labels; an unlabeled
/// one is used whole. Without a configured crop the scan is not cropped —
/// cloud pairs are assumed to be pre-scoped to the region of interest.
pub fn build_sample_from_clouds(
    scan: &PointCloud,
    ground_truth: &PointCloud,
    cfg: &DatasetConfig,
    masks: Option<BevMaskSet>,
    source_id: &str,
    seed: u64,
) -> Result<BuildOutcome> {
    cfg.validate()?;
    let g = match ground_truth.has_labels() {
        true => filter_by_label(ground_truth, &cfg.road_labels)?,
        false => ground_truth.clone(),
    };
    if g.is_empty() {
        return Ok(BuildOutcome::Rejected(RejectReason::EmptyTarget));
    }
    assemble_sample(scan, &g, cfg, masks, cfg.crop, source_id, seed)
}

/// Shared tail of sample construction: isolate the road input, form the
/// buffered difference, and resolve masks.
fn assemble_sample(
    scan: &PointCloud,
    g: &PointCloud,
    cfg: &DatasetConfig,
    masks: Option<BevMaskSet>,
    crop_box: Option<Aabb>,
    source_id: &str,
    seed: u64,
) -> Result<BuildOutcome> {
    if !scan.has_labels() {
        return Err(Error::Config("sample construction requires a labeled scan".into()));
    }
    if let Some(m) = &masks {
        m.validate()?;
    } else if cfg.mask_source == MaskSource::Precomputed {
        return Err(Error::Config(
            "config requires precomputed masks but none were provided".into(),
        ));
    }

    let mut x = filter_by_label(scan, &cfg.road_labels)?;
    if let Some(b) = &crop_box {
        x = crop(&x, b);
    }
    if x.is_empty() {
        return Ok(BuildOutcome::Rejected(RejectReason::NoRoadInput));
    }
    let y = buffered_difference_with(g, &x, cfg.d_y, cfg.planar_buffer)?;
    if y.is_empty() {
        return Ok(BuildOutcome::Rejected(RejectReason::EmptyTarget));
    }

    let masks = match masks {
        Some(m) => m,
        None => {
            let bbox = match crop_box {
                Some(b) => b,
                // Pad the target's own bounds so boundary points are not
                // flush with the projection edge.
                None => padded_bounds(&y, cfg.cluster_cell),
            };
            let projection = projection_over(&bbox, cfg.bev_meters_per_pixel);
            fallback_cluster_masks(&y, cfg.cluster_cell, &projection)?
        }
    };

    Ok(BuildOutcome::Accepted(Box::new(TrainingSample {
        input: x,
        target: y,
        masks,
        d_y: cfg.d_y,
        seed,
        source_id: source_id.to_string(),
    })))
}

/// Bounds of a non-empty cloud grown by `pad` on every side.
fn padded_bounds(cloud: &PointCloud, pad: f64) -> Aabb {
    let b = cloud.bounds().expect("cloud checked non-empty");
    let pad = pad as f32;
    Aabb {
        min: crate::cloud::Point3::new(b.min.x - pad, b.min.y - pad, b.min.z - pad),
        max: crate::cloud::Point3::new(b.max.x + pad, b.max.y + pad, b.max.z + pad),
    }
}

/// Top-down projection covering `bbox` at the given resolution.
fn projection_over(bbox: &Aabb, meters_per_pixel: f64) -> BevProjection {
    let width = ((bbox.max.x - bbox.min.x) as f64 / meters_per_pixel).ceil().max(1.0) as u32;
    let height = ((bbox.max.y - bbox.min.y) as f64 / meters_per_pixel).ceil().max(1.0) as u32;
    BevProjection {
        origin_xy: [bbox.min.x as f64, bbox.min.y as f64],
        meters_per_pixel,
        width,
        height,
    }
}
