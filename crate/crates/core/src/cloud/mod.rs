//! Core geometric types: points, point clouds, voxel grids, boxes.
//!
//! All coordinates are meters. Points are stored in 32-bit floats (matching
//! every on-disk format this crate reads or writes); distance math elsewhere
//! promotes to f64. Non-finite coordinates are rejected at construction and
//! at every reader, so downstream code can assume finiteness.

mod io;

pub use io::{
    read_kitti_labels, read_kitti_velodyne, read_kitti_voxels, read_native_cloud,
    read_native_cloud_from, write_native_cloud, write_native_cloud_to, write_ply, PlySection, Rgb,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A 3D point in meters. Coordinates are finite by invariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Point3 {
    pub fn new(x: f32, y: f32, z: f32) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Coordinates widened to f64, exactly.
    pub fn to_f64(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }
}

/// Squared Euclidean distance in f64. Shared by the k-d tree, the brute-force
/// oracles and every loss/metric so that all paths produce bitwise-identical
/// distances for the same pair of points.
pub fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// An ordered set of 3D points with optional per-point semantic labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    labels: Option<Vec<u32>>,
}

impl PointCloud {
    /// Unlabeled cloud. Errors on non-finite coordinates.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        Self::validate_points(&points)?;
        Ok(PointCloud { points, labels: None })
    }

    /// Labeled cloud; `labels` must match `points` in length.
    pub fn with_labels(points: Vec<Point3>, labels: Vec<u32>) -> Result<Self> {
        Self::validate_points(&points)?;
        if labels.len() != points.len() {
            return Err(Error::Length { expected: points.len(), actual: labels.len() });
        }
        Ok(PointCloud { points, labels: Some(labels) })
    }

    fn validate_points(points: &[Point3]) -> Result<()> {
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite coordinates at point {i}: ({}, {}, {})",
                    p.x, p.y, p.z
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Points widened to f64 triples.
    pub fn to_f64_points(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(Point3::to_f64).collect()
    }

    /// Axis-aligned bounds, or None for an empty cloud.
    pub fn bounds(&self) -> Option<Aabb> {
        let first = *self.points.first()?;
        let mut min = first;
        let mut max = first;
        for p in &self.points[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        Some(Aabb { min, max })
    }
}

/// Retains exactly the points whose label is in `labels`, preserving order.
/// The cloud must be labeled.
pub fn filter_by_label(cloud: &PointCloud, labels: &std::collections::BTreeSet<u32>) -> Result<PointCloud> {
    let cloud_labels = cloud
        .labels()
        .ok_or_else(|| Error::Config("label filter requires a labeled cloud".into()))?;
    let mut points = Vec::new();
    let mut kept_labels = Vec::new();
    for (p, &l) in cloud.points().iter().zip(cloud_labels) {
        if labels.contains(&l) {
            points.push(*p);
            kept_labels.push(l);
        }
    }
    PointCloud::with_labels(points, kept_labels)
}

/// Closed axis-aligned box: `min <= max` componentwise by invariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::Validation("non-finite box corner".into()));
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(Error::Validation(format!(
                "box min exceeds max: ({}, {}, {}) > ({}, {}, {})",
                min.x, min.y, min.z, max.x, max.y, max.z
            )));
        }
        Ok(Aabb { min, max })
    }

    /// Closed-interval containment: boundary points are inside.
    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Retains the points inside the closed box, preserving order and labels.
pub fn crop(cloud: &PointCloud, bbox: &Aabb) -> PointCloud {
    match cloud.labels() {
        Some(labels) => {
            let mut points = Vec::new();
            let mut kept = Vec::new();
            for (p, &l) in cloud.points().iter().zip(labels) {
                if bbox.contains(*p) {
                    points.push(*p);
                    kept.push(l);
                }
            }
            PointCloud { points, labels: Some(kept) }
        }
        None => PointCloud {
            points: cloud.points().iter().copied().filter(|p| bbox.contains(*p)).collect(),
            labels: None,
        },
    }
}

/// Geometry of a voxel grid: counts, world origin of the min corner, and
/// edge length of a voxel in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGridGeometry {
    pub dims: (usize, usize, usize),
    pub origin: Point3,
    pub resolution: f32,
}

impl Default for VoxelGridGeometry {
    /// The conventional outdoor-dataset layout: 51.2 m ahead, 51.2 m across,
    /// 6.4 m of height at 0.2 m per voxel.
    fn default() -> Self {
        VoxelGridGeometry {
            dims: (256, 256, 32),
            origin: Point3::new(0.0, -25.6, -2.0),
            resolution: 0.2,
        }
    }
}

impl VoxelGridGeometry {
    pub fn voxel_count(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.0 == 0 || self.dims.1 == 0 || self.dims.2 == 0 {
            return Err(Error::Config("voxel grid dims must be nonzero".into()));
        }
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::Config(format!("voxel resolution must be positive, got {}", self.resolution)));
        }
        if !self.origin.is_finite() {
            return Err(Error::Config("voxel grid origin must be finite".into()));
        }
        Ok(())
    }

    /// World-space extent covered by the grid.
    pub fn extent(&self) -> Aabb {
        let (nx, ny, nz) = self.dims;
        let max = Point3::new(
            self.origin.x + nx as f32 * self.resolution,
            self.origin.y + ny as f32 * self.resolution,
            self.origin.z + nz as f32 * self.resolution,
        );
        Aabb { min: self.origin, max }
    }
}

/// Dense occupancy (+ optional label) grid. Linear index order is x-major:
/// `index = x * ny * nz + y * nz + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    geometry: VoxelGridGeometry,
    occupancy: Vec<bool>,
    labels: Option<Vec<u16>>,
}

impl VoxelGrid {
    pub fn new(geometry: VoxelGridGeometry, occupancy: Vec<bool>, labels: Option<Vec<u16>>) -> Result<Self> {
        geometry.validate()?;
        let n = geometry.voxel_count();
        if occupancy.len() != n {
            return Err(Error::Length { expected: n, actual: occupancy.len() });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Length { expected: n, actual: l.len() });
            }
        }
        Ok(VoxelGrid { geometry, occupancy, labels })
    }

    /// All-free grid with label storage allocated when `labeled` is set.
    pub fn empty(geometry: VoxelGridGeometry, labeled: bool) -> Result<Self> {
        geometry.validate()?;
        let n = geometry.voxel_count();
        Ok(VoxelGrid {
            geometry,
            occupancy: vec![false; n],
            labels: labeled.then(|| vec![0u16; n]),
        })
    }

    pub fn geometry(&self) -> &VoxelGridGeometry {
        &self.geometry
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        let (_, ny, nz) = self.geometry.dims;
        x * ny * nz + y * nz + z
    }

    pub fn is_occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.linear_index(x, y, z)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Marks a voxel occupied and assigns its label (when the grid is labeled).
    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u16) {
        let i = self.linear_index(x, y, z);
        self.occupancy[i] = true;
        if let Some(l) = &mut self.labels {
            l[i] = label;
        }
    }

    pub(crate) fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub(crate) fn labels_raw(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    /// World-space voxel containing `p`, or None when outside the grid.
    pub fn voxel_of(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize, usize)> {
        let g = &self.geometry;
        let ix = ((x - g.origin.x as f64) / g.resolution as f64).floor();
        let iy = ((y - g.origin.y as f64) / g.resolution as f64).floor();
        let iz = ((z - g.origin.z as f64) / g.resolution as f64).floor();
        let (nx, ny, nz) = g.dims;
        if ix < 0.0 || iy < 0.0 || iz < 0.0 {
            return None;
        }
        let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
        if ix >= nx || iy >= ny || iz >= nz {
            return None;
        }
        Some((ix, iy, iz))
    }
}

/// One point per occupied voxel (passing the optional label filter) at the
/// voxel center: `origin + (index + 0.5) * resolution` per axis.
///
/// Centroids carry their voxel's label when the grid is labeled. Asking for a
/// label filter on an unlabeled grid is a configuration error.
pub fn voxel_centroids(
    grid: &VoxelGrid,
    label_filter: Option<&std::collections::BTreeSet<u32>>,
) -> Result<PointCloud> {
    if label_filter.is_some() && !grid.has_labels() {
        return Err(Error::Config("label filter requires a labeled voxel grid".into()));
    }
    let g = grid.geometry();
    let (nx, ny, nz) = g.dims;
    let mut points = Vec::new();
    let mut labels = grid.has_labels().then(Vec::new);
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let i = grid.linear_index(x, y, z);
                if !grid.occupancy()[i] {
                    continue;
                }
                let label = grid.labels_raw().map(|l| l[i]);
                if let (Some(filter), Some(l)) = (label_filter, label) {
                    if !filter.contains(&(l as u32)) {
                        continue;
                    }
                }
                points.push(Point3::new(
                    g.origin.x + (x as f32 + 0.5) * g.resolution,
                    g.origin.y + (y as f32 + 0.5) * g.resolution,
                    g.origin.z + (z as f32 + 0.5) * g.resolution,
                ));
                if let (Some(ls), Some(l)) = (&mut labels, label) {
                    ls.push(l as u32);
                }
            }
        }
    }
    Ok(PointCloud { points, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn labels(v: &[u32]) -> BTreeSet<u32> {
        v.iter().copied().collect()
    }

    #[test]
    fn labeled_cloud_length_mismatch() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0); 4];
        let err = PointCloud::with_labels(pts, vec![40, 40, 40]).unwrap_err();
        assert!(matches!(err, Error::Length { expected: 4, actual: 3 }));
    }

    #[test]
    fn nan_rejected() {
        let err = PointCloud::new(vec![Point3::new(0.0, f32::NAN, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = PointCloud::new(vec![Point3::new(f32::INFINITY, 0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn filter_keeps_matching_in_order() {
        let cloud = PointCloud::with_labels(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            vec![40, 44, 40],
        )
        .unwrap();
        let kept = filter_by_label(&cloud, &labels(&[40])).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept.points()[0].x, 0.0);
        assert_eq!(kept.points()[1].x, 2.0);

        assert!(filter_by_label(&cloud, &labels(&[])).unwrap().is_empty());
        assert!(filter_by_label(&cloud, &labels(&[99])).unwrap().is_empty());
    }

    #[test]
    fn filter_requires_labels() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        assert!(matches!(filter_by_label(&cloud, &labels(&[40])), Err(Error::Config(_))));
    }

    #[test]
    fn crop_closed_interval() {
        let unit = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)).unwrap();
        let cloud = PointCloud::new(vec![
            Point3::new(0.5, 0.5, 0.5),
            Point3::new(1.5, 0.0, 0.0),
            Point3::new(1.0, 1.0, 1.0),
        ])
        .unwrap();
        let kept = crop(&cloud, &unit);
        assert_eq!(kept.len(), 2);
        // Boundary point retained: the box is closed.
        assert_eq!(kept.points()[1], Point3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn crop_idempotent() {
        let bbox = Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0)).unwrap();
        let cloud = PointCloud::new(vec![
            Point3::new(0.1, -0.2, 0.9),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(-1.0, 1.0, 0.0),
        ])
        .unwrap();
        let once = crop(&cloud, &bbox);
        let twice = crop(&once, &bbox);
        assert_eq!(once, twice);
    }

    #[test]
    fn centroid_formula() {
        let geom = VoxelGridGeometry {
            dims: (2, 2, 2),
            origin: Point3::new(0.0, 0.0, 0.0),
            resolution: 0.2,
        };
        let mut grid = VoxelGrid::empty(geom, false).unwrap();
        grid.set(0, 0, 0, 0);
        let pts = voxel_centroids(&grid, None).unwrap();
        assert_eq!(pts.len(), 1);
        let p = pts.points()[0];
        assert!((p.x - 0.1).abs() < 1e-7 && (p.y - 0.1).abs() < 1e-7 && (p.z - 0.1).abs() < 1e-7);
    }

    #[test]
    fn centroids_empty_grid() {
        let geom = VoxelGridGeometry { dims: (3, 3, 3), origin: Point3::new(0.0, 0.0, 0.0), resolution: 1.0 };
        let grid = VoxelGrid::empty(geom, false).unwrap();
        assert!(voxel_centroids(&grid, None).unwrap().is_empty());
    }

    #[test]
    fn centroids_label_filter() {
        // Two occupied voxels, filter matches one. Hand enumeration:
        // (0,0,0) labeled 40 passes, (1,0,0) labeled 44 does not.
        let geom = VoxelGridGeometry { dims: (2, 1, 1), origin: Point3::new(0.0, 0.0, 0.0), resolution: 1.0 };
        let mut grid = VoxelGrid::empty(geom, true).unwrap();
        grid.set(0, 0, 0, 40);
        grid.set(1, 0, 0, 44);
        let pts = voxel_centroids(&grid, Some(&labels(&[40]))).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts.points()[0], Point3::new(0.5, 0.5, 0.5));
        assert_eq!(pts.labels().unwrap(), &[40]);
    }

    #[test]
    fn centroids_filter_requires_labels() {
        let geom = VoxelGridGeometry { dims: (1, 1, 1), origin: Point3::new(0.0, 0.0, 0.0), resolution: 1.0 };
        let grid = VoxelGrid::empty(geom, false).unwrap();
        assert!(matches!(voxel_centroids(&grid, Some(&labels(&[40]))), Err(Error::Config(_))));
    }

    #[test]
    fn centroid_count_matches_popcount() {
        let geom = VoxelGridGeometry { dims: (4, 3, 2), origin: Point3::new(-1.0, -1.0, 0.0), resolution: 0.5 };
        let mut grid = VoxelGrid::empty(geom, true).unwrap();
        grid.set(0, 0, 0, 40);
        grid.set(3, 2, 1, 40);
        grid.set(1, 1, 1, 9);
        let all = voxel_centroids(&grid, None).unwrap();
        assert_eq!(all.len(), grid.occupied_count());
        let road = voxel_centroids(&grid, Some(&labels(&[40]))).unwrap();
        assert_eq!(road.len(), 2);
    }
}
