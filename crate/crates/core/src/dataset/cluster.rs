//! Fallback mask construction by grid clustering.
//!
//! When no externally produced masks exist, the target cloud itself defines
//! the mask regions: rasterize onto a coarse top-down grid, group occupied
//! cells into 8-connected components, dilate each component by one cell, and
//! trace each component's outer boundary as a polygon. Every input point is
//! inside its component's polygon by construction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::cloud::PointCloud;
use crate::{Error, Result};

use super::bev::{BevMaskSet, BevProjection};

/// Builds a mask set covering `cloud` by clustering on a grid of `cell`
/// meters. Polygons are emitted in pixel coordinates of `projection`, one
/// outer boundary per component, ordered by each component's smallest cell.
pub fn fallback_cluster_masks(
    cloud: &PointCloud,
    cell: f64,
    projection: &BevProjection,
) -> Result<BevMaskSet> {
    if cloud.is_empty() {
        return Err(Error::Empty("cluster mask input"));
    }
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(Error::Config(format!("cluster cell size must be positive, got {cell}")));
    }
    projection.validate()?;

    // Rasterize: cell (cu, cv) covers world [origin + cu*cell, origin + (cu+1)*cell).
    let [ox, oy] = projection.origin_xy;
    let mut occupied: BTreeSet<(i64, i64)> = BTreeSet::new();
    for p in cloud.points() {
        let cu = ((p.x as f64 - ox) / cell).floor() as i64;
        let cv = ((p.y as f64 - oy) / cell).floor() as i64;
        occupied.insert((cu, cv));
    }

    // 8-connected components, discovered in cell order for determinism.
    let mut assigned: BTreeSet<(i64, i64)> = BTreeSet::new();
    let mut polygons = Vec::new();
    for &seed in occupied.iter() {
        if assigned.contains(&seed) {
            continue;
        }
        let mut component = BTreeSet::new();
        let mut queue = VecDeque::from([seed]);
        assigned.insert(seed);
        while let Some((u, v)) = queue.pop_front() {
            component.insert((u, v));
            for du in -1..=1i64 {
                for dv in -1..=1i64 {
                    let n = (u + du, v + dv);
                    if occupied.contains(&n) && assigned.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }

        // Dilate by one cell (Chebyshev) so the mask clears the points that
        // sit on cell boundaries with margin.
        let mut dilated = BTreeSet::new();
        for &(u, v) in &component {
            for du in -1..=1i64 {
                for dv in -1..=1i64 {
                    dilated.insert((u + du, v + dv));
                }
            }
        }

        polygons.push(outer_boundary(&dilated));
    }

    // Convert cell-corner coordinates to pixel coordinates: corner (u, v)
    // lies at world (ox + u*cell, oy + v*cell).
    let scale = cell / projection.meters_per_pixel;
    let polygons = polygons
        .into_iter()
        .map(|poly| {
            poly.into_iter()
                .map(|(u, v)| [u as f64 * scale, v as f64 * scale])
                .collect()
        })
        .collect();
    BevMaskSet::new(*projection, polygons)
}

/// Traces the outer boundary polygon of a cell set.
///
/// Every boundary edge (a cell side whose neighbor is outside the set) is
/// collected as a directed segment, oriented counterclockwise around the
/// set. Chaining the segments yields the outer loop plus any hole loops;
/// the loop enclosing the largest area is the outer boundary. Collinear
/// runs are merged so the polygon stays small.
fn outer_boundary(cells: &BTreeSet<(i64, i64)>) -> Vec<(i64, i64)> {
    // start corner -> end corners, kept sorted for deterministic walks.
    let mut edges: BTreeMap<(i64, i64), Vec<(i64, i64)>> = BTreeMap::new();
    let mut add = |a: (i64, i64), b: (i64, i64)| edges.entry(a).or_default().push(b);
    for &(u, v) in cells {
        if !cells.contains(&(u, v - 1)) {
            add((u, v), (u + 1, v)); // bottom, rightward
        }
        if !cells.contains(&(u + 1, v)) {
            add((u + 1, v), (u + 1, v + 1)); // right, upward
        }
        if !cells.contains(&(u, v + 1)) {
            add((u + 1, v + 1), (u, v + 1)); // top, leftward
        }
        if !cells.contains(&(u - 1, v)) {
            add((u, v + 1), (u, v)); // left, downward
        }
    }
    for ends in edges.values_mut() {
        ends.sort_unstable();
    }

    let mut loops: Vec<Vec<(i64, i64)>> = Vec::new();
    while let Some((&start, _)) = edges.iter().next() {
        let mut walk = vec![start];
        let mut current = start;
        let mut incoming: Option<(i64, i64)> = None;
        loop {
            let ends = edges.get_mut(&current).expect("boundary edges pair up into loops");
            // At a pinch vertex several continuations exist; prefer the
            // sharpest left turn relative to the incoming direction so each
            // walk closes into a simple loop.
            let pick = match incoming {
                None => 0,
                Some(dir) => {
                    let left = (-dir.1, dir.0);
                    let right = (dir.1, -dir.0);
                    let mut best = 0;
                    let mut best_rank = u8::MAX;
                    for (i, &end) in ends.iter().enumerate() {
                        let step = (end.0 - current.0, end.1 - current.1);
                        let rank = if step == left {
                            0
                        } else if step == dir {
                            1
                        } else if step == right {
                            2
                        } else {
                            3
                        };
                        if rank < best_rank {
                            best_rank = rank;
                            best = i;
                        }
                    }
                    best
                }
            };
            let next = ends.remove(pick);
            if ends.is_empty() {
                edges.remove(&current);
            }
            incoming = Some((next.0 - current.0, next.1 - current.1));
            current = next;
            if current == start {
                break;
            }
            walk.push(current);
        }
        loops.push(walk);
    }

    // Outer loop = largest enclosed area; holes are dropped (masks are
    // filled regions).
    let outer = loops
        .into_iter()
        .max_by(|a, b| loop_area2(a).abs().cmp(&loop_area2(b).abs()))
        .expect("non-empty cell set has a boundary");
    merge_collinear(outer)
}

/// Twice the signed area of an integer-vertex loop.
fn loop_area2(poly: &[(i64, i64)]) -> i64 {
    let mut acc = 0i64;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.0 * b.1 - b.0 * a.1;
    }
    acc
}

/// Removes vertices between consecutive unit steps in the same direction.
fn merge_collinear(poly: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    let n = poly.len();
    let mut kept = Vec::with_capacity(n);
    for i in 0..n {
        let prev = poly[(i + n - 1) % n];
        let here = poly[i];
        let next = poly[(i + 1) % n];
        let din = (here.0 - prev.0, here.1 - prev.1);
        let dout = (next.0 - here.0, next.1 - here.1);
        if din != dout {
            kept.push(here);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;

    fn proj(mpp: f64) -> BevProjection {
        BevProjection { origin_xy: [0.0, 0.0], meters_per_pixel: mpp, width: 100, height: 100 }
    }

    fn cloud_of(points: &[(f64, f64)]) -> PointCloud {
        PointCloud::new(points.iter().map(|&(x, y)| Point3::new(x as f32, y as f32, 0.0)).collect())
            .unwrap()
    }

    #[test]
    fn single_point_yields_three_by_three_square() {
        // Point in cell (2,3); dilation spans cells (1..=3, 2..=4), whose
        // outer boundary is the square with corners (1,2) and (4,5) in cell
        // units. At cell=1 and mpp=1 pixel units equal cell units.
        let masks = fallback_cluster_masks(&cloud_of(&[(2.5, 3.5)]), 1.0, &proj(1.0)).unwrap();
        assert_eq!(masks.polygons.len(), 1);
        let mut poly = masks.polygons[0].clone();
        poly.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(poly, vec![[1.0, 2.0], [1.0, 5.0], [4.0, 2.0], [4.0, 5.0]]);
    }

    #[test]
    fn pixel_scale_conversion() {
        // Same geometry, but 0.5 m/pixel doubles all pixel coordinates.
        let masks = fallback_cluster_masks(&cloud_of(&[(2.5, 3.5)]), 1.0, &proj(0.5)).unwrap();
        let mut poly = masks.polygons[0].clone();
        poly.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(poly, vec![[2.0, 4.0], [2.0, 10.0], [8.0, 4.0], [8.0, 10.0]]);
    }

    #[test]
    fn separated_clusters_get_separate_polygons() {
        // Two groups more than three cells apart cannot merge even after
        // dilation by one cell.
        let masks = fallback_cluster_masks(
            &cloud_of(&[(0.5, 0.5), (1.5, 0.5), (8.5, 8.5), (9.5, 9.5)]),
            1.0,
            &proj(1.0),
        )
        .unwrap();
        assert_eq!(masks.polygons.len(), 2);
    }

    #[test]
    fn adjacent_and_diagonal_cells_merge() {
        let masks = fallback_cluster_masks(
            &cloud_of(&[(0.5, 0.5), (1.5, 1.5), (2.5, 1.5)]),
            1.0,
            &proj(1.0),
        )
        .unwrap();
        assert_eq!(masks.polygons.len(), 1);
    }

    #[test]
    fn every_input_point_is_inside_its_mask() {
        let pts: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let x = (i % 10) as f64 * 0.4 + 1.0;
                let y = (i / 10) as f64 * 0.7 + 2.0;
                if i % 3 == 0 {
                    (x + 14.0, y + 9.0)
                } else {
                    (x, y)
                }
            })
            .collect();
        let cloud = cloud_of(&pts);
        let masks = fallback_cluster_masks(&cloud, 0.5, &proj(0.1)).unwrap();
        for p in cloud.points() {
            assert!(masks.contains(*p), "point ({}, {}) escaped its mask", p.x, p.y);
        }
    }

    #[test]
    fn l_shaped_component_boundary_is_concave() {
        // An L of cells produces a six-corner outer boundary after collinear
        // merging (the dilated L keeps its concavity).
        let masks = fallback_cluster_masks(
            &cloud_of(&[(0.5, 0.5), (0.5, 1.5), (0.5, 2.5), (1.5, 0.5), (2.5, 0.5)]),
            1.0,
            &proj(1.0),
        )
        .unwrap();
        assert_eq!(masks.polygons.len(), 1);
        assert_eq!(masks.polygons[0].len(), 6);
        // The region diagonal to both arms stays outside.
        assert!(!masks.contains_xy(3.5, 3.5));
        assert!(masks.contains_xy(0.5, 2.5));
        assert!(masks.contains_xy(2.5, 0.5));
    }

    #[test]
    fn rejects_empty_and_bad_cell() {
        assert!(matches!(
            fallback_cluster_masks(&PointCloud::default(), 1.0, &proj(1.0)),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            fallback_cluster_masks(&cloud_of(&[(0.0, 0.0)]), 0.0, &proj(1.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn negative_coordinates_handled() {
        let masks = fallback_cluster_masks(&cloud_of(&[(-5.3, -2.7)]), 0.5, &proj(0.5)).unwrap();
        assert!(masks.contains_xy(-5.3, -2.7));
        assert!(!masks.contains_xy(0.0, 0.0));
    }

    #[test]
    fn deterministic_output() {
        let cloud = cloud_of(&[(0.5, 0.5), (1.5, 1.5), (9.0, 9.0), (9.5, 8.5), (4.0, 7.0)]);
        let a = fallback_cluster_masks(&cloud, 0.7, &proj(0.2)).unwrap();
        let b = fallback_cluster_masks(&cloud, 0.7, &proj(0.2)).unwrap();
        assert_eq!(a, b);
    }
}
