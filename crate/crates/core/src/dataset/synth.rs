//! Synthetic desk-scale scenes: corridor layouts where part of the road is
//! provably hidden from the sensor.
//!
//! Each scene is a flat road surface bounded by walls. The ground-truth
//! voxel grid covers the full layout; the scan contains only points visible
//! from the sensor under 2D ray casting against the wall segments (plus a
//! range cutoff). Corner layouts add a short wall stub at the inner corner,
//! sized from the sensor position, so the side arm is occluded in its
//! entirety rather than leaving a sliver visible past the corner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Point3, PointCloud, VoxelGrid, VoxelGridGeometry};
use crate::{Error, Result};

/// Semantic label for road points and voxels.
pub const ROAD_LABEL: u32 = 40;
/// Semantic label for wall points and voxels.
pub const WALL_LABEL: u32 = 50;

/// Scene layouts. The corner and intersection kinds have side arms hidden
/// from the sensor; the straight kind relies on the range cutoff alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    LCorner,
    TIntersection,
    Straight,
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SceneKind::LCorner => "l-corner",
            SceneKind::TIntersection => "t-intersection",
            SceneKind::Straight => "straight",
        })
    }
}

/// Geometry and sampling knobs for a synthetic scene. All lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    /// Half the road width; the main corridor spans y in [-w, w].
    pub road_half_width: f64,
    /// Length of the main corridor along +x, starting at x = 0.
    pub main_length: f64,
    /// How far side arms extend beyond the main corridor's edge.
    pub branch_length: f64,
    /// Sensor position; must sit inside the main corridor.
    pub sensor: [f64; 3],
    /// Maximum sensor reach (3D distance).
    pub sensor_range: f64,
    /// Grid spacing of road surface points before jitter.
    pub point_spacing: f64,
    /// Spacing of wall points along each wall segment.
    pub wall_spacing: f64,
    /// Height at which wall points are placed.
    pub wall_height: f64,
    /// Edge length of ground-truth voxels.
    pub voxel_resolution: f64,
}

impl SceneParams {
    /// Defaults sized so a scene yields a few hundred scan points and a
    /// target set around 150 points at the default buffer.
    pub fn for_kind(kind: SceneKind) -> Self {
        let base = SceneParams {
            road_half_width: 2.0,
            main_length: 12.0,
            branch_length: 10.0,
            sensor: [1.0, 0.75, 0.3],
            sensor_range: 30.0,
            point_spacing: 0.35,
            wall_spacing: 0.5,
            wall_height: 1.0,
            voxel_resolution: 0.5,
        };
        match kind {
            SceneKind::LCorner => base,
            SceneKind::TIntersection => {
                SceneParams { sensor: [1.0, 0.0, 0.3], branch_length: 8.0, ..base }
            }
            SceneKind::Straight => {
                SceneParams { sensor: [1.0, 0.0, 0.3], main_length: 24.0, sensor_range: 10.0, ..base }
            }
        }
    }

    fn validate(&self, kind: SceneKind) -> Result<()> {
        let all_finite = self.road_half_width.is_finite()
            && self.main_length.is_finite()
            && self.branch_length.is_finite()
            && self.sensor.iter().all(|v| v.is_finite())
            && self.sensor_range.is_finite()
            && self.point_spacing.is_finite()
            && self.wall_spacing.is_finite()
            && self.wall_height.is_finite()
            && self.voxel_resolution.is_finite();
        if !all_finite {
            return Err(Error::Config("scene parameters must be finite".into()));
        }
        if self.road_half_width <= 0.0
            || self.point_spacing <= 0.0
            || self.wall_spacing <= 0.0
            || self.voxel_resolution <= 0.0
            || self.sensor_range <= 0.0
            || self.wall_height <= 0.0
        {
            return Err(Error::Config("scene lengths must be positive".into()));
        }
        if self.main_length <= 2.0 * self.point_spacing {
            return Err(Error::Config(format!(
                "main corridor of {} m is too short for {} m point spacing",
                self.main_length, self.point_spacing
            )));
        }
        let needs_branch = !matches!(kind, SceneKind::Straight);
        if needs_branch {
            if self.branch_length <= 0.0 {
                return Err(Error::Config("branch length must be positive".into()));
            }
            if self.main_length <= 2.0 * self.road_half_width {
                return Err(Error::Config(
                    "main corridor must be longer than the side arm is wide".into(),
                ));
            }
        }
        let junction = self.main_length - 2.0 * self.road_half_width;
        let sensor_ok = self.sensor[0] > 0.0
            && self.sensor[1].abs() < self.road_half_width
            && (!needs_branch || self.sensor[0] < junction);
        if !sensor_ok {
            return Err(Error::Config(
                "sensor must sit inside the main corridor before the junction".into(),
            ));
        }
        Ok(())
    }
}

/// Closed axis-aligned road rectangle on the z = 0 plane.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// 2D wall segment (walls are vertical; only the footprint matters for
/// occlusion).
#[derive(Debug, Clone, Copy)]
struct Seg {
    a: [f64; 2],
    b: [f64; 2],
}

struct Layout {
    roads: Vec<Rect>,
    walls: Vec<Seg>,
}

/// The y at which a ray from the sensor through the junction opening first
/// reaches the corridor's far end at the arm-side road edge. A stub from
/// that height to the road edge blocks every ray into the side arm.
fn stub_reach(sensor: [f64; 3], junction_x: f64, far_x: f64, edge_y: f64) -> f64 {
    sensor[1] + (edge_y - sensor[1]) * (junction_x - sensor[0]) / (far_x - sensor[0])
}

fn layout(kind: SceneKind, p: &SceneParams) -> Layout {
    let hw = p.road_half_width;
    let main = p.main_length;
    let jx = main - 2.0 * hw;
    let far = hw + p.branch_length;
    match kind {
        SceneKind::LCorner => Layout {
            roads: vec![
                Rect { x0: 0.0, x1: main, y0: -hw, y1: hw },
                Rect { x0: jx, x1: main, y0: hw, y1: far },
            ],
            walls: vec![
                Seg { a: [0.0, -hw], b: [main, -hw] },
                Seg { a: [0.0, hw], b: [jx, hw] },
                Seg { a: [main, -hw], b: [main, far] },
                Seg { a: [jx, hw], b: [jx, far] },
                Seg { a: [jx, far], b: [main, far] },
                Seg { a: [0.0, -hw], b: [0.0, hw] },
                Seg { a: [jx, stub_reach(p.sensor, jx, main, hw)], b: [jx, hw] },
            ],
        },
        SceneKind::TIntersection => Layout {
            roads: vec![
                Rect { x0: 0.0, x1: jx, y0: -hw, y1: hw },
                Rect { x0: jx, x1: main, y0: -far, y1: far },
            ],
            walls: vec![
                Seg { a: [0.0, -hw], b: [jx, -hw] },
                Seg { a: [0.0, hw], b: [jx, hw] },
                Seg { a: [main, -far], b: [main, far] },
                Seg { a: [jx, hw], b: [jx, far] },
                Seg { a: [jx, -far], b: [jx, -hw] },
                Seg { a: [jx, far], b: [main, far] },
                Seg { a: [jx, -far], b: [main, -far] },
                Seg { a: [0.0, -hw], b: [0.0, hw] },
                Seg { a: [jx, stub_reach(p.sensor, jx, main, hw)], b: [jx, hw] },
                Seg { a: [jx, -hw], b: [jx, stub_reach(p.sensor, jx, main, -hw)] },
            ],
        },
        SceneKind::Straight => Layout {
            roads: vec![Rect { x0: 0.0, x1: main, y0: -hw, y1: hw }],
            walls: vec![
                Seg { a: [0.0, -hw], b: [main, -hw] },
                Seg { a: [0.0, hw], b: [main, hw] },
                Seg { a: [0.0, -hw], b: [0.0, hw] },
                Seg { a: [main, -hw], b: [main, hw] },
            ],
        },
    }
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Does the wall block the open sight line from `a` to `b`? Intersections at
/// the very endpoints of the sight line do not block (a wall point must see
/// itself); hits anywhere along the wall segment, endpoints included, do.
fn blocks(a: [f64; 2], b: [f64; 2], wall: &Seg) -> bool {
    let r = [b[0] - a[0], b[1] - a[1]];
    let s = [wall.b[0] - wall.a[0], wall.b[1] - wall.a[1]];
    let denom = cross2(r, s);
    if denom.abs() < 1e-12 {
        return false;
    }
    let qp = [wall.a[0] - a[0], wall.a[1] - a[1]];
    let t = cross2(qp, s) / denom;
    let u = cross2(qp, r) / denom;
    t > 1e-9 && t < 1.0 - 1e-9 && (-1e-9..=1.0 + 1e-9).contains(&u)
}

fn visible(sensor: [f64; 3], target: [f64; 3], range: f64, walls: &[Seg]) -> bool {
    let d2 = (0..3).map(|i| (target[i] - sensor[i]).powi(2)).sum::<f64>();
    if d2.sqrt() > range {
        return false;
    }
    let a = [sensor[0], sensor[1]];
    let b = [target[0], target[1]];
    walls.iter().all(|w| !blocks(a, b, w))
}

/// Generates a deterministic scene: a labeled scan of what the sensor sees
/// and a labeled ground-truth voxel grid of the full layout.
///
/// Road points lie on a jittered grid at z = 0 (label 40); wall points sit
/// at `wall_height` along each wall (label 50). The grid marks the road
/// layer across both visible and occluded portions, which is exactly what
/// makes the occluded portion recoverable as a training target.
pub fn synth_scene(
    kind: SceneKind,
    params: &SceneParams,
    seed: u64,
) -> Result<(PointCloud, VoxelGrid)> {
    params.validate(kind)?;
    let lay = layout(kind, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Road surface points over each rectangle, jittered but confined to
    // their grid cell so the layout boundary is respected.
    let mut road_points: Vec<[f64; 3]> = Vec::new();
    let s = params.point_spacing;
    for r in &lay.roads {
        let nx = ((r.x1 - r.x0) / s).floor() as usize;
        let ny = ((r.y1 - r.y0) / s).floor() as usize;
        for i in 0..nx {
            for j in 0..ny {
                let jx: f64 = rng.gen_range(-0.3 * s..0.3 * s);
                let jy: f64 = rng.gen_range(-0.3 * s..0.3 * s);
                let x = r.x0 + (i as f64 + 0.5) * s + jx;
                let y = r.y0 + (j as f64 + 0.5) * s + jy;
                road_points.push([x, y, 0.0]);
            }
        }
    }

    // Wall points, evenly spaced along each segment.
    let mut wall_points: Vec<[f64; 3]> = Vec::new();
    for w in &lay.walls {
        let len = ((w.b[0] - w.a[0]).powi(2) + (w.b[1] - w.a[1]).powi(2)).sqrt();
        let n = (len / params.wall_spacing).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            wall_points.push([
                w.a[0] + t * (w.b[0] - w.a[0]),
                w.a[1] + t * (w.b[1] - w.a[1]),
                params.wall_height,
            ]);
        }
    }

    // The scan keeps whatever the sensor can see.
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for &p in &road_points {
        if visible(params.sensor, p, params.sensor_range, &lay.walls) {
            points.push(Point3::new(p[0] as f32, p[1] as f32, p[2] as f32));
            labels.push(ROAD_LABEL);
        }
    }
    for &p in &wall_points {
        if visible(params.sensor, p, params.sensor_range, &lay.walls) {
            points.push(Point3::new(p[0] as f32, p[1] as f32, p[2] as f32));
            labels.push(WALL_LABEL);
        }
    }
    let scan = PointCloud::with_labels(points, labels)?;

    // Ground-truth grid over the whole layout, roads and walls alike. The
    // z origin is half a voxel below the road plane so road centroids land
    // exactly at z = 0.
    let res = params.voxel_resolution;
    let mut min_xy = [f64::INFINITY; 2];
    let mut max_xy = [f64::NEG_INFINITY; 2];
    for r in &lay.roads {
        min_xy = [min_xy[0].min(r.x0), min_xy[1].min(r.y0)];
        max_xy = [max_xy[0].max(r.x1), max_xy[1].max(r.y1)];
    }
    for w in &lay.walls {
        for v in [w.a, w.b] {
            min_xy = [min_xy[0].min(v[0]), min_xy[1].min(v[1])];
            max_xy = [max_xy[0].max(v[0]), max_xy[1].max(v[1])];
        }
    }
    let dims = (
        ((max_xy[0] - min_xy[0]) / res).ceil() as usize + 1,
        ((max_xy[1] - min_xy[1]) / res).ceil() as usize + 1,
        ((params.wall_height + res / 2.0) / res).ceil() as usize + 1,
    );
    let geometry = VoxelGridGeometry {
        dims,
        origin: Point3::new(min_xy[0] as f32, min_xy[1] as f32, (-res / 2.0) as f32),
        resolution: res as f32,
    };
    let mut grid = VoxelGrid::empty(geometry, true)?;

    for w in &lay.walls {
        let len = ((w.b[0] - w.a[0]).powi(2) + (w.b[1] - w.a[1]).powi(2)).sqrt();
        let n = (len / (res / 2.0)).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let x = w.a[0] + t * (w.b[0] - w.a[0]);
            let y = w.a[1] + t * (w.b[1] - w.a[1]);
            if let Some((ix, iy, iz)) = grid.voxel_of(x, y, params.wall_height) {
                grid.set(ix, iy, iz, WALL_LABEL as u16);
            }
        }
    }
    // Roads marked after walls so the road label wins shared boundary cells.
    let road_layer = ((0.0 - (-res / 2.0)) / res).floor() as usize;
    for ix in 0..dims.0 {
        for iy in 0..dims.1 {
            let cx = min_xy[0] + (ix as f64 + 0.5) * res;
            let cy = min_xy[1] + (iy as f64 + 0.5) * res;
            if lay.roads.iter().any(|r| r.contains(cx, cy)) {
                grid.set(ix, iy, road_layer, ROAD_LABEL as u16);
            }
        }
    }

    Ok((scan, grid))
}
