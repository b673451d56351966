//! The run configuration file.
//!
//! A single TOML document with four optional sections — `[dataset]`,
//! `[model]`, `[loss]`, `[train]` — each falling back to its defaults when
//! absent. Unknown keys anywhere are rejected, so typos fail fast instead
//! of silently running with defaults.

use std::path::Path;

use serde::Deserialize;
use terrain_core::cloud::{Point3, VoxelGridGeometry};
use terrain_core::dataset::{DatasetConfig, MaskSource};
use terrain_core::model::{ModelConfig, TrainConfig};
use terrain_core::objective::LossConfig;
use terrain_core::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: DatasetSection,
    /// Model architecture; `None` when the file has no `[model]` section,
    /// letting commands pick their own default size.
    pub model: Option<ModelConfig>,
    pub loss: LossConfig,
    pub train: TrainConfig,
}

impl FileConfig {
    /// The architecture to use when the file does not specify one.
    pub fn model_or(&self, fallback: ModelConfig) -> ModelConfig {
        self.model.unwrap_or(fallback)
    }
}

/// Dataset-construction settings in file form.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Buffer distance in meters: targets must lie at least this far from
    /// every input road point.
    pub d_y: f64,
    /// Semantic codes treated as road.
    pub road_labels: Vec<u32>,
    /// Cell size in meters for the grid-cluster mask fallback.
    pub cluster_cell: f64,
    /// Resolution of the top-down mask projection.
    pub bev_meters_per_pixel: f64,
    /// Measure the buffer in the ground plane only instead of 3D.
    pub planar_buffer: bool,
    /// Where masks come from: "grid-cluster" derives them from the target
    /// cloud, "precomputed" requires a masks file per scan.
    pub mask_source: String,
    /// Voxel counts per axis of ground-truth voxel files.
    pub voxel_dims: [usize; 3],
    /// World position of the voxel grid's minimum corner.
    pub voxel_origin: [f32; 3],
    /// Voxel edge length in meters.
    pub voxel_resolution: f32,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        let g = VoxelGridGeometry::default();
        DatasetSection {
            d_y: d.d_y,
            road_labels: d.road_labels.iter().copied().collect(),
            cluster_cell: d.cluster_cell,
            bev_meters_per_pixel: d.bev_meters_per_pixel,
            planar_buffer: d.planar_buffer,
            mask_source: "grid-cluster".into(),
            voxel_dims: [g.dims.0, g.dims.1, g.dims.2],
            voxel_origin: [g.origin.x, g.origin.y, g.origin.z],
            voxel_resolution: g.resolution,
        }
    }
}

impl DatasetSection {
    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        let mask_source = match self.mask_source.as_str() {
            "grid-cluster" => MaskSource::GridCluster,
            "precomputed" => MaskSource::Precomputed,
            other => {
                return Err(Error::Config(format!(
                    "unknown mask source {other:?} (expected \"grid-cluster\" or \"precomputed\")"
                )))
            }
        };
        let cfg = DatasetConfig {
            d_y: self.d_y,
            road_labels: self.road_labels.iter().copied().collect(),
            crop: None,
            mask_source,
            cluster_cell: self.cluster_cell,
            bev_meters_per_pixel: self.bev_meters_per_pixel,
            planar_buffer: self.planar_buffer,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn voxel_geometry(&self) -> Result<VoxelGridGeometry> {
        let g = VoxelGridGeometry {
            dims: (self.voxel_dims[0], self.voxel_dims[1], self.voxel_dims[2]),
            origin: Point3::new(self.voxel_origin[0], self.voxel_origin[1], self.voxel_origin[2]),
            resolution: self.voxel_resolution,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Loads and validates the config file, or returns the defaults when no
/// file is given.
pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: FileConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    cfg.dataset.dataset_config()?;
    cfg.dataset.voxel_geometry()?;
    if let Some(model) = &cfg.model {
        model.validate()?;
    }
    cfg.loss.validate()?;
    cfg.train.validate()?;
    Ok(cfg)
}
