//! Sample production: ingesting recorded scans and generating synthetic
//! scenes.

use std::path::{Path, PathBuf};

use terrain_core::cloud::{
    read_kitti_labels, read_kitti_velodyne, read_kitti_voxels, read_native_cloud,
};
use terrain_core::dataset::{
    build_sample, build_sample_from_clouds, read_masks, synth_scene, BuildOutcome, DatasetConfig,
    SceneParams, TrainingSample,
};
use terrain_core::{Error, Result};

use crate::config::FileConfig;
use crate::{GenDataArgs, SynthArgs};

/// One scan waiting to be turned into a sample.
struct Candidate {
    id: String,
    scan: ScanSource,
    masks: Option<PathBuf>,
}

enum ScanSource {
    /// Raw scan + per-point labels + ground-truth voxel files.
    Kitti { scan: PathBuf, labels: PathBuf, voxels: PathBuf, voxel_labels: PathBuf },
    /// Native labeled scan cloud + ground-truth cloud.
    Pair { scan: PathBuf, ground_truth: PathBuf },
}

pub fn gen_data(args: &GenDataArgs, file_cfg: &FileConfig) -> Result<i32> {
    let mut cfg = file_cfg.dataset.dataset_config()?;
    if let Some(d_y) = args.d_y {
        cfg.d_y = d_y;
        cfg.validate()?;
    }

    let candidates = discover(&args.input)?;
    if candidates.is_empty() {
        eprintln!(
            "error: no scan/label/voxel triples or *.scan.tepc pairs under {}",
            args.input.display()
        );
        println!("accepted 0, rejected 0");
        return Ok(2);
    }

    let mut accepted = 0usize;
    let mut rejected = 0usize;
    for candidate in &candidates {
        match process(candidate, &cfg, file_cfg) {
            Ok(BuildOutcome::Accepted(sample)) => {
                terrain_core::dataset::write_sample(&sample, &args.output.join(&candidate.id))?;
                accepted += 1;
            }
            Ok(BuildOutcome::Rejected(reason)) => {
                eprintln!("warning: {}: skipped: {reason}", candidate.id);
                rejected += 1;
            }
            Err(e) => {
                eprintln!("warning: {}: {e}", candidate.id);
                rejected += 1;
            }
        }
    }

    println!("accepted {accepted}, rejected {rejected}");
    Ok(if accepted == 0 { 2 } else { 0 })
}

/// Lists the scans under `input`, sorted by id: the velodyne/labels/voxels
/// layout when a `velodyne` subdirectory exists, native pairs otherwise.
fn discover(input: &Path) -> Result<Vec<Candidate>> {
    if !input.is_dir() {
        return Err(Error::Config(format!("input {} is not a directory", input.display())));
    }
    let velodyne = input.join("velodyne");
    let mut candidates = if velodyne.is_dir() {
        discover_kitti(input, &velodyne)?
    } else {
        discover_pairs(input)?
    };
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(candidates)
}

fn discover_kitti(input: &Path, velodyne: &Path) -> Result<Vec<Candidate>> {
    let mut candidates = Vec::new();
    for entry in std::fs::read_dir(velodyne)? {
        let path = entry?.path();
        if path.extension().map_or(true, |e| e != "bin") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let masks = input.join("masks").join(format!("{stem}.json"));
        candidates.push(Candidate {
            id: stem.to_string(),
            scan: ScanSource::Kitti {
                scan: path.clone(),
                labels: input.join("labels").join(format!("{stem}.label")),
                voxels: input.join("voxels").join(format!("{stem}.bin")),
                voxel_labels: input.join("voxels").join(format!("{stem}.label")),
            },
            masks: masks.is_file().then_some(masks),
        });
    }
    Ok(candidates)
}

fn discover_pairs(input: &Path) -> Result<Vec<Candidate>> {
    const SCAN_SUFFIX: &str = ".scan.tepc";
    let mut candidates = Vec::new();
    for entry in std::fs::read_dir(input)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|s| s.to_str()) else {
            continue;
        };
        let Some(id) = name.strip_suffix(SCAN_SUFFIX) else {
            continue;
        };
        let masks = input.join(format!("{id}.masks.json"));
        candidates.push(Candidate {
            id: id.to_string(),
            scan: ScanSource::Pair {
                scan: path.clone(),
                ground_truth: input.join(format!("{id}.gt.tepc")),
            },
            masks: masks.is_file().then_some(masks),
        });
    }
    Ok(candidates)
}

fn process(
    candidate: &Candidate,
    cfg: &DatasetConfig,
    file_cfg: &FileConfig,
) -> Result<BuildOutcome> {
    let masks = candidate.masks.as_deref().map(read_masks).transpose()?;
    // Samples record the id, not a separate seed source; downsampling seeds
    // for recorded scans start from zero.
    let seed = 0;
    match &candidate.scan {
        ScanSource::Kitti { scan, labels, voxels, voxel_labels } => {
            let cloud = read_kitti_velodyne(scan)?;
            let cloud = read_kitti_labels(labels, &cloud)?;
            let geometry = file_cfg.dataset.voxel_geometry()?;
            let grid = read_kitti_voxels(voxels, Some(voxel_labels.as_path()), geometry)?;
            build_sample(&cloud, &grid, cfg, masks, &candidate.id, seed)
        }
        ScanSource::Pair { scan, ground_truth } => {
            let scan = read_native_cloud(scan)?;
            let gt = read_native_cloud(ground_truth)?;
            build_sample_from_clouds(&scan, &gt, cfg, masks, &candidate.id, seed)
        }
    }
}

pub fn synth(args: &SynthArgs, file_cfg: &FileConfig) -> Result<i32> {
    let mut cfg = file_cfg.dataset.dataset_config()?;
    if let Some(d_y) = args.d_y {
        cfg.d_y = d_y;
        cfg.validate()?;
    }
    let kind = args.kind.into();
    let params = SceneParams::for_kind(kind);

    for i in 0..args.count {
        let seed = args.seed.wrapping_add(i);
        let id = format!("{kind}-{i:04}");
        let (scan, grid) = synth_scene(kind, &params, seed)?;
        let sample: TrainingSample = match build_sample(&scan, &grid, &cfg, None, &id, seed)? {
            BuildOutcome::Accepted(sample) => *sample,
            BuildOutcome::Rejected(reason) => {
                return Err(Error::Config(format!(
                    "scene {id} yields no sample ({reason}); adjust the dataset configuration"
                )));
            }
        };
        terrain_core::dataset::write_sample(&sample, &args.output.join(&id))?;
    }

    println!("wrote {} samples to {}", args.count, args.output.display());
    Ok(0)
}
