//! Sample directory layout.
//!
//! One sample is a directory holding `manifest.json` (version, provenance,
//! buffer distance and file names), the input and target clouds in the
//! native cloud format, and `masks.json`. Writes are deterministic so
//! identical samples produce byte-identical directories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{read_native_cloud, write_native_cloud};
use crate::{Error, Result};

use super::bev::{read_masks, write_masks};
use super::TrainingSample;

const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    source_id: String,
    seed: u64,
    d_y: f64,
    input: String,
    target: String,
    masks: String,
}

/// Writes `sample` into `dir` (created if needed): `manifest.json`,
/// `input.tepc`, `target.tepc`, `masks.json`.
pub fn write_sample(sample: &TrainingSample, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        source_id: sample.source_id.clone(),
        seed: sample.seed,
        d_y: sample.d_y,
        input: "input.tepc".into(),
        target: "target.tepc".into(),
        masks: "masks.json".into(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    write_native_cloud(&dir.join("input.tepc"), &sample.input)?;
    write_native_cloud(&dir.join("target.tepc"), &sample.target)?;
    write_masks(&dir.join("masks.json"), &sample.masks)?;
    Ok(())
}

/// Reads a sample directory written by [`write_sample`]. Any missing or
/// malformed constituent file is a format error naming the file.
pub fn read_sample(dir: &Path) -> Result<TrainingSample> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("malformed manifest {}: {e}", manifest_path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "manifest version {} unsupported (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    let read_cloud = |name: &str| {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::Format(format!("missing sample file {}", path.display())));
        }
        read_native_cloud(&path)
    };
    let input = read_cloud(&manifest.input)?;
    let target = read_cloud(&manifest.target)?;
    let masks_path = dir.join(&manifest.masks);
    if !masks_path.is_file() {
        return Err(Error::Format(format!("missing mask file {}", masks_path.display())));
    }
    let masks = read_masks(&masks_path)?;
    Ok(TrainingSample {
        input,
        target,
        masks,
        d_y: manifest.d_y,
        seed: manifest.seed,
        source_id: manifest.source_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point3, PointCloud};
    use crate::dataset::bev::{BevMaskSet, BevProjection};

    fn sample_fixture() -> TrainingSample {
        TrainingSample {
            input: PointCloud::with_labels(
                vec![Point3::new(0.5, 0.25, 0.0), Point3::new(1.5, -0.75, 0.0)],
                vec![40, 40],
            )
            .unwrap(),
            target: PointCloud::new(vec![Point3::new(4.0, 4.0, 0.0)]).unwrap(),
            masks: BevMaskSet::new(
                BevProjection {
                    origin_xy: [0.0, 0.0],
                    meters_per_pixel: 0.1,
                    width: 100,
                    height: 100,
                },
                vec![vec![[30.0, 30.0], [50.0, 30.0], [50.0, 50.0], [30.0, 50.0]]],
            )
            .unwrap(),
            d_y: 1.0,
            seed: 99,
            source_id: "scene-000".into(),
        }
    }

    #[test]
    fn roundtrip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample");
        let sample = sample_fixture();
        write_sample(&sample, &path).unwrap();
        assert_eq!(read_sample(&path).unwrap(), sample);
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let sample = sample_fixture();
        write_sample(&sample, &a).unwrap();
        write_sample(&sample, &b).unwrap();
        for name in ["manifest.json", "input.tepc", "target.tepc", "masks.json"] {
            assert_eq!(
                std::fs::read(a.join(name)).unwrap(),
                std::fs::read(b.join(name)).unwrap(),
                "{name} differs"
            );
        }
    }

    #[test]
    fn missing_mask_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample");
        write_sample(&sample_fixture(), &path).unwrap();
        std::fs::remove_file(path.join("masks.json")).unwrap();
        let err = read_sample(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        assert!(err.to_string().contains("mask"), "{err}");
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample");
        write_sample(&sample_fixture(), &path).unwrap();
        let manifest = std::fs::read_to_string(path.join("manifest.json")).unwrap();
        std::fs::write(path.join("manifest.json"), manifest.replace("\"version\": 1", "\"version\": 9"))
            .unwrap();
        let err = read_sample(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn unknown_manifest_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample");
        write_sample(&sample_fixture(), &path).unwrap();
        let manifest = std::fs::read_to_string(path.join("manifest.json")).unwrap();
        std::fs::write(
            path.join("manifest.json"),
            manifest.replace("\"version\": 1", "\"version\": 1, \"extra\": true"),
        )
        .unwrap();
        assert!(matches!(read_sample(&path), Err(Error::Format(_))));
    }
}
