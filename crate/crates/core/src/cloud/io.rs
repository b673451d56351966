//! On-disk formats.
//!
//! * Native cloud (`.tepc`): small binary container for a point cloud with
//!   optional labels. Little-endian throughout.
//! * Raw scan (`.bin`): rows of four f32 LE (x, y, z, intensity); intensity
//!   is dropped on read.
//! * Scan labels (`.label`): one u32 LE per point; the semantic class is the
//!   low 16 bits.
//! * Voxel occupancy (`.bin` under a voxel directory): one bit per voxel,
//!   packed MSB-first, linear index `x * ny * nz + y * nz + z`.
//! * Voxel labels (`.label` under a voxel directory): one u16 LE per voxel.
//! * PLY export: ASCII `ply` with one uchar RGB color per vertex, for quick
//!   inspection in standard viewers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

use super::{Point3, PointCloud, VoxelGrid, VoxelGridGeometry};

const MAGIC: [u8; 4] = *b"TEPC";
const VERSION: u8 = 1;
const FLAG_LABELS: u8 = 0x01;

/// Writes the native cloud format to a stream.
///
/// Layout: magic `TEPC`, version byte (1), flags byte (bit 0 = labels
/// present), two reserved zero bytes, u32 LE point count, then the points as
/// x/y/z f32 LE, then (when flagged) one u32 LE label per point.
pub fn write_native_cloud_to<W: Write>(w: &mut W, cloud: &PointCloud) -> Result<()> {
    let count = u32::try_from(cloud.len())
        .map_err(|_| Error::Validation(format!("cloud too large for format: {} points", cloud.len())))?;
    let flags = if cloud.has_labels() { FLAG_LABELS } else { 0 };
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, flags, 0, 0])?;
    w.write_all(&count.to_le_bytes())?;
    for p in cloud.points() {
        w.write_all(&p.x.to_le_bytes())?;
        w.write_all(&p.y.to_le_bytes())?;
        w.write_all(&p.z.to_le_bytes())?;
    }
    if let Some(labels) = cloud.labels() {
        for &l in labels {
            w.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads the native cloud format from a stream; see [`write_native_cloud_to`].
///
/// Rejects wrong magic, unknown version, unknown flag bits, nonzero reserved
/// bytes, truncation, trailing bytes and non-finite coordinates.
pub fn read_native_cloud_from<R: Read>(r: &mut R) -> Result<PointCloud> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated header (need 12 bytes)".into()))?;
    if header[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:02x?}, expected \"TEPC\"", &header[0..4])));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let flags = header[5];
    if flags & !FLAG_LABELS != 0 {
        return Err(Error::Format(format!("unknown flag bits 0x{flags:02x}")));
    }
    if header[6] != 0 || header[7] != 0 {
        return Err(Error::Format("nonzero reserved bytes".into()));
    }
    let count = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;

    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let point_bytes = count * 12;
    let label_bytes = if flags & FLAG_LABELS != 0 { count * 4 } else { 0 };
    if body.len() != point_bytes + label_bytes {
        return Err(Error::Format(format!(
            "body is {} bytes, expected {} for {} points",
            body.len(),
            point_bytes + label_bytes,
            count
        )));
    }

    let mut points = Vec::with_capacity(count);
    for chunk in body[..point_bytes].chunks_exact(12) {
        points.push(Point3::new(
            f32::from_le_bytes(chunk[0..4].try_into().unwrap()),
            f32::from_le_bytes(chunk[4..8].try_into().unwrap()),
            f32::from_le_bytes(chunk[8..12].try_into().unwrap()),
        ));
    }
    if flags & FLAG_LABELS != 0 {
        let labels = body[point_bytes..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        PointCloud::with_labels(points, labels)
    } else {
        PointCloud::new(points)
    }
}

pub fn write_native_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_native_cloud_to(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn read_native_cloud(path: &Path) -> Result<PointCloud> {
    read_native_cloud_from(&mut BufReader::new(File::open(path)?))
}

/// Reads a raw scan: rows of x/y/z/intensity f32 LE. Intensity is discarded.
pub fn read_kitti_velodyne(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::Format(format!(
            "scan length {} is not a multiple of 16 bytes",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for row in bytes.chunks_exact(16) {
        points.push(Point3::new(
            f32::from_le_bytes(row[0..4].try_into().unwrap()),
            f32::from_le_bytes(row[4..8].try_into().unwrap()),
            f32::from_le_bytes(row[8..12].try_into().unwrap()),
        ));
    }
    PointCloud::new(points)
}

/// Reads per-point scan labels (u32 LE each) and attaches them to `cloud`.
/// Each point's label is the record's low 16 bits — the semantic class; the
/// high bits carry instance ids and are dropped. The record count must equal
/// the cloud's point count.
pub fn read_kitti_labels(path: &Path, cloud: &PointCloud) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "label file length {} is not a multiple of 4 bytes",
            bytes.len()
        )));
    }
    let labels: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) & 0xFFFF)
        .collect();
    if labels.len() != cloud.len() {
        return Err(Error::Length { expected: cloud.len(), actual: labels.len() });
    }
    PointCloud::with_labels(cloud.points().to_vec(), labels)
}

/// Reads a packed voxel occupancy file, plus an optional per-voxel label
/// file, into a grid with the given geometry.
///
/// Occupancy is one bit per voxel packed MSB-first (voxel `i` lives in byte
/// `i / 8`, bit `7 - i % 8`), linear index `x * ny * nz + y * nz + z`. The
/// label file holds one u16 LE per voxel for the full grid.
pub fn read_kitti_voxels(
    occupancy_path: &Path,
    label_path: Option<&Path>,
    geometry: VoxelGridGeometry,
) -> Result<VoxelGrid> {
    geometry.validate()?;
    let n = geometry.voxel_count();
    let bytes = std::fs::read(occupancy_path)?;
    let expected = n.div_ceil(8);
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "occupancy file is {} bytes, expected {} for {:?} voxels",
            bytes.len(),
            expected,
            geometry.dims
        )));
    }
    let occupancy: Vec<bool> =
        (0..n).map(|i| bytes[i / 8] & (1 << (7 - i % 8)) != 0).collect();

    let labels = match label_path {
        Some(path) => {
            let lb = std::fs::read(path)?;
            if lb.len() != n * 2 {
                return Err(Error::Format(format!(
                    "voxel label file is {} bytes, expected {} for {:?} voxels",
                    lb.len(),
                    n * 2,
                    geometry.dims
                )));
            }
            Some(
                lb.chunks_exact(2)
                    .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        None => None,
    };
    VoxelGrid::new(geometry, occupancy, labels)
}

/// A color in the 0..=255 range per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb(pub u8, pub u8, pub u8);

/// One colored group of points in a PLY export.
#[derive(Debug, Clone)]
pub struct PlySection<'a> {
    pub points: &'a [Point3],
    pub color: Rgb,
}

/// Writes the sections as a single ASCII PLY file, each section uniformly
/// colored. Output is deterministic: same sections, same bytes.
pub fn write_ply(path: &Path, sections: &[PlySection]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let total: usize = sections.iter().map(|s| s.points.len()).sum();
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {total}")?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "property uchar red")?;
    writeln!(w, "property uchar green")?;
    writeln!(w, "property uchar blue")?;
    writeln!(w, "end_header")?;
    for s in sections {
        let Rgb(r, g, b) = s.color;
        for p in s.points {
            writeln!(w, "{} {} {} {r} {g} {b}", p.x, p.y, p.z)?;
        }
    }
    w.flush()?;
    Ok(())
}
