//! Dataset persistence: one JSON record per scene plus a binary sidecar of
//! little-endian f32 point coordinates referenced by offset/length.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{GraspPose, Rotation};
use crate::scene::{ObjectKind, ObjectModel, SceneRecord, VirtualCamera};
use crate::{Error, Mat3, Result, Vec3};

const DATASET_MAGIC: &str = "GDN-DATASET";
const DATASET_VERSION: u32 = 1;
const POINTS_MAGIC: &[u8; 8] = b"GDNPTS01";
pub const SCENES_FILE: &str = "scenes.jsonl";
pub const POINTS_FILE: &str = "points.bin";

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    points_file: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDto {
    kind: String,
    dims: Vec<f64>,
    pose_t: [f64; 3],
    pose_r: [f64; 9],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraDto {
    position: [f64; 3],
    look_at: [f64; 3],
    width: usize,
    height: usize,
    fov: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordDto {
    object: ObjectDto,
    camera: CameraDto,
    /// Offset and length in f32 units into the sidecar payload.
    cloud_offset: u64,
    cloud_len: u64,
    center: [f64; 3],
    scale: f64,
    /// Rows of (tx, ty, tz, r11..r33), normalized frame.
    grasps: Vec<[f64; 12]>,
    labels: Vec<bool>,
}

fn vec3_to_array(v: &Vec3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn rotation_to_array(r: &Rotation<f64>) -> [f64; 9] {
    let m = r.matrix();
    let mut out = [0.0; 9];
    for row in 0..3 {
        for col in 0..3 {
            out[3 * row + col] = m[(row, col)];
        }
    }
    out
}

fn rotation_from_array(a: &[f64; 9]) -> Rotation<f64> {
    Rotation::from_matrix_unchecked(Mat3::new(
        a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8],
    ))
}

/// Grasp pose to a flat CSV-style row (translation then row-major rotation).
pub fn pose_to_row(g: &GraspPose<f64>) -> [f64; 12] {
    let r = rotation_to_array(&g.rotation);
    let mut row = [0.0; 12];
    row[..3].copy_from_slice(&vec3_to_array(&g.translation));
    row[3..].copy_from_slice(&r);
    row
}

pub fn pose_from_row(row: &[f64; 12]) -> GraspPose<f64> {
    GraspPose::new(
        Vec3::new(row[0], row[1], row[2]),
        rotation_from_array(row[3..12].try_into().expect("nine rotation entries")),
    )
}

/// Writes the scene list and the point sidecar (atomically, per file).
pub fn write_dataset(dir: &Path, records: &[SceneRecord<f64>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut payload: Vec<u8> = Vec::new();
    payload.extend_from_slice(POINTS_MAGIC);
    let mut lines = String::new();
    lines.push_str(
        &serde_json::to_string(&Header {
            magic: DATASET_MAGIC.to_string(),
            version: DATASET_VERSION,
            points_file: POINTS_FILE.to_string(),
        })
        .expect("header serializes"),
    );
    lines.push('\n');
    let mut float_cursor: u64 = 0;
    for rec in records {
        if rec.grasps.len() != rec.labels.len() {
            return Err(Error::invalid("record has mismatched grasps/labels"));
        }
        let offset = float_cursor;
        for p in &rec.cloud {
            for coord in [p.x, p.y, p.z] {
                payload.extend_from_slice(&(coord as f32).to_le_bytes());
            }
        }
        float_cursor += (rec.cloud.len() * 3) as u64;
        let (kind, dims) = match rec.object.kind {
            ObjectKind::Box { width, depth, height } => {
                ("box".to_string(), vec![width, depth, height])
            }
            ObjectKind::Cylinder { radius, height } => {
                ("cylinder".to_string(), vec![radius, height])
            }
        };
        let dto = RecordDto {
            object: ObjectDto {
                kind,
                dims,
                pose_t: vec3_to_array(&rec.object.pose.translation),
                pose_r: rotation_to_array(&rec.object.pose.rotation),
            },
            camera: CameraDto {
                position: vec3_to_array(&rec.camera.position),
                look_at: vec3_to_array(&rec.camera.look_at),
                width: rec.camera.width,
                height: rec.camera.height,
                fov: rec.camera.fov,
            },
            cloud_offset: offset,
            cloud_len: (rec.cloud.len() * 3) as u64,
            center: vec3_to_array(&rec.center),
            scale: rec.scale,
            grasps: rec.grasps.iter().map(pose_to_row).collect(),
            labels: rec.labels.clone(),
        };
        lines.push_str(&serde_json::to_string(&dto).expect("record serializes"));
        lines.push('\n');
    }
    super::atomic_write(&dir.join(POINTS_FILE), &payload)?;
    super::atomic_write(&dir.join(SCENES_FILE), lines.as_bytes())?;
    Ok(())
}

/// Reads a dataset back; every offset/length is validated against the
/// sidecar before any point is decoded.
pub fn read_dataset(dir: &Path) -> Result<Vec<SceneRecord<f64>>> {
    let text = std::fs::read_to_string(dir.join(SCENES_FILE))?;
    let payload = std::fs::read(dir.join(POINTS_FILE))?;
    if payload.len() < POINTS_MAGIC.len() || &payload[..POINTS_MAGIC.len()] != POINTS_MAGIC {
        return Err(Error::Integrity("points sidecar: bad magic".into()));
    }
    let floats = &payload[POINTS_MAGIC.len()..];
    if floats.len() % 4 != 0 {
        return Err(Error::Integrity("points sidecar: truncated float".into()));
    }
    let n_floats = (floats.len() / 4) as u64;

    let mut lines = text.lines();
    let header: Header = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Integrity("dataset: missing header line".into()))?,
    )
    .map_err(|e| Error::Integrity(format!("dataset header: {e}")))?;
    if header.magic != DATASET_MAGIC {
        return Err(Error::Integrity(format!("dataset: bad magic {:?}", header.magic)));
    }
    if header.version != DATASET_VERSION {
        return Err(Error::Integrity(format!(
            "dataset: version {} unsupported (expected {DATASET_VERSION})",
            header.version
        )));
    }

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dto: RecordDto = serde_json::from_str(line)
            .map_err(|e| Error::Integrity(format!("dataset line {}: {e}", lineno + 2)))?;
        if dto.cloud_len % 3 != 0 {
            return Err(Error::Integrity(format!(
                "dataset line {}: cloud length {} not divisible by 3",
                lineno + 2,
                dto.cloud_len
            )));
        }
        let end = dto
            .cloud_offset
            .checked_add(dto.cloud_len)
            .ok_or_else(|| Error::Integrity("cloud range overflows".into()))?;
        if end > n_floats {
            return Err(Error::Integrity(format!(
                "dataset line {}: cloud range {}..{end} exceeds sidecar ({n_floats} floats)",
                lineno + 2,
                dto.cloud_offset
            )));
        }
        let mut cloud = Vec::with_capacity((dto.cloud_len / 3) as usize);
        let base = (dto.cloud_offset * 4) as usize;
        for k in 0..(dto.cloud_len / 3) as usize {
            let mut coords = [0.0f64; 3];
            for (c, coord) in coords.iter_mut().enumerate() {
                let at = base + (3 * k + c) * 4;
                let raw: [u8; 4] = floats[at..at + 4].try_into().unwrap();
                *coord = f32::from_le_bytes(raw) as f64;
            }
            cloud.push(Vec3::new(coords[0], coords[1], coords[2]));
        }
        let kind = match dto.object.kind.as_str() {
            "box" => {
                if dto.object.dims.len() != 3 {
                    return Err(Error::Integrity("box needs 3 dims".into()));
                }
                ObjectKind::Box {
                    width: dto.object.dims[0],
                    depth: dto.object.dims[1],
                    height: dto.object.dims[2],
                }
            }
            "cylinder" => {
                if dto.object.dims.len() != 2 {
                    return Err(Error::Integrity("cylinder needs 2 dims".into()));
                }
                ObjectKind::Cylinder {
                    radius: dto.object.dims[0],
                    height: dto.object.dims[1],
                }
            }
            other => {
                return Err(Error::Integrity(format!("unknown object kind {other:?}")));
            }
        };
        if dto.grasps.len() != dto.labels.len() {
            return Err(Error::Integrity("grasps/labels length mismatch".into()));
        }
        let object = ObjectModel::new(
            kind,
            GraspPose::new(
                Vec3::new(dto.object.pose_t[0], dto.object.pose_t[1], dto.object.pose_t[2]),
                rotation_from_array(&dto.object.pose_r),
            ),
        )?;
        let camera = VirtualCamera::new(
            Vec3::new(dto.camera.position[0], dto.camera.position[1], dto.camera.position[2]),
            Vec3::new(dto.camera.look_at[0], dto.camera.look_at[1], dto.camera.look_at[2]),
            dto.camera.width,
            dto.camera.height,
            dto.camera.fov,
        )?;
        records.push(SceneRecord {
            object,
            camera,
            cloud,
            center: Vec3::new(dto.center[0], dto.center[1], dto.center[2]),
            scale: dto.scale,
            grasps: dto.grasps.iter().map(pose_from_row).collect(),
            labels: dto.labels,
        });
    }
    Ok(records)
}
