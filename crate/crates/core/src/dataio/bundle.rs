//! Bit-exact clip-bundle directory format.
//!
//! Layout (all multi-byte values little-endian):
//!
//! ```text
//! <dir>/
//!   meta.json        clip_id, fps, num_frames, num_joints, units, text,
//!                    joint_names, optional_fields, format_version (1),
//!                    vision_token_len / vision_token_dim when tokens present
//!   poses_world.f32  IEEE-754 binary32 [T][42][3], meters, world frame
//!   extrinsics.f32   binary32 [T][3][4], each row-major [R|t], world→camera
//!   mask.u8          [T][42], 1 = valid
//!   intrinsics.f32   optional, [4]: fx, fy, cx, cy
//!   frames.f32       optional, [T][224][224][3], values in [0,1]
//!   vision_tokens.f32 optional, [T][L_v][D_feat]
//! ```
//!
//! Records hold the binary32 payloads exactly as stored, so a write/read
//! round trip is bitwise lossless by construction; converting to binary64
//! happens at window-extraction time.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform, NUM_JOINTS};

pub const FORMAT_VERSION: u32 = 1;
pub const FRAME_SIDE: usize = 224;
pub const FRAME_CHANNELS: usize = 3;
pub const FRAME_ELEMS: usize = FRAME_SIDE * FRAME_SIDE * FRAME_CHANNELS;

/// Precomputed visual tokens: [T][len_per_frame][dim].
#[derive(Debug, Clone, PartialEq)]
pub struct VisionTokens {
    pub tokens: Vec<f32>,
    pub len_per_frame: usize,
    pub dim: usize,
}

/// One egocentric clip as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub fps: f64,
    pub text: String,
    /// [T][42][3] world-frame meters.
    pub poses_world: Vec<f32>,
    /// [T][3][4] row-major [R|t], world→camera.
    pub extrinsics: Vec<f32>,
    /// [T][42], nonzero = valid.
    pub mask: Vec<u8>,
    pub intrinsics: Option<[f32; 4]>,
    /// [T][224][224][3], values in [0,1].
    pub frames: Option<Vec<f32>>,
    pub vision_tokens: Option<VisionTokens>,
}

impl ClipRecord {
    pub fn num_frames(&self) -> usize {
        self.poses_world.len() / (NUM_JOINTS * 3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fps <= 0.0 {
            return Err(Error::validation(format!("fps must be > 0, got {}", self.fps)));
        }
        if self.poses_world.len() % (NUM_JOINTS * 3) != 0 {
            return Err(Error::validation("poses_world not [T][42][3]".to_string()));
        }
        let t = self.num_frames();
        if t == 0 {
            return Err(Error::validation("clip has no frames".to_string()));
        }
        if self.extrinsics.len() != t * 12 {
            return Err(Error::validation(format!(
                "extrinsics len {} != {}",
                self.extrinsics.len(),
                t * 12
            )));
        }
        if self.mask.len() != t * NUM_JOINTS {
            return Err(Error::validation(format!(
                "mask len {} != {}",
                self.mask.len(),
                t * NUM_JOINTS
            )));
        }
        if let Some(frames) = &self.frames {
            if frames.len() != t * FRAME_ELEMS {
                return Err(Error::validation(format!(
                    "frames len {} != {}",
                    frames.len(),
                    t * FRAME_ELEMS
                )));
            }
        }
        if let Some(vt) = &self.vision_tokens {
            if vt.tokens.len() != t * vt.len_per_frame * vt.dim {
                return Err(Error::validation(format!(
                    "vision_tokens len {} != T*{}*{}",
                    vt.tokens.len(),
                    vt.len_per_frame,
                    vt.dim
                )));
            }
        }
        Ok(())
    }

    /// World pose of one frame as binary64, [42][3] flattened.
    pub fn frame_pose_f64(&self, t: usize) -> Vec<f64> {
        self.poses_world[t * NUM_JOINTS * 3..(t + 1) * NUM_JOINTS * 3]
            .iter()
            .map(|&v| v as f64)
            .collect()
    }

    /// Extrinsic of one frame. Stored values carry binary32 quantization, so
    /// orthonormality holds only to ~1e-7; the transform is used as stored.
    pub fn extrinsic(&self, t: usize) -> RigidTransform {
        let e = &self.extrinsics[t * 12..(t + 1) * 12];
        let rotation = [
            [e[0] as f64, e[1] as f64, e[2] as f64],
            [e[4] as f64, e[5] as f64, e[6] as f64],
            [e[8] as f64, e[9] as f64, e[10] as f64],
        ];
        let translation = [e[3] as f64, e[7] as f64, e[11] as f64];
        RigidTransform::from_parts(rotation, translation)
    }

    pub fn mask_bool(&self, t: usize) -> Vec<bool> {
        self.mask[t * NUM_JOINTS..(t + 1) * NUM_JOINTS]
            .iter()
            .map(|&m| m != 0)
            .collect()
    }

    pub fn camera_intrinsics(&self) -> Option<CameraIntrinsics> {
        self.intrinsics.and_then(|i| {
            CameraIntrinsics::new(i[0] as f64, i[1] as f64, i[2] as f64, i[3] as f64).ok()
        })
    }

    /// One frame's image as f32 slice, if frames are present.
    pub fn frame(&self, t: usize) -> Option<&[f32]> {
        self.frames
            .as_ref()
            .map(|f| &f[t * FRAME_ELEMS..(t + 1) * FRAME_ELEMS])
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Meta {
    clip_id: String,
    fps: f64,
    num_frames: usize,
    num_joints: usize,
    units: String,
    text: String,
    joint_names: Vec<String>,
    optional_fields: Vec<String>,
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vision_token_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vision_token_dim: Option<usize>,
}

/// Canonical joint names: wrist plus thumb/index/middle/ring/pinky chains of
/// four joints, left hand then right hand.
pub fn joint_names() -> Vec<String> {
    let fingers = ["thumb", "index", "middle", "ring", "pinky"];
    let mut names = Vec::with_capacity(NUM_JOINTS);
    for hand in ["left", "right"] {
        names.push(format!("{hand}_wrist"));
        for finger in fingers {
            for seg in 0..4 {
                names.push(format!("{hand}_{finger}_{seg}"));
            }
        }
    }
    names
}

fn write_f32_file(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32_file(path: &Path, expected: usize, what: &str) -> Result<Vec<f32>> {
    let mut file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected: format!("{what}: {} bytes ({expected} binary32 values)", expected * 4),
            actual: format!("{} bytes", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Write one clip as a bundle directory. Overwrites existing files.
pub fn write_clip_bundle(record: &ClipRecord, dir: &Path) -> Result<()> {
    record.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut optional_fields = Vec::new();
    if record.intrinsics.is_some() {
        optional_fields.push("intrinsics".to_string());
    }
    if record.frames.is_some() {
        optional_fields.push("frames".to_string());
    }
    if record.vision_tokens.is_some() {
        optional_fields.push("vision_tokens".to_string());
    }
    let meta = Meta {
        clip_id: record.clip_id.clone(),
        fps: record.fps,
        num_frames: record.num_frames(),
        num_joints: NUM_JOINTS,
        units: "meters".to_string(),
        text: record.text.clone(),
        joint_names: joint_names(),
        optional_fields,
        format_version: FORMAT_VERSION,
        vision_token_len: record.vision_tokens.as_ref().map(|v| v.len_per_frame),
        vision_token_dim: record.vision_tokens.as_ref().map(|v| v.dim),
    };
    let meta_path = dir.join("meta.json");
    let mut f = std::fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    f.write_all(serde_json::to_string_pretty(&meta).expect("meta json").as_bytes())
        .map_err(|e| Error::io(&meta_path, e))?;

    write_f32_file(&dir.join("poses_world.f32"), &record.poses_world)?;
    write_f32_file(&dir.join("extrinsics.f32"), &record.extrinsics)?;
    std::fs::write(dir.join("mask.u8"), &record.mask)
        .map_err(|e| Error::io(dir.join("mask.u8"), e))?;
    if let Some(intr) = &record.intrinsics {
        write_f32_file(&dir.join("intrinsics.f32"), intr)?;
    }
    if let Some(frames) = &record.frames {
        write_f32_file(&dir.join("frames.f32"), frames)?;
    }
    if let Some(vt) = &record.vision_tokens {
        write_f32_file(&dir.join("vision_tokens.f32"), &vt.tokens)?;
    }
    Ok(())
}

/// Read a clip bundle. Distinct error kinds: missing files, unsupported
/// format version, and dimension mismatches naming the offending file.
pub fn read_clip_bundle(dir: &Path) -> Result<ClipRecord> {
    let meta_path = dir.join("meta.json");
    let meta_bytes = std::fs::read(&meta_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(meta_path.clone())
        } else {
            Error::io(&meta_path, e)
        }
    })?;
    let meta: Meta = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Integrity {
        path: meta_path.clone(),
        detail: format!("meta.json parse error: {e}"),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: meta_path.clone(),
            found: meta.format_version,
        });
    }
    if meta.num_joints != NUM_JOINTS {
        return Err(Error::DimensionMismatch {
            path: meta_path,
            expected: format!("num_joints = {NUM_JOINTS}"),
            actual: format!("num_joints = {}", meta.num_joints),
        });
    }
    let t = meta.num_frames;

    let poses_world = read_f32_file(&dir.join("poses_world.f32"), t * NUM_JOINTS * 3, "poses")?;
    let extrinsics = read_f32_file(&dir.join("extrinsics.f32"), t * 12, "extrinsics")?;

    let mask_path = dir.join("mask.u8");
    let mask = std::fs::read(&mask_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(mask_path.clone())
        } else {
            Error::io(&mask_path, e)
        }
    })?;
    if mask.len() != t * NUM_JOINTS {
        return Err(Error::DimensionMismatch {
            path: mask_path,
            expected: format!("{} bytes", t * NUM_JOINTS),
            actual: format!("{} bytes", mask.len()),
        });
    }

    let has = |f: &str| meta.optional_fields.iter().any(|s| s == f);
    let intrinsics = if has("intrinsics") {
        let v = read_f32_file(&dir.join("intrinsics.f32"), 4, "intrinsics")?;
        Some([v[0], v[1], v[2], v[3]])
    } else {
        None
    };
    let frames = if has("frames") {
        Some(read_f32_file(&dir.join("frames.f32"), t * FRAME_ELEMS, "frames")?)
    } else {
        None
    };
    let vision_tokens = if has("vision_tokens") {
        let len = meta.vision_token_len.ok_or_else(|| Error::Integrity {
            path: dir.join("meta.json"),
            detail: "vision_tokens listed but vision_token_len missing".to_string(),
        })?;
        let dim = meta.vision_token_dim.ok_or_else(|| Error::Integrity {
            path: dir.join("meta.json"),
            detail: "vision_tokens listed but vision_token_dim missing".to_string(),
        })?;
        Some(VisionTokens {
            tokens: read_f32_file(&dir.join("vision_tokens.f32"), t * len * dim, "vision tokens")?,
            len_per_frame: len,
            dim,
        })
    } else {
        None
    };

    let record = ClipRecord {
        clip_id: meta.clip_id,
        fps: meta.fps,
        text: meta.text,
        poses_world,
        extrinsics,
        mask,
        intrinsics,
        frames,
        vision_tokens,
    };
    record.validate()?;
    Ok(record)
}

/// Dataset root helper: clips live under `root/clips/<clip_id>/`, split
/// membership in `root/splits.json`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub splits: std::collections::BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let splits_path = root.join("splits.json");
        let bytes = std::fs::read(&splits_path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(splits_path.clone())
            } else {
                Error::io(&splits_path, e)
            }
        })?;
        let splits = serde_json::from_slice(&bytes).map_err(|e| Error::Integrity {
            path: splits_path,
            detail: format!("splits.json parse error: {e}"),
        })?;
        Ok(Dataset {
            root: root.to_path_buf(),
            splits,
        })
    }

    pub fn clip_ids(&self, split: &str) -> Result<&[String]> {
        self.splits
            .get(split)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::validation(format!("unknown split {split:?}")))
    }

    pub fn clip_dir(&self, clip_id: &str) -> PathBuf {
        self.root.join("clips").join(clip_id)
    }

    pub fn load_clip(&self, clip_id: &str) -> Result<ClipRecord> {
        read_clip_bundle(&self.clip_dir(clip_id))
    }

    /// All clip ids across every split, ascending.
    pub fn all_clip_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.splits.values().flatten().cloned().collect();
        ids.sort();
        ids
    }
}
