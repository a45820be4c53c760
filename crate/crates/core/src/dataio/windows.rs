//! Window extraction: fixed 20-observation / 10-future samples, each
//! canonicalized in the egocentric frame anchored at its first observation
//! frame, with the egomotion score computed over the window's extrinsics.

use crate::error::{Error, Result};
use crate::geometry::{
    canonicalize_clip, egomotion_score, CanonicalMode, JointSet, Vec3, NUM_JOINTS,
};

use super::bundle::ClipRecord;

pub const T_OBS: usize = 20;
pub const T_FUT: usize = 10;

/// Windowing configuration. The stride is a knob (default 5); the window
/// lengths are fixed by the protocol.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WindowConfig {
    pub t_obs: usize,
    pub t_fut: usize,
    pub stride: usize,
    pub mode: WindowCanonicalMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowCanonicalMode {
    FullCamera,
    YawOnly,
}

impl WindowCanonicalMode {
    pub fn as_geometry(self) -> CanonicalMode {
        match self {
            WindowCanonicalMode::FullCamera => CanonicalMode::FullCamera,
            WindowCanonicalMode::YawOnly => CanonicalMode::YawOnly,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WindowCanonicalMode::FullCamera => "full_camera",
            WindowCanonicalMode::YawOnly => "yaw_only",
        }
    }
}

impl std::str::FromStr for WindowCanonicalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_camera" => Ok(WindowCanonicalMode::FullCamera),
            "yaw_only" => Ok(WindowCanonicalMode::YawOnly),
            other => Err(Error::validation(format!("unknown canonical mode {other:?}"))),
        }
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            t_obs: T_OBS,
            t_fut: T_FUT,
            stride: 5,
            mode: WindowCanonicalMode::YawOnly,
        }
    }
}

/// Up axis used for yaw-only canonicalization.
pub const UP_AXIS: Vec3 = [0.0, 0.0, 1.0];

/// One forecasting instance in canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub clip_id: String,
    pub start: usize,
    /// [t_obs][42][3] canonical meters.
    pub obs_poses: Vec<f64>,
    /// [t_fut][42][3] canonical meters.
    pub fut_poses: Vec<f64>,
    pub obs_mask: Vec<bool>,
    pub fut_mask: Vec<bool>,
    /// Context frame indices, window-relative, strictly increasing in
    /// [0, t_obs).
    pub context_frame_indices: Vec<usize>,
    pub text: String,
    /// Egomotion score over the full (obs + fut) window.
    pub egomotion: f64,
    pub degenerate_yaw: bool,
}

impl Sample {
    /// Stable sample id; zero-padded start keeps lexicographic order equal
    /// to numeric order.
    pub fn id(&self) -> String {
        format!("{}:{:05}", self.clip_id, self.start)
    }
}

/// Uniformly sample `k` context frame indices from `[0, t_obs)`:
/// `idx_i = round(i * (t_obs - 1) / (k - 1))`, ties rounding half away from
/// zero. `k = 1` yields the anchor frame by convention.
pub fn sample_context_frames(t_obs: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || t_obs == 0 {
        return Err(Error::validation("k and t_obs must be positive".to_string()));
    }
    if k > t_obs {
        return Err(Error::validation(format!(
            "cannot sample {k} context frames from {t_obs} observations"
        )));
    }
    if k == 1 {
        return Ok(vec![0]);
    }
    let idx = (0..k)
        .map(|i| (i as f64 * (t_obs - 1) as f64 / (k - 1) as f64).round() as usize)
        .collect();
    Ok(idx)
}

/// Split one clip into canonicalized samples at `start = 0, stride, ...`.
/// A clip shorter than one window yields an empty list, not an error;
/// callers track skipped clips in their ingestion summary.
pub fn make_windows(record: &ClipRecord, config: &WindowConfig) -> Result<Vec<Sample>> {
    if config.stride == 0 {
        return Err(Error::validation("stride must be >= 1".to_string()));
    }
    if config.t_obs == 0 || config.t_fut == 0 {
        return Err(Error::validation("window lengths must be positive".to_string()));
    }
    record.validate()?;
    let t = record.num_frames();
    let w = config.t_obs + config.t_fut;
    if t < w {
        return Ok(Vec::new());
    }
    let context_frame_indices = sample_context_frames(config.t_obs, 4)?;

    let mut samples = Vec::new();
    let mut start = 0;
    while start + w <= t {
        let joints: Vec<JointSet> = (start..start + w)
            .map(|f| {
                let pose = record.frame_pose_f64(f);
                let positions = pose.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
                JointSet::new(positions, record.mask_bool(f))
            })
            .collect::<Result<_>>()?;
        let extrinsics: Vec<_> = (start..start + w).map(|f| record.extrinsic(f)).collect();

        let canon = canonicalize_clip(&joints, &extrinsics, config.mode.as_geometry(), UP_AXIS)?;
        let egomotion = egomotion_score(&extrinsics);

        let mut obs_poses = Vec::with_capacity(config.t_obs * NUM_JOINTS * 3);
        let mut fut_poses = Vec::with_capacity(config.t_fut * NUM_JOINTS * 3);
        let mut obs_mask = Vec::with_capacity(config.t_obs * NUM_JOINTS);
        let mut fut_mask = Vec::with_capacity(config.t_fut * NUM_JOINTS);
        for (i, js) in canon.joints.iter().enumerate() {
            let (poses, mask) = if i < config.t_obs {
                (&mut obs_poses, &mut obs_mask)
            } else {
                (&mut fut_poses, &mut fut_mask)
            };
            for p in &js.positions {
                poses.extend_from_slice(p);
            }
            mask.extend(js.valid.iter().copied());
        }

        samples.push(Sample {
            clip_id: record.clip_id.clone(),
            start,
            obs_poses,
            fut_poses,
            obs_mask,
            fut_mask,
            context_frame_indices: context_frame_indices.clone(),
            text: record.text.clone(),
            egomotion,
            degenerate_yaw: canon.degenerate_yaw,
        });
        start += config.stride;
    }
    Ok(samples)
}
