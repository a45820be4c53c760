//! Per-axis min-max normalization. Statistics are fitted on the training
//! split only; a degenerate axis (max = min) normalizes to the constant 0.5
//! and denormalizes back to the min.

use crate::error::{Error, Result};
use crate::geometry::NUM_JOINTS;

use super::windows::Sample;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl NormStats {
    pub fn degenerate(&self, axis: usize) -> bool {
        self.max[axis] == self.min[axis]
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.min[k].is_finite() && self.max[k].is_finite()) {
                return Err(Error::validation("non-finite normalization stats".to_string()));
            }
            if self.max[k] < self.min[k] {
                return Err(Error::validation(format!(
                    "axis {k}: max {} < min {}",
                    self.max[k], self.min[k]
                )));
            }
        }
        Ok(())
    }

    /// Round through binary32, matching the checkpoint's at-rest precision.
    pub fn quantize_f32(&mut self) {
        for k in 0..3 {
            self.min[k] = self.min[k] as f32 as f64;
            self.max[k] = self.max[k] as f32 as f64;
        }
    }
}

/// Fit per-axis min/max over the valid joints of the given samples
/// (observed and future frames). Errors when no axis sees a valid joint.
pub fn fit_minmax(samples: &[Sample]) -> Result<NormStats> {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut any = false;
    for sample in samples {
        for (poses, mask) in [
            (&sample.obs_poses, &sample.obs_mask),
            (&sample.fut_poses, &sample.fut_mask),
        ] {
            for (tj, &valid) in mask.iter().enumerate() {
                if !valid {
                    continue;
                }
                any = true;
                for k in 0..3 {
                    let v = poses[tj * 3 + k];
                    min[k] = min[k].min(v);
                    max[k] = max[k].max(v);
                }
            }
        }
    }
    if !any {
        return Err(Error::validation(
            "fit_minmax: no valid joints in the training split".to_string(),
        ));
    }
    Ok(NormStats { min, max })
}

/// x -> (x - min) / (max - min) per axis; degenerate axes map to 0.5.
pub fn normalize(poses: &[f64], stats: &NormStats) -> Vec<f64> {
    poses
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = i % 3;
            if stats.degenerate(k) {
                0.5
            } else {
                (v - stats.min[k]) / (stats.max[k] - stats.min[k])
            }
        })
        .collect()
}

/// Exact inverse of [`normalize`]; degenerate axes denormalize to the min.
pub fn denormalize(poses: &[f64], stats: &NormStats) -> Vec<f64> {
    poses
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = i % 3;
            if stats.degenerate(k) {
                stats.min[k]
            } else {
                v * (stats.max[k] - stats.min[k]) + stats.min[k]
            }
        })
        .collect()
}

/// Per-column affine coefficients for applying denormalization inside a
/// compute graph over a [T, 42*3] matrix: column c uses axis c % 3.
pub fn denorm_coefficients(stats: &NormStats) -> (Vec<f64>, Vec<f64>) {
    let mut scale = Vec::with_capacity(NUM_JOINTS * 3);
    let mut offset = Vec::with_capacity(NUM_JOINTS * 3);
    for c in 0..NUM_JOINTS * 3 {
        let k = c % 3;
        if stats.degenerate(k) {
            scale.push(0.0);
            offset.push(stats.min[k]);
        } else {
            scale.push(stats.max[k] - stats.min[k]);
            offset.push(stats.min[k]);
        }
    }
    (scale, offset)
}
