//! Reference predictors: the training-split mean pose held static, and
//! per-joint constant-velocity extrapolation.

use std::path::Path;

use crate::dataio::windows::Sample;
use crate::error::{Error, Result};
use crate::forecaster::{read_container, write_container};
use crate::geometry::NUM_JOINTS;

/// Mean 3D pose over every valid (sample, frame, joint) observation of the
/// training split, observed and future frames alike. Joints never seen valid
/// are flagged and excluded from metric eligibility.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticModel {
    /// [42][3] canonical meters.
    pub mean_pose: Vec<f64>,
    /// Observations that went into each joint's mean.
    pub counts: Vec<u64>,
}

/// Fit the static baseline on the training split.
pub fn static_fit(train: &[Sample]) -> Result<StaticModel> {
    let mut sums = vec![0.0f64; NUM_JOINTS * 3];
    let mut counts = vec![0u64; NUM_JOINTS];
    for sample in train {
        for (poses, mask) in [
            (&sample.obs_poses, &sample.obs_mask),
            (&sample.fut_poses, &sample.fut_mask),
        ] {
            for (tj, &valid) in mask.iter().enumerate() {
                if !valid {
                    continue;
                }
                let j = tj % NUM_JOINTS;
                counts[j] += 1;
                for k in 0..3 {
                    sums[j * 3 + k] += poses[tj * 3 + k];
                }
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::validation(
            "static_fit: no valid observations in the training split".to_string(),
        ));
    }
    let mean_pose = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let c = counts[i / 3];
            if c > 0 {
                s / c as f64
            } else {
                0.0 // never-observed joints predict zeros and are flagged
            }
        })
        .collect();
    Ok(StaticModel { mean_pose, counts })
}

/// Repeat the mean pose for every future frame. Returns the prediction
/// [t_fut][42][3] and per-joint validity (false for never-observed joints).
pub fn static_predict(model: &StaticModel, t_fut: usize) -> (Vec<f64>, Vec<bool>) {
    let mut pred = Vec::with_capacity(t_fut * NUM_JOINTS * 3);
    for _ in 0..t_fut {
        pred.extend_from_slice(&model.mean_pose);
    }
    let valid = model.counts.iter().map(|&c| c > 0).collect();
    (pred, valid)
}

/// Constant-velocity extrapolation, independently per joint. The velocity
/// comes from the last `velocity_window` valid observed frames (default 2:
/// the finite difference of the last two valid frames; larger windows use a
/// least-squares slope). Joints with a single valid frame fall back to a
/// static copy; joints never valid are flagged invalid in the output.
pub fn cvm_predict(
    obs_poses: &[f64],
    obs_mask: &[bool],
    t_fut: usize,
    velocity_window: usize,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if obs_poses.len() % (NUM_JOINTS * 3) != 0 || obs_poses.is_empty() {
        return Err(Error::validation("obs_poses must be [T][42][3]".to_string()));
    }
    let t_obs = obs_poses.len() / (NUM_JOINTS * 3);
    if obs_mask.len() != t_obs * NUM_JOINTS {
        return Err(Error::validation("obs_mask must be [T][42]".to_string()));
    }
    if velocity_window < 2 {
        return Err(Error::validation("velocity_window must be >= 2".to_string()));
    }

    let mut pred = vec![0.0; t_fut * NUM_JOINTS * 3];
    let mut joint_valid = vec![false; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let valid_frames: Vec<usize> = (0..t_obs).filter(|&t| obs_mask[t * NUM_JOINTS + j]).collect();
        if valid_frames.is_empty() {
            continue;
        }
        joint_valid[j] = true;
        let last = *valid_frames.last().unwrap();
        let at = |t: usize, k: usize| obs_poses[(t * NUM_JOINTS + j) * 3 + k];

        let window: Vec<usize> = valid_frames
            .iter()
            .rev()
            .take(velocity_window)
            .rev()
            .copied()
            .collect();
        let velocity: [f64; 3] = if window.len() < 2 {
            [0.0; 3]
        } else if window.len() == 2 {
            let (b, a) = (window[0], window[1]);
            let dt = (a - b) as f64;
            [0, 1, 2].map(|k| (at(a, k) - at(b, k)) / dt)
        } else {
            // least-squares slope over the window
            let n = window.len() as f64;
            let mean_t = window.iter().map(|&t| t as f64).sum::<f64>() / n;
            let denom: f64 = window
                .iter()
                .map(|&t| (t as f64 - mean_t) * (t as f64 - mean_t))
                .sum();
            [0, 1, 2].map(|k| {
                let mean_x = window.iter().map(|&t| at(t, k)).sum::<f64>() / n;
                window
                    .iter()
                    .map(|&t| (t as f64 - mean_t) * (at(t, k) - mean_x))
                    .sum::<f64>()
                    / denom
            })
        };

        for step in 1..=t_fut {
            // future step k lives at absolute frame (t_obs - 1 + k)
            let dt = (step + (t_obs - 1 - last)) as f64;
            for k in 0..3 {
                pred[((step - 1) * NUM_JOINTS + j) * 3 + k] = at(last, k) + velocity[k] * dt;
            }
        }
    }
    Ok((pred, joint_valid))
}

/// Serialize a static model in the checkpoint container format.
pub fn save_static(model: &StaticModel, path: &Path) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Header<'a> {
        kind: &'a str,
        counts: &'a [u64],
    }
    let header = serde_json::to_string(&Header {
        kind: "static",
        counts: &model.counts,
    })
    .expect("static header");
    let payload: Vec<f32> = model.mean_pose.iter().map(|&v| v as f32).collect();
    write_container(path, &header, &payload)
}

pub fn load_static(path: &Path) -> Result<StaticModel> {
    #[derive(serde::Deserialize)]
    struct Header {
        kind: String,
        counts: Vec<u64>,
    }
    let (header_json, payload) = read_container(path)?;
    let header: Header = serde_json::from_str(&header_json).map_err(|e| Error::Integrity {
        path: path.to_path_buf(),
        detail: format!("header parse error: {e}"),
    })?;
    if header.kind != "static" {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            detail: format!("expected a static checkpoint, found kind {:?}", header.kind),
        });
    }
    if payload.len() != NUM_JOINTS * 3 || header.counts.len() != NUM_JOINTS {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            detail: format!(
                "static payload must be {} values with {} counts, got {} and {}",
                NUM_JOINTS * 3,
                NUM_JOINTS,
                payload.len(),
                header.counts.len()
            ),
        });
    }
    Ok(StaticModel {
        mean_pose: payload.iter().map(|&v| v as f64).collect(),
        counts: header.counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::Prng;

    fn sample_with(obs: Vec<f64>, fut: Vec<f64>, obs_mask: Vec<bool>, fut_mask: Vec<bool>) -> Sample {
        Sample {
            clip_id: "b".to_string(),
            start: 0,
            obs_poses: obs,
            fut_poses: fut,
            obs_mask,
            fut_mask,
            context_frame_indices: vec![0],
            text: String::new(),
            egomotion: 0.0,
            degenerate_yaw: false,
        }
    }

    #[test]
    fn two_point_mean() {
        // two frames with values 1.0 and 3.0 on one axis -> mean 2.0
        let mut obs = vec![0.0; NUM_JOINTS * 3];
        obs[0] = 1.0;
        let mut fut = vec![0.0; NUM_JOINTS * 3];
        fut[0] = 3.0;
        let s = sample_with(obs, fut, vec![true; NUM_JOINTS], vec![true; NUM_JOINTS]);
        let model = static_fit(&[s]).unwrap();
        assert_eq!(model.mean_pose[0], 2.0);
        assert_eq!(model.counts[0], 2);
        let (pred, valid) = static_predict(&model, 10);
        assert_eq!(pred.len(), 10 * NUM_JOINTS * 3);
        assert!(valid.iter().all(|&v| v));
        for t in 0..10 {
            assert_eq!(pred[t * NUM_JOINTS * 3], 2.0);
        }
    }

    #[test]
    fn prediction_is_constant_across_horizon() {
        let mut prng = Prng::new(1);
        let obs: Vec<f64> = (0..2 * NUM_JOINTS * 3).map(|_| prng.next_f64()).collect();
        let s = sample_with(
            obs[..NUM_JOINTS * 3].to_vec(),
            obs[NUM_JOINTS * 3..].to_vec(),
            vec![true; NUM_JOINTS],
            vec![true; NUM_JOINTS],
        );
        let model = static_fit(&[s]).unwrap();
        let (pred, _) = static_predict(&model, 10);
        let first = &pred[..NUM_JOINTS * 3];
        let last = &pred[9 * NUM_JOINTS * 3..];
        assert_eq!(
            first.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            last.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn never_valid_joint_is_flagged() {
        let obs = vec![1.0; NUM_JOINTS * 3];
        let fut = vec![1.0; NUM_JOINTS * 3];
        let mut mask = vec![true; NUM_JOINTS];
        mask[5] = false;
        let s = sample_with(obs, fut, mask.clone(), mask);
        let model = static_fit(&[s]).unwrap();
        let (_, valid) = static_predict(&model, 3);
        assert!(!valid[5]);
        assert!(valid[4]);
        assert_eq!(model.mean_pose[5 * 3], 0.0);
    }

    fn obs_with_joint_track(track: &[(usize, [f64; 3])], t_obs: usize, j: usize) -> (Vec<f64>, Vec<bool>) {
        let mut obs = vec![0.0; t_obs * NUM_JOINTS * 3];
        let mut mask = vec![false; t_obs * NUM_JOINTS];
        for &(t, p) in track {
            mask[t * NUM_JOINTS + j] = true;
            for k in 0..3 {
                obs[(t * NUM_JOINTS + j) * 3 + k] = p[k];
            }
        }
        (obs, mask)
    }

    #[test]
    fn linear_extrapolation_arithmetic() {
        // frames 18, 19 at (0,0,0) and (0.1,0,0): step k -> 0.1 + 0.1 k
        let (obs, mask) = obs_with_joint_track(
            &[(18, [0.0, 0.0, 0.0]), (19, [0.1, 0.0, 0.0])],
            20,
            3,
        );
        let (pred, valid) = cvm_predict(&obs, &mask, 10, 2).unwrap();
        assert!(valid[3]);
        for k in 1..=10usize {
            let got = pred[((k - 1) * NUM_JOINTS + 3) * 3];
            let expect = 0.1 + 0.1 * k as f64;
            assert!((got - expect).abs() < 1e-12, "step {k}: {got} vs {expect}");
        }
    }

    #[test]
    fn velocity_spans_gaps_between_valid_frames() {
        // valid frames 10 and 19: velocity = delta / 9
        let (obs, mask) = obs_with_joint_track(
            &[(10, [0.0, 0.0, 0.0]), (19, [0.9, 0.0, 0.0])],
            20,
            7,
        );
        let (pred, _) = cvm_predict(&obs, &mask, 5, 2).unwrap();
        for k in 1..=5usize {
            let got = pred[((k - 1) * NUM_JOINTS + 7) * 3];
            let expect = 0.9 + 0.1 * k as f64;
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_joint_predicts_constant() {
        let (obs, mask) = obs_with_joint_track(
            &[(5, [0.4, -0.2, 0.7]), (12, [0.4, -0.2, 0.7])],
            20,
            0,
        );
        let (pred, _) = cvm_predict(&obs, &mask, 10, 2).unwrap();
        for k in 0..10 {
            assert_eq!(pred[(k * NUM_JOINTS) * 3], 0.4);
            assert_eq!(pred[(k * NUM_JOINTS) * 3 + 1], -0.2);
        }
    }

    #[test]
    fn single_valid_frame_falls_back_to_static() {
        let (obs, mask) = obs_with_joint_track(&[(19, [0.3, 0.1, -0.5])], 20, 11);
        let (pred, valid) = cvm_predict(&obs, &mask, 10, 2).unwrap();
        assert!(valid[11]);
        for k in 0..10 {
            assert_eq!(pred[(k * NUM_JOINTS + 11) * 3], 0.3);
        }
    }

    #[test]
    fn never_valid_joint_is_invalid_in_output() {
        let (obs, mask) = obs_with_joint_track(&[(19, [1.0, 0.0, 0.0])], 20, 0);
        let (_, valid) = cvm_predict(&obs, &mask, 10, 2).unwrap();
        assert!(valid[0]);
        assert!(!valid[1]);
    }

    #[test]
    fn prediction_is_linear_in_future_index() {
        let mut prng = Prng::new(8);
        let t_obs = 20;
        let mut obs = vec![0.0; t_obs * NUM_JOINTS * 3];
        for v in obs.iter_mut() {
            *v = prng.uniform_in(-1.0, 1.0);
        }
        let mask: Vec<bool> = (0..t_obs * NUM_JOINTS).map(|_| prng.next_f64() > 0.3).collect();
        let (pred, valid) = cvm_predict(&obs, &mask, 10, 2).unwrap();
        for j in 0..NUM_JOINTS {
            if !valid[j] {
                continue;
            }
            for k in 0..3 {
                let v0 = pred[(j * 3) + k];
                let v1 = pred[(NUM_JOINTS + j) * 3 + k];
                let step = v1 - v0;
                for f in 2..10 {
                    let expect = v0 + step * f as f64;
                    let got = pred[(f * NUM_JOINTS + j) * 3 + k];
                    assert!((got - expect).abs() < 1e-9, "joint {j} axis {k} frame {f}");
                }
            }
        }
    }

    #[test]
    fn static_container_round_trip() {
        let tmp = std::env::temp_dir().join(format!("egghand_static_{}.eggh", std::process::id()));
        let model = StaticModel {
            mean_pose: (0..NUM_JOINTS * 3).map(|i| (i as f32) as f64 * 0.25).collect(),
            counts: (0..NUM_JOINTS as u64).collect(),
        };
        save_static(&model, &tmp).unwrap();
        let back = load_static(&tmp).unwrap();
        assert_eq!(model, back);
        std::fs::remove_file(&tmp).ok();
    }
}
