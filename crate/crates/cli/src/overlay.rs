//! SVG overlay export: observed poses in green, predicted poses in red,
//! skeleton edges per hand, projected through the bundle's pinhole camera.

use std::path::Path;

use egghand_core::dataio::{Dataset, WindowConfig, SYNTH_INTRINSICS};
use egghand_core::error::Error;
use egghand_core::geometry::{
    canonicalize_clip, hand_skeleton_edges, project_to_image, se3_inverse, CameraIntrinsics,
    JointSet, ProjectedJoints, RigidTransform, NUM_JOINTS,
};

#[derive(serde::Deserialize)]
struct ForecastIn {
    clip_id: String,
    window: usize,
    pred: Vec<Vec<[f64; 3]>>,
    #[allow(dead_code)]
    frame: String,
    canonical_mode: String,
}

pub fn render(
    data: &Path,
    clip: &str,
    pred_path: &Path,
    out: &Path,
    frame: Option<usize>,
) -> Result<(), Error> {
    let dataset = Dataset::open(data)?;
    let record = dataset.load_clip(clip)?;

    let bytes = std::fs::read(pred_path).map_err(|e| Error::io(pred_path, e))?;
    let forecast: ForecastIn = serde_json::from_slice(&bytes).map_err(|e| {
        Error::validation(format!("prediction file {}: {e}", pred_path.display()))
    })?;
    if forecast.clip_id != clip {
        return Err(Error::validation(format!(
            "prediction is for clip {:?}, not {clip:?}",
            forecast.clip_id
        )));
    }

    let mode: egghand_core::dataio::WindowCanonicalMode = forecast.canonical_mode.parse()?;
    let config = WindowConfig {
        stride: 1,
        mode,
        ..WindowConfig::default()
    };
    let start = forecast.window;
    let span = config.t_obs + config.t_fut;
    if start + span > record.num_frames() {
        return Err(Error::validation(format!(
            "prediction window {start}..{} exceeds clip length {}",
            start + span,
            record.num_frames()
        )));
    }

    // reconstruct the canonical frame the prediction lives in
    let window_joints: Vec<JointSet> = (start..start + span)
        .map(|f| {
            let pose = record.frame_pose_f64(f);
            let positions = pose.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            JointSet::new(positions, record.mask_bool(f))
        })
        .collect::<Result<_, _>>()?;
    let extrinsics: Vec<RigidTransform> = (start..start + span).map(|f| record.extrinsic(f)).collect();
    let canon = canonicalize_clip(
        &window_joints,
        &extrinsics,
        mode.as_geometry(),
        egghand_core::dataio::UP_AXIS,
    )?;

    // camera for rendering: the chosen frame's extrinsic composed with the
    // inverse of the world-to-canonical anchor
    let view_frame = frame.unwrap_or(start);
    if view_frame >= record.num_frames() {
        return Err(Error::validation(format!(
            "frame {view_frame} out of range (clip has {} frames)",
            record.num_frames()
        )));
    }
    let cam_from_canonical = record
        .extrinsic(view_frame)
        .compose(&se3_inverse(&canon.anchor));

    let intr = record.camera_intrinsics().unwrap_or(CameraIntrinsics {
        fx: SYNTH_INTRINSICS[0] as f64,
        fy: SYNTH_INTRINSICS[1] as f64,
        cx: SYNTH_INTRINSICS[2] as f64,
        cy: SYNTH_INTRINSICS[3] as f64,
    });

    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 224 224\" \
         width=\"448\" height=\"448\">\n<rect width=\"224\" height=\"224\" fill=\"#101010\"/>\n",
    );

    // observed window in green, fading toward the anchor of the forecast
    for (i, js) in canon.joints[..config.t_obs].iter().enumerate() {
        let opacity = 0.15 + 0.85 * (i as f64 + 1.0) / config.t_obs as f64;
        let proj = project_to_image(js, &intr, &cam_from_canonical);
        draw_pose(&mut svg, &proj, "#3dbb4f", opacity, i + 1 == config.t_obs);
    }

    // prediction in red, fading in over the horizon
    if forecast.pred.len() != config.t_fut {
        return Err(Error::validation(format!(
            "prediction must have {} frames, got {}",
            config.t_fut,
            forecast.pred.len()
        )));
    }
    for (k, frame_pred) in forecast.pred.iter().enumerate() {
        if frame_pred.len() != NUM_JOINTS {
            return Err(Error::validation(format!(
                "predicted frame {k} has {} joints, expected {NUM_JOINTS}",
                frame_pred.len()
            )));
        }
        let js = JointSet::all_valid(frame_pred.clone())?;
        let proj = project_to_image(&js, &intr, &cam_from_canonical);
        let opacity = 0.3 + 0.7 * (k as f64 + 1.0) / config.t_fut as f64;
        draw_pose(&mut svg, &proj, "#e04545", opacity, k + 1 == forecast.pred.len());
    }

    svg.push_str("</svg>\n");
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))?;
    Ok(())
}

fn draw_pose(svg: &mut String, proj: &ProjectedJoints, color: &str, opacity: f64, with_edges: bool) {
    use std::fmt::Write;
    if with_edges {
        for (a, b) in hand_skeleton_edges() {
            if proj.in_front[a] && proj.in_front[b] {
                let pa = proj.pixels[a];
                let pb = proj.pixels[b];
                let _ = writeln!(
                    svg,
                    "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
                     stroke=\"{color}\" stroke-width=\"0.6\" stroke-opacity=\"{opacity:.2}\"/>",
                    pa[0], pa[1], pb[0], pb[1]
                );
            }
        }
    }
    for (p, &vis) in proj.pixels.iter().zip(&proj.in_front) {
        if vis {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"0.9\" fill=\"{color}\" \
                 fill-opacity=\"{opacity:.2}\"/>",
                p[0], p[1]
            );
        }
    }
}
