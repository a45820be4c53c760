//! Synthetic desk-scale clip generator.
//!
//! Each clip draws a task family (reach_left, reach_right, grasp, wave,
//! rest). Wrist trajectories are sums of 2-4 sinusoids with family-specific
//! frequency and amplitude ranges; finger joints follow per-finger curl
//! parameters over fixed bone lengths (5 chains of 4 joints plus the wrist
//! per hand); camera extrinsics follow a smooth momentum random walk whose
//! step scale is proportional to `egomotion_level`.
//!
//! The two context modalities carry deliberately complementary signal:
//! rendered frames show a target marker at the clip's goal position (spatial
//! information the poses alone do not reveal until late in the clip), while
//! the text's modifier word states the motion tempo that controls how far
//! the future trajectory travels. Corrupting either modality therefore
//! removes real information, which is what the corruption-ablation protocol
//! measures.
//!
//! Everything is a pure function of the seed: per-clip streams are derived
//! with splitmix64, the renderer is deterministic, and the train/val/test
//! split hashes only the clip id.

use std::path::Path;

use crate::context::grid_frame_tokens;
use crate::error::{Error, Result};
use crate::geometry::{
    m_mul_v, rotation_about_axis, v_add, v_cross, v_norm, v_scale, v_sub, Mat3, RigidTransform,
    Vec3, JOINTS_PER_HAND, NUM_JOINTS,
};
use crate::nnkernel::{fnv1a64, mix64, Prng};

use super::bundle::{write_clip_bundle, ClipRecord, VisionTokens, FRAME_ELEMS, FRAME_SIDE};

/// Default pinhole intrinsics used by the synthetic renderer; stored in
/// every bundle so overlays reproject exactly.
pub const SYNTH_INTRINSICS: [f32; 4] = [110.0, 110.0, 112.0, 112.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    ReachLeft,
    ReachRight,
    Grasp,
    Wave,
    Rest,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 5] = [
        TaskFamily::ReachLeft,
        TaskFamily::ReachRight,
        TaskFamily::Grasp,
        TaskFamily::Wave,
        TaskFamily::Rest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskFamily::ReachLeft => "reach_left",
            TaskFamily::ReachRight => "reach_right",
            TaskFamily::Grasp => "grasp",
            TaskFamily::Wave => "wave",
            TaskFamily::Rest => "rest",
        }
    }
}

/// Tempo modifiers; the word is part of the clip text and scales the ramp
/// frequency, so language carries information about how far the future
/// trajectory travels.
const MODIFIERS: [(&str, f64); 3] = [("slow", 0.72), ("steady", 1.0), ("quick", 1.35)];

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub frames_per_clip: usize,
    /// Camera-walk intensity in [0, 1]; 0 produces a perfectly static camera.
    pub egomotion_level: f64,
    /// Family weights; need not be normalized.
    pub task_mix: Vec<(TaskFamily, f64)>,
    pub seed: u64,
    /// Store rendered frames in the bundle (large); grid vision tokens are
    /// always stored.
    pub with_frames: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clips: 50,
            frames_per_clip: 40,
            egomotion_level: 0.5,
            task_mix: TaskFamily::ALL.iter().map(|&f| (f, 1.0)).collect(),
            seed: 0,
            with_frames: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames_per_clip < 30 {
            return Err(Error::validation(format!(
                "frames_per_clip must be >= 30, got {}",
                self.frames_per_clip
            )));
        }
        if self.n_clips == 0 {
            return Err(Error::validation("n_clips must be positive".to_string()));
        }
        if !(0.0..=1.0).contains(&self.egomotion_level) {
            return Err(Error::validation(format!(
                "egomotion_level must be in [0, 1], got {}",
                self.egomotion_level
            )));
        }
        let total: f64 = self.task_mix.iter().map(|(_, w)| w).sum();
        if self.task_mix.is_empty() || self.task_mix.iter().any(|&(_, w)| w < 0.0) || total <= 0.0 {
            return Err(Error::validation("invalid task mix weights".to_string()));
        }
        Ok(())
    }
}

/// Split assignment is a pure function of the clip id: bucket
/// mix64(fnv1a64(id)) % 10 -> 0..7 train, 8 val, 9 test.
pub fn split_of(clip_id: &str) -> &'static str {
    match mix64(fnv1a64(clip_id.as_bytes())) % 10 {
        0..=7 => "train",
        8 => "val",
        _ => "test",
    }
}

struct Sinusoid {
    amp: Vec3,
    omega: f64,
    phase: f64,
}

impl Sinusoid {
    fn eval(&self, t: f64) -> Vec3 {
        v_scale(self.amp, (self.omega * t + self.phase).sin())
    }
}

/// Per-hand kinematic layout, fixed for the whole clip.
struct HandLayout {
    /// Finger-forward unit direction.
    forward: Vec3,
    /// Fan axis (palm normal): finger base directions rotate about it.
    normal: Vec3,
    fan_angles: [f64; 5],
    /// Metacarpal length per finger (wrist to knuckle).
    base_len: [f64; 5],
    /// Phalanx lengths per finger.
    seg_len: [[f64; 3]; 5],
    /// Per-finger curl offset.
    curl_offset: [f64; 5],
}

impl HandLayout {
    fn sample(prng: &mut Prng, right: bool) -> Self {
        let side = if right { 1.0 } else { -1.0 };
        // hand geometry varies across clips, as across subjects
        let forward = normalize([
            side * prng.uniform_in(0.0, 0.15),
            prng.uniform_in(0.25, 0.4),
            prng.uniform_in(0.85, 0.95),
        ]);
        // palm normal orthogonal to forward, roughly facing the camera
        let rough = [0.0, -0.9, 0.35];
        let normal = normalize(v_sub(rough, v_scale(forward, dot(rough, forward))));
        let mut fan_angles = [0.0; 5];
        let mut base_len = [0.0; 5];
        let mut seg_len = [[0.0; 3]; 5];
        let mut curl_offset = [0.0; 5];
        for f in 0..5 {
            fan_angles[f] = side * 0.275 * (f as f64 - 2.0) + prng.uniform_in(-0.04, 0.04);
            base_len[f] = if f == 0 {
                prng.uniform_in(0.045, 0.06)
            } else {
                prng.uniform_in(0.075, 0.095)
            };
            let scale = prng.uniform_in(0.9, 1.1);
            seg_len[f] = [0.038 * scale, 0.028 * scale, 0.022 * scale];
            curl_offset[f] = prng.uniform_in(-0.06, 0.06);
        }
        HandLayout {
            forward,
            normal,
            fan_angles,
            base_len,
            seg_len,
            curl_offset,
        }
    }

    /// Joint positions for one hand given the wrist position, the shared
    /// curl in [0, 1], and per-finger curl noise. Bone lengths are constant:
    /// every segment is a pure rotation of a fixed-length vector.
    fn joints(&self, wrist: Vec3, curl: f64, curl_noise: &[f64; 5]) -> [Vec3; JOINTS_PER_HAND] {
        let mut joints = [[0.0; 3]; JOINTS_PER_HAND];
        joints[0] = wrist;
        for f in 0..5 {
            let fan = rotation_about_axis(self.normal, self.fan_angles[f]);
            let dir0 = m_mul_v(&fan, self.forward);
            let curl_axis = normalize(v_cross(self.normal, dir0));
            let c = (curl + self.curl_offset[f] + curl_noise[f]).clamp(0.0, 1.0);
            let knuckle = v_add(wrist, v_scale(dir0, self.base_len[f]));
            joints[1 + f * 4] = knuckle;
            let mut p = knuckle;
            for s in 0..3 {
                let bend = rotation_about_axis(curl_axis, c * 0.42 * (s as f64 + 1.0));
                let dir = m_mul_v(&bend, dir0);
                p = v_add(p, v_scale(dir, self.seg_len[f][s]));
                joints[1 + f * 4 + s + 1] = p;
            }
        }
        joints
    }
}

/// Per-frame, per-hand annotation jitter. Every component is a rigid or
/// articulation-space perturbation, so bone lengths stay exact: the wrist
/// shift translates the whole hand, the rotation spins it about the wrist,
/// and curl noise only re-bends the fixed-length chains.
struct HandJitter {
    wrist_shift: Vec3,
    rot_axis: Vec3,
    rot_angle: f64,
    curl_noise: [f64; 5],
}

/// Annotation-noise scales: 4 mm wrist shift per axis, 0.025 rad hand
/// rotation, 0.04 curl units.
const JITTER_WRIST_SIGMA: f64 = 0.004;
const JITTER_ROT_SIGMA: f64 = 0.025;
const JITTER_CURL_SIGMA: f64 = 0.04;

impl HandJitter {
    fn sample(prng: &mut Prng) -> Self {
        let wrist_shift = [
            JITTER_WRIST_SIGMA * prng.next_gaussian(),
            JITTER_WRIST_SIGMA * prng.next_gaussian(),
            JITTER_WRIST_SIGMA * prng.next_gaussian(),
        ];
        let raw_axis = [
            prng.next_gaussian(),
            prng.next_gaussian(),
            prng.next_gaussian(),
        ];
        let rot_axis = if v_norm(raw_axis) > 1e-9 {
            normalize(raw_axis)
        } else {
            [0.0, 0.0, 1.0]
        };
        let rot_angle = JITTER_ROT_SIGMA * prng.next_gaussian();
        let mut curl_noise = [0.0; 5];
        for c in curl_noise.iter_mut() {
            *c = JITTER_CURL_SIGMA * prng.next_gaussian();
        }
        HandJitter {
            wrist_shift,
            rot_axis,
            rot_angle,
            curl_noise,
        }
    }

    /// Rotate hand joints rigidly about the (already shifted) wrist.
    fn spin(&self, joints: &mut [Vec3]) {
        let rot = rotation_about_axis(self.rot_axis, self.rot_angle);
        let wrist = joints[0];
        for p in joints.iter_mut().skip(1) {
            *p = v_add(wrist, m_mul_v(&rot, v_sub(*p, wrist)));
        }
    }
}

fn normalize(v: Vec3) -> Vec3 {
    v_scale(v, 1.0 / v_norm(v))
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// World-to-camera rotation from yaw (about +z) and pitch: camera x = right,
/// y = down, z = forward.
fn camera_rotation(yaw: f64, pitch: f64) -> Mat3 {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let right = [cy, sy, 0.0];
    let forward = [-sy * cp, cy * cp, sp];
    let down = v_cross(forward, right);
    [right, down, forward]
}

struct ClipPlan {
    family: TaskFamily,
    text: String,
    tempo: f64,
    target: Option<Vec3>,
    /// Raised-cosine ramp frequency (radians per frame).
    ramp_omega: f64,
    left_home: Vec3,
    right_home: Vec3,
    left_jitter: Vec<Sinusoid>,
    right_jitter: Vec<Sinusoid>,
    wave: Option<Sinusoid>,
    left_layout: HandLayout,
    right_layout: HandLayout,
    base_curl: f64,
}

fn draw_family(prng: &mut Prng, mix: &[(TaskFamily, f64)]) -> TaskFamily {
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let mut x = prng.next_f64() * total;
    for &(fam, w) in mix {
        if x < w {
            return fam;
        }
        x -= w;
    }
    mix.last().unwrap().0
}

fn jitter_sinusoids(prng: &mut Prng, count: usize, amp_lo: f64, amp_hi: f64, fps: f64) -> Vec<Sinusoid> {
    (0..count)
        .map(|_| Sinusoid {
            amp: [
                prng.uniform_in(amp_lo, amp_hi),
                prng.uniform_in(amp_lo, amp_hi),
                prng.uniform_in(amp_lo, amp_hi),
            ],
            omega: 2.0 * std::f64::consts::PI * prng.uniform_in(0.2, 0.6) / fps,
            phase: prng.uniform_in(0.0, 2.0 * std::f64::consts::PI),
        })
        .collect()
}

fn plan_clip(prng: &mut Prng, config: &SynthConfig, fps: f64) -> ClipPlan {
    let family = draw_family(prng, &config.task_mix);
    let (modifier, tempo) = MODIFIERS[prng.next_index(MODIFIERS.len())];
    let text = format!("{} {}", family.name(), modifier);

    let left_home = [
        -0.15 + prng.uniform_in(-0.03, 0.03),
        0.45 + prng.uniform_in(-0.04, 0.04),
        -0.08 + prng.uniform_in(-0.03, 0.03),
    ];
    let right_home = [
        0.15 + prng.uniform_in(-0.03, 0.03),
        0.45 + prng.uniform_in(-0.04, 0.04),
        -0.08 + prng.uniform_in(-0.03, 0.03),
    ];

    let target = match family {
        TaskFamily::ReachLeft => Some(v_add(
            left_home,
            [
                prng.uniform_in(-0.28, -0.14),
                prng.uniform_in(-0.05, 0.12),
                prng.uniform_in(0.06, 0.22),
            ],
        )),
        TaskFamily::ReachRight => Some(v_add(
            right_home,
            [
                prng.uniform_in(0.14, 0.28),
                prng.uniform_in(-0.05, 0.12),
                prng.uniform_in(0.06, 0.22),
            ],
        )),
        TaskFamily::Grasp => Some([
            prng.uniform_in(-0.08, 0.08),
            0.55 + prng.uniform_in(-0.04, 0.06),
            prng.uniform_in(-0.05, 0.1),
        ]),
        _ => None,
    };

    // half-cosine ramp spanning roughly two thirds of a period over the clip
    let span = prng.uniform_in(0.55, 0.75) * std::f64::consts::PI;
    let ramp_omega = tempo * span / (config.frames_per_clip.max(2) - 1) as f64;

    let wave = (family == TaskFamily::Wave).then(|| Sinusoid {
        amp: [prng.uniform_in(0.06, 0.11), prng.uniform_in(0.0, 0.02), prng.uniform_in(0.01, 0.04)],
        omega: 2.0 * std::f64::consts::PI * tempo * prng.uniform_in(1.2, 2.0) / fps,
        phase: prng.uniform_in(0.0, 2.0 * std::f64::consts::PI),
    });

    let left_jitter = jitter_sinusoids(prng, 2, 0.001, 0.005, fps);
    let right_jitter = jitter_sinusoids(prng, 2, 0.001, 0.005, fps);
    let left_layout = HandLayout::sample(prng, false);
    let right_layout = HandLayout::sample(prng, true);
    let base_curl = prng.uniform_in(0.15, 0.5);

    ClipPlan {
        family,
        text,
        tempo,
        target,
        ramp_omega,
        left_home,
        right_home,
        left_jitter,
        right_jitter,
        wave,
        left_layout,
        right_layout,
        base_curl,
    }
}

impl ClipPlan {
    /// Raised-cosine progress in [0, 1]: slow start, acceleration into the
    /// future segment. Constant-velocity extrapolation underestimates it.
    fn ramp(&self, t: f64) -> f64 {
        0.5 * (1.0 - (self.ramp_omega * t).cos())
    }

    fn wrists(&self, t: f64) -> (Vec3, Vec3) {
        let jitter = |sinusoids: &[Sinusoid]| {
            sinusoids
                .iter()
                .fold([0.0; 3], |acc, s| v_add(acc, s.eval(t)))
        };
        let mut left = v_add(self.left_home, jitter(&self.left_jitter));
        let mut right = v_add(self.right_home, jitter(&self.right_jitter));
        match self.family {
            TaskFamily::Rest => {}
            TaskFamily::Wave => {
                right = v_add(right, self.wave.as_ref().unwrap().eval(t));
            }
            TaskFamily::ReachLeft => {
                let delta = v_sub(self.target.unwrap(), self.left_home);
                left = v_add(left, v_scale(delta, self.ramp(t)));
            }
            TaskFamily::ReachRight => {
                let delta = v_sub(self.target.unwrap(), self.right_home);
                right = v_add(right, v_scale(delta, self.ramp(t)));
            }
            TaskFamily::Grasp => {
                let target = self.target.unwrap();
                let l_goal = v_add(target, [-0.06, 0.0, 0.0]);
                let r_goal = v_add(target, [0.06, 0.0, 0.0]);
                left = v_add(left, v_scale(v_sub(l_goal, self.left_home), self.ramp(t)));
                right = v_add(right, v_scale(v_sub(r_goal, self.right_home), self.ramp(t)));
            }
        }
        (left, right)
    }

    /// Shared curl trajectory. Every family articulates over time (the
    /// static mean pose cannot track any of this): grasps close hard,
    /// reaches open toward the target, waves oscillate, rest drifts slowly.
    /// Tempo (stated by the text modifier) scales the motion everywhere.
    fn curl(&self, t: f64, fps: f64) -> f64 {
        match self.family {
            TaskFamily::Grasp => self.base_curl + (0.9 - self.base_curl) * self.ramp(t),
            TaskFamily::ReachLeft | TaskFamily::ReachRight => {
                self.base_curl + (0.1 - self.base_curl) * 0.8 * self.ramp(t)
            }
            TaskFamily::Wave => {
                self.base_curl
                    + 0.22 * (2.0 * std::f64::consts::PI * self.tempo * t / fps).sin()
            }
            TaskFamily::Rest => {
                self.base_curl
                    + 0.12
                        * (2.0 * std::f64::consts::PI * 0.3 * self.tempo * t / fps).sin()
            }
        }
    }

    /// All 42 joints at frame t, world coordinates, binary64, with
    /// length-preserving annotation jitter applied per hand.
    fn pose(&self, t: f64, fps: f64, left_jit: &HandJitter, right_jit: &HandJitter) -> Vec<Vec3> {
        let (left_wrist, right_wrist) = self.wrists(t);
        let curl = self.curl(t, fps);
        let mut left = self.left_layout.joints(
            v_add(left_wrist, left_jit.wrist_shift),
            curl,
            &left_jit.curl_noise,
        );
        left_jit.spin(&mut left);
        let mut right = self.right_layout.joints(
            v_add(right_wrist, right_jit.wrist_shift),
            curl,
            &right_jit.curl_noise,
        );
        right_jit.spin(&mut right);
        let mut joints = Vec::with_capacity(NUM_JOINTS);
        joints.extend(left);
        joints.extend(right);
        joints
    }
}

/// Occlusion mask: alternating visible gaps and invalid runs, tuned to a
/// mean of about 10% invalid frames per joint. The first gap is shorter so
/// short clips still see dropout.
fn dropout_mask(prng: &mut Prng, frames: usize) -> Vec<Vec<bool>> {
    let mut mask = vec![vec![true; NUM_JOINTS]; frames];
    for j in 0..NUM_JOINTS {
        let mut pos = 0usize;
        let mut first = true;
        loop {
            let gap = if first {
                prng.uniform_in(0.0, 50.0) as usize
            } else {
                prng.uniform_in(30.0, 70.0) as usize
            };
            first = false;
            let len = prng.uniform_in(2.0, 8.0).ceil() as usize;
            pos += gap;
            if pos >= frames {
                break;
            }
            for f in pos..(pos + len).min(frames) {
                mask[f][j] = false;
            }
            pos += len;
        }
    }
    mask
}

/// Paint an additive Gaussian blob, clamped to [0, 1].
fn splat(canvas: &mut [f32], u: f64, v: f64, sigma: f64, radius: i64, channel: usize, amp: f32) {
    let cu = u.round() as i64;
    let cv = v.round() as i64;
    for py in (cv - radius).max(0)..=(cv + radius).min(FRAME_SIDE as i64 - 1) {
        for px in (cu - radius).max(0)..=(cu + radius).min(FRAME_SIDE as i64 - 1) {
            let du = px as f64 - u;
            let dv = py as f64 - v;
            let w = (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp();
            let idx = (py as usize * FRAME_SIDE + px as usize) * 3 + channel;
            canvas[idx] = (canvas[idx] + amp * w as f32).min(1.0);
        }
    }
}

fn render_frame(
    joints: &[Vec3],
    valid: &[bool],
    target: Option<Vec3>,
    ext: &RigidTransform,
) -> Vec<f32> {
    let [fx, fy, cx, cy] = SYNTH_INTRINSICS.map(|v| v as f64);
    let mut canvas = vec![0.0f32; FRAME_ELEMS];
    if let Some(t) = target {
        let c = ext.apply_point(t);
        if c[2] > 1e-6 {
            let u = fx * c[0] / c[2] + cx;
            let v = fy * c[1] / c[2] + cy;
            splat(&mut canvas, u, v, 5.0, 12, 0, 1.0);
        }
    }
    for (p, &ok) in joints.iter().zip(valid) {
        if !ok {
            continue; // occluded joints stay invisible
        }
        let c = ext.apply_point(*p);
        if c[2] > 1e-6 {
            let u = fx * c[0] / c[2] + cx;
            let v = fy * c[1] / c[2] + cy;
            splat(&mut canvas, u, v, 2.5, 6, 1, 0.9);
        }
    }
    canvas
}

/// Generate one clip deterministically from its per-clip stream.
fn generate_clip(clip_id: String, clip_seed: u64, config: &SynthConfig) -> ClipRecord {
    let fps = 10.0;
    let frames = config.frames_per_clip;
    let mut prng = Prng::new(clip_seed);
    let plan = plan_clip(&mut prng, config, fps);

    // camera momentum walk; exactly static at level 0
    let level = config.egomotion_level;
    let mut center: Vec3 = [
        prng.uniform_in(-0.02, 0.02),
        prng.uniform_in(-0.02, 0.02),
        prng.uniform_in(-0.02, 0.02),
    ];
    let mut yaw = prng.uniform_in(-0.25, 0.25);
    let mut pitch = prng.uniform_in(-0.12, 0.12);
    let mut vel: Vec3 = [0.0; 3];
    let mut yaw_vel = 0.0;
    let mut pitch_vel = 0.0;

    let mut extrinsics_f64 = Vec::with_capacity(frames);
    for f in 0..frames {
        if f > 0 && level > 0.0 {
            for k in 0..3 {
                vel[k] = 0.82 * vel[k] + 0.006 * level * prng.next_gaussian();
                center[k] += vel[k];
            }
            yaw_vel = 0.82 * yaw_vel + 0.012 * level * prng.next_gaussian();
            pitch_vel = 0.82 * pitch_vel + 0.005 * level * prng.next_gaussian();
            yaw += yaw_vel;
            pitch = (pitch + pitch_vel).clamp(-0.5, 0.5);
        }
        let rotation = camera_rotation(yaw, pitch);
        let translation = v_scale(m_mul_v(&rotation, center), -1.0);
        extrinsics_f64.push(RigidTransform::from_parts(rotation, translation));
    }

    let mask = dropout_mask(&mut prng, frames);

    let mut poses_world = Vec::with_capacity(frames * NUM_JOINTS * 3);
    let mut mask_bytes = Vec::with_capacity(frames * NUM_JOINTS);
    let mut extrinsics = Vec::with_capacity(frames * 12);
    let mut frame_data = config.with_frames.then(Vec::new);
    let mut token_data: Vec<f32> = Vec::new();

    for f in 0..frames {
        let t = f as f64;
        let left_jit = HandJitter::sample(&mut prng);
        let right_jit = HandJitter::sample(&mut prng);
        let joints = plan.pose(t, fps, &left_jit, &right_jit);
        for (j, p) in joints.iter().enumerate() {
            if mask[f][j] {
                for k in 0..3 {
                    poses_world.push(p[k] as f32);
                }
            } else {
                // occlusion placeholder: masked slots hold zeros on disk
                poses_world.extend_from_slice(&[0.0, 0.0, 0.0]);
            }
            mask_bytes.push(mask[f][j] as u8);
        }
        let ext = &extrinsics_f64[f];
        for r in 0..3 {
            for c in 0..3 {
                extrinsics.push(ext.rotation[r][c] as f32);
            }
            extrinsics.push(ext.translation[r] as f32);
        }
        let image = render_frame(&joints, &mask[f], plan.target, ext);
        let tokens = grid_frame_tokens(&image).expect("renderer frame shape");
        token_data.extend(tokens.iter().map(|&v| v as f32));
        if let Some(store) = frame_data.as_mut() {
            store.extend_from_slice(&image);
        }
    }

    ClipRecord {
        clip_id,
        fps,
        text: plan.text.clone(),
        poses_world,
        extrinsics,
        mask: mask_bytes,
        intrinsics: Some(SYNTH_INTRINSICS),
        frames: frame_data,
        vision_tokens: Some(VisionTokens {
            tokens: token_data,
            len_per_frame: crate::context::GRID_TOKENS_PER_FRAME,
            dim: crate::context::GRID_TOKEN_DIM,
        }),
    }
}

/// Generate a clip record without touching disk (used by tests and by
/// [`synth_generate`]).
pub fn synth_clip(config: &SynthConfig, index: usize) -> Result<ClipRecord> {
    config.validate()?;
    let clip_id = format!("clip_{index:04}");
    let clip_seed = mix64(config.seed ^ mix64(index as u64 + 1));
    Ok(generate_clip(clip_id, clip_seed, config))
}

/// Generate the full dataset: `clips/<id>/` bundles, `splits.json`, and a
/// `synth_manifest.json` echoing the configuration and seed.
pub fn synth_generate(config: &SynthConfig, out_dir: &Path) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut splits: std::collections::BTreeMap<String, Vec<String>> = Default::default();
    for name in ["train", "val", "test"] {
        splits.insert(name.to_string(), Vec::new());
    }
    for i in 0..config.n_clips {
        let record = synth_clip(config, i)?;
        write_clip_bundle(&record, &out_dir.join("clips").join(&record.clip_id))?;
        splits
            .get_mut(split_of(&record.clip_id))
            .unwrap()
            .push(record.clip_id);
    }

    let splits_path = out_dir.join("splits.json");
    std::fs::write(
        &splits_path,
        serde_json::to_string_pretty(&splits).expect("splits json"),
    )
    .map_err(|e| Error::io(&splits_path, e))?;

    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        format_version: u32,
        config: &'a SynthConfig,
    }
    let manifest_path = out_dir.join("synth_manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&Manifest {
            format_version: 1,
            config,
        })
        .expect("manifest json"),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::egomotion_score;

    fn small_config(seed: u64, level: f64) -> SynthConfig {
        SynthConfig {
            n_clips: 6,
            frames_per_clip: 32,
            egomotion_level: level,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_clips() {
        let cfg = small_config(9, 0.4);
        let a = synth_clip(&cfg, 3).unwrap();
        let b = synth_clip(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = synth_clip(&small_config(10, 0.4), 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_egomotion_level_is_static_camera() {
        let cfg = small_config(1, 0.0);
        for i in 0..cfg.n_clips {
            let clip = synth_clip(&cfg, i).unwrap();
            let exts: Vec<_> = (0..clip.num_frames()).map(|t| clip.extrinsic(t)).collect();
            assert_eq!(egomotion_score(&exts), 0.0, "clip {i}");
        }
    }

    #[test]
    fn egomotion_mean_increases_with_level() {
        let mean_score = |level: f64| {
            let cfg = SynthConfig {
                n_clips: 50,
                frames_per_clip: 30,
                egomotion_level: level,
                seed: 77,
                ..SynthConfig::default()
            };
            let mut sum = 0.0;
            for i in 0..cfg.n_clips {
                let clip = synth_clip(&cfg, i).unwrap();
                let exts: Vec<_> = (0..clip.num_frames()).map(|t| clip.extrinsic(t)).collect();
                sum += egomotion_score(&exts);
            }
            sum / cfg.n_clips as f64
        };
        let low = mean_score(0.1);
        let mid = mean_score(0.5);
        let high = mean_score(0.9);
        assert!(low < mid && mid < high, "{low} {mid} {high}");
    }

    #[test]
    fn bone_lengths_constant_over_time() {
        // checked on the binary64 generator output (jitter included),
        // before f32 storage
        let cfg = small_config(5, 0.6);
        let mut prng = Prng::new(123);
        let plan = plan_clip(&mut prng, &cfg, 10.0);
        let edges: Vec<(usize, usize)> = crate::geometry::hand_skeleton_edges();
        let mut reference: Option<Vec<f64>> = None;
        for f in 0..cfg.frames_per_clip {
            let lj = HandJitter::sample(&mut prng);
            let rj = HandJitter::sample(&mut prng);
            let pose = plan.pose(f as f64, 10.0, &lj, &rj);
            let lengths: Vec<f64> = edges
                .iter()
                .map(|&(a, b)| v_norm(v_sub(pose[a], pose[b])))
                .collect();
            match &reference {
                None => reference = Some(lengths),
                Some(r) => {
                    for (e, (len, expect)) in lengths.iter().zip(r).enumerate() {
                        assert!(
                            (len - expect).abs() < 1e-9,
                            "frame {f} edge {e}: {len} vs {expect}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn masked_slots_hold_zero_placeholders() {
        let cfg = small_config(2, 0.3);
        let clip = synth_clip(&cfg, 0).unwrap();
        let mut saw_masked = false;
        for f in 0..clip.num_frames() {
            for j in 0..NUM_JOINTS {
                if clip.mask[f * NUM_JOINTS + j] == 0 {
                    saw_masked = true;
                    for k in 0..3 {
                        assert_eq!(clip.poses_world[(f * NUM_JOINTS + j) * 3 + k], 0.0);
                    }
                }
            }
        }
        assert!(saw_masked, "expected some occlusion in 6 clips x 32 frames");
    }

    #[test]
    fn mask_dropout_rate_near_ten_percent() {
        let cfg = SynthConfig {
            n_clips: 30,
            frames_per_clip: 60,
            seed: 3,
            ..SynthConfig::default()
        };
        let mut invalid = 0usize;
        let mut total = 0usize;
        for i in 0..cfg.n_clips {
            let clip = synth_clip(&cfg, i).unwrap();
            invalid += clip.mask.iter().filter(|&&m| m == 0).count();
            total += clip.mask.len();
        }
        let rate = invalid as f64 / total as f64;
        assert!((0.05..=0.16).contains(&rate), "dropout rate {rate}");
    }

    #[test]
    fn split_assignment_is_stable_and_covers() {
        assert_eq!(split_of("clip_0000"), split_of("clip_0000"));
        let mut counts = std::collections::BTreeMap::new();
        for i in 0..300 {
            *counts.entry(split_of(&format!("clip_{i:04}"))).or_insert(0usize) += 1;
        }
        assert!(counts["train"] > 180);
        assert!(counts["val"] > 10);
        assert!(counts["test"] > 10);
    }

    #[test]
    fn tokens_present_and_shaped() {
        let cfg = small_config(4, 0.2);
        let clip = synth_clip(&cfg, 1).unwrap();
        let vt = clip.vision_tokens.as_ref().unwrap();
        assert_eq!(vt.len_per_frame, 49);
        assert_eq!(vt.dim, 5);
        assert_eq!(vt.tokens.len(), clip.num_frames() * 49 * 5);
        // some cell must have seen a hand blob
        assert!(vt.tokens.iter().any(|&v| v > 0.01));
    }

    #[test]
    fn generate_writes_dataset_layout() {
        let tmp = std::env::temp_dir().join(format!("egghand_synth_{}", std::process::id()));
        let cfg = small_config(11, 0.5);
        synth_generate(&cfg, &tmp).unwrap();
        assert!(tmp.join("splits.json").exists());
        assert!(tmp.join("synth_manifest.json").exists());
        let ds = super::super::bundle::Dataset::open(&tmp).unwrap();
        assert_eq!(ds.all_clip_ids().len(), cfg.n_clips);
        let clip = ds.load_clip(&ds.all_clip_ids()[0]).unwrap();
        assert_eq!(clip.num_frames(), cfg.frames_per_clip);
        std::fs::remove_dir_all(&tmp).ok();
    }
}
