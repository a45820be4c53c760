//! Rigid-body transforms, egocentric canonicalization, pinhole projection,
//! and the egomotion score used for robustness stratification.
//!
//! Convention: a [`RigidTransform`] maps world points to camera points,
//! `p_cam = R p_world + t`. This is the extrinsics convention the clip-bundle
//! format documents; keeping a single direction removes the most common
//! silent sign bug in this kind of code.

use crate::error::{Error, Result};

/// Joints per hand (wrist + 5 fingers x 4 joints).
pub const JOINTS_PER_HAND: usize = 21;
/// Total joint count, left hand then right hand.
pub const NUM_JOINTS: usize = 42;
/// Left wrist index.
pub const WRIST_LEFT: usize = 0;
/// Right wrist index.
pub const WRIST_RIGHT: usize = 21;

const ORTHONORMAL_TOL: f64 = 1e-9;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn v_add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn v_sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn v_scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn v_dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn v_cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn v_norm(a: Vec3) -> f64 {
    v_dot(a, a).sqrt()
}

pub fn m_mul_v(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn m_mul_m(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn m_transpose(m: &Mat3) -> Mat3 {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}

pub fn m_identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn m_det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Rotation about a unit axis by `angle` radians (Rodrigues form).
pub fn rotation_about_axis(axis: Vec3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Rigid transform mapping world points to camera points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    /// Validating constructor: RᵀR = I and det R = +1 within 1e-9.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let t = RigidTransform {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    /// Constructor for values that are trusted structurally but may carry
    /// binary32 quantization (bundle storage keeps extrinsics as f32, which
    /// leaves RᵀR ≈ I only to ~1e-7).
    pub fn from_parts(rotation: Mat3, translation: Vec3) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: m_identity(),
            translation: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rt_r = m_mul_m(&m_transpose(&self.rotation), &self.rotation);
        let id = m_identity();
        for i in 0..3 {
            for j in 0..3 {
                if (rt_r[i][j] - id[i][j]).abs() > ORTHONORMAL_TOL {
                    return Err(Error::validation(format!(
                        "rotation is not orthonormal: (RᵀR)[{i}][{j}] = {}",
                        rt_r[i][j]
                    )));
                }
            }
        }
        let det = m_det(&self.rotation);
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::validation(format!(
                "rotation determinant {det} != +1"
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("non-finite translation".to_string()));
        }
        Ok(())
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        v_add(m_mul_v(&self.rotation, p), self.translation)
    }

    /// Camera center in world coordinates: the point mapping to the origin.
    pub fn camera_center(&self) -> Vec3 {
        v_scale(m_mul_v(&m_transpose(&self.rotation), self.translation), -1.0)
    }

    /// Camera forward axis (+z of the camera frame) in world coordinates.
    pub fn forward_axis(&self) -> Vec3 {
        [self.rotation[2][0], self.rotation[2][1], self.rotation[2][2]]
    }

    /// Composition: `(a.compose(b))(p) = a(b(p))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: m_mul_m(&self.rotation, &other.rotation),
            translation: v_add(m_mul_v(&self.rotation, other.translation), self.translation),
        }
    }
}

/// One frame's hand joints: 42 positions in meters plus validity flags.
/// Indices 0..=20 are the left hand (0 = wrist), 21..=41 the right hand
/// (21 = wrist).
#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    pub positions: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl JointSet {
    pub fn new(positions: Vec<Vec3>, valid: Vec<bool>) -> Result<Self> {
        if positions.len() != NUM_JOINTS || valid.len() != NUM_JOINTS {
            return Err(Error::validation(format!(
                "joint set must have exactly {NUM_JOINTS} joints, got {} positions / {} flags",
                positions.len(),
                valid.len()
            )));
        }
        Ok(JointSet { positions, valid })
    }

    pub fn all_valid(positions: Vec<Vec3>) -> Result<Self> {
        let valid = vec![true; positions.len()];
        JointSet::new(positions, valid)
    }

    /// Wrist index for the hand owning joint `j`.
    pub fn wrist_of(j: usize) -> usize {
        if j < JOINTS_PER_HAND {
            WRIST_LEFT
        } else {
            WRIST_RIGHT
        }
    }
}

/// Skeleton edges for overlay rendering: wrist to each finger base, then
/// along each 4-joint finger chain; same topology for both hands.
pub fn hand_skeleton_edges() -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for hand in 0..2 {
        let base = hand * JOINTS_PER_HAND;
        for finger in 0..5 {
            let first = base + 1 + finger * 4;
            edges.push((base, first));
            for s in 0..3 {
                edges.push((first + s, first + s + 1));
            }
        }
    }
    edges
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::validation(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }
}

/// Apply a rigid transform to a batch of points. Rejects non-finite input.
pub fn se3_apply(pose: &RigidTransform, points: &[Vec3]) -> Result<Vec<Vec3>> {
    for p in points {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("non-finite point".to_string()));
        }
    }
    Ok(points.iter().map(|&p| pose.apply_point(p)).collect())
}

/// Inverse transform: `apply(inverse, apply(pose, p)) = p`.
pub fn se3_inverse(pose: &RigidTransform) -> RigidTransform {
    let rt = m_transpose(&pose.rotation);
    RigidTransform {
        rotation: rt,
        translation: v_scale(m_mul_v(&rt, pose.translation), -1.0),
    }
}

/// Canonicalization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalMode {
    /// Anchor every frame in the first observation frame's full camera pose.
    FullCamera,
    /// Anchor at the first camera's position, rotating only about `up_axis`
    /// so the anchor camera's horizontal heading is fixed; the up-axis
    /// component of inter-joint offsets is preserved.
    YawOnly,
}

/// Result of canonicalizing a clip window.
#[derive(Debug, Clone)]
pub struct CanonicalizedClip {
    pub joints: Vec<JointSet>,
    /// World-to-canonical transform that was applied.
    pub anchor: RigidTransform,
    /// Set when the anchor camera's forward axis was parallel to the up axis
    /// and the yaw fell back to zero.
    pub degenerate_yaw: bool,
}

fn normalize(v: Vec3) -> Option<Vec3> {
    let n = v_norm(v);
    if n < 1e-12 {
        None
    } else {
        Some(v_scale(v, 1.0 / n))
    }
}

/// Canonical heading for a given up axis: the world x axis projected off the
/// up direction, falling back to the y axis when x is parallel to up.
fn canonical_heading(up: Vec3) -> Vec3 {
    let ex = [1.0, 0.0, 0.0];
    let proj = v_sub(ex, v_scale(up, v_dot(ex, up)));
    if let Some(h) = normalize(proj) {
        return h;
    }
    let ey = [0.0, 1.0, 0.0];
    normalize(v_sub(ey, v_scale(up, v_dot(ey, up)))).expect("up axis cannot shadow both x and y")
}

/// Express a window of world-frame hand poses in the egocentric canonical
/// frame anchored at the first frame (index 0 of the provided window).
///
/// Invalid joints pass through with `valid = false`; their placeholder
/// positions are transformed like any other point.
pub fn canonicalize_clip(
    world_poses: &[JointSet],
    extrinsics: &[RigidTransform],
    mode: CanonicalMode,
    up_axis: Vec3,
) -> Result<CanonicalizedClip> {
    if world_poses.is_empty() {
        return Err(Error::validation("empty window".to_string()));
    }
    if world_poses.len() != extrinsics.len() {
        return Err(Error::validation(format!(
            "pose/extrinsic count mismatch: {} vs {}",
            world_poses.len(),
            extrinsics.len()
        )));
    }

    let mut degenerate = false;
    let anchor = match mode {
        CanonicalMode::FullCamera => extrinsics[0],
        CanonicalMode::YawOnly => {
            let up = normalize(up_axis)
                .ok_or_else(|| Error::validation("up_axis must be nonzero".to_string()))?;
            let center = extrinsics[0].camera_center();
            let fwd = extrinsics[0].forward_axis();
            let horiz = v_sub(fwd, v_scale(up, v_dot(fwd, up)));
            let yaw = if v_norm(horiz) < 1e-6 {
                degenerate = true;
                m_identity()
            } else {
                let f = normalize(horiz).unwrap();
                let h = canonical_heading(up);
                // signed angle from f to h about up
                let cos_a = v_dot(f, h).clamp(-1.0, 1.0);
                let sin_a = v_dot(v_cross(f, h), up);
                let angle = sin_a.atan2(cos_a);
                rotation_about_axis(up, angle)
            };
            RigidTransform {
                rotation: yaw,
                translation: v_scale(m_mul_v(&yaw, center), -1.0),
            }
        }
    };

    let joints = world_poses
        .iter()
        .map(|js| {
            let positions = js.positions.iter().map(|&p| anchor.apply_point(p)).collect();
            JointSet {
                positions,
                valid: js.valid.clone(),
            }
        })
        .collect();

    Ok(CanonicalizedClip {
        joints,
        anchor,
        degenerate_yaw: degenerate,
    })
}

/// Pixel coordinates plus an in-front flag per joint.
#[derive(Debug, Clone)]
pub struct ProjectedJoints {
    pub pixels: Vec<[f64; 2]>,
    pub in_front: Vec<bool>,
}

/// Project anchor-frame joints through `cam_from_anchor` and the pinhole
/// intrinsics. Joints behind the camera (z <= 1e-6) or invalid carry
/// `in_front = false` and undefined pixels.
pub fn project_to_image(
    joints: &JointSet,
    intr: &CameraIntrinsics,
    cam_from_anchor: &RigidTransform,
) -> ProjectedJoints {
    let mut pixels = Vec::with_capacity(joints.positions.len());
    let mut in_front = Vec::with_capacity(joints.positions.len());
    for (p, &valid) in joints.positions.iter().zip(&joints.valid) {
        let c = cam_from_anchor.apply_point(*p);
        let visible = valid && c[2] > 1e-6;
        if visible {
            pixels.push([
                intr.fx * c[0] / c[2] + intr.cx,
                intr.fy * c[1] / c[2] + intr.cy,
            ]);
        } else {
            pixels.push([f64::NAN, f64::NAN]);
        }
        in_front.push(visible);
    }
    ProjectedJoints { pixels, in_front }
}

/// Geodesic angle between two rotations, arccos((trace(RaᵀRb) - 1) / 2)
/// with the argument clamped to [-1, 1].
///
/// Bitwise-identical matrices short-circuit to exactly 0: the relative
/// rotation of a matrix with itself is the identity by definition, while the
/// trace formula would amplify any quantization of an f32-stored rotation
/// into a spurious ~1e-4 angle (arccos has unbounded sensitivity at 1).
pub fn geodesic_angle(a: &Mat3, b: &Mat3) -> f64 {
    if a == b {
        return 0.0;
    }
    let rel = m_mul_m(&m_transpose(a), b);
    let trace = rel[0][0] + rel[1][1] + rel[2][2];
    ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Weight of a radian of rotation relative to a meter of translation in the
/// egomotion score.
pub const EGOMOTION_ROTATION_WEIGHT: f64 = 1.0;

/// Egomotion score: sum over consecutive frames of translation delta norm
/// plus the geodesic rotation angle (1 meter per radian). A single frame
/// scores 0.
pub fn egomotion_score(extrinsics: &[RigidTransform]) -> f64 {
    let mut score = 0.0;
    for w in extrinsics.windows(2) {
        let dt = v_norm(v_sub(w[1].translation, w[0].translation));
        let da = geodesic_angle(&w[0].rotation, &w[1].rotation);
        score += dt + EGOMOTION_ROTATION_WEIGHT * da;
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::Prng;

    pub(crate) fn random_rotation(prng: &mut Prng) -> Mat3 {
        let axis = loop {
            let v = [
                prng.next_gaussian(),
                prng.next_gaussian(),
                prng.next_gaussian(),
            ];
            if let Some(u) = normalize(v) {
                break u;
            }
        };
        rotation_about_axis(axis, prng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI))
    }

    fn random_pose(prng: &mut Prng) -> RigidTransform {
        RigidTransform {
            rotation: random_rotation(prng),
            translation: [
                prng.uniform_in(-2.0, 2.0),
                prng.uniform_in(-2.0, 2.0),
                prng.uniform_in(-2.0, 2.0),
            ],
        }
    }

    #[test]
    fn identity_leaves_points_unchanged() {
        let pose = RigidTransform::identity();
        let pts = vec![[1.0, 2.0, 3.0], [-0.5, 0.0, 4.0]];
        assert_eq!(se3_apply(&pose, &pts).unwrap(), pts);
    }

    #[test]
    fn pure_translation() {
        let pose = RigidTransform::new(m_identity(), [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(se3_apply(&pose, &[[0.0; 3]]).unwrap()[0], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn non_finite_points_rejected() {
        let pose = RigidTransform::identity();
        assert!(se3_apply(&pose, &[[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn apply_matches_homogeneous_matrix_oracle() {
        let mut prng = Prng::new(17);
        for _ in 0..20 {
            let pose = random_pose(&mut prng);
            let pts: Vec<Vec3> = (0..10)
                .map(|_| {
                    [
                        prng.uniform_in(-3.0, 3.0),
                        prng.uniform_in(-3.0, 3.0),
                        prng.uniform_in(-3.0, 3.0),
                    ]
                })
                .collect();
            let got = se3_apply(&pose, &pts).unwrap();
            // independent oracle: 4x4 homogeneous matrix product
            for (p, q) in pts.iter().zip(&got) {
                let mut h = [[0.0; 4]; 4];
                for i in 0..3 {
                    for j in 0..3 {
                        h[i][j] = pose.rotation[i][j];
                    }
                    h[i][3] = pose.translation[i];
                }
                h[3][3] = 1.0;
                let hp = [p[0], p[1], p[2], 1.0];
                let mut expect = [0.0; 3];
                for i in 0..3 {
                    expect[i] = (0..4).map(|j| h[i][j] * hp[j]).sum();
                }
                for k in 0..3 {
                    assert!((q[k] - expect[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        let mut prng = Prng::new(5);
        for _ in 0..50 {
            let pose = random_pose(&mut prng);
            let inv = se3_inverse(&pose);
            inv.validate().unwrap();
            let p = [
                prng.uniform_in(-2.0, 2.0),
                prng.uniform_in(-2.0, 2.0),
                prng.uniform_in(-2.0, 2.0),
            ];
            let rt = inv.apply_point(pose.apply_point(p));
            for k in 0..3 {
                assert!((rt[k] - p[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_of_identity_and_translation() {
        let id = RigidTransform::identity();
        assert_eq!(se3_inverse(&id), id);
        let t = RigidTransform::new(m_identity(), [0.3, -0.7, 1.1]).unwrap();
        let inv = se3_inverse(&t);
        assert_eq!(inv.rotation, m_identity());
        assert_eq!(inv.translation, [-0.3, 0.7, -1.1]);
    }

    #[test]
    fn composition_preserves_orthonormality() {
        let mut prng = Prng::new(31);
        for _ in 0..50 {
            let a = random_pose(&mut prng);
            let b = random_pose(&mut prng);
            a.compose(&b).validate().unwrap();
        }
    }

    fn one_hand_pose(p: Vec3) -> JointSet {
        let mut positions = vec![[0.0; 3]; NUM_JOINTS];
        positions[0] = p;
        JointSet::all_valid(positions).unwrap()
    }

    #[test]
    fn identity_anchor_full_camera_is_identity() {
        let poses = vec![one_hand_pose([0.2, 0.1, 0.5]); 3];
        let ext = vec![RigidTransform::identity(); 3];
        let out = canonicalize_clip(&poses, &ext, CanonicalMode::FullCamera, [0.0, 0.0, 1.0])
            .unwrap();
        assert_eq!(out.joints[0].positions[0], [0.2, 0.1, 0.5]);
        assert!(!out.degenerate_yaw);
    }

    #[test]
    fn global_rigid_motion_cancels_in_full_camera_mode() {
        let mut prng = Prng::new(71);
        for _ in 0..30 {
            let poses: Vec<JointSet> = (0..4)
                .map(|_| {
                    one_hand_pose([
                        prng.uniform_in(-1.0, 1.0),
                        prng.uniform_in(-1.0, 1.0),
                        prng.uniform_in(-1.0, 1.0),
                    ])
                })
                .collect();
            let exts: Vec<RigidTransform> = (0..4).map(|_| random_pose(&mut prng)).collect();
            let base = canonicalize_clip(&poses, &exts, CanonicalMode::FullCamera, [0.0, 0.0, 1.0])
                .unwrap();

            let g = random_pose(&mut prng);
            let g_inv = se3_inverse(&g);
            let moved_poses: Vec<JointSet> = poses
                .iter()
                .map(|js| JointSet {
                    positions: js.positions.iter().map(|&p| g.apply_point(p)).collect(),
                    valid: js.valid.clone(),
                })
                .collect();
            let moved_exts: Vec<RigidTransform> = exts.iter().map(|e| e.compose(&g_inv)).collect();
            let moved = canonicalize_clip(
                &moved_poses,
                &moved_exts,
                CanonicalMode::FullCamera,
                [0.0, 0.0, 1.0],
            )
            .unwrap();

            for (a, b) in base.joints.iter().zip(&moved.joints) {
                for (p, q) in a.positions.iter().zip(&b.positions) {
                    for k in 0..3 {
                        assert!((p[k] - q[k]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn yaw_only_quarter_turn_hand_worked() {
        // Camera at the origin, yawed 90 degrees: forward axis is world +x.
        // The yaw that aligns forward with the canonical heading (+x for
        // up = +z) is zero... so instead yaw the camera so its forward is +y;
        // aligning +y to +x is a -90 degree rotation about +z, mapping
        // world (1, 0, 0) to (0, -1, 0) with z preserved.
        let up = [0.0, 0.0, 1.0];
        // camera frame: right = +x(world), down = -z, forward = +y
        let rot: Mat3 = [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        let ext = RigidTransform::new(rot, [0.0; 3]).unwrap();
        let poses = vec![one_hand_pose([1.0, 0.0, 0.0])];
        let out = canonicalize_clip(&poses, &[ext], CanonicalMode::YawOnly, up).unwrap();
        let p = out.joints[0].positions[0];
        assert!((p[0] - 0.0).abs() < 1e-12, "{p:?}");
        assert!((p[1] - -1.0).abs() < 1e-12, "{p:?}");
        assert!((p[2] - 0.0).abs() < 1e-12, "{p:?}");
        assert!(!out.degenerate_yaw);
    }

    #[test]
    fn yaw_only_degenerate_forward_flags_clip() {
        // Forward axis straight up: horizontal projection vanishes.
        let rot: Mat3 = [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        // rotate camera so forward becomes +z: compose with a pitch
        let pitch = rotation_about_axis([1.0, 0.0, 0.0], -std::f64::consts::FRAC_PI_2);
        let r = m_mul_m(&rot, &pitch);
        let ext = RigidTransform::from_parts(r, [0.0; 3]);
        let fwd = ext.forward_axis();
        assert!(fwd[2].abs() > 0.999, "forward {fwd:?}");
        let poses = vec![one_hand_pose([1.0, 0.0, 0.0])];
        let out =
            canonicalize_clip(&poses, &[ext], CanonicalMode::YawOnly, [0.0, 0.0, 1.0]).unwrap();
        assert!(out.degenerate_yaw);
    }

    #[test]
    fn yaw_only_preserves_up_component_of_offsets() {
        let mut prng = Prng::new(97);
        let up = [0.0, 0.0, 1.0];
        for _ in 0..30 {
            let mut positions = vec![[0.0; 3]; NUM_JOINTS];
            for p in positions.iter_mut() {
                *p = [
                    prng.uniform_in(-1.0, 1.0),
                    prng.uniform_in(-1.0, 1.0),
                    prng.uniform_in(-1.0, 1.0),
                ];
            }
            let js = JointSet::all_valid(positions).unwrap();
            let ext = random_pose(&mut prng);
            let out =
                canonicalize_clip(&[js.clone()], &[ext], CanonicalMode::YawOnly, up).unwrap();
            for j in 0..NUM_JOINTS {
                let w = JointSet::wrist_of(j);
                let before = v_dot(v_sub(js.positions[j], js.positions[w]), up);
                let after = v_dot(
                    v_sub(out.joints[0].positions[j], out.joints[0].positions[w]),
                    up,
                );
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn principal_point_projection() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 112.0, 112.0).unwrap();
        let mut positions = vec![[0.0, 0.0, 1.0]; NUM_JOINTS];
        positions[1] = [0.5, 0.0, 1.0];
        positions[2] = [0.0, 0.0, -1.0];
        let js = JointSet::all_valid(positions).unwrap();
        let proj = project_to_image(&js, &intr, &RigidTransform::identity());
        assert_eq!(proj.pixels[0], [112.0, 112.0]);
        assert_eq!(proj.pixels[1][0], 162.0);
        assert!(!proj.in_front[2]);
        assert!(proj.in_front[0]);
    }

    #[test]
    fn egomotion_static_camera_is_zero() {
        let ext = vec![RigidTransform::identity(); 5];
        assert_eq!(egomotion_score(&ext), 0.0);
    }

    #[test]
    fn egomotion_pure_translation_sums_deltas() {
        let ext: Vec<RigidTransform> = (0..5)
            .map(|i| RigidTransform::from_parts(m_identity(), [0.1 * i as f64, 0.0, 0.0]))
            .collect();
        assert!((egomotion_score(&ext) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn egomotion_invariant_to_shared_left_composition() {
        let mut prng = Prng::new(13);
        for _ in 0..20 {
            let exts: Vec<RigidTransform> = (0..6).map(|_| random_pose(&mut prng)).collect();
            let f = random_pose(&mut prng);
            let composed: Vec<RigidTransform> = exts.iter().map(|e| f.compose(e)).collect();
            assert!((egomotion_score(&exts) - egomotion_score(&composed)).abs() < 1e-9);
        }
    }

    #[test]
    fn egomotion_additive_over_concatenation() {
        let mut prng = Prng::new(29);
        let exts: Vec<RigidTransform> = (0..9).map(|_| random_pose(&mut prng)).collect();
        let total = egomotion_score(&exts);
        let a = egomotion_score(&exts[..5]);
        let b = egomotion_score(&exts[4..]);
        assert!((total - (a + b)).abs() < 1e-9);
    }
}
