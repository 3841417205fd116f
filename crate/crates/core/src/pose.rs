//! Rigid poses, the training-pair sampling distributions, the label codec and
//! pose error metrics.
//!
//! Internally everything is meters and radians. Millimeters and degrees only
//! appear in [`PoseDelta`], the label codec and reported errors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::rng;

/// Object-in-camera rigid transform: `x_cam = rotation · x_obj + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Mat3,
    /// Meters.
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        RigidPose::IDENTITY
    }
}

impl RigidPose {
    pub const IDENTITY: RigidPose = RigidPose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    /// Validating constructor: the rotation must be orthonormal with det +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let pose = RigidPose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_translation(t: Vec3) -> Self {
        RigidPose {
            rotation: Mat3::IDENTITY,
            translation: t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.translation.is_finite() || self.rotation.0.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose has non-finite entries"));
        }
        let ortho = self.rotation.orthonormality_error();
        let det = self.rotation.det();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "rotation not in SO(3): |RᵀR−I| = {ortho:e}, det = {det}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Depth of the object origin in the camera frame.
    pub fn depth(&self) -> f64 {
        self.translation.z()
    }
}

/// Six-DOF displacement: translation in millimeters and intrinsic XYZ Euler
/// angles in degrees, both expressed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseDelta {
    pub t_mm: [f64; 3],
    pub r_deg: [f64; 3],
}

impl PoseDelta {
    pub const IDENTITY: PoseDelta = PoseDelta {
        t_mm: [0.0; 3],
        r_deg: [0.0; 3],
    };

    pub fn new(t_mm: [f64; 3], r_deg: [f64; 3]) -> Self {
        PoseDelta { t_mm, r_deg }
    }

    pub fn as_array(&self) -> [f64; 6] {
        let [a, b, c] = self.t_mm;
        let [d, e, f] = self.r_deg;
        [a, b, c, d, e, f]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        PoseDelta {
            t_mm: [v[0], v[1], v[2]],
            r_deg: [v[3], v[4], v[5]],
        }
    }

    pub fn rotation(&self) -> Mat3 {
        euler_to_matrix(self.r_deg)
    }

    pub fn translation_m(&self) -> Vec3 {
        Vec3(self.t_mm) * 1e-3
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Delta whose effect equals applying `first` then `self`.
    pub fn after(&self, first: &PoseDelta) -> PoseDelta {
        let r = self.rotation() * first.rotation();
        let t = Vec3(first.t_mm) + Vec3(self.t_mm);
        PoseDelta {
            t_mm: t.0,
            r_deg: matrix_to_euler(&r),
        }
    }
}

/// Six components scaled to `[-1, 1]`: translation first, then rotation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Label6(pub [f64; 6]);

/// Half-widths of the delta distribution, which also fix the label scaling.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeltaRange {
    pub t_max_mm: f64,
    pub r_max_deg: f64,
}

impl Default for DeltaRange {
    fn default() -> Self {
        DeltaRange {
            t_max_mm: 20.0,
            r_max_deg: 10.0,
        }
    }
}

impl DeltaRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max_mm >= 0.0 && self.r_max_deg >= 0.0) || !self.t_max_mm.is_finite() || !self.r_max_deg.is_finite() {
            return Err(Error::invalid(format!("delta range must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> DeltaRange {
        DeltaRange {
            t_max_mm: self.t_max_mm * s,
            r_max_deg: self.r_max_deg * s,
        }
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid("principal point outside the image"));
        }
        Ok(())
    }

    /// Kinect-v2-like depth camera (fx = fy = 365 at 512×424), rescaled to
    /// `width` while keeping the 512:424 aspect.
    pub fn kinect_like(width: usize) -> Self {
        let s = width as f64 / 512.0;
        let height = ((424.0 * s).round() as usize).max(1);
        CameraIntrinsics {
            fx: 365.0 * s,
            fy: 365.0 * s,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    #[inline]
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        (self.fx * p.x() / p.z() + self.cx, self.fy * p.y() / p.z() + self.cy)
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics::kinect_like(512)
    }
}

/// Raw spherical parameters behind one observed-pose draw (radians / meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSample {
    pub theta: f64,
    pub phi: f64,
    pub roll: f64,
    pub radius: f64,
}

impl SphereSample {
    /// Unit vector from the object toward the camera.
    pub fn direction(&self) -> Vec3 {
        let (sp, cp) = self.phi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        Vec3::new(sp * ct, sp * st, cp)
    }
}

/// Polar angle for a uniform variate `x ∈ [0,1]`, giving area-uniform
/// directions on the sphere.
#[inline]
pub fn polar_from_uniform(x: f64) -> f64 {
    (2.0 * x - 1.0).clamp(-1.0, 1.0).acos()
}

pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, radius_range: (f64, f64)) -> Result<SphereSample> {
    let (lo, hi) = radius_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!("radius range must satisfy 0 < low < high, got {radius_range:?}")));
    }
    let theta = rng::symmetric(rng, std::f64::consts::PI);
    let x: f64 = rng.random();
    let phi = polar_from_uniform(x);
    let roll = rng::symmetric(rng, std::f64::consts::PI);
    let radius = rng::uniform(rng, lo, hi);
    Ok(SphereSample {
        theta,
        phi,
        roll,
        radius,
    })
}

/// Unit direction uniform on the sphere, drawn with the same construction as
/// the camera position.
pub fn sample_unit_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let theta = rng::symmetric(rng, std::f64::consts::PI);
    let x: f64 = rng.random();
    SphereSample {
        theta,
        phi: polar_from_uniform(x),
        roll: 0.0,
        radius: 1.0,
    }
    .direction()
}

/// Object pose seen from a camera on the sphere looking at the origin, with
/// the roll applied about the optical axis after the look-at.
pub fn pose_from_sphere(s: &SphereSample) -> RigidPose {
    let dir = s.direction();
    let forward = -dir;
    let up = if forward.z().abs() > 0.999 {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let x_axis = forward.cross(&up).normalized();
    let y_axis = forward.cross(&x_axis);
    let look = Mat3::from_rows(x_axis, y_axis, forward);
    let rotation = Mat3::rot_z(s.roll) * look;
    RigidPose {
        rotation,
        translation: Vec3::new(0.0, 0.0, s.radius),
    }
}

pub fn sample_observed_pose<R: Rng + ?Sized>(rng: &mut R, radius_range: (f64, f64)) -> Result<RigidPose> {
    Ok(pose_from_sphere(&sample_sphere(rng, radius_range)?))
}

pub fn sample_pose_delta<R: Rng + ?Sized>(rng: &mut R, range: &DeltaRange) -> Result<PoseDelta> {
    range.validate()?;
    let mut v = [0.0; 6];
    for (i, c) in v.iter_mut().enumerate() {
        let a = if i < 3 { range.t_max_mm } else { range.r_max_deg };
        *c = rng::symmetric(rng, a);
    }
    Ok(PoseDelta::from_array(v))
}

/// Rotates the object about its own center by the delta rotation, then
/// translates it, both in camera coordinates.
pub fn apply_delta(p: &RigidPose, d: &PoseDelta) -> RigidPose {
    RigidPose {
        rotation: d.rotation() * p.rotation,
        translation: p.translation + d.translation_m(),
    }
}

pub fn invert_delta(d: &PoseDelta) -> PoseDelta {
    let r = d.rotation().transpose();
    PoseDelta {
        t_mm: [-d.t_mm[0], -d.t_mm[1], -d.t_mm[2]],
        r_deg: matrix_to_euler(&r),
    }
}

/// The delta `d` with `apply_delta(from, d) == to`.
pub fn delta_between(from: &RigidPose, to: &RigidPose) -> PoseDelta {
    let r = to.rotation * from.rotation.transpose();
    let t = (to.translation - from.translation) * 1e3;
    PoseDelta {
        t_mm: t.0,
        r_deg: matrix_to_euler(&r),
    }
}

pub fn encode_label(d: &PoseDelta, range: &DeltaRange) -> Result<Label6> {
    range.validate()?;
    let mut y = [0.0; 6];
    for (i, (out, v)) in y.iter_mut().zip(d.as_array()).enumerate() {
        let m = if i < 3 { range.t_max_mm } else { range.r_max_deg };
        // Tiny slack absorbs Euler roundtrip error at the range boundary.
        if !v.is_finite() || v.abs() > m * (1.0 + 1e-9) {
            return Err(Error::OutOfRange(format!("delta component {i} = {v} exceeds ±{m}")));
        }
        *out = if m == 0.0 { 0.0 } else { (v / m).clamp(-1.0, 1.0) };
    }
    Ok(Label6(y))
}

pub fn decode_label(y: &Label6, range: &DeltaRange) -> PoseDelta {
    let mut v = [0.0; 6];
    for (i, (out, c)) in v.iter_mut().zip(y.0).enumerate() {
        let m = if i < 3 { range.t_max_mm } else { range.r_max_deg };
        let c = if c.is_nan() { 0.0 } else { c.clamp(-1.0, 1.0) };
        *out = c * m;
    }
    PoseDelta::from_array(v)
}

/// Intrinsic X-then-Y-then-Z Euler angles (degrees): `R = Rx(α)·Ry(β)·Rz(γ)`.
pub fn euler_to_matrix(r_deg: [f64; 3]) -> Mat3 {
    let [a, b, c] = r_deg.map(f64::to_radians);
    Mat3::rot_x(a) * Mat3::rot_y(b) * Mat3::rot_z(c)
}

/// Inverse of [`euler_to_matrix`] with `β ∈ [−90°, 90°]`. At gimbal lock
/// (`|cos β| < 1e-9`) the decomposition is canonicalized with `γ = 0`.
pub fn matrix_to_euler(m: &Mat3) -> [f64; 3] {
    let r = &m.0;
    let sb = r[0][2].clamp(-1.0, 1.0);
    let b = sb.asin();
    let cb = (r[0][0] * r[0][0] + r[0][1] * r[0][1]).sqrt();
    let (a, c) = if cb < 1e-9 {
        (r[2][1].atan2(r[1][1]), 0.0)
    } else {
        ((-r[1][2]).atan2(r[2][2]), (-r[0][1]).atan2(r[0][0]))
    };
    [a.to_degrees(), b.to_degrees(), c.to_degrees()]
}

/// Geodesic angle of `Raᵀ·Rb` in radians.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a.transpose() * *b;
    ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseError {
    pub translation_mm: f64,
    pub rotation_deg: f64,
    pub center_distance_mm: f64,
}

pub fn pose_error(a: &RigidPose, b: &RigidPose) -> PoseError {
    let t = (a.translation - b.translation).norm() * 1e3;
    let center = (a.transform_point(Vec3::ZERO) - b.transform_point(Vec3::ZERO)).norm() * 1e3;
    PoseError {
        translation_mm: t,
        rotation_deg: rotation_angle_between(&a.rotation, &b.rotation).to_degrees(),
        center_distance_mm: center,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    fn random_pose(rng: &mut impl rand::Rng) -> RigidPose {
        let mut p = sample_observed_pose(rng, (0.4, 1.5)).unwrap();
        p.translation += Vec3::new(rng::symmetric(rng, 0.1), rng::symmetric(rng, 0.1), 0.0);
        p
    }

    fn quat_rotate(axis: Vec3, angle: f64, v: Vec3) -> Vec3 {
        // q v q* with q = (cos θ/2, sin θ/2 · axis)
        let (s, w) = (angle / 2.0).sin_cos();
        let q = axis.normalized() * s;
        let t = q.cross(&v) * 2.0;
        v + t * w + q.cross(&t)
    }

    #[test]
    fn polar_angle_endpoints() {
        assert!((polar_from_uniform(0.5).to_degrees() - 90.0).abs() < 1e-12);
        assert_eq!(polar_from_uniform(1.0), 0.0);
    }

    #[test]
    fn observed_pose_is_centered_at_radius() {
        let mut rng = stream(3, Domain::Misc, 0);
        for _ in 0..200 {
            let s = sample_sphere(&mut rng, (0.4, 1.5)).unwrap();
            let p = pose_from_sphere(&s);
            p.validate().unwrap();
            assert_eq!(p.translation, Vec3::new(0.0, 0.0, s.radius));
            assert!((0.4..1.5).contains(&s.radius));
            // the camera position expressed in object frame lies along the sampled direction
            let cam_in_obj = p.inverse().translation;
            assert!((cam_in_obj - s.direction() * s.radius).norm() < 1e-9);
        }
    }

    #[test]
    fn invalid_radius_range_is_rejected() {
        let mut rng = stream(3, Domain::Misc, 0);
        assert!(sample_observed_pose(&mut rng, (1.0, 0.5)).is_err());
        assert!(sample_observed_pose(&mut rng, (0.0, 0.5)).is_err());
    }

    #[test]
    fn pole_directions_still_give_valid_poses() {
        for phi in [0.0, std::f64::consts::PI] {
            let p = pose_from_sphere(&SphereSample {
                theta: 0.3,
                phi,
                roll: 1.0,
                radius: 1.0,
            });
            p.validate().unwrap();
        }
    }

    #[test]
    fn delta_sampler_respects_defaults_and_zero_range() {
        let mut rng = stream(4, Domain::Misc, 0);
        let range = DeltaRange::default();
        for _ in 0..10_000 {
            let d = sample_pose_delta(&mut rng, &range).unwrap();
            assert!(d.t_mm.iter().all(|v| v.abs() <= 20.0));
            assert!(d.r_deg.iter().all(|v| v.abs() <= 10.0));
        }
        let zero = DeltaRange {
            t_max_mm: 0.0,
            r_max_deg: 0.0,
        };
        assert_eq!(sample_pose_delta(&mut rng, &zero).unwrap(), PoseDelta::IDENTITY);
    }

    #[test]
    fn identity_delta_leaves_pose() {
        let p = random_pose(&mut stream(5, Domain::Misc, 0));
        let q = apply_delta(&p, &PoseDelta::IDENTITY);
        assert!(q.rotation.max_abs_diff(&p.rotation) < 1e-15);
        assert_eq!(q.translation, p.translation);
    }

    #[test]
    fn pure_translation_delta() {
        let p = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let q = apply_delta(&p, &PoseDelta::new([0.0, 0.0, 20.0], [0.0; 3]));
        assert!((q.translation.z() - 1.020).abs() < 1e-12);
    }

    #[test]
    fn delta_inverse_and_composition_laws() {
        let mut rng = stream(6, Domain::Misc, 0);
        let range = DeltaRange::default();
        for _ in 0..1000 {
            let p = random_pose(&mut rng);
            let d1 = sample_pose_delta(&mut rng, &range).unwrap();
            let d2 = sample_pose_delta(&mut rng, &range).unwrap();
            let back = apply_delta(&apply_delta(&p, &d1), &invert_delta(&d1));
            assert!(back.rotation.max_abs_diff(&p.rotation) < 1e-9);
            assert!((back.translation - p.translation).norm() < 1e-9);

            let seq = apply_delta(&apply_delta(&p, &d1), &d2);
            let composed = apply_delta(&p, &d2.after(&d1));
            assert!(seq.rotation.max_abs_diff(&composed.rotation) < 1e-9);
            assert!((seq.translation - composed.translation).norm() < 1e-9);

            let recovered = delta_between(&p, &apply_delta(&p, &d1));
            for (a, b) in recovered.as_array().iter().zip(d1.as_array()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn label_endpoints_and_roundtrip() {
        let range = DeltaRange::default();
        assert_eq!(encode_label(&PoseDelta::IDENTITY, &range).unwrap().0, [0.0; 6]);
        let y = encode_label(&PoseDelta::new([20.0, 0.0, 0.0], [0.0; 3]), &range).unwrap();
        assert_eq!(y.0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut rng = stream(7, Domain::Misc, 0);
        for _ in 0..1000 {
            let d = sample_pose_delta(&mut rng, &range).unwrap();
            let back = decode_label(&encode_label(&d, &range).unwrap(), &range);
            for (a, b) in back.as_array().iter().zip(d.as_array()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn encode_rejects_out_of_range_and_decode_clamps() {
        let range = DeltaRange::default();
        assert!(matches!(
            encode_label(&PoseDelta::new([25.0, 0.0, 0.0], [0.0; 3]), &range),
            Err(Error::OutOfRange(_))
        ));
        let d = decode_label(&Label6([2.0, -3.0, 0.5, 0.0, 0.0, -1.5]), &range);
        assert_eq!(d.as_array(), [20.0, -20.0, 10.0, 0.0, 0.0, -10.0]);
    }

    #[test]
    fn euler_zero_is_identity() {
        assert_eq!(euler_to_matrix([0.0; 3]), Mat3::IDENTITY);
    }

    #[test]
    fn euler_quarter_turn_about_y_matches_quaternion() {
        let m = euler_to_matrix([0.0, 90.0, 0.0]);
        let z = Vec3::new(0.0, 0.0, 1.0);
        let oracle = quat_rotate(Vec3::new(0.0, 1.0, 0.0), std::f64::consts::FRAC_PI_2, z);
        assert!((m * z - oracle).norm() < 1e-12);
        assert!((m * z - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn euler_composition_matches_quaternion_oracle() {
        let mut rng = stream(8, Domain::Misc, 0);
        for _ in 0..200 {
            let r = [rng::symmetric(&mut rng, 170.0), rng::symmetric(&mut rng, 85.0), rng::symmetric(&mut rng, 170.0)];
            let m = euler_to_matrix(r);
            let v = Vec3::new(0.3, -0.7, 0.2);
            // intrinsic XYZ == extrinsic ZYX: rotate about z first, then y, then x
            let mut w = quat_rotate(Vec3::new(0.0, 0.0, 1.0), r[2].to_radians(), v);
            w = quat_rotate(Vec3::new(0.0, 1.0, 0.0), r[1].to_radians(), w);
            w = quat_rotate(Vec3::new(1.0, 0.0, 0.0), r[0].to_radians(), w);
            assert!((m * v - w).norm() < 1e-12);
        }
    }

    #[test]
    fn euler_roundtrip_away_from_gimbal_lock() {
        let mut rng = stream(9, Domain::Misc, 0);
        for _ in 0..1000 {
            let r = [rng::symmetric(&mut rng, 179.0), rng::symmetric(&mut rng, 80.0), rng::symmetric(&mut rng, 179.0)];
            let back = matrix_to_euler(&euler_to_matrix(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-9, "{r:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn gimbal_lock_canonicalizes_gamma() {
        let m = euler_to_matrix([30.0, 90.0, 20.0]);
        let e = matrix_to_euler(&m);
        assert_eq!(e[2], 0.0);
        assert!((e[1] - 90.0).abs() < 1e-6);
        assert!(euler_to_matrix(e).max_abs_diff(&m) < 1e-6);
    }

    #[test]
    fn pose_error_examples() {
        let a = random_pose(&mut stream(10, Domain::Misc, 0));
        assert_eq!(pose_error(&a, &a).translation_mm, 0.0);
        assert!(pose_error(&a, &a).rotation_deg < 1e-6);

        let mut b = a;
        b.translation += Vec3::new(0.005, 0.0, 0.0);
        let e = pose_error(&a, &b);
        assert!((e.translation_mm - 5.0).abs() < 1e-9);
        assert!((e.center_distance_mm - 5.0).abs() < 1e-9);
        assert!(e.rotation_deg < 1e-6);

        let mut c = a;
        c.rotation = Mat3::rot_z(std::f64::consts::PI) * a.rotation;
        assert!((pose_error(&a, &c).rotation_deg - 180.0).abs() < 1e-6);
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let mut m = Mat3::IDENTITY;
        m.0[0][0] = 1.01;
        assert!(RigidPose::new(m, Vec3::ZERO).is_err());
        let mut flip = Mat3::IDENTITY;
        flip.0[2][2] = -1.0;
        assert!(RigidPose::new(flip, Vec3::ZERO).is_err());
    }

    proptest! {
        #[test]
        fn pose_error_is_symmetric(s1 in 0u64..10_000, s2 in 0u64..10_000) {
            let a = random_pose(&mut stream(s1, Domain::Misc, 1));
            let b = random_pose(&mut stream(s2, Domain::Misc, 2));
            let ab = pose_error(&a, &b);
            let ba = pose_error(&b, &a);
            prop_assert!((ab.translation_mm - ba.translation_mm).abs() < 1e-9);
            prop_assert!((ab.rotation_deg - ba.rotation_deg).abs() < 1e-6);
        }

        #[test]
        fn decode_then_encode_is_identity(y in proptest::array::uniform6(-1.0f64..=1.0)) {
            let range = DeltaRange::default();
            let back = encode_label(&decode_label(&Label6(y), &range), &range).unwrap();
            for (a, b) in back.0.iter().zip(y) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
