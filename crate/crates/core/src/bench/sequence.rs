use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::add_gaussian_noise;
use crate::datagen::augment::hsv_to_rgb;
use crate::error::{create_output, Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::pose::{apply_delta, sample_observed_pose, sample_unit_direction, CameraIntrinsics, PoseDelta, RigidPose};
use crate::raster::{composite_into, draw_mesh, mesh, render_rgbd, Lighting, Material, RgbdFrame, TriMesh, Window};
use crate::rng::{self, stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Handheld,
    Turntable,
}

/// Long axis of the occluder bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Vertical,
    Horizontal,
}

impl Orientation {
    pub fn name(&self) -> &'static str {
        match self {
            Orientation::Vertical => "vertical",
            Orientation::Horizontal => "horizontal",
        }
    }
}

pub const MAX_OCCLUSION: f64 = 0.6;
const OCCLUSION_TOLERANCE: f64 = 0.01;
/// Small roll of the bar so its edge crosses pixel centers gradually.
const BAR_TILT_DEG: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    /// Target fraction of the object's silhouette hidden on frame 0.
    pub occlusion: f64,
    pub orientation: Orientation,
    pub frames: usize,
    pub seed: u64,
    /// Camera distance of the object center (m).
    pub distance_m: f64,
    /// Sensor noise in 8-bit units.
    pub noise_sigma: f64,
    /// Per-component bound of the handheld per-frame motion.
    pub max_step_mm: f64,
    pub max_step_deg: f64,
    pub turntable_deg_per_frame: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            kind: SequenceKind::Handheld,
            occlusion: 0.0,
            orientation: Orientation::Vertical,
            frames: 100,
            seed: 0,
            distance_m: 0.8,
            noise_sigma: 1.0,
            max_step_mm: 10.0,
            max_step_deg: 5.0,
            turntable_deg_per_frame: 2.0,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_OCCLUSION).contains(&self.occlusion) {
            return Err(Error::config("occlusion", format!("must be in [0, {MAX_OCCLUSION}]")));
        }
        if self.frames < 2 {
            return Err(Error::config("frames", "need at least 2 frames"));
        }
        if !(self.distance_m > 0.1 && self.distance_m.is_finite()) {
            return Err(Error::config("distance_m", "must exceed 0.1 m"));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("max_step_mm", self.max_step_mm),
            ("max_step_deg", self.max_step_deg),
            ("turntable_deg_per_frame", self.turntable_deg_per_frame),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFrame {
    pub pose: RigidPose,
    pub frame: RgbdFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Occluder {
    pub mesh: TriMesh,
    pub pose: RigidPose,
    /// Hidden silhouette fraction measured on frame 0.
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub spec: SequenceSpec,
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<SequenceFrame>,
    pub occluder: Option<Occluder>,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn poses(&self) -> Vec<RigidPose> {
        self.frames.iter().map(|f| f.pose).collect()
    }
}

/// Fraction of `object` pixels (depth > 0) hidden by a nearer `occluder` pixel.
pub fn occluded_fraction(object: &RgbdFrame, occluder: &RgbdFrame) -> f64 {
    let (mut total, mut hidden) = (0usize, 0usize);
    for (o, c) in object.depth().iter().zip(occluder.depth()) {
        if *o > 0.0 {
            total += 1;
            if *c > 0.0 && c < o {
                hidden += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hidden as f64 / total as f64
    }
}

fn bar_mesh(radius: f64, orientation: Orientation) -> TriMesh {
    let (long, across, thick) = (3.0 * radius, 1.2 * radius, 0.15 * radius);
    let half = match orientation {
        Orientation::Vertical => Vec3::new(across, long, thick),
        Orientation::Horizontal => Vec3::new(long, across, thick),
    };
    mesh::textured_box(half, crate::raster::Texture::solid([0.7, 0.7, 0.7]))
}

fn bar_pose(center: Vec3, radius: f64, orientation: Orientation, offset: f64) -> RigidPose {
    let shift = match orientation {
        Orientation::Vertical => Vec3::new(offset, 0.0, 0.0),
        Orientation::Horizontal => Vec3::new(0.0, offset, 0.0),
    };
    RigidPose {
        rotation: Mat3::rot_z(BAR_TILT_DEG.to_radians()),
        translation: center + shift + Vec3::new(0.0, 0.0, -2.5 * radius),
    }
}

/// Places the bar by bisection on its sliding offset so the hidden fraction
/// of the object in `object` hits `target` within one percent.
fn place_occluder(
    object_mesh: &TriMesh,
    object: &RgbdFrame,
    center: Vec3,
    k: &CameraIntrinsics,
    target: f64,
    orientation: Orientation,
) -> Result<Occluder> {
    let r = object_mesh.radius();
    let bar = bar_mesh(r, orientation);
    let light = Lighting::predicted();
    let frac = |o: f64| occluded_fraction(object, &render_rgbd(&bar, &bar_pose(center, r, orientation, o), k, &light));
    let unreachable = |reason: String| Error::OcclusionTarget { target, reason };
    if object.coverage() == 0 {
        return Err(unreachable("object is not visible on frame 0".into()));
    }
    // sliding in from the negative side only ever adds hidden pixels
    let (mut lo, mut hi) = (-5.0 * r, 0.0);
    let (f_lo, f_hi) = (frac(lo), frac(hi));
    if f_lo > target + OCCLUSION_TOLERANCE || f_hi < target - OCCLUSION_TOLERANCE {
        return Err(unreachable(format!("bar covers between {f_lo:.3} and {f_hi:.3}")));
    }
    let mut best = if (f_lo - target).abs() < (f_hi - target).abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..60 {
        if (best.1 - target).abs() <= OCCLUSION_TOLERANCE / 2.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f = frac(mid);
        if (f - target).abs() < (best.1 - target).abs() {
            best = (mid, f);
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() > OCCLUSION_TOLERANCE {
        return Err(unreachable(format!("closest achievable fraction is {:.4}", best.1)));
    }
    Ok(Occluder {
        pose: bar_pose(center, r, orientation, best.0),
        mesh: bar,
        measured: best.1,
    })
}

/// Renders a synthetic benchmark sequence.
///
/// Handheld: the object follows a smooth random walk whose per-frame deltas
/// stay within `max_step_*` per component, pulled back toward the start so
/// it stays in view. Turntable: the object spins about the camera's vertical
/// axis through its center at a fixed rate. Frames use one random light
/// direction, the given background (if any), an optional static occluder
/// bar placed on frame 0, and Gaussian sensor noise.
pub fn synth_sequence(
    object: &TriMesh,
    k: &CameraIntrinsics,
    spec: &SequenceSpec,
    background: Option<&RgbdFrame>,
) -> Result<SyntheticSequence> {
    spec.validate()?;
    if let Some(bg) = background {
        if bg.width() != k.width || bg.height() != k.height {
            return Err(Error::shape("background does not match the camera resolution"));
        }
    }
    let mut rng = stream(spec.seed, Domain::Sequence, 0);
    let start = sample_observed_pose(&mut rng, (spec.distance_m, spec.distance_m + 1e-9))?;
    let center = start.transform_point(object.centroid());
    let light = Lighting::with_direction(sample_unit_direction(&mut rng));
    let occ_color = hsv_to_rgb([rng::uniform(&mut rng, 0.0, 1.0) as f32, 0.5, rng::uniform(&mut rng, 0.3, 0.9) as f32]);

    let mut poses = Vec::with_capacity(spec.frames);
    match spec.kind {
        SequenceKind::Handheld => {
            let max = [
                spec.max_step_mm,
                spec.max_step_mm,
                spec.max_step_mm,
                spec.max_step_deg,
                spec.max_step_deg,
                spec.max_step_deg,
            ];
            let mut v = [0.0f64; 6];
            let mut pose = start;
            poses.push(pose);
            for _ in 1..spec.frames {
                let offset_mm = (pose.transform_point(object.centroid()) - center) * 1e3;
                let off = [offset_mm.x(), offset_mm.y(), offset_mm.z()];
                for i in 0..6 {
                    v[i] = 0.8 * v[i] + 0.2 * rng::symmetric(&mut rng, max[i]);
                    if i < 3 {
                        v[i] -= 0.05 * off[i];
                    }
                    v[i] = v[i].clamp(-max[i], max[i]);
                }
                pose = apply_delta(&pose, &PoseDelta::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]));
                pose.rotation = pose.rotation.orthonormalized();
                poses.push(pose);
            }
        }
        SequenceKind::Turntable => {
            for t in 0..spec.frames {
                let rotation = Mat3::rot_y((spec.turntable_deg_per_frame * t as f64).to_radians()) * start.rotation;
                let rotation = rotation.orthonormalized();
                poses.push(RigidPose {
                    rotation,
                    translation: center - rotation * object.centroid(),
                });
            }
        }
    }

    let first = render_rgbd(object, &poses[0], k, &light);
    let occluder = if spec.occlusion > 0.0 {
        Some(place_occluder(object, &first, center, k, spec.occlusion, spec.orientation)?)
    } else {
        None
    };

    let frames = poses
        .iter()
        .enumerate()
        .map(|(t, pose)| {
            let obj = if t == 0 { first.clone() } else { render_rgbd(object, pose, k, &light) };
            let mut frame = background.cloned().unwrap_or_else(|| RgbdFrame::new(k.width, k.height));
            composite_into(&obj, &mut frame)?;
            if let Some(o) = &occluder {
                let material = Material { albedo: Some(occ_color) };
                draw_mesh(&mut frame, Window::full(k), &o.mesh, &o.pose, k, &light, &material);
            }
            if spec.noise_sigma > 0.0 {
                add_gaussian_noise(&mut frame, spec.noise_sigma, &mut stream(spec.seed, Domain::Sequence, 1 + t as u64));
            }
            Ok(SequenceFrame { pose: *pose, frame })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSequence {
        spec: spec.clone(),
        intrinsics: *k,
        frames,
        occluder,
    })
}

fn pose_row(out: &mut String, t: usize, p: &RigidPose) {
    let _ = write!(out, "{t}");
    for row in p.rotation.0 {
        for v in row {
            let _ = write!(out, ",{v:.17e}");
        }
    }
    for v in p.translation.0 {
        let _ = write!(out, ",{v:.17e}");
    }
    out.push('\n');
}

pub const POSE_CSV_HEADER: &str = "frame,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz";

/// Pose trajectory CSV (row-major rotation, translation in meters).
pub fn poses_to_csv(poses: &[RigidPose]) -> String {
    let mut out = format!("{POSE_CSV_HEADER}\n");
    for (t, p) in poses.iter().enumerate() {
        pose_row(&mut out, t, p);
    }
    out
}

pub fn poses_from_csv(text: &str) -> Result<Vec<RigidPose>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(POSE_CSV_HEADER) {
        return Err(Error::format("pose CSV header mismatch"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(format!("pose row {i}: {e}")))?;
            if v.len() != 12 {
                return Err(Error::format(format!("pose row {i} has {} values, expected 12", v.len())));
            }
            let rotation = Mat3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]);
            RigidPose::new(rotation.orthonormalized(), Vec3::new(v[9], v[10], v[11]))
        })
        .collect()
}

/// Writes the frames as `NNNNN_color.png` / `NNNNN_depth.png` pairs plus
/// `poses.csv` into an existing empty-or-new directory.
pub fn write_sequence_dir(seq: &SyntheticSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = create_output(&dir.join("poses.csv"))?;
    std::io::Write::write_all(&mut f, poses_to_csv(&seq.poses()).as_bytes())?;
    for (t, fr) in seq.frames.iter().enumerate() {
        let (c, d) = (dir.join(format!("{t:05}_color.png")), dir.join(format!("{t:05}_depth.png")));
        for p in [&c, &d] {
            if p.exists() {
                return Err(Error::OutputExists(p.clone()));
            }
        }
        fr.frame.write_png_pair(&c, &d)?;
    }
    Ok(())
}

/// Reads a directory written by [`write_sequence_dir`] (or captured in the
/// same layout); `poses.csv` supplies ground truth.
pub fn read_sequence_dir(dir: &Path) -> Result<Vec<SequenceFrame>> {
    let poses = poses_from_csv(&std::fs::read_to_string(dir.join("poses.csv"))?)?;
    poses
        .into_iter()
        .enumerate()
        .map(|(t, pose)| {
            let frame = RgbdFrame::read_png_pair(
                &dir.join(format!("{t:05}_color.png")),
                &dir.join(format!("{t:05}_depth.png")),
            )?;
            Ok(SequenceFrame { pose, frame })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::pose_error;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::kinect_like(320)
    }

    fn spec(kind: SequenceKind, occlusion: f64, orientation: Orientation) -> SequenceSpec {
        SequenceSpec {
            kind,
            occlusion,
            orientation,
            frames: 6,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn no_occluder_at_zero() {
        let s = synth_sequence(&mesh::toy(), &k(), &spec(SequenceKind::Turntable, 0.0, Orientation::Vertical), None).unwrap();
        assert!(s.occluder.is_none());
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn occlusion_hits_target_by_pixel_count() {
        let m = mesh::toy();
        for (level, o) in [(0.4, Orientation::Vertical), (0.2, Orientation::Horizontal), (0.1, Orientation::Vertical)] {
            let s = synth_sequence(&m, &k(), &spec(SequenceKind::Turntable, level, o), None).unwrap();
            let occ = s.occluder.as_ref().unwrap();
            // independent recount on the noiseless renders
            let obj = render_rgbd(&m, &s.frames[0].pose, &k(), &Lighting::predicted());
            let bar = render_rgbd(&occ.mesh, &occ.pose, &k(), &Lighting::predicted());
            let f = occluded_fraction(&obj, &bar);
            assert!((f - level).abs() <= 0.01, "{level} {o:?}: {f}");
            assert_eq!(f, occ.measured);
        }
    }

    #[test]
    fn unreachable_occlusion_is_an_error() {
        let mut s = spec(SequenceKind::Turntable, 0.4, Orientation::Vertical);
        s.distance_m = 50.0;
        let err = synth_sequence(&mesh::toy(), &k(), &s, None).unwrap_err();
        assert!(matches!(err, Error::OcclusionTarget { .. }), "{err}");
        s.occlusion = 0.7;
        assert!(matches!(synth_sequence(&mesh::toy(), &k(), &s, None), Err(Error::Config { .. })));
    }

    #[test]
    fn handheld_steps_are_bounded_and_reproducible() {
        let mut sp = spec(SequenceKind::Handheld, 0.0, Orientation::Vertical);
        sp.frames = 40;
        let a = synth_sequence(&mesh::toy(), &k(), &sp, None).unwrap();
        let b = synth_sequence(&mesh::toy(), &k(), &sp, None).unwrap();
        assert_eq!(a, b);
        for w in a.frames.windows(2) {
            let d = crate::pose::delta_between(&w[0].pose, &w[1].pose);
            assert!(d.t_mm.iter().all(|v| v.abs() <= 10.0 + 1e-6), "{d:?}");
            assert!(d.r_deg.iter().all(|v| v.abs() <= 5.0 + 1e-6), "{d:?}");
        }
        for f in &a.frames {
            assert!(f.frame.coverage() > 0);
        }
    }

    #[test]
    fn turntable_rate() {
        let s = synth_sequence(&mesh::toy(), &k(), &spec(SequenceKind::Turntable, 0.0, Orientation::Vertical), None).unwrap();
        let e = pose_error(&s.frames[0].pose, &s.frames[1].pose);
        assert!((e.rotation_deg - 2.0).abs() < 1e-6);
        assert!(e.center_distance_mm < 1e-6);
    }

    #[test]
    fn pose_csv_roundtrip_and_sequence_dir() {
        let s = synth_sequence(&mesh::toy(), &k(), &spec(SequenceKind::Handheld, 0.0, Orientation::Vertical), None).unwrap();
        let back = poses_from_csv(&poses_to_csv(&s.poses())).unwrap();
        for (a, b) in back.iter().zip(s.poses()) {
            assert!(pose_error(a, &b).translation_mm < 1e-9);
        }
        let dir = tempfile::tempdir().unwrap();
        write_sequence_dir(&s, dir.path()).unwrap();
        let read = read_sequence_dir(dir.path()).unwrap();
        assert_eq!(read.len(), s.len());
        assert!(write_sequence_dir(&s, dir.path()).is_err());
    }
}
