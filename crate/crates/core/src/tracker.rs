//! Closed tracking loop: render at the current estimate, regress the
//! correction, update the estimate.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::datagen::{crop_geometry, normalize_input, render_predicted};
use crate::error::{Error, Result};
use crate::nn::{Float, Model};
use crate::pose::{apply_delta, decode_label, CameraIntrinsics, Label6, PoseDelta, RigidPose};
use crate::raster::{BBox, RgbdFrame, TriMesh};

/// Wall-clock time per phase of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTiming {
    pub render: Duration,
    pub normalize: Duration,
    pub forward: Duration,
    pub update: Duration,
}

impl PhaseTiming {
    pub fn total(&self) -> Duration {
        self.render + self.normalize + self.forward + self.update
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Crop box in full-image pixels at the pre-step estimate.
    pub bbox: BBox,
    pub raw_y: Label6,
    pub delta: PoseDelta,
    pub timing: PhaseTiming,
}

/// One tracked object. Model and mesh are shared and immutable, so clones
/// are cheap and independent.
#[derive(Debug, Clone)]
pub struct TrackerState<T> {
    model: Arc<Model<T>>,
    mesh: Arc<TriMesh>,
    intrinsics: CameraIntrinsics,
    pose: RigidPose,
    frames: u64,
    renders: u64,
    forwards: u64,
    last: Option<StepDiagnostics>,
}

impl<T: Float> TrackerState<T> {
    pub fn new(model: Arc<Model<T>>, mesh: Arc<TriMesh>, intrinsics: CameraIntrinsics, pose: RigidPose) -> Result<Self> {
        pose.validate()?;
        model.params.validate()?;
        Ok(TrackerState {
            model,
            mesh,
            intrinsics,
            pose,
            frames: 0,
            renders: 0,
            forwards: 0,
            last: None,
        })
    }

    pub fn pose(&self) -> &RigidPose {
        &self.pose
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    /// Completed steps since construction; resets do not rewind it.
    pub fn frame_counter(&self) -> u64 {
        self.frames
    }

    /// Renders and forward passes performed so far.
    pub fn call_counts(&self) -> (u64, u64) {
        (self.renders, self.forwards)
    }

    pub fn last_step(&self) -> Option<&StepDiagnostics> {
        self.last.as_ref()
    }

    /// One render-compare-update cycle against `observed` (a full camera
    /// frame). On error the state is left untouched.
    pub fn step(&mut self, observed: &RgbdFrame) -> Result<&StepDiagnostics> {
        let k = &self.intrinsics;
        if observed.width() != k.width || observed.height() != k.height {
            return Err(Error::shape(format!(
                "observed frame is {}x{}, camera is {}x{}",
                observed.width(),
                observed.height(),
                k.width,
                k.height
            )));
        }
        let m = &*self.model;
        let side = m.params.arch.input_side;
        let t0 = Instant::now();
        let (bbox, window) = crop_geometry(&self.mesh, &self.pose, k, m.bbox_margin)?;
        let pred = render_predicted(&self.mesh, &self.pose, k, window);
        let t1 = Instant::now();
        // both inputs share one crop, exactly as in training
        let local = bbox.relative_to(window.x0, window.y0);
        let z_center = self.pose.transform_point(self.mesh.centroid()).z();
        let obs = observed.crop(window.x0, window.y0, window.width, window.height);
        let x_pred = normalize_input(&pred, &local, &m.stats, z_center, side)?;
        let x_obs = normalize_input(&obs, &local, &m.stats, z_center, side)?;
        let t2 = Instant::now();
        let raw_y = m.predict(&x_pred, &x_obs)?;
        let t3 = Instant::now();
        let delta = decode_label(&raw_y, &m.delta_range);
        let mut next = apply_delta(&self.pose, &delta);
        next.rotation = next.rotation.orthonormalized();
        next.validate()?;
        let t4 = Instant::now();

        self.pose = next;
        self.frames += 1;
        self.renders += 1;
        self.forwards += 1;
        self.last = Some(StepDiagnostics {
            bbox,
            raw_y,
            delta,
            timing: PhaseTiming {
                render: t1 - t0,
                normalize: t2 - t1,
                forward: t3 - t2,
                update: t4 - t3,
            },
        });
        Ok(self.last.as_ref().expect("just set"))
    }

    /// `n` successive steps on the same frame.
    pub fn iterate(&mut self, observed: &RgbdFrame, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::invalid("iteration count must be at least 1"));
        }
        for _ in 0..n {
            self.step(observed)?;
        }
        Ok(())
    }

    /// Replaces the estimate and clears diagnostics. Model and mesh are untouched.
    pub fn reset(&mut self, pose: RigidPose) {
        self.pose = pose;
        self.last = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ChannelStats;
    use crate::geom::Vec3;
    use crate::nn::{ArchConfig, NetworkParams};
    use crate::pose::DeltaRange;
    use crate::raster::{mesh, render_rgbd, Lighting};

    fn state() -> TrackerState<f32> {
        let model = Model {
            params: NetworkParams::init(ArchConfig::reduced(48), 2).unwrap(),
            stats: ChannelStats::new([0.5; 4], [0.25, 0.25, 0.25, 50.0]).unwrap(),
            delta_range: DeltaRange::default(),
            bbox_margin: 0.15,
        };
        let k = CameraIntrinsics::kinect_like(160);
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 0.8));
        TrackerState::new(Arc::new(model), Arc::new(mesh::toy()), k, pose).unwrap()
    }

    fn observed(s: &TrackerState<f32>) -> RgbdFrame {
        render_rgbd(s.mesh(), s.pose(), s.intrinsics(), &Lighting::predicted())
    }

    #[test]
    fn step_counts_one_render_and_one_forward() {
        let mut s = state();
        let obs = observed(&s);
        s.step(&obs).unwrap();
        assert_eq!(s.call_counts(), (1, 1));
        assert_eq!(s.frame_counter(), 1);
        s.iterate(&obs, 3).unwrap();
        assert_eq!(s.call_counts(), (4, 4));
        assert!(s.iterate(&obs, 0).is_err());
    }

    #[test]
    fn update_is_bounded_and_deterministic() {
        let mut a = state();
        let mut b = state();
        let obs = observed(&a);
        let before = *a.pose();
        a.step(&obs).unwrap();
        b.step(&obs).unwrap();
        assert_eq!(a.pose(), b.pose());
        let e = crate::pose::pose_error(&before, a.pose());
        assert!(e.translation_mm <= 3f64.sqrt() * 20.0 + 1e-9);
        assert!(e.rotation_deg <= 3f64.sqrt() * 10.0 + 1e-6);
    }

    #[test]
    fn lost_behind_camera_leaves_state() {
        let mut s = state();
        let obs = observed(&s);
        let behind = RigidPose::from_translation(Vec3::new(0.0, 0.0, -2.0));
        s.reset(behind);
        assert!(matches!(s.step(&obs), Err(Error::TrackingLost(_))));
        assert_eq!(*s.pose(), behind);
        assert_eq!(s.frame_counter(), 0);
    }

    #[test]
    fn reset_replaces_pose_only() {
        let mut s = state();
        let obs = observed(&s);
        s.step(&obs).unwrap();
        let params = s.model().params.clone();
        let p = RigidPose::from_translation(Vec3::new(0.01, 0.02, 0.9));
        s.reset(p);
        assert_eq!(*s.pose(), p);
        assert!(s.last_step().is_none());
        assert_eq!(s.model().params, params);
        assert_eq!(s.frame_counter(), 1);
    }

    #[test]
    fn wrong_frame_size_is_rejected() {
        let mut s = state();
        assert!(matches!(s.step(&RgbdFrame::new(10, 10)), Err(Error::Shape(_))));
    }
}
