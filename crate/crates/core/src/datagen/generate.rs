use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::pose::{
    apply_delta, encode_label, invert_delta, sample_observed_pose, sample_pose_delta, sample_unit_direction,
    CameraIntrinsics, DeltaRange, Label6, PoseDelta, RigidPose,
};
use crate::raster::mesh;
use crate::raster::{
    composite_into, draw_mesh, projected_bbox, render_window, BBox, Lighting, Material, RgbdFrame, TriMesh, Window,
};
use crate::rng::{self, stream, Domain, Stream};

use super::augment::{add_gaussian_noise, hsv_to_rgb, mean_blur3, perturb_color, AugmentConfig, AugmentFlags};
use super::normalize::{compute_channel_stats, crop_resize, standardize, ChannelStats, NormalizedInput};

/// Pixels of padding around the crop box when rendering a window.
pub const WINDOW_PAD: i64 = 2;

/// Training pair generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub input_side: usize,
    /// Camera distance range of observed poses (meters).
    pub radius_range: (f64, f64),
    pub delta_range: DeltaRange,
    pub bbox_margin: f64,
    pub augment: AugmentConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            input_side: 150,
            radius_range: (0.4, 1.5),
            delta_range: DeltaRange::default(),
            bbox_margin: 0.15,
            augment: AugmentConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_side < 8 {
            return Err(Error::invalid(format!("input side {} is too small", self.input_side)));
        }
        let (lo, hi) = self.radius_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(format!("invalid radius range ({lo}, {hi})")));
        }
        if !(self.bbox_margin >= 0.0 && self.bbox_margin.is_finite()) {
            return Err(Error::invalid("bbox margin must be non-negative"));
        }
        self.delta_range.validate()?;
        self.augment.validate()
    }
}

/// Meshes and backgrounds shared by every generated sample.
#[derive(Debug, Clone)]
pub struct SceneAssets {
    pub mesh: TriMesh,
    pub occluder: TriMesh,
    pub backgrounds: Vec<RgbdFrame>,
}

impl SceneAssets {
    /// Occluder sized relative to the object.
    pub fn new(mesh: TriMesh, backgrounds: Vec<RgbdFrame>) -> Self {
        let occluder = mesh::occluder(mesh.radius() / 0.08);
        SceneAssets {
            mesh,
            occluder,
            backgrounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub x_pred: NormalizedInput,
    pub x_obs: NormalizedInput,
    pub y: Label6,
}

/// Pre-standardization pair with the poses and flags it came from.
#[derive(Debug, Clone)]
pub struct RawSample {
    pub x_pred: Vec<f32>,
    pub x_obs: Vec<f32>,
    pub y: Label6,
    pub p_obs: RigidPose,
    pub p_pred: RigidPose,
    pub delta: PoseDelta,
    pub flags: AugmentFlags,
}

impl RawSample {
    pub fn standardized(mut self, stats: &ChannelStats, side: usize) -> Result<SamplePair> {
        standardize(&mut self.x_pred, stats);
        standardize(&mut self.x_obs, stats);
        Ok(SamplePair {
            x_pred: NormalizedInput::from_raw(side, self.x_pred)?,
            x_obs: NormalizedInput::from_raw(side, self.x_obs)?,
            y: self.y,
        })
    }
}

/// Crop box and image-clipped render window for the object at `pose`.
pub fn crop_geometry(
    mesh: &TriMesh,
    pose: &RigidPose,
    k: &CameraIntrinsics,
    margin: f64,
) -> Result<(BBox, Window)> {
    let bbox = projected_bbox(mesh, pose, k, margin)?;
    let window = bbox
        .window(WINDOW_PAD)
        .clipped(k)
        .ok_or_else(|| Error::TrackingLost("object projects outside the image".into()))?;
    Ok((bbox, window))
}

/// Renders the predicted frame: object alone under the fixed lighting.
pub fn render_predicted(mesh: &TriMesh, pose: &RigidPose, k: &CameraIntrinsics, window: Window) -> RgbdFrame {
    render_window(mesh, pose, k, &Lighting::predicted(), window)
}

/// Pose of the occluder: randomly rotated, shifted sideways across the
/// object's silhouette and pulled toward the camera.
fn occluder_pose<R: Rng + ?Sized>(rng: &mut R, center: Vec3, radius: f64, occ: &TriMesh) -> RigidPose {
    let axis = sample_unit_direction(rng);
    let rotation = Mat3::axis_angle(axis, rng::uniform(rng, 0.0, std::f64::consts::PI));
    let angle = rng::uniform(rng, 0.0, std::f64::consts::TAU);
    let lateral = rng::uniform(rng, 0.2, 1.1) * radius;
    let toward = rng::uniform(rng, 1.0, 2.0) * radius;
    let target = center + Vec3::new(lateral * angle.cos(), lateral * angle.sin(), -toward);
    RigidPose {
        rotation,
        translation: target - rotation * occ.centroid(),
    }
}

fn try_generate(assets: &SceneAssets, k: &CameraIntrinsics, cfg: &GeneratorConfig, rng: &mut Stream) -> Result<RawSample> {
    let aug = &cfg.augment;
    let p_obs = sample_observed_pose(rng, cfg.radius_range)?;
    let delta = sample_pose_delta(rng, &cfg.delta_range)?;
    let p_pred = apply_delta(&p_obs, &invert_delta(&delta));
    let y = encode_label(&delta, &cfg.delta_range)?;

    // Every draw happens regardless of the flags, so the stream layout is fixed.
    let light = Lighting::with_direction(sample_unit_direction(rng));
    let hue_shift = rng::symmetric(rng, aug.hue_range);
    let lum_shift = rng::symmetric(rng, aug.lum_range);
    let bg_index = rng.random_range(0..assets.backgrounds.len().max(1));
    let bg_shift = (rng::symmetric(rng, 1.0), rng::symmetric(rng, 1.0));
    let occluder = rng::bernoulli(rng, aug.p_occluder);
    let occ_pose = occluder_pose(rng, p_obs.transform_point(assets.mesh.centroid()), assets.mesh.radius(), &assets.occluder);
    let occ_color = hsv_to_rgb([rng::uniform(rng, 0.0, 1.0) as f32, 0.6, rng::uniform(rng, 0.2, 1.0) as f32]);
    let noise = rng::bernoulli(rng, aug.p_noise);
    let sigma = rng::uniform(rng, 0.0, aug.sigma_max);
    let blur = rng::bernoulli(rng, aug.p_blur);

    let (bbox, window) = crop_geometry(&assets.mesh, &p_pred, k, cfg.bbox_margin)?;
    let local = bbox.relative_to(window.x0, window.y0);
    let z_center = p_pred.transform_point(assets.mesh.centroid()).z();

    let pred = render_predicted(&assets.mesh, &p_pred, k, window);

    let mut obj = render_window(&assets.mesh, &p_obs, k, &light, window);
    perturb_color(&mut obj, hue_shift, lum_shift);
    let mut obs = match assets.backgrounds.get(bg_index) {
        Some(bg) => {
            // shift the crop inside the background frame for extra variety
            let room_x = (bg.width() as i64 - window.width as i64).max(0);
            let room_y = (bg.height() as i64 - window.height as i64).max(0);
            let sx = (window.x0 + (bg_shift.0 * room_x as f64 / 4.0).round() as i64).clamp(0, room_x);
            let sy = (window.y0 + (bg_shift.1 * room_y as f64 / 4.0).round() as i64).clamp(0, room_y);
            bg.crop(sx, sy, window.width, window.height)
        }
        None => RgbdFrame::new(window.width, window.height),
    };
    composite_into(&obj, &mut obs)?;
    if occluder {
        let material = Material { albedo: Some(occ_color) };
        draw_mesh(&mut obs, window, &assets.occluder, &occ_pose, k, &light, &material);
    }
    if noise {
        add_gaussian_noise(&mut obs, sigma, rng);
    }
    if blur {
        obs = mean_blur3(&obs);
    }

    Ok(RawSample {
        x_pred: crop_resize(&pred, &local, cfg.input_side, z_center)?,
        x_obs: crop_resize(&obs, &local, cfg.input_side, z_center)?,
        y,
        p_obs,
        p_pred,
        delta,
        flags: AugmentFlags {
            occluder,
            blur,
            noise,
            sigma: if noise { sigma } else { 0.0 },
            hue_shift,
            lum_shift,
        },
    })
}

/// One pre-standardization sample; a failed draw is retried once with a fresh pose.
pub fn generate_raw_sample(
    assets: &SceneAssets,
    k: &CameraIntrinsics,
    cfg: &GeneratorConfig,
    rng: &mut Stream,
) -> Result<RawSample> {
    if assets.backgrounds.is_empty() {
        return Err(Error::invalid("background pool is empty"));
    }
    match try_generate(assets, k, cfg, rng) {
        Ok(s) => Ok(s),
        Err(_) => try_generate(assets, k, cfg, rng),
    }
}

pub fn generate_sample_pair(
    assets: &SceneAssets,
    k: &CameraIntrinsics,
    cfg: &GeneratorConfig,
    stats: &ChannelStats,
    rng: &mut Stream,
) -> Result<SamplePair> {
    generate_raw_sample(assets, k, cfg, rng)?.standardized(stats, cfg.input_side)
}

/// Sample `index` of the dataset with master seed `seed`.
pub fn generate_indexed(
    assets: &SceneAssets,
    k: &CameraIntrinsics,
    cfg: &GeneratorConfig,
    seed: u64,
    index: u64,
) -> Result<RawSample> {
    generate_raw_sample(assets, k, cfg, &mut stream(seed, Domain::Sample, index))
}

/// Channel statistics over `count` freshly generated pairs (both inputs),
/// drawn from the statistics stream so they never coincide with records.
pub fn estimate_stats(
    assets: &SceneAssets,
    k: &CameraIntrinsics,
    cfg: &GeneratorConfig,
    seed: u64,
    count: usize,
) -> Result<ChannelStats> {
    let raws: Vec<RawSample> = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_raw_sample(assets, k, cfg, &mut stream(seed, Domain::Stats, i)))
        .collect::<Result<_>>()?;
    let grids: Vec<&[f32]> = raws.iter().flat_map(|r| [r.x_pred.as_slice(), r.x_obs.as_slice()]).collect();
    compute_channel_stats(&grids)
}

/// Records `range` of the dataset, generated in parallel and returned in index order.
pub fn generate_batch(
    assets: &SceneAssets,
    k: &CameraIntrinsics,
    cfg: &GeneratorConfig,
    stats: &ChannelStats,
    seed: u64,
    range: std::ops::Range<u64>,
) -> Result<Vec<SamplePair>> {
    range
        .into_par_iter()
        .map(|i| generate_indexed(assets, k, cfg, seed, i)?.standardized(stats, cfg.input_side))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{decode_label, delta_between, pose_error};

    fn assets() -> (SceneAssets, CameraIntrinsics) {
        let k = CameraIntrinsics::kinect_like(160);
        let bg = RgbdFrame::filled(k.width, k.height, [0.3, 0.5, 0.2], 3.0);
        (SceneAssets::new(mesh::toy(), vec![bg]), k)
    }

    fn cfg() -> GeneratorConfig {
        GeneratorConfig {
            input_side: 32,
            ..Default::default()
        }
    }

    #[test]
    fn label_reproduces_observed_pose() {
        let (a, k) = assets();
        for i in 0..30 {
            let s = generate_indexed(&a, &k, &cfg(), 3, i).unwrap();
            let back = apply_delta(&s.p_pred, &decode_label(&s.y, &cfg().delta_range));
            let e = pose_error(&back, &s.p_obs);
            assert!(e.translation_mm < 1e-3 && e.rotation_deg < 1e-4f64.to_degrees());
            let re = encode_label(&delta_between(&s.p_pred, &s.p_obs), &cfg().delta_range).unwrap();
            for (x, y) in re.0.iter().zip(s.y.0) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(s.y.0.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn no_augmentation_zero_delta() {
        let (a, k) = assets();
        let c = GeneratorConfig {
            augment: AugmentConfig::none(),
            delta_range: DeltaRange {
                t_max_mm: 0.0,
                r_max_deg: 0.0,
            },
            ..cfg()
        };
        let s = generate_indexed(&a, &k, &c, 5, 0).unwrap();
        assert_eq!(s.y.0, [0.0; 6]);
        assert!(!s.flags.occluder && !s.flags.blur && !s.flags.noise);
        // same geometry: object depth agrees except where resampling mixes in the silhouette edge
        let on_object: Vec<(f32, f32)> = s
            .x_pred
            .chunks_exact(4)
            .zip(s.x_obs.chunks_exact(4))
            .filter(|(p, _)| p[3].abs() < 0.1)
            .map(|(p, o)| (p[3], o[3]))
            .collect();
        let same = on_object.iter().filter(|(p, o)| (p - o).abs() < 1e-5).count();
        assert!(on_object.len() > 100);
        assert!(same as f64 > 0.85 * on_object.len() as f64, "{same}/{}", on_object.len());
    }

    #[test]
    fn predicted_frame_has_object_only() {
        let (a, k) = assets();
        for i in 0..10 {
            let s = generate_indexed(&a, &k, &cfg(), 9, i).unwrap();
            let z = s.p_pred.transform_point(a.mesh.centroid()).z() as f32;
            // the object never reaches the 3 m background
            assert!(s.x_pred.chunks_exact(4).all(|p| p[3] + z < 2.0));
        }
    }

    #[test]
    fn deterministic_per_index() {
        let (a, k) = assets();
        let s = ChannelStats::IDENTITY;
        let x = generate_batch(&a, &k, &cfg(), &s, 1, 0..4).unwrap();
        let y = generate_batch(&a, &k, &cfg(), &s, 1, 2..4).unwrap();
        assert_eq!(x[2], y[0]);
        assert_eq!(x[3], y[1]);
        assert_ne!(x[0], x[1]);
    }

    #[test]
    fn empty_pool_is_error() {
        let (mut a, k) = assets();
        a.backgrounds.clear();
        assert!(generate_indexed(&a, &k, &cfg(), 1, 0).is_err());
    }
}
