use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::pose::{sample_unit_direction, CameraIntrinsics, RigidPose};
use crate::raster::mesh::{self, Texture};
use crate::raster::{draw_mesh, Lighting, Material, RgbdFrame, TriMesh, Window};
use crate::rng::{self, stream, Domain};

use super::augment::hsv_to_rgb;
use super::ssim::build_background_pool;

/// Procedural background scenes: a textured back wall, an optional floor and
/// a few textured boxes, each scene seen from a few nearby viewpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    pub scenes: usize,
    pub views_per_scene: usize,
    /// Candidate frames are kept when their SSIM to the last kept frame is below this.
    pub ssim_threshold: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            scenes: 8,
            views_per_scene: 3,
            ssim_threshold: 0.6,
        }
    }
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f32; 3] {
    hsv_to_rgb([
        rng::uniform(rng, 0.0, 1.0) as f32,
        rng::uniform(rng, 0.1, 0.9) as f32,
        rng::uniform(rng, 0.2, 1.0) as f32,
    ])
}

/// Checkers, stripes or blocky value noise in random colors.
pub fn random_texture<R: Rng + ?Sized>(rng: &mut R) -> Texture {
    let a = random_color(rng);
    let b = random_color(rng);
    match rng.random_range(0..3) {
        0 => Texture::checkerboard(64, rng.random_range(2..17), a, b),
        1 => {
            let period = rng.random_range(4..17);
            let texels = (0..64 * 64)
                .map(|i| if (i % 64 / period) % 2 == 0 { a } else { b })
                .collect();
            Texture::new(64, 64, texels).expect("texture dims")
        }
        _ => {
            let grid: Vec<[f32; 3]> = (0..64).map(|_| random_color(rng)).collect();
            let texels = (0..64 * 64).map(|i| grid[(i / 64 / 8) * 8 + (i % 64) / 8]).collect();
            Texture::new(64, 64, texels).expect("texture dims")
        }
    }
}

struct SceneObject {
    mesh: TriMesh,
    pose: RigidPose,
}

fn random_scene<R: Rng + ?Sized>(rng: &mut R) -> Vec<SceneObject> {
    let mut objects = Vec::new();
    let wall_depth = rng::uniform(rng, 2.5, 5.0);
    let tilt = Mat3::rot_x(rng::symmetric(rng, 0.35)) * Mat3::rot_y(rng::symmetric(rng, 0.45));
    objects.push(SceneObject {
        mesh: mesh::square(14.0, random_texture(rng)),
        pose: RigidPose {
            rotation: tilt,
            translation: Vec3::new(0.0, 0.0, wall_depth),
        },
    });
    if rng::bernoulli(rng, 0.6) {
        let height = rng::uniform(rng, 0.4, 1.0);
        objects.push(SceneObject {
            mesh: mesh::square(10.0, random_texture(rng)),
            pose: RigidPose {
                rotation: Mat3::rot_x(-std::f64::consts::FRAC_PI_2),
                translation: Vec3::new(0.0, height, 5.5),
            },
        });
    }
    for _ in 0..rng.random_range(2..7) {
        let half = Vec3::new(
            rng::uniform(rng, 0.05, 0.4),
            rng::uniform(rng, 0.05, 0.4),
            rng::uniform(rng, 0.05, 0.4),
        );
        let depth = rng::uniform(rng, 0.5, 4.0);
        // Near boxes stay off the optical axis, where training objects sit.
        let min_off = if depth < 1.6 { 0.6 * depth } else { 0.0 };
        let angle = rng::uniform(rng, 0.0, std::f64::consts::TAU);
        let off = rng::uniform(rng, min_off, min_off + 0.5 * depth);
        let axis = sample_unit_direction(rng);
        objects.push(SceneObject {
            mesh: mesh::textured_box(half, random_texture(rng)),
            pose: RigidPose {
                rotation: Mat3::axis_angle(axis, rng::uniform(rng, 0.0, std::f64::consts::PI)),
                translation: Vec3::new(off * angle.cos(), off * angle.sin(), depth),
            },
        });
    }
    objects
}

fn render_scene(objects: &[SceneObject], view: &RigidPose, k: &CameraIntrinsics, light: &Lighting) -> RgbdFrame {
    let window = Window::full(k);
    let mut frame = RgbdFrame::new(k.width, k.height);
    for o in objects {
        draw_mesh(&mut frame, window, &o.mesh, &view.compose(&o.pose), k, light, &Material::default());
    }
    frame
}

/// Renders candidate background frames, scene by scene and view by view.
/// Scenes are rendered in parallel; each draws from its own stream.
pub fn procedural_candidates(k: &CameraIntrinsics, cfg: &BackgroundConfig, seed: u64) -> Vec<RgbdFrame> {
    let per_scene: Vec<Vec<RgbdFrame>> = (0..cfg.scenes)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, Domain::Background, s as u64);
            let objects = random_scene(&mut rng);
            let light = Lighting::with_direction(sample_unit_direction(&mut rng));
            (0..cfg.views_per_scene)
                .map(|_| {
                    let view = RigidPose {
                        rotation: Mat3::rot_y(rng::symmetric(&mut rng, 0.12)) * Mat3::rot_x(rng::symmetric(&mut rng, 0.08)),
                        translation: Vec3::new(
                            rng::symmetric(&mut rng, 0.1),
                            rng::symmetric(&mut rng, 0.05),
                            0.0,
                        ),
                    };
                    render_scene(&objects, &view, k, &light)
                })
                .collect()
        })
        .collect();
    per_scene.into_iter().flatten().collect()
}

/// Procedural candidates filtered by SSIM dissimilarity.
pub fn procedural_pool(k: &CameraIntrinsics, cfg: &BackgroundConfig, seed: u64) -> Result<Vec<RgbdFrame>> {
    if cfg.scenes == 0 || cfg.views_per_scene == 0 {
        return Err(Error::invalid("background pool needs at least one scene and view"));
    }
    build_background_pool(procedural_candidates(k, cfg, seed), cfg.ssim_threshold)
}

/// Loads `<name>_color.png` / `<name>_depth.png` pairs from `dir`, sorted by
/// name. Every frame must match the camera resolution.
pub fn import_frames(dir: &Path, k: &CameraIntrinsics) -> Result<Vec<RgbdFrame>> {
    let mut stems: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_color.png")).map(str::to_owned))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::invalid(format!("no *_color.png frames in {}", dir.display())));
    }
    stems
        .iter()
        .map(|s| {
            let f = RgbdFrame::read_png_pair(&dir.join(format!("{s}_color.png")), &dir.join(format!("{s}_depth.png")))?;
            if f.width() != k.width || f.height() != k.height {
                return Err(Error::shape(format!(
                    "background {s} is {}x{}, camera is {}x{}",
                    f.width(),
                    f.height(),
                    k.width,
                    k.height
                )));
            }
            Ok(f)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_pool_is_deterministic_and_plausible() {
        let k = CameraIntrinsics::kinect_like(96);
        let cfg = BackgroundConfig {
            scenes: 3,
            views_per_scene: 2,
            ssim_threshold: 0.6,
        };
        let a = procedural_candidates(&k, &cfg, 11);
        let b = procedural_candidates(&k, &cfg, 11);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        for f in &a {
            // back wall fills the frame; depths stay in the scene range
            assert!(f.coverage() > f.width() * f.height() * 9 / 10);
            assert!(f.depth().iter().filter(|d| **d > 0.0).all(|&d| d > 0.05 && d < 12.0));
        }
        let pool = procedural_pool(&k, &cfg, 11).unwrap();
        assert!(!pool.is_empty() && pool.len() <= 6);
        assert_eq!(pool[0], a[0]);
    }

    #[test]
    fn import_roundtrip() {
        let k = CameraIntrinsics::kinect_like(32);
        let dir = tempfile::tempdir().unwrap();
        let f = RgbdFrame::filled(k.width, k.height, [0.2, 0.4, 0.6], 1.5);
        f.write_png_pair(&dir.path().join("0001_color.png"), &dir.path().join("0001_depth.png")).unwrap();
        let got = import_frames(dir.path(), &k).unwrap();
        assert_eq!(got.len(), 1);
        assert!((got[0].pixel_depth(3, 3) - 1.5).abs() < 1e-4);
        assert!(import_frames(dir.path(), &CameraIntrinsics::kinect_like(64)).is_err());
    }
}
