//! Brute-force reference renderer: one ray per pixel center, tested against
//! every triangle. Slow, but shares no code with the rasterizer.

use rand::Rng;

use crate::geom::Vec3;
use crate::pose::{sample_unit_direction, CameraIntrinsics, RigidPose};
use crate::rng;

use super::frame::RgbdFrame;
use super::mesh::{Texture, TriMesh, Vertex};
use super::render::{Lighting, FAR_PLANE, NEAR_PLANE};

/// Ray-cast render of `mesh` at `pose`. Same shading rules as
/// [`render_rgbd`](super::render_rgbd); depth is the camera z of the nearest
/// hit, 0 where nothing is hit.
pub fn ray_cast(mesh: &TriMesh, pose: &RigidPose, k: &CameraIntrinsics, light: &Lighting) -> RgbdFrame {
    let verts: Vec<(Vec3, Vec3, [f64; 2])> = mesh
        .vertices()
        .iter()
        .map(|v| (pose.transform_point(v.position), pose.rotation * v.normal, v.uv))
        .collect();
    let mut frame = RgbdFrame::new(k.width, k.height);
    for py in 0..k.height {
        for px in 0..k.width {
            let dir = Vec3::new(
                (px as f64 + 0.5 - k.cx) / k.fx,
                (py as f64 + 0.5 - k.cy) / k.fy,
                1.0,
            );
            let mut best: Option<(f32, [f64; 3], &[u32; 3])> = None;
            for tri in mesh.triangles() {
                let [a, b, c] = tri.map(|i| verts[i as usize].0);
                let Some((t, b1, b2)) = intersect(dir, a, b, c) else {
                    continue;
                };
                // dir.z == 1, so the ray parameter is the camera depth
                if !(NEAR_PLANE..=FAR_PLANE).contains(&t) {
                    continue;
                }
                let z = t as f32;
                if best.is_none_or(|(bz, _, _)| z < bz) {
                    best = Some((z, [1.0 - b1 - b2, b1, b2], tri));
                }
            }
            let Some((z, w, tri)) = best else { continue };
            let [va, vb, vc] = tri.map(|i| verts[i as usize]);
            let n = va.1 * w[0] + vb.1 * w[1] + vc.1 * w[2];
            let u = va.2[0] * w[0] + vb.2[0] * w[1] + vc.2[0] * w[2];
            let v = va.2[1] * w[0] + vb.2[1] * w[1] + vc.2[1] * w[2];
            let albedo = mesh.texture().sample(u, v);
            let shade = light.intensity(n.normalized()) as f32;
            frame.set_pixel(px, py, albedo.map(|c| (c * shade).clamp(0.0, 1.0)), z);
        }
    }
    frame
}

/// Largest per-pixel differences between two renders.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RenderDiff {
    pub max_depth: f64,
    pub max_color: f64,
    /// Pixels covered in one frame only.
    pub coverage_mismatch: usize,
}

impl RenderDiff {
    pub fn within(&self, depth_tol: f64, color_tol: f64) -> bool {
        self.coverage_mismatch == 0 && self.max_depth <= depth_tol && self.max_color <= color_tol
    }
}

pub fn compare_renders(a: &RgbdFrame, b: &RgbdFrame) -> RenderDiff {
    assert!(a.same_dims(b), "render dimensions differ");
    let mut d = RenderDiff::default();
    for i in 0..a.width() * a.height() {
        let (za, zb) = (a.depth()[i], b.depth()[i]);
        if (za > 0.0) != (zb > 0.0) {
            d.coverage_mismatch += 1;
            continue;
        }
        d.max_depth = d.max_depth.max((za - zb).abs() as f64);
        for c in 0..3 {
            d.max_color = d.max_color.max((a.rgb()[3 * i + c] - b.rgb()[3 * i + c]).abs() as f64);
        }
    }
    d
}

/// Per-pixel reference for compositing: the nearer valid depth wins, `fg`
/// on ties it cannot win (equal depth keeps `bg`).
pub fn min_depth_composite(fg: &RgbdFrame, bg: &RgbdFrame) -> RgbdFrame {
    let mut out = RgbdFrame::new(bg.width(), bg.height());
    for y in 0..bg.height() {
        for x in 0..bg.width() {
            let (zf, zb) = (fg.pixel_depth(x, y), bg.pixel_depth(x, y));
            let take_fg = zf > 0.0 && (zb <= 0.0 || zf < zb);
            let (rgb, z) = if take_fg { (fg.pixel_rgb(x, y), zf) } else { (bg.pixel_rgb(x, y), zb) };
            out.set_pixel(x, y, rgb, z);
        }
    }
    out
}

/// Two random triangles placed in camera coordinates (render with the
/// identity pose): corners land in or slightly beyond the image at depths
/// 0.3–3 m, with random unit normals, a checker texture and random light.
pub fn two_triangle_scene<R: Rng + ?Sized>(rng: &mut R, k: &CameraIntrinsics) -> (TriMesh, Lighting) {
    let mut vertices = Vec::with_capacity(6);
    for _ in 0..6 {
        let px = rng::uniform(rng, -0.2, 1.2) * k.width as f64;
        let py = rng::uniform(rng, -0.2, 1.2) * k.height as f64;
        let z = rng::uniform(rng, 0.3, 3.0);
        vertices.push(Vertex {
            position: Vec3::new((px - k.cx) / k.fx * z, (py - k.cy) / k.fy * z, z),
            normal: sample_unit_direction(rng),
            uv: [rng::uniform(rng, 0.0, 1.0), rng::uniform(rng, 0.0, 1.0)],
        });
    }
    let c = |rng: &mut R| [0.0; 3].map(|_: f32| rng::uniform(rng, 0.1, 1.0) as f32);
    let (a, b) = (c(rng), c(rng));
    let mesh = TriMesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]], Texture::checkerboard(8, 4, a, b))
        .expect("six vertices, two triangles");
    let light = Lighting::new(
        rng::uniform(rng, 0.2, 0.7),
        rng::uniform(rng, 0.2, 0.8),
        sample_unit_direction(rng),
    )
    .expect("valid light");
    (mesh, light)
}

/// Möller–Trumbore for a ray from the origin; returns `(t, b1, b2)` with
/// the hit at `a + b1 (b − a) + b2 (c − a)`. Two-sided.
fn intersect(dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = -a;
    let b1 = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let q = s.cross(&e1);
    let b2 = dir.dot(&q) * inv;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    Some((e2.dot(&q) * inv, b1, b2))
}
