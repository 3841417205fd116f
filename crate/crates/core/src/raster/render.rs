use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::pose::{CameraIntrinsics, RigidPose};

use super::frame::RgbdFrame;
use super::mesh::TriMesh;

pub const NEAR_PLANE: f64 = 0.05;
pub const FAR_PLANE: f64 = 10.0;

/// Ambient plus one directional white light. `direction` is the direction the
/// light travels, in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lighting {
    pub ambient: f64,
    pub directional: f64,
    pub direction: Vec3,
}

impl Lighting {
    pub fn new(ambient: f64, directional: f64, direction: Vec3) -> Result<Self> {
        if !(ambient >= 0.0 && directional >= 0.0) {
            return Err(Error::invalid("light intensities must be non-negative"));
        }
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("light direction must be a non-zero vector"));
        }
        Ok(Lighting {
            ambient,
            directional,
            direction: direction * (1.0 / n),
        })
    }

    /// Predicted-frame lighting: ambient 0.65, directional 0.4 shining
    /// downward (+y in camera coordinates).
    pub fn predicted() -> Self {
        Lighting {
            ambient: 0.65,
            directional: 0.4,
            direction: Vec3::new(0.0, 1.0, 0.0),
        }
    }

    /// Same intensities as [`Lighting::predicted`] with another direction.
    pub fn with_direction(direction: Vec3) -> Self {
        Lighting {
            direction: direction.normalized(),
            ..Lighting::predicted()
        }
    }

    /// Shade factor for a unit surface normal.
    #[inline]
    pub fn intensity(&self, normal: Vec3) -> f64 {
        let lambert = (-normal.dot(&self.direction)).max(0.0);
        (self.ambient + self.directional * lambert).min(1.0)
    }
}

impl Default for Lighting {
    fn default() -> Self {
        Lighting::predicted()
    }
}

/// Pixel rectangle of the full image plane that a render target covers.
/// Pixel `(0,0)` of the target is image pixel `(x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
}

impl Window {
    pub fn full(k: &CameraIntrinsics) -> Self {
        Window {
            x0: 0,
            y0: 0,
            width: k.width,
            height: k.height,
        }
    }

    /// Window clipped to the image; `None` when nothing remains.
    pub fn clipped(&self, k: &CameraIntrinsics) -> Option<Window> {
        let x0 = self.x0.max(0);
        let y0 = self.y0.max(0);
        let x1 = (self.x0 + self.width as i64).min(k.width as i64);
        let y1 = (self.y0 + self.height as i64).min(k.height as i64);
        (x1 > x0 && y1 > y0).then(|| Window {
            x0,
            y0,
            width: (x1 - x0) as usize,
            height: (y1 - y0) as usize,
        })
    }
}

/// Optional per-draw overrides.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Material {
    /// Replaces the texture with a flat albedo.
    pub albedo: Option<[f32; 3]>,
}

/// Clip-space vertex: window coordinates plus attributes divided by z.
#[derive(Clone, Copy)]
struct ScreenVertex {
    sx: f64,
    sy: f64,
    inv_z: f64,
    n_over_z: Vec3,
    uv_over_z: [f64; 2],
}

#[derive(Clone, Copy)]
struct CamVertex {
    p: Vec3,
    n: Vec3,
    uv: [f64; 2],
}

impl CamVertex {
    fn lerp(&self, o: &CamVertex, t: f64) -> CamVertex {
        CamVertex {
            p: self.p + (o.p - self.p) * t,
            n: self.n + (o.n - self.n) * t,
            uv: [self.uv[0] + (o.uv[0] - self.uv[0]) * t, self.uv[1] + (o.uv[1] - self.uv[1]) * t],
        }
    }
}

/// Renders a mesh into an empty frame covering the whole image.
pub fn render_rgbd(mesh: &TriMesh, pose: &RigidPose, k: &CameraIntrinsics, light: &Lighting) -> RgbdFrame {
    render_window(mesh, pose, k, light, Window::full(k))
}

/// Renders a mesh into an empty frame covering `window` of the image plane.
pub fn render_window(
    mesh: &TriMesh,
    pose: &RigidPose,
    k: &CameraIntrinsics,
    light: &Lighting,
    window: Window,
) -> RgbdFrame {
    let mut frame = RgbdFrame::new(window.width.max(1), window.height.max(1));
    draw_mesh(&mut frame, window, mesh, pose, k, light, &Material::default());
    frame
}

/// Z-buffered draw of `mesh` into `frame`, which covers `window` of the image
/// plane. Existing depth acts as the z-buffer (0 = empty).
pub fn draw_mesh(
    frame: &mut RgbdFrame,
    window: Window,
    mesh: &TriMesh,
    pose: &RigidPose,
    k: &CameraIntrinsics,
    light: &Lighting,
    material: &Material,
) {
    debug_assert_eq!((frame.width(), frame.height()), (window.width.max(1), window.height.max(1)));
    let cam: Vec<CamVertex> = mesh
        .vertices()
        .iter()
        .map(|v| CamVertex {
            p: pose.transform_point(v.position),
            n: pose.rotation * v.normal,
            uv: v.uv,
        })
        .collect();
    let ctx = Raster {
        k,
        window,
        light,
        material,
        mesh,
    };
    let mut poly: Vec<CamVertex> = Vec::with_capacity(4);
    for tri in mesh.triangles() {
        let [a, b, c] = tri.map(|i| cam[i as usize]);
        if a.p.z() <= NEAR_PLANE && b.p.z() <= NEAR_PLANE && c.p.z() <= NEAR_PLANE {
            continue;
        }
        if a.p.z() > NEAR_PLANE && b.p.z() > NEAR_PLANE && c.p.z() > NEAR_PLANE {
            ctx.triangle(frame, [a, b, c]);
            continue;
        }
        clip_near(&[a, b, c], &mut poly);
        for i in 1..poly.len().saturating_sub(1) {
            ctx.triangle(frame, [poly[0], poly[i], poly[i + 1]]);
        }
    }
}

/// Sutherland–Hodgman against `z = NEAR_PLANE`.
fn clip_near(tri: &[CamVertex; 3], out: &mut Vec<CamVertex>) {
    out.clear();
    for i in 0..3 {
        let cur = tri[i];
        let next = tri[(i + 1) % 3];
        let cur_in = cur.p.z() > NEAR_PLANE;
        let next_in = next.p.z() > NEAR_PLANE;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            let t = (NEAR_PLANE - cur.p.z()) / (next.p.z() - cur.p.z());
            let mut v = cur.lerp(&next, t);
            v.p.0[2] = NEAR_PLANE + 1e-12;
            out.push(v);
        }
    }
}

struct Raster<'a> {
    k: &'a CameraIntrinsics,
    window: Window,
    light: &'a Lighting,
    material: &'a Material,
    mesh: &'a TriMesh,
}

impl Raster<'_> {
    fn to_screen(&self, v: &CamVertex) -> ScreenVertex {
        let inv_z = 1.0 / v.p.z();
        ScreenVertex {
            sx: self.k.fx * v.p.x() * inv_z + self.k.cx - self.window.x0 as f64,
            sy: self.k.fy * v.p.y() * inv_z + self.k.cy - self.window.y0 as f64,
            inv_z,
            n_over_z: v.n * inv_z,
            uv_over_z: [v.uv[0] * inv_z, v.uv[1] * inv_z],
        }
    }

    fn triangle(&self, frame: &mut RgbdFrame, tri: [CamVertex; 3]) {
        let mut s = tri.map(|v| self.to_screen(&v));
        let mut area = edge(s[0].sx, s[0].sy, s[1].sx, s[1].sy, s[2].sx, s[2].sy);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            s.swap(1, 2);
            area = -area;
        }
        let w = frame.width() as f64;
        let h = frame.height() as f64;
        let min_x = s.iter().map(|v| v.sx).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|v| v.sx).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|v| v.sy).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|v| v.sy).fold(f64::NEG_INFINITY, f64::max);
        // pixel centers at +0.5
        let x_start = (min_x - 0.5).ceil().max(0.0);
        let x_end = (max_x - 0.5).floor().min(w - 1.0);
        let y_start = (min_y - 0.5).ceil().max(0.0);
        let y_end = (max_y - 0.5).floor().min(h - 1.0);
        if x_start > x_end || y_start > y_end {
            return;
        }
        let edges = [(1usize, 2usize), (2, 0), (0, 1)];
        let owns_tie = edges.map(|(a, b)| {
            let dx = s[b].sx - s[a].sx;
            let dy = s[b].sy - s[a].sy;
            dy > 0.0 || (dy == 0.0 && dx < 0.0)
        });
        let inv_area = 1.0 / area;
        let width = frame.width();
        let texture = self.mesh.texture();

        for py in y_start as usize..=y_end as usize {
            let y = py as f64 + 0.5;
            for px in x_start as usize..=x_end as usize {
                let x = px as f64 + 0.5;
                let mut l = [0.0; 3];
                let mut inside = true;
                for (e, &(a, b)) in edges.iter().enumerate() {
                    let v = edge(s[a].sx, s[a].sy, s[b].sx, s[b].sy, x, y);
                    if v < 0.0 || (v == 0.0 && !owns_tie[e]) {
                        inside = false;
                        break;
                    }
                    l[e] = v * inv_area;
                }
                if !inside {
                    continue;
                }
                let inv_z = l[0] * s[0].inv_z + l[1] * s[1].inv_z + l[2] * s[2].inv_z;
                if inv_z <= 0.0 {
                    continue;
                }
                let z = 1.0 / inv_z;
                if !(NEAR_PLANE..=FAR_PLANE).contains(&z) {
                    continue;
                }
                let idx = py * width + px;
                let current = frame.depth()[idx];
                let zf = z as f32;
                if current > 0.0 && zf >= current {
                    continue;
                }
                let n = (s[0].n_over_z * l[0] + s[1].n_over_z * l[1] + s[2].n_over_z * l[2]) * z;
                let albedo = match self.material.albedo {
                    Some(c) => c,
                    None => {
                        let u = (l[0] * s[0].uv_over_z[0] + l[1] * s[1].uv_over_z[0] + l[2] * s[2].uv_over_z[0]) * z;
                        let v = (l[0] * s[0].uv_over_z[1] + l[1] * s[1].uv_over_z[1] + l[2] * s[2].uv_over_z[1]) * z;
                        texture.sample(u, v)
                    }
                };
                let shade = self.light.intensity(n.normalized()) as f32;
                let rgb = albedo.map(|c| (c * shade).clamp(0.0, 1.0));
                frame.set_pixel(px, py, rgb, zf);
            }
        }
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Per-pixel depth test: `fg` wins where it has depth and is nearer than
/// `bg` (or `bg` is empty).
pub fn composite_over(fg: &RgbdFrame, bg: &RgbdFrame) -> Result<RgbdFrame> {
    if !fg.same_dims(bg) {
        return Err(Error::invalid(format!(
            "composite of {}x{} over {}x{}",
            fg.width(),
            fg.height(),
            bg.width(),
            bg.height()
        )));
    }
    let mut out = bg.clone();
    composite_into(fg, &mut out)?;
    Ok(out)
}

/// In-place form of [`composite_over`]: `dst` plays the background.
pub fn composite_into(fg: &RgbdFrame, dst: &mut RgbdFrame) -> Result<()> {
    if !fg.same_dims(dst) {
        return Err(Error::invalid("composite dimension mismatch"));
    }
    let n = fg.width() * fg.height();
    for i in 0..n {
        let f = fg.depth()[i];
        let b = dst.depth()[i];
        if f > 0.0 && (b == 0.0 || f < b) {
            dst.depth_mut()[i] = f;
            let src = &fg.rgb()[i * 3..i * 3 + 3];
            let (r, g, bl) = (src[0], src[1], src[2]);
            dst.rgb_mut()[i * 3..i * 3 + 3].copy_from_slice(&[r, g, bl]);
        }
    }
    Ok(())
}

/// Square crop box in continuous pixel coordinates (pixel `i` spans `[i, i+1)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub center_x: f64,
    pub center_y: f64,
    pub side: f64,
}

impl BBox {
    pub fn min_x(&self) -> f64 {
        self.center_x - self.side / 2.0
    }

    pub fn min_y(&self) -> f64 {
        self.center_y - self.side / 2.0
    }

    /// Same box expressed relative to a window starting at `(x0, y0)`.
    pub fn relative_to(&self, x0: i64, y0: i64) -> BBox {
        BBox {
            center_x: self.center_x - x0 as f64,
            center_y: self.center_y - y0 as f64,
            side: self.side,
        }
    }

    /// Smallest integer window containing the box plus `pad` pixels.
    pub fn window(&self, pad: i64) -> Window {
        let x0 = self.min_x().floor() as i64 - pad;
        let y0 = self.min_y().floor() as i64 - pad;
        let x1 = (self.min_x() + self.side).ceil() as i64 + pad;
        let y1 = (self.min_y() + self.side).ceil() as i64 + pad;
        Window {
            x0,
            y0,
            width: (x1 - x0).max(1) as usize,
            height: (y1 - y0).max(1) as usize,
        }
    }
}

/// Square box centered on the projected object center whose side is the
/// projected bounding-sphere diameter enlarged by `margin`.
pub fn projected_bbox(mesh: &TriMesh, pose: &RigidPose, k: &CameraIntrinsics, margin: f64) -> Result<BBox> {
    let c = pose.transform_point(mesh.centroid());
    if !(c.z() > NEAR_PLANE) || !c.is_finite() {
        return Err(Error::TrackingLost(format!("object center at depth {:.3} m is behind the camera", c.z())));
    }
    let (u, v) = k.project(c);
    Ok(BBox {
        center_x: u,
        center_y: v,
        side: (1.0 + margin) * 2.0 * mesh.radius() * k.fx / c.z(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;
    use crate::raster::mesh::{self, Texture, Vertex};
    use crate::rng::{self, stream, Domain};

    fn k(w: usize, h: usize, f: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap()
    }

    #[test]
    fn unit_square_at_one_meter() {
        let sq = mesh::square(1.0, Texture::solid([1.0; 3]));
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let f = render_rgbd(&sq, &pose, &k(150, 150, 300.0), &Lighting::predicted());
        assert!((f.pixel_depth(75, 75) - 1.0).abs() < 1e-3);
        // 300 px extent clips to the whole 150 px frame
        assert_eq!(f.coverage(), 150 * 150);
    }

    #[test]
    fn small_square_pixel_extent_matches_pinhole() {
        // 0.2 m at 1 m with f = 300 spans 60 px
        let sq = mesh::square(0.2, Texture::solid([1.0; 3]));
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let f = render_rgbd(&sq, &pose, &k(150, 150, 300.0), &Lighting::predicted());
        assert_eq!(f.coverage(), 60 * 60);
        assert_eq!(f.pixel_depth(44, 75), 0.0);
        assert!(f.pixel_depth(45, 75) > 0.0);
        assert!(f.pixel_depth(104, 75) > 0.0);
        assert_eq!(f.pixel_depth(105, 75), 0.0);
    }

    #[test]
    fn uncovered_pixels_are_empty() {
        let sq = mesh::square(0.1, Texture::solid([1.0; 3]));
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let f = render_rgbd(&sq, &pose, &k(64, 64, 100.0), &Lighting::predicted());
        for y in 0..64 {
            for x in 0..64 {
                if f.pixel_depth(x, y) == 0.0 {
                    assert_eq!(f.pixel_rgb(x, y), [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn shading_intensities() {
        let sq = mesh::square(0.5, Texture::solid([1.0; 3]));
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let kk = k(32, 32, 50.0);
        // normal is −z; light travelling +z hits it head-on
        let head_on = Lighting::with_direction(Vec3::new(0.0, 0.0, 1.0));
        let f = render_rgbd(&sq, &pose, &kk, &head_on);
        assert_eq!(f.pixel_rgb(16, 16), [1.0; 3]);
        let grazing = Lighting::predicted();
        let g = render_rgbd(&sq, &pose, &kk, &grazing);
        for c in g.pixel_rgb(16, 16) {
            assert!((c - 0.65).abs() < 1e-6);
        }
    }

    #[test]
    fn offscreen_and_behind_are_empty() {
        let cube = mesh::cube(0.1);
        let kk = k(32, 32, 50.0);
        let behind = RigidPose::from_translation(Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(render_rgbd(&cube, &behind, &kk, &Lighting::predicted()).coverage(), 0);
        let aside = RigidPose::from_translation(Vec3::new(5.0, 0.0, 1.0));
        assert_eq!(render_rgbd(&cube, &aside, &kk, &Lighting::predicted()).coverage(), 0);
    }

    #[test]
    fn near_plane_crossing_is_clipped() {
        let sq = mesh::square(2.0, Texture::solid([1.0; 3]));
        // tilted so part of it is behind the near plane
        let pose = RigidPose {
            rotation: Mat3::rot_y(1.2),
            translation: Vec3::new(0.0, 0.0, 0.5),
        };
        let f = render_rgbd(&sq, &pose, &k(64, 64, 40.0), &Lighting::predicted());
        assert!(f.coverage() > 0);
        for &d in f.depth() {
            assert!(d == 0.0 || (d as f64 >= NEAR_PLANE - 1e-6 && d as f64 <= FAR_PLANE));
        }
    }

    #[test]
    fn shared_edges_are_drawn_once() {
        // two triangles of a quad: every covered pixel written by exactly one
        let sq = mesh::square(0.37, Texture::solid([1.0; 3]));
        let pose = RigidPose::from_translation(Vec3::new(0.013, -0.021, 1.0));
        let kk = k(64, 64, 80.0);
        let full = render_rgbd(&sq, &pose, &kk, &Lighting::predicted());
        let mut count = 0;
        for t in sq.triangles() {
            let verts: Vec<Vertex> = t.iter().map(|&i| sq.vertices()[i as usize]).collect();
            let single = TriMesh::new(verts, vec![[0, 1, 2]], Texture::solid([1.0; 3])).unwrap();
            count += render_rgbd(&single, &pose, &kk, &Lighting::predicted()).coverage();
        }
        assert_eq!(count, full.coverage());
    }

    #[test]
    fn window_render_matches_full_render() {
        let toy = mesh::toy();
        let pose = RigidPose {
            rotation: Mat3::rot_x(0.4) * Mat3::rot_y(-0.7),
            translation: Vec3::new(0.02, -0.01, 0.6),
        };
        let kk = CameraIntrinsics::kinect_like(256);
        let light = Lighting::with_direction(Vec3::new(0.3, 0.5, 0.8));
        let full = render_rgbd(&toy, &pose, &kk, &light);
        let win = Window {
            x0: 90,
            y0: 70,
            width: 70,
            height: 60,
        };
        let part = render_window(&toy, &pose, &kk, &light, win);
        assert_eq!(part, full.crop(win.x0, win.y0, win.width, win.height));
    }

    #[test]
    fn rendering_is_deterministic() {
        let toy = mesh::toy();
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 0.7));
        let kk = CameraIntrinsics::kinect_like(128);
        let a = render_rgbd(&toy, &pose, &kk, &Lighting::predicted());
        let b = render_rgbd(&toy, &pose, &kk, &Lighting::predicted());
        assert_eq!(a, b);
    }

    #[test]
    fn composite_rules() {
        let mut rng = stream(1, Domain::Misc, 0);
        let rand_frame = |rng: &mut rng::Stream| {
            let mut f = RgbdFrame::new(8, 8);
            for y in 0..8 {
                for x in 0..8 {
                    let d = if rng::bernoulli(rng, 0.3) { 0.0 } else { rng::uniform(rng, 0.5, 3.0) as f32 };
                    let c = rng::uniform(rng, 0.0, 1.0) as f32;
                    f.set_pixel(x, y, [c, c, 1.0 - c], d);
                }
            }
            f
        };
        let bg = rand_frame(&mut rng);
        assert_eq!(composite_over(&RgbdFrame::new(8, 8), &bg).unwrap(), bg);
        let mut fg = RgbdFrame::new(8, 8);
        let mut back = RgbdFrame::new(8, 8);
        fg.set_pixel(0, 0, [1.0, 0.0, 0.0], 0.5);
        back.set_pixel(0, 0, [0.0, 1.0, 0.0], 1.0);
        let c = composite_over(&fg, &back).unwrap();
        assert_eq!(c.pixel_rgb(0, 0), [1.0, 0.0, 0.0]);
        assert!(composite_over(&RgbdFrame::new(2, 2), &RgbdFrame::new(3, 2)).is_err());
    }

    #[test]
    fn bbox_formula_and_center() {
        let sphere = mesh::uv_sphere(0.075, 32, 48, Texture::solid([1.0; 3]));
        let kk = k(320, 240, 300.0);
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 0.75));
        let b = projected_bbox(&sphere, &pose, &kk, 0.15).unwrap();
        assert!((b.side - 69.0).abs() < 1e-9);
        assert_eq!((b.center_x, b.center_y), (kk.cx, kk.cy));
        let farther = RigidPose::from_translation(Vec3::new(0.0, 0.0, 0.75 * 1.1));
        let b2 = projected_bbox(&sphere, &farther, &kk, 0.15).unwrap();
        assert!((b2.side - b.side / 1.1).abs() < 1.0);
    }

    #[test]
    fn bbox_bounds_sphere_disk_with_zero_margin() {
        let sphere = mesh::uv_sphere(0.075, 48, 64, Texture::solid([1.0; 3]));
        let kk = k(320, 240, 300.0);
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, 0.75));
        let b = projected_bbox(&sphere, &pose, &kk, 0.0).unwrap();
        // analytic disk radius for a sphere seen in perspective
        let z: f64 = 0.75;
        let r: f64 = 0.075;
        let disk = 300.0 * r / (z * z - r * r).sqrt();
        assert!((b.side / 2.0 - disk).abs() <= 1.0);
        // rendered silhouette extent agrees
        let f = render_rgbd(&sphere, &pose, &kk, &Lighting::predicted());
        let cols: Vec<usize> = (0..320).filter(|&x| (0..240).any(|y| f.pixel_depth(x, y) > 0.0)).collect();
        let extent = (cols.last().unwrap() - cols[0] + 1) as f64;
        assert!((extent - b.side).abs() <= 2.0, "extent {extent} side {}", b.side);
    }

    #[test]
    fn bbox_behind_camera_is_tracking_loss() {
        let cube = mesh::cube(0.1);
        let pose = RigidPose::from_translation(Vec3::new(0.0, 0.0, -2.0));
        assert!(matches!(
            projected_bbox(&cube, &pose, &k(64, 64, 50.0), 0.15),
            Err(Error::TrackingLost(_))
        ));
    }
}
