//! Deterministic software RGBD renderer.
//!
//! Pinhole projection with a per-pixel z-buffer, perspective-correct
//! attribute interpolation, nearest texel lookup and ambient + Lambertian
//! shading. Back faces are not culled. Triangles are clipped against the near
//! plane; fragments beyond the far plane are dropped.

pub(crate) mod frame;
pub mod mesh;
mod oracle;
mod render;

pub use frame::RgbdFrame;
pub use oracle::{compare_renders, min_depth_composite, ray_cast, two_triangle_scene, RenderDiff};
pub use mesh::{load_mesh, Texture, TriMesh, Vertex};
pub use render::{
    composite_into, composite_over, draw_mesh, projected_bbox, render_rgbd, render_window, BBox, Lighting,
    Material, Window, FAR_PLANE, NEAR_PLANE,
};
