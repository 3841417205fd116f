use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// RGB texture, row 0 at the top, nearest-neighbor sampling with wrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    width: usize,
    height: usize,
    texels: Vec<[f32; 3]>,
}

impl Texture {
    pub fn new(width: usize, height: usize, texels: Vec<[f32; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || texels.len() != width * height {
            return Err(Error::shape(format!("texture {width}x{height} with {} texels", texels.len())));
        }
        let texels = texels.into_iter().map(|t| t.map(|v| v.clamp(0.0, 1.0))).collect();
        Ok(Texture {
            width,
            height,
            texels,
        })
    }

    pub fn solid(rgb: [f32; 3]) -> Self {
        Texture::new(1, 1, vec![rgb]).expect("1x1 texture")
    }

    /// Two-tone checkerboard with `cells` squares per side.
    pub fn checkerboard(size: usize, cells: usize, a: [f32; 3], b: [f32; 3]) -> Self {
        let cell = (size / cells.max(1)).max(1);
        let texels = (0..size * size)
            .map(|i| {
                let (x, y) = (i % size, i / size);
                if (x / cell + y / cell).is_multiple_of(2) {
                    a
                } else {
                    b
                }
            })
            .collect();
        Texture::new(size, size, texels).expect("checkerboard")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> [f32; 3] {
        let fu = u - u.floor();
        let fv = v - v.floor();
        let x = ((fu * self.width as f64) as usize).min(self.width - 1);
        let y = (((1.0 - fv) * self.height as f64) as usize).min(self.height - 1);
        self.texels[y * self.width + x]
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let dec = png::Decoder::new(std::io::BufReader::new(fs::File::open(path)?));
        let mut reader = dec.read_info().map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Png(format!("{}: image too large", path.display())))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
        let stride = match (info.color_type, info.bit_depth) {
            (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
            (png::ColorType::Rgba, png::BitDepth::Eight) => 4,
            (ct, bd) => {
                return Err(Error::Png(format!("{}: unsupported texture layout {ct:?}/{bd:?}", path.display())))
            }
        };
        let texels = buf[..info.buffer_size()]
            .chunks_exact(stride)
            .map(|p| [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
            .collect();
        Texture::new(info.width as usize, info.height as usize, texels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    /// Meters, object frame.
    pub position: Vec3,
    /// Unit length.
    pub normal: Vec3,
    pub uv: [f64; 2],
}

/// Indexed triangle mesh with a single texture.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vertex>,
    triangles: Vec<[u32; 3]>,
    texture: Texture,
    centroid: Vec3,
    radius: f64,
}

impl TriMesh {
    /// Builds a mesh; normals are re-normalized and the centroid is the mean
    /// of the distinct vertex positions.
    pub fn new(vertices: Vec<Vertex>, triangles: Vec<[u32; 3]>, texture: Texture) -> Result<Self> {
        let positions: Vec<Vec3> = vertices.iter().map(|v| v.position).collect();
        Self::with_positions(vertices, triangles, texture, &positions)
    }

    fn with_positions(
        mut vertices: Vec<Vertex>,
        triangles: Vec<[u32; 3]>,
        texture: Texture,
        distinct_positions: &[Vec3],
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(format!("triangle {t:?} indexes past {n} vertices")));
        }
        for v in &mut vertices {
            if !v.position.is_finite() {
                return Err(Error::invalid("non-finite vertex position"));
            }
            let len = v.normal.norm();
            v.normal = if len > 1e-12 && len.is_finite() {
                v.normal * (1.0 / len)
            } else {
                Vec3::new(0.0, 0.0, 1.0)
            };
        }
        let count = distinct_positions.len().max(1) as f64;
        let centroid = distinct_positions.iter().fold(Vec3::ZERO, |acc, p| acc + *p) * (1.0 / count);
        let radius = vertices.iter().map(|v| (v.position - centroid).norm()).fold(0.0, f64::max);
        Ok(TriMesh {
            vertices,
            triangles,
            texture,
            centroid,
            radius,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn texture(&self) -> &Texture {
        &self.texture
    }

    pub fn centroid(&self) -> Vec3 {
        self.centroid
    }

    /// Maximum vertex distance from the centroid, meters.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn with_texture(mut self, texture: Texture) -> Self {
        self.texture = texture;
        self
    }

    /// Translates the mesh so its centroid sits at the object origin.
    pub fn recentered(mut self) -> Self {
        let c = self.centroid;
        for v in &mut self.vertices {
            v.position = v.position - c;
        }
        self.centroid = Vec3::ZERO;
        self
    }

    /// Writes the geometry as OBJ (positions, uvs, normals, triangles).
    pub fn write_obj(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.position.x(), v.position.y(), v.position.z());
        }
        for v in &self.vertices {
            let _ = writeln!(s, "vt {} {}", v.uv[0], v.uv[1]);
        }
        for v in &self.vertices {
            let _ = writeln!(s, "vn {} {} {}", v.normal.x(), v.normal.y(), v.normal.z());
        }
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| i + 1);
            let _ = writeln!(s, "f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}");
        }
        fs::write(path, s)?;
        Ok(())
    }
}

/// Area-weighted smooth normals for an indexed mesh.
pub fn smooth_normals(positions: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::ZERO; positions.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| positions[i as usize]);
        let n = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += n;
        }
    }
    acc.into_iter().map(|n| n.normalized()).collect()
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MeshParse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_floats<const N: usize>(path: &Path, line: usize, parts: &[&str]) -> Result<[f64; N]> {
    if parts.len() < N {
        return Err(parse_err(path, line, format!("expected {N} numbers, found {}", parts.len())));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("bad number `{p}`")))?;
    }
    Ok(out)
}

fn resolve_index(path: &Path, line: usize, token: &str, count: usize, what: &str) -> Result<usize> {
    let i: i64 = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {what} index `{token}`")))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(parse_err(path, line, format!("{what} index {i} out of range (have {count})")));
    }
    Ok(resolved as usize)
}

/// Loads the OBJ subset `v`/`vt`/`vn`/`f` (convex polygons are fan
/// triangulated) plus an optional `mtllib` whose `map_Kd` names a PNG texture.
/// Faces without normals get their flat face normal; a mesh without any
/// texture gets a checkerboard.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path)?;
    let mut positions: Vec<Vec3> = Vec::new();
    let mut uvs: Vec<[f64; 2]> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut vertices: Vec<Vertex> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut lookup: HashMap<(usize, Option<usize>, Option<usize>), u32> = HashMap::new();
    let mut mtllib: Option<PathBuf> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(path, lineno, &rest)?;
                positions.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(path, lineno, &rest)?;
                uvs.push([u, v]);
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(path, lineno, &rest)?;
                normals.push(Vec3::new(x, y, z));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_err(path, lineno, "face needs at least 3 vertices"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for tok in &rest {
                    let mut it = tok.split('/');
                    let v = resolve_index(path, lineno, it.next().unwrap_or(""), positions.len(), "vertex")?;
                    let vt = match it.next() {
                        Some(s) if !s.is_empty() => Some(resolve_index(path, lineno, s, uvs.len(), "texture")?),
                        _ => None,
                    };
                    let vn = match it.next() {
                        Some(s) if !s.is_empty() => Some(resolve_index(path, lineno, s, normals.len(), "normal")?),
                        _ => None,
                    };
                    corners.push((v, vt, vn));
                }
                let face_normal = {
                    let a = positions[corners[0].0];
                    let b = positions[corners[1].0];
                    let c = positions[corners[2].0];
                    (b - a).cross(&(c - a)).normalized()
                };
                let mut ids = Vec::with_capacity(corners.len());
                for &(v, vt, vn) in &corners {
                    let id = match vn {
                        Some(_) => *lookup.entry((v, vt, vn)).or_insert_with(|| {
                            vertices.push(Vertex {
                                position: positions[v],
                                normal: normals[vn.unwrap()],
                                uv: vt.map(|i| uvs[i]).unwrap_or_else(|| spherical_uv(positions[v])),
                            });
                            (vertices.len() - 1) as u32
                        }),
                        None => {
                            vertices.push(Vertex {
                                position: positions[v],
                                normal: face_normal,
                                uv: vt.map(|i| uvs[i]).unwrap_or_else(|| spherical_uv(positions[v])),
                            });
                            (vertices.len() - 1) as u32
                        }
                    };
                    ids.push(id);
                }
                for k in 1..ids.len() - 1 {
                    triangles.push([ids[0], ids[k], ids[k + 1]]);
                }
            }
            "mtllib" => {
                if let Some(name) = rest.first() {
                    mtllib = Some(path.parent().unwrap_or(Path::new(".")).join(name));
                }
            }
            // groups, smoothing, materials: accepted and ignored
            "o" | "g" | "s" | "usemtl" | "l" | "vp" => {}
            other => return Err(parse_err(path, lineno, format!("unsupported statement `{other}`"))),
        }
    }

    let texture = match mtllib.as_deref().map(texture_from_mtl).transpose()?.flatten() {
        Some(t) => t,
        None => Texture::checkerboard(64, 8, [0.85, 0.85, 0.85], [0.35, 0.35, 0.35]),
    };
    TriMesh::with_positions(vertices, triangles, texture, &positions)
}

fn texture_from_mtl(mtl: &Path) -> Result<Option<Texture>> {
    let Ok(text) = fs::read_to_string(mtl) else {
        return Ok(None);
    };
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        if parts.next() == Some("map_Kd") {
            if let Some(name) = parts.last() {
                let p = mtl.parent().unwrap_or(Path::new(".")).join(name);
                return Texture::load_png(&p).map(Some);
            }
        }
    }
    Ok(None)
}

fn spherical_uv(p: Vec3) -> [f64; 2] {
    let n = p.normalized();
    let u = 0.5 + n.y().atan2(n.x()) / (2.0 * std::f64::consts::PI);
    let v = 0.5 + n.z().clamp(-1.0, 1.0).asin() / std::f64::consts::PI;
    [u, v]
}

/// Accumulates quads/triangles for procedural meshes.
#[derive(Default)]
struct Builder {
    vertices: Vec<Vertex>,
    triangles: Vec<[u32; 3]>,
}

impl Builder {
    /// Planar quad `a b c d` (counter-clockwise seen from the normal side),
    /// mapped to the texture rectangle `uv = [u0, v0, u1, v1]`.
    fn quad(&mut self, a: Vec3, b: Vec3, c: Vec3, d: Vec3, uv: [f64; 4]) {
        let n = (b - a).cross(&(c - a)).normalized();
        let base = self.vertices.len() as u32;
        let [u0, v0, u1, v1] = uv;
        for (p, t) in [(a, [u0, v0]), (b, [u1, v0]), (c, [u1, v1]), (d, [u0, v1])] {
            self.vertices.push(Vertex {
                position: p,
                normal: n,
                uv: t,
            });
        }
        self.triangles.push([base, base + 1, base + 2]);
        self.triangles.push([base, base + 2, base + 3]);
    }

    /// Axis-aligned box; face `i` uses `uvs[i]` (order −x +x −y +y −z +z).
    fn cuboid(&mut self, lo: Vec3, hi: Vec3, uvs: &[[f64; 4]; 6]) {
        let [x0, y0, z0] = lo.0;
        let [x1, y1, z1] = hi.0;
        let v = |x, y, z| Vec3::new(x, y, z);
        self.quad(v(x0, y0, z0), v(x0, y0, z1), v(x0, y1, z1), v(x0, y1, z0), uvs[0]);
        self.quad(v(x1, y0, z0), v(x1, y1, z0), v(x1, y1, z1), v(x1, y0, z1), uvs[1]);
        self.quad(v(x0, y0, z0), v(x1, y0, z0), v(x1, y0, z1), v(x0, y0, z1), uvs[2]);
        self.quad(v(x0, y1, z0), v(x0, y1, z1), v(x1, y1, z1), v(x1, y1, z0), uvs[3]);
        self.quad(v(x0, y0, z0), v(x0, y1, z0), v(x1, y1, z0), v(x1, y0, z0), uvs[4]);
        self.quad(v(x0, y0, z1), v(x1, y0, z1), v(x1, y1, z1), v(x0, y1, z1), uvs[5]);
    }

    fn build(self, texture: Texture) -> TriMesh {
        TriMesh::new(self.vertices, self.triangles, texture).expect("procedural mesh is valid")
    }
}

/// Axis-aligned cube of side `side` centered at the origin, one checker
/// texture over every face.
pub fn cube(side: f64) -> TriMesh {
    let h = side / 2.0;
    let mut b = Builder::default();
    b.cuboid(Vec3::new(-h, -h, -h), Vec3::new(h, h, h), &[[0.0, 0.0, 1.0, 1.0]; 6]);
    b.build(Texture::checkerboard(64, 8, [0.9, 0.9, 0.9], [0.3, 0.3, 0.3]))
}

/// Square of side `side` in the object's z = 0 plane, normal toward −z
/// (facing a camera that looks down +z).
pub fn square(side: f64, texture: Texture) -> TriMesh {
    let h = side / 2.0;
    let mut b = Builder::default();
    b.quad(
        Vec3::new(-h, -h, 0.0),
        Vec3::new(-h, h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(h, -h, 0.0),
        [0.0, 0.0, 1.0, 1.0],
    );
    b.build(texture)
}

/// Latitude/longitude sphere with smooth normals.
pub fn uv_sphere(radius: f64, rings: usize, segments: usize, texture: Texture) -> TriMesh {
    ellipsoid_with(Vec3::new(radius, radius, radius), rings, segments, texture, |_| 1.0)
}

fn ellipsoid_with(
    semi: Vec3,
    rings: usize,
    segments: usize,
    texture: Texture,
    bump: impl Fn(Vec3) -> f64,
) -> TriMesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    for r in 0..=rings {
        let phi = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..=segments {
            let theta = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            let dir = Vec3::new(phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos());
            let k = bump(dir);
            positions.push(Vec3::new(dir.x() * semi.x() * k, dir.y() * semi.y() * k, dir.z() * semi.z() * k));
            uvs.push([s as f64 / segments as f64, 1.0 - r as f64 / rings as f64]);
        }
    }
    let row = segments + 1;
    let mut triangles = Vec::new();
    for r in 0..rings {
        for s in 0..segments {
            let a = (r * row + s) as u32;
            let b = a + 1;
            let c = a + row as u32;
            let d = c + 1;
            if r != 0 {
                triangles.push([a, c, b]);
            }
            if r != rings - 1 {
                triangles.push([b, c, d]);
            }
        }
    }
    // seam and pole duplicates share positions, so smooth their normals jointly
    let mut canonical: HashMap<[i64; 3], u32> = HashMap::new();
    let ids: Vec<u32> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let key = p.0.map(|v| (v * 1e9).round() as i64);
            *canonical.entry(key).or_insert(i as u32)
        })
        .collect();
    let shared: Vec<[u32; 3]> = triangles.iter().map(|t| t.map(|i| ids[i as usize])).collect();
    let normals = smooth_normals(&positions, &shared);
    let vertices = positions
        .iter()
        .zip(&uvs)
        .enumerate()
        .map(|(i, (p, uv))| Vertex {
            position: *p,
            normal: normals[ids[i] as usize],
            uv: *uv,
        })
        .collect();
    let distinct: Vec<Vec3> = ids.iter().enumerate().filter(|(i, &c)| *i as u32 == c).map(|(i, _)| positions[i]).collect();
    TriMesh::with_positions(vertices, triangles, texture, &distinct).expect("ellipsoid mesh is valid").recentered()
}

/// Lumpy ellipsoid used as the augmentation occluder (hand-sized).
pub fn occluder(scale: f64) -> TriMesh {
    ellipsoid_with(
        Vec3::new(0.045 * scale, 0.025 * scale, 0.09 * scale),
        14,
        20,
        Texture::solid([0.8, 0.6, 0.5]),
        |d| 1.0 + 0.12 * (3.0 * d.x() + 1.0).sin() * (2.0 * d.z()).cos() + 0.08 * (4.0 * d.y()).sin(),
    )
}

/// Distinct color per atlas cell so every face reads differently.
fn toy_atlas() -> Texture {
    let size = 96;
    let cells = 4;
    let cell = size / cells;
    let palette: [[f32; 3]; 16] = [
        [0.90, 0.20, 0.15],
        [0.15, 0.60, 0.90],
        [0.95, 0.80, 0.15],
        [0.20, 0.75, 0.30],
        [0.60, 0.25, 0.80],
        [0.95, 0.55, 0.10],
        [0.10, 0.35, 0.45],
        [0.85, 0.85, 0.80],
        [0.45, 0.30, 0.15],
        [0.95, 0.45, 0.65],
        [0.30, 0.30, 0.35],
        [0.55, 0.85, 0.85],
        [0.75, 0.10, 0.35],
        [0.40, 0.55, 0.10],
        [0.15, 0.15, 0.70],
        [0.98, 0.95, 0.60],
    ];
    let texels = (0..size * size)
        .map(|i| {
            let (x, y) = (i % size, i / size);
            let base = palette[(y / cell) * cells + x / cell];
            // stripes and a corner dot inside each cell give in-face structure
            let (lx, ly) = (x % cell, y % cell);
            if (lx + 2 * ly) % 12 < 3 {
                base.map(|v| v * 0.45)
            } else if lx < cell / 3 && ly < cell / 3 {
                base.map(|v| 1.0 - 0.7 * v)
            } else {
                base
            }
        })
        .collect();
    Texture::new(size, size, texels).expect("atlas")
}

fn atlas_cell(i: usize) -> [f64; 4] {
    let (cx, cy) = ((i % 4) as f64, (i / 4) as f64);
    // v grows upward while texture rows grow downward
    [cx / 4.0, 1.0 - (cy + 1.0) / 4.0, (cx + 1.0) / 4.0, 1.0 - cy / 4.0]
}

/// Textured, asymmetric toy object about 15 cm across: a box body with an
/// offset block on top, every face a different atlas cell.
pub fn toy() -> TriMesh {
    let mut b = Builder::default();
    let body: [[f64; 4]; 6] = std::array::from_fn(atlas_cell);
    let block: [[f64; 4]; 6] = std::array::from_fn(|i| atlas_cell(i + 6));
    b.cuboid(Vec3::new(-0.045, -0.03, -0.025), Vec3::new(0.045, 0.03, 0.025), &body);
    b.cuboid(Vec3::new(0.005, -0.055, -0.015), Vec3::new(0.04, -0.03, 0.02), &block);
    b.build(toy_atlas()).recentered()
}

/// Axis-aligned textured box for procedural backgrounds.
pub fn textured_box(half: Vec3, texture: Texture) -> TriMesh {
    let mut b = Builder::default();
    b.cuboid(-half, half, &[[0.0, 0.0, 1.0, 1.0]; 6]);
    b.build(texture)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const CUBE_OBJ: &str = "\
# unit cube
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
";

    #[test]
    fn unit_cube_obj() {
        let dir = tempfile::tempdir().unwrap();
        let m = load_mesh(&write(dir.path(), "cube.obj", CUBE_OBJ)).unwrap();
        assert_eq!(m.triangles().len(), 12);
        assert!((m.radius() - 3f64.sqrt() / 2.0).abs() < 1e-6);
        assert!(m.centroid().norm() < 1e-12);
        for v in m.vertices() {
            assert!((v.normal.norm() - 1.0).abs() < 1e-6);
            // flat face normals point outward on a cube
            assert!(v.normal.dot(&v.position) > 0.0);
        }
    }

    #[test]
    fn quads_become_two_triangles() {
        let dir = tempfile::tempdir().unwrap();
        let body = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nvn 0 0 2\nf 1/1/1 2/2/1 3/3/1 4/4/1\n";
        let m = load_mesh(&write(dir.path(), "quad.obj", body)).unwrap();
        assert_eq!(m.triangles().len(), 2);
        assert_eq!(m.vertices().len(), 4);
        assert!((m.vertices()[0].normal.z() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corrupt_face_index_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = "v 0 0 0\nv 1 0 0\nv 1 1 0\n\nf 1 2 9\n";
        match load_mesh(&write(dir.path(), "bad.obj", body)) {
            Err(Error::MeshParse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        let err = load_mesh(&write(dir.path(), "bad2.obj", "v 0 0 x\n")).unwrap_err();
        assert!(err.to_string().contains(":1:"));
    }

    #[test]
    fn mesh_without_faces_is_empty_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_mesh(&write(dir.path(), "empty.obj", "v 0 0 0\n")).unwrap_err();
        assert!(matches!(err, Error::EmptyMesh));
    }

    #[test]
    fn obj_roundtrip_preserves_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let toy = toy();
        let p = dir.path().join("toy.obj");
        toy.write_obj(&p).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(back.triangles().len(), toy.triangles().len());
        assert!((back.radius() - toy.radius()).abs() < 1e-9);
    }

    #[test]
    fn procedural_meshes_are_valid() {
        let t = toy();
        assert!(t.radius() > 0.06 && t.radius() < 0.09, "toy radius {}", t.radius());
        assert!(t.centroid().norm() < 1e-12);
        let o = occluder(1.0);
        assert!(o.triangles().len() > 100);
        for v in o.vertices() {
            assert!((v.normal.norm() - 1.0).abs() < 1e-6);
            assert!(v.normal.dot(&v.position) > 0.0);
        }
        let s = uv_sphere(0.1, 16, 24, Texture::solid([1.0; 3]));
        assert!((s.radius() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn texture_sampling_wraps_and_flips_v() {
        let t = Texture::new(2, 2, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        // v = 0.9 is the top row
        assert_eq!(t.sample(0.1, 0.9), [1.0, 0.0, 0.0]);
        assert_eq!(t.sample(0.6, 0.1), [1.0, 1.0, 1.0]);
        assert_eq!(t.sample(1.1, 0.9), [1.0, 0.0, 0.0]);
    }
}
