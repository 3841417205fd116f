use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{create_output, Error, Result};

/// RGB in `[0,1]` (interleaved) plus metric depth; depth 0 means no data.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    width: usize,
    height: usize,
    rgb: Vec<f32>,
    depth: Vec<f32>,
}

impl RgbdFrame {
    /// All-empty frame (black, no depth).
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        RgbdFrame {
            width,
            height,
            rgb: vec![0.0; width * height * 3],
            depth: vec![0.0; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, rgb: Vec<f32>, depth: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if rgb.len() != width * height * 3 || depth.len() != width * height {
            return Err(Error::shape(format!(
                "frame {width}x{height} needs {} rgb and {} depth values, got {} and {}",
                width * height * 3,
                width * height,
                rgb.len(),
                depth.len()
            )));
        }
        let mut f = RgbdFrame {
            width,
            height,
            rgb,
            depth,
        };
        f.sanitize();
        Ok(f)
    }

    /// Constant-valued frame.
    pub fn filled(width: usize, height: usize, rgb: [f32; 3], depth: f32) -> Self {
        let mut f = RgbdFrame::new(width, height);
        for px in f.rgb.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        f.depth.fill(depth.max(0.0));
        f.sanitize();
        f
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn rgb(&self) -> &[f32] {
        &self.rgb
    }
    #[inline]
    pub fn depth(&self) -> &[f32] {
        &self.depth
    }
    #[inline]
    pub fn rgb_mut(&mut self) -> &mut [f32] {
        &mut self.rgb
    }
    #[inline]
    pub fn depth_mut(&mut self) -> &mut [f32] {
        &mut self.depth
    }

    #[inline]
    pub fn pixel_rgb(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    #[inline]
    pub fn pixel_depth(&self, x: usize, y: usize) -> f32 {
        self.depth[y * self.width + x]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3], depth: f32) {
        let i = y * self.width + x;
        self.rgb[i * 3..i * 3 + 3].copy_from_slice(&rgb);
        self.depth[i] = depth;
    }

    /// Value of channel `c` (0..3 = RGB, 3 = depth) at pixel index `i`.
    #[inline]
    pub fn channel(&self, i: usize, c: usize) -> f32 {
        if c < 3 {
            self.rgb[i * 3 + c]
        } else {
            self.depth[i]
        }
    }

    pub fn same_dims(&self, other: &RgbdFrame) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Number of pixels with depth.
    pub fn coverage(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    /// Clamps RGB into `[0,1]`, negative or non-finite depth to 0.
    pub fn sanitize(&mut self) {
        for v in &mut self.rgb {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        for d in &mut self.depth {
            if !(d.is_finite() && *d > 0.0) {
                *d = 0.0;
            }
        }
    }

    /// Sub-window with top-left at `(x0, y0)`; pixels outside the frame are empty.
    pub fn crop(&self, x0: i64, y0: i64, width: usize, height: usize) -> RgbdFrame {
        let mut out = RgbdFrame::new(width, height);
        for y in 0..height {
            let sy = y0 + y as i64;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            let xs = (x0.max(0)).min(self.width as i64);
            let xe = (x0 + width as i64).clamp(0, self.width as i64);
            if xe <= xs {
                continue;
            }
            let n = (xe - xs) as usize;
            let dst = y * width + (xs - x0) as usize;
            let src = sy as usize * self.width + xs as usize;
            out.depth[dst..dst + n].copy_from_slice(&self.depth[src..src + n]);
            out.rgb[dst * 3..(dst + n) * 3].copy_from_slice(&self.rgb[src * 3..(src + n) * 3]);
        }
        out
    }

    /// Luma in `[0,1]` (Rec. 601 weights).
    pub fn gray(&self) -> Vec<f64> {
        self.rgb
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    /// Writes `<stem>` as an 8-bit RGB PNG at `color_path` and a 16-bit
    /// grayscale PNG of depth in 0.1 mm units at `depth_path`. Depths beyond
    /// the 16-bit range are written as no-data.
    pub fn write_png_pair(&self, color_path: &Path, depth_path: &Path) -> Result<()> {
        let color: Vec<u8> = self.rgb.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        write_png(color_path, self.width, self.height, png::ColorType::Rgb, png::BitDepth::Eight, &color)?;
        let mut depth = Vec::with_capacity(self.depth.len() * 2);
        for &d in &self.depth {
            let units = (d as f64 * 1e4).round();
            let v = if d > 0.0 && units <= u16::MAX as f64 { units as u16 } else { 0 };
            depth.extend_from_slice(&v.to_be_bytes());
        }
        write_png(depth_path, self.width, self.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &depth)
    }

    pub fn read_png_pair(color_path: &Path, depth_path: &Path) -> Result<RgbdFrame> {
        let (cw, ch, color) = read_png(color_path)?;
        let (dw, dh, depth) = read_png(depth_path)?;
        if (cw, ch) != (dw, dh) {
            return Err(Error::shape(format!("color {cw}x{ch} vs depth {dw}x{dh}")));
        }
        let rgb = match color {
            Decoded::Rgb8(v) => v.iter().map(|&b| b as f32 / 255.0).collect(),
            Decoded::Gray16(_) => return Err(Error::Png(format!("{}: expected 8-bit RGB", color_path.display()))),
        };
        let depth = match depth {
            Decoded::Gray16(v) => v.iter().map(|&u| u as f32 * 1e-4).collect(),
            Decoded::Rgb8(_) => {
                return Err(Error::Png(format!("{}: expected 16-bit grayscale", depth_path.display())))
            }
        };
        RgbdFrame::from_parts(cw, ch, rgb, depth)
    }
}

enum Decoded {
    Rgb8(Vec<u8>),
    Gray16(Vec<u16>),
}

pub(crate) fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = BufWriter::new(create_output(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer.write_image_data(data).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}

fn read_png(path: &Path) -> Result<(usize, usize, Decoded)> {
    let dec = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = dec.read_info().map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    match (info.color_type, info.bit_depth) {
        (png::ColorType::Rgb, png::BitDepth::Eight) => Ok((w, h, Decoded::Rgb8(buf))),
        (png::ColorType::Rgba, png::BitDepth::Eight) => {
            let rgb = buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
            Ok((w, h, Decoded::Rgb8(rgb)))
        }
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => {
            let v = buf.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
            Ok((w, h, Decoded::Gray16(v)))
        }
        (ct, bd) => Err(Error::Png(format!("{}: unsupported PNG layout {ct:?}/{bd:?}", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_zero_pads_outside() {
        let f = RgbdFrame::filled(4, 3, [0.5, 0.25, 1.0], 2.0);
        let c = f.crop(-1, 1, 3, 3);
        assert_eq!(c.pixel_depth(0, 0), 0.0);
        assert_eq!(c.pixel_depth(1, 0), 2.0);
        assert_eq!(c.pixel_rgb(2, 1), [0.5, 0.25, 1.0]);
        assert_eq!(c.pixel_depth(1, 2), 0.0);
    }

    #[test]
    fn from_parts_clamps_and_checks_lengths() {
        let f = RgbdFrame::from_parts(1, 1, vec![2.0, -1.0, 0.5], vec![-3.0]).unwrap();
        assert_eq!(f.pixel_rgb(0, 0), [1.0, 0.0, 0.5]);
        assert_eq!(f.pixel_depth(0, 0), 0.0);
        assert!(RgbdFrame::from_parts(2, 1, vec![0.0; 3], vec![0.0; 2]).is_err());
    }

    #[test]
    fn png_pair_roundtrip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = RgbdFrame::new(5, 4);
        f.set_pixel(1, 2, [0.2, 0.4, 0.6], 1.23456);
        f.set_pixel(3, 0, [1.0, 0.0, 0.0], 9.0);
        let (c, d) = (dir.path().join("c.png"), dir.path().join("d.png"));
        f.write_png_pair(&c, &d).unwrap();
        let g = RgbdFrame::read_png_pair(&c, &d).unwrap();
        assert_eq!((g.width(), g.height()), (5, 4));
        for (a, b) in f.rgb().iter().zip(g.rgb()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        assert!((g.pixel_depth(1, 2) - 1.2346).abs() < 1e-5);
        // out of 16-bit range becomes no-data
        assert_eq!(g.pixel_depth(3, 0), 0.0);
    }
}
