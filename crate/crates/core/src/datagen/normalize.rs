use crate::error::{Error, Result};
use crate::raster::{BBox, RgbdFrame};

pub const CHANNELS: usize = 4;

/// Smallest bbox side (pixels) that still yields a meaningful crop.
pub const MIN_BBOX_SIDE: f64 = 4.0;

/// Per-channel mean and standard deviation (R, G, B, depth).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl ChannelStats {
    pub const IDENTITY: ChannelStats = ChannelStats {
        mean: [0.0; 4],
        std: [1.0; 4],
    };

    pub fn new(mean: [f64; 4], std: [f64; 4]) -> Result<Self> {
        let s = ChannelStats { mean, std };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for c in 0..CHANNELS {
            if !self.mean[c].is_finite() {
                return Err(Error::invalid(format!("channel {c} mean is not finite")));
            }
            if !(self.std[c] > 0.0 && self.std[c].is_finite()) {
                return Err(Error::ZeroVariance { channel: c });
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        out[..4].copy_from_slice(&self.mean);
        out[4..].copy_from_slice(&self.std);
        out
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        ChannelStats {
            mean: [v[0], v[1], v[2], v[3]],
            std: [v[4], v[5], v[6], v[7]],
        }
    }
}

impl Default for ChannelStats {
    fn default() -> Self {
        ChannelStats::IDENTITY
    }
}

/// `S×S×4` grid, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedInput {
    side: usize,
    data: Vec<f32>,
}

impl NormalizedInput {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Rebuilds an input from stored values (dataset and FFI readers).
    pub fn from_raw(side: usize, data: Vec<f32>) -> Result<Self> {
        if side == 0 || data.len() != side * side * CHANNELS {
            return Err(Error::shape(format!(
                "input of side {side} needs {} values, got {}",
                side * side * CHANNELS,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("input contains non-finite values"));
        }
        Ok(NormalizedInput { side, data })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.side + x) * CHANNELS + c]
    }
}

/// Crop + bilinear resize + depth shift, before standardization.
/// Samples outside the frame read as empty (zero RGB, no depth).
pub fn crop_resize(frame: &RgbdFrame, bbox: &BBox, side: usize, z_center: f64) -> Result<Vec<f32>> {
    if side == 0 {
        return Err(Error::invalid("input side must be positive"));
    }
    if !(bbox.side >= MIN_BBOX_SIDE) || !bbox.center_x.is_finite() || !bbox.center_y.is_finite() {
        return Err(Error::TrackingLost(format!("bounding box side {:.2} px is degenerate", bbox.side)));
    }
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let rgb = frame.rgb();
    let depth = frame.depth();
    let fetch = |x: i64, y: i64| -> [f32; 4] {
        if x < 0 || y < 0 || x >= w || y >= h {
            return [0.0; 4];
        }
        let i = (y * w + x) as usize;
        [rgb[i * 3], rgb[i * 3 + 1], rgb[i * 3 + 2], depth[i]]
    };
    let scale = bbox.side / side as f64;
    let z = z_center as f32;
    let mut out = vec![0.0f32; side * side * CHANNELS];
    for j in 0..side {
        let sy = bbox.min_y() + (j as f64 + 0.5) * scale - 0.5;
        let y0 = sy.floor();
        let fy = (sy - y0) as f32;
        let y0 = y0 as i64;
        for i in 0..side {
            let sx = bbox.min_x() + (i as f64 + 0.5) * scale - 0.5;
            let x0 = sx.floor();
            let fx = (sx - x0) as f32;
            let x0 = x0 as i64;
            let a = fetch(x0, y0);
            let b = fetch(x0 + 1, y0);
            let c = fetch(x0, y0 + 1);
            let d = fetch(x0 + 1, y0 + 1);
            let o = &mut out[(j * side + i) * CHANNELS..(j * side + i + 1) * CHANNELS];
            for ch in 0..CHANNELS {
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bot = c[ch] + (d[ch] - c[ch]) * fx;
                o[ch] = top + (bot - top) * fy;
            }
            o[3] -= z;
        }
    }
    Ok(out)
}

/// Standardizes a raw grid in place.
pub fn standardize(raw: &mut [f32], stats: &ChannelStats) {
    let mean = stats.mean.map(|v| v as f32);
    let inv = stats.std.map(|v| (1.0 / v) as f32);
    for px in raw.chunks_exact_mut(CHANNELS) {
        for c in 0..CHANNELS {
            px[c] = (px[c] - mean[c]) * inv[c];
        }
    }
}

/// Crops `bbox` out of `frame`, resizes to `side×side`, shifts depth by
/// `z_center` and standardizes with `stats`.
pub fn normalize_input(
    frame: &RgbdFrame,
    bbox: &BBox,
    stats: &ChannelStats,
    z_center: f64,
    side: usize,
) -> Result<NormalizedInput> {
    stats.validate()?;
    let mut data = crop_resize(frame, bbox, side, z_center)?;
    standardize(&mut data, stats);
    NormalizedInput::from_raw(side, data)
}

/// Mean/std per channel over every pixel of the given raw grids.
/// Accumulates in `f64` in slice order, so the result only depends on the set.
pub fn compute_channel_stats(raws: &[&[f32]]) -> Result<ChannelStats> {
    const MIN_SAMPLES: usize = 100;
    if raws.len() < MIN_SAMPLES {
        return Err(Error::DatasetTooSmall(format!(
            "channel statistics need at least {MIN_SAMPLES} inputs, got {}",
            raws.len()
        )));
    }
    // Two passes: mean first, then centered second moment.
    let mut sum = [0.0f64; 4];
    let mut count = 0usize;
    for raw in raws {
        if raw.len() % CHANNELS != 0 {
            return Err(Error::shape("raw input length is not a multiple of 4"));
        }
        for px in raw.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sum[c] += px[c] as f64;
            }
        }
        count += raw.len() / CHANNELS;
    }
    let mean = sum.map(|s| s / count as f64);
    let mut m2 = [0.0f64; 4];
    for raw in raws {
        for px in raw.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                let d = px[c] as f64 - mean[c];
                m2[c] += d * d;
            }
        }
    }
    let std = m2.map(|v| (v / count as f64).sqrt());
    for (c, s) in std.iter().enumerate() {
        if !(*s > 1e-12 * (1.0 + mean[c].abs())) {
            return Err(Error::ZeroVariance { channel: c });
        }
    }
    Ok(ChannelStats { mean, std })
}
