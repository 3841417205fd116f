use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RgbdFrame;
use crate::rng;

/// Probabilities and ranges of the observed-frame augmentations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub p_noise: f64,
    /// Noise σ is drawn from `U(0, sigma_max)`, in 8-bit-equivalent units.
    pub sigma_max: f64,
    pub p_blur: f64,
    pub p_occluder: f64,
    pub hue_range: f64,
    pub lum_range: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_noise: 0.95,
            sigma_max: 2.0,
            p_blur: 0.40,
            p_occluder: 0.60,
            hue_range: 0.05,
            lum_range: 0.05,
        }
    }
}

impl AugmentConfig {
    /// Every augmentation switched off.
    pub fn none() -> Self {
        AugmentConfig {
            p_noise: 0.0,
            sigma_max: 0.0,
            p_blur: 0.0,
            p_occluder: 0.0,
            hue_range: 0.0,
            lum_range: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_noise", self.p_noise), ("p_blur", self.p_blur), ("p_occluder", self.p_occluder)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, r) in [
            ("sigma_max", self.sigma_max),
            ("hue_range", self.hue_range),
            ("lum_range", self.lum_range),
        ] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::invalid(format!("{name} = {r} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.p_noise, self.sigma_max, self.p_blur, self.p_occluder, self.hue_range, self.lum_range]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        AugmentConfig {
            p_noise: v[0],
            sigma_max: v[1],
            p_blur: v[2],
            p_occluder: v[3],
            hue_range: v[4],
            lum_range: v[5],
        }
    }
}

/// Which augmentations a generated sample received.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentFlags {
    pub occluder: bool,
    pub blur: bool,
    pub noise: bool,
    pub sigma: f64,
    pub hue_shift: f64,
    pub lum_shift: f64,
}

pub fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max > 0.0 { d / max } else { 0.0 };
    [h, s, max]
}

pub fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as i32).clamp(0, 5);
    let f = h6 - sector as f32;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Shifts hue (wrapping on `[0,1)`) and value (clamped) of every pixel that
/// has depth. Depth is untouched.
pub fn perturb_color(frame: &mut RgbdFrame, hue_shift: f64, lum_shift: f64) {
    if hue_shift == 0.0 && lum_shift == 0.0 {
        return;
    }
    let n = frame.width() * frame.height();
    for i in 0..n {
        if frame.depth()[i] <= 0.0 {
            continue;
        }
        let px = &mut frame.rgb_mut()[i * 3..i * 3 + 3];
        let [h, s, v] = rgb_to_hsv([px[0], px[1], px[2]]);
        let h = (h + hue_shift as f32).rem_euclid(1.0);
        let v = (v + lum_shift as f32).clamp(0.0, 1.0);
        let out = hsv_to_rgb([h, s, v]);
        for (dst, c) in px.iter_mut().zip(out) {
            *dst = c.clamp(0.0, 1.0);
        }
    }
}

/// Adds `N(0, σ)` in 8-bit-equivalent units: RGB on a 0–255 scale and depth in
/// millimeters. RGB is clamped to `[0,1]`; only pixels with depth receive
/// depth noise, and depth never goes negative.
pub fn add_gaussian_noise<R: Rng + ?Sized>(frame: &mut RgbdFrame, sigma: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    let rgb_scale = (sigma / 255.0) as f32;
    let depth_scale = (sigma * 1e-3) as f32;
    for v in frame.rgb_mut() {
        *v = (*v + rng::normal(rng) as f32 * rgb_scale).clamp(0.0, 1.0);
    }
    for d in frame.depth_mut() {
        let noise = rng::normal(rng) as f32 * depth_scale;
        if *d > 0.0 {
            *d = (*d + noise).max(0.0);
        }
    }
}

/// 3×3 box filter over all four channels with replicated borders.
pub fn mean_blur3(frame: &RgbdFrame) -> RgbdFrame {
    let (w, h) = (frame.width(), frame.height());
    let mut out = frame.clone();
    let src_rgb = frame.rgb();
    let src_d = frame.depth();
    let clampx = |x: i64| x.clamp(0, w as i64 - 1) as usize;
    let clampy = |y: i64| y.clamp(0, h as i64 - 1) as usize;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 4];
            for dy in -1..=1 {
                let sy = clampy(y as i64 + dy);
                for dx in -1..=1 {
                    let sx = clampx(x as i64 + dx);
                    let i = sy * w + sx;
                    acc[0] += src_rgb[i * 3];
                    acc[1] += src_rgb[i * 3 + 1];
                    acc[2] += src_rgb[i * 3 + 2];
                    acc[3] += src_d[i];
                }
            }
            let i = y * w + x;
            out.rgb_mut()[i * 3..i * 3 + 3].copy_from_slice(&[acc[0] / 9.0, acc[1] / 9.0, acc[2] / 9.0]);
            out.depth_mut()[i] = acc[3] / 9.0;
        }
    }
    out
}
