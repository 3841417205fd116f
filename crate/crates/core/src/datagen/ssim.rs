use crate::error::{Error, Result};
use crate::raster::RgbdFrame;

const WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Mean SSIM over all 8×8 windows (stride 1) of two grayscale images with
/// dynamic range 1. Images smaller than 8 pixels use one window per axis.
pub fn ssim_gray(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    if a.len() != width * height || b.len() != width * height || width == 0 || height == 0 {
        return Err(Error::shape("ssim inputs must both be width×height"));
    }
    let wx = WINDOW.min(width);
    let wy = WINDOW.min(height);
    // summed-area tables of a, b, a², b², ab
    let stride = width + 1;
    let mut tables = vec![[0.0f64; 5]; stride * (height + 1)];
    for y in 0..height {
        let mut row = [0.0f64; 5];
        for x in 0..width {
            let (p, q) = (a[y * width + x], b[y * width + x]);
            let v = [p, q, p * p, q * q, p * q];
            for k in 0..5 {
                row[k] += v[k];
            }
            let above = tables[y * stride + x + 1];
            let cell = &mut tables[(y + 1) * stride + x + 1];
            for k in 0..5 {
                cell[k] = above[k] + row[k];
            }
        }
    }
    let n = (wx * wy) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=height - wy {
        for x in 0..=width - wx {
            let t = |yy: usize, xx: usize| tables[yy * stride + xx];
            let (p, q, r, s) = (t(y, x), t(y, x + wx), t(y + wy, x), t(y + wy, x + wx));
            let mut m = [0.0; 5];
            for k in 0..5 {
                m[k] = (s[k] - q[k] - r[k] + p[k]) / n;
            }
            let (mu_a, mu_b) = (m[0], m[1]);
            let var_a = (m[2] - mu_a * mu_a).max(0.0);
            let var_b = (m[3] - mu_b * mu_b).max(0.0);
            let cov = m[4] - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2))
                / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM of the luma of two frames.
pub fn ssim(a: &RgbdFrame, b: &RgbdFrame) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::shape(format!(
            "ssim of {}x{} and {}x{} frames",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    ssim_gray(&a.gray(), &b.gray(), a.width(), a.height())
}

/// Greedy scan keeping frames that differ from the last kept one:
/// a frame is kept when `ssim(reference, frame) < threshold`.
/// Returns indices of kept frames; the first frame is always kept.
pub fn select_distinct(frames: &[RgbdFrame], threshold: f64) -> Result<Vec<usize>> {
    if frames.is_empty() {
        return Err(Error::invalid("background candidates are empty"));
    }
    let mut kept = vec![0];
    let mut reference = frames[0].gray();
    for (i, f) in frames.iter().enumerate().skip(1) {
        if !f.same_dims(&frames[0]) {
            return Err(Error::shape("background candidates must share dimensions"));
        }
        let g = f.gray();
        if ssim_gray(&reference, &g, f.width(), f.height())? < threshold {
            kept.push(i);
            reference = g;
        }
    }
    Ok(kept)
}

pub fn build_background_pool(frames: Vec<RgbdFrame>, threshold: f64) -> Result<Vec<RgbdFrame>> {
    let kept = select_distinct(&frames, threshold)?;
    let mut frames: Vec<Option<RgbdFrame>> = frames.into_iter().map(Some).collect();
    Ok(kept.into_iter().map(|i| frames[i].take().expect("index kept once")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, stream, Domain};

    /// Direct per-window evaluation, no summed-area tables.
    fn brute(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
        let mut total = 0.0;
        let mut count = 0;
        for y in 0..=h - 8 {
            for x in 0..=w - 8 {
                let idx: Vec<usize> = (0..64).map(|k| (y + k / 8) * w + x + k % 8).collect();
                let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / 64.0;
                let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / 64.0;
                let va = idx.iter().map(|&i| (a[i] - ma).powi(2)).sum::<f64>() / 64.0;
                let vb = idx.iter().map(|&i| (b[i] - mb).powi(2)).sum::<f64>() / 64.0;
                let cv = idx.iter().map(|&i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / 64.0;
                total += ((2.0 * ma * mb + C1) * (2.0 * cv + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                count += 1;
            }
        }
        total / count as f64
    }

    fn textured(w: usize, h: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Domain::Misc, 0);
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (0.5 + 0.2 * (x * 0.7).sin() * (y * 0.4).cos() + 0.1 * rng::uniform(&mut rng, -1.0, 1.0)).clamp(0.0, 1.0)
            })
            .collect()
    }

    #[test]
    fn identical_is_one() {
        let a = textured(20, 16, 1);
        assert!((ssim_gray(&a, &a, 20, 16).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force_and_inverse_is_negative() {
        let a = textured(16, 16, 2);
        let b = textured(16, 16, 3);
        assert!((ssim_gray(&a, &b, 16, 16).unwrap() - brute(&a, &b, 16, 16)).abs() < 1e-9);
        let inv: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let s = ssim_gray(&a, &inv, 16, 16).unwrap();
        assert!((s - brute(&a, &inv, 16, 16)).abs() < 1e-9);
        assert!(s < 0.0, "{s}");
    }

    #[test]
    fn noise_decreases_score() {
        let a = textured(64, 64, 4);
        let mut last = 1.0;
        for sigma in [0.01, 0.05, 0.1] {
            let mut rng = stream(5, Domain::Misc, 0);
            let b: Vec<f64> = a.iter().map(|v| v + sigma * rng::normal(&mut rng)).collect();
            let s = ssim_gray(&a, &b, 64, 64).unwrap();
            assert!(s < last, "sigma {sigma}: {s} !< {last}");
            last = s;
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(ssim(&RgbdFrame::new(8, 8), &RgbdFrame::new(9, 8)).is_err());
    }

    #[test]
    fn pool_selection() {
        let same = vec![RgbdFrame::filled(16, 16, [0.3; 3], 1.0); 5];
        assert_eq!(build_background_pool(same, 0.9).unwrap().len(), 1);
        let alt: Vec<RgbdFrame> = (0..6)
            .map(|i| RgbdFrame::filled(16, 16, [if i % 2 == 0 { 0.0 } else { 1.0 }; 3], 1.0))
            .collect();
        assert_eq!(build_background_pool(alt, 0.5).unwrap().len(), 6);
    }

    #[test]
    fn pool_size_grows_with_threshold() {
        // a slowly drifting texture: neighbors are similar, far frames are not
        let frames: Vec<RgbdFrame> = (0..24)
            .map(|t| {
                let mut f = RgbdFrame::new(32, 32);
                for y in 0..32 {
                    for x in 0..32 {
                        let v = 0.5 + 0.4 * ((x as f32 + 1.5 * t as f32) * 0.35).sin() * ((y as f32) * 0.3).cos();
                        f.set_pixel(x, y, [v; 3], 1.0);
                    }
                }
                f
            })
            .collect();
        let mut last = 0;
        for th in [0.0, 0.2, 0.4, 0.6, 0.8, 0.95, 1.01] {
            let n = select_distinct(&frames, th).unwrap().len();
            assert!(n >= last, "threshold {th}: {n} < {last}");
            last = n;
        }
        assert!(select_distinct(&frames, 0.0).unwrap().len() < 24);
        assert_eq!(last, 24);
    }
}
