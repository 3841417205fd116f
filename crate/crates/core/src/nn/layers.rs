//! Layer kernels with explicit backward passes. Activations are NHWC.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

use super::float::{matmul, Float};

/// Samples per shard when reducing weight gradients. Fixed, so the summation
/// order never depends on the worker count.
pub const SHARD: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn h(&self) -> usize {
        self.shape[1]
    }

    pub fn w(&self) -> usize {
        self.shape[2]
    }

    pub fn c(&self) -> usize {
        self.shape[3]
    }

    /// Values per batch item.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshaped(self, shape: [usize; 4]) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Unrolls every `k×k` patch of one `h×w×cin` sample into a row of `cols`.
fn im2col<T: Float>(x: &[T], h: usize, w: usize, cin: usize, k: usize, cols: &mut [T]) {
    let (ho, wo) = (h - k + 1, w - k + 1);
    let span = k * cin;
    let kk = k * span;
    debug_assert!(cols.len() >= ho * wo * kk);
    for oy in 0..ho {
        for ox in 0..wo {
            let row = (oy * wo + ox) * kk;
            for ky in 0..k {
                let src = ((oy + ky) * w + ox) * cin;
                cols[row + ky * span..row + (ky + 1) * span].copy_from_slice(&x[src..src + span]);
            }
        }
    }
}

fn col2im<T: Float>(cols: &[T], h: usize, w: usize, cin: usize, k: usize, dx: &mut [T]) {
    let (ho, wo) = (h - k + 1, w - k + 1);
    let span = k * cin;
    let kk = k * span;
    for oy in 0..ho {
        for ox in 0..wo {
            let row = (oy * wo + ox) * kk;
            for ky in 0..k {
                let dst = ((oy + ky) * w + ox) * cin;
                for (d, s) in dx[dst..dst + span].iter_mut().zip(&cols[row + ky * span..row + (ky + 1) * span]) {
                    *d += *s;
                }
            }
        }
    }
}

fn check_conv<T: Float>(x: &Tensor<T>, weights: &[T], bias: &[T], k: usize, cout: usize) -> Result<()> {
    if k == 0 || cout == 0 {
        return Err(Error::shape("kernel size and filter count must be positive"));
    }
    if weights.len() != k * k * x.c() * cout || bias.len() != cout {
        return Err(Error::shape(format!(
            "conv{k}-{cout} over {} channels needs {} weights and {cout} biases, got {} and {}",
            x.c(),
            k * k * x.c() * cout,
            weights.len(),
            bias.len()
        )));
    }
    if x.h() < k || x.w() < k {
        return Err(Error::shape(format!("{}x{} input is smaller than a {k}x{k} kernel", x.h(), x.w())));
    }
    Ok(())
}

/// Valid cross-correlation, stride 1. `weights` is laid out
/// `[ky][kx][cin][cout]`, i.e. a `(k·k·cin)×cout` row-major matrix.
pub fn conv2d_valid<T: Float>(x: &Tensor<T>, weights: &[T], bias: &[T], k: usize, cout: usize) -> Result<Tensor<T>> {
    check_conv(x, weights, bias, k, cout)?;
    let (n, h, w, cin) = (x.n(), x.h(), x.w(), x.c());
    let (ho, wo) = (h - k + 1, w - k + 1);
    let p = ho * wo;
    let kk = k * k * cin;
    let mut out = Tensor::zeros([n, ho, wo, cout]);
    out.data
        .par_chunks_mut(p * cout)
        .zip(x.data.par_chunks(h * w * cin))
        .for_each_init(
            || vec![T::zero(); p * kk],
            |cols, (o, xs)| {
                im2col(xs, h, w, cin, k, cols);
                for row in o.chunks_exact_mut(cout) {
                    row.copy_from_slice(bias);
                }
                matmul(p, kk, cout, cols, false, weights, false, o, T::one());
            },
        );
    Ok(out)
}

/// `(dx, dw, db)`; `dx` only when requested.
pub type ConvGrads<T> = (Option<Tensor<T>>, Vec<T>, Vec<T>);

/// Gradients of [`conv2d_valid`]: `(dx, dweights, dbias)`. `dx` is only
/// computed when requested.
pub fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    weights: &[T],
    k: usize,
    cout: usize,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let (n, h, w, cin) = (x.n(), x.h(), x.w(), x.c());
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    if dy.shape() != [n, ho, wo, cout] || weights.len() != k * k * cin * cout {
        return Err(Error::shape("conv backward operands disagree"));
    }
    let p = ho * wo;
    let kk = k * k * cin;
    let partials: Vec<(Vec<T>, Vec<T>)> = (0..n.div_ceil(SHARD))
        .into_par_iter()
        .map(|s| {
            let mut dw = vec![T::zero(); kk * cout];
            let mut db = vec![T::zero(); cout];
            let mut cols = vec![T::zero(); p * kk];
            for i in s * SHARD..((s + 1) * SHARD).min(n) {
                im2col(x.sample(i), h, w, cin, k, &mut cols);
                let g = dy.sample(i);
                matmul(kk, p, cout, &cols, true, g, false, &mut dw, T::one());
                for row in g.chunks_exact(cout) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += *v;
                    }
                }
            }
            (dw, db)
        })
        .collect();
    let mut dw = vec![T::zero(); kk * cout];
    let mut db = vec![T::zero(); cout];
    for (pw, pb) in partials {
        for (d, v) in dw.iter_mut().zip(pw) {
            *d += v;
        }
        for (d, v) in db.iter_mut().zip(pb) {
            *d += v;
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(x.shape());
        dx.data
            .par_chunks_mut(h * w * cin)
            .zip(dy.data.par_chunks(p * cout))
            .for_each_init(
                || vec![T::zero(); p * kk],
                |dcols, (dxs, g)| {
                    matmul(p, cout, kk, g, false, weights, true, dcols, T::zero());
                    col2im(dcols, h, w, cin, k, dxs);
                },
            );
        dx
    });
    Ok((dx, dw, db))
}

/// 2×2 max pooling, stride 2; odd trailing rows/columns are dropped.
/// Returns the per-sample flat index of every selected input value.
pub fn maxpool2<T: Float>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (n, h, w, c) = (x.n(), x.h(), x.w(), x.c());
    if h < 2 || w < 2 {
        return Err(Error::shape(format!("cannot pool a {h}x{w} map")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, ho, wo, c]);
    let mut arg = vec![0u32; n * ho * wo * c];
    out.data
        .par_chunks_mut(ho * wo * c)
        .zip(arg.par_chunks_mut(ho * wo * c))
        .zip(x.data.par_chunks(h * w * c))
        .for_each(|((o, a), xs)| {
            for oy in 0..ho {
                for ox in 0..wo {
                    for ch in 0..c {
                        let mut best = ((2 * oy) * w + 2 * ox) * c + ch;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let i = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                            if xs[i] > xs[best] {
                                best = i;
                            }
                        }
                        let j = (oy * wo + ox) * c + ch;
                        o[j] = xs[best];
                        a[j] = best as u32;
                    }
                }
            }
        });
    Ok((out, arg))
}

pub fn maxpool2_backward<T: Float>(dy: &Tensor<T>, argmax: &[u32], input_shape: [usize; 4]) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let in_len = input_shape[1] * input_shape[2] * input_shape[3];
    let out_len = dy.sample_len();
    dx.data
        .par_chunks_mut(in_len)
        .zip(dy.data.par_chunks(out_len).zip(argmax.par_chunks(out_len)))
        .for_each(|(d, (g, a))| {
            for (v, &i) in g.iter().zip(a) {
                d[i as usize] += *v;
            }
        });
    dx
}

pub const BN_EPS: f64 = 1e-5;

/// Values kept from a train-mode batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
    pub rows: usize,
}

/// Per-channel batch normalization over all rows of a `rows×channels`
/// buffer using batch statistics. `batch` is the number of samples the rows
/// came from; at least two are required.
pub fn batchnorm_train<T: Float>(
    x: &[T],
    channels: usize,
    batch: usize,
    gamma: &[T],
    beta: &[T],
) -> Result<(Vec<T>, BnCache<T>)> {
    if batch < 2 {
        return Err(Error::invalid("batch normalization in train mode needs a batch of at least 2"));
    }
    if channels == 0 || !x.len().is_multiple_of(channels) || gamma.len() != channels || beta.len() != channels {
        return Err(Error::shape("batch norm operands disagree"));
    }
    let rows = x.len() / channels;
    let mut mean = vec![0.0f64; channels];
    for row in x.chunks_exact(channels) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0f64; channels];
    for row in x.chunks_exact(channels) {
        for c in 0..channels {
            let d = row[c].f64() - mean[c];
            var[c] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= rows as f64);
    let inv_std: Vec<T> = var.iter().map(|v| T::c(1.0 / (v + BN_EPS).sqrt())).collect();
    let mean_t: Vec<T> = mean.iter().map(|&m| T::c(m)).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for ((xr, hr), yr) in x.chunks_exact(channels).zip(xhat.chunks_exact_mut(channels)).zip(y.chunks_exact_mut(channels)) {
        for c in 0..channels {
            let h = (xr[c] - mean_t[c]) * inv_std[c];
            hr[c] = h;
            yr[c] = gamma[c] * h + beta[c];
        }
    }
    Ok((
        y,
        BnCache {
            xhat,
            inv_std,
            mean,
            var,
            rows,
        },
    ))
}

/// Batch normalization with running statistics.
pub fn batchnorm_eval<T: Float>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
) -> Vec<T> {
    let channels = gamma.len();
    let scale: Vec<T> = (0..channels)
        .map(|c| gamma[c] / (running_var[c] + T::c(BN_EPS)).sqrt())
        .collect();
    let shift: Vec<T> = (0..channels).map(|c| beta[c] - running_mean[c] * scale[c]).collect();
    let mut y = x.to_vec();
    for row in y.chunks_exact_mut(channels) {
        for c in 0..channels {
            row[c] = row[c] * scale[c] + shift[c];
        }
    }
    y
}

/// `(dx, dgamma, dbeta)` of a train-mode batch-norm pass.
pub fn batchnorm_backward<T: Float>(dy: &[T], cache: &BnCache<T>, gamma: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let channels = gamma.len();
    let mut sum_dy = vec![0.0f64; channels];
    let mut sum_dy_xhat = vec![0.0f64; channels];
    for (g, h) in dy.chunks_exact(channels).zip(cache.xhat.chunks_exact(channels)) {
        for c in 0..channels {
            sum_dy[c] += g[c].f64();
            sum_dy_xhat[c] += (g[c] * h[c]).f64();
        }
    }
    let m = cache.rows as f64;
    let coef: Vec<T> = (0..channels).map(|c| gamma[c] * cache.inv_std[c]).collect();
    let mean_dy: Vec<T> = sum_dy.iter().map(|&s| T::c(s / m)).collect();
    let mean_dyh: Vec<T> = sum_dy_xhat.iter().map(|&s| T::c(s / m)).collect();
    let mut dx = vec![T::zero(); dy.len()];
    for ((d, g), h) in dx.chunks_exact_mut(channels).zip(dy.chunks_exact(channels)).zip(cache.xhat.chunks_exact(channels)) {
        for c in 0..channels {
            d[c] = coef[c] * (g[c] - mean_dy[c] - h[c] * mean_dyh[c]);
        }
    }
    (
        dx,
        sum_dy_xhat.into_iter().map(T::c).collect(),
        sum_dy.into_iter().map(T::c).collect(),
    )
}

#[inline]
pub fn elu<T: Float>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_inplace<T: Float>(x: &mut [T]) {
    x.par_chunks_mut(1 << 14).for_each(|c| c.iter_mut().for_each(|v| *v = elu(*v)));
}

/// Multiplies `dy` by ELU′ expressed through the forward output `y`.
pub fn elu_backward_inplace<T: Float>(dy: &mut [T], y: &[T]) {
    dy.par_chunks_mut(1 << 14).zip(y.par_chunks(1 << 14)).for_each(|(d, y)| {
        for (g, &o) in d.iter_mut().zip(y) {
            if o <= T::zero() {
                *g *= o + T::one();
            }
        }
    });
}

pub fn tanh_inplace<T: Float>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward_inplace<T: Float>(dy: &mut [T], y: &[T]) {
    for (g, &o) in dy.iter_mut().zip(y) {
        *g *= T::one() - o * o;
    }
}

/// Inverted-dropout mask: `1/keep` with probability `keep`, else 0.
pub fn dropout_mask<T: Float, R: Rng + ?Sized>(len: usize, keep: f64, rng: &mut R) -> Result<Vec<T>> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::invalid(format!("dropout keep rate {keep} outside (0, 1]")));
    }
    if keep == 1.0 {
        return Ok(vec![T::one(); len]);
    }
    let scale = T::c(1.0 / keep);
    Ok((0..len).map(|_| if rng::bernoulli(rng, keep) { scale } else { T::zero() }).collect())
}

/// `x (n×fan_in) · W (fan_in×units) + b`.
pub fn dense<T: Float>(x: &[T], n: usize, weights: &[T], bias: &[T]) -> Result<Vec<T>> {
    let units = bias.len();
    if n == 0 || !x.len().is_multiple_of(n) || weights.len() != (x.len() / n) * units {
        return Err(Error::shape(format!(
            "dense layer: {} inputs over {n} rows do not match {} weights for {units} units",
            x.len(),
            weights.len()
        )));
    }
    let fan_in = x.len() / n;
    let mut y: Vec<T> = bias.iter().cycle().take(n * units).copied().collect();
    matmul(n, fan_in, units, x, false, weights, false, &mut y, T::one());
    Ok(y)
}

/// `(dx, dweights, dbias)` of [`dense`].
pub fn dense_backward<T: Float>(x: &[T], n: usize, weights: &[T], dy: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let units = dy.len() / n;
    let fan_in = x.len() / n;
    let mut dw = vec![T::zero(); fan_in * units];
    matmul(fan_in, n, units, x, true, dy, false, &mut dw, T::zero());
    let mut db = vec![T::zero(); units];
    for row in dy.chunks_exact(units) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += *v;
        }
    }
    let mut dx = vec![T::zero(); n * fan_in];
    matmul(n, units, fan_in, dy, false, weights, true, &mut dx, T::zero());
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut r = stream(seed, Domain::Misc, 0);
        (0..len).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect()
    }

    #[test]
    fn conv_identity_and_sum_kernels() {
        let x = Tensor::from_vec([2, 5, 4, 3], random(120, 1)).unwrap();
        let mut id = vec![0.0; 9];
        for c in 0..3 {
            id[c * 3 + c] = 1.0;
        }
        let y = conv2d_valid(&x, &id, &[0.0; 3], 1, 3).unwrap();
        assert_eq!(y, x);
        let ones = Tensor::from_vec([1, 150, 150, 1], vec![1.0f64; 22500]).unwrap();
        let y = conv2d_valid(&ones, &[1.0; 25], &[0.0], 5, 1).unwrap();
        assert_eq!(y.shape(), [1, 146, 146, 1]);
        assert!(y.data().iter().all(|&v| v == 25.0));
    }

    #[test]
    fn conv_matches_six_loops() {
        let (h, w, cin, k, cout) = (8, 8, 3, 3, 2);
        let x = Tensor::from_vec([2, h, w, cin], random(2 * h * w * cin, 2)).unwrap();
        let wts = random(k * k * cin * cout, 3);
        let b = random(cout, 4);
        let y = conv2d_valid(&x, &wts, &b, k, cout).unwrap();
        for n in 0..2 {
            for oy in 0..h - k + 1 {
                for ox in 0..w - k + 1 {
                    for co in 0..cout {
                        let mut s = b[co];
                        for ky in 0..k {
                            for kx in 0..k {
                                for ci in 0..cin {
                                    s += x.sample(n)[((oy + ky) * w + ox + kx) * cin + ci]
                                        * wts[((ky * k + kx) * cin + ci) * cout + co];
                                }
                            }
                        }
                        let got = y.sample(n)[((oy * (w - k + 1)) + ox) * cout + co];
                        assert!((got - s).abs() < 1e-10);
                    }
                }
            }
        }
        assert!(conv2d_valid(&x, &wts[1..], &b, k, cout).is_err());
        let tiny = Tensor::from_vec([1, 2, 2, 3], vec![0.0; 12]).unwrap();
        assert!(conv2d_valid(&tiny, &wts, &b, k, cout).is_err());
    }

    #[test]
    fn pool_shapes_and_constant() {
        let x = Tensor::from_vec([1, 73, 73, 2], vec![0.5f64; 73 * 73 * 2]).unwrap();
        let (y, _) = maxpool2(&x).unwrap();
        assert_eq!(y.shape(), [1, 36, 36, 2]);
        assert!(y.data().iter().all(|&v| v == 0.5));
        let x = Tensor::from_vec([1, 2, 2, 1], vec![1.0, 4.0, 3.0, 2.0]).unwrap();
        let (y, a) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(a, vec![1]);
        let dx = maxpool2_backward(&Tensor::from_vec([1, 1, 1, 1], vec![2.0]).unwrap(), &a, x.shape());
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let x = random(64 * 3, 5).iter().enumerate().map(|(i, v)| v * 3.0 + i as f64 % 3.0).collect::<Vec<_>>();
        let (y, _) = batchnorm_train(&x, 3, 64, &[1.0; 3], &[0.0; 3]).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = y.iter().skip(c).step_by(3).copied().collect();
            let m = col.iter().sum::<f64>() / 64.0;
            let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 64.0;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-5, "{v}");
        }
        assert!(batchnorm_train(&x[..3], 3, 1, &[1.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn batchnorm_eval_is_batch_independent() {
        let x = random(12, 6);
        let (g, b, m, v) = ([1.5, 0.5], [0.1, -0.2], [0.3, -0.1], [2.0, 0.5]);
        let all = batchnorm_eval(&x, &g, &b, &m, &v);
        let first = batchnorm_eval(&x[..2], &g, &b, &m, &v);
        assert_eq!(&all[..2], &first[..]);
        assert_eq!(all, batchnorm_eval(&x, &g, &b, &m, &v));
    }

    #[test]
    fn activations() {
        assert_eq!(elu(0.0f64), 0.0);
        assert_eq!(elu(2.0f64), 2.0);
        assert!((elu(-20.0f64) - ((-20.0f64).exp() - 1.0)).abs() < 1e-15);
        let mut t = vec![-50.0f64, -1.0, 0.0, 1.0, 50.0];
        tanh_inplace(&mut t);
        assert!(t.iter().all(|v| *v >= -1.0 && *v <= 1.0));
    }

    #[test]
    fn dropout_modes() {
        let mut r = stream(7, Domain::Misc, 0);
        assert!(dropout_mask::<f64, _>(10, 1.0, &mut r).unwrap().iter().all(|&m| m == 1.0));
        assert!(dropout_mask::<f64, _>(10, 0.0, &mut r).is_err());
        let x = random(50, 8);
        let mut acc = vec![0.0; 50];
        for _ in 0..10_000 {
            let m: Vec<f64> = dropout_mask(50, 0.5, &mut r).unwrap();
            for i in 0..50 {
                acc[i] += x[i] * m[i];
            }
        }
        let total_x: f64 = x.iter().map(|v| v.abs()).sum();
        let err: f64 = acc.iter().zip(&x).map(|(a, v)| (a / 10_000.0 - v).abs()).sum();
        assert!(err < 0.02 * total_x, "{err} vs {total_x}");
    }

    #[test]
    fn dense_matches_dot_products() {
        let x = random(3 * 5, 9);
        let w = random(5 * 4, 10);
        let b = random(4, 11);
        let y = dense(&x, 3, &w, &b).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let s: f64 = b[j] + (0..5).map(|p| x[i * 5 + p] * w[p * 4 + j]).sum::<f64>();
                assert!((y[i * 4 + j] - s).abs() < 1e-10);
            }
        }
        let mut eye = vec![0.0; 25];
        (0..5).for_each(|i| eye[i * 6] = 1.0);
        assert_eq!(dense(&x, 3, &eye, &[0.0; 5]).unwrap(), x);
        assert!(dense(&x, 3, &w[1..], &b).is_err());
    }
}
