use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::normalize::CHANNELS;
use crate::error::{Error, Result};
use crate::rng::{self, stream, Domain};

use super::float::Float;
use super::layers::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, conv2d_backward, conv2d_valid, dense, dense_backward,
    dropout_mask, elu_backward_inplace, elu_inplace, maxpool2, maxpool2_backward, tanh_backward_inplace,
    tanh_inplace, BnCache, Tensor,
};

pub const OUTPUTS: usize = 6;
pub const BRANCH_KERNEL: usize = 5;
pub const TRUNK_KERNEL: usize = 3;
pub const TRUNK_LAYERS: usize = 3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Layer sizes. The paper's network is [`ArchConfig::paper`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub input_side: usize,
    pub branch_filters: usize,
    pub trunk_filters: usize,
    pub fc_units: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig::paper()
    }
}

impl ArchConfig {
    /// 150×150 inputs, conv5-24 branches, conv3-48 trunk, FC-50.
    pub fn paper() -> Self {
        ArchConfig {
            input_side: 150,
            branch_filters: 24,
            trunk_filters: 48,
            fc_units: 50,
        }
    }

    /// Half the filter counts at a given input side.
    pub fn reduced(input_side: usize) -> Self {
        ArchConfig {
            input_side,
            branch_filters: 12,
            trunk_filters: 24,
            fc_units: 50,
        }
    }

    /// Spatial side after every conv and pool, in order.
    pub fn shape_chain(&self) -> Result<Vec<usize>> {
        let mut chain = Vec::with_capacity(2 + 2 * TRUNK_LAYERS);
        let mut s = self.input_side;
        for (i, k) in std::iter::once(BRANCH_KERNEL).chain([TRUNK_KERNEL; TRUNK_LAYERS]).enumerate() {
            if s < k + 1 {
                return Err(Error::ArchitectureMismatch(format!(
                    "input side {} is too small: stage {i} sees a {s}x{s} map",
                    self.input_side
                )));
            }
            s = s + 1 - k;
            chain.push(s);
            s /= 2;
            chain.push(s);
        }
        Ok(chain)
    }

    pub fn flatten_len(&self) -> Result<usize> {
        let last = *self.shape_chain()?.last().expect("non-empty chain");
        Ok(last * last * self.trunk_filters)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branch_filters == 0 || self.trunk_filters == 0 || self.fc_units == 0 {
            return Err(Error::ArchitectureMismatch("layer widths must be positive".into()));
        }
        self.shape_chain().map(|_| ())
    }

    /// Every stored value, running statistics included.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        let (b, t, f) = (self.branch_filters, self.trunk_filters, self.fc_units);
        let branch = BRANCH_KERNEL * BRANCH_KERNEL * CHANNELS * b + b + 4 * b;
        let mut trunk = 0;
        let mut cin = 2 * b;
        for _ in 0..TRUNK_LAYERS {
            trunk += TRUNK_KERNEL * TRUNK_KERNEL * cin * t + t + 4 * t;
            cin = t;
        }
        let fc = self.flatten_len()? * f + f + 4 * f + f * OUTPUTS + OUTPUTS;
        Ok(2 * branch + trunk + fc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    /// `[ky][kx][cin][cout]`.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub fan_in: usize,
    pub units: usize,
    /// `fan_in × units`, row-major.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// All weights of the two-branch network. Also used as the gradient container,
/// where the running statistics stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: ArchConfig,
    pub pred_conv: Conv<T>,
    pub obs_conv: Conv<T>,
    pub pred_bn: Norm<T>,
    pub obs_bn: Norm<T>,
    pub trunk_conv: Vec<Conv<T>>,
    pub trunk_bn: Vec<Norm<T>>,
    pub fc1: Dense<T>,
    pub fc1_bn: Norm<T>,
    pub fc2: Dense<T>,
}

fn conv<T: Float>(k: usize, cin: usize, cout: usize) -> Conv<T> {
    Conv {
        k,
        cin,
        cout,
        w: vec![T::zero(); k * k * cin * cout],
        b: vec![T::zero(); cout],
    }
}

fn norm<T: Float>(c: usize, var: T) -> Norm<T> {
    Norm {
        gamma: vec![T::zero(); c],
        beta: vec![T::zero(); c],
        running_mean: vec![T::zero(); c],
        running_var: vec![var; c],
    }
}

fn fc<T: Float>(fan_in: usize, units: usize) -> Dense<T> {
    Dense {
        fan_in,
        units,
        w: vec![T::zero(); fan_in * units],
        b: vec![T::zero(); units],
    }
}

fn fill_uniform<T: Float, R: Rng + ?Sized>(buf: &mut [T], limit: f64, rng: &mut R) {
    for v in buf {
        *v = T::c(rng::symmetric(rng, limit));
    }
}

impl<T: Float> NetworkParams<T> {
    /// Every value zero (gradient container).
    pub fn zeros(arch: ArchConfig) -> Result<Self> {
        Self::blank(arch, T::zero())
    }

    fn blank(arch: ArchConfig, var: T) -> Result<Self> {
        arch.validate()?;
        let (b, t, f) = (arch.branch_filters, arch.trunk_filters, arch.fc_units);
        Ok(NetworkParams {
            arch,
            pred_conv: conv(BRANCH_KERNEL, CHANNELS, b),
            obs_conv: conv(BRANCH_KERNEL, CHANNELS, b),
            pred_bn: norm(b, var),
            obs_bn: norm(b, var),
            trunk_conv: (0..TRUNK_LAYERS)
                .map(|i| conv(TRUNK_KERNEL, if i == 0 { 2 * b } else { t }, t))
                .collect(),
            trunk_bn: (0..TRUNK_LAYERS).map(|_| norm(t, var)).collect(),
            fc1: fc(arch.flatten_len()?, f),
            fc1_bn: norm(f, var),
            fc2: fc(f, OUTPUTS),
        })
    }

    /// He-uniform weights for layers feeding ELU, Xavier-uniform for the
    /// output layer, zero biases, unit BN gain.
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Self> {
        let mut p = Self::blank(arch, T::one())?;
        let mut rng = stream(seed, Domain::Init, 0);
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        for c in [&mut p.pred_conv, &mut p.obs_conv].into_iter().chain(p.trunk_conv.iter_mut()) {
            fill_uniform(&mut c.w, he(c.k * c.k * c.cin), &mut rng);
        }
        fill_uniform(&mut p.fc1.w, he(p.fc1.fan_in), &mut rng);
        let xavier = (6.0 / (p.fc2.fan_in + p.fc2.units) as f64).sqrt();
        fill_uniform(&mut p.fc2.w, xavier, &mut rng);
        for n in p.norms_mut() {
            n.gamma.fill(T::one());
        }
        Ok(p)
    }

    fn norms_mut(&mut self) -> Vec<&mut Norm<T>> {
        let mut v = vec![&mut self.pred_bn, &mut self.obs_bn];
        v.extend(self.trunk_bn.iter_mut());
        v.push(&mut self.fc1_bn);
        v
    }

    fn norms(&self) -> Vec<&Norm<T>> {
        let mut v = vec![&self.pred_bn, &self.obs_bn];
        v.extend(self.trunk_bn.iter());
        v.push(&self.fc1_bn);
        v
    }

    /// Every buffer in serialization order, with its trainable flag.
    pub fn buffers(&self) -> Vec<(&[T], bool)> {
        let mut out: Vec<(&[T], bool)> = Vec::new();
        fn push_conv<'a, T>(out: &mut Vec<(&'a [T], bool)>, c: &'a Conv<T>) {
            out.push((&c.w, true));
            out.push((&c.b, true));
        }
        fn push_norm<'a, T>(out: &mut Vec<(&'a [T], bool)>, n: &'a Norm<T>) {
            out.push((&n.gamma, true));
            out.push((&n.beta, true));
            out.push((&n.running_mean, false));
            out.push((&n.running_var, false));
        }
        push_conv(&mut out, &self.pred_conv);
        push_conv(&mut out, &self.obs_conv);
        push_norm(&mut out, &self.pred_bn);
        push_norm(&mut out, &self.obs_bn);
        for (c, n) in self.trunk_conv.iter().zip(&self.trunk_bn) {
            push_conv(&mut out, c);
            push_norm(&mut out, n);
        }
        out.push((&self.fc1.w, true));
        out.push((&self.fc1.b, true));
        push_norm(&mut out, &self.fc1_bn);
        out.push((&self.fc2.w, true));
        out.push((&self.fc2.b, true));
        out
    }

    /// Mutable view of [`NetworkParams::buffers`], same order.
    pub fn buffers_mut(&mut self) -> Vec<(&mut Vec<T>, bool)> {
        let mut out: Vec<(&mut Vec<T>, bool)> = Vec::new();
        fn push_conv<'a, T>(out: &mut Vec<(&'a mut Vec<T>, bool)>, c: &'a mut Conv<T>) {
            out.push((&mut c.w, true));
            out.push((&mut c.b, true));
        }
        fn push_norm<'a, T>(out: &mut Vec<(&'a mut Vec<T>, bool)>, n: &'a mut Norm<T>) {
            out.push((&mut n.gamma, true));
            out.push((&mut n.beta, true));
            out.push((&mut n.running_mean, false));
            out.push((&mut n.running_var, false));
        }
        push_conv(&mut out, &mut self.pred_conv);
        push_conv(&mut out, &mut self.obs_conv);
        push_norm(&mut out, &mut self.pred_bn);
        push_norm(&mut out, &mut self.obs_bn);
        for (c, n) in self.trunk_conv.iter_mut().zip(self.trunk_bn.iter_mut()) {
            push_conv(&mut out, c);
            push_norm(&mut out, n);
        }
        out.push((&mut self.fc1.w, true));
        out.push((&mut self.fc1.b, true));
        push_norm(&mut out, &mut self.fc1_bn);
        out.push((&mut self.fc2.w, true));
        out.push((&mut self.fc2.b, true));
        out
    }

    pub fn value_count(&self) -> usize {
        self.buffers().iter().map(|(b, _)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|(b, _)| b.iter().all(|v| v.is_finite()))
    }

    /// Shape and running-variance invariants.
    pub fn validate(&self) -> Result<()> {
        let expect = Self::zeros(self.arch)?;
        let ok = self
            .buffers()
            .iter()
            .zip(expect.buffers())
            .all(|((a, _), (b, _))| a.len() == b.len());
        if !ok || self.value_count() != expect.value_count() {
            return Err(Error::ArchitectureMismatch("parameter shapes do not match the architecture".into()));
        }
        if self.norms().iter().any(|n| n.running_var.iter().any(|v| !(*v > T::zero()))) {
            return Err(Error::invalid("running variance must be positive"));
        }
        Ok(())
    }

    /// Blends batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &BatchStats, momentum: f64) {
        let keep = T::c(momentum);
        let take = T::c(1.0 - momentum);
        for (n, s) in self.norms_mut().into_iter().zip(&stats.0) {
            let unbias = if s.rows > 1 { s.rows as f64 / (s.rows - 1) as f64 } else { 1.0 };
            for c in 0..n.gamma.len() {
                n.running_mean[c] = keep * n.running_mean[c] + take * T::c(s.mean[c]);
                n.running_var[c] = keep * n.running_var[c] + take * T::c(s.var[c] * unbias);
            }
        }
    }

    pub fn cast<U: Float>(&self) -> NetworkParams<U> {
        let mut out = NetworkParams::<U>::zeros(self.arch).expect("validated architecture");
        for ((dst, _), (src, _)) in out.buffers_mut().into_iter().zip(self.buffers()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::c(s.f64());
            }
        }
        out
    }
}

/// Per-layer batch mean and biased variance from one train-mode pass.
#[derive(Debug, Clone, Default)]
pub struct BatchStats(pub Vec<LayerStats>);

#[derive(Debug, Clone)]
pub struct LayerStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub rows: usize,
}

struct BlockCache<T> {
    conv_shape: [usize; 4],
    bn: BnCache<T>,
    act: Vec<T>,
    argmax: Vec<u32>,
}

/// Intermediate values of a train-mode forward pass.
pub struct ForwardCache<T> {
    n: usize,
    pred: BlockCache<T>,
    obs: BlockCache<T>,
    trunk_inputs: Vec<Tensor<T>>,
    trunk: Vec<BlockCache<T>>,
    flat_shape: [usize; 4],
    mask: Vec<T>,
    dropped: Vec<T>,
    fc1_bn: BnCache<T>,
    fc1_act: Vec<T>,
    out: Vec<T>,
}

impl<T: Float> ForwardCache<T> {
    /// Spatial side after every conv and pool, read off the tensors of this pass.
    pub fn spatial_chain(&self) -> Vec<usize> {
        let mut chain = vec![self.pred.conv_shape[1], self.trunk_inputs[0].shape()[1]];
        for (i, b) in self.trunk.iter().enumerate() {
            chain.push(b.conv_shape[1]);
            chain.push(self.trunk_inputs.get(i + 1).map_or(self.flat_shape[1], |t| t.shape()[1]));
        }
        chain
    }

    /// Length of one sample's flattened trunk output.
    pub fn flatten_len(&self) -> usize {
        self.flat_shape[1] * self.flat_shape[2] * self.flat_shape[3]
    }

    pub fn batch_stats(&self) -> BatchStats {
        let mut caches = vec![&self.pred.bn, &self.obs.bn];
        caches.extend(self.trunk.iter().map(|b| &b.bn));
        caches.push(&self.fc1_bn);
        BatchStats(
            caches
                .into_iter()
                .map(|c| LayerStats {
                    mean: c.mean.clone(),
                    var: c.var.clone(),
                    rows: c.rows,
                })
                .collect(),
        )
    }
}

fn block_train<T: Float>(x: &Tensor<T>, c: &Conv<T>, n: &Norm<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
    let z = conv2d_valid(x, &c.w, &c.b, c.k, c.cout)?;
    let conv_shape = z.shape();
    let (mut y, bn) = batchnorm_train(z.data(), c.cout, x.n(), &n.gamma, &n.beta)?;
    elu_inplace(&mut y);
    let act = Tensor::from_vec(conv_shape, y)?;
    let (pooled, argmax) = maxpool2(&act)?;
    Ok((
        pooled,
        BlockCache {
            conv_shape,
            bn,
            act: act.into_data(),
            argmax,
        },
    ))
}

fn block_eval<T: Float>(x: &Tensor<T>, c: &Conv<T>, n: &Norm<T>) -> Result<Tensor<T>> {
    let z = conv2d_valid(x, &c.w, &c.b, c.k, c.cout)?;
    let mut y = batchnorm_eval(z.data(), &n.gamma, &n.beta, &n.running_mean, &n.running_var);
    elu_inplace(&mut y);
    Ok(maxpool2(&Tensor::from_vec(z.shape(), y)?)?.0)
}

/// Returns `dx` (when requested) and fills the layer's gradients.
#[allow(clippy::too_many_arguments)]
fn block_backward<T: Float>(
    dpooled: &Tensor<T>,
    cache: &BlockCache<T>,
    x: &Tensor<T>,
    c: &Conv<T>,
    n: &Norm<T>,
    gc: &mut Conv<T>,
    gn: &mut Norm<T>,
    need_dx: bool,
) -> Result<Option<Tensor<T>>> {
    let mut dact = maxpool2_backward(dpooled, &cache.argmax, cache.conv_shape);
    elu_backward_inplace(dact.data_mut(), &cache.act);
    let (dz, dgamma, dbeta) = batchnorm_backward(dact.data(), &cache.bn, &n.gamma);
    let dz = Tensor::from_vec(cache.conv_shape, dz)?;
    let (dx, dw, db) = conv2d_backward(x, &c.w, c.k, c.cout, &dz, need_dx)?;
    gc.w = dw;
    gc.b = db;
    gn.gamma = dgamma;
    gn.beta = dbeta;
    Ok(dx)
}

fn concat_channels<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let [n, h, w, ca] = a.shape();
    let cb = b.c();
    let mut data = Vec::with_capacity(n * h * w * (ca + cb));
    for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    Tensor::from_vec([n, h, w, ca + cb], data).expect("concat shape")
}

fn split_channels<T: Float>(d: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let [n, h, w, c] = d.shape();
    let cb = c - ca;
    let mut a = Vec::with_capacity(n * h * w * ca);
    let mut b = Vec::with_capacity(n * h * w * cb);
    for px in d.data().chunks_exact(c) {
        a.extend_from_slice(&px[..ca]);
        b.extend_from_slice(&px[ca..]);
    }
    (
        Tensor::from_vec([n, h, w, ca], a).expect("split shape"),
        Tensor::from_vec([n, h, w, cb], b).expect("split shape"),
    )
}

fn check_inputs<T: Float>(arch: &ArchConfig, x_pred: &Tensor<T>, x_obs: &Tensor<T>) -> Result<usize> {
    let s = arch.input_side;
    let want = [x_pred.n(), s, s, CHANNELS];
    if x_pred.shape() != want || x_obs.shape() != want || x_pred.n() == 0 {
        return Err(Error::shape(format!(
            "network expects two N×{s}×{s}×{CHANNELS} inputs, got {:?} and {:?}",
            x_pred.shape(),
            x_obs.shape()
        )));
    }
    Ok(x_pred.n())
}

/// Eval-mode forward pass: running statistics, no dropout. Returns `n×6`
/// outputs in `(-1, 1)`.
pub fn forward_eval<T: Float>(p: &NetworkParams<T>, x_pred: &Tensor<T>, x_obs: &Tensor<T>) -> Result<Vec<T>> {
    let n = check_inputs(&p.arch, x_pred, x_obs)?;
    let a = block_eval(x_pred, &p.pred_conv, &p.pred_bn)?;
    let b = block_eval(x_obs, &p.obs_conv, &p.obs_bn)?;
    let mut x = concat_channels(&a, &b);
    for (c, nm) in p.trunk_conv.iter().zip(&p.trunk_bn) {
        x = block_eval(&x, c, nm)?;
    }
    let h = dense(x.data(), n, &p.fc1.w, &p.fc1.b)?;
    let mut h = batchnorm_eval(&h, &p.fc1_bn.gamma, &p.fc1_bn.beta, &p.fc1_bn.running_mean, &p.fc1_bn.running_var);
    elu_inplace(&mut h);
    let mut out = dense(&h, n, &p.fc2.w, &p.fc2.b)?;
    tanh_inplace(&mut out);
    Ok(out)
}

/// Train-mode forward pass: batch statistics and a fresh dropout mask with
/// keep rate `keep` on the FC-50 input.
pub fn forward_train<T: Float, R: Rng + ?Sized>(
    p: &NetworkParams<T>,
    x_pred: &Tensor<T>,
    x_obs: &Tensor<T>,
    keep: f64,
    rng: &mut R,
) -> Result<(Vec<T>, ForwardCache<T>)> {
    let n = check_inputs(&p.arch, x_pred, x_obs)?;
    let (a, pred) = block_train(x_pred, &p.pred_conv, &p.pred_bn)?;
    let (b, obs) = block_train(x_obs, &p.obs_conv, &p.obs_bn)?;
    let mut trunk_inputs = vec![concat_channels(&a, &b)];
    drop((a, b));
    let mut trunk = Vec::with_capacity(TRUNK_LAYERS);
    for (c, nm) in p.trunk_conv.iter().zip(&p.trunk_bn) {
        let (next, cache) = block_train(trunk_inputs.last().expect("input"), c, nm)?;
        trunk.push(cache);
        trunk_inputs.push(next);
    }
    let flat = trunk_inputs.pop().expect("trunk output");
    let flat_shape = flat.shape();
    let mask: Vec<T> = dropout_mask(flat.data().len(), keep, rng)?;
    let dropped: Vec<T> = flat.data().iter().zip(&mask).map(|(x, m)| *x * *m).collect();
    let h = dense(&dropped, n, &p.fc1.w, &p.fc1.b)?;
    let (mut h, fc1_bn) = batchnorm_train(&h, p.fc1.units, n, &p.fc1_bn.gamma, &p.fc1_bn.beta)?;
    elu_inplace(&mut h);
    let mut out = dense(&h, n, &p.fc2.w, &p.fc2.b)?;
    tanh_inplace(&mut out);
    let cache = ForwardCache {
        n,
        pred,
        obs,
        trunk_inputs,
        trunk,
        flat_shape,
        mask,
        dropped,
        fc1_bn,
        fc1_act: h,
        out: out.clone(),
    };
    Ok((out, cache))
}

/// Gradients of the loss given `dout = ∂L/∂output`.
pub fn backward<T: Float>(
    p: &NetworkParams<T>,
    cache: &ForwardCache<T>,
    x_pred: &Tensor<T>,
    x_obs: &Tensor<T>,
    dout: &[T],
) -> Result<NetworkParams<T>> {
    let n = cache.n;
    let mut g = NetworkParams::zeros(p.arch)?;
    let mut d = dout.to_vec();
    tanh_backward_inplace(&mut d, &cache.out);
    let (mut dh, dw2, db2) = dense_backward(&cache.fc1_act, n, &p.fc2.w, &d);
    g.fc2.w = dw2;
    g.fc2.b = db2;
    elu_backward_inplace(&mut dh, &cache.fc1_act);
    let (dh, dgamma, dbeta) = batchnorm_backward(&dh, &cache.fc1_bn, &p.fc1_bn.gamma);
    g.fc1_bn.gamma = dgamma;
    g.fc1_bn.beta = dbeta;
    let (mut dflat, dw1, db1) = dense_backward(&cache.dropped, n, &p.fc1.w, &dh);
    g.fc1.w = dw1;
    g.fc1.b = db1;
    for (v, m) in dflat.iter_mut().zip(&cache.mask) {
        *v *= *m;
    }
    let mut dx = Tensor::from_vec(cache.flat_shape, dflat)?;
    for i in (0..TRUNK_LAYERS).rev() {
        let (gc, gn) = (&mut g.trunk_conv[i], &mut g.trunk_bn[i]);
        dx = block_backward(
            &dx,
            &cache.trunk[i],
            &cache.trunk_inputs[i],
            &p.trunk_conv[i],
            &p.trunk_bn[i],
            gc,
            gn,
            true,
        )?
        .expect("dx requested");
    }
    let (da, db) = split_channels(&dx, p.arch.branch_filters);
    block_backward(&da, &cache.pred, x_pred, &p.pred_conv, &p.pred_bn, &mut g.pred_conv, &mut g.pred_bn, false)?;
    block_backward(&db, &cache.obs, x_obs, &p.obs_conv, &p.obs_bn, &mut g.obs_conv, &mut g.obs_bn, false)?;
    Ok(g)
}

/// Mean over batch and components of `(y − t)²`, and its gradient.
pub fn mse<T: Float>(out: &[T], targets: &[T]) -> Result<(f64, Vec<T>)> {
    if out.len() != targets.len() || out.is_empty() {
        return Err(Error::shape(format!("{} outputs vs {} targets", out.len(), targets.len())));
    }
    let m = out.len() as f64;
    let loss = out.iter().zip(targets).map(|(y, t)| (*y - *t).f64().powi(2)).sum::<f64>() / m;
    let scale = T::c(2.0 / m);
    Ok((loss, out.iter().zip(targets).map(|(y, t)| (*y - *t) * scale).collect()))
}

/// One train-mode pass: loss, gradients and batch statistics.
pub struct TrainStep<T> {
    pub loss: f64,
    pub grads: NetworkParams<T>,
    pub stats: BatchStats,
}

pub fn loss_and_gradients<T: Float, R: Rng + ?Sized>(
    p: &NetworkParams<T>,
    x_pred: &Tensor<T>,
    x_obs: &Tensor<T>,
    targets: &[T],
    keep: f64,
    rng: &mut R,
) -> Result<TrainStep<T>> {
    if x_pred.n() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let (out, cache) = forward_train(p, x_pred, x_obs, keep, rng)?;
    let (loss, dout) = mse(&out, targets)?;
    let grads = backward(p, &cache, x_pred, x_obs, &dout)?;
    Ok(TrainStep {
        loss,
        grads,
        stats: cache.batch_stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(arch: &ArchConfig, n: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>) {
        let mut r = stream(seed, Domain::Misc, 0);
        let s = arch.input_side;
        let mut t = || {
            Tensor::from_vec([n, s, s, 4], (0..n * s * s * 4).map(|_| rng::normal(&mut r)).collect()).unwrap()
        };
        (t(), t())
    }

    #[test]
    fn paper_shape_chain_and_count() {
        let a = ArchConfig::paper();
        assert_eq!(a.shape_chain().unwrap(), vec![146, 73, 71, 35, 33, 16, 14, 7]);
        assert_eq!(a.flatten_len().unwrap(), 2352);
        assert_eq!(a.param_count().unwrap(), 186_124);
        let p = NetworkParams::<f32>::init(a, 1).unwrap();
        assert_eq!(p.value_count(), 186_124);
        assert!(ArchConfig { input_side: 20, ..a }.shape_chain().is_err());
    }

    #[test]
    fn outputs_bounded_and_eval_deterministic() {
        let arch = ArchConfig {
            input_side: 48,
            branch_filters: 3,
            trunk_filters: 4,
            fc_units: 5,
        };
        let p = NetworkParams::<f64>::init(arch, 2).unwrap();
        let (a, b) = inputs(&arch, 3, 3);
        let y = forward_eval(&p, &a, &b).unwrap();
        assert_eq!(y.len(), 18);
        assert!(y.iter().all(|v| v.abs() < 1.0));
        assert_eq!(y, forward_eval(&p, &a, &b).unwrap());
        assert!(forward_eval(&p, &a, &Tensor::zeros([3, 47, 47, 4])).is_err());
    }

    #[test]
    fn degenerate_net_outputs_tanh_bias() {
        let arch = ArchConfig {
            input_side: 48,
            branch_filters: 2,
            trunk_filters: 2,
            fc_units: 3,
        };
        let mut p = NetworkParams::<f64>::zeros(arch).unwrap();
        for n in p.norms_mut() {
            n.running_var.fill(1.0);
        }
        p.fc2.b = vec![0.1, -0.2, 0.3, 0.0, 2.0, -5.0];
        let (a, b) = inputs(&arch, 2, 4);
        let y = forward_eval(&p, &a, &b).unwrap();
        for (i, v) in y.iter().enumerate() {
            assert!((v - p.fc2.b[i % 6].tanh()).abs() < 1e-15);
        }
        let mut r = stream(1, Domain::Misc, 0);
        let step = loss_and_gradients(&p, &a, &b, &y, 0.5, &mut r).unwrap();
        assert_eq!(step.loss, 0.0);
        assert!(step.grads.buffers().iter().all(|(g, _)| g.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn buffers_cover_every_value() {
        let arch = ArchConfig::reduced(100);
        let mut p = NetworkParams::<f32>::init(arch, 3).unwrap();
        assert_eq!(p.value_count(), arch.param_count().unwrap());
        let n_mut: usize = p.buffers_mut().iter().map(|(b, _)| b.len()).sum();
        assert_eq!(n_mut, arch.param_count().unwrap());
        p.validate().unwrap();
        p.trunk_bn[1].running_var[0] = 0.0;
        assert!(p.validate().is_err());
    }
}
