//! Central finite-difference checks of every layer and of the composed network.
//!
//! Each check draws random shapes and values, projects the layer output onto
//! a random vector to get a scalar loss, and compares analytic gradients with
//! `(L(θ+h) − L(θ−h)) / 2h` in 64-bit. The reported error of one gradient
//! tensor is `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::rng::{self, stream, Domain, Stream};

use super::layers::{
    batchnorm_backward, batchnorm_train, conv2d_backward, conv2d_valid, dense, dense_backward, dropout_mask, elu,
    elu_backward_inplace, maxpool2, maxpool2_backward, tanh_backward_inplace, Tensor,
};
use super::network::{forward_train, loss_and_gradients, mse, ArchConfig, NetworkParams};

const H: f64 = 1e-6;
/// Coordinates probed per parameter buffer in the composed-network check.
const NETWORK_PROBES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: &'static str,
    pub configs: usize,
    pub max_rel_err: f64,
}

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    // biases feeding a batch norm have an exactly zero gradient; compare those absolutely
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

fn randv(rng: &mut Stream, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng::uniform(rng, -1.0, 1.0)).collect()
}

/// Numeric gradient of `f` with respect to `x`, perturbing in place.
fn numeric(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + H;
            let up = f(x);
            x[i] = orig - H;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn check_conv(seed: u64, configs: usize) -> Result<GradReport> {
    let mut worst = 0.0f64;
    for c in 0..configs {
        let mut r = stream(seed, Domain::Misc, c as u64);
        let k = [1, 3, 5][r.random_range(0..3)];
        let (n, cin, cout) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
        let (h, w) = (k + r.random_range(0..5), k + r.random_range(0..5));
        let mut x = randv(&mut r, n * h * w * cin);
        let mut wt = randv(&mut r, k * k * cin * cout);
        let mut b = randv(&mut r, cout);
        let (ho, wo) = (h - k + 1, w - k + 1);
        let proj = randv(&mut r, n * ho * wo * cout);
        let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
            let t = Tensor::from_vec([n, h, w, cin], x.to_vec()).unwrap();
            dot(conv2d_valid(&t, wt, b, k, cout).unwrap().data(), &proj)
        };
        let xt = Tensor::from_vec([n, h, w, cin], x.clone())?;
        let dy = Tensor::from_vec([n, ho, wo, cout], proj.clone())?;
        let (dx, dw, db) = conv2d_backward(&xt, &wt, k, cout, &dy, true)?;
        let (w0, b0) = (wt.clone(), b.clone());
        let nx = numeric(&mut x, |x| loss(x, &w0, &b0));
        let x0 = x.clone();
        let nw = numeric(&mut wt, |wt| loss(&x0, wt, &b0));
        let nb = numeric(&mut b, |b| loss(&x0, &w0, b));
        worst = worst
            .max(rel_err(dx.expect("dx").data(), &nx))
            .max(rel_err(&dw, &nw))
            .max(rel_err(&db, &nb));
    }
    Ok(GradReport {
        name: "conv2d_valid",
        configs,
        max_rel_err: worst,
    })
}

pub fn check_maxpool(seed: u64, configs: usize) -> Result<GradReport> {
    let mut worst = 0.0f64;
    for c in 0..configs {
        let mut r = stream(seed, Domain::Misc, 1000 + c as u64);
        let (n, h, w, ch) = (r.random_range(1..3), r.random_range(2..8), r.random_range(2..8), r.random_range(1..4));
        let mut x = randv(&mut r, n * h * w * ch);
        let shape = [n, h, w, ch];
        let (y, arg) = maxpool2(&Tensor::from_vec(shape, x.clone())?)?;
        let proj = randv(&mut r, y.data().len());
        let dx = maxpool2_backward(&Tensor::from_vec(y.shape(), proj.clone())?, &arg, shape);
        let nx = numeric(&mut x, |x| dot(maxpool2(&Tensor::from_vec(shape, x.to_vec()).unwrap()).unwrap().0.data(), &proj));
        worst = worst.max(rel_err(dx.data(), &nx));
    }
    Ok(GradReport {
        name: "maxpool2",
        configs,
        max_rel_err: worst,
    })
}

pub fn check_batchnorm(seed: u64, configs: usize) -> Result<GradReport> {
    let mut worst = 0.0f64;
    for c in 0..configs {
        let mut r = stream(seed, Domain::Misc, 2000 + c as u64);
        let (batch, rows_per, ch) = (r.random_range(2..6), r.random_range(1..5), r.random_range(1..5));
        let len = batch * rows_per * ch;
        let mut x = randv(&mut r, len);
        let mut g: Vec<f64> = (0..ch).map(|_| rng::uniform(&mut r, 0.5, 1.5)).collect();
        let mut b = randv(&mut r, ch);
        let proj = randv(&mut r, len);
        let loss = |x: &[f64], g: &[f64], b: &[f64]| dot(&batchnorm_train(x, ch, batch, g, b).unwrap().0, &proj);
        let (_, cache) = batchnorm_train(&x, ch, batch, &g, &b)?;
        let (dx, dg, db) = batchnorm_backward(&proj, &cache, &g);
        let (g0, b0) = (g.clone(), b.clone());
        let nx = numeric(&mut x, |x| loss(x, &g0, &b0));
        let x0 = x.clone();
        let ng = numeric(&mut g, |g| loss(&x0, g, &b0));
        let nb = numeric(&mut b, |b| loss(&x0, &g0, b));
        worst = worst.max(rel_err(&dx, &nx)).max(rel_err(&dg, &ng)).max(rel_err(&db, &nb));
    }
    Ok(GradReport {
        name: "batchnorm",
        configs,
        max_rel_err: worst,
    })
}

pub fn check_activations(seed: u64, configs: usize) -> Result<Vec<GradReport>> {
    let (mut w_elu, mut w_tanh) = (0.0f64, 0.0f64);
    for c in 0..configs {
        let mut r = stream(seed, Domain::Misc, 3000 + c as u64);
        let len = r.random_range(1..40);
        // keep clear of the ELU kink so the central difference is smooth
        let mut x: Vec<f64> = randv(&mut r, len).into_iter().map(|v| 3.0 * v).map(|v| if v.abs() < 1e-3 { 0.5 } else { v }).collect();
        let proj = randv(&mut r, len);
        let y: Vec<f64> = x.iter().map(|&v| elu(v)).collect();
        let mut d = proj.clone();
        elu_backward_inplace(&mut d, &y);
        let n = numeric(&mut x, |x| dot(&x.iter().map(|&v| elu(v)).collect::<Vec<_>>(), &proj));
        w_elu = w_elu.max(rel_err(&d, &n));
        let y: Vec<f64> = x.iter().map(|v| v.tanh()).collect();
        let mut d = proj.clone();
        tanh_backward_inplace(&mut d, &y);
        let n = numeric(&mut x, |x| dot(&x.iter().map(|v| v.tanh()).collect::<Vec<_>>(), &proj));
        w_tanh = w_tanh.max(rel_err(&d, &n));
    }
    Ok(vec![
        GradReport {
            name: "elu",
            configs,
            max_rel_err: w_elu,
        },
        GradReport {
            name: "tanh",
            configs,
            max_rel_err: w_tanh,
        },
    ])
}

pub fn check_dropout(seed: u64, configs: usize) -> Result<GradReport> {
    let mut worst = 0.0f64;
    for c in 0..configs {
        let mut r = stream(seed, Domain::Misc, 4000 + c as u64);
        let len = r.random_range(1..40);
        let mut x = randv(&mut r, len);
        let mask: Vec<f64> = dropout_mask(len, 0.5, &mut r)?;
        let proj = randv(&mut r, len);
        let analytic: Vec<f64> = proj.iter().zip(&mask).map(|(p, m)| p * m).collect();
        let n = numeric(&mut x, |x| x.iter().zip(&mask).zip(&proj).map(|((x, m), p)| x * m * p).sum());
        worst = worst.max(rel_err(&analytic, &n));
    }
    Ok(GradReport {
        name: "dropout",
        configs,
        max_rel_err: worst,
    })
}

pub fn check_dense(seed: u64, configs: usize) -> Result<GradReport> {
    let mut worst = 0.0f64;
    for c in 0..configs {
        let mut r = stream(seed, Domain::Misc, 5000 + c as u64);
        let (n, fan_in, units) = (r.random_range(1..5), r.random_range(1..9), r.random_range(1..7));
        let mut x = randv(&mut r, n * fan_in);
        let mut w = randv(&mut r, fan_in * units);
        let mut b = randv(&mut r, units);
        let proj = randv(&mut r, n * units);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| dot(&dense(x, n, w, b).unwrap(), &proj);
        let (dx, dw, db) = dense_backward(&x, n, &w, &proj);
        let (w0, b0) = (w.clone(), b.clone());
        let nx = numeric(&mut x, |x| loss(x, &w0, &b0));
        let x0 = x.clone();
        let nw = numeric(&mut w, |w| loss(&x0, w, &b0));
        let nb = numeric(&mut b, |b| loss(&x0, &w0, b));
        worst = worst.max(rel_err(&dx, &nx)).max(rel_err(&dw, &nw)).max(rel_err(&db, &nb));
    }
    Ok(GradReport {
        name: "dense",
        configs,
        max_rel_err: worst,
    })
}

/// Whole-network check on reduced architectures (48×48 inputs, a few
/// filters): every trainable buffer, up to 32 random coordinates of each.
pub fn check_network(seed: u64, configs: usize) -> Result<GradReport> {
    let mut worst = 0.0f64;
    for c in 0..configs {
        let mut r = stream(seed, Domain::Misc, 6000 + c as u64);
        let arch = ArchConfig {
            input_side: 48,
            branch_filters: r.random_range(1..3),
            trunk_filters: r.random_range(2..4),
            fc_units: r.random_range(2..5),
        };
        let n = r.random_range(4..6);
        let mut p = NetworkParams::<f64>::init(arch, seed ^ c as u64)?;
        // non-trivial BN affine parameters
        for (buf, trainable) in p.buffers_mut() {
            if trainable {
                for v in buf.iter_mut() {
                    *v += 0.1 * rng::uniform(&mut r, -1.0, 1.0);
                }
            }
        }
        let s = arch.input_side;
        let xp = Tensor::from_vec([n, s, s, 4], randv(&mut r, n * s * s * 4))?;
        let xo = Tensor::from_vec([n, s, s, 4], randv(&mut r, n * s * s * 4))?;
        let targets = randv(&mut r, n * 6).into_iter().map(|v| 0.5 * v).collect::<Vec<_>>();
        let drop_seed = r.random::<u64>();
        let loss_of = |p: &NetworkParams<f64>| {
            let mut dr = stream(drop_seed, Domain::Misc, 0);
            let (out, _) = forward_train(p, &xp, &xo, 0.5, &mut dr)?;
            mse(&out, &targets).map(|(l, _)| l)
        };
        let mut dr = stream(drop_seed, Domain::Misc, 0);
        let step = loss_and_gradients(&p, &xp, &xo, &targets, 0.5, &mut dr)?;
        let analytic: Vec<Vec<f64>> = step
            .grads
            .buffers()
            .into_iter()
            .filter(|(_, t)| *t)
            .map(|(b, _)| b.to_vec())
            .collect();
        let trainable: Vec<usize> = p
            .buffers()
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| *t)
            .map(|(i, _)| i)
            .collect();
        for (slot, &bi) in trainable.iter().enumerate() {
            let len = p.buffers()[bi].0.len();
            let probes = sample(&mut r, len, len.min(NETWORK_PROBES)).into_vec();
            let mut num = Vec::with_capacity(probes.len());
            for &j in &probes {
                let orig = p.buffers()[bi].0[j];
                p.buffers_mut()[bi].0[j] = orig + H;
                let up = loss_of(&p)?;
                p.buffers_mut()[bi].0[j] = orig - H;
                let down = loss_of(&p)?;
                p.buffers_mut()[bi].0[j] = orig;
                num.push((up - down) / (2.0 * H));
            }
            let picked: Vec<f64> = probes.iter().map(|&j| analytic[slot][j]).collect();
            worst = worst.max(rel_err(&picked, &num));
        }
    }
    Ok(GradReport {
        name: "network",
        configs,
        max_rel_err: worst,
    })
}

/// Every check with `configs` random configurations each.
pub fn run_all(seed: u64, configs: usize) -> Result<Vec<GradReport>> {
    let mut out = vec![
        check_conv(seed, configs)?,
        check_maxpool(seed, configs)?,
        check_batchnorm(seed, configs)?,
    ];
    out.extend(check_activations(seed, configs)?);
    out.push(check_dropout(seed, configs)?);
    out.push(check_dense(seed, configs)?);
    out.push(check_network(seed, configs)?);
    Ok(out)
}
