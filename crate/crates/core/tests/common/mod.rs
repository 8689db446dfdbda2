//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the kernels under test except through their
//! public entry points; sums are written out directly over flat arrays.

#![allow(dead_code)]

use voxnet::network::{forward, backward, Layer, NetworkConfig, NetworkParams};
use voxnet::ops::{
    conv3d_backward, conv3d_forward, cross_entropy_loss, fc_backward, fc_forward, maxpool3d_backward,
    maxpool3d_forward, relu_backward, relu_forward, ConvGeometry, PoolGeometry,
};
use voxnet::rng::SeededRng;
use voxnet::stats::ScoredSample;
use voxnet::Tensor;

pub const FD_STEP: f64 = 1e-6;

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every element of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn randn(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

pub fn range(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + ((rng.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

/// Direct-summation 3D cross-correlation over `[x,y,z,c]` arrays, first
/// axis fastest; weights `[kx,ky,kz,cin,cout]`.
#[allow(clippy::too_many_arguments)]
pub fn direct_conv(
    n: [usize; 4],
    x: &[f64],
    k: [usize; 3],
    cout: usize,
    w: &[f64],
    bias: Option<&[f64]>,
    stride: [usize; 3],
    pad_before: [usize; 3],
    pad_after: [usize; 3],
) -> ([usize; 4], Vec<f64>) {
    let cin = n[3];
    let o: Vec<usize> = (0..3)
        .map(|a| (n[a] + pad_before[a] + pad_after[a] - k[a]) / stride[a] + 1)
        .collect();
    let mut out = vec![0.0; o[0] * o[1] * o[2] * cout];
    for f in 0..cout {
        for oz in 0..o[2] {
            for oy in 0..o[1] {
                for ox in 0..o[0] {
                    let mut acc = bias.map_or(0.0, |b| b[f]);
                    for c in 0..cin {
                        for dz in 0..k[2] {
                            for dy in 0..k[1] {
                                for dx in 0..k[0] {
                                    let ix = (ox * stride[0] + dx) as isize - pad_before[0] as isize;
                                    let iy = (oy * stride[1] + dy) as isize - pad_before[1] as isize;
                                    let iz = (oz * stride[2] + dz) as isize - pad_before[2] as isize;
                                    if ix < 0
                                        || iy < 0
                                        || iz < 0
                                        || ix >= n[0] as isize
                                        || iy >= n[1] as isize
                                        || iz >= n[2] as isize
                                    {
                                        continue;
                                    }
                                    let xi = ix as usize
                                        + n[0] * (iy as usize + n[1] * (iz as usize + n[2] * c));
                                    let wi = dx + k[0] * (dy + k[1] * (dz + k[2] * (c + cin * f)));
                                    acc += x[xi] * w[wi];
                                }
                            }
                        }
                    }
                    out[ox + o[0] * (oy + o[1] * (oz + o[2] * f))] = acc;
                }
            }
        }
    }
    ([o[0], o[1], o[2], cout], out)
}

/// AUC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half. Positive class is label 0.
pub fn mann_whitney_auc(samples: &[ScoredSample]) -> f64 {
    let pos: Vec<f64> = samples.iter().filter(|s| s.true_label == 0).map(|s| s.score).collect();
    let neg: Vec<f64> = samples.iter().filter(|s| s.true_label == 1).map(|s| s.score).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn sample(id: usize, label: usize, score: f64) -> ScoredSample {
    ScoredSample {
        subject_id: format!("s{id:03}"),
        true_label: label,
        score,
        predicted_label: label,
    }
}

/// Random scored set with both classes present; scores are drawn from a
/// small grid when `tied` so that ties are frequent.
pub fn random_scored(rng: &mut SeededRng, n: usize, tied: bool) -> Vec<ScoredSample> {
    (0..n)
        .map(|i| {
            let label = if i == 0 {
                0
            } else if i == 1 {
                1
            } else {
                usize::from(rng.uniform() < 0.5)
            };
            let shift = if label == 0 { 0.7 } else { 0.0 };
            let raw = rng.standard_normal() + shift;
            let score = if tied { (raw * 2.0).round() / 2.0 } else { raw };
            sample(i, label, score)
        })
        .collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

/// Worst relative error over one random conv instance: input, weight and
/// bias gradients of `sum(out * r)` against central differences.
pub fn conv_gradient_error(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let cin = range(&mut rng, 1, 3);
    let cout = range(&mut rng, 1, 3);
    let k = [range(&mut rng, 1, 3), range(&mut rng, 1, 3), range(&mut rng, 1, 3)];
    let stride = [range(&mut rng, 1, 2), range(&mut rng, 1, 2), range(&mut rng, 1, 2)];
    let pad_before = [range(&mut rng, 0, 1), range(&mut rng, 0, 1), range(&mut rng, 0, 1)];
    let pad_after = [range(&mut rng, 0, 1), range(&mut rng, 0, 1), range(&mut rng, 0, 1)];
    let n = [
        range(&mut rng, k[0], 5),
        range(&mut rng, k[1], 5),
        range(&mut rng, k[2], 5),
        cin,
    ];
    let geom = ConvGeometry {
        stride,
        pad_before,
        pad_after,
    };
    let x = randn(&mut rng, n.iter().product());
    let w = randn(&mut rng, k.iter().product::<usize>() * cin * cout);
    let b = randn(&mut rng, cout);
    let wshape = [k[0], k[1], k[2], cin, cout];

    let xt = tensor(&n, x.clone());
    let wt = tensor(&wshape, w.clone());
    let bt = tensor(&[cout], b.clone());
    let (y, cache) = conv3d_forward(&xt, &wt, Some(&bt), &geom).unwrap();
    let r = randn(&mut rng, y.len());
    let grads = conv3d_backward(&tensor(y.shape(), r.clone()), &cache, &wt, true, &geom).unwrap();

    let objective = |x: &[f64], w: &[f64], b: &[f64]| {
        let (y, _) = conv3d_forward(&tensor(&n, x.to_vec()), &tensor(&wshape, w.to_vec()), Some(&tensor(&[cout], b.to_vec())), &geom)
            .unwrap();
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
    };
    let gx = numeric_grad(&x, |p| objective(p, &w, &b));
    let gw = numeric_grad(&w, |p| objective(&x, p, &b));
    let gb = numeric_grad(&b, |p| objective(&x, &w, p));
    rel_err(grads.input.data(), &gx)
        .max(rel_err(grads.weights.data(), &gw))
        .max(rel_err(grads.bias.unwrap().data(), &gb))
}

pub fn relu_gradient_error(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let shape = [range(&mut rng, 1, 5), range(&mut rng, 1, 5), range(&mut rng, 1, 5), range(&mut rng, 1, 3)];
    let x = randn(&mut rng, shape.iter().product());
    let (y, cache) = relu_forward(&tensor(&shape, x.clone()));
    let r = randn(&mut rng, y.len());
    let g = relu_backward(&tensor(&shape, r.clone()), &cache).unwrap();
    let num = numeric_grad(&x, |p| {
        let (y, _) = relu_forward(&tensor(&shape, p.to_vec()));
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum()
    });
    rel_err(g.data(), &num)
}

pub fn pool_gradient_error(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let window = [range(&mut rng, 1, 3), range(&mut rng, 1, 3), range(&mut rng, 1, 3)];
    let stride = [range(&mut rng, 1, 3), range(&mut rng, 1, 3), range(&mut rng, 1, 3)];
    let shape = [
        range(&mut rng, window[0], 6),
        range(&mut rng, window[1], 6),
        range(&mut rng, window[2], 6),
        range(&mut rng, 1, 3),
    ];
    let geom = PoolGeometry { window, stride };
    let x = randn(&mut rng, shape.iter().product());
    let (y, cache) = maxpool3d_forward(&tensor(&shape, x.clone()), &geom).unwrap();
    let r = randn(&mut rng, y.len());
    let g = maxpool3d_backward(&tensor(y.shape(), r.clone()), &cache).unwrap();
    let num = numeric_grad(&x, |p| {
        let (y, _) = maxpool3d_forward(&tensor(&shape, p.to_vec()), &geom).unwrap();
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum()
    });
    rel_err(g.data(), &num)
}

pub fn fc_gradient_error(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let d = range(&mut rng, 1, 12);
    let k = range(&mut rng, 1, 4);
    let x = randn(&mut rng, d);
    let w = randn(&mut rng, d * k);
    let b = randn(&mut rng, k);
    let (y, cache) = fc_forward(&tensor(&[d], x.clone()), &tensor(&[d, k], w.clone()), Some(&tensor(&[k], b.clone()))).unwrap();
    let r = randn(&mut rng, y.len());
    let g = fc_backward(&tensor(&[k], r.clone()), &cache, &tensor(&[d, k], w.clone()), true).unwrap();
    let objective = |x: &[f64], w: &[f64], b: &[f64]| {
        let (y, _) = fc_forward(&tensor(&[d], x.to_vec()), &tensor(&[d, k], w.to_vec()), Some(&tensor(&[k], b.to_vec()))).unwrap();
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
    };
    let gx = numeric_grad(&x, |p| objective(p, &w, &b));
    let gw = numeric_grad(&w, |p| objective(&x, p, &b));
    let gb = numeric_grad(&b, |p| objective(&x, &w, p));
    rel_err(g.input.data(), &gx)
        .max(rel_err(g.weights.data(), &gw))
        .max(rel_err(g.bias.unwrap().data(), &gb))
}

pub fn cross_entropy_gradient_error(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let logits: Vec<f64> = randn(&mut rng, 2).iter().map(|v| 3.0 * v).collect();
    let class = usize::from(rng.uniform() < 0.5);
    let (_, g) = cross_entropy_loss(&logits, class).unwrap();
    let num = numeric_grad(&logits, |p| cross_entropy_loss(p, class).unwrap().0);
    rel_err(&g, &num)
}

/// A miniature conv → relu → pool → conv → relu → flatten → fc chain.
pub fn miniature_config() -> NetworkConfig {
    NetworkConfig::new(
        vec![
            Layer::conv(3, 2, 3, 1),
            Layer::Relu,
            Layer::pool(2, 2),
            Layer::Conv3d {
                kernel: [3, 3, 3],
                in_channels: 3,
                out_channels: 4,
                geometry: ConvGeometry::uniform(1, 0),
            },
            Layer::Relu,
            Layer::Flatten,
            Layer::FullyConnected { inputs: 4, outputs: 2 },
        ],
        [8, 8, 8, 2],
    )
}

/// Cross-entropy gradient of every parameter of the miniature network
/// against central differences of the loss.
pub fn network_gradient_error(seed: u64) -> f64 {
    let config = miniature_config();
    let mut rng = SeededRng::new(seed);
    let mut params = NetworkParams::<f64>::init(&config, seed).unwrap();
    for b in params.layers.iter_mut().filter_map(|l| l.bias.as_mut()) {
        for v in b.data_mut() {
            *v = 0.1 + 0.1 * rng.standard_normal();
        }
    }
    let input = tensor(&config.input_shape, randn(&mut rng, config.input_shape.iter().product()));
    let class = usize::from(rng.uniform() < 0.5);
    let trace = forward(&config, &params, &input).unwrap();
    let (_, grads) = backward(&config, &params, &trace, class).unwrap();

    let mut worst: f64 = 0.0;
    for li in 0..params.layers.len() {
        for which in 0..2 {
            let base = if which == 0 {
                params.layers[li].weights.data().to_vec()
            } else {
                params.layers[li].bias.as_ref().unwrap().data().to_vec()
            };
            let mut probe = params.clone();
            let num = numeric_grad(&base, |p| {
                let t = if which == 0 {
                    &mut probe.layers[li].weights
                } else {
                    probe.layers[li].bias.as_mut().unwrap()
                };
                t.data_mut().copy_from_slice(p);
                let trace = forward(&config, &probe, &input).unwrap();
                cross_entropy_loss(&trace.logits, class).unwrap().0
            });
            let analytic = if which == 0 {
                grads.layers[li].weights.data()
            } else {
                grads.layers[li].bias.as_ref().unwrap().data()
            };
            worst = worst.max(rel_err(analytic, &num));
        }
    }
    worst
}
