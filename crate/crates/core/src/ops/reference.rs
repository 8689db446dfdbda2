//! Direct-summation kernels used as oracles for the optimized paths.
//!
//! These follow the defining sums literally, one output element at a time,
//! with no loop reordering or bounds precomputation.

use crate::error::Result;
use crate::ops::conv::{conv_dims, ConvGeometry};
use crate::ops::pool::PoolGeometry;
use crate::tensor::{Scalar, Tensor};

/// `out[x,y,z,f] = bias[f] + Σ_{c,dx,dy,dz} in[x*s+dx-p, …, c] * w[dx,dy,dz,c,f]`,
/// with out-of-range taps reading zero.
pub fn conv3d_naive<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: &ConvGeometry,
) -> Result<Tensor<T>> {
    let d = conv_dims(input, weights, bias, geom)?;
    let mut out = Tensor::zeros(&[d.o[0], d.o[1], d.o[2], d.cout])?;
    for f in 0..d.cout {
        for oz in 0..d.o[2] {
            for oy in 0..d.o[1] {
                for ox in 0..d.o[0] {
                    let mut acc = bias.map_or(T::zero(), |b| b.data()[f]);
                    for c in 0..d.cin {
                        for kz in 0..d.k[2] {
                            for ky in 0..d.k[1] {
                                for kx in 0..d.k[0] {
                                    let ix = (ox * geom.stride[0] + kx) as isize - geom.pad_before[0] as isize;
                                    let iy = (oy * geom.stride[1] + ky) as isize - geom.pad_before[1] as isize;
                                    let iz = (oz * geom.stride[2] + kz) as isize - geom.pad_before[2] as isize;
                                    if ix < 0
                                        || iy < 0
                                        || iz < 0
                                        || ix >= d.n[0] as isize
                                        || iy >= d.n[1] as isize
                                        || iz >= d.n[2] as isize
                                    {
                                        continue;
                                    }
                                    let v = input.get(&[ix as usize, iy as usize, iz as usize, c])?;
                                    let wv = weights.get(&[kx, ky, kz, c, f])?;
                                    acc = acc + v * wv;
                                }
                            }
                        }
                    }
                    out.set(&[ox, oy, oz, f], acc)?;
                }
            }
        }
    }
    Ok(out)
}

/// Per-window, per-channel maximum by exhaustive scan.
pub fn maxpool3d_naive<T: Scalar>(input: &Tensor<T>, geom: &PoolGeometry) -> Result<Tensor<T>> {
    let s = input.shape();
    let o = geom.output_extents([s[0], s[1], s[2]])?;
    let mut out = Tensor::zeros(&[o[0], o[1], o[2], s[3]])?;
    for c in 0..s[3] {
        for oz in 0..o[2] {
            for oy in 0..o[1] {
                for ox in 0..o[0] {
                    let mut best = T::neg_infinity();
                    for kz in 0..geom.window[2] {
                        for ky in 0..geom.window[1] {
                            for kx in 0..geom.window[0] {
                                let v = input.get(&[
                                    ox * geom.stride[0] + kx,
                                    oy * geom.stride[1] + ky,
                                    oz * geom.stride[2] + kz,
                                    c,
                                ])?;
                                if v > best {
                                    best = v;
                                }
                            }
                        }
                    }
                    out.set(&[ox, oy, oz, c], best)?;
                }
            }
        }
    }
    Ok(out)
}
