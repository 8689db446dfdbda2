//! 3D cross-correlation layer.
//!
//! Input `[nx, ny, nz, cin]`, weights `[kx, ky, kz, cin, cout]`, output
//! `[ox, oy, oz, cout]` with `o = floor((n + pad_before + pad_after - k) / stride) + 1`
//! per spatial axis. No filter flip is applied.
//!
//! Receptive fields are lowered to patch rows (im2col) one tile of output
//! positions at a time, so every output is a contiguous dot product with a
//! filter. Each result element is owned by exactly one task and accumulated
//! in a fixed order, so results do not depend on thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Stride and zero padding of a convolution, per spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: [usize; 3],
    pub pad_before: [usize; 3],
    pub pad_after: [usize; 3],
}

impl ConvGeometry {
    pub fn uniform(stride: usize, pad: usize) -> Self {
        Self {
            stride: [stride; 3],
            pad_before: [pad; 3],
            pad_after: [pad; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "convolution stride must be >= 1, got {:?}",
                self.stride
            )));
        }
        Ok(())
    }

    /// Output spatial extents for the given input extents and kernel.
    pub fn output_extents(&self, input: [usize; 3], kernel: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let mut out = [0; 3];
        for axis in 0..3 {
            if kernel[axis] == 0 {
                return Err(Error::InvalidArgument("kernel extent must be >= 1".into()));
            }
            let padded = input[axis] + self.pad_before[axis] + self.pad_after[axis];
            if padded < kernel[axis] {
                return Err(Error::InvalidArgument(format!(
                    "kernel extent {} exceeds padded input extent {} on axis {axis}",
                    kernel[axis], padded
                )));
            }
            out[axis] = (padded - kernel[axis]) / self.stride[axis] + 1;
        }
        Ok(out)
    }
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct ConvCache<T: Scalar> {
    pub input: Tensor<T>,
    pub output_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) struct ConvDims {
    pub n: [usize; 3],
    pub cin: usize,
    pub k: [usize; 3],
    pub cout: usize,
    pub o: [usize; 3],
}

impl ConvDims {
    fn in_plane(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }
    fn out_plane(&self) -> usize {
        self.o[0] * self.o[1] * self.o[2]
    }
    fn patch_len(&self) -> usize {
        self.cin * self.k[0] * self.k[1] * self.k[2]
    }
    /// Output positions per im2col tile, keeping a tile near 256K elements.
    fn tile_len(&self) -> usize {
        ((1 << 18) / self.patch_len()).clamp(1, self.out_plane())
    }
}

pub(crate) fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: &ConvGeometry,
) -> Result<ConvDims> {
    let is = input.shape();
    let ws = weights.shape();
    if is.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "convolution input must be rank 4 [x, y, z, channels], got {is:?}"
        )));
    }
    if ws.len() != 5 {
        return Err(Error::InvalidArgument(format!(
            "convolution weights must be rank 5 [kx, ky, kz, cin, cout], got {ws:?}"
        )));
    }
    if is[3] != ws[3] {
        return Err(Error::InvalidArgument(format!(
            "input has {} channels but filters expect {}",
            is[3], ws[3]
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [ws[4]] {
            return Err(Error::ShapeMismatch {
                expected: vec![ws[4]],
                actual: b.shape().to_vec(),
            });
        }
    }
    let n = [is[0], is[1], is[2]];
    let k = [ws[0], ws[1], ws[2]];
    let o = geom.output_extents(n, k)?;
    Ok(ConvDims {
        n,
        cin: is[3],
        k,
        cout: ws[4],
        o,
    })
}

pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: &ConvGeometry,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    let d = conv_dims(input, weights, bias, geom)?;
    let out_shape = vec![d.o[0], d.o[1], d.o[2], d.cout];
    let out_plane = d.out_plane();
    let kdim = d.patch_len();
    let tile = d.tile_len();
    let x = input.data();
    let w = weights.data();
    let b = bias.map(|b| b.data());

    // Each tile yields its outputs position-major; they are placed after.
    let tiles: Vec<Vec<T>> = (0..out_plane.div_ceil(tile))
        .into_par_iter()
        .map(|t| {
            let p0 = t * tile;
            let p1 = (p0 + tile).min(out_plane);
            let mut patches = vec![T::zero(); (p1 - p0) * kdim];
            im2col(&d, geom, x, p0..p1, &mut patches);
            let mut res = Vec::with_capacity((p1 - p0) * d.cout);
            for patch in patches.chunks_exact(kdim) {
                for f in 0..d.cout {
                    let v = dot(&w[f * kdim..(f + 1) * kdim], patch);
                    res.push(match b {
                        Some(b) => b[f] + v,
                        None => v,
                    });
                }
            }
            res
        })
        .collect();

    let mut out = Tensor::zeros(&out_shape)?;
    let o = out.data_mut();
    for (t, res) in tiles.iter().enumerate() {
        for (j, vals) in res.chunks_exact(d.cout).enumerate() {
            let p = t * tile + j;
            for (f, &v) in vals.iter().enumerate() {
                o[f * out_plane + p] = v;
            }
        }
    }

    Ok((
        out,
        ConvCache {
            input: input.clone(),
            output_shape: out_shape,
        },
    ))
}

/// Patch rows for output positions `range` (x fastest). Each row holds the
/// receptive field in weight order `(c, dz, dy, dx)`, zeros where it falls
/// in the padding.
fn im2col<T: Scalar>(d: &ConvDims, g: &ConvGeometry, x: &[T], range: std::ops::Range<usize>, out: &mut [T]) {
    let kx = d.k[0];
    let in_plane = d.in_plane();
    for (row, p) in out.chunks_exact_mut(d.patch_len()).zip(range) {
        let mut k = 0;
        for_each_run(d, g, p, |c, run| {
            let dst = &mut row[k..k + kx];
            k += kx;
            match run {
                None => dst.fill(T::zero()),
                Some((src, lo, hi)) => {
                    let src = c * in_plane + src;
                    dst[..lo].fill(T::zero());
                    dst[lo..hi].copy_from_slice(&x[src..src + (hi - lo)]);
                    dst[hi..].fill(T::zero());
                }
            }
        });
    }
}

/// Adds patch-row gradients back onto the input voxels they came from.
fn col2im<T: Scalar>(d: &ConvDims, g: &ConvGeometry, cols: &[T], range: std::ops::Range<usize>, gx: &mut [T]) {
    let kx = d.k[0];
    let in_plane = d.in_plane();
    for (row, p) in cols.chunks_exact(d.patch_len()).zip(range) {
        let mut k = 0;
        for_each_run(d, g, p, |c, run| {
            let src = &row[k..k + kx];
            k += kx;
            if let Some((dst, lo, hi)) = run {
                let dst = c * in_plane + dst;
                for (o, &v) in gx[dst..dst + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                    *o = *o + v;
                }
            }
        });
    }
}

/// Visits the `kx`-long tap runs of output position `p` in weight order
/// `(c, dz, dy)`. Each run is `None` when its row lies in the z/y padding,
/// otherwise `(offset, lo, hi)`: taps `lo..hi` read the channel-relative
/// input offsets `offset..offset + (hi - lo)`.
#[inline]
fn for_each_run(d: &ConvDims, g: &ConvGeometry, p: usize, mut f: impl FnMut(usize, Option<(usize, usize, usize)>)) {
    let [nx, ny, nz] = d.n;
    let [kx, ky, kz] = d.k;
    let [ox, oy, _] = d.o;
    let start = |o: usize, a: usize| (o * g.stride[a]) as isize - g.pad_before[a] as isize;
    let (xs, ys, zs) = (start(p % ox, 0), start((p / ox) % oy, 1), start(p / (ox * oy), 2));
    let lo = (-xs).max(0) as usize;
    let hi = (nx as isize - xs).clamp(0, kx as isize) as usize;
    for c in 0..d.cin {
        for dz in 0..kz {
            let iz = zs + dz as isize;
            for dy in 0..ky {
                let iy = ys + dy as isize;
                if iz < 0 || iz >= nz as isize || iy < 0 || iy >= ny as isize || lo >= hi {
                    f(c, None);
                } else {
                    let off = (iz as usize * ny + iy as usize) * nx + (xs + lo as isize) as usize;
                    f(c, Some((off, lo, hi)));
                }
            }
        }
    }
}

pub fn conv3d_backward<T: Scalar>(
    grad_output: &Tensor<T>,
    cache: &ConvCache<T>,
    weights: &Tensor<T>,
    has_bias: bool,
    geom: &ConvGeometry,
) -> Result<ConvGrads<T>> {
    let (weights_grad, bias, input) = backward_impl(grad_output, cache, weights, has_bias, geom, true)?;
    Ok(ConvGrads {
        input: input.expect("requested"),
        weights: weights_grad,
        bias,
    })
}

/// Weight and bias gradients only, for a layer whose input needs no
/// gradient (the first layer of a network).
pub fn conv3d_param_grads<T: Scalar>(
    grad_output: &Tensor<T>,
    cache: &ConvCache<T>,
    weights: &Tensor<T>,
    has_bias: bool,
    geom: &ConvGeometry,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    let (w, b, _) = backward_impl(grad_output, cache, weights, has_bias, geom, false)?;
    Ok((w, b))
}

type BackwardParts<T> = (Tensor<T>, Option<Tensor<T>>, Option<Tensor<T>>);

fn backward_impl<T: Scalar>(
    grad_output: &Tensor<T>,
    cache: &ConvCache<T>,
    weights: &Tensor<T>,
    has_bias: bool,
    geom: &ConvGeometry,
    need_input: bool,
) -> Result<BackwardParts<T>> {
    let d = conv_dims(&cache.input, weights, None, geom)?;
    let expected = vec![d.o[0], d.o[1], d.o[2], d.cout];
    if grad_output.shape() != expected.as_slice() || cache.output_shape != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: grad_output.shape().to_vec(),
        });
    }
    let out_plane = d.out_plane();
    let kdim = d.patch_len();
    let tile = d.tile_len();
    let x = cache.input.data();
    let w = weights.data();
    let g = grad_output.data();

    let bias = if has_bias {
        let sums = g
            .chunks_exact(out_plane)
            .map(|p| p.iter().fold(T::zero(), |a, &v| a + v))
            .collect();
        Some(Tensor::from_vec(&[d.cout], sums)?)
    } else {
        None
    };

    let mut gw = Tensor::zeros(weights.shape())?;
    let mut gx = if need_input {
        Some(Tensor::zeros(cache.input.shape())?)
    } else {
        None
    };
    let mut patches = vec![T::zero(); tile * kdim];
    let mut cols = if need_input { vec![T::zero(); tile * kdim] } else { Vec::new() };
    // Tiles run in order; within a tile each filter (weight gradient) or
    // position (input gradient) is owned by one task.
    for p0 in (0..out_plane).step_by(tile) {
        let p1 = (p0 + tile).min(out_plane);
        let n = p1 - p0;
        let patches = &mut patches[..n * kdim];
        im2col(&d, geom, x, p0..p1, patches);
        let patches = &*patches;
        gw.data_mut()
            .par_chunks_mut(kdim)
            .enumerate()
            .for_each(|(f, gw_f)| {
                let gf = &g[f * out_plane + p0..f * out_plane + p1];
                for (patch, &gv) in patches.chunks_exact(kdim).zip(gf) {
                    if gv != T::zero() {
                        axpy(gw_f, gv, patch);
                    }
                }
            });
        if let Some(gx) = gx.as_mut() {
            let cols = &mut cols[..n * kdim];
            cols.par_chunks_mut(kdim).enumerate().for_each(|(j, col)| {
                col.fill(T::zero());
                for f in 0..d.cout {
                    let gv = g[f * out_plane + p0 + j];
                    if gv != T::zero() {
                        axpy(col, gv, &w[f * kdim..(f + 1) * kdim]);
                    }
                }
            });
            col2im(&d, geom, cols, p0..p1, gx.data_mut());
        }
    }
    Ok((gw, bias, gx))
}

const LANES: usize = 16;

/// Dot product with sixteen interleaved partial sums, folded pairwise in a
/// fixed order.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[T; LANES] = x.try_into().expect("exact chunk");
        let y: &[T; LANES] = y.try_into().expect("exact chunk");
        for l in 0..LANES {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] = acc[l] + acc[l + width];
        }
    }
    acc[0] + tail
}

/// `y += a * x`.
#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o = *o + a * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::reference::conv3d_naive;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn full_size_first_layer_extent() {
        let g = ConvGeometry::uniform(4, 0);
        assert_eq!(g.output_extents([160, 160, 160], [7, 7, 7]).unwrap(), [39, 39, 39]);
    }

    #[test]
    fn kernel_larger_than_padded_input_fails() {
        let g = ConvGeometry::uniform(1, 0);
        assert!(g.output_extents([3, 3, 3], [4, 1, 1]).is_err());
        let g = ConvGeometry::uniform(1, 1);
        assert!(g.output_extents([3, 3, 3], [4, 1, 1]).is_ok());
    }

    #[test]
    fn channel_mismatch_fails() {
        let x = Tensor::<f64>::zeros(&[4, 4, 4, 2]).unwrap();
        let w = Tensor::<f64>::zeros(&[2, 2, 2, 3, 1]).unwrap();
        assert!(conv3d_forward(&x, &w, None, &ConvGeometry::uniform(1, 0)).is_err());
    }

    #[test]
    fn impulse_reproduces_reflected_filter() {
        // Unit impulse at the far corner of a 3x3x3 window: output position
        // o picks up w[2 - o] (cross-correlation reflects the filter).
        let mut x = Tensor::<f64>::zeros(&[5, 5, 5, 1]).unwrap();
        x.set(&[2, 2, 2, 0], 1.0).unwrap();
        let w = Tensor::<f64>::random_normal(&[3, 3, 3, 1, 1], 0.0, 1.0, 4).unwrap();
        let (y, _) = conv3d_forward(&x, &w, None, &ConvGeometry::uniform(1, 0)).unwrap();
        for z in 0..3 {
            for yy in 0..3 {
                for xx in 0..3 {
                    let got = y.get(&[xx, yy, z, 0]).unwrap();
                    let want = w.get(&[2 - xx, 2 - yy, 2 - z, 0, 0]).unwrap();
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn unit_filter_scales_input() {
        let x = Tensor::<f64>::random_normal(&[3, 4, 5, 1], 0.0, 1.0, 8).unwrap();
        let w = Tensor::<f64>::full(&[1, 1, 1, 1, 1], 2.5).unwrap();
        let (y, cache) = conv3d_forward(&x, &w, None, &ConvGeometry::uniform(1, 0)).unwrap();
        assert_eq!(y.data(), x.scale(2.5).data());
        let g = Tensor::<f64>::random_normal(y.shape(), 0.0, 1.0, 9).unwrap();
        let grads = conv3d_backward(&g, &cache, &w, false, &ConvGeometry::uniform(1, 0)).unwrap();
        assert_eq!(grads.input.data(), g.scale(2.5).data());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let geom = ConvGeometry::uniform(2, 1);
        let x = Tensor::<f64>::random_normal(&[5, 5, 5, 2], 0.0, 1.0, 1).unwrap();
        let w = Tensor::<f64>::random_normal(&[3, 3, 3, 2, 3], 0.0, 1.0, 2).unwrap();
        let b = Tensor::<f64>::random_normal(&[3], 0.0, 1.0, 3).unwrap();
        let (y, cache) = conv3d_forward(&x, &w, Some(&b), &geom).unwrap();
        let g = Tensor::zeros(y.shape()).unwrap();
        let grads = conv3d_backward(&g, &cache, &w, true, &geom).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weights.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_channel_sum() {
        let geom = ConvGeometry::uniform(1, 0);
        let x = Tensor::<f64>::random_normal(&[4, 4, 4, 1], 0.0, 1.0, 1).unwrap();
        let w = Tensor::<f64>::random_normal(&[2, 2, 2, 1, 2], 0.0, 1.0, 2).unwrap();
        let b = Tensor::<f64>::zeros(&[2]).unwrap();
        let (y, cache) = conv3d_forward(&x, &w, Some(&b), &geom).unwrap();
        let g = Tensor::<f64>::random_normal(y.shape(), 0.0, 1.0, 3).unwrap();
        let grads = conv3d_backward(&g, &cache, &w, true, &geom).unwrap();
        let plane = 27;
        for f in 0..2 {
            let s: f64 = g.data()[f * plane..(f + 1) * plane].iter().sum();
            assert!((grads.bias.as_ref().unwrap().data()[f] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_on_spec_instance() {
        let geom = ConvGeometry::uniform(2, 1);
        let x = Tensor::<f32>::random_normal(&[6, 6, 6, 2], 0.0, 1.0, 21).unwrap();
        let w = Tensor::<f32>::random_normal(&[3, 3, 3, 2, 4], 0.0, 1.0, 22).unwrap();
        let b = Tensor::<f32>::random_normal(&[4], 0.0, 1.0, 23).unwrap();
        let (y, _) = conv3d_forward(&x, &w, Some(&b), &geom).unwrap();
        let want = conv3d_naive(&x.cast(), &w.cast(), Some(&b.cast()), &geom).unwrap();
        assert_eq!(y.shape(), &[3, 3, 3, 4]);
        let got: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
        assert!(rel_err(&got, want.data()) < 1e-5);
    }

    #[test]
    fn asymmetric_padding_and_strides_match_naive() {
        let geom = ConvGeometry {
            stride: [1, 2, 3],
            pad_before: [0, 1, 2],
            pad_after: [2, 0, 1],
        };
        let x = Tensor::<f64>::random_normal(&[5, 7, 6, 3], 0.0, 1.0, 31).unwrap();
        let w = Tensor::<f64>::random_normal(&[2, 3, 4, 3, 2], 0.0, 1.0, 32).unwrap();
        let (y, _) = conv3d_forward(&x, &w, None, &geom).unwrap();
        let want = conv3d_naive(&x, &w, None, &geom).unwrap();
        assert_eq!(y.shape(), want.shape());
        assert!(rel_err(y.data(), want.data()) < 1e-12);
    }
}
