//! 3D max pooling over non-padded windows.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub window: [usize; 3],
    pub stride: [usize; 3],
}

impl PoolGeometry {
    pub fn uniform(window: usize, stride: usize) -> Self {
        Self {
            window: [window; 3],
            stride: [stride; 3],
        }
    }

    /// `floor((n - window) / stride) + 1` per axis.
    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for axis in 0..3 {
            if self.window[axis] == 0 || self.stride[axis] == 0 {
                return Err(Error::InvalidArgument(format!(
                    "pool window and stride must be >= 1, got {:?} / {:?}",
                    self.window, self.stride
                )));
            }
            if self.window[axis] > input[axis] {
                return Err(Error::InvalidArgument(format!(
                    "pool window {} exceeds input extent {} on axis {axis}",
                    self.window[axis], input[axis]
                )));
            }
            out[axis] = (input[axis] - self.window[axis]) / self.stride[axis] + 1;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    pub input_shape: Vec<usize>,
    /// Linear input offset of the selected element, one per output element.
    pub argmax: Vec<usize>,
}

/// Window maxima; ties resolve to the first element in scan order
/// (x fastest, then y, then z).
pub fn maxpool3d_forward<T: Scalar>(input: &Tensor<T>, geom: &PoolGeometry) -> Result<(Tensor<T>, PoolCache)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "pool input must be rank 4 [x, y, z, channels], got {s:?}"
        )));
    }
    let [nx, ny, nz] = [s[0], s[1], s[2]];
    let o = geom.output_extents([nx, ny, nz])?;
    let channels = s[3];
    let mut out = Tensor::zeros(&[o[0], o[1], o[2], channels])?;
    let mut argmax = Vec::with_capacity(out.len());
    let x = input.data();
    let dst = out.data_mut();
    let mut k = 0;
    for c in 0..channels {
        let cbase = c * nx * ny * nz;
        for oz in 0..o[2] {
            for oy in 0..o[1] {
                for ox in 0..o[0] {
                    let (z0, y0, x0) = (oz * geom.stride[2], oy * geom.stride[1], ox * geom.stride[0]);
                    let mut best_at = cbase + (z0 * ny + y0) * nx + x0;
                    let mut best = x[best_at];
                    for z in z0..z0 + geom.window[2] {
                        for y in y0..y0 + geom.window[1] {
                            let row = cbase + (z * ny + y) * nx;
                            for xi in x0..x0 + geom.window[0] {
                                let v = x[row + xi];
                                if v > best {
                                    best = v;
                                    best_at = row + xi;
                                }
                            }
                        }
                    }
                    dst[k] = best;
                    argmax.push(best_at);
                    k += 1;
                }
            }
        }
    }
    Ok((
        out,
        PoolCache {
            input_shape: s.to_vec(),
            argmax,
        },
    ))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool3d_backward<T: Scalar>(grad_output: &Tensor<T>, cache: &PoolCache) -> Result<Tensor<T>> {
    if grad_output.len() != cache.argmax.len() {
        return Err(Error::InvalidArgument(format!(
            "pool gradient has {} elements, forward produced {}",
            grad_output.len(),
            cache.argmax.len()
        )));
    }
    let mut gx = Tensor::zeros(&cache.input_shape)?;
    let dst = gx.data_mut();
    for (&at, &g) in cache.argmax.iter().zip(grad_output.data()) {
        dst[at] = dst[at] + g;
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::reference::maxpool3d_naive;

    #[test]
    fn constant_volume_pools_to_constant() {
        let x = Tensor::<f32>::full(&[5, 5, 5, 2], 3.25).unwrap();
        let (y, _) = maxpool3d_forward(&x, &PoolGeometry::uniform(3, 2)).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn single_peak_appears_once() {
        let mut x = Tensor::<f32>::zeros(&[4, 4, 4, 1]).unwrap();
        x.set(&[3, 1, 2, 0], 9.0).unwrap();
        let (y, _) = maxpool3d_forward(&x, &PoolGeometry::uniform(2, 2)).unwrap();
        assert_eq!(y.data().iter().filter(|&&v| v == 9.0).count(), 1);
        assert_eq!(y.get(&[1, 0, 1, 0]).unwrap(), 9.0);
    }

    #[test]
    fn window_larger_than_input_fails() {
        let x = Tensor::<f32>::zeros(&[2, 2, 2, 1]).unwrap();
        assert!(maxpool3d_forward(&x, &PoolGeometry::uniform(3, 2)).is_err());
    }

    #[test]
    fn ties_route_to_first_in_scan_order() {
        let x = Tensor::<f32>::full(&[2, 2, 2, 1], 1.0).unwrap();
        let (_, cache) = maxpool3d_forward(&x, &PoolGeometry::uniform(2, 2)).unwrap();
        assert_eq!(cache.argmax, vec![0]);
        let g = Tensor::<f32>::full(&[1, 1, 1, 1], 5.0).unwrap();
        let gx = maxpool3d_backward(&g, &cache).unwrap();
        assert_eq!(gx.data(), &[5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_naive_scan() {
        let x = Tensor::<f32>::random_normal(&[9, 9, 9, 3], 0.0, 1.0, 77).unwrap();
        let g = PoolGeometry::uniform(3, 2);
        let (y, _) = maxpool3d_forward(&x, &g).unwrap();
        let want = maxpool3d_naive(&x, &g).unwrap();
        assert_eq!(y, want);
    }

    #[test]
    fn backward_conserves_mass_with_unique_maxima() {
        let x = Tensor::<f64>::random_normal(&[7, 7, 7, 2], 0.0, 1.0, 78).unwrap();
        let (y, cache) = maxpool3d_forward(&x, &PoolGeometry::uniform(3, 2)).unwrap();
        let g = Tensor::<f64>::random_normal(y.shape(), 0.0, 1.0, 79).unwrap();
        let gx = maxpool3d_backward(&g, &cache).unwrap();
        assert!((gx.sum() - g.sum()).abs() < 1e-12);
    }
}
