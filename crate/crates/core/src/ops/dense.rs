//! Pointwise activation, fully-connected layer, softmax and the
//! cross-entropy loss.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct ReluCache<T: Scalar> {
    pub input: Tensor<T>,
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, ReluCache<T>) {
    let out = input.map(|v| if v > T::zero() { v } else { T::zero() });
    (out, ReluCache { input: input.clone() })
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(grad_output: &Tensor<T>, cache: &ReluCache<T>) -> Result<Tensor<T>> {
    if grad_output.shape() != cache.input.shape() {
        return Err(Error::ShapeMismatch {
            expected: cache.input.shape().to_vec(),
            actual: grad_output.shape().to_vec(),
        });
    }
    let data = grad_output
        .data()
        .iter()
        .zip(cache.input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_output.shape(), data)
}

#[derive(Debug, Clone)]
pub struct FcCache<T: Scalar> {
    pub input: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct FcGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

fn fc_dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let ws = weights.shape();
    if ws.len() != 2 {
        return Err(Error::InvalidArgument(format!("fc weights must be [D, K], got {ws:?}")));
    }
    if input.len() != ws[0] {
        return Err(Error::InvalidArgument(format!(
            "fc expects {} inputs, got {}",
            ws[0],
            input.len()
        )));
    }
    Ok((ws[0], ws[1]))
}

/// `logits[k] = bias[k] + Σ_d x[d] * w[d, k]` over the flattened input.
pub fn fc_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, FcCache<T>)> {
    let (d, k) = fc_dims(input, weights)?;
    if let Some(b) = bias {
        if b.shape() != [k] {
            return Err(Error::ShapeMismatch {
                expected: vec![k],
                actual: b.shape().to_vec(),
            });
        }
    }
    let x = input.data();
    let logits = (0..k)
        .map(|j| {
            let col = &weights.data()[j * d..(j + 1) * d];
            let init = bias.map_or(T::zero(), |b| b.data()[j]);
            col.iter().zip(x).fold(init, |acc, (&w, &v)| acc + w * v)
        })
        .collect();
    Ok((
        Tensor::from_vec(&[k], logits)?,
        FcCache {
            input: input.clone().reshape(&[d])?,
        },
    ))
}

pub fn fc_backward<T: Scalar>(
    grad_output: &Tensor<T>,
    cache: &FcCache<T>,
    weights: &Tensor<T>,
    has_bias: bool,
) -> Result<FcGrads<T>> {
    let (d, k) = fc_dims(&cache.input, weights)?;
    if grad_output.shape() != [k] {
        return Err(Error::ShapeMismatch {
            expected: vec![k],
            actual: grad_output.shape().to_vec(),
        });
    }
    let g = grad_output.data();
    let x = cache.input.data();
    let w = weights.data();
    let gx = (0..d)
        .map(|i| (0..k).fold(T::zero(), |acc, j| acc + g[j] * w[j * d + i]))
        .collect();
    let mut gw = Vec::with_capacity(d * k);
    for &gj in g {
        gw.extend(x.iter().map(|&v| gj * v));
    }
    Ok(FcGrads {
        input: Tensor::from_vec(&[d], gx)?,
        weights: Tensor::from_vec(&[d, k], gw)?,
        bias: if has_bias { Some(grad_output.clone()) } else { None },
    })
}

fn check_logits<T: Scalar>(logits: &[T]) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logits {logits:?}")));
    }
    Ok(())
}

/// Max-shifted softmax, evaluated in `f64`.
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    check_logits(logits)?;
    let m = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v.as_f64() - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| T::from_f64(v / z)).collect())
}

/// Softmax cross-entropy: returns `-ln p[class]` and `p - one_hot(class)`.
pub fn cross_entropy_loss<T: Scalar>(logits: &[T], class: usize) -> Result<(f64, Vec<T>)> {
    check_logits(logits)?;
    if class >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "class {class} out of range for {} logits",
            logits.len()
        )));
    }
    let m = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v.as_f64() - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let loss = m + z.ln() - logits[class].as_f64();
    let grad = e
        .iter()
        .enumerate()
        .map(|(j, &v)| T::from_f64(v / z - if j == class { 1.0 } else { 0.0 }))
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::<f32>::from_vec(&[3], vec![-2.0, 0.0, 3.0]).unwrap();
        let (y, cache) = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 3.0]);
        let g = Tensor::<f32>::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(relu_backward(&g, &cache).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_positive_is_identity() {
        let x = Tensor::<f32>::from_vec(&[4], vec![0.5, 1.0, 2.0, 7.0]).unwrap();
        let (y, cache) = relu_forward(&x);
        assert_eq!(y, x);
        let g = Tensor::<f32>::from_vec(&[4], vec![0.1, -0.2, 0.3, -0.4]).unwrap();
        assert_eq!(relu_backward(&g, &cache).unwrap(), g);
    }

    #[test]
    fn fc_identity_and_bias() {
        let mut w = Tensor::<f64>::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            w.set(&[i, i], 1.0).unwrap();
        }
        let x = Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let (y, _) = fc_forward(&x, &w, None).unwrap();
        assert_eq!(y.data(), x.data());

        let w = Tensor::<f64>::random_normal(&[4, 2], 0.0, 1.0, 1).unwrap();
        let b = Tensor::<f64>::from_vec(&[2], vec![0.25, -1.5]).unwrap();
        let (y, _) = fc_forward(&Tensor::zeros(&[4]).unwrap(), &w, Some(&b)).unwrap();
        assert_eq!(y.data(), b.data());
    }

    #[test]
    fn fc_rejects_wrong_length() {
        let w = Tensor::<f64>::zeros(&[4, 2]).unwrap();
        let x = Tensor::<f64>::zeros(&[5]).unwrap();
        assert!(fc_forward(&x, &w, None).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1000.0f64, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1] < 1e-12);
        let a = softmax(&[0.3f64, -1.2, 2.0]).unwrap();
        let b = softmax(&[100.3f64, 98.8, 102.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-7);
        }
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
        assert!(softmax(&[1.0f64]).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let (l, g) = cross_entropy_loss(&[0.0f64, 0.0], 0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![-0.5, 0.5]);
        let (l, _) = cross_entropy_loss(&[40.0f64, 0.0], 0).unwrap();
        assert!(l < 1e-15);
        assert!(cross_entropy_loss(&[0.0f64, 0.0], 2).is_err());
    }
}
