use crate::error::{Error, Result};
use crate::network::config::{Layer, NetworkConfig, NUM_CLASSES};
use crate::ops::{self, ConvCache, FcCache, PoolCache, ReluCache};
use crate::rng::mix_seed;
use crate::tensor::{Scalar, Tensor};

/// Weights and optional bias of one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Scalar = f32> {
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros_like(&self) -> Result<Self> {
        Ok(Self {
            weights: Tensor::zeros(self.weights.shape())?,
            bias: self.bias.as_ref().map(|b| Tensor::zeros(b.shape())).transpose()?,
        })
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        std::iter::once(&self.weights).chain(self.bias.iter())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        std::iter::once(&mut self.weights).chain(self.bias.iter_mut())
    }
}

/// Trained parameters, one entry per parametric layer in config order,
/// plus the per-modality group means captured from the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T: Scalar = f32> {
    pub layers: Vec<LayerParams<T>>,
    pub modality_means: [f64; 2],
}

impl<T: Scalar> NetworkParams<T> {
    /// He-normal weights (std = sqrt(2 / fan_in)), zero biases. Each layer
    /// draws from its own stream derived from `seed`.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = config
            .param_layers()
            .enumerate()
            .map(|(i, layer)| {
                let shape = layer.weight_shape().expect("parametric layer");
                let std = (2.0 / layer.fan_in().expect("parametric layer") as f64).sqrt();
                let weights = Tensor::random_normal(&shape, 0.0, std, mix_seed(seed, i as u64))?;
                let bias = if config.use_bias {
                    Some(Tensor::zeros(&[layer.bias_len().expect("parametric layer")])?)
                } else {
                    None
                };
                Ok(LayerParams { weights, bias })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            modality_means: [0.0; 2],
        })
    }

    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        let layers = config
            .param_layers()
            .map(|layer| {
                Ok(LayerParams {
                    weights: Tensor::zeros(&layer.weight_shape().expect("parametric layer"))?,
                    bias: if config.use_bias {
                        Some(Tensor::zeros(&[layer.bias_len().expect("parametric layer")])?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            modality_means: [0.0; 2],
        })
    }

    pub fn zeros_like(&self) -> Result<Self> {
        Ok(Self {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect::<Result<_>>()?,
            modality_means: self.modality_means,
        })
    }

    /// Verifies tensor shapes against `config`.
    pub fn check(&self, config: &NetworkConfig) -> Result<()> {
        let expected: Vec<&Layer> = config.param_layers().collect();
        if expected.len() != self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "config has {} parametric layers, params have {}",
                expected.len(),
                self.layers.len()
            )));
        }
        for (layer, p) in expected.iter().zip(&self.layers) {
            let ws = layer.weight_shape().expect("parametric layer");
            if p.weights.shape() != ws.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: ws,
                    actual: p.weights.shape().to_vec(),
                });
            }
            match (&p.bias, config.use_bias) {
                (Some(b), true) if b.shape() == [layer.bias_len().expect("parametric layer")] => {}
                (None, false) => {}
                (b, _) => {
                    return Err(Error::ShapeMismatch {
                        expected: if config.use_bias {
                            vec![layer.bias_len().expect("parametric layer")]
                        } else {
                            vec![]
                        },
                        actual: b.as_ref().map(|b| b.shape().to_vec()).unwrap_or_default(),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.tensors().all(Tensor::all_finite))
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.cast(),
                    bias: l.bias.as_ref().map(Tensor::cast),
                })
                .collect(),
            modality_means: self.modality_means,
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(LayerParams::tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(LayerParams::tensors_mut)
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v = *v * factor;
            }
        }
    }
}

/// Gradient of the loss for every parameter tensor; mirrors [`NetworkParams`].
pub type Gradients<T = f32> = NetworkParams<T>;

#[derive(Debug, Clone)]
pub enum LayerCache<T: Scalar> {
    Conv(ConvCache<T>),
    Relu(ReluCache<T>),
    Pool(PoolCache),
    Flatten { input_shape: Vec<usize> },
    Fc(FcCache<T>),
}

/// Per-layer caches and logits from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Scalar> {
    pub caches: Vec<LayerCache<T>>,
    pub logits: Vec<T>,
}

/// Softmax output and the decision under the strict `p0 > 0.5` rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probabilities: [f64; 2],
    pub class: usize,
}

/// Class 0 iff its probability is strictly above one half.
pub fn decide(p0: f64) -> usize {
    if p0 > 0.5 {
        0
    } else {
        1
    }
}

/// A configured network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar = f32> {
    pub config: NetworkConfig,
    pub params: NetworkParams<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(config: NetworkConfig, params: NetworkParams<T>) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Self { config, params })
    }

    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let params = NetworkParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<ForwardTrace<T>> {
        forward(&self.config, &self.params, input)
    }

    pub fn backward(&self, trace: &ForwardTrace<T>, true_class: usize) -> Result<(f64, Gradients<T>)> {
        backward(&self.config, &self.params, trace, true_class)
    }

    pub fn logits(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.forward(input)?.logits)
    }

    pub fn predict(&self, input: &Tensor<T>) -> Result<Prediction> {
        let p = ops::softmax(&self.logits(input)?)?;
        let p0 = p[0].as_f64();
        Ok(Prediction {
            probabilities: [p0, p[1].as_f64()],
            class: decide(p0),
        })
    }

    /// Raw pre-softmax value of output node 0.
    pub fn conv_score(&self, input: &Tensor<T>) -> Result<f64> {
        Ok(self.logits(input)?[0].as_f64())
    }
}

pub fn forward<T: Scalar>(
    config: &NetworkConfig,
    params: &NetworkParams<T>,
    input: &Tensor<T>,
) -> Result<ForwardTrace<T>> {
    if input.shape() != config.input_shape {
        return Err(Error::ShapeMismatch {
            expected: config.input_shape.to_vec(),
            actual: input.shape().to_vec(),
        });
    }
    let mut caches = Vec::with_capacity(config.layers.len());
    let mut x = input.clone();
    let mut p = params.layers.iter();
    for layer in &config.layers {
        let (y, cache) = match layer {
            Layer::Conv3d { geometry, .. } => {
                let lp = p.next().ok_or_else(missing_params)?;
                let (y, c) = ops::conv3d_forward(&x, &lp.weights, lp.bias.as_ref(), geometry)?;
                (y, LayerCache::Conv(c))
            }
            Layer::Relu => {
                let (y, c) = ops::relu_forward(&x);
                (y, LayerCache::Relu(c))
            }
            Layer::MaxPool3d(g) => {
                let (y, c) = ops::maxpool3d_forward(&x, g)?;
                (y, LayerCache::Pool(c))
            }
            Layer::Flatten => {
                let input_shape = x.shape().to_vec();
                let n = x.len();
                (x.reshape(&[n])?, LayerCache::Flatten { input_shape })
            }
            Layer::FullyConnected { .. } => {
                let lp = p.next().ok_or_else(missing_params)?;
                let (y, c) = ops::fc_forward(&x, &lp.weights, lp.bias.as_ref())?;
                (y, LayerCache::Fc(c))
            }
        };
        caches.push(cache);
        x = y;
    }
    if x.len() != NUM_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "network produced {} outputs, expected {NUM_CLASSES}",
            x.len()
        )));
    }
    Ok(ForwardTrace {
        caches,
        logits: x.into_vec(),
    })
}

fn missing_params() -> Error {
    Error::InvalidArgument("fewer parameter sets than parametric layers".into())
}

fn stale_trace(index: usize, layer: &Layer) -> Error {
    Error::InvalidArgument(format!(
        "forward trace does not match layer {index} ({layer}); was it produced by this config?"
    ))
}

/// Cross-entropy loss of a traced forward pass and its gradient with respect
/// to every parameter tensor.
pub fn backward<T: Scalar>(
    config: &NetworkConfig,
    params: &NetworkParams<T>,
    trace: &ForwardTrace<T>,
    true_class: usize,
) -> Result<(f64, Gradients<T>)> {
    let (loss, grad_logits) = ops::cross_entropy_loss(&trace.logits, true_class)?;
    let grads = backward_from(config, params, trace, Tensor::from_vec(&[NUM_CLASSES], grad_logits)?)?;
    Ok((loss, grads))
}

/// Backpropagates an arbitrary gradient on the logits.
pub fn backward_from<T: Scalar>(
    config: &NetworkConfig,
    params: &NetworkParams<T>,
    trace: &ForwardTrace<T>,
    grad_logits: Tensor<T>,
) -> Result<Gradients<T>> {
    if trace.caches.len() != config.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "forward trace has {} layers, config has {}",
            trace.caches.len(),
            config.layers.len()
        )));
    }
    let mut grads: Vec<Option<LayerParams<T>>> = vec![None; params.layers.len()];
    let mut pi = params.layers.len();
    let mut g = grad_logits;
    for (index, (layer, cache)) in config.layers.iter().zip(&trace.caches).enumerate().rev() {
        g = match (layer, cache) {
            (Layer::Conv3d { geometry, .. }, LayerCache::Conv(c)) => {
                pi = pi.checked_sub(1).ok_or_else(missing_params)?;
                let lp = &params.layers[pi];
                if index == 0 {
                    // The network input needs no gradient.
                    let (weights, bias) = ops::conv3d_param_grads(&g, c, &lp.weights, lp.bias.is_some(), geometry)?;
                    grads[pi] = Some(LayerParams { weights, bias });
                    break;
                }
                let r = ops::conv3d_backward(&g, c, &lp.weights, lp.bias.is_some(), geometry)?;
                grads[pi] = Some(LayerParams {
                    weights: r.weights,
                    bias: r.bias,
                });
                r.input
            }
            (Layer::Relu, LayerCache::Relu(c)) => ops::relu_backward(&g, c)?,
            (Layer::MaxPool3d(_), LayerCache::Pool(c)) => ops::maxpool3d_backward(&g, c)?,
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => g.reshape(input_shape)?,
            (Layer::FullyConnected { .. }, LayerCache::Fc(c)) => {
                pi = pi.checked_sub(1).ok_or_else(missing_params)?;
                let lp = &params.layers[pi];
                let r = ops::fc_backward(&g, c, &lp.weights, lp.bias.is_some())?;
                grads[pi] = Some(LayerParams {
                    weights: r.weights,
                    bias: r.bias,
                });
                r.input
            }
            _ => return Err(stale_trace(index, layer)),
        };
    }
    Ok(NetworkParams {
        layers: grads.into_iter().map(|g| g.ok_or_else(missing_params)).collect::<Result<_>>()?,
        modality_means: params.modality_means,
    })
}
