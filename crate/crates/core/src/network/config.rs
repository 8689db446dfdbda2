//! Layer descriptors, shape planning, and the preset topologies.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ops::{ConvGeometry, PoolGeometry};

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Conv3d {
        kernel: [usize; 3],
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
    },
    Relu,
    MaxPool3d(PoolGeometry),
    Flatten,
    FullyConnected {
        inputs: usize,
        outputs: usize,
    },
}

impl Layer {
    pub fn conv(kernel: usize, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Layer::Conv3d {
            kernel: [kernel; 3],
            in_channels,
            out_channels,
            geometry: ConvGeometry::uniform(stride, 0),
        }
    }

    pub fn pool(window: usize, stride: usize) -> Self {
        Layer::MaxPool3d(PoolGeometry::uniform(window, stride))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv3d { .. } => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool3d(_) => "maxpool",
            Layer::Flatten => "flatten",
            Layer::FullyConnected { .. } => "fc",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Conv3d { .. } | Layer::FullyConnected { .. })
    }

    /// Weight tensor shape for parametric layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            Layer::Conv3d {
                kernel,
                in_channels,
                out_channels,
                ..
            } => Some(vec![kernel[0], kernel[1], kernel[2], in_channels, out_channels]),
            Layer::FullyConnected { inputs, outputs } => Some(vec![inputs, outputs]),
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match *self {
            Layer::Conv3d { out_channels, .. } => Some(out_channels),
            Layer::FullyConnected { outputs, .. } => Some(outputs),
            _ => None,
        }
    }

    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            Layer::Conv3d {
                kernel, in_channels, ..
            } => Some(kernel.iter().product::<usize>() * in_channels),
            Layer::FullyConnected { inputs, .. } => Some(inputs),
            _ => None,
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            Layer::Conv3d {
                kernel,
                in_channels,
                out_channels,
                geometry,
            } => {
                let [x, y, z, c] = spatial(input)?;
                if c != *in_channels {
                    return Err(format!("expects {in_channels} input channels, got {c}"));
                }
                let o = geometry
                    .output_extents([x, y, z], *kernel)
                    .map_err(|e| e.to_string())?;
                Ok(vec![o[0], o[1], o[2], *out_channels])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool3d(g) => {
                let [x, y, z, c] = spatial(input)?;
                let o = g.output_extents([x, y, z]).map_err(|e| e.to_string())?;
                Ok(vec![o[0], o[1], o[2], c])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::FullyConnected { inputs, outputs } => {
                if input.len() != 1 {
                    return Err(format!("expects a flat input, got {input:?}"));
                }
                if input[0] != *inputs {
                    return Err(format!("expects {inputs} features, got {}", input[0]));
                }
                Ok(vec![*outputs])
            }
        }
    }
}

fn spatial(input: &[usize]) -> std::result::Result<[usize; 4], String> {
    match *input {
        [x, y, z, c] => Ok([x, y, z, c]),
        _ => Err(format!("expects a [x, y, z, channels] volume, got {input:?}")),
    }
}

fn join3(v: &[usize; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Conv3d {
                kernel,
                in_channels,
                out_channels,
                geometry,
            } => write!(
                f,
                "conv kernel={} in={} out={} stride={} pad_before={} pad_after={}",
                join3(kernel),
                in_channels,
                out_channels,
                join3(&geometry.stride),
                join3(&geometry.pad_before),
                join3(&geometry.pad_after)
            ),
            Layer::Relu => write!(f, "relu"),
            Layer::MaxPool3d(g) => write!(f, "maxpool window={} stride={}", join3(&g.window), join3(&g.stride)),
            Layer::Flatten => write!(f, "flatten"),
            Layer::FullyConnected { inputs, outputs } => write!(f, "fc in={inputs} out={outputs}"),
        }
    }
}

/// Accepts `n` (applied to all three axes) or `x,y,z`.
fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|_| format!("bad integer {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    match nums.as_slice() {
        [n] => Ok([*n; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(format!("expected 1 or 3 comma-separated integers, got {s:?}")),
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format(format!("layer {s:?}: {reason}"));
        let mut tokens = s.split_whitespace();
        let kind = tokens.next().ok_or_else(|| bad("empty layer description".into()))?;
        let mut kv = std::collections::BTreeMap::new();
        for t in tokens {
            let (k, v) = t.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {t:?}")))?;
            if kv.insert(k, v).is_some() {
                return Err(bad(format!("duplicate key {k:?}")));
            }
        }
        let pad = kv.remove("pad");
        let mut take = |key: &str| kv.remove(key);
        let triple = |v: Option<&str>, default: Option<[usize; 3]>, key: &str| -> Result<[usize; 3]> {
            match (v, default) {
                (Some(v), _) => parse_triple(v).map_err(|e| bad(format!("{key}: {e}"))),
                (None, Some(d)) => Ok(d),
                (None, None) => Err(bad(format!("missing {key}"))),
            }
        };
        let int = |v: Option<&str>, key: &str| -> Result<usize> {
            v.ok_or_else(|| bad(format!("missing {key}")))?
                .parse()
                .map_err(|_| bad(format!("{key} must be an integer")))
        };
        let layer = match kind {
            "conv" => Layer::Conv3d {
                kernel: triple(take("kernel"), None, "kernel")?,
                in_channels: int(take("in"), "in")?,
                out_channels: int(take("out"), "out")?,
                geometry: ConvGeometry {
                    stride: triple(take("stride"), Some([1; 3]), "stride")?,
                    pad_before: triple(take("pad_before").or(pad), Some([0; 3]), "pad_before")?,
                    pad_after: triple(take("pad_after").or(pad), Some([0; 3]), "pad_after")?,
                },
            },
            "relu" => Layer::Relu,
            "maxpool" => {
                let window = triple(take("window"), None, "window")?;
                Layer::MaxPool3d(PoolGeometry {
                    window,
                    stride: triple(take("stride"), Some(window), "stride")?,
                })
            }
            "flatten" => Layer::Flatten,
            "fc" => Layer::FullyConnected {
                inputs: int(take("in"), "in")?,
                outputs: int(take("out"), "out")?,
            },
            other => return Err(bad(format!("unknown layer kind {other:?}"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(bad(format!("unknown key {k:?}")));
        }
        Ok(layer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub layers: Vec<Layer>,
    /// `[x, y, z, channels]`.
    pub input_shape: [usize; 4],
    /// Names of output node 0 (the score node) and node 1.
    pub class_names: [String; 2],
    pub use_bias: bool,
}

impl NetworkConfig {
    pub fn new(layers: Vec<Layer>, input_shape: [usize; 4]) -> Self {
        Self {
            layers,
            input_shape,
            class_names: ["AD".to_string(), "NC".to_string()],
            use_bias: true,
        }
    }

    pub fn shape_plan(&self) -> Result<Vec<Vec<usize>>> {
        shape_plan(self, &self.input_shape)
    }

    /// Parametric layers, in order.
    pub fn param_layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter(|l| l.has_params())
    }

    /// Checks the chain and that it ends in exactly two logits.
    pub fn validate(&self) -> Result<()> {
        let plan = self.shape_plan()?;
        match plan.last() {
            Some(last) if last.as_slice() == [NUM_CLASSES] => Ok(()),
            Some(last) => Err(Error::LayerPlan {
                index: self.layers.len() - 1,
                layer: self.layers[self.layers.len() - 1].to_string(),
                reason: format!("network must end in {NUM_CLASSES} logits, ends in {last:?}"),
            }),
            None => Err(Error::InvalidArgument("network has no layers".into())),
        }
    }
}

/// Output shape of every layer in order, or the first layer that cannot
/// accept its input.
pub fn shape_plan(config: &NetworkConfig, input: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = Vec::with_capacity(config.layers.len());
    let mut cur = input.to_vec();
    for (index, layer) in config.layers.iter().enumerate() {
        cur = layer.output_shape(&cur).map_err(|reason| Error::LayerPlan {
            index,
            layer: layer.to_string(),
            reason,
        })?;
        shapes.push(cur.clone());
    }
    Ok(shapes)
}

/// Three conv blocks and one fully-connected layer over a 160×160×160×2
/// input: spatial extents 160 → 39 → 19 → 13 → 6 → 1, channels
/// 2 → 64 → 128 → 512, then two logits.
pub fn build_paper_network() -> NetworkConfig {
    NetworkConfig::new(
        vec![
            Layer::conv(7, 2, 64, 4),
            Layer::Relu,
            Layer::pool(3, 2),
            Layer::conv(7, 64, 128, 1),
            Layer::Relu,
            Layer::pool(3, 2),
            Layer::conv(6, 128, 512, 1),
            Layer::Relu,
            Layer::Flatten,
            Layer::FullyConnected {
                inputs: 512,
                outputs: NUM_CLASSES,
            },
        ],
        [160, 160, 160, 2],
    )
}

/// Reduced network with the same block structure for desk-scale inputs
/// (default 40×40×24×2): conv 5³/2 → pool 2/2 → conv 3³ → pool 3/2 →
/// conv over the remaining extent → fc.
pub fn build_small_network(input_shape: [usize; 4]) -> Result<NetworkConfig> {
    let [.., channels] = input_shape;
    let mut layers = vec![
        Layer::conv(5, channels, 8, 2),
        Layer::Relu,
        Layer::pool(2, 2),
        Layer::conv(3, 8, 16, 1),
        Layer::Relu,
        Layer::pool(3, 2),
    ];
    let probe = NetworkConfig::new(layers.clone(), input_shape);
    let plan = probe.shape_plan()?;
    let last = plan.last().expect("non-empty");
    layers.extend([
        Layer::Conv3d {
            kernel: [last[0], last[1], last[2]],
            in_channels: 16,
            out_channels: 32,
            geometry: ConvGeometry::uniform(1, 0),
        },
        Layer::Relu,
        Layer::Flatten,
        Layer::FullyConnected {
            inputs: 32,
            outputs: NUM_CLASSES,
        },
    ]);
    let config = NetworkConfig::new(layers, input_shape);
    config.validate()?;
    Ok(config)
}

/// Renames the output nodes; nothing numeric changes.
pub fn reassign_output_labels(config: &NetworkConfig, class0: &str, class1: &str) -> NetworkConfig {
    NetworkConfig {
        class_names: [class0.to_string(), class1.to_string()],
        ..config.clone()
    }
}
