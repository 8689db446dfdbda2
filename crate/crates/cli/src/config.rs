//! TOML run configuration for `train` and phantom specifications for
//! `phantom`. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxnet::network::{build_paper_network, build_small_network, Layer, NetworkConfig};
use voxnet::optim::Hyperparameters;
use voxnet::phantom::PhantomSpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Used when `--out` is not given.
    pub output_dir: Option<PathBuf>,
    /// Runs on one thread.
    #[serde(default)]
    pub deterministic: bool,
    /// Also trains one network on every subject and saves it as `model.ckpt`.
    #[serde(default)]
    pub final_model: bool,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub hyperparameters: HyperparameterSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// `"small"`, `"paper"` or `"custom"`.
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Layer descriptions for `custom`, e.g. `"conv kernel=3 in=2 out=8 stride=1"`.
    pub layers: Option<Vec<String>>,
    #[serde(default = "default_true")]
    pub use_bias: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            layers: None,
            use_bias: true,
        }
    }
}

fn default_preset() -> String {
    "small".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterSection {
    pub epochs: Option<usize>,
    pub momentum: Option<f64>,
    pub lr_initial: Option<f64>,
    pub lr_final: Option<f64>,
    pub batch_size: Option<usize>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub augment_flip: Option<bool>,
}

impl HyperparameterSection {
    pub fn resolve(&self) -> Hyperparameters {
        let d = Hyperparameters::default();
        Hyperparameters {
            epochs: self.epochs.unwrap_or(d.epochs),
            momentum: self.momentum.unwrap_or(d.momentum),
            lr_initial: self.lr_initial.unwrap_or(d.lr_initial),
            lr_final: self.lr_final.unwrap_or(d.lr_final),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            folds: self.folds.unwrap_or(d.folds),
            seed: self.seed.unwrap_or(d.seed),
            augment_flip: self.augment_flip.unwrap_or(d.augment_flip),
        }
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_toml(path)
    }

    /// Network for volumes of the given extents. `small` and `custom` take
    /// their input shape from the data; `paper` requires 160×160 slices and
    /// at most 160 of them.
    pub fn network_for(&self, extents: [usize; 3]) -> CliResult<NetworkConfig> {
        let [x, y, z] = extents;
        let mut config = match self.network.preset.as_str() {
            "small" => build_small_network([x, y, z, 2])?,
            "paper" => {
                let config = build_paper_network();
                let [px, py, pz, _] = config.input_shape;
                if x != px || y != py || z > pz {
                    return Err(CliError::usage(format!(
                        "preset \"paper\" needs {px}x{py}x(<= {pz}) volumes, data is {x}x{y}x{z}"
                    )));
                }
                config
            }
            "custom" => {
                let lines = self
                    .network
                    .layers
                    .as_ref()
                    .ok_or_else(|| CliError::usage("preset \"custom\" needs network.layers"))?;
                let layers = lines.iter().map(|l| l.parse::<Layer>()).collect::<Result<Vec<_>, _>>()?;
                NetworkConfig::new(layers, [x, y, z, 2])
            }
            other => {
                return Err(CliError::usage(format!(
                    "unknown network preset {other:?} (expected small, paper or custom)"
                )))
            }
        };
        if self.network.preset != "custom" && self.network.layers.is_some() {
            return Err(CliError::usage("network.layers is only valid with preset \"custom\""));
        }
        config.use_bias = self.network.use_bias;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomFile {
    pub extents: Option<[usize; 3]>,
    pub n_per_class: Option<usize>,
    pub effect_size: Option<f64>,
    pub noise_sd: Option<f64>,
    pub seed: Option<u64>,
    pub coupling: Option<f64>,
}

impl PhantomFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_toml(path)
    }

    pub fn resolve(&self) -> PhantomSpec {
        let d = PhantomSpec::default();
        PhantomSpec {
            extents: self.extents.unwrap_or(d.extents),
            n_per_class: self.n_per_class.unwrap_or(d.n_per_class),
            effect_size: self.effect_size.unwrap_or(d.effect_size),
            noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
            seed: self.seed.unwrap_or(d.seed),
            coupling: self.coupling.or(d.coupling),
        }
    }
}
