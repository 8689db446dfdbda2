//! Intensity preprocessing, input assembly, and the subject data model.
//!
//! Each modality is rescaled per subject to [0, 255], then a single group
//! mean (over all voxels of all training volumes of that modality) is
//! subtracted. The two modalities are stacked on the channel axis and the z
//! axis is zero-padded symmetrically to the network's input depth.

mod manifest;
mod nvol;

use std::collections::BTreeMap;

pub use manifest::{load_manifest, parse_label, read_manifest, write_manifest, ManifestEntry, MEASURES};
pub use nvol::{decode_volume, encode_volume, load_volume, save_volume, NVOL_MAGIC, NVOL_VERSION};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Baseline, 12-month and 36-month values of one cognitive measure.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CognitiveSeries {
    pub baseline: Option<f64>,
    pub month12: Option<f64>,
    pub month36: Option<f64>,
}

impl CognitiveSeries {
    /// `value(horizon) - baseline` for a horizon of 12 or 36 months, or
    /// `None` when either endpoint is missing.
    pub fn change(&self, horizon_months: u32) -> Result<Option<f64>> {
        let end = match horizon_months {
            12 => self.month12,
            36 => self.month36,
            h => return Err(Error::InvalidArgument(format!("horizon must be 12 or 36 months, got {h}"))),
        };
        Ok(match (self.baseline, end) {
            (Some(b), Some(e)) => Some(e - b),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    /// 0 (positive class: AD / converter), 1 (negative), or unknown.
    pub label: Option<usize>,
    /// Modality 0, `[nx, ny, nz]`.
    pub fdg: Tensor<f32>,
    /// Modality 1, same extents as `fdg`.
    pub av45: Tensor<f32>,
    pub cognitive: BTreeMap<String, CognitiveSeries>,
    /// Set on left-right mirrored copies produced by augmentation.
    pub flipped: bool,
}

impl Subject {
    pub fn new(id: impl Into<String>, label: Option<usize>, fdg: Tensor<f32>, av45: Tensor<f32>) -> Result<Self> {
        let s = Self {
            id: id.into(),
            label,
            fdg,
            av45,
            cognitive: BTreeMap::new(),
            flipped: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fdg.rank() != 3 {
            return Err(Error::InvalidArgument(format!(
                "subject {}: volumes must be rank 3, got {:?}",
                self.id,
                self.fdg.shape()
            )));
        }
        if self.fdg.shape() != self.av45.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.fdg.shape().to_vec(),
                actual: self.av45.shape().to_vec(),
            });
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(Error::InvalidArgument(format!("subject {}: label {l} is not binary", self.id)));
            }
        }
        Ok(())
    }

    pub fn extents(&self) -> [usize; 3] {
        let s = self.fdg.shape();
        [s[0], s[1], s[2]]
    }

    /// Mirrored copy along axis 0 (left-right), label preserved.
    pub fn flipped_copy(&self) -> Result<Self> {
        Ok(Self {
            id: self.id.clone(),
            label: self.label,
            fdg: self.fdg.flip_axis(0)?,
            av45: self.av45.flip_axis(0)?,
            cognitive: self.cognitive.clone(),
            flipped: true,
        })
    }
}

/// Affine map sending the volume minimum to 0 and maximum to 255. A constant
/// volume maps to all zeros.
pub fn rescale_0_255(volume: &Tensor<f32>) -> Result<Tensor<f32>> {
    if !volume.all_finite() {
        return Err(Error::NonFinite("volume contains NaN or infinite voxels".into()));
    }
    let lo = volume.min() as f64;
    let hi = volume.max() as f64;
    if hi == lo {
        log::warn!("constant volume (value {lo}); rescaled to zeros");
        return Tensor::zeros(volume.shape());
    }
    let k = 255.0 / (hi - lo);
    Ok(volume.map(|v| (((v as f64) - lo) * k) as f32))
}

/// Mean over every voxel of every volume.
pub fn group_mean_scalar<'a>(volumes: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in volumes {
        sum += v.sum_f64();
        count += v.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("group mean of an empty group".into()));
    }
    Ok(sum / count as f64)
}

pub fn subtract_scalar(volume: &Tensor<f32>, value: f64) -> Tensor<f32> {
    volume.map(|v| ((v as f64) - value) as f32)
}

/// Group means of the rescaled modality-0 and modality-1 volumes.
pub fn modality_means(subjects: &[Subject]) -> Result<[f64; 2]> {
    if subjects.is_empty() {
        return Err(Error::InvalidArgument("group mean of an empty group".into()));
    }
    let fdg: Vec<Tensor<f32>> = subjects.iter().map(|s| rescale_0_255(&s.fdg)).collect::<Result<_>>()?;
    let av45: Vec<Tensor<f32>> = subjects.iter().map(|s| rescale_0_255(&s.av45)).collect::<Result<_>>()?;
    Ok([group_mean_scalar(&fdg)?, group_mean_scalar(&av45)?])
}

/// Builds the `[nx, ny, target_z, 2]` network input: rescale, subtract the
/// group mean, stack modality 0 then 1, and pad z with `floor(pad / 2)` zero
/// slices before and the rest after.
pub fn assemble_input(subject: &Subject, means: [f64; 2], target_z: usize) -> Result<Tensor<f32>> {
    subject.validate()?;
    let [nx, ny, nz] = subject.extents();
    if target_z < nz {
        return Err(Error::ShapeMismatch {
            expected: vec![nx, ny, target_z],
            actual: vec![nx, ny, nz],
        });
    }
    let before = (target_z - nz) / 2;
    let plane = nx * ny;
    let mut out = Tensor::zeros(&[nx, ny, target_z, 2])?;
    for (c, (vol, mean)) in [(&subject.fdg, means[0]), (&subject.av45, means[1])].into_iter().enumerate() {
        let processed = subtract_scalar(&rescale_0_255(vol)?, mean);
        let start = (c * target_z + before) * plane;
        out.data_mut()[start..start + nz * plane].copy_from_slice(processed.data());
    }
    Ok(out)
}

/// Binary region mask over a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiMask {
    pub name: String,
    pub mask: Tensor<f32>,
}

impl VoiMask {
    pub fn new(name: impl Into<String>, mask: Tensor<f32>) -> Result<Self> {
        let name = name.into();
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!("mask {name}: values must be 0 or 1")));
        }
        if !mask.data().contains(&1.0) {
            return Err(Error::InvalidArgument(format!("mask {name}: no voxel set")));
        }
        Ok(Self { name, mask })
    }

    pub fn voxel_count(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v == 1.0).count()
    }
}

fn masked_mean(volume: &Tensor<f32>, selected: impl Fn(usize) -> bool) -> Result<f64> {
    let (sum, n) = volume
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| selected(*i))
        .fold((0.0, 0usize), |(s, n), (_, &v)| (s + v as f64, n + 1));
    if n == 0 {
        return Err(Error::InvalidArgument("empty mask".into()));
    }
    Ok(sum / n as f64)
}

/// Mean uptake over the union of `targets` divided by mean uptake over
/// `reference`.
pub fn voi_mean_ratio(volume: &Tensor<f32>, targets: &[VoiMask], reference: &VoiMask) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target masks".into()));
    }
    for m in targets.iter().chain(std::iter::once(reference)) {
        if m.mask.shape() != volume.shape() {
            return Err(Error::ShapeMismatch {
                expected: volume.shape().to_vec(),
                actual: m.mask.shape().to_vec(),
            });
        }
    }
    let target = masked_mean(volume, |i| targets.iter().any(|m| m.mask.data()[i] == 1.0))?;
    let refm = masked_mean(volume, |i| reference.mask.data()[i] == 1.0)?;
    if refm == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "reference region {} has zero mean uptake",
            reference.name
        )));
    }
    Ok(target / refm)
}
