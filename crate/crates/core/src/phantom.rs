//! Synthetic two-channel subjects for desk-scale training and evaluation.
//!
//! Every subject shares a smooth radial base pattern in both channels plus
//! independent Gaussian voxel noise. Positive-class (AD-like) subjects also
//! carry a lesion signal inside two ellipsoids mirrored across the
//! left-right midplane: channel 0 is lowered and channel 1 raised by
//! `effect_size · noise_sd · severity`, with severity drawn uniformly from
//! [0.5, 1.5]. Voxel coordinates are normalized to (-1, 1) per axis with the
//! left-right coordinate taken in absolute value, so the lesion mask is
//! exactly symmetric under a flip of axis 0.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::{save_volume, write_manifest, CognitiveSeries, Subject};
use crate::rng::SeededRng;
use crate::stats::ScoredSample;
use crate::tensor::Tensor;

/// Lesion centre (|u|, v, w) and semi-axes in normalized coordinates.
const LESION_CENTER: [f64; 3] = [0.45, -0.35, 0.1];
const LESION_AXES: [f64; 3] = [0.24, 0.3, 0.36];
/// Base pattern amplitude of each channel, in units of `noise_sd`.
const BASE_LEVEL: [f64; 2] = [20.0, 12.0];
const MIN_EXTENT: usize = 8;

/// Per-measure (baseline mean, change per unit of decline). MMSE falls as
/// the others rise.
const COGNITIVE_SCALES: [(&str, f64, f64); 4] = [
    ("cdr_sb", 1.5, 1.0),
    ("adas", 12.0, 3.0),
    ("faq", 4.0, 2.0),
    ("mmse", 27.0, -1.5),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub extents: [usize; 3],
    pub n_per_class: usize,
    /// Lesion amplitude in units of `noise_sd`.
    pub effect_size: f64,
    pub noise_sd: f64,
    pub seed: u64,
    /// When set, subjects get cognitive trajectories whose 36-month decline
    /// is `coupling · effect_size · severity` (zero for negatives) plus unit
    /// Gaussian noise.
    pub coupling: Option<f64>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            extents: [40, 40, 24],
            n_per_class: 40,
            effect_size: 5.0,
            noise_sd: 1.0,
            seed: 0,
            coupling: None,
        }
    }
}

fn normalized(i: usize, n: usize) -> f64 {
    (2 * i + 1) as f64 / n as f64 - 1.0
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
        }
        if !(self.effect_size >= 0.0 && self.effect_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "effect_size must be finite and >= 0, got {}",
                self.effect_size
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_sd must be > 0, got {}", self.noise_sd)));
        }
        if self.coupling.is_some_and(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coupling must be finite".into()));
        }
        if self.extents.iter().any(|&e| e < MIN_EXTENT) {
            return Err(Error::InvalidArgument(format!(
                "extents {:?} too small for the lesion regions (minimum {MIN_EXTENT} per axis)",
                self.extents
            )));
        }
        Ok(())
    }

    /// 1 inside either lesion ellipsoid, 0 elsewhere.
    pub fn lesion_mask(&self) -> Result<Tensor<f32>> {
        let [nx, ny, nz] = self.extents;
        let mut m = Tensor::zeros(&[nx, ny, nz])?;
        let data = m.data_mut();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let q = [normalized(x, nx).abs(), normalized(y, ny), normalized(z, nz)];
                    let r: f64 = (0..3).map(|a| ((q[a] - LESION_CENTER[a]) / LESION_AXES[a]).powi(2)).sum();
                    if r <= 1.0 {
                        data[(z * ny + y) * nx + x] = 1.0;
                    }
                }
            }
        }
        Ok(m)
    }

    fn base_pattern(&self, channel: usize) -> Result<Tensor<f32>> {
        let [nx, ny, nz] = self.extents;
        let mut t = Tensor::zeros(&[nx, ny, nz])?;
        let level = BASE_LEVEL[channel] * self.noise_sd;
        let data = t.data_mut();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let r2 = normalized(x, nx).powi(2) + normalized(y, ny).powi(2) + normalized(z, nz).powi(2);
                    let profile = if channel == 0 { 1.0 - 0.3 * r2 } else { 0.6 + 0.2 * r2 };
                    data[(z * ny + y) * nx + x] = (level * profile) as f32;
                }
            }
        }
        Ok(t)
    }
}

/// `n_per_class` positive subjects (label 0, ids `ph0000`...) followed by
/// `n_per_class` negatives. Subject `i` draws from its own stream derived
/// from the seed, so the output does not depend on thread count.
pub fn generate(spec: &PhantomSpec) -> Result<Vec<Subject>> {
    spec.validate()?;
    let mask = spec.lesion_mask()?;
    if mask.sum_f64() == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "extents {:?} leave the lesion regions empty",
            spec.extents
        )));
    }
    let base = [spec.base_pattern(0)?, spec.base_pattern(1)?];
    (0..2 * spec.n_per_class)
        .into_par_iter()
        .map(|i| {
            let label = usize::from(i >= spec.n_per_class);
            let mut rng = SeededRng::derived(spec.seed, i as u64);
            let severity = if label == 0 { 0.5 + rng.uniform() } else { 0.0 };
            let shift = spec.effect_size * spec.noise_sd * severity;
            let mut channels = base.clone();
            for (c, sign) in [(0, -1.0), (1, 1.0)] {
                for (v, &m) in channels[c].data_mut().iter_mut().zip(mask.data()) {
                    let lesion = if m > 0.0 { sign * shift } else { 0.0 };
                    *v = (*v as f64 + lesion + rng.normal(0.0, spec.noise_sd)) as f32;
                }
            }
            let [fdg, av45] = channels;
            let mut s = Subject::new(format!("ph{i:04}"), Some(label), fdg, av45)?;
            if let Some(coupling) = spec.coupling {
                let decline = coupling * spec.effect_size * severity + rng.standard_normal();
                s.cognitive = cognitive_series(decline, &mut rng);
            }
            Ok(s)
        })
        .collect()
}

fn cognitive_series(decline: f64, rng: &mut SeededRng) -> BTreeMap<String, CognitiveSeries> {
    COGNITIVE_SCALES
        .iter()
        .map(|&(name, baseline_mean, per_unit)| {
            let baseline = baseline_mean + 0.5 * per_unit.abs() * rng.standard_normal();
            let month12 = baseline + per_unit * (decline / 3.0 + 0.2 * rng.standard_normal());
            let month36 = baseline + per_unit * decline;
            (
                name.to_string(),
                CognitiveSeries {
                    baseline: Some(baseline),
                    month12: Some(month12),
                    month36: Some(month36),
                },
            )
        })
        .collect()
}

/// Region-mean baseline: mean channel 1 minus mean channel 0 inside the
/// lesion mask. Predicts positive above the midpoint between the expected
/// negative and mean-severity positive values.
pub fn oracle_classify(subjects: &[Subject], spec: &PhantomSpec) -> Result<Vec<ScoredSample>> {
    let mask = spec.lesion_mask()?;
    let region_diff = |a: &Tensor<f32>, b: &Tensor<f32>| -> Result<f64> {
        if a.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                expected: mask.shape().to_vec(),
                actual: a.shape().to_vec(),
            });
        }
        let (mut sum, mut n) = (0.0, 0.0);
        for ((&m, &x), &y) in mask.data().iter().zip(a.data()).zip(b.data()) {
            if m > 0.0 {
                sum += x as f64 - y as f64;
                n += 1.0;
            }
        }
        Ok(sum / n)
    };
    let threshold = region_diff(&spec.base_pattern(1)?, &spec.base_pattern(0)?)? + spec.effect_size * spec.noise_sd;
    subjects
        .iter()
        .map(|s| {
            let score = region_diff(&s.av45, &s.fdg)?;
            Ok(ScoredSample {
                subject_id: s.id.clone(),
                true_label: s.label.ok_or_else(|| {
                    Error::InvalidArgument(format!("subject {} is unlabeled", s.id))
                })?,
                score,
                predicted_label: if score > threshold { 0 } else { 1 },
            })
        })
        .collect()
}

/// Writes `<id>_fdg.nvol`, `<id>_av45.nvol` and `manifest.csv` into `dir`
/// and returns the manifest path.
pub fn write_dataset(dir: impl AsRef<Path>, subjects: &[Subject]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    subjects.par_iter().try_for_each(|s| {
        save_volume(dir.join(format!("{}_fdg.nvol", s.id)), &s.fdg)?;
        save_volume(dir.join(format!("{}_av45.nvol", s.id)), &s.av45)
    })?;
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, subjects)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::load_manifest;
    use crate::stats::roc_auc;

    fn small(effect: f64, seed: u64) -> PhantomSpec {
        PhantomSpec {
            n_per_class: 10,
            effect_size: effect,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let s = generate(&small(1.0, 3)).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.iter().filter(|x| x.label == Some(0)).count(), 10);
        assert_eq!(s, generate(&small(1.0, 3)).unwrap());
        assert_ne!(s[0].fdg, generate(&small(1.0, 4)).unwrap()[0].fdg);
    }

    #[test]
    fn mask_is_mirror_symmetric_and_nonempty() {
        for extents in [[40, 40, 24], [41, 33, 17], [160, 160, 96]] {
            let spec = PhantomSpec {
                extents,
                ..Default::default()
            };
            let m = spec.lesion_mask().unwrap();
            assert_eq!(m.flip_axis(0).unwrap(), m);
            assert!(m.sum_f64() > 0.0);
        }
    }

    #[test]
    fn noiseless_negative_is_mirror_symmetric() {
        let spec = PhantomSpec::default();
        for c in 0..2 {
            let b = spec.base_pattern(c).unwrap();
            assert_eq!(b.flip_axis(0).unwrap(), b);
        }
    }

    #[test]
    fn rejects_tiny_extents() {
        let spec = PhantomSpec {
            extents: [4, 40, 24],
            ..Default::default()
        };
        assert!(generate(&spec).is_err());
        assert!(generate(&PhantomSpec { n_per_class: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn oracle_separates_strong_effects() {
        let spec = PhantomSpec {
            n_per_class: 40,
            effect_size: 10.0,
            ..Default::default()
        };
        let s = generate(&spec).unwrap();
        let scored = oracle_classify(&s, &spec).unwrap();
        assert!(roc_auc(&scored).unwrap().auc >= 0.99);
        assert!(scored.iter().all(|x| x.predicted_label == x.true_label));
        assert_eq!(scored, oracle_classify(&s, &spec).unwrap());
    }

    #[test]
    fn coupling_adds_cognitive_columns() {
        let spec = PhantomSpec {
            coupling: Some(1.0),
            ..small(2.0, 1)
        };
        let s = generate(&spec).unwrap();
        assert_eq!(s[0].cognitive.len(), 4);
        assert!(generate(&small(2.0, 1)).unwrap()[0].cognitive.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &s).unwrap();
        assert_eq!(load_manifest(&manifest).unwrap(), s);
    }
}
