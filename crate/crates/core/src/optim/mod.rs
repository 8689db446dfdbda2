//! Training protocol: SGD with classical momentum, a log-linear learning
//! rate schedule, stratified k-fold cross-validation, and left-right flip
//! augmentation of training folds.

mod train;

pub use train::{
    cross_validate, evaluate_subjects, train, transfer_evaluate, write_loss_curves, write_out_of_fold, CvResult,
    Evaluation, TrainOutcome,
};

use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::preprocess::Subject;
use crate::rng::SeededRng;
use crate::tensor::Scalar;
#[cfg(test)]
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub epochs: usize,
    pub momentum: f64,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
    pub augment_flip: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            epochs: 50,
            momentum: 0.9,
            lr_initial: 1e-5,
            lr_final: 1e-7,
            batch_size: 4,
            folds: 10,
            seed: 0,
            augment_flip: true,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.lr_final > 0.0 && self.lr_initial >= self.lr_final && self.lr_initial.is_finite()) {
            return bad(format!(
                "need lr_initial >= lr_final > 0, got {} and {}",
                self.lr_initial, self.lr_final
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        Ok(())
    }
}

/// `lr(e) = lr_initial · (lr_final / lr_initial)^((e − 1) / (epochs − 1))`
/// for a 1-based epoch; a single-epoch run uses `lr_initial`.
pub fn lr_schedule(epoch: usize, hp: &Hyperparameters) -> Result<f64> {
    if epoch == 0 || epoch > hp.epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside 1..={}",
            hp.epochs
        )));
    }
    if hp.epochs == 1 {
        return Ok(hp.lr_initial);
    }
    let frac = (epoch - 1) as f64 / (hp.epochs - 1) as f64;
    Ok(hp.lr_initial * (hp.lr_final / hp.lr_initial).powf(frac))
}

/// One velocity tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState<T: Scalar = f32> {
    pub velocity: NetworkParams<T>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(params: &NetworkParams<T>) -> Result<Self> {
        Ok(Self {
            velocity: params.zeros_like()?,
        })
    }
}

/// `v ← μ·v − lr·g`, then `w ← w + v`.
pub fn sgd_step<T: Scalar>(
    params: &mut NetworkParams<T>,
    grads: &NetworkParams<T>,
    state: &mut SgdState<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let shapes = |p: &NetworkParams<T>| p.tensors().map(|t| t.shape().to_vec()).collect::<Vec<_>>();
    let ps = shapes(params);
    for other in [shapes(grads), shapes(&state.velocity)] {
        if other != ps {
            return Err(Error::ShapeMismatch {
                expected: ps.concat(),
                actual: other.concat(),
            });
        }
    }
    let (mu, lr) = (T::from_f64(momentum), T::from_f64(lr));
    for ((w, g), v) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.velocity.tensors_mut())
    {
        for ((w, &g), v) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = mu * *v - lr * g;
            *w = *w + *v;
        }
    }
    Ok(())
}

/// Fold index of every subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Shuffles each class with its own seeded stream, then deals members
/// round-robin. The dealing position carries over from one class to the
/// next so total fold sizes also differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut fold_of = vec![0; labels.len()];
    let mut cursor = 0;
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
        SeededRng::derived(seed, class as u64).shuffle(&mut members);
        for i in members {
            fold_of[i] = cursor % k;
            cursor += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Originals followed by their left-right mirrored copies. Refuses input
/// that already contains mirrored copies.
pub fn augment_training_set(subjects: &[Subject]) -> Result<Vec<Subject>> {
    if let Some(s) = subjects.iter().find(|s| s.flipped) {
        return Err(Error::InvalidArgument(format!(
            "subject {} is already a flipped copy; augmentation applies once",
            s.id
        )));
    }
    let mut out = subjects.to_vec();
    for s in subjects {
        out.push(s.flipped_copy()?);
    }
    Ok(out)
}
