use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{
    self, decide, reassign_output_labels, Checkpoint, NetworkConfig, NetworkParams, TrainingMeta,
};
use crate::ops::softmax;
use crate::optim::{augment_training_set, lr_schedule, sgd_step, stratified_kfold, FoldAssignment, Hyperparameters, SgdState};
use crate::preprocess::{assemble_input, modality_means, Subject};
use crate::rng::{mix_seed, SeededRng};
use crate::stats::ScoredSample;
use crate::tensor::Tensor;

/// Trained parameters plus the mean training loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub loss_curve: Vec<f64>,
}

/// Network output for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub subject_id: String,
    pub true_label: Option<usize>,
    /// Cross-validation fold that held this subject out, if any.
    pub fold: Option<usize>,
    pub prob0: f64,
    pub predicted: usize,
    /// Pre-softmax value of output node 0.
    pub conv_score: f64,
    /// Output node 0 minus output node 1, i.e. `ln(prob0 / (1 - prob0))`
    /// without softmax saturation.
    pub log_odds: f64,
}

impl Evaluation {
    /// Scored by ConvScore. Fails for unlabeled subjects.
    pub fn to_scored(&self) -> Result<ScoredSample> {
        self.scored_with(self.conv_score)
    }

    /// Scored by the log-odds of class 0. Comparable across networks, unlike
    /// ConvScore, whose offset is arbitrary per network.
    pub fn to_scored_log_odds(&self) -> Result<ScoredSample> {
        self.scored_with(self.log_odds)
    }

    fn scored_with(&self, score: f64) -> Result<ScoredSample> {
        let true_label = self.true_label.ok_or_else(|| {
            Error::InvalidArgument(format!("subject {} has no label to score against", self.subject_id))
        })?;
        Ok(ScoredSample {
            subject_id: self.subject_id.clone(),
            true_label,
            score,
            predicted_label: self.predicted,
        })
    }
}

fn labels_of(subjects: &[Subject]) -> Result<Vec<usize>> {
    subjects
        .iter()
        .map(|s| match s.label {
            Some(l) if l < 2 => Ok(l),
            Some(l) => Err(Error::InvalidArgument(format!("subject {}: label {l} is not binary", s.id))),
            None => Err(Error::InvalidArgument(format!("subject {} is unlabeled", s.id))),
        })
        .collect()
}

fn inputs_for(subjects: &[Subject], means: [f64; 2], config: &NetworkConfig) -> Result<Vec<Tensor<f32>>> {
    subjects
        .par_iter()
        .map(|s| assemble_input(s, means, config.input_shape[2]))
        .collect()
}

/// Mini-batch SGD over `subjects` as given (augment beforehand if wanted).
/// Each epoch reshuffles with a seeded stream; each batch averages the
/// per-sample gradients, summed in batch order so the result does not
/// depend on thread count.
pub fn train(subjects: &[Subject], config: &NetworkConfig, hp: &Hyperparameters, seed: u64) -> Result<TrainOutcome> {
    hp.validate()?;
    config.validate()?;
    let labels = labels_of(subjects)?;
    for class in 0..2 {
        if !labels.contains(&class) {
            return Err(Error::InvalidArgument(format!(
                "training set has no subjects of class {class} ({})",
                config.class_names[class]
            )));
        }
    }
    let means = modality_means(subjects)?;
    let inputs = inputs_for(subjects, means, config)?;

    let mut params = NetworkParams::<f32>::init(config, mix_seed(seed, 0))?;
    params.modality_means = means;
    let mut state = SgdState::new(&params)?;
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    let mut shuffler = SeededRng::derived(seed, 1);
    let mut loss_curve = Vec::with_capacity(hp.epochs);

    for epoch in 1..=hp.epochs {
        let lr = lr_schedule(epoch, hp)?;
        shuffler.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(hp.batch_size).enumerate() {
            let per_sample: Vec<Option<(f64, NetworkParams<f32>)>> = batch
                .par_iter()
                .map(|&i| {
                    let trace = network::forward(config, &params, &inputs[i])?;
                    if !trace.logits.iter().all(|v| v.is_finite()) {
                        return Ok(None);
                    }
                    network::backward(config, &params, &trace, labels[i]).map(Some)
                })
                .collect::<Result<_>>()?;
            let mut batch_loss = 0.0;
            let mut grads: Option<NetworkParams<f32>> = None;
            for r in per_sample {
                let Some((loss, g)) = r else {
                    batch_loss = f64::NAN;
                    break;
                };
                batch_loss += loss;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.accumulate(&g)?,
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: batch_loss / batch.len() as f64,
                });
            }
            let mut grads = grads.expect("non-empty batch");
            grads.scale_in_place(1.0 / batch.len() as f32);
            sgd_step(&mut params, &grads, &mut state, lr, hp.momentum)?;
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / subjects.len() as f64;
        log::info!("epoch {epoch}/{}: lr {lr:.3e}, mean loss {mean:.6}", hp.epochs);
        loss_curve.push(mean);
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            params,
            meta: TrainingMeta {
                seed,
                epochs: hp.epochs,
                fold: None,
            },
        },
        loss_curve,
    })
}

fn evaluate_with(config: &NetworkConfig, params: &NetworkParams<f32>, subjects: &[Subject]) -> Result<Vec<Evaluation>> {
    let net = network::Network::new(config.clone(), params.clone())?;
    subjects
        .par_iter()
        .map(|s| {
            let input = assemble_input(s, params.modality_means, config.input_shape[2])?;
            let logits = net.logits(&input)?;
            let prob0 = softmax(&logits)?[0] as f64;
            Ok(Evaluation {
                subject_id: s.id.clone(),
                true_label: s.label,
                fold: None,
                prob0,
                predicted: decide(prob0),
                conv_score: logits[0] as f64,
                log_odds: logits[0] as f64 - logits[1] as f64,
            })
        })
        .collect()
}

/// Probability, decision and ConvScore for every subject, preprocessed with
/// the checkpoint's stored group means.
pub fn evaluate_subjects(checkpoint: &Checkpoint, subjects: &[Subject]) -> Result<Vec<Evaluation>> {
    evaluate_with(&checkpoint.config, &checkpoint.params, subjects)
}

/// Applies a trained network unchanged to a new cohort, with output nodes
/// renamed converter / nonconverter.
pub fn transfer_evaluate(checkpoint: &Checkpoint, subjects: &[Subject]) -> Result<Vec<Evaluation>> {
    let config = reassign_output_labels(&checkpoint.config, "converter", "nonconverter");
    evaluate_with(&config, &checkpoint.params, subjects)
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub assignment: FoldAssignment,
    /// One per fold, in fold order.
    pub checkpoints: Vec<Checkpoint>,
    pub loss_curves: Vec<Vec<f64>>,
    /// Out-of-fold results in input subject order.
    pub evaluations: Vec<Evaluation>,
}

impl CvResult {
    pub fn scored(&self) -> Result<Vec<ScoredSample>> {
        self.evaluations.iter().map(Evaluation::to_scored).collect()
    }

    /// Out-of-fold samples scored by log-odds, for pooling across folds.
    pub fn scored_log_odds(&self) -> Result<Vec<ScoredSample>> {
        self.evaluations.iter().map(Evaluation::to_scored_log_odds).collect()
    }
}

/// Stratified k-fold cross-validation. Group means and flip augmentation
/// use each fold's training subjects only; held-out subjects are scored by
/// the network that never saw them.
pub fn cross_validate(subjects: &[Subject], config: &NetworkConfig, hp: &Hyperparameters) -> Result<CvResult> {
    hp.validate()?;
    config.validate()?;
    let labels = labels_of(subjects)?;
    let assignment = stratified_kfold(&labels, hp.folds, hp.seed)?;
    let fold_seed_base = mix_seed(hp.seed, 0xF01D);

    let per_fold: Vec<(TrainOutcome, Vec<Evaluation>)> = (0..hp.folds)
        .into_par_iter()
        .map(|fold| {
            let run = || -> Result<(TrainOutcome, Vec<Evaluation>)> {
                let training: Vec<Subject> = assignment.training(fold).into_iter().map(|i| subjects[i].clone()).collect();
                let training = if hp.augment_flip {
                    augment_training_set(&training)?
                } else {
                    training
                };
                log::info!("fold {fold}: training on {} volumes", training.len());
                let mut outcome = train(&training, config, hp, mix_seed(fold_seed_base, fold as u64))?;
                outcome.checkpoint.meta.fold = Some(fold);
                let held_out: Vec<Subject> = assignment
                    .validation(fold)
                    .into_iter()
                    .map(|i| subjects[i].clone())
                    .collect();
                let mut evals = evaluate_subjects(&outcome.checkpoint, &held_out)?;
                for e in &mut evals {
                    e.fold = Some(fold);
                }
                Ok((outcome, evals))
            };
            run().map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut slots: Vec<Option<Evaluation>> = vec![None; subjects.len()];
    let mut checkpoints = Vec::with_capacity(hp.folds);
    let mut loss_curves = Vec::with_capacity(hp.folds);
    for (fold, (outcome, evals)) in per_fold.into_iter().enumerate() {
        for (i, e) in assignment.validation(fold).into_iter().zip(evals) {
            slots[i] = Some(e);
        }
        checkpoints.push(outcome.checkpoint);
        loss_curves.push(outcome.loss_curve);
    }
    let evaluations = slots
        .into_iter()
        .map(|e| e.expect("folds partition the subjects"))
        .collect();
    Ok(CvResult {
        assignment,
        checkpoints,
        loss_curves,
        evaluations,
    })
}

/// CSV with columns `fold,epoch,mean_loss`; epochs are 1-based.
pub fn write_loss_curves(path: impl AsRef<Path>, curves: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "epoch", "mean_loss"])?;
    for (fold, curve) in curves.iter().enumerate() {
        for (e, loss) in curve.iter().enumerate() {
            w.write_record([fold.to_string(), (e + 1).to_string(), loss.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// CSV with columns `subject_id,fold,true_label,score,log_odds,prob0,predicted`,
/// where `score` is the ConvScore.
pub fn write_out_of_fold(path: impl AsRef<Path>, evaluations: &[Evaluation]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject_id", "fold", "true_label", "score", "log_odds", "prob0", "predicted"])?;
    for e in evaluations {
        w.write_record([
            e.subject_id.clone(),
            e.fold.map(|f| f.to_string()).unwrap_or_default(),
            e.true_label.map(|l| l.to_string()).unwrap_or_default(),
            e.conv_score.to_string(),
            e.log_odds.to_string(),
            e.prob0.to_string(),
            e.predicted.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
