use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use voxnet::network::save_checkpoint;
use voxnet::optim::{cross_validate, train, write_loss_curves, write_out_of_fold, Hyperparameters};
use voxnet::preprocess::load_manifest;
use voxnet::stats::{confusion_from_predictions, group_summary, roc_auc, roc_svg, write_roc_csv};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::io::{prepare_out_dir, write_text};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
}

pub fn resolve(config: &RunConfig, overrides: &Overrides) -> CliResult<(Hyperparameters, PathBuf)> {
    let mut hp = config.hyperparameters.resolve();
    if let Some(e) = overrides.epochs {
        hp.epochs = e;
    }
    if let Some(k) = overrides.folds {
        hp.folds = k;
    }
    if let Some(s) = overrides.seed {
        hp.seed = s;
    }
    hp.validate().context("hyperparameters")?;
    let out = overrides
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::usage("no output directory: pass --out or set output_dir"))?;
    Ok((hp, out))
}

pub fn run(manifest: &Path, config: &RunConfig, overrides: &Overrides, force: bool) -> CliResult<()> {
    let (hp, out) = resolve(config, overrides)?;
    if !manifest.is_file() {
        return Err(CliError::usage(format!("manifest {} not found", manifest.display())));
    }
    prepare_out_dir(&out, force)?;
    let subjects = load_manifest(manifest).context(manifest.display())?;
    let first = subjects
        .first()
        .ok_or_else(|| CliError::usage(format!("{}: no subjects", manifest.display())))?;
    let network = config.network_for(first.extents())?;
    log::info!("{} subjects, {}-fold cross-validation, {} epochs", subjects.len(), hp.folds, hp.epochs);

    let cv = cross_validate(&subjects, &network, &hp)?;
    for (fold, ckpt) in cv.checkpoints.iter().enumerate() {
        save_checkpoint(out.join(format!("fold_{fold}.ckpt")), ckpt)?;
    }
    write_loss_curves(out.join("loss_curves.csv"), &cv.loss_curves)?;
    write_out_of_fold(out.join("out_of_fold.csv"), &cv.evaluations)?;

    let by_log_odds = cv.scored_log_odds()?;
    let by_conv_score = cv.scored()?;
    let curve = roc_auc(&by_log_odds)?;
    write_roc_csv(out.join("roc.csv"), &curve)?;
    write_text(&out.join("roc.svg"), &roc_svg(&[("out-of-fold", &curve)]))?;
    let confusion = confusion_from_predictions(&by_log_odds)?;
    let groups = group_summary(&by_conv_score)?;

    let mut report = String::new();
    let _ = writeln!(report, "subjects = {}", subjects.len());
    let _ = writeln!(report, "folds = {}", hp.folds);
    let _ = writeln!(report, "epochs = {}", hp.epochs);
    let _ = writeln!(report, "auc = {}", curve.auc);
    let _ = writeln!(report, "convscore_auc = {}", roc_auc(&by_conv_score)?.auc);
    let _ = writeln!(report, "sensitivity = {}", confusion.sensitivity()?);
    let _ = writeln!(report, "specificity = {}", confusion.specificity()?);
    let _ = writeln!(report, "accuracy = {}", confusion.accuracy()?);
    let _ = writeln!(report, "true_positive = {}", confusion.true_positive);
    let _ = writeln!(report, "false_negative = {}", confusion.false_negative);
    let _ = writeln!(report, "true_negative = {}", confusion.true_negative);
    let _ = writeln!(report, "false_positive = {}", confusion.false_positive);
    for (name, g) in [("class_0", &groups.positive), ("class_1", &groups.negative)] {
        let _ = writeln!(report, "convscore_{name}_mean = {}", g.mean);
        let _ = writeln!(report, "convscore_{name}_sd = {}", g.sd);
    }
    let _ = writeln!(report, "convscore_welch_t = {}", groups.welch.statistic);
    let _ = writeln!(report, "convscore_welch_p = {}", groups.welch.p_value);

    if config.final_model {
        log::info!("training final model on all {} subjects", subjects.len());
        let outcome = train(&subjects, &network, &hp, hp.seed)?;
        save_checkpoint(out.join("model.ckpt"), &outcome.checkpoint)?;
        let _ = writeln!(report, "final_model_loss = {}", outcome.loss_curve.last().copied().unwrap_or(f64::NAN));
    }

    let mut effective = config.clone();
    effective.output_dir = Some(out.clone());
    effective.hyperparameters = crate::config::HyperparameterSection {
        epochs: Some(hp.epochs),
        momentum: Some(hp.momentum),
        lr_initial: Some(hp.lr_initial),
        lr_final: Some(hp.lr_final),
        batch_size: Some(hp.batch_size),
        folds: Some(hp.folds),
        seed: Some(hp.seed),
        augment_flip: Some(hp.augment_flip),
    };
    let toml = toml::to_string(&effective).map_err(|e| CliError::runtime(e.to_string()))?;
    write_text(&out.join("run.toml"), &toml)?;
    write_text(&out.join("metrics.txt"), &report)?;
    print!("{report}");
    Ok(())
}
