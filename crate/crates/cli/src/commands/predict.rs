use std::path::Path;

use voxnet::network::load_checkpoint;
use voxnet::optim::transfer_evaluate;
use voxnet::preprocess::load_manifest;

use crate::error::{CliError, CliResult, Context};

/// Writes `subject_id,true_label,prob_converter,convscore,predicted_label`.
pub fn run(checkpoint: &Path, manifest: &Path, out: &Path) -> CliResult<()> {
    for p in [checkpoint, manifest] {
        if !p.is_file() {
            return Err(CliError::usage(format!("{} not found", p.display())));
        }
    }
    let ckpt = load_checkpoint(checkpoint).context(checkpoint.display())?;
    let subjects = load_manifest(manifest).context(manifest.display())?;
    let evaluations = transfer_evaluate(&ckpt, &subjects).context("prediction")?;

    let mut w = csv::Writer::from_path(out).context(out.display())?;
    w.write_record(["subject_id", "true_label", "prob_converter", "convscore", "predicted_label"])?;
    for e in &evaluations {
        w.write_record([
            e.subject_id.clone(),
            e.true_label.map(|l| l.to_string()).unwrap_or_default(),
            e.prob0.to_string(),
            e.conv_score.to_string(),
            e.predicted.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    println!("predicted = {}", evaluations.len());
    Ok(())
}
