use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use voxnet::preprocess::read_manifest;
use voxnet::stats::{delong_test, mcnemar_test, negate_scores, pearson, roc_auc, roc_svg, ScoredSample};

use crate::error::{CliError, CliResult, Context};
use crate::io::{pair_by_subject, read_rows, read_scored, write_text};
use crate::svg::scatter;

pub fn roc_compare(a: &Path, b: &Path, column: Option<&str>, negate: [bool; 2], svg: &Path) -> CliResult<()> {
    let orient = |s: Vec<ScoredSample>, flip: bool| if flip { negate_scores(&s) } else { s };
    let sa = orient(read_scored(a, column)?, negate[0]);
    let sb = orient(read_scored(b, column)?, negate[1]);
    let sb = pair_by_subject(&sa, &sb, |s| s.subject_id.as_str())?;
    let t = delong_test(&sa, &sb)?;
    let (ca, cb) = (roc_auc(&sa)?, roc_auc(&sb)?);
    let name = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (na, nb) = (name(a), name(b));
    write_text(svg, &roc_svg(&[(na.as_str(), &ca), (nb.as_str(), &cb)]))?;
    println!("auc_a = {}", ca.auc);
    println!("auc_b = {}", cb.auc);
    println!("z = {}", t.statistic);
    println!("p_value = {}", t.p_value);
    println!("variance = {}", t.aux("variance").unwrap_or(f64::NAN));
    Ok(())
}

pub fn mcnemar(a: &Path, b: &Path) -> CliResult<()> {
    let ra = read_rows(a, None)?;
    let rb = pair_by_subject(&ra, &read_rows(b, None)?, |r| r.subject_id.as_str())?;
    let correct = |rows: &[crate::io::Row], path: &Path| -> CliResult<Vec<bool>> {
        rows.iter()
            .map(|r| match (r.true_label, r.predicted) {
                (Some(t), Some(p)) => Ok(t == p),
                _ => Err(CliError::usage(format!(
                    "{}: subject {} needs both a label and a prediction",
                    path.display(),
                    r.subject_id
                ))),
            })
            .collect()
    };
    let (ca, cb) = (correct(&ra, a)?, correct(&rb, b)?);
    for ((x, y), r) in ra.iter().zip(&rb).zip(&ra) {
        if x.true_label != y.true_label {
            return Err(CliError::usage(format!("subject {} has different labels in the two files", r.subject_id)));
        }
    }
    let t = mcnemar_test(&ca, &cb)?;
    println!("method = {}", t.method);
    println!("b = {}", t.aux("b").unwrap_or(f64::NAN));
    println!("c = {}", t.aux("c").unwrap_or(f64::NAN));
    println!("statistic = {}", t.statistic);
    println!("p_value = {}", t.p_value);
    Ok(())
}

pub fn correlate(
    scores: &Path,
    manifest: &Path,
    measure: &str,
    horizon: u32,
    column: Option<&str>,
    out: &Path,
) -> CliResult<()> {
    if horizon != 12 && horizon != 36 {
        return Err(CliError::usage(format!("horizon must be 12 or 36, got {horizon}")));
    }
    let entries = read_manifest(manifest).context(manifest.display())?;
    if !entries.first().is_some_and(|e| e.measures.iter().any(|m| m == measure)) {
        return Err(CliError::usage(format!(
            "{}: no columns for measure {measure:?}",
            manifest.display()
        )));
    }
    let rows = read_rows(scores, column)?;
    let by_id: HashMap<&str, &voxnet::preprocess::ManifestEntry> = entries.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut pairs = Vec::new();
    let mut ids = Vec::new();
    for r in &rows {
        let (Some(score), Some(entry)) = (r.score, by_id.get(r.subject_id.as_str())) else {
            continue;
        };
        let Some(series) = entry.cognitive.get(measure) else {
            continue;
        };
        if let Some(change) = series.change(horizon)? {
            pairs.push((score, change));
            ids.push(r.subject_id.clone());
        }
    }
    if pairs.is_empty() {
        return Err(CliError::usage("no complete pairs of score and cognitive change"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let t = pearson(&x, &y)?;

    std::fs::create_dir_all(out).map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
    let stem = format!("correlate_{measure}_m{horizon}");
    let csv_path = out.join(format!("{stem}.csv"));
    let file = File::create(&csv_path).map_err(|e| CliError::usage(format!("{}: {e}", csv_path.display())))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["subject_id", "score", "change"])?;
    for (id, (s, c)) in ids.iter().zip(&pairs) {
        w.write_record([id.clone(), s.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| CliError::usage(format!("{}: {e}", csv_path.display())))?;
    let title = format!("r = {:.3}, p = {:.3e}", t.statistic, t.p_value);
    write_text(
        &out.join(format!("{stem}.svg")),
        &scatter(&pairs, "ConvScore", &format!("{measure} change at {horizon} months"), &title),
    )?;
    println!("n = {}", pairs.len());
    println!("r = {}", t.statistic);
    println!("t = {}", t.aux("t").unwrap_or(f64::NAN));
    println!("p_value = {}", t.p_value);
    Ok(())
}
