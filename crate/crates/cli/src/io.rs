//! Output directories and score/prediction CSVs shared by the commands.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use voxnet::preprocess::parse_label;
use voxnet::stats::ScoredSample;

use crate::error::{CliError, CliResult, Context};

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::usage(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir)
            .map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::usage(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// One row of a score or prediction CSV.
#[derive(Debug, Clone)]
pub struct Row {
    pub subject_id: String,
    pub true_label: Option<usize>,
    pub score: Option<f64>,
    pub predicted: Option<usize>,
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    names.iter().find_map(|n| headers.iter().position(|h| h == *n))
}

/// Reads `subject_id` plus whichever of a label column (`true_label` or
/// `label`), a score column (`score_column`, else `score` or `convscore`)
/// and a prediction column (`predicted` or `predicted_label`) exist.
pub fn read_rows(path: &Path, score_column: Option<&str>) -> CliResult<Vec<Row>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .context(path.display())?;
    let headers = r.headers().context(path.display())?.clone();
    let id = column(&headers, &["subject_id"])
        .ok_or_else(|| CliError::usage(format!("{}: missing column \"subject_id\"", path.display())))?;
    let label = column(&headers, &["true_label", "label"]);
    let score = match score_column {
        Some(name) => Some(column(&headers, &[name]).ok_or_else(|| {
            CliError::usage(format!("{}: missing column {name:?}", path.display()))
        })?),
        None => column(&headers, &["score", "convscore"]),
    };
    let predicted = column(&headers, &["predicted", "predicted_label"]);
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.context(path.display())?;
        let at = |what: &str| format!("{} row {}: {what}", path.display(), i + 1);
        let cell = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("");
        let parse_class = |s: &str, what: &str| parse_label(s).map_err(|e| CliError::usage(at(&format!("{what}: {e}"))));
        let score = match cell(score) {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| CliError::usage(at(&format!("score {s:?} is not a number"))))?),
        };
        rows.push(Row {
            subject_id: cell(Some(id)).to_string(),
            true_label: parse_class(cell(label), "label")?,
            score,
            predicted: parse_class(cell(predicted), "prediction")?,
        });
    }
    Ok(rows)
}

/// Labeled, scored samples in file order.
pub fn read_scored(path: &Path, score_column: Option<&str>) -> CliResult<Vec<ScoredSample>> {
    read_rows(path, score_column)?
        .into_iter()
        .map(|r| {
            let missing = |what: &str| CliError::usage(format!("{}: subject {} has no {what}", path.display(), r.subject_id));
            Ok(ScoredSample {
                true_label: r.true_label.ok_or_else(|| missing("label"))?,
                score: r.score.ok_or_else(|| missing("score"))?,
                predicted_label: r.predicted.unwrap_or(0),
                subject_id: r.subject_id,
            })
        })
        .collect()
}

/// Reorders `b` to follow `a`'s subject order. Both files must cover the
/// same subjects exactly once.
pub fn pair_by_subject<T: Clone>(a: &[T], b: &[T], id: impl Fn(&T) -> &str) -> CliResult<Vec<T>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, x) in b.iter().enumerate() {
        if index.insert(id(x), i).is_some() {
            return Err(CliError::usage(format!("subject {} appears twice", id(x))));
        }
    }
    if a.len() != b.len() {
        return Err(CliError::usage(format!(
            "unpaired subjects: {} rows vs {} rows",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .map(|x| {
            index
                .get(id(x))
                .map(|&i| b[i].clone())
                .ok_or_else(|| CliError::usage(format!("unpaired subjects: {} has no partner", id(x))))
        })
        .collect()
}
