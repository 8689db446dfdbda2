//! Subject manifests: UTF-8 CSV with a header row.
//!
//! Required columns: `subject_id`, `label`, `fdg_path`, `av45_path`.
//! Optional cognitive columns are `<measure>_m0`, `<measure>_m12` and
//! `<measure>_m36`. Volume paths are resolved relative to the manifest's
//! directory. Blank labels mark unlabeled subjects; blank cognitive cells
//! are absent values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::nvol::load_volume;
use crate::preprocess::{CognitiveSeries, Subject};

pub const MEASURES: [&str; 4] = ["cdr_sb", "adas", "faq", "mmse"];
const HORIZONS: [(&str, usize); 3] = [("m0", 0), ("m12", 1), ("m36", 2)];

/// `0`/`1`, or a class name: AD and converter are 0, NC and nonconverter are 1.
pub fn parse_label(s: &str) -> std::result::Result<Option<usize>, String> {
    let t = s.trim();
    match t.to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "0" | "ad" | "converter" => Ok(Some(0)),
        "1" | "nc" | "nonconverter" => Ok(Some(1)),
        _ => Err(format!("unrecognized label {t:?}")),
    }
}

/// One manifest row with volume paths resolved but not loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Option<usize>,
    pub fdg: PathBuf,
    pub av45: PathBuf,
    pub cognitive: BTreeMap<String, CognitiveSeries>,
    /// Cognitive measures that have at least one column in the header.
    pub measures: Vec<String>,
}

/// Parses and validates the manifest without touching the volumes.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| Error::Manifest {
            row: 0,
            reason: format!("missing column {name:?}"),
        })
    };
    let (c_id, c_label, c_fdg, c_av45) = (
        required("subject_id")?,
        required("label")?,
        required("fdg_path")?,
        required("av45_path")?,
    );
    let mut cognitive_cols: Vec<(String, usize, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        for (suffix, slot) in HORIZONS {
            if let Some(measure) = h.strip_suffix(&format!("_{suffix}")) {
                if !measure.is_empty() {
                    cognitive_cols.push((measure.to_string(), slot, i));
                }
            }
        }
    }
    let mut measures: Vec<String> = cognitive_cols.iter().map(|(m, ..)| m.clone()).collect();
    measures.sort();
    measures.dedup();

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Manifest {
            row,
            reason: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let id = field(c_id).to_string();
        if id.is_empty() {
            return Err(Error::Manifest {
                row,
                reason: "empty subject_id".into(),
            });
        }
        let label = parse_label(field(c_label)).map_err(|reason| Error::Manifest { row, reason })?;
        let mut cognitive: BTreeMap<String, CognitiveSeries> = BTreeMap::new();
        for (measure, slot, c) in &cognitive_cols {
            let cell = field(*c);
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|_| Error::Manifest {
                    row,
                    reason: format!("column {}: {cell:?} is not a number", &headers[*c]),
                })?)
            };
            let series = cognitive.entry(measure.clone()).or_default();
            match slot {
                0 => series.baseline = value,
                1 => series.month12 = value,
                _ => series.month36 = value,
            }
        }
        rows.push(ManifestEntry {
            id,
            label,
            fdg: base.join(field(c_fdg)),
            av45: base.join(field(c_av45)),
            cognitive,
            measures: measures.clone(),
        });
    }
    Ok(rows)
}

/// Reads the manifest and loads every subject's volumes, in file order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Subject>> {
    read_manifest(path)?
        .into_par_iter()
        .enumerate()
        .map(|(i, r)| {
            let row = i + 1;
            let load = |p: &Path| {
                load_volume(p).map_err(|e| Error::Manifest {
                    row,
                    reason: e.to_string(),
                })
            };
            let mut s = Subject::new(r.id, r.label, load(&r.fdg)?, load(&r.av45)?).map_err(|e| Error::Manifest {
                row,
                reason: e.to_string(),
            })?;
            s.cognitive = r.cognitive;
            Ok(s)
        })
        .collect()
}

/// Writes a manifest for subjects whose volumes already live at
/// `<dir>/<id>_fdg.nvol` and `<dir>/<id>_av45.nvol`.
pub fn write_manifest(path: impl AsRef<Path>, subjects: &[Subject]) -> Result<()> {
    let path = path.as_ref();
    let measures: Vec<&String> = {
        let mut m: Vec<&String> = subjects.iter().flat_map(|s| s.cognitive.keys()).collect();
        m.sort();
        m.dedup();
        m
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    })?;
    let mut header = vec![
        "subject_id".to_string(),
        "label".to_string(),
        "fdg_path".to_string(),
        "av45_path".to_string(),
    ];
    for m in &measures {
        for (suffix, _) in HORIZONS {
            header.push(format!("{m}_{suffix}"));
        }
    }
    w.write_record(&header)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for s in subjects {
        let mut rec = vec![
            s.id.clone(),
            s.label.map(|l| l.to_string()).unwrap_or_default(),
            format!("{}_fdg.nvol", s.id),
            format!("{}_av45.nvol", s.id),
        ];
        for m in &measures {
            let c = s.cognitive.get(*m).copied().unwrap_or_default();
            rec.extend([cell(c.baseline), cell(c.month12), cell(c.month36)]);
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
