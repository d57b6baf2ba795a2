//! Feature tables as CSV.
//!
//! The header names every feature column `<view>_f<j>` with `j` counting
//! from 0 within the view, so the view partition is recoverable from the
//! header alone. A `label` column holds class names; `id` and `group` are
//! optional. Floats are written in the shortest form that parses back to
//! the same value.
//!
//! Synthetic ground truth goes to a sidecar next to the table
//! (`data.csv` → `data.truth.csv`) with columns `id` and `informative_view`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use mov_core::{Dataset, MultiViewSample, ViewSchema};

use crate::error::{CliError, Result};

const ID: &str = "id";
const LABEL: &str = "label";
const GROUP: &str = "group";

/// Path of the ground-truth sidecar belonging to `table`.
pub fn truth_path(table: &Path) -> PathBuf {
    let stem = table.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    table.with_file_name(format!("{stem}.truth.csv"))
}

enum Column {
    Id,
    Label,
    Group,
    Feature { view: usize, index: usize },
}

struct Header {
    columns: Vec<Column>,
    view_names: Vec<String>,
    view_dims: Vec<usize>,
}

fn parse_header(fields: &csv::StringRecord) -> std::result::Result<Header, Vec<String>> {
    let mut problems = Vec::new();
    let mut columns = Vec::with_capacity(fields.len());
    let mut view_names: Vec<String> = Vec::new();
    let mut view_dims: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (c, name) in fields.iter().enumerate() {
        if !seen.insert(name) {
            problems.push(format!("line 1: duplicate column {name:?}"));
            continue;
        }
        let col = match name {
            ID => Column::Id,
            LABEL => Column::Label,
            GROUP => Column::Group,
            _ => {
                let Some((view, j)) = name.rsplit_once("_f").and_then(|(v, j)| Some((v, j.parse::<usize>().ok()?))) else {
                    problems.push(format!("line 1: column {} ({name:?}) is not <view>_f<j>", c + 1));
                    continue;
                };
                let v = match view_names.iter().position(|n| n == view) {
                    Some(v) => v,
                    None => {
                        view_names.push(view.to_string());
                        view_dims.push(0);
                        view_names.len() - 1
                    }
                };
                if j != view_dims[v] {
                    problems.push(format!(
                        "line 1: column {name:?} out of order; expected {view}_f{}",
                        view_dims[v]
                    ));
                }
                view_dims[v] += 1;
                Column::Feature { view: v, index: j }
            }
        };
        columns.push(col);
    }
    if !columns.iter().any(|c| matches!(c, Column::Label)) {
        problems.push("line 1: missing column \"label\"".into());
    }
    if view_names.is_empty() {
        problems.push("line 1: no feature columns".into());
    }
    if problems.is_empty() {
        Ok(Header {
            columns,
            view_names,
            view_dims,
        })
    } else {
        Err(problems)
    }
}

/// Reads a feature table. Labels are mapped to indices through
/// `class_names`. Every malformed row is reported, with its line number.
///
/// Rows without an `id` column get `r<line>` ids. When the sidecar exists
/// its informative views are attached by id.
pub fn load_csv(path: &Path, class_names: &[String]) -> Result<Dataset> {
    let fail = |problems: Vec<String>| CliError::Csv {
        path: path.to_path_buf(),
        problems,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = parse_header(reader.headers().map_err(|e| csv_error(path, e))?).map_err(fail)?;
    let mut problems = Vec::new();
    let mut samples = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = match record {
            Ok(rec) => rec,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let mut views: Vec<Vec<f64>> = header.view_dims.iter().map(|&d| vec![0.0; d]).collect();
        let mut id = format!("r{line}");
        let mut label = None;
        let mut group = None;
        let mut row_ok = true;
        for (col, field) in header.columns.iter().zip(record.iter()) {
            match col {
                Column::Id => id = field.to_string(),
                Column::Group => group = Some(field.to_string()),
                Column::Label => match class_names.iter().position(|c| c == field) {
                    Some(l) => label = Some(l),
                    None => {
                        problems.push(format!("line {line}: unknown label {field:?} (classes: {})", class_names.join(", ")));
                        row_ok = false;
                    }
                },
                Column::Feature { view, index } => match field.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => views[*view][*index] = x,
                    _ => {
                        problems.push(format!(
                            "line {line}: non-numeric value {field:?} in {}_f{index}",
                            header.view_names[*view]
                        ));
                        row_ok = false;
                    }
                },
            }
        }
        if let (true, Some(label)) = (row_ok, label) {
            let mut s = MultiViewSample::new(id, views, label);
            s.group = group;
            samples.push(s);
        }
    }
    if !problems.is_empty() {
        return Err(fail(problems));
    }
    let mut ids = std::collections::HashSet::new();
    let dup: Vec<String> = samples
        .iter()
        .filter(|s| !ids.insert(s.id.as_str()))
        .map(|s| format!("duplicate id {:?}", s.id))
        .collect();
    if !dup.is_empty() {
        return Err(fail(dup));
    }
    let schema = ViewSchema::new(header.view_names, header.view_dims, class_names.to_vec())?;
    let sidecar = truth_path(path);
    if sidecar.exists() {
        attach_truth(&sidecar, &schema, &mut samples)?;
    }
    Ok(Dataset::new(schema, samples)?)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Csv {
            path: path.to_path_buf(),
            problems: vec![format!("{other:?}")],
        },
    }
}

fn attach_truth(path: &Path, schema: &ViewSchema, samples: &mut [MultiViewSample]) -> Result<()> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut truth = HashMap::new();
    let mut problems = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        match record {
            Ok(rec) if rec.len() == 2 => match schema.view_names.iter().position(|v| v == &rec[1]) {
                Some(v) => {
                    truth.insert(rec[0].to_string(), v);
                }
                None => problems.push(format!("line {line}: unknown view {:?}", &rec[1])),
            },
            Ok(_) => problems.push(format!("line {line}: expected id,informative_view")),
            Err(e) => problems.push(format!("line {line}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            problems,
        });
    }
    for s in samples {
        s.informative_view = truth.get(&s.id).copied();
    }
    Ok(())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn flush(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `dataset` as a feature table, plus the sidecar when any sample
/// carries ground truth.
pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let schema = &dataset.schema;
    let has_group = dataset.samples.iter().any(|s| s.group.is_some());
    let mut header = vec![ID.to_string()];
    for (name, &d) in schema.view_names.iter().zip(&schema.view_dims) {
        header.extend((0..d).map(|j| format!("{name}_f{j}")));
    }
    header.push(LABEL.into());
    if has_group {
        header.push(GROUP.into());
    }
    let mut w = writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(&header).map_err(io)?;
    for s in &dataset.samples {
        let mut row = vec![s.id.clone()];
        row.extend(s.views.iter().flatten().map(|x| x.to_string()));
        row.push(schema.class_names[s.label].clone());
        if has_group {
            row.push(s.group.clone().unwrap_or_default());
        }
        w.write_record(&row).map_err(io)?;
    }
    flush(path, w)?;
    if dataset.samples.iter().any(|s| s.informative_view.is_some()) {
        let sidecar = truth_path(path);
        let mut w = writer(&sidecar)?;
        let io = |e: csv::Error| csv_error(&sidecar, e);
        w.write_record(["id", "informative_view"]).map_err(io)?;
        for s in &dataset.samples {
            if let Some(v) = s.informative_view {
                w.write_record([s.id.as_str(), schema.view_names[v].as_str()]).map_err(io)?;
            }
        }
        flush(&sidecar, w)?;
    }
    Ok(())
}

/// Writes rows of already formatted fields under `header`.
pub fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    flush(path, w)
}
