//! `mcsort predict`: score and classify alternatives.
//!
//! Classification is example-based, so alongside the model a labeled
//! reference file is required (normally the data the model was trained on).
//! The query file is matched to the model by header name; extra columns are
//! ignored.

use std::io::Write;
use std::path::Path;

use mcsort::classify::{assign, rational_from_f64, Method, ScoredReferenceSet};
use mcsort::dataset::load_table;
use mcsort::encoding::clamped_columns;

use crate::args::PredictArgs;
use crate::{model_file, CliError, CliResult};

/// Read the query CSV, selecting exactly the model's criterion columns by
/// header name. Returns row identifiers (1-based data row numbers) and the
/// selected performances.
fn read_queries(path: &Path, criterion_names: &[String]) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Other(format!("failed to read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Other(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut columns = Vec::with_capacity(criterion_names.len());
    let mut missing = Vec::new();
    for name in criterion_names {
        match headers.iter().position(|h| h == name) {
            Some(idx) => columns.push(idx),
            None => missing.push(name.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Other(format!(
            "query file {} lacks the model's criterion columns: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Other(format!("row {}: {e}", i + 1)))?;
        let mut row = Vec::with_capacity(columns.len());
        for (&col, name) in columns.iter().zip(criterion_names) {
            let field = record.get(col).unwrap_or("");
            let value: f64 = field.parse().map_err(|_| {
                CliError::Other(format!(
                    "row {}, column {name}: non-numeric performance {field:?}",
                    i + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Other(format!(
                    "row {}, column {name}: non-finite performance",
                    i + 1
                )));
            }
            row.push(value);
        }
        ids.push((i + 1).to_string());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Other(format!(
            "query file {} has no data rows",
            path.display()
        )));
    }
    Ok((ids, rows))
}

pub fn run(args: &PredictArgs) -> CliResult<()> {
    let method: Method = args.method.into();
    if method == Method::M4 && args.k.is_none() {
        return Err(CliError::Other(
            "K required: method m4 needs --k (the model stores no neighbor count)".into(),
        ));
    }
    let (model, file) = model_file::load(&args.model)?;

    let refs_table = load_table(&args.refs, &args.label_col)?;
    if refs_table.criterion_names != file.criterion_names {
        return Err(CliError::Other(format!(
            "reference file criteria {:?} do not match the model's {:?}",
            refs_table.criterion_names, file.criterion_names
        )));
    }
    let ref_values: Vec<f64> = refs_table
        .performances
        .iter()
        .map(|row| model.value(row))
        .collect::<Result<_, _>>()?;
    let refs = ScoredReferenceSet::from_f64(&ref_values, &refs_table.labels, refs_table.q)?;

    let (ids, rows) = read_queries(&args.data, &file.criterion_names)?;

    let mut out = String::new();
    out.push_str("id,value,class");
    for label in &refs_table.label_values {
        out.push_str(&format!(",score_{label}"));
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(&rows) {
        let clamped = clamped_columns(&model.scales, row);
        if !clamped.is_empty() {
            let names: Vec<&str> = clamped
                .iter()
                .map(|&j| file.criterion_names[j].as_str())
                .collect();
            eprintln!(
                "warning: row {id}: performance outside the training range on {}; clamped",
                names.join(", ")
            );
        }
        let u = model.value(row)?;
        let assignment = assign(&refs, &rational_from_f64(u)?, method, args.k)?;
        let label = refs_table.label_values[assignment.class - 1];
        out.push_str(&format!("{id},{u},{label}"));
        for score in &assignment.scores.scores {
            out.push_str(&format!(",{}", score.to_f64()));
        }
        out.push('\n');
    }

    match &args.out {
        Some(path) => std::fs::write(path, out)?,
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}
