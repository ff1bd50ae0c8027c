use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Subject data files found in a directory, ordered by their numeric index.
pub struct SubjectFiles {
    pub names: Vec<String>,
    pub roi_names: Vec<String>,
    pub data: Vec<DMatrix<f64>>,
}

fn subject_index(name: &str) -> Option<u64> {
    name.strip_prefix("subject_")?.strip_suffix(".csv")?.parse().ok()
}

pub fn read_subject_dir(dir: &Path) -> CliResult<SubjectFiles> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Ingestion(format!("{}: {e}", dir.display())))?;
    let mut indexed: Vec<(u64, String)> = Vec::new();
    for entry in entries {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(k) = subject_index(&name) {
            indexed.push((k, name));
        }
    }
    if indexed.is_empty() {
        return Err(CliError::Ingestion(format!("no subject_<k>.csv files in {}", dir.display())));
    }
    indexed.sort();

    let mut roi_names: Option<(String, Vec<String>)> = None;
    let mut data = Vec::with_capacity(indexed.len());
    for (_, name) in &indexed {
        let (header, matrix) = read_subject_csv(&dir.join(name))?;
        match &roi_names {
            None => roi_names = Some((name.clone(), header)),
            Some((first, expected)) if *expected != header => {
                return Err(CliError::Ingestion(format!(
                    "header of {name} ({}) differs from {first} ({})",
                    header.join(","),
                    expected.join(",")
                )));
            }
            Some(_) => {}
        }
        data.push(matrix);
    }
    Ok(SubjectFiles {
        names: indexed.into_iter().map(|(_, n)| n).collect(),
        roi_names: roi_names.expect("at least one file").1,
        data,
    })
}

/// First row: ROI names. Remaining rows: one time point each.
pub fn read_subject_csv(path: &Path) -> CliResult<(Vec<String>, DMatrix<f64>)> {
    let fail = |msg: String| CliError::Ingestion(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let header: Vec<String> = reader.headers().map_err(|e| fail(e.to_string()))?.iter().map(str::to_owned).collect();
    if header.is_empty() {
        return Err(fail("empty header".into()));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| fail(format!("row {}, column {}: {field:?} is not a number", rows + 2, j + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(fail("no observations".into()));
    }
    Ok((header, DMatrix::from_row_slice(rows, values.len() / rows, &values)))
}

pub fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header).context("csv write")?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}"))).context("csv write")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).context("serialize JSON")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    Ok(fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?)
}

pub fn prepare_out_dir(dir: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir.to_path_buf())
}
