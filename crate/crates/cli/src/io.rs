//! CSV/TSV input and output. Every table has a header row whose first column
//! holds sample ids; covariates, labels and depths are matched to the count
//! rows by id.

use std::collections::HashMap;
use std::path::Path;

use anyhow::Context;
use zipgsk::{CountMatrix, Error, Matrix};

fn delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("tab") => b'\t',
        _ => b',',
    }
}

struct Table {
    columns: Vec<String>,
    ids: Vec<String>,
    cells: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> anyhow::Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter(path))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = rdr.headers().with_context(|| format!("reading header of {}", path.display()))?.clone();
    if header.len() < 2 {
        return Err(Error::Data(format!("{}: need a sample-id column and at least one data column", path.display())).into());
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!("{}: row {} has {} fields, header has {}", path.display(), i + 2, rec.len(), header.len())).into());
        }
        ids.push(rec[0].to_string());
        cells.push(rec.iter().skip(1).map(str::to_string).collect());
    }
    if ids.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())).into());
    }
    Ok(Table { columns, ids, cells })
}

/// Counts with sample ids; feature names come from the header.
pub fn read_counts(path: &Path) -> anyhow::Result<(Vec<String>, CountMatrix)> {
    let t = read_table(path)?;
    let mut rows = Vec::with_capacity(t.ids.len());
    for (id, cells) in t.ids.iter().zip(&t.cells) {
        let row = cells
            .iter()
            .zip(&t.columns)
            .map(|(c, name)| {
                c.parse::<u64>().map_err(|_| Error::Data(format!("{}: sample {id}, feature {name}: '{c}' is not a nonnegative integer", path.display())))
            })
            .collect::<Result<Vec<u64>, Error>>()?;
        rows.push(row);
    }
    let mut m = CountMatrix::from_rows(&rows)?;
    m.set_names(t.columns)?;
    Ok((t.ids, m))
}

/// Rows of `path` reordered to follow `ids`.
fn keyed(path: &Path, ids: &[String]) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let t = read_table(path)?;
    let index: HashMap<&str, usize> = t.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows = ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| t.cells[i].clone())
                .ok_or_else(|| Error::Data(format!("{}: no row for sample '{id}'", path.display())))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((t.columns, rows))
}

/// Binary outcome from the first data column.
pub fn read_labels(path: &Path, ids: &[String]) -> anyhow::Result<Vec<u8>> {
    let (_, rows) = keyed(path, ids)?;
    rows.iter()
        .zip(ids)
        .map(|(r, id)| match r[0].parse::<f64>() {
            Ok(v) if v == 0.0 => Ok(0),
            Ok(v) if v == 1.0 => Ok(1),
            _ => Err(Error::Data(format!("{}: label '{}' for sample '{id}' is not binary (expected 0 or 1)", path.display(), r[0])).into()),
        })
        .collect()
}

fn parse_real(path: &Path, id: &str, col: &str, v: &str) -> Result<f64, Error> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Data(format!("{}: sample '{id}', column {col}: '{v}' is not a finite number", path.display())))
}

pub fn read_covariates(path: &Path, ids: &[String]) -> anyhow::Result<Matrix> {
    let (cols, rows) = keyed(path, ids)?;
    let parsed = rows
        .iter()
        .zip(ids)
        .map(|(r, id)| r.iter().zip(&cols).map(|(v, c)| parse_real(path, id, c, v)).collect::<Result<Vec<f64>, Error>>())
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Matrix::from_rows(&parsed)?)
}

pub fn read_depths(path: &Path, ids: &[String]) -> anyhow::Result<Vec<f64>> {
    let (cols, rows) = keyed(path, ids)?;
    Ok(rows.iter().zip(ids).map(|(r, id)| parse_real(path, id, &cols[0], &r[0])).collect::<Result<Vec<f64>, Error>>()?)
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new().delimiter(delimiter(path)).from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_counts(path: &Path, ids: &[String], m: &CountMatrix) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("sample_id").chain(m.names().iter().map(String::as_str)))?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record(std::iter::once(id.clone()).chain(m.row(i).iter().map(u64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels(path: &Path, ids: &[String], y: &[u8]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["sample_id", "y"])?;
    for (id, v) in ids.iter().zip(y) {
        w.write_record([id.clone(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covariates(path: &Path, ids: &[String], x: &Matrix) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    let header: Vec<String> = std::iter::once("sample_id".to_string()).chain((1..=x.ncols()).map(|j| format!("x{j}"))).collect();
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record(std::iter::once(id.clone()).chain(x.row(i).iter().map(|v| format!("{v:?}"))))?;
    }
    w.flush()?;
    Ok(())
}
