//! CSV input: a header row, one observation per row, an optional group
//! column and an optional column of true labels. Empty cells mark missing
//! entries and are only accepted for matrix data.

use std::collections::HashMap;
use std::path::Path;

use furbi::models::{missing_pattern_split, standardize_columns, Dataset};

use crate::config::IoConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: Dataset,
    /// Input row (0-based, header excluded) of each observation in dataset order.
    pub order: Vec<usize>,
    /// True labels in input row order, coded by first appearance.
    pub truth: Option<Vec<usize>>,
    pub rows: usize,
}

struct Table {
    header: Vec<String>,
    records: Vec<(u64, Vec<String>)>,
}

fn input_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Input { path: path.display().to_string(), message: message.into() }
}

fn read_table(path: &Path) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_error(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| input_error(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(input_error(path, "empty input: no header row"));
    }
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            input_error(path, format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, rec.iter().map(str::to_string).collect()));
    }
    if records.is_empty() {
        return Err(input_error(path, "empty input: no data rows"));
    }
    Ok(Table { header, records })
}

fn column(path: &Path, header: &[String], name: &str) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| input_error(path, format!("no column named `{name}` (columns: {})", header.join(", "))))
}

fn parse_cell(path: &Path, line: u64, name: &str, cell: &str) -> CliResult<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| input_error(path, format!("line {line}, column `{name}`: cannot parse `{cell}` as a number")))?;
    if !v.is_finite() {
        return Err(input_error(path, format!("line {line}, column `{name}`: value must be finite")));
    }
    Ok(Some(v))
}

fn code_labels(labels: impl Iterator<Item = String>) -> (Vec<usize>, Vec<String>) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let codes = labels
        .map(|l| {
            *seen.entry(l.clone()).or_insert_with(|| {
                names.push(l);
                names.len() - 1
            })
        })
        .collect();
    (codes, names)
}

fn value_columns(path: &Path, table: &Table, io: &IoConfig) -> CliResult<Vec<usize>> {
    if io.value_columns.is_empty() {
        let cols: Vec<usize> = (0..table.header.len())
            .filter(|&j| table.header[j] != io.group_column && table.header[j] != io.truth_column)
            .collect();
        if cols.is_empty() {
            return Err(input_error(path, "no data columns"));
        }
        Ok(cols)
    } else {
        io.value_columns.iter().map(|c| column(path, &table.header, c)).collect()
    }
}

fn truth(table: &Table, io: &IoConfig) -> Option<Vec<usize>> {
    let j = table.header.iter().position(|h| *h == io.truth_column)?;
    Some(code_labels(table.records.iter().map(|(_, r)| r[j].clone())).0)
}

/// Scalar observations split into groups by the group column (one group when
/// the column is absent). Groups are ordered by first appearance.
pub fn read_scalar(path: &Path, io: &IoConfig) -> CliResult<Ingested> {
    let table = read_table(path)?;
    let cols = value_columns(path, &table, io)?;
    if cols.len() != 1 {
        let names: Vec<&str> = cols.iter().map(|&j| table.header[j].as_str()).collect();
        return Err(input_error(
            path,
            format!("expected one data column, found {}; set io.value_columns", names.join(", ")),
        ));
    }
    let vj = cols[0];
    let name = &table.header[vj];
    let gj = table.header.iter().position(|h| *h == io.group_column);
    let (codes, names) = match gj {
        Some(gj) => code_labels(table.records.iter().map(|(_, r)| r[gj].clone())),
        None => (vec![0; table.records.len()], vec!["all".to_string()]),
    };
    let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::new(); names.len()];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for (i, ((line, rec), &g)) in table.records.iter().zip(&codes).enumerate() {
        let v = parse_cell(path, *line, name, &rec[vj])?
            .ok_or_else(|| input_error(path, format!("line {line}, column `{name}`: missing value")))?;
        groups[g].push(vec![v]);
        members[g].push(i);
    }
    let data = Dataset { groups, names, patterns: None, rows: None, transform: None };
    Ok(Ingested {
        data,
        order: members.into_iter().flatten().collect(),
        truth: truth(&table, io),
        rows: table.records.len(),
    })
}

/// Rows of several columns with gaps, split by missing pattern. Columns are
/// standardized first when `standardize` is set.
pub fn read_matrix(path: &Path, io: &IoConfig, standardize: bool) -> CliResult<Ingested> {
    let table = read_table(path)?;
    let cols = value_columns(path, &table, io)?;
    let mut matrix = Vec::with_capacity(table.records.len());
    for (line, rec) in &table.records {
        let row = cols
            .iter()
            .map(|&j| parse_cell(path, *line, &table.header[j], &rec[j]))
            .collect::<CliResult<Vec<_>>>()?;
        if row.iter().all(Option::is_none) {
            return Err(input_error(path, format!("line {line}: row has no observed values")));
        }
        matrix.push(row);
    }
    let transform = standardize.then(|| standardize_columns(&mut matrix));
    let mut data = missing_pattern_split(&matrix).map_err(|e| input_error(path, e.to_string()))?;
    data.transform = transform;
    let order = data.rows.clone().unwrap_or_default().into_iter().flatten().collect();
    Ok(Ingested { data, order, truth: truth(&table, io), rows: table.records.len() })
}
