//! Sample CSV in, replication tables and plot series out.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use designbound_core::dgp::SimTable;
use designbound_core::inference::TrapezoidPoint;
use designbound_core::sample::{Arm, Sample, Unit};
use thiserror::Error;

use crate::error::CliError;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: column {column:?}: cannot read {value:?} as a number")]
    Number { line: u64, column: String, value: String },
    #[error("line {line}: treatment must be 0 or 1, got {value:?}")]
    Treatment { line: u64, value: String },
    #[error("no covariate columns")]
    NoCovariates,
    #[error("sample: {0}")]
    Sample(designbound_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Sample(source) => CliError::Core { module: "sample", source },
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Which columns hold what. Covariates default to every column not
/// claimed by the id, treatment or outcome.
#[derive(Debug, Clone)]
pub struct CsvLayout {
    pub id: String,
    pub treatment: String,
    pub outcome: String,
    pub covariates: Option<Vec<String>>,
    /// Accept a file without an outcome column (design phase only).
    pub design_only: bool,
}

impl Default for CsvLayout {
    fn default() -> Self {
        CsvLayout { id: "id".into(), treatment: "d".into(), outcome: "y".into(), covariates: None, design_only: false }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub sample: Sample,
    pub covariates: Vec<String>,
    pub has_outcome: bool,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn number(field: &str, line: u64, column: &str) -> Result<f64, CsvError> {
    field.trim().parse::<f64>().map_err(|_| CsvError::Number { line, column: column.into(), value: field.into() })
}

pub fn read_sample(input: impl Read, layout: &CsvLayout) -> Result<LoadedSample, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let need = |name: &str| column(&headers, name).ok_or_else(|| CsvError::MissingColumn(name.into()));
    let d_col = need(&layout.treatment)?;
    let id_col = column(&headers, &layout.id);
    let y_col = match column(&headers, &layout.outcome) {
        Some(c) => Some(c),
        None if layout.design_only => None,
        None => return Err(CsvError::MissingColumn(layout.outcome.clone())),
    };
    let covariates: Vec<String> = match &layout.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != id_col && *k != d_col && Some(*k) != y_col)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    if covariates.is_empty() {
        return Err(CsvError::NoCovariates);
    }
    let x_cols = covariates.iter().map(|c| need(c)).collect::<Result<Vec<_>, _>>()?;

    let mut units = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k as u64 + 2, |p| p.line());
        let field = |c: usize| rec.get(c).unwrap_or("");
        let arm = match field(d_col) {
            "0" | "0.0" => Arm::Untreated,
            "1" | "1.0" => Arm::Treated,
            v => return Err(CsvError::Treatment { line, value: v.into() }),
        };
        let y = match y_col {
            Some(c) if field(c).is_empty() || field(c).eq_ignore_ascii_case("na") => None,
            Some(c) => Some(number(field(c), line, &headers[c])?),
            None => None,
        };
        let x = x_cols
            .iter()
            .map(|&c| number(field(c), line, &headers[c]))
            .collect::<Result<Vec<_>, _>>()?;
        let id = match id_col {
            Some(c) => field(c).to_string(),
            None => format!("row{}", k + 1),
        };
        units.push(Unit::new(id, y, x, arm));
    }
    let has_outcome = y_col.is_some();
    let design_only = layout.design_only || !has_outcome;
    let sample = Sample::new(units, design_only).map_err(CsvError::Sample)?;
    Ok(LoadedSample { sample, covariates, has_outcome })
}

pub fn read_sample_path(path: &Path, layout: &CsvLayout) -> Result<LoadedSample, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_sample(file, layout).map_err(|e| match e {
        CsvError::Sample(_) => e.into(),
        other => CliError::Input(format!("{}: {other}", path.display())),
    })
}

/// Ids one per line, or a CSV whose header has an `id` column. Blank lines
/// and lines starting with '#' are ignored.
pub fn read_id_list(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    let Some(first) = lines.first() else {
        return Err(CliError::Input(format!("{}: no ids", path.display())));
    };
    if first.contains(',') {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| CliError::Input(e.to_string()))?.clone();
        let c = column(&headers, "id").ok_or_else(|| CliError::Input(format!("{}: missing column \"id\"", path.display())))?;
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::Input(e.to_string()))?;
            out.push(rec.get(c).unwrap_or("").to_string());
        }
        return Ok(out);
    }
    let skip = usize::from(first.eq_ignore_ascii_case("id"));
    Ok(lines[skip..].iter().map(|s| s.to_string()).collect())
}

pub fn write_sample(out: impl Write, sample: &Sample, covariates: &[String]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "d".to_string(), "y".to_string()];
    header.extend(covariates.iter().cloned());
    w.write_record(&header)?;
    for u in sample.units() {
        let mut rec = vec![u.id.clone(), u.arm.code().to_string(), u.y.map(fmt_num).unwrap_or_default()];
        rec.extend(u.x.iter().map(|v| fmt_num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Header `rep, spec` followed by the flat columns of each row. Missing
/// values are empty cells.
pub fn write_sim_table(out: impl Write, table: &SimTable) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = table.rows.first() else {
        w.write_record(["rep", "spec"])?;
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["rep".to_string(), "spec".to_string()];
    header.extend(first.columns().into_iter().map(|(k, _)| k));
    w.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![row.rep.to_string(), row.spec.name().to_string()];
        rec.extend(row.columns().into_iter().map(|(_, v)| v.map(fmt_num).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trapezoid(out: impl Write, points: &[TrapezoidPoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "lo", "hi"])?;
    for p in points {
        w.write_record([fmt_num(p.m), fmt_num(p.lo), fmt_num(p.hi)])?;
    }
    w.flush()?;
    Ok(())
}
